"""Hot-loop kernels, dispatched to the compiled extension when it is importable.

Set ``NEUROHAND_PURE_PYTHON=1`` before import to force the numpy fallback.
``BACKEND`` names the implementation in use; ``get_backend(name)`` returns a
specific one (used by the equivalence tests and the benchmark).
"""

import importlib
import os

import numpy as np

from neurohand import _pykernels

try:
    if os.environ.get("NEUROHAND_PURE_PYTHON") == "1":
        raise ImportError("pure-python backend forced")
    _impl = importlib.import_module("neurohand._ckernels")
    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"


def available_backends():
    names = ["python"]
    try:
        importlib.import_module("neurohand._ckernels")
        names.append("cython")
    except ImportError:
        pass
    return names


def get_backend(name):
    if name == "python":
        return _pykernels
    if name == "cython":
        return importlib.import_module("neurohand._ckernels")
    raise ValueError(f"unknown backend {name!r}")


def _f8(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def correlate2d(img, kern, zero_border=False):
    return _impl.correlate2d(_f8(img), _f8(kern), bool(zero_border))


def rasterize_capsules(height, width, segs):
    segs = _f8(np.reshape(segs, (-1, 5)))
    return _impl.rasterize_capsules(int(height), int(width), segs)


def assign(samples, centers):
    return _impl.assign(_f8(samples), _f8(centers))


def vq_online(samples, centers, order, rates):
    centers = _f8(centers).copy()
    _impl.vq_online(_f8(samples), centers, np.ascontiguousarray(order, dtype=np.int64), _f8(rates))
    return centers


def psom_descend(emb, obs, starts, maxiter=2000, gtol=1e-12):
    return _impl.psom_descend(_f8(emb), _f8(obs), _f8(starts), int(maxiter), float(gtol))
