"""Time the compiled kernels against the numpy fallback on representative inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from neurohand import kernels
from neurohand.gabor import make_gabor_kernel
from neurohand.hand import HandGeometry, HandPose, render_hand
from neurohand.psom import fit_psom, psom_forward


def _cases(rng):
    img = rng.random((64, 64))
    gab = make_gabor_kernel(0.3, 8.0)
    x = rng.random((2000, 64))
    centers = x[:16].copy()
    order = rng.permutation(len(x))
    rates = np.geomspace(0.5, 0.01, len(x))
    m = fit_psom(2)
    emb = np.ascontiguousarray(m.scaled()[:, :, :2])
    s0 = rng.uniform(0.1, 2.9, (20, 2))
    obs = [(psom_forward(m, s)[:2] - m.offset[:2]) / m.scale[:2] for s in s0]
    starts = m.lattice().reshape(-1, 2)
    pose = HandPose.from_vector(np.tile([0.1, 0.8], 5))
    geom = HandGeometry()

    def psom_queries(impl):
        for o in obs:
            impl.psom_descend(emb, o, starts, 500, 1e-12)

    return {
        "correlate2d 64x64 * 17x17": lambda impl: impl.correlate2d(img, gab, False),
        "assign 2000x64 to 16 centres": lambda impl: impl.assign(x, centers),
        "vq_online 2000 updates": lambda impl: impl.vq_online(x, centers.copy(), order, rates),
        "psom_descend 20 queries x 16 starts": psom_queries,
        "render_hand 64x64": lambda impl: render_hand(geom, pose),
    }


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    cases = _cases(rng)
    backends = kernels.available_backends()
    print(f"{'kernel':<38}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, case in cases.items():
        times = []
        for b in backends:
            impl = kernels.get_backend(b)
            saved = kernels._impl
            kernels._impl = impl  # render_hand goes through the dispatcher
            try:
                times.append(_time(lambda: case(impl), args.repeat))
            finally:
                kernels._impl = saved
        row = f"{name:<38}" + "".join(f"{t * 1e3:10.2f}ms" for t in times)
        if len(times) > 1:
            row += f"{times[0] / times[1]:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
