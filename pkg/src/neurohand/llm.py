"""Local Linear Map networks and local PCA analysers.

Both share a competitive vector-quantisation layer: K centres are seeded
from distinct training inputs and refined by online winner-take-all updates
with a geometrically decaying learning rate. An LLM network then owns one
affine map per Voronoi cell, fitted by ridge least squares on the samples
the cell wins; evaluation uses the single winning cell (ties go to the
lowest index).

The two-phase scheme (quantise, then batch regression) stands in for the
fully online training of the original LLM literature.
"""

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from neurohand import kernels
from neurohand.errors import InvalidArgument, ParseError

LLM_MAGIC = b"LLMN"
LLM_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    k: int = 8
    epochs: int = 10
    rate_start: float = 0.5
    rate_end: float = 0.01
    ridge: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise InvalidArgument("k must be >= 1")
        if not (0 < self.rate_start <= 1 and 0 < self.rate_end <= 1):
            raise InvalidArgument("learning rates must lie in (0, 1]")
        if self.ridge < 0:
            raise InvalidArgument("ridge must be >= 0")
        if self.epochs < 0:
            raise InvalidArgument("epochs must be >= 0")


@dataclass
class LLMNetwork:
    centers: np.ndarray  # (K, d_in)
    offsets: np.ndarray  # (K, d_out)
    maps: np.ndarray  # (K, d_out, d_in)

    @property
    def k(self):
        return len(self.centers)

    @property
    def input_dim(self):
        return self.centers.shape[1]

    @property
    def output_dim(self):
        return self.offsets.shape[1]

    def winner(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.input_dim,):
            raise InvalidArgument(f"input has shape {x.shape}, network expects ({self.input_dim},)")
        return int(kernels.assign(x[None, :], self.centers)[0])

    def __call__(self, x):
        return eval_llm(self, x)

    def predict(self, xs):
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2 or xs.shape[1] != self.input_dim:
            raise InvalidArgument(f"inputs have shape {xs.shape}, network expects (n, {self.input_dim})")
        win = kernels.assign(xs, self.centers)
        d = xs - self.centers[win]
        return self.offsets[win] + np.einsum("noi,ni->no", self.maps[win], d)

    def to_bytes(self):
        k, din = self.centers.shape
        dout = self.offsets.shape[1]
        parts = [LLM_MAGIC, struct.pack("<IIII", LLM_VERSION, din, dout, k)]
        for i in range(k):
            parts.append(self.centers[i].astype("<f8").tobytes())
            parts.append(self.offsets[i].astype("<f8").tobytes())
            parts.append(self.maps[i].astype("<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob, offset=0):
        """Decode a network; returns (network, offset just past it)."""
        if blob[offset:offset + 4] != LLM_MAGIC:
            raise ParseError("bad LLM network magic", offset=offset)
        if len(blob) < offset + 20:
            raise ParseError("truncated LLM header", offset=len(blob))
        version, din, dout, k = struct.unpack("<IIII", blob[offset + 4:offset + 20])
        if version != LLM_VERSION:
            raise ParseError(f"unsupported LLM blob version {version}", offset=offset + 4)
        pos = offset + 20
        node = 8 * (din + dout + dout * din)
        if len(blob) < pos + k * node:
            raise ParseError("truncated LLM node payload", offset=len(blob))
        raw = np.frombuffer(blob[pos:pos + k * node], dtype="<f8").reshape(k, -1).astype(np.float64)
        centers = raw[:, :din].copy()
        offsets = raw[:, din:din + dout].copy()
        maps = raw[:, din + dout:].reshape(k, dout, din).copy()
        return cls(centers, offsets, maps), pos + k * node

    def digest(self):
        return hashlib.sha256(self.to_bytes()).hexdigest()


def eval_llm(net, x):
    k = net.winner(x)
    x = np.asarray(x, dtype=np.float64)
    return net.offsets[k] + net.maps[k] @ (x - net.centers[k])


def _check_samples(inputs, k):
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidArgument("inputs must be a 2D array (n, d)")
    if len(x) < k:
        raise InvalidArgument(f"need at least k={k} samples, got {len(x)}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgument("samples must be finite")
    return x


def quantize(x, cfg):
    """Seeded online winner-take-all quantisation; returns (centres, assignment)."""
    rng = np.random.default_rng(cfg.seed)
    _, first = np.unique(x, axis=0, return_index=True)
    distinct = np.sort(first)
    if len(distinct) < cfg.k:
        raise InvalidArgument(f"need k={cfg.k} distinct inputs, found {len(distinct)}")
    centers = x[rng.choice(distinct, size=cfg.k, replace=False)].copy()
    n = len(x)
    total = cfg.epochs * n
    if total > 0:
        order = np.concatenate([rng.permutation(n) for _ in range(cfg.epochs)])
        frac = np.arange(total) / max(total - 1, 1)
        rates = cfg.rate_start * (cfg.rate_end / cfg.rate_start) ** frac
        centers = kernels.vq_online(x, centers, order, rates)
    return centers, kernels.assign(x, centers)


def _ridge_fit(xc, y, ridge):
    """Least squares for y ~ w + A xc with penalty on A only (offset unpenalised)."""
    n, d = xc.shape
    design = np.hstack([np.ones((n, 1)), xc])
    lam = ridge * float(np.einsum("ij,ij->", xc, xc)) / max(d, 1)
    if lam > 0:
        pen = np.hstack([np.zeros((d, 1)), np.sqrt(lam) * np.eye(d)])
        design = np.vstack([design, pen])
        y = np.vstack([y, np.zeros((d, y.shape[1]))])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef[0], coef[1:].T


def train_llm(inputs, targets, cfg=TrainConfig()):
    x = _check_samples(inputs, cfg.k)
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if len(y) != len(x):
        raise InvalidArgument("inputs and targets differ in length")
    if not np.all(np.isfinite(y)):
        raise InvalidArgument("targets must be finite")
    centers, win = quantize(x, cfg)
    k, d = centers.shape
    offsets = np.empty((k, y.shape[1]))
    maps = np.zeros((k, y.shape[1], d))
    for i in range(k):
        cell = win == i
        if not cell.any():
            offsets[i] = y.mean(axis=0)
            continue
        offsets[i], maps[i] = _ridge_fit(x[cell] - centers[i], y[cell], cfg.ridge)
    return LLMNetwork(centers, offsets, maps)


@dataclass
class LocalPCAAnalyzer:
    center: np.ndarray
    basis: np.ndarray  # (d_in, d) orthonormal columns
    eigenvalues: np.ndarray  # (d,) descending

    def project(self, x):
        return (np.asarray(x) - self.center) @ self.basis

    def reconstruct(self, x):
        return self.center + self.project(x) @ self.basis.T

    def residual(self, x):
        return np.linalg.norm(np.asarray(x) - self.reconstruct(x), axis=-1)


def train_local_pca(inputs, k, d, cfg=None):
    cfg = cfg or TrainConfig(k=k)
    if cfg.k != k:
        cfg = TrainConfig(k, cfg.epochs, cfg.rate_start, cfg.rate_end, cfg.ridge, cfg.seed)
    x = _check_samples(inputs, k)
    if not 1 <= d <= x.shape[1]:
        raise InvalidArgument(f"d must lie in [1, {x.shape[1]}], got {d}")
    centers, win = quantize(x, cfg)
    out = []
    for i in range(k):
        cell = x[win == i]
        if len(cell) == 0:
            basis = np.eye(x.shape[1])[:, :d]
            out.append(LocalPCAAnalyzer(centers[i], basis, np.zeros(d)))
            continue
        diff = cell - cell.mean(axis=0)
        cov = diff.T @ diff / len(cell)
        vals, vecs = np.linalg.eigh(cov)
        order = np.argsort(vals)[::-1][:d]
        out.append(LocalPCAAnalyzer(centers[i], vecs[:, order], np.clip(vals[order], 0.0, None)))
    return out


def assign_pca(analyzers, x):
    centers = np.stack([a.center for a in analyzers])
    return kernels.assign(np.atleast_2d(np.asarray(x, dtype=np.float64)), centers)
