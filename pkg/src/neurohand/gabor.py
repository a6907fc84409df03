"""Gabor filter banks and jet feature vectors sampled on a coarse grid."""

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from neurohand.errors import InvalidArgument, ParseError

PHASES = ("even", "odd")
JET_MAGIC = b"GJET"


def _odd_at_least(v):
    size = int(math.ceil(v - 1e-9))
    return size if size % 2 == 1 else size + 1


def min_kernel_size(wavelength, sigma_ratio):
    return _odd_at_least(4.0 * sigma_ratio * wavelength)


def default_kernel_size(wavelength, sigma_ratio):
    """Envelope cut at +-3 sigma; the 2-sigma minimum unbalances the even/odd pair."""
    return _odd_at_least(6.0 * sigma_ratio * wavelength)


def make_gabor_kernel(orientation, wavelength, phase="even", sigma_ratio=0.5, size=None):
    """Gaussian envelope times a sinusoid running along ``orientation``.

    Even kernels get the envelope-weighted DC correction; odd kernels are
    antisymmetric and already sum to zero. Both are L2-normalised.
    """
    if not wavelength > 2.0:
        raise InvalidArgument(f"wavelength must exceed the 2 px sampling limit, got {wavelength}")
    if phase not in PHASES:
        raise InvalidArgument(f"phase must be 'even' or 'odd', got {phase!r}")
    smallest = min_kernel_size(wavelength, sigma_ratio)
    if size is None:
        size = default_kernel_size(wavelength, sigma_ratio)
    if size % 2 == 0 or size < smallest:
        raise InvalidArgument(f"kernel size must be odd and >= {smallest}, got {size}")
    sigma = sigma_ratio * wavelength
    r = size // 2
    y, x = np.mgrid[-r:r + 1, -r:r + 1].astype(float)
    u = x * math.cos(orientation) + y * math.sin(orientation)
    env = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    arg = 2.0 * math.pi * u / wavelength
    if phase == "even":
        carrier = np.cos(arg)
        carrier = carrier - (env * carrier).sum() / env.sum()
    else:
        carrier = np.sin(arg)
    k = env * carrier
    return k / math.sqrt((k * k).sum())


@dataclass(frozen=True)
class GaborBank:
    orientations: int = 4
    wavelengths: tuple = (6.0, 10.0)
    phases: tuple = PHASES
    sigma_ratio: float = 0.5
    kernels: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.orientations < 1 or len(self.wavelengths) < 1:
            raise InvalidArgument("a Gabor bank needs at least one orientation and one scale")
        per_scale = []
        for lam in self.wavelengths:
            stack = [
                make_gabor_kernel(math.pi * o / self.orientations, lam, ph, self.sigma_ratio)
                for o in range(self.orientations)
                for ph in self.phases
            ]
            per_scale.append(np.stack(stack))
        object.__setattr__(self, "kernels", tuple(per_scale))

    @property
    def channels(self):
        return self.orientations * len(self.wavelengths) * len(self.phases)

    def halved(self):
        """Same bank at half the length scale (used for focus regions)."""
        return GaborBank(self.orientations, tuple(w / 2.0 for w in self.wavelengths), self.phases, self.sigma_ratio)

    def channel_index(self, scale, orientation, phase):
        return (scale * self.orientations + orientation) * len(self.phases) + phase


@dataclass(frozen=True)
class JetGrid:
    """Regular lattice of sample positions ``origin + spacing * i``."""

    nx: int
    ny: int
    spacing: int
    origin_x: int
    origin_y: int

    @classmethod
    def centered(cls, width, height, nx, ny):
        sx, sy = width // nx, height // ny
        if sx != sy:
            raise InvalidArgument("centred grids need equal spacing along both axes")
        return cls(nx, ny, sx, sx // 2, sy // 2)

    @property
    def size(self):
        return self.nx * self.ny

    def positions(self):
        """(G, 2) array of integer (x, y) positions, row-major over the lattice."""
        xs = self.origin_x + self.spacing * np.arange(self.nx)
        ys = self.origin_y + self.spacing * np.arange(self.ny)
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx.ravel(), gy.ravel()], axis=1)

    def margin(self, width, height):
        p = self.positions()
        return int(min(p[:, 0].min(), p[:, 1].min(), width - 1 - p[:, 0].max(), height - 1 - p[:, 1].max()))


def feature_length(bank, grid):
    return grid.size * bank.channels


def extract_jets(img, bank, grid, border="clamp"):
    """Jet responses at every grid position; layout position, scale, orientation, phase."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if grid.margin(w, h) < 0:
        raise InvalidArgument(f"jet grid does not fit a {w}x{h} image")
    pos = grid.positions()
    out = np.empty((grid.size, len(bank.wavelengths), bank.orientations * len(bank.phases)))
    for s, stack in enumerate(bank.kernels):
        r = stack.shape[1] // 2
        if border == "clamp":
            padded = np.pad(img, r, mode="edge")
        elif border == "zero":
            padded = np.pad(img, r, mode="constant")
        else:
            raise InvalidArgument(f"unknown border mode {border!r}")
        off = np.arange(-r, r + 1)
        rows = (pos[:, 1, None] + r + off)[:, :, None]
        cols = (pos[:, 0, None] + r + off)[:, None, :]
        patches = padded[rows, cols]
        out[:, s, :] = np.einsum("gij,cij->gc", patches, stack)
    return out.reshape(-1)


def jet_energy(features, bank, grid):
    """even^2 + odd^2 per (position, scale, orientation); needs both phases."""
    if tuple(bank.phases) != PHASES:
        raise InvalidArgument("energy needs an even/odd bank")
    f = np.asarray(features).reshape(grid.size, len(bank.wavelengths), bank.orientations, 2)
    return (f ** 2).sum(axis=-1)


def dump_features(features, grid_size, channels):
    values = np.asarray(features, dtype="<f4").reshape(-1)
    if values.size != grid_size * channels:
        raise InvalidArgument("feature length does not match header dimensions")
    return JET_MAGIC + struct.pack("<III", grid_size, channels, 0) + values.tobytes()


def load_features(blob):
    if len(blob) < 16 or blob[:4] != JET_MAGIC:
        raise ParseError("not a jet feature file", offset=0)
    g, c, _ = struct.unpack("<III", blob[4:16])
    need = 16 + 4 * g * c
    if len(blob) < need:
        raise ParseError("truncated feature payload", offset=len(blob))
    values = np.frombuffer(blob[16:need], dtype="<f4").astype(np.float64)
    return values, g, c
