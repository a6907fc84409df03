"""Per-finger Parameterized Self-Organizing Maps and their inversion.

Each manifold interpolates a 4x4 lattice of forward-kinematics samples with
products of cubic Lagrange polynomials, so the embedding
``(x, y, z, phi, theta)`` is a smooth function of lattice coordinates
``s in [0, 3]^2``. Inversion searches ``s`` so that the observed components
(the image position by default) match, and then reads the unobserved ones
(depth and joint angles) off the manifold.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from neurohand import kernels
from neurohand.errors import ConvergenceError, InvalidArgument, OutOfDomain, ParseError
from neurohand.hand import (
    N_FINGERS,
    Camera,
    HandGeometry,
    HandPose,
    JointLimits,
    forward_kinematics,
    project_points,
    tip_jacobian,
)

COMPONENTS = ("x", "y", "z", "phi", "theta")
XY_MASK = (True, True, False, False, False)
PSOM_MAGIC = b"PSOM"
PSOM_VERSION = 1
LATTICE = 4


def lagrange_weights(t):
    """Weights of the four cubic Lagrange polynomials on nodes 0..3 at ``t``."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    a, b, c, d = t, t - 1.0, t - 2.0, t - 3.0
    return np.stack([-b * c * d / 6.0, a * c * d / 2.0, -a * b * d / 2.0, a * b * c / 6.0], axis=-1)


@dataclass
class PSOMManifold:
    finger: int
    embeddings: np.ndarray  # (4, 4, 5): axis 0 indexes phi nodes, axis 1 theta nodes
    offset: np.ndarray  # (5,) subtracted before scaling
    scale: np.ndarray  # (5,) component ranges; x and y share one
    geometry: HandGeometry
    camera: Camera
    limits: JointLimits

    def lattice(self):
        u, v = np.meshgrid(np.arange(LATTICE, dtype=float), np.arange(LATTICE, dtype=float), indexing="ij")
        return np.stack([u, v], axis=-1)

    def scaled(self):
        return (self.embeddings - self.offset) / self.scale

    def to_bytes(self):
        header = json.dumps(
            {
                "finger": self.finger,
                "geometry": self.geometry.to_dict(),
                "camera": self.camera.to_dict(),
                "limits": {"theta_max": self.limits.theta_max, "phi_max": self.limits.phi_max},
            },
            sort_keys=True,
        ).encode()
        body = [
            self.lattice().astype("<f8").tobytes(),
            self.embeddings.astype("<f8").tobytes(),
            self.offset.astype("<f8").tobytes(),
            self.scale.astype("<f8").tobytes(),
        ]
        return PSOM_MAGIC + struct.pack("<III", PSOM_VERSION, LATTICE, len(header)) + header + b"".join(body)

    @classmethod
    def from_bytes(cls, blob, pos=0):
        if blob[pos:pos + 4] != PSOM_MAGIC:
            raise ParseError("bad PSOM magic", offset=pos)
        version, n, hlen = struct.unpack("<III", blob[pos + 4:pos + 16])
        if version != PSOM_VERSION or n != LATTICE:
            raise ParseError(f"unsupported PSOM blob (version {version}, lattice {n})", offset=pos + 4)
        pos += 16
        try:
            head = json.loads(blob[pos:pos + hlen])
        except ValueError:
            raise ParseError("bad PSOM header", offset=pos) from None
        pos += hlen
        c = len(COMPONENTS)
        sizes = [n * n * 2, n * n * c, c, c]
        arrays = []
        for size in sizes:
            if len(blob) < pos + 8 * size:
                raise ParseError("truncated PSOM payload", offset=len(blob))
            arrays.append(np.frombuffer(blob[pos:pos + 8 * size], dtype="<f8").astype(np.float64))
            pos += 8 * size
        m = cls(
            int(head["finger"]),
            arrays[1].reshape(n, n, c),
            arrays[2],
            arrays[3],
            HandGeometry.from_dict(head["geometry"]),
            Camera.from_dict(head["camera"]),
            JointLimits(**head["limits"]),
        )
        return m, pos


def fit_psom(finger, geom=HandGeometry(), camera=Camera(), limits=JointLimits()):
    """Sample the finger's forward transform on a 4x4 (phi, theta) grid spanning the limits."""
    if not 0 <= finger < N_FINGERS:
        raise InvalidArgument(f"finger index must be in 0..4, got {finger}")
    phis = np.linspace(-limits.phi_max, limits.phi_max, LATTICE)
    thetas = np.linspace(0.0, limits.theta_max, LATTICE)
    emb = np.empty((LATTICE, LATTICE, len(COMPONENTS)))
    for i, phi in enumerate(phis):
        for j, theta in enumerate(thetas):
            v = np.zeros((N_FINGERS, 2))
            v[finger] = phi, theta
            tip = forward_kinematics(geom, HandPose.from_vector(v), limits)[finger]
            x, y = project_points(tip, camera)
            emb[i, j] = x, y, tip[2], phi, theta
    flat = emb.reshape(-1, len(COMPONENTS))
    lo = flat.min(axis=0)
    span = flat.max(axis=0) - lo
    span[:2] = span[:2].max()  # pixels on both image axes stay commensurate
    span[span == 0] = 1.0
    return PSOMManifold(finger, emb, lo, span, geom, camera, limits)


def fit_all(geom=HandGeometry(), camera=Camera(), limits=JointLimits()):
    return [fit_psom(f, geom, camera, limits) for f in range(N_FINGERS)]


def psom_forward(m, s):
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (2,):
        raise InvalidArgument("lattice coordinates are a pair (s_u, s_v)")
    if not (0.0 <= s[0] <= LATTICE - 1 and 0.0 <= s[1] <= LATTICE - 1):
        raise OutOfDomain(f"lattice coordinates {tuple(s)} outside [0, 3]^2")
    wu = lagrange_weights(s[0])[0]
    wv = lagrange_weights(s[1])[0]
    return np.einsum("i,j,ijc->c", wu, wv, m.embeddings)


@dataclass(frozen=True)
class InverseConfig:
    maxiter: int = 500
    gtol: float = 1e-12


@dataclass
class InverseResult:
    s: np.ndarray
    embedding: np.ndarray
    residual: float  # squared distance in scaled units
    converged: bool
    start: int


def masked_objective(m, s, observed, mask=XY_MASK):
    """Scaled squared distance between the masked manifold point and ``observed``."""
    mask = np.asarray(mask, dtype=bool)
    e = (psom_forward(m, s) - m.offset) / m.scale
    o = (np.asarray(observed, dtype=float) - m.offset[mask]) / m.scale[mask]
    return float(((e[mask] - o) ** 2).sum())


def psom_inverse(m, observed, mask=XY_MASK, cfg=InverseConfig()):
    """Multi-start projected gradient descent from all 16 lattice nodes.

    Raises ConvergenceError (carrying the best result) if no start reaches the
    gradient tolerance or a numerical stall within ``cfg.maxiter`` iterations.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (len(COMPONENTS),) or not mask.any():
        raise InvalidArgument("mask must select at least one of the five embedding components")
    observed = np.asarray(observed, dtype=float).reshape(-1)
    if observed.shape != (int(mask.sum()),):
        raise InvalidArgument(f"observed has {observed.size} values, mask selects {int(mask.sum())}")
    emb = np.ascontiguousarray(m.scaled()[:, :, mask])
    obs = (observed - m.offset[mask]) / m.scale[mask]
    starts = m.lattice().reshape(-1, 2)
    s, f, pg, iters = kernels.psom_descend(emb, obs, starts, cfg.maxiter, cfg.gtol)
    ok = (pg <= cfg.gtol) | (iters < cfg.maxiter)
    best = int(np.argmin(f))
    result = InverseResult(s[best].copy(), psom_forward(m, s[best]), float(f[best]), bool(ok.any()), best)
    if not ok.any():
        raise ConvergenceError(f"PSOM inversion did not converge from any of {len(starts)} starts", result)
    return result


@dataclass
class PostureResult:
    parameters: np.ndarray  # (10,) interleaved (phi, theta); NaN for flagged fingers
    depths: np.ndarray  # (5,)
    flagged: np.ndarray  # (5,) bool
    inversions: list

    @property
    def pose(self):
        if self.flagged.any():
            raise InvalidArgument(f"fingers {np.flatnonzero(self.flagged).tolist()} were not reconstructed")
        return HandPose.from_vector(self.parameters)


def _polish(m, observed, phi, theta):
    """Least-squares fit of the analytic forward transform, started from the PSOM estimate."""
    f, geom, cam, lim = m.finger, m.geometry, m.camera, m.limits

    def pose_of(p):
        v = np.zeros((N_FINGERS, 2))
        v[f] = p
        return HandPose.from_vector(v)

    def resid(p):
        tip = forward_kinematics(geom, pose_of(p), lim)[f]
        return project_points(tip, cam) - observed

    def jac(p):
        return cam.scale * tip_jacobian(geom, pose_of(p), f)[:2]

    lo = np.array([-lim.phi_max, 0.0])
    hi = np.array([lim.phi_max, lim.theta_max])
    x0 = np.clip([phi, theta], lo, hi)
    # least_squares needs a strictly interior start
    x0 = np.clip(x0, lo + 1e-12 * (hi - lo), hi - 1e-12 * (hi - lo))
    sol = least_squares(resid, x0, jac=jac, bounds=(lo, hi), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    p = np.clip(sol.x, lo, hi)
    return p[0], p[1], forward_kinematics(geom, pose_of(p), lim)[f][2]


def reconstruct_posture(manifolds, tips, refine=True, cfg=InverseConfig()):
    """Recover the 10 joint parameters and fingertip depths from 2D tips.

    Fingers are inverted independently. With ``refine`` the PSOM estimate
    seeds a bounded least-squares fit of the analytic forward transform,
    removing the interpolation error of the 4x4 manifold.
    """
    if len(manifolds) != N_FINGERS:
        raise InvalidArgument("need one manifold per finger")
    params = np.full((N_FINGERS, 2), np.nan)
    depths = np.full(N_FINGERS, np.nan)
    flagged = np.zeros(N_FINGERS, dtype=bool)
    inversions = []
    for f, m in enumerate(manifolds):
        if not tips.valid[f]:
            flagged[f] = True
            inversions.append(None)
            continue
        try:
            res = psom_inverse(m, tips.xy[f], XY_MASK, cfg)
        except ConvergenceError as exc:
            flagged[f] = True
            inversions.append(exc.result)
            continue
        inversions.append(res)
        lim = m.limits
        phi = float(np.clip(res.embedding[3], -lim.phi_max, lim.phi_max))
        theta = float(np.clip(res.embedding[4], 0.0, lim.theta_max))
        depth = float(res.embedding[2])
        if refine:
            phi, theta, depth = _polish(m, tips.xy[f], phi, theta)
        params[f] = phi, theta
        depths[f] = depth
    return PostureResult(params.reshape(-1), depths, flagged, inversions)


def dump_manifolds(manifolds):
    return b"".join(m.to_bytes() for m in manifolds)


def load_manifolds(blob):
    out, pos = [], 0
    while pos < len(blob):
        m, pos = PSOMManifold.from_bytes(blob, pos)
        out.append(m)
    if len(out) != N_FINGERS:
        raise ParseError(f"expected {N_FINGERS} manifolds, found {len(out)}", offset=pos)
    return out
