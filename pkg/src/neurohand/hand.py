"""Articulated hand model: coupled finger kinematics, silhouette rendering, labelled data.

Model frame: the palm lies in the X/Y plane centred on the origin, fingers
radiate from the palm rim, and flexion bends a finger out of that plane
towards +Z (away from the camera). Each finger has two free parameters,
abduction ``phi`` (rotation of the flexion plane about the palm normal) and
flexion ``theta`` (the middle joint); the other joints follow the coupling
rule ``theta1 = theta`` and ``theta3 = 2/3 * theta``.
"""

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from neurohand import kernels
from neurohand.errors import InvalidArgument, ParseError
from neurohand.imaging import gaussian_smooth, read_pgm, write_pgm

N_FINGERS = 5
FINGER_NAMES = ("thumb", "index", "middle", "ring", "little")


def apply_coupling(theta2):
    """Expand the flexion parameter into the three joint angles of a finger."""
    theta2 = np.asarray(theta2, dtype=np.float64)
    return np.stack([theta2, theta2, theta2 * 2.0 / 3.0], axis=-1)


@dataclass(frozen=True)
class JointLimits:
    theta_max: float = 1.6
    phi_max: float = 0.25

    def contains(self, phi, theta):
        phi, theta = np.asarray(phi), np.asarray(theta)
        return bool(np.all((theta >= 0) & (theta <= self.theta_max) & (np.abs(phi) <= self.phi_max)))


def _default_directions():
    return (-1.0, -0.5, 0.0, 0.5, 1.0)


def _default_lengths():
    base = (10.0, 6.0, 2.0)
    return tuple(tuple(s * b for b in base) for s in (0.75, 0.95, 1.0, 0.95, 0.8))


@dataclass(frozen=True)
class HandGeometry:
    palm_radius: float = 9.0
    directions: tuple = field(default_factory=_default_directions)
    lengths: tuple = field(default_factory=_default_lengths)
    finger_radius: float = 1.5

    def __post_init__(self):
        if len(self.directions) != N_FINGERS or len(self.lengths) != N_FINGERS:
            raise InvalidArgument("hand geometry needs five fingers")
        if np.any(np.asarray(self.lengths) < 0) or self.finger_radius <= 0 or self.palm_radius < 0:
            raise InvalidArgument("lengths and radii must be non-negative (finger radius positive)")

    def bases(self):
        a = np.asarray(self.directions)
        return np.stack([self.palm_radius * np.cos(a), self.palm_radius * np.sin(a), np.zeros_like(a)], axis=1)

    def to_dict(self):
        return {k: (list(map(list, v)) if k == "lengths" else (list(v) if isinstance(v, tuple) else v))
                for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        return cls(
            palm_radius=float(d["palm_radius"]),
            directions=tuple(float(v) for v in d["directions"]),
            lengths=tuple(tuple(float(v) for v in row) for row in d["lengths"]),
            finger_radius=float(d["finger_radius"]),
        )


@dataclass(frozen=True)
class Camera:
    """Orthographic camera: image (x, y) = scale * (X, Y) + offset; Z is depth."""

    scale: float = 1.0
    offset: tuple = (18.0, 32.0)

    def to_dict(self):
        return {"scale": self.scale, "offset": list(self.offset)}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["scale"]), tuple(float(v) for v in d["offset"]))


@dataclass(frozen=True)
class HandPose:
    phi: tuple
    theta: tuple

    def __post_init__(self):
        if len(self.phi) != N_FINGERS or len(self.theta) != N_FINGERS:
            raise InvalidArgument("a hand pose has five (phi, theta) pairs")

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=np.float64).reshape(N_FINGERS, 2)
        return cls(tuple(float(a) for a in v[:, 0]), tuple(float(t) for t in v[:, 1]))

    @classmethod
    def zero(cls):
        return cls((0.0,) * N_FINGERS, (0.0,) * N_FINGERS)

    def vector(self):
        """The 10 free parameters, interleaved per finger as (phi, theta)."""
        return np.stack([np.asarray(self.phi), np.asarray(self.theta)], axis=1).reshape(-1)

    def joints(self):
        """(5, 3) coupled joint angles (theta1, theta2, theta3) per finger."""
        return apply_coupling(np.asarray(self.theta))


@dataclass
class FingertipSet:
    xy: np.ndarray  # (5, 2) image coordinates
    z: np.ndarray = None  # (5,) depth in model units
    valid: np.ndarray = None  # (5,) bool

    def __post_init__(self):
        self.xy = np.asarray(self.xy, dtype=np.float64).reshape(N_FINGERS, 2)
        if self.z is not None:
            self.z = np.asarray(self.z, dtype=np.float64).reshape(N_FINGERS)
        if self.valid is None:
            self.valid = np.ones(N_FINGERS, dtype=bool)
        else:
            self.valid = np.asarray(self.valid, dtype=bool).reshape(N_FINGERS)


def finger_chains(geom, pose, limits=JointLimits()):
    """(5, 4, 3) joint positions per finger: base, two knuckles, tip."""
    phi, theta = np.asarray(pose.phi), np.asarray(pose.theta)
    if not limits.contains(phi, theta):
        raise InvalidArgument(f"pose outside joint limits {limits}")
    psi = np.cumsum(pose.joints(), axis=1)  # cumulative flexion along the chain
    a = np.asarray(geom.directions) + phi
    along = np.stack([np.cos(a), np.sin(a), np.zeros(N_FINGERS)], axis=1)
    lengths = np.asarray(geom.lengths)
    steps = lengths[:, :, None] * (
        np.cos(psi)[:, :, None] * along[:, None, :] + np.sin(psi)[:, :, None] * np.array([0.0, 0.0, 1.0])
    )
    base = geom.bases()
    return np.concatenate([base[:, None, :], base[:, None, :] + np.cumsum(steps, axis=1)], axis=1)


def forward_kinematics(geom, pose, limits=JointLimits()):
    """(5, 3) fingertip positions in the model frame."""
    return finger_chains(geom, pose, limits)[:, -1, :]


def project(points, camera):
    points = np.asarray(points, dtype=np.float64)
    xy = camera.scale * points[..., :2] + np.asarray(camera.offset)
    return FingertipSet(xy, points[..., 2])


def project_points(points, camera):
    points = np.asarray(points, dtype=np.float64)
    return camera.scale * points[..., :2] + np.asarray(camera.offset)


def render_hand(geom, pose, camera=Camera(), size=(64, 64), blur=0.0, limits=JointLimits()):
    """Binary silhouette: palm disc plus one capsule per finger segment.

    ``size`` is (width, height). With ``blur > 0`` the silhouette is Gaussian
    smoothed afterwards.
    """
    chains = project_points(finger_chains(geom, pose, limits), camera)
    r = geom.finger_radius * camera.scale
    segs = []
    cx, cy = camera.offset
    segs.append((cx, cy, cx, cy, geom.palm_radius * camera.scale))
    for f in range(N_FINGERS):
        for j in range(3):
            (x0, y0), (x1, y1) = chains[f, j], chains[f, j + 1]
            segs.append((x0, y0, x1, y1, r))
    w, h = size
    img = kernels.rasterize_capsules(h, w, np.array(segs))
    if blur > 0:
        img = gaussian_smooth(img, blur)
    return img


def tip_labels(geom, pose, camera=Camera(), limits=JointLimits()):
    return project(forward_kinematics(geom, pose, limits), camera)


# -- datasets --------------------------------------------------------------

def uniform_sampler(limits=JointLimits()):
    def sample(rng):
        phi = rng.uniform(-limits.phi_max, limits.phi_max, N_FINGERS)
        theta = rng.uniform(0.0, limits.theta_max, N_FINGERS)
        return HandPose(tuple(phi.tolist()), tuple(theta.tolist()))
    return sample


def fixed_sampler(pose):
    return lambda rng: pose


@dataclass
class Record:
    image: np.ndarray
    tips: FingertipSet
    pose: HandPose


def generate_dataset(n, geom=HandGeometry(), camera=Camera(), sampler=None, seed=0, size=(64, 64),
                     blur=0.0, limits=JointLimits()):
    """``n`` labelled renders; record ``i`` draws from its own RNG stream ``(seed, i)``."""
    if n < 1:
        raise InvalidArgument("dataset size must be >= 1")
    sampler = sampler or uniform_sampler(limits)
    records = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        pose = sampler(rng)
        img = render_hand(geom, pose, camera, size, blur, limits)
        records.append(Record(img, tip_labels(geom, pose, camera, limits), pose))
    return records


def dataset_digest(records):
    h = hashlib.sha256()
    for r in records:
        h.update(np.ascontiguousarray(r.image).tobytes())
        h.update(r.tips.xy.tobytes())
        h.update(r.pose.vector().tobytes())
    return h.hexdigest()


def _fmt(values):
    return " ".join(repr(float(v)) for v in values)


def format_label(tips, pose):
    xyz = np.column_stack([tips.xy, tips.z if tips.z is not None else np.zeros(N_FINGERS)])
    return f"tips: {_fmt(xyz.reshape(-1))}\npose: {_fmt(pose.vector())}\n"


def parse_label(text, source="<label>"):
    fields = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        key, sep, rest = line.partition(":")
        if not sep or key.strip() not in ("tips", "pose"):
            raise ParseError(f"{source}: unexpected label line {line!r}", line=lineno)
        try:
            fields[key.strip()] = np.array([float(v) for v in rest.split()])
        except ValueError:
            raise ParseError(f"{source}: non-numeric value", line=lineno) from None
    if "tips" not in fields or fields["tips"].size != 15 or "pose" not in fields or fields["pose"].size != 10:
        raise ParseError(f"{source}: label needs 15 tip values and 10 pose values")
    xyz = fields["tips"].reshape(N_FINGERS, 3)
    return FingertipSet(xyz[:, :2], xyz[:, 2]), HandPose.from_vector(fields["pose"])


def write_dataset(out_dir, records, seed, size, blur=0.0, geom=HandGeometry(), camera=Camera(),
                  limits=JointLimits()):
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, r in enumerate(records):
        stem = f"{i:05d}"
        write_pgm(out / "images" / f"{stem}.pgm", r.image)
        (out / "labels" / f"{stem}.txt").write_text(format_label(r.tips, r.pose))
        entries.append({"image": f"images/{stem}.pgm", "label": f"labels/{stem}.txt"})
    manifest = {
        "format": "neurohand-dataset",
        "version": 1,
        "seed": seed,
        "n": len(records),
        "size": list(size),
        "blur": blur,
        "geometry": geom.to_dict(),
        "camera": camera.to_dict(),
        "limits": asdict(limits),
        "records": entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def load_dataset(path):
    """Read a dataset directory; returns (records, manifest)."""
    root = Path(path)
    mpath = root / "manifest.json" if root.is_dir() else root
    root = mpath.parent
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{mpath}: invalid manifest JSON: {exc.msg}", line=exc.lineno) from None
    if manifest.get("format") != "neurohand-dataset":
        raise ParseError(f"{mpath}: not a neurohand dataset manifest")
    records = []
    for entry in manifest["records"]:
        img = read_pgm(root / entry["image"])
        tips, pose = parse_label((root / entry["label"]).read_text(), entry["label"])
        records.append(Record(img, tips, pose))
    return records, manifest


def manifest_models(manifest):
    return (
        HandGeometry.from_dict(manifest["geometry"]),
        Camera.from_dict(manifest["camera"]),
        JointLimits(**manifest["limits"]),
    )


_CHAIN_RATES = np.array([1.0, 2.0, 8.0 / 3.0])  # d(cumulative flexion)/d(theta) per segment


def tip_jacobian(geom, pose, finger):
    """Analytic (3, 2) derivative of one fingertip w.r.t. (phi, theta)."""
    theta = pose.theta[finger]
    a = geom.directions[finger] + pose.phi[finger]
    lengths = np.asarray(geom.lengths[finger])
    psi = _CHAIN_RATES * theta
    radial = float(lengths @ np.cos(psi))
    d_radial = -float(lengths @ (_CHAIN_RATES * np.sin(psi)))
    d_height = float(lengths @ (_CHAIN_RATES * np.cos(psi)))
    d_phi = radial * np.array([-math.sin(a), math.cos(a), 0.0])
    d_theta = np.array([d_radial * math.cos(a), d_radial * math.sin(a), d_height])
    return np.stack([d_phi, d_theta], axis=1)
