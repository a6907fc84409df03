"""Feature-map attention: saliency integration, fixation selection and top-down bias.

Each step computes a stack of normalised feature maps from the current RGB
frame (and the previous one, for motion), sums them with per-map weights,
multiplies the sum by the manipulation map M and the fade-out map Phi, and
blurs the product. The argmax becomes the next fixation; Phi is then dented
around it and relaxes back towards one, with moving skin re-injected.
"""

import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import ndimage

from neurohand.errors import InvalidArgument, ParseError
from neurohand.imaging import edge_map, gaussian_smooth, normalize

BASE_MAPS = ("edges", "saturation", "intensity", "motion", "skin", "moving_skin")
COLORS = {
    "red": (1.0, 0.0, 0.0),
    "green": (0.0, 1.0, 0.0),
    "blue": (0.0, 0.0, 1.0),
    "yellow": (1.0, 1.0, 0.0),
}
MAP_IDS = BASE_MAPS + tuple(COLORS)
BACKGROUND = 0.2


@dataclass(frozen=True)
class AttentionConfig:
    sigma: float = 2.0
    threshold: float = 0.5
    inhibition: float = 1.0
    inhibition_sigma: float = 6.0
    recovery: float = 0.05
    decay: float = 0.9
    border: int = 0  # width of the permanently suppressed frame around the image
    skin_hue_min: float = 0.0  # degrees
    skin_hue_max: float = 50.0
    skin_sat_min: float = 0.15
    skin_sat_max: float = 0.6
    color_tolerance: float = 0.5
    weight_edges: float = 1.0
    weight_saturation: float = 1.0
    weight_intensity: float = 1.0
    weight_motion: float = 1.0
    weight_skin: float = 1.0
    weight_moving_skin: float = 1.0
    weight_red: float = 0.0
    weight_green: float = 0.0
    weight_blue: float = 0.0
    weight_yellow: float = 0.0

    def __post_init__(self):
        if self.sigma < 0 or self.inhibition_sigma <= 0:
            raise InvalidArgument("smoothing and inhibition widths must be positive")
        if not 0 < self.threshold <= 1:
            raise InvalidArgument("snap threshold must lie in (0, 1]")
        if not 0 <= self.recovery <= 1:
            raise InvalidArgument("recovery rate must lie in [0, 1]")
        if not 0 < self.decay < 1:
            raise InvalidArgument("bias decay must lie in (0, 1)")
        if self.border < 0:
            raise InvalidArgument("border width must be >= 0")
        if any(getattr(self, f"weight_{m}") < 0 for m in MAP_IDS):
            raise InvalidArgument("map weights must be >= 0")

    def weights(self):
        return {m: float(getattr(self, f"weight_{m}")) for m in MAP_IDS}

    def skin_box(self):
        return (self.skin_hue_min, self.skin_hue_max, self.skin_sat_min, self.skin_sat_max)


# -- feature maps ----------------------------------------------------------

def as_frame(rgb):
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise InvalidArgument(f"frames are (H, W, 3) arrays, got shape {rgb.shape}")
    if not np.all(np.isfinite(rgb)) or rgb.min() < 0 or rgb.max() > 1:
        raise InvalidArgument("frame values must lie in [0, 1]")
    return rgb


def luminance(rgb):
    return rgb @ np.array([0.299, 0.587, 0.114])


def rgb_to_hsi(rgb):
    """Hue in degrees [0, 360), saturation and intensity in [0, 1]."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    intensity = rgb.mean(axis=-1)
    low = rgb.min(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        sat = np.where(intensity > 0, 1.0 - low / intensity, 0.0)
        num = 0.5 * ((r - g) + (r - b))
        den = np.sqrt((r - g) ** 2 + (r - b) * (g - b))
        theta = np.degrees(np.arccos(np.clip(np.where(den > 0, num / den, 1.0), -1.0, 1.0)))
    hue = np.where(b <= g, theta, 360.0 - theta) % 360.0
    return hue, np.clip(sat, 0.0, 1.0), intensity


def skin_map(rgb, box):
    hue_lo, hue_hi, sat_lo, sat_hi = box
    hue, sat, _ = rgb_to_hsi(rgb)
    inside = (hue >= hue_lo) & (hue <= hue_hi) & (sat >= sat_lo) & (sat <= sat_hi)
    return inside.astype(np.float64)


def color_map(rgb, reference, tolerance):
    dist = np.linalg.norm(rgb - np.asarray(reference, dtype=float), axis=-1)
    return normalize(np.clip(1.0 - dist / tolerance, 0.0, None))


@dataclass
class FeatureStack:
    maps: dict
    weights: dict

    @property
    def shape(self):
        return next(iter(self.maps.values())).shape


def compute_features(frame, prev_frame=None, cfg=AttentionConfig(), weights=None):
    frame = as_frame(frame)
    lum = luminance(frame)
    if prev_frame is None:
        motion = np.zeros_like(lum)
    else:
        prev = as_frame(prev_frame)
        if prev.shape != frame.shape:
            raise InvalidArgument(f"frame sizes differ: {prev.shape[:2]} vs {frame.shape[:2]}")
        motion = normalize(np.abs(lum - luminance(prev)))
    _, sat, intensity = rgb_to_hsi(frame)
    skin = skin_map(frame, cfg.skin_box())
    maps = {
        "edges": edge_map(lum),
        "saturation": normalize(sat),
        "intensity": normalize(intensity),
        "motion": motion,
        "skin": skin,
        "moving_skin": normalize(motion * skin),
    }
    for name, ref in COLORS.items():
        maps[name] = color_map(frame, ref, cfg.color_tolerance)
    return FeatureStack(maps, dict(cfg.weights() if weights is None else weights))


# -- integration and fixation ----------------------------------------------

@dataclass
class AttentionState:
    manipulation: np.ndarray
    fadeout: np.ndarray
    history: list = field(default_factory=list)
    bias: dict = field(default_factory=dict)  # map id -> [boost, decay steps taken]

    @classmethod
    def fresh(cls, shape):
        return cls(np.ones(shape), np.ones(shape))


@dataclass(frozen=True)
class Fixation:
    point: tuple  # (x, y), possibly fractional after snapping
    raw: tuple  # integer (x, y) of the argmax
    snapped: bool


def integrate(stack, state, sigma=2.0):
    total = np.zeros(stack.shape)
    for name, w in stack.weights.items():
        if w:
            total += w * stack.maps[name]
    return gaussian_smooth(total * state.manipulation * state.fadeout, sigma)


def inhibition_bump(shape, point, amplitude, sigma):
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    return amplitude * np.exp(-((xs - point[0]) ** 2 + (ys - point[1]) ** 2) / (2.0 * sigma * sigma))


def select_fixation(attention, fadeout, threshold=0.5, amplitude=1.0, sigma_f=6.0):
    """Pick the next fixation; returns ``(fixation or None, updated fade-out map)``.

    The raw argmax (first in scanline order) is snapped to the centroid of its
    8-connected component of ``attention >= threshold * max``.
    """
    peak = float(attention.max())
    if not peak > 0:
        return None, fadeout.copy()
    h, w = attention.shape
    ry, rx = divmod(int(np.argmax(attention)), w)
    labels, _ = ndimage.label(attention >= threshold * peak, structure=np.ones((3, 3)))
    ys, xs = np.nonzero(labels == labels[ry, rx])
    point = (float(xs.mean()), float(ys.mean()))
    fix = Fixation(point, (rx, ry), point != (float(rx), float(ry)))
    phi = np.clip(fadeout - inhibition_bump((h, w), point, amplitude, sigma_f), 0.0, 1.0)
    return fix, phi


def step_fadeout(fadeout, moving_skin, rho=0.05):
    if not 0 <= rho <= 1:
        raise InvalidArgument(f"recovery rate must lie in [0, 1], got {rho}")
    return np.clip(fadeout + rho * (1.0 - fadeout) + moving_skin, 0.0, 1.0)


def border_mask(shape, width):
    mask = np.ones(shape)
    if width > 0:
        mask[:width, :] = 0.0
        mask[-width:, :] = 0.0
        mask[:, :width] = 0.0
        mask[:, -width:] = 0.0
    return mask


def pointing_cone(shape, origin, direction, aperture):
    """1 on the forward sector of half-angle ``aperture`` around ``direction``.

    Pixels within half a pixel of the ray always count, so ``aperture == 0``
    leaves the rasterised ray itself.
    """
    if not 0 <= aperture <= math.pi:
        raise InvalidArgument(f"aperture must lie in [0, pi], got {aperture}")
    d = np.asarray(direction, dtype=float)
    norm = float(np.hypot(d[0], d[1]))
    if norm == 0:
        raise InvalidArgument("pointing direction has zero length")
    d = d / norm
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    px, py = xs - origin[0], ys - origin[1]
    along = px * d[0] + py * d[1]
    across = np.abs(px * d[1] - py * d[0])
    dist = np.hypot(px, py)
    with np.errstate(invalid="ignore", divide="ignore"):
        cosang = np.where(dist > 0, along / dist, 1.0)
    sector = cosang >= math.cos(aperture) - 1e-12
    ray = across <= 0.5
    return ((along >= 0) & (sector | ray) | (dist == 0)).astype(np.float64)


def apply_color_bias(state, map_id, boost):
    if map_id not in MAP_IDS:
        raise InvalidArgument(f"unknown feature map {map_id!r}")
    if boost < 0:
        raise InvalidArgument(f"boost must be >= 0, got {boost}")
    if boost == 0:
        state.bias.pop(map_id, None)
    else:
        state.bias[map_id] = [float(boost), 0]


def decay_bias(state):
    for entry in state.bias.values():
        entry[1] += 1


def biased_weights(defaults, state, decay):
    """Default weights plus each active boost scaled by ``decay ** steps``."""
    out = dict(defaults)
    for name, (boost, steps) in state.bias.items():
        out[name] = defaults[name] + boost * decay ** steps
    return out


def steps_to_settle(boost, decay, eps):
    """Decay steps until the excess ``boost * decay**n`` drops below ``eps``."""
    if boost < eps:
        return 0
    return math.ceil(math.log(eps / boost) / math.log(decay))


# -- scenarios -------------------------------------------------------------

@dataclass(frozen=True)
class Blob:
    t: int
    x: float
    y: float
    r: float
    color: tuple
    vx: float = 0.0
    vy: float = 0.0

    def center(self, step):
        k = step - self.t
        return self.x + self.vx * k, self.y + self.vy * k


@dataclass(frozen=True)
class Pointing:
    t: int
    ox: float
    oy: float
    dx: float
    dy: float
    aperture: float


@dataclass(frozen=True)
class Utterance:
    t: int
    color: str
    boost: float


@dataclass
class Scenario:
    width: int
    height: int
    steps: int
    blobs: list
    pointings: list
    utterances: list

    def render(self, step):
        frame = np.full((self.height, self.width, 3), BACKGROUND)
        ys, xs = np.mgrid[0:self.height, 0:self.width].astype(float)
        for b in self.blobs:
            if b.t > step:
                continue
            cx, cy = b.center(step)
            inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= b.r * b.r
            frame[inside] = b.color
        return frame


def _numbers(tokens, kinds, lineno, what):
    try:
        return [kind(tok) for kind, tok in zip(kinds, tokens)]
    except ValueError:
        raise ParseError(f"bad number in {what!r} line", line=lineno) from None


def parse_scenario(text):
    size = steps = None
    blobs, pointings, utterances = [], [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        key, args = tokens[0], tokens[1:]
        if key == "size":
            if len(args) != 2:
                raise ParseError("usage: size W H", line=lineno)
            size = _numbers(args, (int, int), lineno, key)
            if min(size) < 1:
                raise ParseError("image size must be positive", line=lineno)
        elif key == "steps":
            if len(args) != 1:
                raise ParseError("usage: steps N", line=lineno)
            (steps,) = _numbers(args, (int,), lineno, key)
            if steps < 0:
                raise ParseError("steps must be >= 0", line=lineno)
        elif key == "blob":
            if len(args) not in (5, 7):
                raise ParseError("usage: blob t x y r R,G,B [vx vy]", line=lineno)
            t, x, y, r = _numbers(args[:4], (int, float, float, float), lineno, key)
            color = _numbers(args[4].split(","), (float, float, float), lineno, key)
            if len(args[4].split(",")) != 3 or not all(0 <= c <= 1 for c in color):
                raise ParseError("blob colour must be three values in [0, 1]", line=lineno)
            vel = _numbers(args[5:], (float, float), lineno, key) if len(args) == 7 else (0.0, 0.0)
            if r <= 0 or t < 0:
                raise ParseError("blob radius must be positive and time >= 0", line=lineno)
            blobs.append(Blob(t, x, y, r, tuple(color), *vel))
        elif key == "point":
            if len(args) != 6:
                raise ParseError("usage: point t ox oy dx dy aperture", line=lineno)
            t, *rest = _numbers(args, (int, float, float, float, float, float), lineno, key)
            if rest[2] == 0 and rest[3] == 0:
                raise ParseError("pointing direction has zero length", line=lineno)
            if not 0 <= rest[4] <= math.pi:
                raise ParseError("aperture must lie in [0, pi]", line=lineno)
            pointings.append(Pointing(t, *rest))
        elif key == "say":
            if len(args) != 3:
                raise ParseError("usage: say t colorname boost", line=lineno)
            if args[1] not in COLORS:
                raise ParseError(f"unknown colour {args[1]!r} (known: {', '.join(COLORS)})", line=lineno)
            t, boost = _numbers([args[0], args[2]], (int, float), lineno, key)
            if boost < 0:
                raise ParseError("boost must be >= 0", line=lineno)
            utterances.append(Utterance(t, args[1], boost))
        else:
            raise ParseError(f"unknown directive {key!r}", line=lineno)
    if size is None:
        raise ParseError("scenario lacks a 'size' line")
    if steps is None:
        raise ParseError("scenario lacks a 'steps' line")
    return Scenario(size[0], size[1], steps, blobs, pointings, utterances)


def load_scenario(path):
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


@dataclass
class Episode:
    fixations: list  # one entry per step: Fixation or None
    snapshots: list  # attention maps, if requested
    state: AttentionState


def run_episode(scenario, cfg=AttentionConfig(), steps=None, keep_maps=False):
    """Replay a scenario; a pointing cone stays in force until the next one."""
    steps = scenario.steps if steps is None else steps
    shape = (scenario.height, scenario.width)
    state = AttentionState.fresh(shape)
    mask = border_mask(shape, cfg.border)
    state.fadeout = state.fadeout * mask
    defaults = cfg.weights()
    fixations, snapshots = [], []
    prev = None
    for step in range(steps):
        for p in scenario.pointings:
            if p.t == step:
                state.manipulation = pointing_cone(shape, (p.ox, p.oy), (p.dx, p.dy), p.aperture)
        for u in scenario.utterances:
            if u.t == step:
                apply_color_bias(state, u.color, u.boost)
        frame = scenario.render(step)
        stack = compute_features(frame, prev, cfg, biased_weights(defaults, state, cfg.decay))
        att = integrate(stack, state, cfg.sigma)
        fix, state.fadeout = select_fixation(att, state.fadeout, cfg.threshold, cfg.inhibition,
                                             cfg.inhibition_sigma)
        state.fadeout = step_fadeout(state.fadeout, stack.maps["moving_skin"], cfg.recovery) * mask
        decay_bias(state)
        if fix is not None:
            state.history.append(fix)
        fixations.append(fix)
        if keep_maps:
            snapshots.append(att)
        prev = frame
    return Episode(fixations, snapshots, state)


def trace_csv(fixations):
    lines = ["step,x,y,snapped"]
    for step, fix in enumerate(fixations):
        if fix is None:
            lines.append(f"{step},,,")
        else:
            lines.append(f"{step},{fix.point[0]:.6f},{fix.point[1]:.6f},{int(fix.snapped)}")
    return "\n".join(lines) + "\n"


def config_fields():
    return [f.name for f in fields(AttentionConfig)]
