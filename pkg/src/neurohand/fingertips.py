"""Coarse-to-fine fingertip detection and three-stream fusion.

A global LLM network maps whole-image Gabor jets to all five tip positions.
Around each coarse estimate a square focus region is cut out (everything
outside it is discarded), and a per-finger local network working on jets at
half the length scale predicts the tip relative to the region centre.
"""

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from neurohand.errors import InvalidArgument, ParseError
from neurohand.gabor import GaborBank, JetGrid, extract_jets
from neurohand.hand import N_FINGERS, FingertipSet
from neurohand.imaging import convolve, edge_map, normalize
from neurohand.llm import LLMNetwork, TrainConfig, train_llm

MODEL_MAGIC = b"NHFT"
MODEL_VERSION = 1
EXCLUSION_RADIUS = 3.0


@dataclass(frozen=True)
class HierarchyConfig:
    size: tuple = (64, 64)
    orientations: int = 4
    wavelengths: tuple = (6.0, 10.0)
    sigma_ratio: float = 0.5
    grid: int = 8
    half_size: int = 12
    local_grid: int = 5
    local_spacing: int = 2  # 0 spreads the local grid over the whole region
    local_copies: int = 6  # regions per training image: the net's own estimate plus jittered ones
    local_jitter: float = 1.0
    global_train: TrainConfig = field(default_factory=lambda: TrainConfig(k=1, ridge=0.1))
    local_train: TrainConfig = field(default_factory=lambda: TrainConfig(k=2, ridge=0.1))

    def global_bank(self):
        return GaborBank(self.orientations, tuple(self.wavelengths), sigma_ratio=self.sigma_ratio)

    def local_bank(self):
        return self.global_bank().halved()

    def global_grid(self):
        return JetGrid.centered(self.size[0], self.size[1], self.grid, self.grid)

    def local_grid_spec(self):
        side = 2 * self.half_size + 1
        spacing = self.local_spacing or side // self.local_grid
        if spacing * (self.local_grid - 1) >= side:
            raise InvalidArgument("local jet grid does not fit the focus region")
        return JetGrid(self.local_grid, self.local_grid, spacing, (side - spacing * (self.local_grid - 1)) // 2,
                       (side - spacing * (self.local_grid - 1)) // 2)

    def to_dict(self):
        d = asdict(self)
        d["size"] = list(self.size)
        d["wavelengths"] = list(self.wavelengths)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["size"] = tuple(d["size"])
        d["wavelengths"] = tuple(d["wavelengths"])
        d["global_train"] = TrainConfig(**d["global_train"])
        d["local_train"] = TrainConfig(**d["local_train"])
        return cls(**d)


@dataclass(frozen=True)
class FocusRegion:
    finger: int
    cx: int
    cy: int
    half: int

    @property
    def bounds(self):
        """(x0, y0, x1, y1), inclusive."""
        return self.cx - self.half, self.cy - self.half, self.cx + self.half, self.cy + self.half

    def crop(self, img):
        x0, y0, x1, y1 = self.bounds
        return img[y0:y1 + 1, x0:x1 + 1]

    def contains(self, xy):
        x0, y0, x1, y1 = self.bounds
        return x0 <= xy[0] <= x1 and y0 <= xy[1] <= y1

    def clip(self, xy):
        x0, y0, x1, y1 = self.bounds
        return np.array([min(max(xy[0], x0), x1), min(max(xy[1], y0), y1)], dtype=float)


def focus_region(finger, estimate, half, size):
    """Region centred on the rounded estimate, shifted to lie fully inside the image."""
    w, h = size
    if 2 * half + 1 > min(w, h):
        raise InvalidArgument(f"focus region of half-size {half} does not fit a {w}x{h} image")
    cx = int(np.clip(np.rint(estimate[0]), half, w - 1 - half))
    cy = int(np.clip(np.rint(estimate[1]), half, h - 1 - half))
    return FocusRegion(finger, cx, cy, half)


@dataclass
class HierarchyModel:
    config: HierarchyConfig
    global_net: LLMNetwork
    local_nets: list

    def to_bytes(self):
        header = json.dumps(self.config.to_dict(), sort_keys=True).encode()
        parts = [MODEL_MAGIC, struct.pack("<II", MODEL_VERSION, len(header)), header, self.global_net.to_bytes()]
        parts += [net.to_bytes() for net in self.local_nets]
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob):
        if blob[:4] != MODEL_MAGIC:
            raise ParseError("not a fingertip hierarchy model", offset=0)
        version, hlen = struct.unpack("<II", blob[4:12])
        if version != MODEL_VERSION:
            raise ParseError(f"unsupported model version {version}", offset=4)
        try:
            cfg = HierarchyConfig.from_dict(json.loads(blob[12:12 + hlen]))
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"bad model header: {exc}", offset=12) from None
        pos = 12 + hlen
        global_net, pos = LLMNetwork.from_bytes(blob, pos)
        local = []
        for _ in range(N_FINGERS):
            net, pos = LLMNetwork.from_bytes(blob, pos)
            local.append(net)
        return cls(cfg, global_net, local)

    def digest(self):
        return hashlib.sha256(self.to_bytes()).hexdigest()


def global_features(img, cfg):
    return extract_jets(img, cfg.global_bank(), cfg.global_grid())


def local_features(img, region, cfg):
    return extract_jets(region.crop(img), cfg.local_bank(), cfg.local_grid_spec(), border="zero")


def _check_size(img, cfg):
    h, w = img.shape
    if (w, h) != tuple(cfg.size):
        raise InvalidArgument(f"image is {w}x{h}, model expects {cfg.size[0]}x{cfg.size[1]}")


def train_hierarchy(records, cfg=HierarchyConfig()):
    """Fit the global net on full images, then each local net on regions cut by the global net.

    Besides the region centred on the global net's own estimate, each training
    image contributes ``local_copies - 1`` regions centred on that estimate plus
    seeded Gaussian jitter, so the local nets see offsets of the size the global
    net makes on unseen images.
    """
    if not records:
        raise InvalidArgument("cannot train on an empty dataset")
    images = [np.asarray(r.image, dtype=np.float64) for r in records]
    for img in images:
        _check_size(img, cfg)
    targets = np.stack([r.tips.xy.reshape(-1) for r in records])
    bank, grid = cfg.global_bank(), cfg.global_grid()
    feats = np.stack([extract_jets(img, bank, grid) for img in images])
    global_net = train_llm(feats, targets, cfg.global_train)
    coarse = global_net.predict(feats).reshape(-1, N_FINGERS, 2)
    rng = np.random.default_rng([cfg.local_train.seed, 1])
    jitter = rng.normal(0.0, cfg.local_jitter, (N_FINGERS, max(cfg.local_copies - 1, 0), len(records), 2))
    local_nets = []
    for f in range(N_FINGERS):
        xs, ys = [], []
        centers = [coarse[:, f]] + [coarse[:, f] + jitter[f, c] for c in range(jitter.shape[1])]
        for est in centers:
            for img, e, rec in zip(images, est, records):
                region = focus_region(f, e, cfg.half_size, cfg.size)
                xs.append(local_features(img, region, cfg))
                ys.append(rec.tips.xy[f] - (region.cx, region.cy))
        local_nets.append(train_llm(np.stack(xs), np.stack(ys), cfg.local_train))
    return HierarchyModel(cfg, global_net, local_nets)


@dataclass
class Detection:
    coarse: FingertipSet
    regions: list
    refined: FingertipSet


def detect(model, img):
    img = np.asarray(img, dtype=np.float64)
    cfg = model.config
    _check_size(img, cfg)
    coarse = model.global_net(global_features(img, cfg)).reshape(N_FINGERS, 2)
    regions, refined = [], []
    for f in range(N_FINGERS):
        region = focus_region(f, coarse[f], cfg.half_size, cfg.size)
        local = model.local_nets[f](local_features(img, region, cfg))
        refined.append(region.clip(np.array([region.cx, region.cy]) + local))
        regions.append(region)
    return Detection(FingertipSet(coarse), regions, FingertipSet(np.stack(refined)))


def tip_errors(detections, records):
    """Per-image, per-finger pixel errors as two (n, 5) arrays: coarse, refined."""
    coarse = np.stack([np.linalg.norm(d.coarse.xy - r.tips.xy, axis=1) for d, r in zip(detections, records)])
    refined = np.stack([np.linalg.norm(d.refined.xy - r.tips.xy, axis=1) for d, r in zip(detections, records)])
    return coarse, refined


def error_table(coarse, refined, names):
    lines = [f"{'finger':<8} {'global mean':>11} {'global med':>10} {'refined mean':>12} {'refined med':>11}"]
    for f, name in enumerate(names):
        lines.append(
            f"{name:<8} {coarse[:, f].mean():11.3f} {np.median(coarse[:, f]):10.3f} "
            f"{refined[:, f].mean():12.3f} {np.median(refined[:, f]):11.3f}"
        )
    lines.append(
        f"{'all':<8} {coarse.mean():11.3f} {np.median(coarse):10.3f} {refined.mean():12.3f} {np.median(refined):11.3f}"
    )
    return "\n".join(lines)


# -- three-stream fusion ---------------------------------------------------

def fingertip_template():
    """5x5 ")("-shaped tip-edge template: short vertical bar, ends bent both ways."""
    t = np.array([
        [0.0, 0.7, 0.3, 0.7, 0.0],
        [0.0, 0.2, 1.0, 0.2, 0.0],
        [0.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, 0.2, 1.0, 0.2, 0.0],
        [0.0, 0.7, 0.3, 0.7, 0.0],
    ])
    t -= t.mean()
    return t / np.sqrt((t * t).sum())


@dataclass
class FusionResult:
    best: np.ndarray
    alternative: np.ndarray
    best_confidence: float
    alternative_confidence: float
    fused: np.ndarray
    streams: tuple
    region: FocusRegion


def confidence_bump(shape, center, sigma):
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    return np.exp(-((xs - center[0]) ** 2 + (ys - center[1]) ** 2) / (2.0 * sigma * sigma))


def fusion_streams(img, region, estimate, sigma_conf):
    patch = region.crop(np.asarray(img, dtype=np.float64))
    if patch.size == 0:
        raise InvalidArgument("empty focus region")
    x0, y0, _, _ = region.bounds
    local = (estimate[0] - x0, estimate[1] - y0)
    s1 = normalize(confidence_bump(patch.shape, local, sigma_conf))
    s2 = normalize(edge_map(patch))
    s3 = normalize(np.clip(convolve(patch, fingertip_template()), 0.0, None))
    return s1, s2, s3


def fuse_streams(img, region, estimate, sigma_conf=2.0):
    """Multiply the positional, edge and template streams; keep the two best peaks."""
    if not region.contains(estimate):
        raise InvalidArgument("estimate lies outside its focus region")
    streams = fusion_streams(img, region, estimate, sigma_conf)
    fused = streams[0] * streams[1] * streams[2]
    h, w = fused.shape
    b = int(np.argmax(fused))
    by, bx = divmod(b, w)
    ys, xs = np.mgrid[0:h, 0:w]
    outside = (xs - bx) ** 2 + (ys - by) ** 2 >= EXCLUSION_RADIUS ** 2
    masked = np.where(outside, fused, -np.inf)
    a = int(np.argmax(masked))
    ay, ax = divmod(a, w)
    x0, y0, _, _ = region.bounds
    return FusionResult(
        np.array([bx + x0, by + y0], dtype=float),
        np.array([ax + x0, ay + y0], dtype=float),
        float(fused[by, bx]),
        float(fused[ay, ax]),
        fused,
        streams,
        region,
    )


def _square(rgb, center, half, color):
    h, w, _ = rgb.shape
    x, y = int(round(center[0])), int(round(center[1]))
    x0, x1 = max(x - half, 0), min(x + half, w - 1)
    y0, y1 = max(y - half, 0), min(y + half, h - 1)
    if x0 > x1 or y0 > y1:
        return
    rgb[y0, x0:x1 + 1] = color
    rgb[y1, x0:x1 + 1] = color
    rgb[y0:y1 + 1, x0] = color
    rgb[y0:y1 + 1, x1] = color


def overlay(img, fusions, truth=None):
    """RGB copy of ``img`` with squares at best (red) and alternative (yellow) candidates."""
    rgb = np.repeat(normalize(np.asarray(img, dtype=np.float64))[:, :, None], 3, axis=2) * 0.6
    for fr in fusions:
        _square(rgb, fr.alternative, 1, (1.0, 1.0, 0.0))
        _square(rgb, fr.best, 1, (1.0, 0.0, 0.0))
    if truth is not None:
        for x, y in truth.xy:
            xi, yi = int(round(x)), int(round(y))
            if 0 <= yi < rgb.shape[0] and 0 <= xi < rgb.shape[1]:
                rgb[yi, xi] = (0.0, 1.0, 0.0)
    return rgb
