"""Image primitives shared by the vision modules.

Images are 2D float64 arrays indexed ``[row, col]``; pixel ``(x, y)`` means
``img[y, x]``. Kernels are 2D arrays with odd side lengths and are applied
with correlation (not flipped convolution) semantics.
"""

import math
from pathlib import Path

import numpy as np

from neurohand import kernels
from neurohand.errors import InvalidArgument, ParseError

BORDER_MODES = ("clamp", "zero")

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T.copy()


def as_image(data):
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 2:
        raise InvalidArgument(f"expected a 2D image, got shape {img.shape}")
    return img


def check_kernel(k):
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise InvalidArgument(f"kernel sides must be odd, got shape {k.shape}")
    if not np.all(np.isfinite(k)):
        raise InvalidArgument("kernel taps must be finite")
    return k


def convolve(img, k, border="clamp"):
    """Correlate ``img`` with kernel ``k``; output keeps the input size."""
    img = as_image(img)
    k = check_kernel(k)
    if border not in BORDER_MODES:
        raise InvalidArgument(f"border must be one of {BORDER_MODES}, got {border!r}")
    return kernels.correlate2d(img, k, border == "zero")


def gaussian_taps(sigma):
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=float)
    taps = np.exp(-0.5 * (x / sigma) ** 2)
    return taps / taps.sum()


def gaussian_smooth(img, sigma, border="clamp"):
    """Separable Gaussian blur truncated at +-3 sigma; ``sigma == 0`` returns a copy."""
    img = as_image(img)
    if not sigma >= 0:
        raise InvalidArgument(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return img.copy()
    taps = gaussian_taps(sigma)
    rows = convolve(img, taps[None, :], border)
    return convolve(rows, taps[:, None], border)


def normalize(img):
    """Affine map of [min, max] onto [0, 1]; a constant image maps to all zeros."""
    img = np.asarray(img, dtype=np.float64)
    if not np.all(np.isfinite(img)):
        raise InvalidArgument("normalize needs finite values")
    lo, hi = img.min(), img.max()
    if hi == lo:
        return np.zeros_like(img)
    out = (img - lo) / (hi - lo)
    return np.clip(out, 0.0, 1.0)


def edge_map(img):
    """Sobel gradient magnitude scaled so the maximum is 1 (flat input gives zeros)."""
    img = as_image(img)
    gx = convolve(img, _SOBEL_X)
    gy = convolve(img, _SOBEL_Y)
    mag = np.hypot(gx, gy)
    # accumulation round-off on flat areas is not an edge
    mag[mag <= 1e-12 * np.abs(img).max()] = 0.0
    peak = mag.max()
    if peak == 0:
        return np.zeros_like(mag)
    return mag / peak


# -- binary PGM / PPM ------------------------------------------------------

def _quantize(values):
    return np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(path, img):
    img = as_image(img)
    h, w = img.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + _quantize(img).tobytes())


def write_ppm(path, rgb):
    """Write an (H, W, 3) array, or a 2D array replicated into gray RGB."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim == 2:
        rgb = np.repeat(rgb[:, :, None], 3, axis=2)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise InvalidArgument(f"expected (H, W, 3) colour image, got shape {rgb.shape}")
    h, w, _ = rgb.shape
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + _quantize(rgb).tobytes())


def _header_token(data, pos):
    """Skip whitespace and comments, return (token, position after it)."""
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ParseError("unexpected end of header", offset=start)
    return data[start:pos], pos


def parse_pnm(data):
    """Decode P5/P6 bytes into a float image in [0, 1] ((H, W) or (H, W, 3))."""
    magic, pos = _header_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise ParseError(f"unsupported magic {magic!r}", offset=0)
    fields = []
    for _ in range(3):
        start = pos
        tok, pos = _header_token(data, pos)
        if not tok.isdigit():
            raise ParseError(f"expected an integer, got {tok!r}", offset=start)
        fields.append(int(tok))
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise ParseError("image dimensions must be positive", offset=pos)
    if maxval != 255:
        raise ParseError(f"only maxval 255 is supported, got {maxval}", offset=pos)
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ParseError("missing whitespace after maxval", offset=pos)
    pos += 1
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    payload = data[pos:pos + need]
    if len(payload) < need:
        raise ParseError(
            f"truncated payload: expected {need} bytes, found {len(payload)}", offset=pos + len(payload)
        )
    arr = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
    if channels == 1:
        return arr.reshape(height, width)
    return arr.reshape(height, width, 3)


def read_pnm(path):
    return parse_pnm(Path(path).read_bytes())


def read_pgm(path):
    img = read_pnm(path)
    if img.ndim != 2:
        raise ParseError(f"{path}: expected a P5 (grayscale) file", offset=0)
    return img
