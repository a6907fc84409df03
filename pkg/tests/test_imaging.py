import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from neurohand.errors import InvalidArgument, ParseError
from neurohand.imaging import (
    convolve,
    edge_map,
    gaussian_smooth,
    gaussian_taps,
    normalize,
    parse_pnm,
    read_pgm,
    read_pnm,
    write_pgm,
    write_ppm,
)


def brute_correlate(img, k, border):
    h, w = img.shape
    r, c = k.shape[0] // 2, k.shape[1] // 2
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-c, c + 1):
                    yy, xx = y + dy, x + dx
                    if border == "clamp":
                        v = img[min(max(yy, 0), h - 1), min(max(xx, 0), w - 1)]
                    else:
                        v = img[yy, xx] if 0 <= yy < h and 0 <= xx < w else 0.0
                    acc += k[dy + r, dx + c] * v
            out[y, x] = acc
    return out


def test_identity_kernel(rng, backend):
    img = rng.random((7, 9))
    k = np.zeros((3, 3))
    k[1, 1] = 1.0
    assert np.array_equal(convolve(img, k), img)


def test_constant_image_scales_by_tap_sum(rng, backend):
    k = rng.random((5, 3))
    out = convolve(np.full((6, 6), 0.7), k)
    assert np.allclose(out, 0.7 * k.sum(), atol=1e-12)


@pytest.mark.parametrize("border", ["clamp", "zero"])
def test_matches_double_loop(rng, backend, border):
    img = rng.random((5, 5))
    k = rng.normal(size=(3, 3))
    assert np.max(np.abs(convolve(img, k, border) - brute_correlate(img, k, border))) < 1e-12


def test_correlation_not_flipped(backend):
    img = np.zeros((5, 5))
    img[2, 2] = 1.0
    k = np.arange(9.0).reshape(3, 3)
    out = convolve(img, k, "zero")
    # correlation puts tap (i, j) at pixel (2 - (i - 1), 2 - (j - 1))
    assert out[1, 1] == k[2, 2] and out[3, 3] == k[0, 0]


def test_even_kernel_rejected():
    with pytest.raises(InvalidArgument):
        convolve(np.zeros((4, 4)), np.ones((2, 3)))
    with pytest.raises(InvalidArgument):
        convolve(np.zeros((4, 4)), np.ones((3, 3)), border="wrap")


@settings(max_examples=30, deadline=None)
@given(
    a=st.floats(-3, 3), b=st.floats(-3, 3),
    x=arrays(np.float64, (6, 7), elements=st.floats(0, 1)),
    y=arrays(np.float64, (6, 7), elements=st.floats(0, 1)),
)
def test_convolve_linear(a, b, x, y):
    k = np.linspace(-1, 1, 9).reshape(3, 3)
    lhs = convolve(a * x + b * y, k)
    rhs = a * convolve(x, k) + b * convolve(y, k)
    assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_gaussian_sigma_zero_is_copy(rng):
    img = rng.random((5, 5))
    out = gaussian_smooth(img, 0)
    assert np.array_equal(out, img) and out is not img


def test_gaussian_constant_unchanged():
    assert np.allclose(gaussian_smooth(np.full((9, 9), 0.3), 1.5), 0.3, atol=1e-15)


def test_gaussian_impulse_matches_2d_oracle(backend):
    img = np.zeros((15, 15))
    img[7, 7] = 1.0
    out = gaussian_smooth(img, 1.0)
    ys, xs = np.mgrid[-3:4, -3:4]
    g = np.exp(-(xs ** 2 + ys ** 2) / 2.0)
    g /= g.sum()
    assert abs(out[7, 7] - gaussian_taps(1.0)[3] ** 2) < 1e-15
    assert np.max(np.abs(out[4:11, 4:11] - g)) < 1e-9
    assert abs(out.sum() - 1.0) < 1e-6


def test_gaussian_negative_sigma():
    with pytest.raises(InvalidArgument):
        gaussian_smooth(np.zeros((3, 3)), -1)


def test_normalize_examples():
    assert np.allclose(normalize(np.array([[0.0, 2.0, 4.0]])), [[0.0, 0.5, 1.0]])
    assert np.array_equal(normalize(np.full((3, 3), 5.0)), np.zeros((3, 3)))
    img = np.array([[0.0, 0.25], [1.0, 0.5]])
    assert np.array_equal(normalize(img), img)
    with pytest.raises(InvalidArgument):
        normalize(np.array([[0.0, np.nan]]))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (4, 5), elements=st.floats(-1e3, 1e3)))
def test_normalize_idempotent_and_bounded(img):
    n = normalize(img)
    assert n.min() >= 0 and n.max() <= 1
    assert np.allclose(normalize(n), n, atol=1e-12)


def test_edge_map_flat_and_step(backend):
    assert np.array_equal(edge_map(np.full((8, 8), 0.4)), np.zeros((8, 8)))
    img = np.zeros((9, 12))
    img[:, 6:] = 1.0
    e = edge_map(img)
    assert e.max() == 1.0
    cols = np.unique(np.nonzero(e)[1])
    assert set(cols) <= {5, 6} and np.all(e[:, :4] == 0) and np.all(e[:, 8:] == 0)


def test_edge_map_matches_finite_differences(backend):
    from neurohand.hand import HandGeometry, HandPose, render_hand

    img = render_hand(HandGeometry(), HandPose.from_vector(np.tile([0.1, 0.7], 5)))
    p = np.pad(img, 1, mode="edge")
    dx = (p[:-2, 2:] + 2 * p[1:-1, 2:] + p[2:, 2:]) - (p[:-2, :-2] + 2 * p[1:-1, :-2] + p[2:, :-2])
    dy = (p[2:, :-2] + 2 * p[2:, 1:-1] + p[2:, 2:]) - (p[:-2, :-2] + 2 * p[:-2, 1:-1] + p[:-2, 2:])
    mag = np.hypot(dx, dy)
    assert np.max(np.abs(edge_map(img) - mag / mag.max())) < 1e-12
    # every silhouette boundary pixel responds
    boundary = (img > 0) & (np.pad(img, 1)[1:-1, :-2] == 0)
    assert np.all(edge_map(img)[boundary] > 0)


def test_pgm_payload_and_header(tmp_path):
    path = tmp_path / "a.pgm"
    write_pgm(path, np.array([[0.0, 1.0], [1.0, 0.0]]))
    data = path.read_bytes()
    assert data == b"P5\n2 2\n255\n\x00\xff\xff\x00"
    img = parse_pnm(b"P5\n2 2\n255\n" + bytes([0, 255, 255, 0]))
    assert img.shape == (2, 2)


def test_pgm_round_trip(tmp_path, rng):
    img = rng.random((13, 17))
    write_pgm(tmp_path / "r.pgm", img)
    back = read_pgm(tmp_path / "r.pgm")
    assert back.shape == img.shape
    assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-12


def test_ppm_round_trip(tmp_path, rng):
    rgb = rng.random((4, 6, 3))
    write_ppm(tmp_path / "c.ppm", rgb)
    back = read_pnm(tmp_path / "c.ppm")
    assert back.shape == (4, 6, 3)
    assert np.max(np.abs(back - rgb)) <= 0.5 / 255 + 1e-12


def test_pgm_comment_in_header():
    img = parse_pnm(b"P5\n# made by hand\n1 1\n255\n\x80")
    assert img.shape == (1, 1) and abs(img[0, 0] - 128 / 255) < 1e-12


@pytest.mark.parametrize(
    "blob, offset",
    [
        (b"P7\n1 1\n255\n\x00", 0),
        (b"P5\n2 2\n255\n\x00\x00", 13),
        (b"P5\n2 2\n65535\n" + bytes(8), None),
        (b"P5\n2 x\n255\n" + bytes(4), None),
    ],
)
def test_malformed_pnm(blob, offset):
    with pytest.raises(ParseError) as exc:
        parse_pnm(blob)
    if offset is not None:
        assert exc.value.offset == offset
    assert exc.value.offset is not None
