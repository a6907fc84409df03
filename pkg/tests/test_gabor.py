import math

import numpy as np
import pytest

from neurohand.errors import InvalidArgument, ParseError
from neurohand.gabor import (
    GaborBank,
    JetGrid,
    dump_features,
    extract_jets,
    feature_length,
    jet_energy,
    load_features,
    make_gabor_kernel,
    min_kernel_size,
)
from neurohand.imaging import convolve


@pytest.mark.parametrize("orientation", [0.0, 0.4, 1.3, 2.9])
@pytest.mark.parametrize("wavelength", [4.0, 6.5, 8.0])
def test_kernel_dc_and_norm(orientation, wavelength):
    for phase in ("even", "odd"):
        k = make_gabor_kernel(orientation, wavelength, phase)
        assert k.shape[0] % 2 == 1 and k.shape[0] >= 4 * 0.5 * wavelength
        assert abs(k.sum()) < 1e-12
        assert abs((k * k).sum() - 1.0) < 1e-12


def test_odd_kernel_antisymmetric():
    k = make_gabor_kernel(0.7, 8.0, "odd")
    assert np.array_equal(k, -k[::-1, ::-1])


def test_even_kernel_orientation_period():
    a = make_gabor_kernel(0.3, 8.0, "even")
    b = make_gabor_kernel(0.3 + math.pi, 8.0, "even")
    assert np.max(np.abs(a - b)) < 1e-12


def test_constant_image_gives_zero_response():
    k = make_gabor_kernel(1.0, 8.0, "even")
    assert np.max(np.abs(convolve(np.full((20, 20), 0.8), k))) < 1e-9
    bank, grid = GaborBank(), JetGrid.centered(64, 64, 8, 8)
    assert np.max(np.abs(extract_jets(np.full((64, 64), 0.5), bank, grid))) < 1e-9


def test_invalid_kernel_arguments():
    with pytest.raises(InvalidArgument):
        make_gabor_kernel(0.0, 0.0)
    with pytest.raises(InvalidArgument):
        make_gabor_kernel(0.0, 8.0, size=min_kernel_size(8.0, 0.5) - 2)
    with pytest.raises(InvalidArgument):
        make_gabor_kernel(0.0, 8.0, phase="quadrature")


def test_feature_length():
    bank = GaborBank(4, (4.0, 8.0))
    grid = JetGrid(4, 4, 8, 8, 8)
    assert feature_length(bank, grid) == 256
    assert extract_jets(np.random.default_rng(0).random((48, 48)), bank, grid).shape == (256,)


def test_layout_matches_direct_correlation(rng):
    img = rng.random((40, 40))
    bank = GaborBank(3, (4.0, 6.0))
    grid = JetGrid(3, 2, 9, 10, 12)
    jets = extract_jets(img, bank, grid).reshape(grid.size, 2, 3, 2)
    for gi, (x, y) in enumerate(grid.positions()):
        for s, lam in enumerate(bank.wavelengths):
            for o in range(3):
                for p, phase in enumerate(("even", "odd")):
                    k = make_gabor_kernel(math.pi * o / 3, lam, phase)
                    expect = convolve(img, k)[y, x]
                    assert abs(jets[gi, s, o, p] - expect) < 1e-12
    assert bank.channel_index(1, 2, 1) == (1 * 3 + 2) * 2 + 1


def test_grating_energy_peaks_at_matching_channel():
    bank = GaborBank(4, (4.0, 8.0))
    grid = JetGrid(2, 2, 16, 24, 24)
    ys, xs = np.mgrid[0:64, 0:64].astype(float)
    for o_true in range(4):
        for s_true, lam in enumerate(bank.wavelengths):
            th = math.pi * o_true / 4
            img = 0.5 + 0.5 * np.cos(2 * math.pi * (xs * math.cos(th) + ys * math.sin(th)) / lam)
            energy = jet_energy(extract_jets(img, bank, grid), bank, grid).sum(axis=0)
            s, o = np.unravel_index(np.argmax(energy), energy.shape)
            assert (s, o) == (s_true, o_true)


def test_energy_phase_invariance():
    bank = GaborBank(4, (8.0,))
    grid = JetGrid(1, 1, 1, 32, 32)
    xs = np.arange(64, dtype=float)[None, :].repeat(64, axis=0)
    energies = []
    for shift in np.linspace(0, 2 * math.pi, 9):
        img = 0.5 + 0.5 * np.cos(2 * math.pi * xs / 8.0 + shift)
        energies.append(jet_energy(extract_jets(img, bank, grid), bank, grid)[0, 0, 0])
    energies = np.array(energies)
    assert energies.max() / energies.min() - 1 < 0.02


def test_translation_covariance(rng):
    bank = GaborBank()
    grid = JetGrid(6, 6, 6, 17, 17)
    img = np.zeros((80, 80))
    img[30:50, 30:50] = rng.random((20, 20))
    shifted = np.roll(img, 6, axis=1)
    a = extract_jets(img, bank, grid).reshape(6, 6, -1)
    b = extract_jets(shifted, bank, grid).reshape(6, 6, -1)
    # position (i, j) in the shifted image sees what (i, j - 1) saw before
    assert np.max(np.abs(b[:, 1:] - a[:, :-1])) < 1e-6


def test_linear_in_image(rng):
    bank, grid = GaborBank(), JetGrid.centered(64, 64, 8, 8)
    x, y = rng.random((64, 64)), rng.random((64, 64))
    lhs = extract_jets(2 * x - 0.5 * y, bank, grid)
    rhs = 2 * extract_jets(x, bank, grid) - 0.5 * extract_jets(y, bank, grid)
    assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_grid_outside_image():
    with pytest.raises(InvalidArgument):
        extract_jets(np.zeros((16, 16)), GaborBank(), JetGrid(4, 4, 8, 4, 4))


def test_feature_dump_round_trip(rng):
    values = rng.normal(size=64 * 16)
    blob = dump_features(values, 64, 16)
    assert len(blob) == 16 + 4 * values.size
    back, g, c = load_features(blob)
    assert (g, c) == (64, 16)
    assert np.allclose(back, values.astype(np.float32))
    with pytest.raises(ParseError):
        load_features(blob[:-4])
    with pytest.raises(ParseError):
        load_features(b"XXXX" + blob[4:])


def test_wavelength_at_sampling_limit_rejected():
    # an odd kernel at 2 px would sample sin at its zeros along the axes
    with pytest.raises(InvalidArgument):
        make_gabor_kernel(0.0, 2.0, "odd")
    assert GaborBank().halved().wavelengths == (3.0, 5.0)
