import math

import numpy as np
import pytest

from echopad.cwt import (
    MorseParams,
    Scalogram,
    bilinear_resize,
    design_filterbank,
    load_scalogram_binary,
    morse_spectrum,
    save_scalogram_binary,
    save_scalogram_csv,
    to_image,
    transform,
)
from echopad.errors import CwtError

PEAK_OMEGA = (20.0 / 3.0) ** (1.0 / 3.0)


class TestMorseSpectrum:
    def test_zero_at_dc(self):
        out = morse_spectrum(20.0, 3.0, np.array([0.0, 1.0]))
        assert out[0] == 0.0

    def test_argmax_matches_closed_form(self):
        grid = np.linspace(0.01, 6.0, 200001)
        out = morse_spectrum(20.0, 3.0, grid)
        assert abs(grid[np.argmax(out)] - PEAK_OMEGA) < 1e-3 * PEAK_OMEGA

    def test_peak_value_is_one(self):
        out = morse_spectrum(20.0, 3.0, np.array([PEAK_OMEGA]))
        assert np.isclose(out[0], 1.0, rtol=1e-12)

    def test_non_positive_params_rejected(self):
        with pytest.raises(CwtError):
            morse_spectrum(0.0, 3.0, np.ones(3))
        with pytest.raises(CwtError):
            morse_spectrum(20.0, -1.0, np.ones(3))

    def test_beta_from_time_bandwidth(self):
        params = MorseParams()
        assert params.beta == 20.0
        assert np.isclose(params.peak_omega, PEAK_OMEGA, rtol=1e-15)


class TestFilterBankDesign:
    def test_default_centers_geometric(self):
        bank = design_filterbank(MorseParams(), 44100, 8192)
        centers = bank.center_freqs_hz
        assert len(centers) == 10
        assert np.isclose(centers[0], 20000.0, rtol=1e-12)
        assert np.isclose(centers[-1], 2000.0, rtol=1e-12)
        ratios = centers[:-1] / centers[1:]
        np.testing.assert_allclose(ratios, 10.0 ** (1.0 / 9.0), rtol=1e-9)

    def test_centers_strictly_descending(self):
        bank = design_filterbank(MorseParams(), 44100, 4096)
        assert np.all(np.diff(bank.center_freqs_hz) < 0)

    def test_single_filter_at_top_passband(self):
        bank = design_filterbank(MorseParams(num_filters=1), 44100, 4096)
        np.testing.assert_array_equal(bank.center_freqs_hz, [20000.0])

    def test_filter_peaks_at_declared_center(self):
        n = 8192
        bank = design_filterbank(MorseParams(), 44100, n)
        freqs = np.fft.fftfreq(n, d=1.0 / 44100)
        bin_hz = 44100 / n
        for k, fc in enumerate(bank.center_freqs_hz):
            peak_freq = freqs[np.argmax(bank.filters[k])]
            assert abs(peak_freq - fc) <= bin_hz

    def test_top_passband_at_nyquist_rejected(self):
        with pytest.raises(CwtError):
            design_filterbank(MorseParams(top_passband_hz=4000.0), 8000, 1024)

    def test_min_center_above_top_rejected(self):
        with pytest.raises(CwtError):
            MorseParams(top_passband_hz=1000.0, min_center_hz=2000.0)


class TestTransform:
    def test_zero_input_zero_scalogram(self):
        bank = design_filterbank(MorseParams(), 44100, 2048)
        scal = transform(np.zeros(2048), bank)
        assert scal.magnitudes.shape == (10, 2048)
        assert not np.any(scal.magnitudes)

    def test_tone_at_each_center_maximizes_own_row(self):
        n = 8192
        bank = design_filterbank(MorseParams(), 44100, n)
        t = np.arange(n) / 44100
        response = np.zeros((10, 10))
        for k, fc in enumerate(bank.center_freqs_hz):
            scal = transform(np.sin(2 * np.pi * fc * t), bank)
            response[:, k] = scal.magnitudes.mean(axis=1)
        for k in range(10):
            assert np.argmax(response[:, k]) == k

    def test_tone_selectivity_diagonally_dominant(self):
        n = 8192
        bank = design_filterbank(MorseParams(), 44100, n)
        t = np.arange(n) / 44100
        for k, fc in enumerate(bank.center_freqs_hz):
            scal = transform(np.sin(2 * np.pi * fc * t), bank)
            row_means = scal.magnitudes.mean(axis=1)
            others = np.delete(row_means, k)
            assert row_means[k] > 2.0 * others.max()

    def test_positive_homogeneity(self, rng):
        bank = design_filterbank(MorseParams(), 44100, 4096)
        x = rng.standard_normal(4096)
        for a in (2.5, 0.3):
            lhs = transform(a * x, bank).magnitudes
            rhs = a * transform(x, bank).magnitudes
            assert np.max(np.abs(lhs - rhs)) <= 1e-9 * rhs.max()

    def test_circular_shift_moves_columns(self, rng):
        bank = design_filterbank(MorseParams(), 44100, 2048)
        x = rng.standard_normal(2048)
        base = transform(x, bank).magnitudes
        shifted = transform(np.roll(x, 100), bank).magnitudes
        np.testing.assert_allclose(shifted, np.roll(base, 100, axis=1),
                                   rtol=1e-6, atol=1e-12)

    def test_length_mismatch_needs_permission(self, rng):
        bank = design_filterbank(MorseParams(), 44100, 2048)
        x = rng.standard_normal(1024)
        with pytest.raises(CwtError):
            transform(x, bank)
        scal = transform(x, bank, allow_redesign=True)
        assert scal.magnitudes.shape == (10, 1024)

    def test_float32_input_keeps_single_precision(self, rng):
        bank = design_filterbank(MorseParams(), 44100, 2048)
        scal = transform(rng.standard_normal(2048).astype(np.float32), bank)
        assert scal.magnitudes.dtype == np.float32


class TestToImage:
    def test_constant_maps_to_zeros(self):
        out = to_image(np.full((4, 6), 3.7), 8, 8)
        assert out.shape == (8, 8)
        assert not np.any(out)

    def test_identity_size_values(self, rng):
        m = rng.uniform(0, 5, (10, 16))
        out = to_image(m, 16, 10)
        v = (m - m.min()) / (m.max() - m.min())
        expected = np.log1p(v) / math.log(2.0)
        np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12)

    def test_bilinear_2x2_to_4x4_hand_case(self):
        img = np.array([[0.0, 1.0], [2.0, 3.0]])
        out = bilinear_resize(img, 4, 4)
        # source coords are (i/3, j/3); value = 2y + x
        expected = np.array([[(2 * i + j) / 3.0 for j in range(4)] for i in range(4)])
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_scale_invariance_exact_for_power_of_two(self, rng):
        m = rng.uniform(0.1, 4, (6, 40))
        np.testing.assert_array_equal(to_image(m, 16, 16), to_image(4.0 * m, 16, 16))

    def test_scale_invariance_general(self, rng):
        m = rng.uniform(0.1, 4, (6, 40))
        np.testing.assert_allclose(to_image(m, 16, 16), to_image(3.7 * m, 16, 16),
                                   atol=1e-12)

    def test_range_is_unit_interval(self, rng):
        m = rng.uniform(-3, 9, (10, 300))
        out = to_image(m, 64, 64)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_invalid_size(self):
        with pytest.raises(CwtError):
            to_image(np.ones((2, 2)), 0, 4)


class TestScalogramDumps:
    def test_binary_round_trip(self, tmp_path, rng):
        scal = Scalogram(rng.uniform(0, 2, (3, 17)), np.array([3.0, 2.0, 1.0]), 8000)
        save_scalogram_binary(scal, tmp_path / "s.bin")
        m, rate = load_scalogram_binary(tmp_path / "s.bin")
        assert rate == 8000
        np.testing.assert_array_equal(m, scal.magnitudes)

    def test_csv_dump(self, tmp_path, rng):
        scal = Scalogram(rng.uniform(0, 2, (3, 5)), np.array([3.0, 2.0, 1.0]), 8000)
        save_scalogram_csv(scal, tmp_path / "s.csv")
        back = np.loadtxt(tmp_path / "s.csv", delimiter=",")
        np.testing.assert_allclose(back, scal.magnitudes, rtol=1e-12)
