"""GMSK waveform properties."""

import numpy as np

from lrfhss import gmsk


SPS = 64  # full-rate behaviour without full-rate cost


class TestModulate:
    def test_constant_envelope(self):
        rng = np.random.default_rng(0)
        wave = gmsk.modulate(rng.integers(0, 2, 64), SPS)
        assert np.max(np.abs(np.abs(wave) - 1.0)) < 1e-12

    def test_run_of_ones_ramps_up(self):
        wave = gmsk.modulate(np.ones(4, dtype=np.uint8), SPS)
        phase = np.unwrap(np.angle(wave))
        total = phase[-1] - phase[0]
        # 4 symbols minus the final sample's increment
        expect = 4 * (np.pi / 2) * (1 - 1 / (4 * SPS))
        assert abs(total - expect) / (2 * np.pi) < 0.01

    def test_run_phase_increment_per_symbol(self):
        bits = np.array([1, 1, 1, 1, 0, 0, 0, 0])
        wave = gmsk.modulate(bits, SPS)
        phase = np.unwrap(np.angle(wave))
        for k in range(1, 3):  # interior symbols of the `1` run
            d = phase[(k + 1) * SPS] - phase[k * SPS]
            assert abs(d - np.pi / 2) < 0.01 * np.pi / 2
        for k in range(5, 7):  # interior symbols of the `0` run
            d = phase[(k + 1) * SPS] - phase[k * SPS]
            assert abs(d + np.pi / 2) < 0.01 * np.pi / 2

    def test_alternating_bits_reduced_excursion(self):
        bits = np.array([1, 0, 1, 0, 1, 0, 1, 0])
        wave = gmsk.modulate(bits, SPS)
        phase = np.unwrap(np.angle(wave))
        for k in range(1, 7):
            d = abs(phase[(k + 1) * SPS] - phase[k * SPS])
            assert d < np.pi / 2

    def test_trajectory_starts_at_zero(self):
        assert gmsk.phase_trajectory(np.array([1, 0, 1]), SPS)[0] == 0.0

    def test_spectrum_concentrated_in_channel(self):
        # near-MSK sidelobes put a few percent of the power outside the
        # 488 Hz channel; the bulk must stay inside and the far skirt low
        rng = np.random.default_rng(1)
        sps = 1024
        wave = gmsk.modulate(rng.integers(0, 2, 500), sps)
        spec = np.abs(np.fft.fft(wave)) ** 2
        freqs = np.fft.fftfreq(len(wave), d=1 / 500000.0)
        in_band = spec[np.abs(freqs) <= 244.0].sum() / spec.sum()
        assert in_band > 0.94
        far = spec[np.abs(freqs) > 732.0].sum() / spec.sum()
        assert far < 0.01
