"""Waveform primitive tests: shaping, matched filtering, WDM, power."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import fiberlab as fl
from fiberlab.signals import Signal, dbm_to_watt, qam64_points

PULSE = fl.PulseConfig(symbol_rate=46.5e9, rolloff=0.05, samples_per_symbol=2.0)


def rand_symbols(n, seed=0):
    rng = np.random.default_rng(seed)
    pts = fl.uniform_qam64().points
    return pts[rng.integers(0, 64, size=(2, n))]


def nmse(a, b):
    return float(np.sum(np.abs(a - b) ** 2) / np.sum(np.abs(b) ** 2))


class TestSignalType:
    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            Signal(np.zeros((3, 4)), 1.0)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Signal(np.zeros((2, 0)), 1.0)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            Signal(np.zeros((2, 4)), 0.0)


class TestRrcShape:
    def test_impulse_response_peaks_at_symbol_instant(self):
        # single unit symbol: output is the sampled RRC pulse centered at 0
        sym = np.zeros((2, 8192), dtype=complex)
        sym[0, 0] = 1.0
        sig = fl.rrc_shape(sym, PULSE)
        mag = np.abs(sig.x)
        assert np.argmax(mag) == 0
        # symmetric tails around the peak (cyclic)
        assert np.allclose(mag[1:50], mag[-1:-50:-1], rtol=1e-9, atol=1e-12)
        # matches the closed-form time-domain RRC at a few offsets (cyclic
        # periodization of the slowly decaying tails limits the match)
        beta = PULSE.rolloff
        x = np.arange(1, 5) / 2.0  # time in symbols, half-symbol steps
        num = np.sin(np.pi * x * (1 - beta)) + 4 * beta * x * np.cos(np.pi * x * (1 + beta))
        den = np.pi * x * (1 - (4 * beta * x) ** 2)
        h0 = 1.0 - beta + 4.0 * beta / np.pi
        expected = num / den / h0
        got = sig.x[1:5].real / sig.x[0].real
        assert np.allclose(got, expected, atol=2e-4)

    def test_out_of_band_rejection(self):
        # constant-envelope QPSK: spectrum confined to (1+rolloff)/2 * Rs
        rng = np.random.default_rng(1)
        qpsk = np.exp(1j * (np.pi / 4 + np.pi / 2 * rng.integers(0, 4, (2, 4096))))
        sig = fl.rrc_shape(qpsk, PULSE)
        spec = np.abs(np.fft.fft(sig.x)) ** 2
        f = np.fft.fftfreq(sig.n_samples, 1.0 / sig.sample_rate)
        out_band = np.abs(f) > 0.5 * PULSE.occupied_bandwidth * (1 + 1e-9)
        ratio = spec[out_band].sum() / spec.sum()
        assert ratio < 1e-4  # -40 dB

    def test_nyquist_cascade_isi_free(self):
        sym = rand_symbols(4096)
        sig = fl.rrc_shape(sym, PULSE)
        back = fl.matched_filter_sample(sig, PULSE)
        assert nmse(back, sym) < 1e-6

    def test_mean_power_equals_symbol_energy(self):
        sym = rand_symbols(4096, seed=3)
        sig = fl.rrc_shape(sym, PULSE)
        es = np.mean(np.abs(sym[0]) ** 2 + np.abs(sym[1]) ** 2)
        assert np.isclose(fl.mean_power(sig), es, rtol=1e-9)

    def test_rejects_empty_and_bad_rolloff(self):
        with pytest.raises(ValueError):
            fl.rrc_shape(np.zeros((2, 0), dtype=complex), PULSE)
        with pytest.raises(ValueError):
            fl.PulseConfig(rolloff=1.5)

    @pytest.mark.parametrize("sps", [1.125, 1.5, 2.0, 4.0])
    def test_roundtrip_at_multiple_rates(self, sps):
        sym = rand_symbols(2048, seed=4)
        sig = fl.rrc_shape(sym, PULSE, samples_per_symbol=sps)
        assert nmse(fl.matched_filter_sample(sig, PULSE), sym) < 1e-12


class TestMatchedFilter:
    def test_shift_equivariance(self):
        # integer-sample delay, compensated, recovers the same symbols
        sym = rand_symbols(1024, seed=5)
        sig = fl.rrc_shape(sym, PULSE)
        delayed = sig.with_samples(np.roll(sig.samples, 6, axis=1))
        undone = delayed.with_samples(np.roll(delayed.samples, -6, axis=1))
        assert nmse(fl.matched_filter_sample(undone, PULSE), sym) < 1e-12

    def test_rejects_sub_nyquist_rate(self):
        sig = Signal(np.ones((2, 100)), sample_rate=PULSE.symbol_rate)  # 1 sps
        with pytest.raises(ValueError):
            fl.matched_filter_sample(sig, PULSE)

    def test_filtered_noise_variance_matches_analytic(self):
        # white noise of per-sample variance s2 -> s2/sps per symbol (2D)
        rng = np.random.default_rng(7)
        n_sym = 2 ** 16
        sps = 2.0
        n = int(n_sym * sps)
        s2 = 0.1
        w = rng.normal(0, np.sqrt(s2 / 2), (2, 2, n))
        sig = Signal(w[0] + 1j * w[1], PULSE.symbol_rate * sps)
        out = fl.matched_filter_sample(sig, PULSE)
        var = np.mean(np.abs(out) ** 2)
        assert np.isclose(var, s2 / sps, rtol=0.05)


class TestResample:
    def test_up_down_roundtrip_exact(self):
        sym = rand_symbols(1024, seed=8)
        sig = fl.rrc_shape(sym, PULSE)
        up = fl.resample(sig, sig.sample_rate * 2)
        down = fl.resample(up, sig.sample_rate)
        assert nmse(down.samples, sig.samples) < 1e-25

    def test_parseval_energy_preserved_in_band(self):
        sym = rand_symbols(1024, seed=9)
        sig = fl.rrc_shape(sym, PULSE)  # band 48.8 GHz < 52.3 GHz
        down = fl.resample(sig, PULSE.symbol_rate * 1.125)
        assert np.isclose(fl.mean_power(down), fl.mean_power(sig), rtol=1e-9)


class TestWdm:
    def test_single_channel_identity(self):
        sym = rand_symbols(512, seed=10)
        sig = fl.rrc_shape(sym, PULSE, samples_per_symbol=8.0)
        out = fl.wdm_mux([(sig, 0.0)])
        assert np.array_equal(out.samples, sig.samples)

    def test_two_channel_power_and_peaks(self):
        rng = np.random.default_rng(11)
        sigs = []
        for _ in range(2):
            s = rand_symbols(2048, seed=rng.integers(1 << 30))
            sigs.append(fl.set_power(fl.rrc_shape(s, PULSE, samples_per_symbol=8.0), 0.0))
        comb = fl.wdm_mux([(sigs[0], -50e9), (sigs[1], +50e9)])
        # total power: 2x single (channels do not overlap spectrally)
        assert np.isclose(fl.mean_power(comb), 2 * fl.mean_power(sigs[0]), rtol=1e-10)
        spec = np.abs(np.fft.fft(comb.x)) ** 2
        f = np.fft.fftfreq(comb.n_samples, 1 / comb.sample_rate)
        for target in (-50e9, 50e9):
            band = np.abs(f - target) < 25e9
            assert spec[band].sum() > 0.45 * spec.sum()

    def test_five_channel_band_occupancy(self):
        rng = np.random.default_rng(12)
        chans = []
        for c in range(-2, 3):
            s = rand_symbols(1024, seed=rng.integers(1 << 30))
            chans.append((fl.rrc_shape(s, PULSE, samples_per_symbol=8.0), c * 50e9))
        comb = fl.wdm_mux(chans, channel_bandwidth=PULSE.occupied_bandwidth)
        spec = np.abs(np.fft.fft(comb.samples, axis=1)) ** 2
        f = np.fft.fftfreq(comb.n_samples, 1 / comb.sample_rate)
        edge = 2 * 50e9 + 0.5 * PULSE.occupied_bandwidth
        outside = np.abs(f) > edge * (1 + 1e-9)
        assert spec[:, outside].sum() / spec.sum() < 1e-12

    def test_mux_linearity(self):
        a = rand_symbols(256, seed=13)
        b = rand_symbols(256, seed=14)
        sa = fl.rrc_shape(a, PULSE, samples_per_symbol=8.0)
        sb = fl.rrc_shape(b, PULSE, samples_per_symbol=8.0)
        sab = sa.with_samples(sa.samples + sb.samples)
        lhs = fl.wdm_mux([(sab, 50e9)]).samples
        rhs = fl.wdm_mux([(sa, 50e9)]).samples + fl.wdm_mux([(sb, 50e9)]).samples
        assert np.max(np.abs(lhs - rhs)) < 1e-12 * np.max(np.abs(lhs))

    def test_mux_demux_roundtrip(self):
        sym = rand_symbols(1024, seed=15)
        sig = fl.rrc_shape(sym, PULSE, samples_per_symbol=8.0)
        comb = fl.wdm_mux([(sig, 50e9)])
        back = fl.wdm_demux(comb, 50e9, PULSE, out_sps=8.0)
        assert nmse(back.samples, sig.samples) < 1e-8

    def test_demux_center_of_comb(self):
        rng = np.random.default_rng(16)
        syms = [rand_symbols(1024, seed=rng.integers(1 << 30)) for _ in range(5)]
        chans = [(fl.rrc_shape(s, PULSE, samples_per_symbol=8.0), c * 50e9)
                 for s, c in zip(syms, range(-2, 3))]
        comb = fl.wdm_mux(chans)
        ctr = fl.wdm_demux(comb, 0.0, PULSE, out_sps=1.125)
        got = fl.matched_filter_sample(ctr, PULSE)
        assert nmse(got, syms[2]) < 1e-4

    def test_demux_neighbor_channel_identity(self):
        rng = np.random.default_rng(17)
        syms = [rand_symbols(1024, seed=rng.integers(1 << 30)) for _ in range(5)]
        chans = [(fl.rrc_shape(s, PULSE, samples_per_symbol=8.0), c * 50e9)
                 for s, c in zip(syms, range(-2, 3))]
        comb = fl.wdm_mux(chans)
        nb = fl.wdm_demux(comb, +50e9, PULSE, out_sps=1.125)
        got = fl.matched_filter_sample(nb, PULSE)
        assert nmse(got, syms[3]) < 1e-4
        assert nmse(got, syms[2]) > 0.1  # definitely not the center channel

    def test_demux_rejects_out_of_band(self):
        sym = rand_symbols(256, seed=18)
        sig = fl.rrc_shape(sym, PULSE, samples_per_symbol=2.0)
        with pytest.raises(ValueError):
            fl.wdm_demux(sig, 200e9, PULSE)

    def test_mux_rejects_aliasing(self):
        sym = rand_symbols(256, seed=19)
        sig = fl.rrc_shape(sym, PULSE, samples_per_symbol=2.0)  # 93 GHz band
        with pytest.raises(ValueError):
            fl.wdm_mux([(sig, 40e9)], channel_bandwidth=PULSE.occupied_bandwidth)


class TestSetPower:
    def test_zero_dbm_is_one_milliwatt(self):
        sym = rand_symbols(512, seed=20)
        sig = fl.set_power(fl.rrc_shape(sym, PULSE), 0.0)
        assert np.isclose(fl.mean_power(sig), 1e-3, rtol=1e-12)

    def test_half_milliwatt(self):
        sym = rand_symbols(512, seed=21)
        sig = fl.set_power(fl.rrc_shape(sym, PULSE), -3.0102999566398120)
        assert np.isclose(fl.mean_power(sig), 0.5e-3, rtol=1e-12)

    def test_idempotent(self):
        sym = rand_symbols(512, seed=22)
        s1 = fl.set_power(fl.rrc_shape(sym, PULSE), 1.7)
        s2 = fl.set_power(s1, 1.7)
        assert np.allclose(s1.samples, s2.samples, rtol=1e-14)

    def test_rejects_zero_signal(self):
        with pytest.raises(ValueError):
            fl.set_power(Signal(np.zeros((2, 16)), 1e9), 0.0)

    @given(st.floats(min_value=-20, max_value=10))
    @settings(max_examples=20, deadline=None)
    def test_power_matches_target(self, p_dbm):
        sym = rand_symbols(256, seed=23)
        sig = fl.set_power(fl.rrc_shape(sym, PULSE), p_dbm)
        assert np.isclose(fl.mean_power(sig), dbm_to_watt(p_dbm), rtol=1e-12)


class TestConstellation:
    def test_uniform_qam64_unit_energy(self):
        c = fl.uniform_qam64()
        assert len(c.points) == 64
        assert np.isclose(c.mean_energy, 1.0, atol=1e-12)
        assert np.isclose(c.priors.sum(), 1.0, atol=1e-12)

    def test_grid_is_odd_levels(self):
        pts = qam64_points()
        assert sorted(set(pts.real)) == [-7, -5, -3, -1, 1, 3, 5, 7]

    def test_priors_must_sum_to_one(self):
        with pytest.raises(ValueError):
            fl.Constellation(np.ones(4), np.arange(4), np.full(4, 0.3))


class TestParseval:
    def test_time_frequency_energy_identity(self):
        sym = rand_symbols(1024, seed=24)
        sig = fl.rrc_shape(sym, PULSE)
        e_time = np.sum(np.abs(sig.samples) ** 2)
        e_freq = np.sum(np.abs(np.fft.fft(sig.samples, axis=1)) ** 2) / sig.n_samples
        assert np.isclose(e_time, e_freq, rtol=1e-9)


def test_simulation_sps_policy():
    # 5 channels at 50 GHz need 8 samples/symbol with a 20% guard
    assert fl.simulation_sps(5, 50e9, PULSE) == 8
    assert fl.simulation_sps(1, 50e9, PULSE) == 2
    assert fl.simulation_sps(3, 50e9, PULSE) == 4
