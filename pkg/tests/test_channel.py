"""Forward propagation tests: unitarity, SPM closed form, ASE, phase noise."""

import numpy as np
import pytest

import fiberlab as fl
from fiberlab.signals import H_PLANCK, Signal

PULSE = fl.PulseConfig(symbol_rate=46.5e9, rolloff=0.05, samples_per_symbol=2.0)


def shaped(n=2048, seed=0, power_dbm=0.0):
    rng = np.random.default_rng(seed)
    pts = fl.uniform_qam64().points
    sym = pts[rng.integers(0, 64, size=(2, n))]
    return fl.set_power(fl.rrc_shape(sym, PULSE), power_dbm)


class TestSsfmForward:
    def test_dispersion_only_is_unitary(self):
        link = fl.LinkConfig(n_spans=1, alpha_db_km=0.0, gamma_w_km=0.0, nf_db=None)
        plan = fl.StepPlan(steps_per_span=5, spacing="uniform")
        sig = shaped()
        out = fl.ssfm_forward(sig, link, plan, rng_seed=0)
        assert np.isclose(fl.mean_power(out), fl.mean_power(sig), rtol=1e-9)

    def test_pure_spm_closed_form(self):
        # CW input, beta2 = 0, alpha = 0: phase shift is gamma*(8/9)*P*L exactly
        link = fl.LinkConfig(n_spans=1, span_km=80.0, alpha_db_km=0.0,
                             disp_ps_nm_km=0.0, gamma_w_km=1.3, nf_db=None)
        plan = fl.StepPlan(steps_per_span=7, spacing="uniform")
        p_w = 2.5e-3
        amp = np.sqrt(p_w / 2.0)
        cw = Signal(np.full((2, 256), amp, dtype=complex), PULSE.symbol_rate)
        out = fl.ssfm_forward(cw, link, plan, rng_seed=0)
        expected = 1.3 * (8.0 / 9.0) * p_w * 80.0
        phases = np.angle(out.samples / cw.samples)
        assert np.allclose(phases, expected, rtol=1e-12, atol=1e-12)

    def test_loss_law_before_amplifier(self):
        # alpha only: power drops by alpha*L dB across the span; the amplifier
        # exactly restores it, so the span is transparent end to end.
        link = fl.LinkConfig(n_spans=1, span_km=100.0, alpha_db_km=0.2,
                             disp_ps_nm_km=0.0, gamma_w_km=0.0, nf_db=None)
        sig = shaped(seed=2)
        out = fl.ssfm_forward(sig, link, fl.StepPlan(steps_per_span=4), rng_seed=0)
        assert np.isclose(fl.mean_power(out), fl.mean_power(sig), rtol=1e-9)
        # the raw loss: 100 km at 0.2 dB/km = 20 dB
        att = 10 ** (-link.span_loss_db / 10.0)
        assert np.isclose(att, 1e-2, rtol=1e-12)

    def test_energy_conservation_lossless_nonlinear(self):
        link = fl.LinkConfig(n_spans=2, span_km=50.0, alpha_db_km=0.0,
                             gamma_w_km=1.3, nf_db=None)
        plan = fl.StepPlan(steps_per_span=40, spacing="uniform")
        sig = shaped(seed=3, power_dbm=6.0)
        out = fl.ssfm_forward(sig, link, plan, rng_seed=0)
        assert np.isclose(fl.mean_power(out), fl.mean_power(sig), rtol=1e-6)

    def test_split_step_convergence(self):
        # halving the step size moves the output monotonically toward a
        # fine-step reference
        link = fl.LinkConfig(n_spans=1, nf_db=None)
        sig = shaped(seed=4, power_dbm=4.0)
        ref = fl.ssfm_forward(sig, link, fl.StepPlan(steps_per_span=512), 0)
        errs = []
        for m in (16, 32, 64, 128):
            out = fl.ssfm_forward(sig, link, fl.StepPlan(steps_per_span=m), 0)
            errs.append(np.sum(np.abs(out.samples - ref.samples) ** 2)
                        / np.sum(np.abs(ref.samples) ** 2))
        assert all(a > b for a, b in zip(errs, errs[1:]))

    def test_determinism(self):
        link = fl.LinkConfig(n_spans=2)
        sig = shaped(seed=5)
        a = fl.ssfm_forward(sig, link, fl.StepPlan(steps_per_span=4), 42)
        b = fl.ssfm_forward(sig, link, fl.StepPlan(steps_per_span=4), 42)
        assert np.array_equal(a.samples, b.samples)

    def test_rejects_band_edge_occupancy(self):
        rng = np.random.default_rng(6)
        w = rng.normal(size=(2, 2048)) + 1j * rng.normal(size=(2, 2048))
        sig = Signal(w, 93e9)  # white noise fills the whole band
        with pytest.raises(ValueError):
            fl.ssfm_forward(sig, fl.LinkConfig(n_spans=1),
                            fl.StepPlan(steps_per_span=2), 0)


class TestEdfa:
    def test_noiseless_mode_is_pure_scaling(self):
        sig = shaped(seed=7)
        out = fl.edfa_amplify(sig, 20.0, None, rng_seed=0)
        assert np.allclose(out.samples, sig.samples * 10.0, rtol=1e-12)

    def test_ase_power_matches_analytic(self):
        # Two-polarization ASE power in a band B: 2 * n_sp * h * nu * (G-1) * B
        g_db, nf_db = 20.0, 5.0
        g = 100.0
        nu = 299792458.0 / 1550e-9
        n_sp = 10 ** (nf_db / 10.0) / 2.0
        band = 50e9
        n = 4096
        sig = Signal(np.zeros((2, n), dtype=complex), sample_rate=4 * band)
        f = np.fft.fftfreq(n, 1.0 / sig.sample_rate)
        sel = np.abs(f) < band / 2.0
        total = 0.0
        trials = 100
        for k in range(trials):
            out = fl.edfa_amplify(sig, g_db, nf_db, rng_seed=k, carrier_hz=nu)
            spec = np.abs(np.fft.fft(out.samples, axis=1)) ** 2
            # mean power restricted to the window, per Parseval
            total += spec[:, sel].sum() / n ** 2
        measured = total / trials
        expected = 2.0 * n_sp * H_PLANCK * nu * (g - 1.0) * band
        assert np.isclose(measured, expected, rtol=0.05)

    def test_seed_contract(self):
        sig = shaped(seed=8)
        a = fl.edfa_amplify(sig, 10.0, 5.0, rng_seed=1)
        b = fl.edfa_amplify(sig, 10.0, 5.0, rng_seed=1)
        c = fl.edfa_amplify(sig, 10.0, 5.0, rng_seed=2)
        assert np.array_equal(a.samples, b.samples)
        noise_ac = a.samples - c.samples
        assert np.sum(np.abs(noise_ac) ** 2) > 0

    def test_rejects_negative_gain(self):
        with pytest.raises(ValueError):
            fl.edfa_amplify(shaped(), -1.0, 5.0, rng_seed=0)


class TestPhaseNoise:
    def test_zero_linewidth_identity(self):
        sig = shaped(seed=9)
        out = fl.apply_phase_noise(sig, 0.0, rng_seed=0)
        assert np.array_equal(out.samples, sig.samples)

    def test_wiener_increment_statistics(self):
        # 100 kHz at 46.5 GBd, 1 sample/symbol: increment std
        # sqrt(2*pi*1e5/46.5e9) = 3.676e-3 rad, verified within 2%
        fs = 46.5e9
        lw = 100e3
        n = 10 ** 6
        sig = Signal(np.ones((2, n), dtype=complex), fs)
        out = fl.apply_phase_noise(sig, lw, rng_seed=3)
        theta = np.unwrap(np.angle(out.x))
        inc = np.diff(theta)
        expected_std = np.sqrt(2 * np.pi * lw / fs)
        assert np.isclose(expected_std, 3.676e-3, rtol=1e-3)
        assert np.isclose(np.std(inc), expected_std, rtol=0.02)

    def test_phase_continuity(self):
        fs = 46.5e9
        sig = Signal(np.ones((2, 10 ** 6), dtype=complex), fs)
        out = fl.apply_phase_noise(sig, 100e3, rng_seed=4)
        inc = np.diff(np.unwrap(np.angle(out.x)))
        sigma = np.sqrt(2 * np.pi * 100e3 / fs)
        assert np.max(np.abs(inc)) < 6 * sigma

    def test_same_process_on_both_polarizations(self):
        sig = shaped(seed=10)
        out = fl.apply_phase_noise(sig, 1e6, rng_seed=5)
        ratio_x = out.x / sig.x
        ratio_y = out.y / sig.y
        assert np.allclose(ratio_x, ratio_y, rtol=1e-12)


class TestAwgn:
    def test_infinite_snr_identity(self):
        sig = shaped(seed=11)
        assert np.array_equal(fl.awgn(sig, None, 0).samples, sig.samples)
        assert np.array_equal(fl.awgn(sig, np.inf, 0).samples, sig.samples)

    def test_symbol_rate_snr_calibration(self):
        # SNR 10 dB on unit-power symbols: per-2D noise variance 0.1
        rng = np.random.default_rng(12)
        pts = fl.uniform_qam64().points
        sym = pts[rng.integers(0, 64, size=(2, 2 ** 16))]
        sig = fl.rrc_shape(sym, PULSE)
        noisy = fl.awgn(sig, 10.0, rng_seed=6, symbol_rate=PULSE.symbol_rate)
        out = fl.matched_filter_sample(noisy, PULSE)
        err = out - sym
        var = np.mean(np.abs(err) ** 2)
        es = np.mean(np.abs(sym) ** 2)
        assert np.isclose(var, 0.1 * es, rtol=0.02)

    def test_polarizations_independent(self):
        sig = Signal(np.zeros((2, 2 ** 16), dtype=complex), 46.5e9)
        sig = sig.with_samples(sig.samples + 1.0)
        noisy = fl.awgn(sig, 10.0, rng_seed=7)
        nx = noisy.x - 1.0
        ny = noisy.y - 1.0
        rho = np.abs(np.mean(nx * np.conj(ny))) / np.sqrt(
            np.mean(np.abs(nx) ** 2) * np.mean(np.abs(ny) ** 2))
        assert rho < 0.01


class TestLinkConfig:
    def test_beta2_from_dispersion(self):
        link = fl.LinkConfig()
        # D = 17 ps/nm/km at 1550 nm -> beta2 = -21.7 ps^2/km
        assert np.isclose(link.beta2_s2_km, -21.67e-24, rtol=5e-3)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            fl.LinkConfig(n_spans=0)
        with pytest.raises(ValueError):
            fl.LinkConfig(span_km=-1.0)

    def test_effective_length(self):
        link = fl.LinkConfig()
        a = link.alpha_np_km
        assert np.isclose(link.span_eff_km, (1 - np.exp(-a * 100.0)) / a, rtol=1e-12)
