"""Backpropagation family on one stored channel realization.

Propagates uniform DP-64QAM through 30x100 km once, then equalizes the same
waveform with CDC, plain split-step DBP, and trained ESSFM / CB-ESSFM at 30
steps total, reporting effective SNR and the RM/2D cost of each engine.
Takes a few minutes (the ESSFM training is a Powell descent).
Run:  python demos/03_dbp_family.py
"""

import numpy as np

import fiberlab as fl
from fiberlab.dbp import DbpConfig, complexity_rm2d, train_essfm
from fiberlab.signals import mean_power

pulse = fl.PulseConfig()
link = fl.LinkConfig()
rng = np.random.default_rng(3)
const = fl.uniform_qam64()
power_dbm = 2.0

sym = const.points[rng.integers(0, 64, size=(2, 2 ** 15))]
launch = fl.set_power(fl.rrc_shape(sym, pulse, samples_per_symbol=2.0), power_dbm)
scale = np.sqrt(mean_power(launch) / np.mean(np.abs(sym[0]) ** 2
                                             + np.abs(sym[1]) ** 2))
channel_out = fl.ssfm_forward(launch, link, fl.StepPlan(steps_per_span=32), 7)
rx = fl.resample(channel_out, pulse.symbol_rate * 1.125)


def evaluate(eq_signal, label, cfg):
    got = fl.matched_filter_sample(eq_signal, pulse) / scale
    snr = fl.effective_snr(got, sym)
    rm = complexity_rm2d(cfg, link).rm_per_2d
    print(f"{label:24s} effective SNR {snr:6.2f} dB   {rm:8.1f} RM/2D")


print(f"30x100 km, single channel, launch {power_dbm} dBm\n")
evaluate(fl.cdc(rx, link), "CDC", DbpConfig(engine="cdc"))

cfg_ssfm = DbpConfig(engine="ssfm", n_steps=30)
evaluate(fl.dbp_ssfm(rx, link, cfg_ssfm), "DBP-SSFM (30 steps)", cfg_ssfm)

# train ESSFM / CB-ESSFM coefficients on this very realization
tx_scaled = sym * scale
for engine in ("essfm", "cb_essfm"):
    cfg = DbpConfig(engine=engine, n_steps=30, n_coeffs=8,
                    samples_per_symbol=1.125)
    result = train_essfm(tx_scaled, rx, link, cfg, pulse, max_evals=1500)
    tuned = DbpConfig(engine=engine, n_steps=30, n_coeffs=8,
                      coeffs=result.coeffs, split_ratio=result.split_ratio,
                      samples_per_symbol=1.125)
    label = f"{engine} (30 steps, Nc=8)"
    evaluate(fl.essfm_backprop(rx, link, tuned), label, tuned)
    if engine == "cb_essfm":
        print(f"  trained split ratio: {result.split_ratio:.3f}")
        print(f"  trained taps (rad/W): "
              f"{np.array2string(np.asarray(result.coeffs), precision=3)}")
