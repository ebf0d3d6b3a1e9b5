"""Experiment driver: configs, deterministic sweeps, results persistence.

A sweep point is fully determined by (config, launch power, seed): every
random draw is derived from the point seed, the ESSFM training and the
sequence-selection search are deterministic, and records are cached on disk
keyed by the canonical config hash.  Launch-power sweeps therefore
reproduce bit-identically (up to wall time) across runs and platforms.

Modulation schemes
------------------
u64qam            uniform DP-64QAM
pas_mb            PAS with i.i.d. Maxwell-Boltzmann amplitudes (ideal DM)
pas_ess           PAS via enumerative sphere shaping (block DM)
pas_ess_sel_bs    pas_ess + bit-scramble selection, coarse CB-ESSFM NLI metric
pas_ess_sel_ideal pas_ess + selection with a fine-step SSFM NLI metric

Interfering WDM channels always carry uniform 64-QAM with independent seeds,
which isolates the shaping effect on the channel under test.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._seeds import derive_key, derive_rng
from .channel import LinkConfig, StepPlan, apply_phase_noise, ssfm_forward
from .dbp import (DbpConfig, cdc, complexity_rm2d, dbp_ssfm, essfm_backprop,
                  train_essfm)
from .rxdsp import CprConfig, air_estimate, bps_cpr, mean_phase_remove
from .seqsel import (SelectionConfig, generate_candidates, metric_energy_var,
                     metric_nli, rate_loss, select, train_metric_model)
from .shaping import (AMPLITUDES, DmConfig, build_pas_frame, ess_codec,
                      ess_min_emax, frame_bit_budget, mb_fit_nu, mb_probs,
                      mb_sample, pas_map, shaped_qam64)
from .signals import (Constellation, PulseConfig, Signal, dbm_to_watt,
                      matched_filter_sample, mean_power, qam64_points,
                      rrc_shape, set_power, simulation_sps, wdm_demux, wdm_mux)

__all__ = [
    "WdmConfig",
    "CprSettings",
    "ExperimentConfig",
    "ResultRecord",
    "config_hash",
    "canonical_json",
    "config_to_dict",
    "config_from_dict",
    "validate_config",
    "run_point",
    "run_sweep",
    "run_step_sweep",
    "emit_report",
    "peak_se",
    "CSV_COLUMNS",
]

MODULATIONS = ("u64qam", "pas_mb", "pas_ess", "pas_ess_sel_bs",
               "pas_ess_sel_ideal")
CSV_COLUMNS = ("config_hash", "modulation", "power_dbm", "seed",
               "se_bits_s_hz", "air_4d", "effective_snr_db", "rm_per_2d",
               "wall_time_s")
CACHE_ENV = "FIBERLAB_CACHE_DIR"

_TRAIN_SYMBOLS = 2 ** 14


@dataclass(frozen=True)
class WdmConfig:
    n_channels: int = 1
    spacing_hz: float = 50e9

    def __post_init__(self):
        if self.n_channels < 1 or self.n_channels % 2 == 0:
            raise ValueError("n_channels must be odd (center channel plus pairs)")


@dataclass(frozen=True)
class CprSettings:
    kind: str = "mean_phase"  # "mean_phase" | "bps"
    window_symbols: int = 481
    test_phases: int = 64

    def __post_init__(self):
        if self.kind not in ("mean_phase", "bps"):
            raise ValueError("cpr kind must be 'mean_phase' or 'bps'")

    def bps_config(self) -> CprConfig:
        return CprConfig(window_symbols=self.window_symbols,
                         test_phases=self.test_phases)


@dataclass(frozen=True)
class ExperimentConfig:
    link: LinkConfig = field(default_factory=LinkConfig)
    pulse: PulseConfig = field(default_factory=lambda: PulseConfig(
        symbol_rate=46.5e9, rolloff=0.05, samples_per_symbol=2.0))
    wdm: WdmConfig = field(default_factory=WdmConfig)
    modulation: str = "u64qam"
    shaping: DmConfig | None = None
    selection: SelectionConfig | None = None
    dbp: DbpConfig = field(default_factory=DbpConfig)
    cpr: CprSettings = field(default_factory=CprSettings)
    linewidth_hz: float = 0.0
    power_sweep_dbm: tuple[float, ...] = tuple(float(p) for p in range(-4, 7))
    n_symbols: int = 2 ** 16
    master_seed: int = 1
    forward_plan: StepPlan = field(default_factory=StepPlan)
    sim_sps: int | None = None
    target_rate_bits_per_4d: float = 9.2

    def __post_init__(self):
        if self.modulation not in MODULATIONS:
            raise ValueError(f"unknown modulation {self.modulation!r}")

    @property
    def needs_selection(self) -> bool:
        return self.modulation in ("pas_ess_sel_bs", "pas_ess_sel_ideal")

    def effective_shaping(self) -> DmConfig | None:
        """Shaping config, with defaults filled from the target rate."""
        if self.modulation == "u64qam":
            return None
        if self.shaping is not None:
            return self.shaping
        amp_bits = (self.target_rate_bits_per_4d - 4.0) / 4.0
        if self.modulation == "pas_mb":
            return DmConfig(kind="mb_iid", block_len=1, k_bits=0,
                            nu=mb_fit_nu(amp_bits))
        block = 256
        return DmConfig(kind="ess", block_len=block,
                        k_bits=int(np.floor(block * amp_bits)))

    def effective_selection(self) -> SelectionConfig | None:
        if not self.needs_selection:
            return None
        if self.selection is not None:
            return self.selection
        if self.modulation == "pas_ess_sel_bs":
            model = DbpConfig(engine="cb_essfm", n_steps=30,
                              samples_per_symbol=1.125)
            return SelectionConfig(metric="nli_cbessfm", model=model)
        model = DbpConfig(engine="cb_essfm", n_steps=5 * self.link.n_spans,
                          samples_per_symbol=1.125)
        return SelectionConfig(metric="nli_ideal", model=model)

    def simulation_sps_effective(self) -> int:
        if self.sim_sps is not None:
            return self.sim_sps
        return simulation_sps(self.wdm.n_channels, self.wdm.spacing_hz, self.pulse)


@dataclass(frozen=True)
class ResultRecord:
    """One sweep point; field order matches the results CSV schema."""

    config_hash: str
    modulation: str
    power_dbm: float
    seed: int
    se_bits_s_hz: float
    air_4d: float
    effective_snr_db: float
    rm_per_2d: float
    wall_time_s: float
    air_2d: float = 0.0
    net_rate_bits_per_4d: float = 0.0
    selection_stats: dict | None = None

    def csv_row(self) -> list[str]:
        vals = [getattr(self, c) for c in CSV_COLUMNS]
        return [_fmt(v) for v in vals]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


# --------------------------------------------------------------------------
# canonical serialization


def _to_plain(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _to_plain(getattr(obj, f.name))
                for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return _to_plain(cfg)


def canonical_json(data) -> str:
    """Byte-deterministic JSON: sorted keys, repr-roundtrip floats."""
    def default(o):
        raise TypeError(f"not serializable: {o!r}")
    return json.dumps(data, sort_keys=True, separators=(",", ":"),
                      allow_nan=False, default=default)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(
        canonical_json(config_to_dict(cfg)).encode()).hexdigest()[:16]


def config_from_dict(data: dict) -> ExperimentConfig:
    d = dict(data)

    def sub(key, cls, **extra):
        if d.get(key) is not None:
            kwargs = dict(d[key])
            kwargs.update(extra)
            if "coeffs" in kwargs and kwargs["coeffs"] is not None:
                kwargs["coeffs"] = tuple(kwargs["coeffs"])
            if "composition" in kwargs and kwargs["composition"] is not None:
                kwargs["composition"] = tuple(kwargs["composition"])
            d[key] = cls(**kwargs)

    sub("link", LinkConfig)
    sub("pulse", PulseConfig)
    sub("wdm", WdmConfig)
    sub("shaping", DmConfig)
    if d.get("selection") is not None:
        sel = dict(d["selection"])
        if sel.get("model") is not None:
            mod = dict(sel["model"])
            if mod.get("coeffs") is not None:
                mod["coeffs"] = tuple(mod["coeffs"])
            sel["model"] = DbpConfig(**mod)
        d["selection"] = SelectionConfig(**sel)
    sub("dbp", DbpConfig)
    sub("cpr", CprSettings)
    sub("forward_plan", StepPlan)
    if "power_sweep_dbm" in d:
        d["power_sweep_dbm"] = tuple(float(p) for p in d["power_sweep_dbm"])
    return ExperimentConfig(**d)


# --------------------------------------------------------------------------
# validation


def validate_config(cfg: ExperimentConfig) -> list[str]:
    """Feasibility diagnostics; empty list means the config is runnable."""
    issues = []
    pulse, wdm = cfg.pulse, cfg.wdm
    sps = cfg.simulation_sps_effective()
    band = (wdm.n_channels - 1) * wdm.spacing_hz + pulse.occupied_bandwidth
    if sps * pulse.symbol_rate < band:
        issues.append(
            f"simulation rate {sps} samples/symbol does not cover the "
            f"{band / 1e9:.1f} GHz WDM band (aliasing)")
    if pulse.occupied_bandwidth > wdm.spacing_hz and wdm.n_channels > 1:
        issues.append("channel bandwidth exceeds the WDM spacing (overlap)")
    n = cfg.n_symbols
    for rate_name, rate in (("processing", cfg.dbp.samples_per_symbol),
                            ("simulation", float(sps))):
        if abs(n * rate - round(n * rate)) > 1e-9:
            issues.append(f"n_symbols * {rate_name} rate is not an integer")
    dm = cfg.effective_shaping()
    if dm is not None and dm.kind == "ess":
        if (4 * n) % dm.block_len:
            issues.append("4*n_symbols is not a multiple of the DM block length")
        if dm.k_bits > 2 * dm.block_len:
            issues.append("DM rate infeasible for the {1,3,5,7} alphabet")
    if cfg.needs_selection:
        sel = cfg.effective_selection()
        if dm is None or dm.kind != "ess":
            issues.append("sequence selection requires an ESS PAS base")
        if n % sel.seq_len_4d:
            issues.append("n_symbols is not a multiple of the selection frame")
        if sel.model.n_steps % cfg.link.n_spans and \
                cfg.link.n_spans % max(sel.model.n_steps, 1):
            issues.append("selection model steps incompatible with span count")
    elif cfg.selection is not None:
        issues.append(f"modulation {cfg.modulation} does not use selection")
    if cfg.dbp.engine != "cdc" and cfg.dbp.n_steps >= 1:
        ns, st = cfg.link.n_spans, cfg.dbp.n_steps
        if st % ns and ns % st:
            issues.append("dbp.n_steps incompatible with the span count")
    if cfg.dbp.engine != "cdc" and cfg.dbp.n_steps < 1:
        issues.append("backpropagation engines need n_steps >= 1")
    if cfg.cpr.kind == "bps":
        if cfg.cpr.window_symbols >= n:
            issues.append("BPS window not shorter than the sequence")
    elif cfg.linewidth_hz > 0:
        issues.append("warning: linewidth > 0 with mean-phase removal only")
    if not cfg.power_sweep_dbm:
        issues.append("warning: empty power sweep")
    return issues


# --------------------------------------------------------------------------
# transmit-side construction


@dataclass
class TxMeta:
    constellation: Constellation
    gross_rate_4d: float
    dm_rate_loss_4d: float
    sel_rate_loss_4d: float
    selection_stats: dict | None = None


_EMAX_MEMO: dict[tuple[int, int], int] = {}


def _ess_emax(block_len: int, k_bits: int) -> int:
    key = (block_len, k_bits)
    if key not in _EMAX_MEMO:
        _EMAX_MEMO[key] = ess_min_emax(block_len, k_bits)
    return _EMAX_MEMO[key]


def _empirical_constellation(symbols: np.ndarray, energy_per_2d: float) -> Constellation:
    """64-QAM grid at the frame scale with empirical priors from the data."""
    grid = qam64_points() / np.sqrt(energy_per_2d)
    flat = symbols.reshape(-1)
    idx = np.argmin(np.abs(flat[:, None] - grid[None, :]), axis=1)
    counts = np.bincount(idx, minlength=64).astype(float)
    return Constellation(grid, np.arange(64), counts / counts.sum())


def _amp_entropy_bits(amplitudes: np.ndarray) -> float:
    counts = np.array([np.sum(amplitudes == a) for a in AMPLITUDES], float)
    p = counts / counts.sum()
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def _tx_u64qam(n_4d: int, seed: int) -> tuple[np.ndarray, TxMeta]:
    rng = derive_rng(seed, "tx-u64")
    amps = np.asarray(AMPLITUDES)[rng.integers(0, 4, size=4 * n_4d)]
    signs = rng.integers(0, 2, size=4 * n_4d)
    sym = pas_map(amps, signs, energy_per_2d=42.0)
    const = shaped_qam64(np.full(4, 0.25))
    return sym, TxMeta(const, gross_rate_4d=12.0, dm_rate_loss_4d=0.0,
                       sel_rate_loss_4d=0.0)


def _tx_pas_mb(cfg: ExperimentConfig, seed: int) -> tuple[np.ndarray, TxMeta]:
    dm = cfg.effective_shaping()
    nu = dm.nu if dm.nu is not None else mb_fit_nu(
        (cfg.target_rate_bits_per_4d - 4.0) / 4.0)
    n_amp = 4 * cfg.n_symbols
    amps = mb_sample(nu, n_amp, derive_key(seed, "tx-mb"))
    signs = derive_rng(seed, "tx-mb-signs").integers(0, 2, size=n_amp)
    p_amp = mb_probs(nu)
    e2d = 2.0 * float(np.sum(p_amp * np.square(AMPLITUDES)))
    sym = pas_map(amps, signs, energy_per_2d=e2d)
    const = shaped_qam64(p_amp)
    h_amp = -np.sum(p_amp * np.log2(p_amp))
    gross = 4.0 + 4.0 * float(h_amp)
    return sym, TxMeta(const, gross_rate_4d=gross, dm_rate_loss_4d=0.0,
                       sel_rate_loss_4d=0.0)


def _ess_setup(cfg: ExperimentConfig):
    dm = cfg.effective_shaping()
    e_max = dm.e_max if dm.e_max is not None else _ess_emax(dm.block_len, dm.k_bits)
    codec = ess_codec(dm.block_len, e_max, cache_dir=_cache_dir(None))
    e2d = 2.0 * codec.codebook_mean_energy(dm.k_bits)
    return dm, codec, e2d


def _tx_pas_ess(cfg: ExperimentConfig, seed: int) -> tuple[np.ndarray, TxMeta]:
    dm, codec, e2d = _ess_setup(cfg)
    n_4d = cfg.n_symbols
    budget = frame_bit_budget(n_4d, dm)
    bits = derive_rng(seed, "tx-ess-bits").integers(0, 2, size=budget).astype(np.uint8)
    frame = build_pas_frame(bits, codec, dm.k_bits, n_4d, e2d)
    const = _empirical_constellation(frame.symbols_4d, e2d)
    h_amp = _amp_entropy_bits(frame.amplitude_blocks.reshape(-1))
    dm_loss = 4.0 * max(h_amp - dm.k_bits / dm.block_len, 0.0)
    return frame.symbols_4d, TxMeta(const, gross_rate_4d=frame.net_rate_bits_per_4d,
                                    dm_rate_loss_4d=dm_loss, sel_rate_loss_4d=0.0)


_METRIC_MODEL_MEMO: dict[str, tuple] = {}


def _metric_model_for(cfg: ExperimentConfig, sel: SelectionConfig,
                      power_dbm: float, codec, dm, e2d,
                      cache_dir=None) -> DbpConfig:
    """Metric forward model; the coarse CB-ESSFM variant is trained (cached)."""
    if sel.metric != "nli_cbessfm" or sel.model.coeffs is not None:
        return sel.model
    core = {
        "link": _to_plain(cfg.link), "pulse": _to_plain(cfg.pulse),
        "model": _to_plain(sel.model), "power": float(power_dbm),
        "dm": _to_plain(dm),
    }
    digest = hashlib.sha256(canonical_json(core).encode()).hexdigest()[:24]
    if digest in _METRIC_MODEL_MEMO:
        coeffs, split = _METRIC_MODEL_MEMO[digest]
        return replace(sel.model, coeffs=coeffs, split_ratio=split)
    cdir = _cache_dir(cache_dir)
    path = None
    if cdir is not None:
        path = Path(cdir) / "metric-model" / f"{digest}.json"
        if path.exists():
            data = json.loads(path.read_text())
            coeffs, split = tuple(data["coeffs"]), float(data["split_ratio"])
            _METRIC_MODEL_MEMO[digest] = (coeffs, split)
            return replace(sel.model, coeffs=coeffs, split_ratio=split)
    n_train = 2048
    bits = derive_rng(0xC0FFEE, "metric-train", digest).integers(
        0, 2, size=frame_bit_budget(n_train, dm)).astype(np.uint8)
    train_sym = build_pas_frame(bits, codec, dm.k_bits, n_train, e2d).symbols_4d
    trained = train_metric_model(train_sym, cfg.link, power_dbm, sel.model,
                                 cfg.pulse)
    _METRIC_MODEL_MEMO[digest] = (trained.coeffs, trained.split_ratio)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(path, json.dumps({"coeffs": list(trained.coeffs),
                                        "split_ratio": trained.split_ratio}))
    return trained


def _tx_pas_ess_selected(cfg: ExperimentConfig, power_dbm: float,
                         seed: int, cache_dir=None) -> tuple[np.ndarray, TxMeta]:
    dm, codec, e2d = _ess_setup(cfg)
    sel = cfg.effective_selection()
    n_frame = sel.seq_len_4d
    if cfg.n_symbols % n_frame:
        raise ValueError("n_symbols must be a multiple of the selection frame")
    n_frames = cfg.n_symbols // n_frame
    budget = frame_bit_budget(n_frame, dm)
    info_len = budget - sel.index_bits
    model = _metric_model_for(cfg, sel, power_dbm, codec, dm, e2d, cache_dir)

    def encode_frame(bits):
        return build_pas_frame(bits, codec, dm.k_bits, n_frame, e2d).symbols_4d

    # Deterministic warm-up block serves as the context of the first frame.
    warm_bits = derive_rng(seed, "sel-warmup").integers(
        0, 2, size=budget).astype(np.uint8)
    context = encode_frame(warm_bits)[:, -sel.context_len_4d:]

    rng_bits = derive_rng(seed, "tx-sel-bits")
    mask_seed = derive_key(seed, "sel-masks")
    chosen = np.empty(n_frames, dtype=int)
    gains = np.empty(n_frames)
    sel_metric = np.empty(n_frames)
    base_metric = np.empty(n_frames)
    out = []
    for fr in range(n_frames):
        info = rng_bits.integers(0, 2, size=info_len).astype(np.uint8)
        cset = generate_candidates(info, encode_frame, sel, mask_seed)
        metrics = np.empty(sel.n_candidates)
        for i in range(sel.n_candidates):
            if sel.metric == "energy_var":
                metrics[i] = metric_energy_var(cset.symbols[i], sel.energy_window)
            else:
                metrics[i] = metric_nli(cset.symbols[i], context, cfg.link,
                                        power_dbm, model, cfg.pulse)
        cset = replace(cset, metrics=metrics)
        idx, seq = select(cset)
        chosen[fr] = idx
        sel_metric[fr] = metrics[idx]
        base_metric[fr] = metrics[0]
        gains[fr] = metrics[0] - metrics[idx]
        out.append(seq)
        context = seq[:, -sel.context_len_4d:]
    sym = np.concatenate(out, axis=1)
    const = _empirical_constellation(sym, e2d)
    amps = np.abs(np.concatenate(
        [sym.real.reshape(-1), sym.imag.reshape(-1)])) * np.sqrt(e2d)
    h_amp = _amp_entropy_bits(np.rint(amps).astype(int))
    dm_loss = 4.0 * max(h_amp - dm.k_bits / dm.block_len, 0.0)
    gross = 4.0 + 4.0 * dm.k_bits / dm.block_len
    stats = {
        "chosen_index_hist": np.bincount(chosen, minlength=sel.n_candidates).tolist(),
        "selected_metric_mean": float(np.mean(sel_metric)),
        "candidate0_metric_mean": float(np.mean(base_metric)),
        "selected_metrics": sel_metric.tolist(),
        "candidate0_metrics": base_metric.tolist(),
        "frames_improved": int(np.sum(gains > 0)),
        "n_frames": int(n_frames),
    }
    return sym, TxMeta(const, gross_rate_4d=gross, dm_rate_loss_4d=dm_loss,
                       sel_rate_loss_4d=rate_loss(sel), selection_stats=stats)


def _tx_digest(cfg: ExperimentConfig, power_dbm: float, seed: int) -> str:
    """Digest over the TX-side configuration only (selection is power-aware)."""
    core = {
        "modulation": cfg.modulation,
        "n_symbols": cfg.n_symbols,
        "target_rate": cfg.target_rate_bits_per_4d,
        "shaping": _to_plain(cfg.effective_shaping()),
        "selection": _to_plain(cfg.effective_selection()),
        "link": _to_plain(cfg.link) if cfg.needs_selection else None,
        "pulse": _to_plain(cfg.pulse),
        "power": float(power_dbm) if cfg.needs_selection else None,
        "seed": int(seed),
    }
    return hashlib.sha256(canonical_json(core).encode()).hexdigest()[:24]


def build_tx_cached(cfg: ExperimentConfig, power_dbm: float, seed: int,
                    cache_dir=None) -> tuple[np.ndarray, TxMeta]:
    """Disk-cached TX builder; selection searches are reused across RX configs."""
    cdir = _cache_dir(cache_dir)
    if cdir is None or not cfg.needs_selection:
        return build_tx(cfg, power_dbm, seed, cache_dir)
    path = Path(cdir) / "tx" / f"{_tx_digest(cfg, power_dbm, seed)}.npz"
    if path.exists():
        data = np.load(path, allow_pickle=True)
        meta = TxMeta(
            constellation=Constellation(data["points"], np.arange(64),
                                        data["priors"]),
            gross_rate_4d=float(data["gross"]),
            dm_rate_loss_4d=float(data["dm_loss"]),
            sel_rate_loss_4d=float(data["sel_loss"]),
            selection_stats=json.loads(str(data["stats"])))
        return data["symbols"], meta
    sym, meta = build_tx(cfg, power_dbm, seed, cache_dir)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npz")
    np.savez_compressed(
        tmp, symbols=sym, points=meta.constellation.points,
        priors=meta.constellation.priors, gross=meta.gross_rate_4d,
        dm_loss=meta.dm_rate_loss_4d, sel_loss=meta.sel_rate_loss_4d,
        stats=json.dumps(meta.selection_stats))
    tmp.replace(path)
    return sym, meta


def build_tx(cfg: ExperimentConfig, power_dbm: float, seed: int,
             cache_dir=None) -> tuple[np.ndarray, TxMeta]:
    """Transmit symbols (unit-energy scale) plus rate/prior metadata."""
    if cfg.modulation == "u64qam":
        return _tx_u64qam(cfg.n_symbols, seed)
    if cfg.modulation == "pas_mb":
        return _tx_pas_mb(cfg, seed)
    if cfg.modulation == "pas_ess":
        return _tx_pas_ess(cfg, seed)
    return _tx_pas_ess_selected(cfg, power_dbm, seed, cache_dir)


# --------------------------------------------------------------------------
# ESSFM training (cached per link/power/engine geometry)


_TRAIN_MEMO: dict[str, tuple] = {}


def _train_digest(cfg: ExperimentConfig, power_dbm: float, seed: int) -> str:
    core = {
        "link": _to_plain(cfg.link),
        "pulse": _to_plain(cfg.pulse),
        "wdm": _to_plain(cfg.wdm),
        "engine": cfg.dbp.engine,
        "n_steps": cfg.dbp.n_steps,
        "n_coeffs": cfg.dbp.n_coeffs,
        "sps": cfg.dbp.samples_per_symbol,
        "split": cfg.dbp.split_ratio,
        "forward": _to_plain(cfg.forward_plan),
        "sim_sps": cfg.simulation_sps_effective(),
        "power": float(power_dbm),
        "seed": int(seed),
        "n_train": _TRAIN_SYMBOLS,
    }
    return hashlib.sha256(canonical_json(core).encode()).hexdigest()[:24]


def trained_dbp_config(cfg: ExperimentConfig, power_dbm: float, seed: int,
                       cache_dir: str | Path | None = None) -> DbpConfig:
    """Return the DBP config with trained ESSFM coefficients filled in.

    Training propagates 2^14 known uniform-64QAM symbols through the
    configured link at the operating power and fits the coefficient vector
    (and the split ratio for cb_essfm) by Powell descent.  Results are
    memoized in-process and on disk.
    """
    if cfg.dbp.coeffs is not None:
        return cfg.dbp
    digest = _train_digest(cfg, power_dbm, seed)
    if digest in _TRAIN_MEMO:
        coeffs, split = _TRAIN_MEMO[digest]
        return replace(cfg.dbp, coeffs=coeffs, split_ratio=split)
    cdir = _cache_dir(cache_dir)
    path = None
    if cdir is not None:
        path = Path(cdir) / "essfm" / f"{digest}.json"
        if path.exists():
            data = json.loads(path.read_text())
            coeffs = tuple(data["coeffs"])
            split = float(data["split_ratio"])
            _TRAIN_MEMO[digest] = (coeffs, split)
            return replace(cfg.dbp, coeffs=coeffs, split_ratio=split)

    train_cfg = replace(cfg, n_symbols=_TRAIN_SYMBOLS, modulation="u64qam",
                        shaping=None, selection=None)
    tx_sym, _ = _tx_u64qam(_TRAIN_SYMBOLS, derive_key(seed, "essfm-train"))
    rx, scale, _ = _propagate(train_cfg, tx_sym, power_dbm,
                              derive_key(seed, "essfm-train-chan"))
    result = train_essfm(tx_sym * scale, rx, cfg.link, cfg.dbp, cfg.pulse)
    coeffs, split = result.coeffs, result.split_ratio
    _TRAIN_MEMO[digest] = (coeffs, split)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(path, json.dumps({
            "coeffs": list(coeffs), "split_ratio": split, "mse": result.mse,
            "converged": result.converged, "n_evals": result.n_evals}))
    return replace(cfg.dbp, coeffs=coeffs, split_ratio=split)


# --------------------------------------------------------------------------
# the pipeline


def _propagate(cfg: ExperimentConfig, tx_sym: np.ndarray, power_dbm: float,
               seed: int) -> tuple[Signal, float, int]:
    """TX waveform -> WDM comb -> fiber -> demuxed processing-rate signal.

    Returns (rx_signal, launch_scale, sim_sps); launch_scale is the exact
    field scale applied by set_power, used to refer received symbols back to
    the unit-energy constellation grid.
    """
    sps = cfg.simulation_sps_effective()
    pulse = cfg.pulse
    center = rrc_shape(tx_sym, pulse, samples_per_symbol=float(sps))
    center = apply_phase_noise(center, cfg.linewidth_hz, derive_key(seed, "tx-pn"))
    p0 = mean_power(center)
    launched = set_power(center, power_dbm)
    scale = float(np.sqrt(dbm_to_watt(power_dbm) / p0))

    chans = [(launched, 0.0)]
    half = cfg.wdm.n_channels // 2
    for c in range(-half, half + 1):
        if c == 0:
            continue
        sym_i, _ = _tx_u64qam(cfg.n_symbols, derive_key(seed, "interferer", c))
        wave = rrc_shape(sym_i, pulse, samples_per_symbol=float(sps))
        wave = apply_phase_noise(wave, cfg.linewidth_hz,
                                 derive_key(seed, "tx-pn-intf", c))
        chans.append((set_power(wave, power_dbm), c * cfg.wdm.spacing_hz))
    comb = wdm_mux(chans, channel_bandwidth=pulse.occupied_bandwidth)

    out = ssfm_forward(comb, cfg.link, cfg.forward_plan, derive_key(seed, "link"))
    rx = wdm_demux(out, 0.0, pulse, out_sps=cfg.dbp.samples_per_symbol)
    rx = apply_phase_noise(rx, cfg.linewidth_hz, derive_key(seed, "rx-pn"))
    return rx, scale, sps


def _equalize(cfg: ExperimentConfig, rx: Signal, power_dbm: float, seed: int,
              cache_dir=None) -> Signal:
    eng = cfg.dbp.engine
    if eng == "cdc":
        return cdc(rx, cfg.link)
    if eng == "ssfm":
        return dbp_ssfm(rx, cfg.link, cfg.dbp)
    dcfg = trained_dbp_config(cfg, power_dbm, seed, cache_dir)
    return essfm_backprop(rx, cfg.link, dcfg)


def run_point(cfg: ExperimentConfig, power_dbm: float, seed: int | None = None,
              cache_dir: str | Path | None = None,
              use_cache: bool = True) -> ResultRecord:
    """Execute one (config, power, seed) point of the TX->channel->RX chain."""
    if seed is None:
        seed = cfg.master_seed
    if not np.isfinite(power_dbm):
        raise ValueError(f"launch power must be finite, got {power_dbm!r}")
    issues = [m for m in validate_config(cfg) if not m.startswith("warning")]
    if issues:
        raise ValueError("infeasible config: " + "; ".join(issues))
    chash = config_hash(cfg)
    cdir = _cache_dir(cache_dir)
    key = None
    if cdir is not None and use_cache:
        # persist the config snapshot so any record is reproducible from
        # (config_hash -> snapshot, power, seed)
        snap = Path(cdir) / "configs" / f"{chash}.json"
        if not snap.exists():
            snap.parent.mkdir(parents=True, exist_ok=True)
            _atomic_write(snap, canonical_json(config_to_dict(cfg)))
        key = hashlib.sha256(
            f"{chash}|{float(power_dbm)!r}|{seed}".encode()).hexdigest()[:24]
        path = Path(cdir) / "points" / f"{key}.json"
        if path.exists():
            t0 = time.perf_counter()
            data = json.loads(path.read_text())
            data["wall_time_s"] = time.perf_counter() - t0
            return ResultRecord(**data)

    t0 = time.perf_counter()
    tx_sym, meta = build_tx_cached(cfg, power_dbm, seed, cache_dir)
    rx_sig, scale, _ = _propagate(cfg, tx_sym, power_dbm, seed)
    eq = _equalize(cfg, rx_sig, power_dbm, seed, cache_dir)
    rx_sym = matched_filter_sample(eq, cfg.pulse) / scale
    if cfg.cpr.kind == "bps":
        rx_sym, _ = bps_cpr(rx_sym, meta.constellation, cfg.cpr.bps_config())
    rx_sym = mean_phase_remove(rx_sym, tx_sym)

    report = air_estimate(
        rx_sym, tx_sym, meta.constellation,
        dm_rate_loss_4d=meta.dm_rate_loss_4d,
        sel_rate_loss_4d=meta.sel_rate_loss_4d,
        gross_rate_4d=meta.gross_rate_4d,
        symbol_rate=cfg.pulse.symbol_rate,
        channel_spacing=cfg.wdm.spacing_hz)
    rm2d = complexity_rm2d(cfg.dbp, cfg.link,
                           symbol_rate=cfg.pulse.symbol_rate).rm_per_2d
    rec = ResultRecord(
        config_hash=chash, modulation=cfg.modulation,
        power_dbm=float(power_dbm), seed=int(seed),
        se_bits_s_hz=report.se_bits_s_hz, air_4d=report.air_bits_per_4d,
        effective_snr_db=report.effective_snr_db, rm_per_2d=float(rm2d),
        wall_time_s=time.perf_counter() - t0,
        air_2d=report.air_bits_per_2d,
        net_rate_bits_per_4d=report.net_rate_bits_per_4d,
        selection_stats=meta.selection_stats)
    if cdir is not None and use_cache and key is not None:
        path = Path(cdir) / "points" / f"{key}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(path, json.dumps(dataclasses.asdict(rec)))
    return rec


def run_sweep(cfg: ExperimentConfig, powers: list[float] | None = None,
              seeds: list[int] | None = None,
              cache_dir: str | Path | None = None,
              jobs: int = 1, use_cache: bool = True
              ) -> tuple[list[ResultRecord], list[dict]]:
    """Run the launch-power grid; returns (records, per-point failures)."""
    if powers is None:
        powers = list(cfg.power_sweep_dbm)
    if seeds is None:
        seeds = [cfg.master_seed]
    tasks = [(p, s) for s in seeds for p in powers]
    records, failures = [], []
    if jobs > 1 and len(tasks) > 1:
        import concurrent.futures as cf
        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {pool.submit(run_point, cfg, p, s, cache_dir, use_cache): (p, s)
                    for p, s in tasks}
            for fut in cf.as_completed(futs):
                p, s = futs[fut]
                try:
                    records.append(fut.result())
                except Exception as exc:  # noqa: BLE001 - recorded per point
                    failures.append({"power_dbm": p, "seed": s, "error": str(exc)})
        records.sort(key=lambda r: (r.seed, r.power_dbm))
    else:
        for p, s in tasks:
            try:
                records.append(run_point(cfg, p, s, cache_dir, use_cache))
            except Exception as exc:  # noqa: BLE001
                failures.append({"power_dbm": p, "seed": s, "error": str(exc)})
    return records, failures


def run_step_sweep(cfg: ExperimentConfig, step_grid: list[int],
                   powers: list[float] | None = None,
                   cache_dir: str | Path | None = None, jobs: int = 1
                   ) -> tuple[list[dict], list[ResultRecord]]:
    """Peak SE versus DBP complexity: one power sweep per step count.

    For each entry of ``step_grid`` the configured backpropagation engine is
    run with that total step count (0 selects plain CDC), the launch-power
    sweep is executed, and the parabola-refined peak is recorded against the
    engine's RM/2D cost.  Returns (series rows, all point records).
    """
    series = []
    all_records = []
    for n_steps in step_grid:
        if n_steps == 0:
            dbp = replace(cfg.dbp, engine="cdc", n_steps=0, coeffs=None)
        else:
            dbp = replace(cfg.dbp, n_steps=n_steps, coeffs=None)
        point_cfg = replace(cfg, dbp=dbp)
        records, failures = run_sweep(point_cfg, powers=powers,
                                      cache_dir=cache_dir, jobs=jobs)
        if failures or not records:
            series.append({"n_steps": n_steps, "error": failures})
            continue
        p_star, se_star = peak_se(records)
        series.append({
            "n_steps": n_steps,
            "rm_per_2d": records[0].rm_per_2d,
            "peak_se_bits_s_hz": se_star,
            "peak_power_dbm": p_star,
        })
        all_records.extend(records)
    return series, all_records


def peak_se(records: list[ResultRecord]) -> tuple[float, float]:
    """(power, SE) at the sweep peak, parabola-refined over the top 3 points."""
    if not records:
        raise ValueError("no records")
    recs = sorted(records, key=lambda r: r.power_dbm)
    se = np.array([r.se_bits_s_hz for r in recs])
    p = np.array([r.power_dbm for r in recs])
    k = int(np.argmax(se))
    if k == 0 or k == len(se) - 1 or len(se) < 3:
        return float(p[k]), float(se[k])
    x, y = p[k - 1: k + 2], se[k - 1: k + 2]
    denom = (x[0] - x[1]) * (x[0] - x[2]) * (x[1] - x[2])
    a = (x[2] * (y[1] - y[0]) + x[1] * (y[0] - y[2]) + x[0] * (y[2] - y[1])) / denom
    b = (x[2] ** 2 * (y[0] - y[1]) + x[1] ** 2 * (y[2] - y[0])
         + x[0] ** 2 * (y[1] - y[2])) / denom
    if a >= 0:
        return float(p[k]), float(se[k])
    xv = -b / (2 * a)
    xv = float(np.clip(xv, x[0], x[2]))
    c = y[0] - a * x[0] ** 2 - b * x[0]
    return xv, float(a * xv ** 2 + b * xv + c)


def emit_report(records: list[ResultRecord], out_dir: str | Path,
                failures: list[dict] | None = None) -> list[Path]:
    """Write results.csv (stable schema) plus per-modulation series files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    rows = sorted(records, key=lambda r: (r.modulation, r.config_hash,
                                          r.seed, r.power_dbm))
    csv_path = out / "results.csv"
    lines = [",".join(CSV_COLUMNS)]
    lines += [",".join(r.csv_row()) for r in rows]
    _atomic_write(csv_path, "\n".join(lines) + "\n")
    written.append(csv_path)

    series = {}
    for r in rows:
        series.setdefault((r.modulation, r.config_hash), []).append(r)
    summary = {}
    for (mod, chash), recs in series.items():
        name = f"series_{mod}_{chash}.csv"
        body = ["power_dbm,se_bits_s_hz,effective_snr_db,air_4d"]
        for r in sorted(recs, key=lambda r: r.power_dbm):
            body.append(f"{r.power_dbm!r},{r.se_bits_s_hz!r},"
                        f"{r.effective_snr_db!r},{r.air_4d!r}")
        path = out / name
        _atomic_write(path, "\n".join(body) + "\n")
        written.append(path)
        p_star, se_star = peak_se(recs)
        summary[f"{mod}_{chash}"] = {
            "peak_power_dbm": p_star, "peak_se_bits_s_hz": se_star,
            "rm_per_2d": recs[0].rm_per_2d,
            "selection_stats": recs[0].selection_stats,
        }
    spath = out / "summary.json"
    _atomic_write(spath, json.dumps(summary, indent=2, sort_keys=True))
    written.append(spath)

    sel_rows = [r for r in rows if r.selection_stats]
    if sel_rows:
        body = ["config_hash,power_dbm,seed,n_frames,frames_improved,"
                "selected_metric_mean,candidate0_metric_mean,"
                "chosen_index_hist"]
        for r in sel_rows:
            st = r.selection_stats
            hist = " ".join(str(c) for c in st["chosen_index_hist"])
            body.append(f"{r.config_hash},{r.power_dbm!r},{r.seed},"
                        f"{st['n_frames']},{st['frames_improved']},"
                        f"{st['selected_metric_mean']!r},"
                        f"{st['candidate0_metric_mean']!r},{hist}")
        path = out / "selection_stats.csv"
        _atomic_write(path, "\n".join(body) + "\n")
        written.append(path)
    if failures:
        fpath = out / "failures.json"
        _atomic_write(fpath, json.dumps(failures, indent=2))
        written.append(fpath)
    return written


# --------------------------------------------------------------------------
# cache plumbing


def _cache_dir(explicit) -> Path | None:
    if explicit is not None:
        return Path(explicit)
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else None


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)
