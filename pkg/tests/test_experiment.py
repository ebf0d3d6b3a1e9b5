"""Experiment driver tests: config canon, validation, pipeline, cache, CLI."""

import dataclasses
import json

import pytest

import fiberlab as fl
from fiberlab import cli
from fiberlab.dbp import DbpConfig
from fiberlab.experiment import (CSV_COLUMNS, ExperimentConfig, ResultRecord,
                                 WdmConfig, CprSettings, config_from_dict,
                                 config_hash, config_to_dict, emit_report,
                                 peak_se, run_point, run_sweep,
                                 validate_config)
from fiberlab.seqsel import SelectionConfig
from fiberlab.shaping import DmConfig


def mini_config(**over):
    base = dict(
        link=fl.LinkConfig(n_spans=1, span_km=100.0),
        forward_plan=fl.StepPlan(steps_per_span=16),
        n_symbols=2 ** 12,
        power_sweep_dbm=(0.0,),
        master_seed=11,
    )
    base.update(over)
    return ExperimentConfig(**base)


class TestConfigCanon:
    def test_hash_stable_across_objects(self):
        a, b = mini_config(), mini_config()
        assert config_hash(a) == config_hash(b)

    def test_hash_sensitive_to_fields(self):
        assert config_hash(mini_config()) != config_hash(
            mini_config(master_seed=12))

    def test_dict_roundtrip(self):
        cfg = mini_config(modulation="pas_ess",
                          shaping=DmConfig(kind="ess", block_len=64, k_bits=83),
                          dbp=DbpConfig(engine="ssfm", n_steps=1))
        back = config_from_dict(json.loads(json.dumps(config_to_dict(cfg))))
        assert config_hash(back) == config_hash(cfg)
        assert back == cfg

    def test_selection_roundtrip(self):
        sel = SelectionConfig(n_candidates=8, seq_len_4d=64, context_len_4d=64,
                              model=DbpConfig(engine="cb_essfm", n_steps=1,
                                              samples_per_symbol=1.125))
        cfg = mini_config(modulation="pas_ess_sel_bs",
                          shaping=DmConfig(kind="ess", block_len=64, k_bits=83),
                          selection=sel)
        back = config_from_dict(json.loads(json.dumps(config_to_dict(cfg))))
        assert back == cfg


class TestValidate:
    def test_clean_config_passes(self):
        assert validate_config(mini_config()) == []

    def test_warns_empty_powers(self):
        issues = validate_config(mini_config(power_sweep_dbm=()))
        assert any("empty power sweep" in m for m in issues)

    def test_rejects_selection_without_pas(self):
        sel = SelectionConfig(n_candidates=8, seq_len_4d=64,
                              model=DbpConfig(engine="cb_essfm", n_steps=1))
        cfg = mini_config(selection=sel)
        assert any("does not use selection" in m for m in validate_config(cfg))

    def test_rejects_bad_dbp_steps(self):
        cfg = mini_config(link=fl.LinkConfig(n_spans=3),
                          dbp=DbpConfig(engine="ssfm", n_steps=2))
        assert any("incompatible" in m for m in validate_config(cfg))

    def test_rejects_bps_window_too_long(self):
        cfg = mini_config(cpr=CprSettings(kind="bps", window_symbols=4097),
                          n_symbols=2 ** 12)
        assert any("BPS window" in m for m in validate_config(cfg))

    def test_warns_linewidth_without_bps(self):
        cfg = mini_config(linewidth_hz=100e3)
        assert any(m.startswith("warning") for m in validate_config(cfg))

    def test_rejects_nonodd_wdm(self):
        with pytest.raises(ValueError):
            WdmConfig(n_channels=2)


class TestRunPoint:
    def test_deterministic_records(self):
        cfg = mini_config()
        a = run_point(cfg, 0.0, seed=3)
        b = run_point(cfg, 0.0, seed=3)
        da, db = dataclasses.asdict(a), dataclasses.asdict(b)
        da.pop("wall_time_s"), db.pop("wall_time_s")
        assert da == db

    def test_seed_changes_results(self):
        cfg = mini_config()
        a = run_point(cfg, 0.0, seed=3)
        b = run_point(cfg, 0.0, seed=4)
        assert a.effective_snr_db != b.effective_snr_db

    def test_noiseless_linear_chain_saturates(self):
        cfg = mini_config(link=fl.LinkConfig(n_spans=1, gamma_w_km=0.0,
                                             nf_db=None))
        rec = run_point(cfg, 0.0, seed=1)
        # AIR limited only by numerics: SE pinned at the 12-bit ceiling
        assert rec.effective_snr_db == 60.0
        assert rec.se_bits_s_hz == pytest.approx(12.0 * 46.5 / 50.0, rel=1e-6)

    def test_infeasible_config_rejected(self):
        cfg = mini_config(link=fl.LinkConfig(n_spans=3),
                          dbp=DbpConfig(engine="ssfm", n_steps=2))
        with pytest.raises(ValueError):
            run_point(cfg, 0.0, seed=1)

    def test_cache_roundtrip(self, tmp_path):
        cfg = mini_config()
        first = run_point(cfg, 0.0, seed=5, cache_dir=tmp_path)
        again = run_point(cfg, 0.0, seed=5, cache_dir=tmp_path)
        assert again.wall_time_s < 0.25  # served from cache
        assert again.se_bits_s_hz == first.se_bits_s_hz
        assert list((tmp_path / "points").glob("*.json"))

    def test_bps_pipeline_runs(self):
        cfg = mini_config(linewidth_hz=100e3,
                          cpr=CprSettings(kind="bps", window_symbols=481),
                          n_symbols=2 ** 12)
        rec = run_point(cfg, 0.0, seed=2)
        assert rec.effective_snr_db > 15.0


class TestSweepAndReport:
    def test_sweep_grid_and_report(self, tmp_path):
        cfg = mini_config(power_sweep_dbm=(-2.0, 0.0, 2.0))
        records, failures = run_sweep(cfg, cache_dir=tmp_path)
        assert not failures
        assert [r.power_dbm for r in records] == [-2.0, 0.0, 2.0]
        files = emit_report(records, tmp_path / "out")
        csv = (tmp_path / "out" / "results.csv").read_text().splitlines()
        assert csv[0] == ",".join(CSV_COLUMNS)
        assert len(csv) == 4
        assert (tmp_path / "out" / "summary.json").exists()

    def test_empty_sweep_is_empty(self):
        cfg = mini_config(power_sweep_dbm=())
        records, failures = run_sweep(cfg)
        assert records == [] and failures == []

    def test_parallel_sweep_matches_serial(self, tmp_path):
        cfg = mini_config(power_sweep_dbm=(0.0, 1.0))
        serial, _ = run_sweep(cfg, use_cache=False)
        parallel, fails = run_sweep(cfg, jobs=2, use_cache=False)
        assert not fails
        key = lambda r: (r.seed, r.power_dbm)
        for a, b in zip(sorted(serial, key=key), sorted(parallel, key=key)):
            assert a.se_bits_s_hz == b.se_bits_s_hz
            assert a.effective_snr_db == b.effective_snr_db

    def test_cache_stores_config_snapshot(self, tmp_path):
        cfg = mini_config()
        run_point(cfg, 0.0, seed=5, cache_dir=tmp_path)
        snap = tmp_path / "configs" / f"{config_hash(cfg)}.json"
        assert snap.exists()
        back = config_from_dict(json.loads(snap.read_text()))
        assert config_hash(back) == config_hash(cfg)

    def test_partial_failure_recorded(self, tmp_path):
        cfg = mini_config()
        records, failures = run_sweep(cfg, powers=[0.0, float("nan")])
        assert len(records) == 1
        assert len(failures) == 1

    def test_two_modulation_series(self, tmp_path):
        recs = []
        for mod in ("u64qam", "pas_mb"):
            cfg = mini_config(modulation=mod, power_sweep_dbm=(0.0, 1.0))
            r, f = run_sweep(cfg, cache_dir=tmp_path)
            assert not f
            recs.extend(r)
        out = tmp_path / "rep"
        emit_report(recs, out)
        series = sorted(p.name for p in out.glob("series_*.csv"))
        assert len(series) == 2
        grids = []
        for name in series:
            rows = (out / name).read_text().splitlines()[1:]
            grids.append([float(r.split(",")[0]) for r in rows])
        assert grids[0] == grids[1] == [0.0, 1.0]

    def test_peak_se_parabolic(self):
        recs = [ResultRecord("h", "u64qam", p, 1, se, 0, 0, 0, 0)
                for p, se in [(0.0, 1.0), (1.0, 3.0), (2.0, 2.5)]]
        p_star, se_star = peak_se(recs)
        assert 1.0 < p_star < 2.0
        assert se_star >= 3.0

    def test_peak_se_edge_unrefined(self):
        recs = [ResultRecord("h", "u64qam", p, 1, se, 0, 0, 0, 0)
                for p, se in [(0.0, 3.0), (1.0, 2.0), (2.0, 1.0)]]
        assert peak_se(recs) == (0.0, 3.0)

    def test_step_sweep_series(self, tmp_path):
        from fiberlab.experiment import run_step_sweep
        cfg = mini_config(dbp=DbpConfig(engine="ssfm", n_steps=1,
                                        samples_per_symbol=1.125),
                          power_sweep_dbm=(0.0, 2.0, 4.0))
        series, records = run_step_sweep(cfg, [0, 1], cache_dir=tmp_path)
        assert [s["n_steps"] for s in series] == [0, 1]
        assert series[0]["rm_per_2d"] < series[1]["rm_per_2d"]
        assert all("peak_se_bits_s_hz" in s for s in series)
        assert len(records) == 6

    def test_selection_stats_csv(self, tmp_path):
        rec = ResultRecord("h", "pas_ess_sel_bs", 1.0, 2, 3.0, 4.0, 5.0, 6.0,
                           7.0, selection_stats={
                               "chosen_index_hist": [1, 2],
                               "selected_metric_mean": 0.5,
                               "candidate0_metric_mean": 0.9,
                               "frames_improved": 3, "n_frames": 3,
                               "selected_metrics": [], "candidate0_metrics": []})
        files = emit_report([rec], tmp_path)
        stats = (tmp_path / "selection_stats.csv").read_text().splitlines()
        assert stats[0].startswith("config_hash,power_dbm")
        assert "1 2" in stats[1]


class TestCli:
    def test_validate_ok(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(config_to_dict(mini_config())))
        rc = cli.main(["validate", "--config", str(cfg_path)])
        assert rc == 0
        assert "OK" in capsys.readouterr().out

    def test_validate_rejects(self, tmp_path, capsys):
        bad = config_to_dict(mini_config(
            link=fl.LinkConfig(n_spans=3),
            dbp=DbpConfig(engine="ssfm", n_steps=2)))
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text(json.dumps(bad))
        assert cli.main(["validate", "--config", str(cfg_path)]) == 1

    def test_run_and_report(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(config_to_dict(mini_config())))
        out = tmp_path / "out"
        rc = cli.main(["run", "--config", str(cfg_path), "--out", str(out),
                       "--powers", "0.0,1.0", "--cache-dir",
                       str(tmp_path / "cache")])
        assert rc == 0
        assert (out / "results.csv").exists()
        rep = tmp_path / "rep"
        rc = cli.main(["report", "--in", str(out / "results.csv"),
                       "--out", str(rep)])
        assert rc == 0
        assert (rep / "results.csv").exists()
        assert (rep / "summary.json").exists()

    def test_run_empty_powers_warns(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(config_to_dict(
            mini_config(power_sweep_dbm=()))))
        rc = cli.main(["run", "--config", str(cfg_path),
                       "--out", str(tmp_path / "o")])
        assert rc == 0
        assert "empty power sweep" in capsys.readouterr().out


class TestInterfaces:
    def test_csv_schema_frozen(self):
        assert CSV_COLUMNS == ("config_hash", "modulation", "power_dbm",
                               "seed", "se_bits_s_hz", "air_4d",
                               "effective_snr_db", "rm_per_2d", "wall_time_s")

    def test_record_row_matches_schema(self):
        rec = ResultRecord("h", "u64qam", 1.0, 2, 3.0, 4.0, 5.0, 6.0, 7.0)
        row = rec.csv_row()
        assert len(row) == len(CSV_COLUMNS)
        assert row[0] == "h" and row[1] == "u64qam"
