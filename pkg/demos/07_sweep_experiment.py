"""Launch-power sweep through the experiment driver (miniature link).

Sweeps uniform 64-QAM and MB-shaped PAS over power on a 4-span link and
writes results.csv + per-modulation series files, demonstrating the cache
(rerun the script: every point returns in milliseconds).

The same flow scales to the full 30x100 km study; see the README for the
equivalent CLI invocation.
Run:  python demos/07_sweep_experiment.py [out_dir]
"""

import sys
import time
from pathlib import Path

import fiberlab as fl
from fiberlab.experiment import (ExperimentConfig, emit_report, peak_se,
                                 run_sweep)

out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_sweep_out")
cache = out_dir / "cache"

records = []
for modulation in ("u64qam", "pas_mb"):
    cfg = ExperimentConfig(
        link=fl.LinkConfig(n_spans=4),
        forward_plan=fl.StepPlan(steps_per_span=32),
        modulation=modulation,
        n_symbols=2 ** 13,
        power_sweep_dbm=tuple(float(p) for p in range(2, 11, 2)),
        master_seed=7,
    )
    t0 = time.perf_counter()
    recs, failures = run_sweep(cfg, cache_dir=cache)
    assert not failures, failures
    p_star, se_star = peak_se(recs)
    print(f"{modulation:8s}: peak SE {se_star:.3f} bit/s/Hz at "
          f"{p_star:+.1f} dBm   ({time.perf_counter() - t0:.1f} s)")
    records.extend(recs)

files = emit_report(records, out_dir)
print(f"\nwrote {len(files)} files to {out_dir}/ "
      f"(results.csv, series_*.csv, summary.json)")
