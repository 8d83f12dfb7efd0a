"""
A reproducible sweep
====================

An experiment config lists market sizes and correlation levels. Each trial
is seeded from (master seed, cell, trial), so the records do not depend on
how many workers ran them.
"""

import io

from mallowmatch.harness import ExperimentConfig, convergence_table, emit, run, welfare_table

config = ExperimentConfig(n=(100, 400), phi=(0.9, 1.0), trials=5, master_seed=42)
records = list(run(config, workers=1))

buf = io.StringIO()
emit(records, "csv", buf)
print(buf.getvalue().splitlines()[0])

for row in welfare_table(records):
    print(row["n"], row["phi_m"], round(row["mean_ratio_men"], 3))

for row in convergence_table([r for r in records if r.phi_m < 1]):
    print(row["n"], row["median_max_quantile_gap"])
