"""The benchmark matrix: marked selection against its ablation baselines.

Variants:
  tgs-oracle        pooled + deduped candidates, ground-truth selector
  mtg-heuristic     same candidates, always takes the closest-to-goal one
  pivot-random      10 random straight lines 5-15 m ahead, oracle selector
  convoi-waypoints  sparse numbered marks chained toward the goal

Run:  python3 demos/06_benchmark.py        (about half a minute)
Writes demos/output/report.txt and report.csv
"""

import time
from pathlib import Path

from marknav.evaluation import (
    NON_REMOTE_VARIANTS,
    emit_report,
    format_report_table,
    run_benchmark,
)
from marknav.world import BUNDLED_SCENARIOS, load_bundled_scenario

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

scenarios = [load_bundled_scenario(n) for n in BUNDLED_SCENARIOS]
t0 = time.perf_counter()
report = run_benchmark(scenarios, list(NON_REMOTE_VARIANTS), episodes_per_cell=3, seed=7)
print(format_report_table(report))
print(f"({time.perf_counter() - t0:.0f}s for "
      f"{len(scenarios) * len(NON_REMOTE_VARIANTS) * 3} episodes)")

emit_report(report, out / "report.txt", "table")
emit_report(report, out / "report.csv", "delimited")
print(f"wrote {out / 'report.txt'} and {out / 'report.csv'}")
