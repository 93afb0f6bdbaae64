"""Show per-event cost growing linearly with window size.

Operation counts are exact and deterministic; wall time is whatever
this machine produces.

Run: python3 demos/bench_scaling.py
"""
from p4cep.bench import run_bench

report = run_bench([0, 1, 2, 4, 8, 16, 32, 64], events=500, seed=0)
print(report.to_csv(), end="")
slope, intercept, r2 = report.fit()
print(f"\nops/event ~= {slope:.2f} * n + {intercept:.2f}  (r2 {r2:.4f})")
print("increments between consecutive sizes:", report.incremental_costs())
