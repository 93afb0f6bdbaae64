"""Per-event cost versus window size.

Each size ``n`` gets a fresh engine compiled from the rule template with the
window size substituted, and replays the same seeded synthetic trace. Cost is
reported twice: wall time (machine dependent) and the engine's instrumented
operation count (machine independent, deterministic).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .compiler import compile_rules
from .engine import Engine
from .errors import P4CEPError
from .rules import parse_rules, validate
from .traces import random_trace

__all__ = [
    "BenchRow", "BenchReport", "run_bench", "default_rules", "DEFAULT_HEADERS",
    "DEFAULT_LIMITS", "SIZE_PLACEHOLDER",
]

SIZE_PLACEHOLDER = "{size}"
DEFAULT_HEADERS = {"ev.kind": 8, "ev.value": 16}
DEFAULT_LIMITS = {"ev.kind": 4, "ev.value": 1000}
CSV_HEADER = "n,events,wall_ns_mean,ops_per_event"


def default_rules(n: int) -> str:
    """A two-step pattern whose second step reads an n-slot window.

    ``n == 0`` drops the window and compares the field directly, giving the
    baseline cost of the pipeline without any window work.
    """
    if n == 0:
        return ("complex_event bench_evt {\n    return_value 1\n"
                "    pattern [ev.kind == 1] ; [ev.value > 500]\n}\n")
    return (f"window w {{\n    size {n}\n    value ev.value\n}}\n"
            "complex_event bench_evt {\n    return_value sum(w)\n"
            f"    pattern [ev.kind == 1] ; [sum(w) > {500 * n}]\n}}\n")


@dataclass(frozen=True)
class BenchRow:
    n: int
    events: int
    wall_ns_mean: float
    ops: int

    @property
    def ops_per_event(self) -> float:
        return self.ops / self.events if self.events else 0.0

    def to_csv(self) -> str:
        return f"{self.n},{self.events},{self.wall_ns_mean:.1f},{self.ops_per_event:.4f}"


@dataclass(frozen=True)
class BenchReport:
    rows: tuple[BenchRow, ...]

    def _xy(self):
        n = np.array([r.n for r in self.rows], dtype=float)
        y = np.array([r.ops_per_event for r in self.rows], dtype=float)
        return n, y

    def fit(self) -> tuple[float, float, float]:
        """Least-squares ``(slope, intercept, r_squared)`` of ops/event on n."""
        n, y = self._xy()
        if len(n) < 2 or np.ptp(n) == 0:
            return float("nan"), float("nan"), float("nan")
        slope, intercept = np.polyfit(n, y, 1)
        resid = y - (slope * n + intercept)
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
        return float(slope), float(intercept), r2

    def incremental_costs(self) -> list[float]:
        """Ops/event added per unit of n between consecutive sizes."""
        rows = sorted(self.rows, key=lambda r: r.n)
        return [(b.ops_per_event - a.ops_per_event) / (b.n - a.n)
                for a, b in zip(rows, rows[1:]) if b.n != a.n]

    def incremental_ratio(self) -> float:
        inc = self.incremental_costs()
        if not inc or min(inc) <= 0:
            return float("inf")
        return max(inc) / min(inc)

    def to_csv(self) -> str:
        return "\n".join([CSV_HEADER, *(r.to_csv() for r in self.rows)]) + "\n"

    def summary(self) -> str:
        slope, intercept, r2 = self.fit()
        return (f"slope={slope:.4f} intercept={intercept:.4f} r2={r2:.6f} "
                f"incremental_ratio={self.incremental_ratio():.4f}")


def _instantiate(template: str | None, n: int, headers: Mapping[str, int]):
    text = default_rules(n) if template is None else template.replace(SIZE_PLACEHOLDER, str(n))
    return compile_rules(validate(parse_rules(text), headers))


def run_bench(sizes: Sequence[int], events: int = 1000, seed: int = 0,
              template: str | None = None,
              headers: Mapping[str, int] | None = None) -> BenchReport:
    """Benchmark each size in ``sizes``.

    ``template`` is rule text with ``{size}`` standing for the window size;
    the built-in template is used when it is ``None``. A custom template must
    yield a valid program for every requested size (``{size}`` of 0 is
    rejected by the parser since windows need at least one slot).
    """
    if any(n < 0 for n in sizes):
        raise ValueError("window sizes must be non-negative")
    if headers is None:
        headers = DEFAULT_HEADERS
    limits = DEFAULT_LIMITS if template is None else None
    trace = random_trace(headers, events, seed, limits)
    rows = []
    for n in sizes:
        engine = Engine(_instantiate(template, n, headers))
        start = time.perf_counter_ns()
        for pkt in trace:
            try:
                engine.ingest(pkt)
            except P4CEPError:
                pass
        elapsed = time.perf_counter_ns() - start
        rows.append(BenchRow(n, events, elapsed / events if events else 0.0,
                             engine.counter.ops))
    return BenchReport(tuple(rows))
