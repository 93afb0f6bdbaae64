import math

import pytest

from p4cep.bench import BenchReport, BenchRow, default_rules, run_bench
from p4cep.engine import EventPacket
from p4cep.errors import TraceFormatError
from p4cep.traces import format_trace, parse_trace, random_trace

WIDTHS = {"a.x": 8, "a.y": 4}


class TestTraces:
    def test_parse(self):
        pkts = parse_trace("a.x, a.y\n1,2\n3,4\n", WIDTHS)
        assert pkts == [EventPacket(1, {"a.x": 1, "a.y": 2}), EventPacket(2, {"a.x": 3, "a.y": 4})]

    def test_empty(self):
        assert parse_trace("") == []
        assert parse_trace("a.x,a.y\n", WIDTHS) == []

    @pytest.mark.parametrize("text, row", [
        ("a.x,a.y\n1,2\n3\n", 3),
        ("a.x,a.y\n1,-2\n", 2),
        ("a.x,a.y\n1,16\n", 2),
        ("a.x,a.y\n1,0x1\n", 2),
        ("a.x\n1\n", 1),
        ("a.x,a.x\n1,1\n", 1),
    ])
    def test_errors_carry_row(self, text, row):
        with pytest.raises(TraceFormatError) as exc:
            parse_trace(text, WIDTHS)
        assert exc.value.row == row
        assert f"row {row}" in str(exc.value)

    def test_extra_columns_allowed(self):
        (p,) = parse_trace("a.y,a.x,other\n1,2,3\n", WIDTHS)
        assert p.fields == {"a.y": 1, "a.x": 2, "other": 3}

    def test_round_trip(self):
        pkts = random_trace(WIDTHS, 50, seed=4)
        assert parse_trace(format_trace(pkts), WIDTHS) == pkts

    def test_random_trace_is_seeded_and_bounded(self):
        a = random_trace(WIDTHS, 200, seed=1, limits={"a.x": 3})
        assert a == random_trace(WIDTHS, 200, seed=1, limits={"a.x": 3})
        assert a != random_trace(WIDTHS, 200, seed=2, limits={"a.x": 3})
        assert {p.fields["a.x"] for p in a} == {0, 1, 2}
        assert max(p.fields["a.y"] for p in a) < 16


class TestBench:
    def test_baseline_has_no_window_work(self):
        (row,) = run_bench([0], events=50).rows
        assert row.ops_per_event == 3.0  # two predicates, one machine step
        assert "window" not in default_rules(0)

    def test_constant_increment(self):
        report = run_bench([1, 2, 4, 8], events=50)
        assert report.incremental_costs() == [1.0, 1.0, 1.0]
        assert report.incremental_ratio() == 1.0

    def test_fit_over_wide_range(self):
        report = run_bench([0, 10, 100, 250, 500, 1000], events=20)
        slope, intercept, r2 = report.fit()
        assert r2 >= 0.95 and slope == pytest.approx(1.0, abs=0.01)
        ops = [r.ops_per_event for r in report.rows]
        assert ops == sorted(ops)

    def test_csv_shape(self):
        csv = run_bench([0, 2], events=10, seed=3).to_csv().splitlines()
        assert csv[0] == "n,events,wall_ns_mean,ops_per_event"
        assert [line.split(",")[0] for line in csv[1:]] == ["0", "2"]

    def test_custom_template(self):
        template = ("window w { size {size} value ev.value }\n"
                    "complex_event e { value 1 pattern [max(w) > 900] }")
        report = run_bench([1, 3], events=30, template=template)
        assert report.incremental_costs() == [1.0]

    def test_negative_size(self):
        with pytest.raises(ValueError):
            run_bench([-1])

    def test_degenerate_fit(self):
        report = BenchReport((BenchRow(4, 10, 1.0, 80),))
        assert all(math.isnan(v) for v in report.fit())
        assert report.incremental_ratio() == math.inf
