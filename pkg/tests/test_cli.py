import random
import subprocess
import sys
from pathlib import Path

import pytest

from p4cep.cli import EXIT_IO, EXIT_PARSE, EXIT_TRACE, EXIT_VALIDATION, main
from p4cep.rules import parse_rules, validate
from p4cep.traces import format_trace, random_trace

from gen import random_packets
from oracles import ReferenceInterpreter

DATA = Path(__file__).parent / "data"
RULES, HEADERS = str(DATA / "listing1.rules"), str(DATA / "l3l4.headers")
ANOMALY = "ipv4.totalLen,tcp.dstPort,ipv4.protocol\n600,80,6\n100,80,6\n100,9,17\n"


def test_compile_writes_four_files(tmp_path, capsys):
    assert main(["compile", "--rules", RULES, "--headers", HEADERS, "--out", str(tmp_path)]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "listing1.p4cep", "listing1_cep.p4", "listing1_entries.txt", "listing1_manifest.txt"]


def test_compile_empty_rules(tmp_path, capsys):
    rules = tmp_path / "none.rules"
    rules.write_text("")
    assert main(["compile", "--rules", str(rules), "--out", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "none_entries.txt").read_text() == ""


def test_compile_unknown_field(tmp_path, capsys):
    rules = tmp_path / "bad.rules"
    rules.write_text("complex_event e {\n  value 1\n  pattern [udp.length > 3]\n}\n")
    code = main(["compile", "--rules", str(rules), "--headers", HEADERS, "--out", str(tmp_path)])
    err = capsys.readouterr().err
    assert code == EXIT_VALIDATION
    assert f"{rules}:3:12:" in err and "udp.length" in err


def test_compile_syntax_error(tmp_path, capsys):
    rules = tmp_path / "bad.rules"
    rules.write_text("window w { size }")
    assert main(["compile", "--rules", str(rules), "--out", str(tmp_path)]) == EXIT_PARSE
    assert f"{rules}:1:17:" in capsys.readouterr().err


def test_missing_file(tmp_path, capsys):
    assert main(["compile", "--rules", str(tmp_path / "nope"), "--out", str(tmp_path)]) == EXIT_IO


def test_bad_headers(tmp_path, capsys):
    headers = tmp_path / "h"
    headers.write_text("ipv4.totalLen sixteen\n")
    code = main(["compile", "--rules", RULES, "--headers", str(headers), "--out", str(tmp_path)])
    assert code == EXIT_PARSE


def test_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["compile"])
    assert exc.value.code == 2


def test_run_anomaly(tmp_path, capsys):
    trace = tmp_path / "t.csv"
    trace.write_text(ANOMALY)
    assert main(["run", "--rules", RULES, "--headers", HEADERS, "--trace", str(trace)]) == 0
    out = capsys.readouterr()
    assert out.out == "3,sample_evt,800\n"
    assert "emissions.sample_evt=1" in out.err and "packets_in=3" in out.err


def test_run_from_compiled_program(tmp_path, capsys):
    main(["compile", "--rules", RULES, "--headers", HEADERS, "--out", str(tmp_path)])
    trace, log = tmp_path / "t.csv", tmp_path / "log"
    trace.write_text(ANOMALY)
    assert main(["run", "--rules", str(tmp_path / "listing1.p4cep"), "--trace", str(trace),
                 "--emit", str(log)]) == 0
    assert log.read_text() == "3,sample_evt,800\n"


def test_run_empty_trace(tmp_path, capsys):
    trace, log = tmp_path / "t.csv", tmp_path / "log"
    trace.write_text("ipv4.totalLen,tcp.dstPort,ipv4.protocol\n")
    assert main(["run", "--rules", RULES, "--headers", HEADERS, "--trace", str(trace),
                 "--emit", str(log)]) == 0
    assert log.read_text() == ""


def test_run_trace_error_names_row(tmp_path, capsys):
    trace = tmp_path / "t.csv"
    trace.write_text(ANOMALY + "1,2\n")
    code = main(["run", "--rules", RULES, "--headers", HEADERS, "--trace", str(trace)])
    assert code == EXIT_TRACE
    assert "row 5" in capsys.readouterr().err


def test_run_matches_reference_on_long_trace(tmp_path, capsys):
    headers = {"ipv4.totalLen": 16, "tcp.dstPort": 16, "ipv4.protocol": 8}
    pkts = random_trace(headers, 10_000, seed=8,
                        limits={"ipv4.totalLen": 1600, "tcp.dstPort": 90, "ipv4.protocol": 20})
    trace, log = tmp_path / "t.csv", tmp_path / "log"
    trace.write_text(format_trace(pkts))
    assert main(["run", "--rules", RULES, "--headers", HEADERS, "--trace", str(trace),
                 "--emit", str(log)]) == 0
    ast = validate(parse_rules(Path(RULES).read_text()), headers)
    expected = ReferenceInterpreter(ast).run((p.seq, dict(p.fields)) for p in pkts)
    assert log.read_text() == "".join(f"{s},{n},{v}\n" for s, n, v in expected)
    assert len(expected) > 0


def test_bench(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert main(["bench", "--sizes", "0,1,2,4,8", "--events", "50", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "n,events,wall_ns_mean,ops_per_event"
    assert [r.split(",")[3] for r in rows[1:]] == ["3.0000", "5.0000", "6.0000", "8.0000",
                                                   "12.0000"]
    assert "r2=" in capsys.readouterr().err


@pytest.mark.parametrize("sizes", ["", "1,-2", "a"])
def test_bench_bad_sizes(sizes, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bench", "--sizes", sizes])
    assert exc.value.code == 2


def test_bench_template_without_size_zero(tmp_path, capsys):
    tpl = tmp_path / "t.rules"
    tpl.write_text("window w { size {size} value ev.value }\n"
                   "complex_event e { value 1 pattern [sum(w) > 5] }")
    assert main(["bench", "--rules", str(tpl), "--sizes", "0"]) == EXIT_PARSE
    assert main(["bench", "--rules", str(tpl), "--sizes", "1,2", "--events", "5"]) == 0


def test_console_script_entry_point(tmp_path):
    trace = tmp_path / "t.csv"
    trace.write_text(ANOMALY)
    proc = subprocess.run([sys.executable, "-m", "p4cep.cli", "run", "--rules", RULES,
                           "--headers", HEADERS, "--trace", str(trace)],
                          capture_output=True, text=True, check=True)
    assert proc.stdout == "3,sample_evt,800\n"


def test_random_packets_are_reproducible():
    assert random_packets(random.Random(1), 5) == random_packets(random.Random(1), 5)
