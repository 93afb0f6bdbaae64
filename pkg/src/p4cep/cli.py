"""``p4cep`` command line: compile, run and bench.

Exit codes: 0 success, 2 usage, 3 parse error, 4 validation error,
5 I/O error, 6 trace error.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

from . import serialize
from .bench import run_bench
from .codegen import CodeSizeWarning, generate_artifacts, write_artifacts
from .compiler import CompiledProgram, compile_rules
from .engine import format_emission_log
from .errors import (
    DuplicateNameError,
    HeaderSpecError,
    InvalidProgramError,
    ProgramFormatError,
    RuleError,
    RuleValidationError,
    TraceFormatError,
)
from .rules import load_headers, parse_rules, validate
from .runtime import deploy
from .traces import read_trace

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_VALIDATION, EXIT_IO, EXIT_TRACE = 0, 2, 3, 4, 5, 6


class _Failure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _Failure(EXIT_IO, f"{path}: {exc.strerror or exc}") from None


def _headers(path: str | None) -> dict[str, int]:
    if path is None:
        return {}
    _read_text(path)
    try:
        return load_headers(path)
    except HeaderSpecError as exc:
        raise _Failure(EXIT_PARSE, f"{path}: {exc}") from None


def _load_program(rules_path: str, headers_path: str | None) -> CompiledProgram:
    """Compile rule text, or load an already serialized program."""
    text = _read_text(rules_path)
    if text.startswith(serialize.MAGIC):
        try:
            return serialize.loads(text)
        except ProgramFormatError as exc:
            raise _Failure(EXIT_PARSE, f"{rules_path}: {exc}") from None
    headers = _headers(headers_path)
    try:
        return compile_rules(validate(parse_rules(text), headers))
    except (RuleValidationError, DuplicateNameError) as exc:
        raise _Failure(EXIT_VALIDATION, f"{rules_path}:{exc}") from None
    except RuleError as exc:
        raise _Failure(EXIT_PARSE, f"{rules_path}:{exc}") from None


def cmd_compile(args) -> int:
    program = _load_program(args.rules, args.headers)
    name = args.name or Path(args.rules).stem
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CodeSizeWarning)
        artifacts = generate_artifacts(program)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    try:
        paths = write_artifacts(artifacts, args.out, name)
        program_path = Path(args.out) / f"{name}.p4cep"
        program_path.write_text(serialize.dumps(program), encoding="utf-8")
    except OSError as exc:
        raise _Failure(EXIT_IO, f"{args.out}: {exc.strerror or exc}") from None
    for p in [program_path, *paths]:
        print(p)
    return EXIT_OK


def cmd_run(args) -> int:
    program = _load_program(args.rules, args.headers)
    try:
        handle = deploy(program)
    except InvalidProgramError as exc:
        raise _Failure(EXIT_VALIDATION, f"{args.rules}: {exc}") from None
    _read_text(args.trace)
    try:
        packets = read_trace(args.trace, program.field_widths)
    except TraceFormatError as exc:
        raise _Failure(EXIT_TRACE, f"{args.trace}: {exc}") from None
    log = format_emission_log(handle.run(packets))
    if args.emit:
        try:
            Path(args.emit).write_text(log, encoding="utf-8")
        except OSError as exc:
            raise _Failure(EXIT_IO, f"{args.emit}: {exc.strerror or exc}") from None
    else:
        sys.stdout.write(log)
    sys.stderr.write(handle.snapshot().to_text())
    return EXIT_OK


def _sizes(text: str) -> list[int]:
    try:
        sizes = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid size list {text!r}") from None
    if not sizes or any(n < 0 for n in sizes):
        raise argparse.ArgumentTypeError("sizes must be a non-empty list of integers >= 0")
    return sizes


def _count(text: str) -> int:
    if not text.isdigit():
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return int(text)


def cmd_bench(args) -> int:
    template = _read_text(args.rules) if args.rules else None
    headers = _headers(args.headers) if args.headers else None
    try:
        report = run_bench(args.sizes, args.events, args.seed, template, headers)
    except (RuleValidationError, DuplicateNameError) as exc:
        raise _Failure(EXIT_VALIDATION, f"{args.rules}:{exc}") from None
    except RuleError as exc:
        raise _Failure(EXIT_PARSE, f"{args.rules}:{exc}") from None
    if args.out:
        try:
            Path(args.out).write_text(report.to_csv(), encoding="utf-8")
        except OSError as exc:
            raise _Failure(EXIT_IO, f"{args.out}: {exc.strerror or exc}") from None
    else:
        sys.stdout.write(report.to_csv())
    print(report.summary(), file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="p4cep", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile rules into P4 source and table entries")
    p.add_argument("--rules", required=True)
    p.add_argument("--headers")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--name", help="artifact base name (default: rules file stem)")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", help="replay a CSV trace through the software engine")
    p.add_argument("--rules", required=True, help="rule file or serialized program")
    p.add_argument("--headers")
    p.add_argument("--trace", required=True)
    p.add_argument("--emit", help="emission log path (default: stdout)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="measure per-event cost against window size")
    p.add_argument("--rules", help="rule template using {size}; built-in template if omitted")
    p.add_argument("--headers")
    p.add_argument("--sizes", type=_sizes, default=[0, 1, 2, 4, 8, 16, 32, 64])
    p.add_argument("--events", type=_count, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Failure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
