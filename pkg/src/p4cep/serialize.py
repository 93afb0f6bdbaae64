"""Deterministic text form of a :class:`CompiledProgram`.

Layout (one record per line, fields separated by single spaces)::

    p4cep-program 1
    field <header.field> <width>                       sorted by name
    predicate <id> <lhs> <cmp> <rhs>                   ascending id
    window <name> kind=<k> capacity=<n> width=<w> aggregates=<f,...>
           [source=<field>] [owner=<machine>] [predicate=<expr>]
    machine <name> states=<n> initial=<s0> accepting=<q,...>
            strategy=<strategy> return=<spec>
    row <q> <x> <q_n> <is_accepting 0|1>               follows its machine
    end

Window lines are emitted on one physical line; ``predicate=`` is always the
last attribute and runs to the end of the line. ``return=`` is
``const:<v>``, ``field:<header.field>`` or ``aggregate:<func>:<plan>``.
"""

from __future__ import annotations

import dataclasses

from .compiler import (
    CompiledProgram,
    PredicateTable,
    ReturnPlan,
    StateMachine,
    TransitionRow,
    WindowPlan,
)
from .errors import ProgramFormatError, RuleError
from .rules import AggRef, FieldRef, PredicateExpr, Strategy, parse_predicate

FORMAT_VERSION = 1
MAGIC = "p4cep-program"


def _return_spec(ret: ReturnPlan) -> str:
    if ret.kind == "const":
        return f"const:{ret.const}"
    if ret.kind == "field":
        return f"field:{ret.field.name}"
    return f"aggregate:{ret.func}:{ret.plan}"


def dumps(program: CompiledProgram) -> str:
    lines = [f"{MAGIC} {FORMAT_VERSION}"]
    lines += [f"field {name} {width}" for name, width in program.fields]
    lines += [f"predicate {x} {expr}" for x, expr in program.predicates]
    for w in program.windows:
        parts = [f"window {w.name}", f"kind={w.kind}", f"capacity={w.capacity}",
                 f"width={w.width}", f"aggregates={','.join(w.aggregates)}"]
        if w.source is not None:
            parts.append(f"source={w.source.name}")
        if w.owner is not None:
            parts.append(f"owner={w.owner}")
        if w.predicate is not None:
            parts.append(f"predicate={w.predicate}")
        lines.append(" ".join(parts))
    for m, ret in zip(program.machines, program.returns):
        strategy = m.strategy.value if m.strategy else "none"
        accepting = ",".join(str(q) for q in sorted(m.accepting))
        lines.append(f"machine {m.name} states={m.n_states} initial={m.initial} "
                     f"accepting={accepting} strategy={strategy} return={_return_spec(ret)}")
        lines += [f"row {r.q} {r.x} {r.q_n} {int(r.is_accepting)}" for r in m.rows]
    lines.append("end")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------

def _field(name: str, widths: dict[str, int]) -> FieldRef:
    header, _, fld = name.partition(".")
    if name not in widths:
        raise ProgramFormatError(f"field {name} used but not declared")
    return FieldRef(header, fld, width=widths[name])


def _bind_operand(op, widths):
    if isinstance(op, FieldRef):
        return _field(op.name, widths)
    if isinstance(op, AggRef) and not op.targets_window:
        return dataclasses.replace(op, target=_field(op.target.name, widths))
    return op


def _predicate(text: str, widths: dict[str, int]) -> PredicateExpr:
    try:
        expr = parse_predicate(text)
    except RuleError as exc:
        raise ProgramFormatError(f"bad predicate {text!r}: {exc}") from None
    return dataclasses.replace(expr, lhs=_bind_operand(expr.lhs, widths),
                               rhs=_bind_operand(expr.rhs, widths), loc=None)


def _attrs(tokens: list[str]) -> dict[str, str]:
    out = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep:
            raise ProgramFormatError(f"expected key=value, found {tok!r}")
        out[key] = value
    return out


def _ids(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def loads(text: str) -> CompiledProgram:
    lines = text.splitlines()
    if not lines or lines[0].split() != [MAGIC, str(FORMAT_VERSION)]:
        raise ProgramFormatError(f"expected header '{MAGIC} {FORMAT_VERSION}'")
    widths: dict[str, int] = {}
    predicates: list[PredicateExpr] = []
    windows: list[WindowPlan] = []
    machines: list[dict] = []
    returns: list[ReturnPlan] = []
    ended = False
    try:
        for lineno, line in enumerate(lines[1:], 2):
            kind, _, rest = line.partition(" ")
            if ended:
                raise ProgramFormatError("content after 'end'")
            if kind == "field":
                name, width = rest.split()
                widths[name] = int(width)
            elif kind == "predicate":
                x, _, expr = rest.partition(" ")
                if int(x) != len(predicates):
                    raise ProgramFormatError("predicate ids must be dense and ascending")
                predicates.append(_predicate(expr, widths))
            elif kind == "window":
                head, _, pred_text = rest.partition(" predicate=")
                name, *attr_tokens = head.split(" ")
                a = _attrs(attr_tokens)
                windows.append(WindowPlan(
                    name=name, kind=a["kind"], capacity=int(a["capacity"]),
                    width=int(a["width"]),
                    aggregates=tuple(f for f in a["aggregates"].split(",") if f),
                    source=_field(a["source"], widths) if "source" in a else None,
                    predicate=_predicate(pred_text, widths) if pred_text else None,
                    owner=a.get("owner"),
                ))
            elif kind == "machine":
                name, *attr_tokens = rest.split(" ")
                a = _attrs(attr_tokens)
                strategy = None if a["strategy"] == "none" else Strategy(a["strategy"])
                machines.append(dict(name=name, n_states=int(a["states"]),
                                     initial=int(a["initial"]),
                                     accepting=frozenset(_ids(a["accepting"])),
                                     rows=[], strategy=strategy))
                returns.append(_parse_return(a["return"], widths))
            elif kind == "row":
                if not machines:
                    raise ProgramFormatError("row before any machine")
                q, x, qn, acc = (int(v) for v in rest.split())
                machines[-1]["rows"].append(TransitionRow(q, x, qn, bool(acc)))
            elif kind == "end":
                ended = True
            else:
                raise ProgramFormatError(f"unknown record {kind!r}")
    except ProgramFormatError as exc:
        raise ProgramFormatError(f"line {lineno}: {exc}") from None
    except (KeyError, ValueError) as exc:
        raise ProgramFormatError(f"line {lineno}: malformed record ({exc})") from None
    if not ended:
        raise ProgramFormatError("missing 'end'")
    return CompiledProgram(
        predicates=PredicateTable(tuple(predicates)),
        machines=tuple(StateMachine(**{**m, "rows": tuple(sorted(m["rows"]))})
                       for m in machines),
        windows=tuple(windows),
        returns=tuple(returns),
        fields=tuple(sorted(widths.items())),
    )


def _parse_return(spec: str, widths: dict[str, int]) -> ReturnPlan:
    kind, _, rest = spec.partition(":")
    if kind == "const":
        return ReturnPlan("const", const=int(rest))
    if kind == "field":
        return ReturnPlan("field", field=_field(rest, widths))
    if kind == "aggregate":
        func, _, plan = rest.partition(":")
        return ReturnPlan("aggregate", plan=plan, func=func)
    raise ProgramFormatError(f"unknown return spec {spec!r}")
