"""P4_16 source and runtime table entries for a compiled program.

The generated file defines a ``cep_metadata_t`` struct, the registers that
hold inter-packet state, and a ``CepIngress`` control that the co-NF program
applies from its own ingress. Window aggregation is unrolled slot by slot
because P4 has no loops; each slot is copied from its register into a
dedicated metadata field before any arithmetic touches it. Predicates live
in the control flow (actions cannot branch), and all global-state accesses
sit in one ``@atomic`` block.

Table entries use the bmv2 CLI syntax::

    table_set_default <table> cep_stay|cep_reset
    table_add <table> do_transition <q> <x> => <q_n> <is_accepting>
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .compiler import CompiledProgram, WindowPlan, plan_name
from .rules import AggRef, FieldRef, PredicateExpr, Strategy

__all__ = [
    "CodeSizeWarning", "GeneratedArtifacts", "DEFAULT_SLOT_BUDGET",
    "generate_p4", "generate_table_entries", "generate_manifest",
    "generate_artifacts", "write_artifacts", "window_prefix", "table_name",
]

DEFAULT_SLOT_BUDGET = 4096
CONTROL_NAME = "CepIngress"
METADATA_TYPE = "cep_metadata_t"


class CodeSizeWarning(UserWarning):
    """More unrolled window slots than the configured target budget."""


@dataclass
class GeneratedArtifacts:
    p4_source: str
    table_entries: str
    manifest: dict[str, str] = field(default_factory=dict)

    def manifest_text(self) -> str:
        return "".join(f"{k} {v}\n" for k, v in self.manifest.items())


def _sanitize(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_")


def window_prefix(program: CompiledProgram, plan: WindowPlan) -> str:
    return f"w{program.windows.index(plan)}_{_sanitize(plan.name)}"


def _machine_prefix(index: int, name: str) -> str:
    return f"m{index}_{_sanitize(name)}"


def table_name(index: int, name: str) -> str:
    return f"{_machine_prefix(index, name)}_transitions"


def _bits(n_values: int) -> int:
    for w in (8, 16, 32):
        if n_values <= 1 << w:
            return w
    raise ValueError("too many values for a 32-bit id")


class _Writer:
    def __init__(self) -> None:
        self.lines: list[str] = []
        self.depth = 0

    def __call__(self, text: str = "") -> None:
        self.lines.append("    " * self.depth + text if text else "")

    def open(self, text: str) -> None:
        self(text + " {")
        self.depth += 1

    def close(self, suffix: str = "") -> None:
        self.depth -= 1
        self("}" + suffix)

    def reopen(self, text: str) -> None:
        self.depth -= 1
        self("} " + text + " {")
        self.depth += 1

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


class _Generator:
    def __init__(self, program: CompiledProgram):
        self.p = program
        self.prefix = {w.name: window_prefix(program, w) for w in program.windows}
        self.sym_bits = _bits(len(program.predicates) + 1)
        self.no_match = (1 << self.sym_bits) - 1
        self.state_bits = _bits(max((m.n_states for m in program.machines), default=1))
        for m in program.machines:
            if m.initial != 0:
                raise ValueError("code generation assumes initial state 0")

    # -- expressions -------------------------------------------------------

    def operand(self, op) -> tuple[str, int | None]:
        """P4 expression and bit width (None for literals)."""
        if isinstance(op, int):
            return str(op), None
        if isinstance(op, FieldRef):
            return f"hdr.{op.name}", op.width
        plan = self.p.window_index[_plan_of(op)]
        pre = self.prefix[plan.name]
        if plan.kind == "running":
            return (f"(~cep.{pre}_acc)" if plan.aggregates[0] == "min"
                    else f"cep.{pre}_acc"), plan.width
        func = "sum" if op.func == "count" else op.func
        return f"cep.{pre}_aggr_{func}", plan.width

    def condition(self, expr: PredicateExpr) -> str:
        lhs, lw = self.operand(expr.lhs)
        rhs, rw = self.operand(expr.rhs)
        if lw is not None and rw is not None and lw != rw:
            w = max(lw, rw)
            lhs, rhs = f"((bit<{w}>) {lhs})", f"((bit<{w}>) {rhs})"
        cond = f"{lhs} {expr.cmp} {rhs}"
        if isinstance(expr.lhs, AggRef) and expr.lhs.func == "avg":
            plan = self.p.window_index[_plan_of(expr.lhs)]
            cond = f"cep.{self.prefix[plan.name]}_fill == {plan.capacity} && {cond}"
        return cond

    # -- declarations ------------------------------------------------------

    def metadata(self, out: _Writer) -> None:
        out.open(f"struct {METADATA_TYPE}")
        out(f"bit<{self.sym_bits}> m_x;")
        out(f"bit<{self.state_bits}> m_q;")
        out(f"bit<{self.state_bits}> q_n;")
        out("bit<1> is_accepting;")
        for plan in self.p.windows:
            pre, w = self.prefix[plan.name], plan.width
            if plan.kind == "running":
                out(f"bit<{w}> {pre}_acc;")
                if plan.aggregates[0] == "min":
                    out(f"bit<{w}> {pre}_tmp;")
                continue
            out(f"bit<32> {pre}_head;")
            out(f"bit<32> {pre}_fill;")
            out(f"bit<32> {pre}_iter;")
            if plan.kind == "predicate":
                out(f"bit<{w}> {pre}_outcome;")
            for i in range(plan.capacity):
                out(f"bit<{w}> {pre}_m{i};")
            for func in _folds(plan):
                out(f"bit<{w}> {pre}_aggr_{func};")
            if "avg" in plan.aggregates:
                out(f"bit<{w + _log2(plan.capacity)}> {pre}_aggr_wsum;")
        for j, m in enumerate(self.p.machines):
            pre = _machine_prefix(j, m.name)
            out(f"bit<1> {pre}_emit;")
            out(f"bit<32> {pre}_ret;")
        out.close()

    def registers(self, out: _Writer) -> None:
        for plan in self.p.windows:
            pre, w = self.prefix[plan.name], plan.width
            if plan.kind == "running":
                out(f"register<bit<{w}>>(1) {pre}_acc_reg;")
            else:
                out(f"register<bit<{w}>>({plan.capacity}) {pre}_values;")
                out(f"register<bit<32>>(1) {pre}_head_reg;")
                out(f"register<bit<32>>(1) {pre}_fill_reg;")
        for j, m in enumerate(self.p.machines):
            out(f"register<bit<{self.state_bits}>>(1) {_machine_prefix(j, m.name)}_state;")

    # -- control flow ------------------------------------------------------

    def insert(self, out: _Writer, plan: WindowPlan, value: str) -> None:
        pre, n = self.prefix[plan.name], plan.capacity
        out(f"{pre}_head_reg.read(cep.{pre}_head, 0);")
        out(f"{pre}_fill_reg.read(cep.{pre}_fill, 0);")
        out(f"{pre}_values.write(cep.{pre}_head, {value});")
        out(f"cep.{pre}_head = cep.{pre}_head + 1;")
        out.open(f"if (cep.{pre}_head == {n})")
        out(f"cep.{pre}_head = 0;")
        out.close()
        out.open(f"if (cep.{pre}_fill < {n})")
        out(f"cep.{pre}_fill = cep.{pre}_fill + 1;")
        out.close()
        out(f"{pre}_head_reg.write(0, cep.{pre}_head);")
        out(f"{pre}_fill_reg.write(0, cep.{pre}_fill);")

    def unroll(self, out: _Writer, plan: WindowPlan) -> None:
        pre, n, w = self.prefix[plan.name], plan.capacity, plan.width
        folds = _folds(plan)
        out(f"// aggregate window {plan.name}: {n} unrolled slot(s)")
        for func in folds:
            init = (1 << w) - 1 if func == "min" else 0
            if func != "avg":
                out(f"cep.{pre}_aggr_{func} = {init};")
        if "avg" in folds:
            out(f"cep.{pre}_aggr_wsum = 0;")
        out(f"cep.{pre}_iter = 0;")
        for i in range(n):
            slot = f"cep.{pre}_m{i}"
            out.open(f"if (cep.{pre}_iter < cep.{pre}_fill)")
            out(f"{pre}_values.read({slot}, {i});")
            if "sum" in folds:
                out(f"cep.{pre}_aggr_sum = cep.{pre}_aggr_sum + {slot};")
            if "avg" in folds:
                out(f"cep.{pre}_aggr_wsum = cep.{pre}_aggr_wsum + "
                    f"((bit<{w + _log2(n)}>) {slot});")
            if "min" in folds:
                out.open(f"if ({slot} < cep.{pre}_aggr_min)")
                out(f"cep.{pre}_aggr_min = {slot};")
                out.close()
            if "max" in folds:
                out.open(f"if ({slot} > cep.{pre}_aggr_max)")
                out(f"cep.{pre}_aggr_max = {slot};")
                out.close()
            out.close()
            out(f"cep.{pre}_iter = cep.{pre}_iter + 1;")
        if "avg" in folds:
            # the widened sum cannot wrap, so the shifted mean is exact
            out(f"cep.{pre}_aggr_avg = (bit<{w}>) (cep.{pre}_aggr_wsum >> {_log2(n)});")

    def running_update(self, out: _Writer, plan: WindowPlan, reset_when: str | None) -> None:
        pre, w = self.prefix[plan.name], plan.width
        value = f"((bit<{w}>) hdr.{plan.source.name})"
        out(f"{pre}_acc_reg.read(cep.{pre}_acc, 0);")
        if reset_when:
            out.open(f"if ({reset_when})")
            out(f"cep.{pre}_acc = 0;")
            out.close()
        func = plan.aggregates[0]
        if func == "sum":
            out(f"cep.{pre}_acc = cep.{pre}_acc + {value};")
        elif func == "max":
            out.open(f"if ({value} > cep.{pre}_acc)")
            out(f"cep.{pre}_acc = {value};")
            out.close()
        else:
            # stored complemented so the zero-initialised register is the identity
            out(f"cep.{pre}_tmp = ~{value};")
            out.open(f"if (cep.{pre}_tmp > cep.{pre}_acc)")
            out(f"cep.{pre}_acc = cep.{pre}_tmp;")
            out.close()
        out(f"{pre}_acc_reg.write(0, cep.{pre}_acc);")

    def return_expr(self, index: int) -> str:
        ret = self.p.returns[index]
        if ret.kind == "const":
            return str(ret.const)
        if ret.kind == "field":
            return f"(bit<32>) hdr.{ret.field.name}"
        plan = self.p.window_index[ret.plan]
        pre = self.prefix[plan.name]
        if plan.kind == "running":
            expr = f"~cep.{pre}_acc" if ret.func == "min" else f"cep.{pre}_acc"
        else:
            expr = f"cep.{pre}_aggr_{'sum' if ret.func == 'count' else ret.func}"
        return f"(bit<32>) ({expr})"

    def control(self, out: _Writer) -> None:
        p = self.p
        out.open(f"control {CONTROL_NAME}(inout headers_t hdr, inout {METADATA_TYPE} cep, "
                 "inout standard_metadata_t standard_metadata)")
        out.open(f"action do_transition(bit<{self.state_bits}> q_n, bit<1> is_accepting)")
        out("cep.q_n = q_n;")
        out("cep.is_accepting = is_accepting;")
        out.close()
        out.open("action cep_stay()")
        out("cep.q_n = cep.m_q;")
        out("cep.is_accepting = 0;")
        out.close()
        out.open("action cep_reset()")
        out("cep.q_n = 0;")
        out("cep.is_accepting = 0;")
        out.close()
        for j, m in enumerate(p.machines):
            default = "cep_reset" if m.strategy is Strategy.STRICT else "cep_stay"
            out()
            out.open(f"table {table_name(j, m.name)}")
            out.open("key =")
            out("cep.m_q : exact;")
            out("cep.m_x : exact;")
            out.close()
            out.open("actions =")
            out("do_transition;")
            out("cep_stay;")
            out("cep_reset;")
            out.close()
            out(f"default_action = {default}();")
            # room for every (state, symbol) key so runtime additions always fit
            out(f"size = {max(m.n_states * len(self.p.predicates), 1)};")
            out.close()
        out()
        out.open("apply")
        out.open("@atomic")
        for plan in p.windows:
            if plan.kind == "value":
                out(f"// window {plan.name}: insert {plan.source.name}")
                self.insert(out, plan, f"(bit<{plan.width}>) hdr.{plan.source.name}")
        for plan in p.windows:
            if plan.kind == "running" and plan.owner is None:
                out(f"// running {plan.name}")
                self.running_update(out, plan, None)
        for plan in p.windows:
            if plan.kind == "value":
                self.unroll(out, plan)
        for plan in p.windows:
            if plan.kind == "predicate":
                pre = self.prefix[plan.name]
                out(f"// window {plan.name}: insert outcome of [{plan.predicate}]")
                out.open(f"if ({self.condition(plan.predicate)})")
                out(f"cep.{pre}_outcome = 1;")
                out.reopen("else")
                out(f"cep.{pre}_outcome = 0;")
                out.close()
                self.insert(out, plan, f"cep.{pre}_outcome")
                self.unroll(out, plan)
        out("// symbol: lowest predicate id that holds")
        out(f"cep.m_x = {self.no_match};")
        for x, expr in p.predicates:
            if x == 0:
                out.open(f"if ({self.condition(expr)})")
            else:
                out.reopen(f"else if ({self.condition(expr)})")
            out(f"cep.m_x = {x};")
        if len(p.predicates):
            out.close()
        for j, m in enumerate(p.machines):
            pre = _machine_prefix(j, m.name)
            out(f"// machine {m.name}")
            out(f"{pre}_state.read(cep.m_q, 0);")
            for plan in p.windows:
                if plan.kind == "running" and plan.owner == m.name:
                    self.running_update(out, plan, "cep.m_q == 0")
            out(f"{table_name(j, m.name)}.apply();")
            out.open("if (cep.is_accepting == 1)")
            out(f"cep.{pre}_ret = {self.return_expr(j)};")
            out(f"cep.{pre}_emit = 1;")
            out(f"{pre}_state.write(0, 0);")
            out.reopen("else")
            out(f"{pre}_state.write(0, cep.q_n);")
            out.close()
        out.close()
        if p.machines:
            emitted = " || ".join(f"cep.{_machine_prefix(j, m.name)}_emit == 1"
                                  for j, m in enumerate(p.machines))
            out("// deliver detected complex events to the registered sinks")
            out.open(f"if ({emitted})")
            out("resubmit_preserving_field_list(CEP_FIELD_LIST);")
            out.close()
        out.close()
        out.close()


def _log2(n: int) -> int:
    return n.bit_length() - 1


def _plan_of(ref: AggRef) -> str:
    return plan_name(ref)


def _folds(plan: WindowPlan) -> list[str]:
    """Metadata accumulators a window needs (count shares the sum)."""
    wanted = set(plan.aggregates)
    folds = [f for f in ("sum", "min", "max") if f in wanted or
             (f == "sum" and wanted & {"count", "avg"})]
    if "avg" in wanted:
        folds.append("avg")
    return folds


def generate_p4(program: CompiledProgram, slot_budget: int = DEFAULT_SLOT_BUDGET) -> str:
    slots = sum(w.capacity for w in program.windows)
    if slots > slot_budget:
        warnings.warn(f"{slots} unrolled window slots exceed the budget of {slot_budget}",
                      CodeSizeWarning, stacklevel=2)
    gen = _Generator(program)
    out = _Writer()
    out("// Generated CEP data-plane logic (P4_16, v1model).")
    out("// Include after the co-NF header definitions; the including program must")
    out(f"// define headers_t, embed a {METADATA_TYPE} field in its metadata and call")
    out(f"//     {CONTROL_NAME}.apply(hdr, meta.cep, standard_metadata);")
    out("// from its ingress control.")
    out("#ifndef P4CEP_GENERATED_P4")
    out("#define P4CEP_GENERATED_P4")
    out()
    out("#ifndef CEP_FIELD_LIST")
    out("#define CEP_FIELD_LIST 1")
    out("#endif")
    out()
    gen.metadata(out)
    out()
    gen.registers(out)
    out()
    gen.control(out)
    out()
    out("#endif")
    return out.text()


def generate_table_entries(program: CompiledProgram) -> str:
    lines = []
    for j, m in enumerate(program.machines):
        table = table_name(j, m.name)
        default = "cep_reset" if m.strategy is Strategy.STRICT else "cep_stay"
        lines.append(f"table_set_default {table} {default}")
        lines += [f"table_add {table} do_transition {r.q} {r.x} => {r.q_n} {int(r.is_accepting)}"
                  for r in m.rows]
    return "".join(line + "\n" for line in lines)


def generate_manifest(program: CompiledProgram) -> dict[str, str]:
    out = {"control": CONTROL_NAME, "metadata": METADATA_TYPE}
    for plan in program.windows:
        pre = window_prefix(program, plan)
        if plan.kind == "running":
            out[f"running.{plan.name}.acc"] = f"{pre}_acc_reg"
        else:
            out[f"window.{plan.name}.values"] = f"{pre}_values"
            out[f"window.{plan.name}.head"] = f"{pre}_head_reg"
            out[f"window.{plan.name}.fill"] = f"{pre}_fill_reg"
    for j, m in enumerate(program.machines):
        out[f"machine.{m.name}.state"] = f"{_machine_prefix(j, m.name)}_state"
        out[f"machine.{m.name}.table"] = table_name(j, m.name)
    return out


def generate_artifacts(program: CompiledProgram,
                       slot_budget: int = DEFAULT_SLOT_BUDGET) -> GeneratedArtifacts:
    return GeneratedArtifacts(
        p4_source=generate_p4(program, slot_budget),
        table_entries=generate_table_entries(program),
        manifest=generate_manifest(program),
    )


def write_artifacts(artifacts: GeneratedArtifacts, out_dir: str | Path, name: str) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {
        f"{name}_cep.p4": artifacts.p4_source,
        f"{name}_entries.txt": artifacts.table_entries,
        f"{name}_manifest.txt": artifacts.manifest_text(),
    }
    paths = []
    for fname, text in files.items():
        path = out_dir / fname
        path.write_text(text, encoding="utf-8")
        paths.append(path)
    return paths
