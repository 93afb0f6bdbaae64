"""Software data plane executing a compiled program packet by packet.

Per packet the pipeline runs, in this order:

1. insert the packet's field values into every value window and update
   global running aggregates, then fold each value window once;
2. evaluate predicate-window predicates, insert their 0/1 outcomes and fold
   those windows;
3. evaluate every pattern predicate; the packet's symbol is the lowest id
   whose predicate holds (``NO_MATCH`` otherwise);
4. step each machine in declaration order; on acceptance compute the return
   value, emit, and reset the machine to its initial state.

A packet either goes through all four stages or, if any stage raises, leaves
the windows, accumulators and machine states exactly as they were.
"""

from __future__ import annotations

import operator
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .compiler import (
    NO_MATCH,
    CompiledProgram,
    ReturnPlan,
    StateMachine,
    TransitionRow,
    plan_name,
)
from .errors import FieldRangeError, MissingFieldError, P4CEPError, WarmUpError
from .rules import FieldRef, PredicateExpr, Strategy
from .window import OpCounter, RunningAggregate, WindowState

__all__ = [
    "EventPacket", "Emission", "Engine", "MachineTable", "step_machine",
    "format_emission_log", "parse_emission_log",
]

_CMP = {
    "==": operator.eq, "!=": operator.ne, "<": operator.lt,
    "<=": operator.le, ">": operator.gt, ">=": operator.ge,
}


@dataclass(frozen=True)
class EventPacket:
    seq: int
    fields: Mapping[str, int]


@dataclass(frozen=True)
class Emission:
    event: str
    value: int
    seq: int

    def to_line(self) -> str:
        return f"{self.seq},{self.event},{self.value}"


def format_emission_log(emissions: Iterable[Emission]) -> str:
    return "".join(e.to_line() + "\n" for e in emissions)


def parse_emission_log(text: str) -> list[Emission]:
    out = []
    for line in text.splitlines():
        if line.strip():
            seq, name, value = line.split(",")
            out.append(Emission(name, int(value), int(seq)))
    return out


class MachineTable:
    """Mutable copy of a machine's transition table, owned by one engine."""

    def __init__(self, machine: StateMachine):
        self.name = machine.name
        self.n_states = machine.n_states
        self.initial = machine.initial
        self.accepting = machine.accepting
        self.strategy = machine.strategy
        self.delta: dict[tuple[int, int], tuple[int, bool]] = dict(machine.delta)

    def step(self, q: int, symbol: int) -> tuple[int, bool]:
        hit = self.delta.get((q, symbol))
        if hit is not None:
            return hit
        if self.strategy is Strategy.STRICT:
            return self.initial, False
        return q, False

    def rows(self) -> list[TransitionRow]:
        return sorted(TransitionRow(q, x, qn, acc) for (q, x), (qn, acc) in self.delta.items())


def step_machine(machine: StateMachine | MachineTable, current_q: int, symbol: int
                 ) -> tuple[int, bool]:
    """One transition; misses fall back to the machine's strategy default."""
    return machine.step(current_q, symbol)


@dataclass
class EngineStats:
    packets_in: int = 0
    packets_dropped: int = 0
    emissions: Counter = field(default_factory=Counter)


class Engine:
    """Executes one :class:`CompiledProgram`; not safe for concurrent use.

    Serialise access externally (see :mod:`p4cep.runtime`).
    """

    def __init__(self, program: CompiledProgram):
        self.program = program
        self.counter = OpCounter()
        self.stats = EngineStats()
        self.windows: dict[str, WindowState] = {}
        self.running: dict[str, RunningAggregate] = {}
        self._value_windows = []
        self._pred_windows = []
        self._global_running = []
        self._owned_running: dict[str, list] = {m.name: [] for m in program.machines}
        for plan in program.windows:
            if plan.kind == "running":
                acc = RunningAggregate(plan.aggregates[0], plan.width)
                self.running[plan.name] = acc
                if plan.owner is None:
                    self._global_running.append((plan, acc))
                else:
                    self._owned_running[plan.owner].append((plan, acc))
            else:
                w = WindowState(plan.capacity, plan.width, predicate=plan.kind == "predicate")
                self.windows[plan.name] = w
                target = self._pred_windows if plan.kind == "predicate" else self._value_windows
                target.append((plan, w))
        self.tables = [MachineTable(m) for m in program.machines]
        self.current = {t.name: t.initial for t in self.tables}
        self._fields = program.fields

    # -- control hooks -----------------------------------------------------

    def table(self, machine: str) -> MachineTable:
        for t in self.tables:
            if t.name == machine:
                return t
        raise KeyError(machine)

    def set_state(self, machine: str, q: int) -> None:
        self.current[machine] = q
        for _, acc in self._owned_running[machine]:
            acc.reset()

    # -- packet path -------------------------------------------------------

    def _read(self, pkt: EventPacket) -> dict[str, int]:
        values = {}
        for name, width in self._fields:
            try:
                v = pkt.fields[name]
            except KeyError:
                raise MissingFieldError(f"packet {pkt.seq} lacks field {name}") from None
            if not 0 <= v < (1 << width):
                raise FieldRangeError(
                    f"packet {pkt.seq}: {name}={v} does not fit in {width} bits")
            values[name] = v
        return values

    def _operand(self, op, values, scratch):
        if isinstance(op, int):
            return op
        if isinstance(op, FieldRef):
            return values[op.name]
        name = plan_name(op)
        if op.targets_window:
            return scratch[name][op.func]
        return self.running[name].value

    def _holds(self, expr: PredicateExpr, values, scratch) -> bool:
        self.counter.ops += 1
        lhs = self._operand(expr.lhs, values, scratch)
        if lhs is None:  # avg during warm-up
            return False
        return _CMP[expr.cmp](lhs, self._operand(expr.rhs, values, scratch))

    def evaluate_predicates(self, values: Mapping[str, int], scratch) -> int:
        """Evaluate every predicate once; return the lowest true id or NO_MATCH."""
        symbol = NO_MATCH
        for x, expr in self.program.predicates:
            if self._holds(expr, values, scratch) and symbol == NO_MATCH:
                symbol = x
        return symbol

    def compute_return_value(self, ret: ReturnPlan, values, scratch) -> int:
        if ret.kind == "const":
            return ret.const
        if ret.kind == "field":
            return values[ret.field.name]
        if ret.plan in self.running:
            return self.running[ret.plan].value
        value = scratch[ret.plan][ret.func]
        if value is None:
            raise WarmUpError(f"avg({ret.plan}) requested before the window is full")
        return value

    def ingest(self, pkt: EventPacket) -> list[Emission]:
        """Process one packet; returns emissions in machine declaration order.

        On error the packet is counted as dropped, the engine state is left
        as before the call, and the error is re-raised.
        """
        self.stats.packets_in += 1
        undo: list = []
        try:
            values = self._read(pkt)
            emissions, states = self._process(pkt, values, undo)
        except P4CEPError:
            for obj, cp in reversed(undo):
                obj.rollback(cp)
            self.stats.packets_dropped += 1
            raise
        self.current.update(states)
        for e in emissions:
            self.emit(e)
        return emissions

    def emit(self, emission: Emission) -> Emission:
        self.stats.emissions[emission.event] += 1
        return emission

    def _process(self, pkt, values, undo):
        ops = self.counter
        scratch: dict[str, dict[str, int | None]] = {}

        for plan, w in self._value_windows:
            undo.append((w, w.checkpoint()))
            w.insert(values[plan.source.name])
            ops.ops += 1
        for plan, acc in self._global_running:
            undo.append((acc, acc.checkpoint()))
            acc.update(values[plan.source.name])
            ops.ops += 1
        for plan, w in self._value_windows:
            scratch[plan.name] = w.aggregate_many(plan.aggregates, ops)

        for plan, w in self._pred_windows:
            outcome = self._holds(plan.predicate, values, scratch)
            undo.append((w, w.checkpoint()))
            w.insert(int(outcome))
            ops.ops += 1
            scratch[plan.name] = w.aggregate_many(plan.aggregates, ops)

        symbol = self.evaluate_predicates(values, scratch)

        emissions: list[Emission] = []
        states: dict[str, int] = {}
        for table, ret in zip(self.tables, self.program.returns):
            q = self.current[table.name]
            for plan, acc in self._owned_running[table.name]:
                undo.append((acc, acc.checkpoint()))
                if q == table.initial:
                    acc.reset()
                acc.update(values[plan.source.name])
                ops.ops += 1
            q_n, accepted = table.step(q, symbol)
            ops.ops += 1
            if accepted:
                value = self.compute_return_value(ret, values, scratch)
                emissions.append(Emission(table.name, value, pkt.seq))
                q_n = table.initial
            states[table.name] = q_n
        return emissions, states

    def run(self, packets: Iterable[EventPacket]) -> list[Emission]:
        """Ingest a whole trace, skipping packets that fail to process."""
        out: list[Emission] = []
        for pkt in packets:
            try:
                out.extend(self.ingest(pkt))
            except P4CEPError:
                continue
        return out
