"""Control-plane operations on deployed engines.

Every operation on an :class:`EngineHandle` takes the handle's lock, so a
table update or forced transition lands strictly between two packets and a
packet is always processed under a single table version. Predicates and
window plans are fixed at deploy time; only transition rows, table defaults
and current machine states can change afterwards.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable, Sequence

from .codegen import table_name
from .compiler import NO_MATCH, CompiledProgram, TransitionRow, plan_name
from .engine import Emission, Engine, EventPacket
from .errors import InvalidProgramError, TableUpdateError
from .rules import AggRef, Strategy

__all__ = ["EngineHandle", "StatsSnapshot", "deploy", "parse_table_entries", "UPDATE_MODES"]

UPDATE_MODES = ("add", "replace", "delete")
_DEFAULT_ACTIONS = {"cep_stay": Strategy.SKIP_TILL_NEXT_MATCH, "cep_reset": Strategy.STRICT}


@dataclass(frozen=True)
class StatsSnapshot:
    packets_in: int
    packets_dropped: int
    emissions: tuple[tuple[str, int], ...]
    states: tuple[tuple[str, int], ...]
    windows: tuple[tuple[str, int, int], ...]
    running: tuple[tuple[str, int], ...]

    def to_text(self) -> str:
        """``key=value`` lines: counters, emissions, states, windows, running."""
        lines = [f"packets_in={self.packets_in}", f"packets_dropped={self.packets_dropped}"]
        lines += [f"emissions.{name}={n}" for name, n in self.emissions]
        lines += [f"state.{name}={q}" for name, q in self.states]
        for name, head, fill in self.windows:
            lines += [f"window.{name}.head={head}", f"window.{name}.fill={fill}"]
        lines += [f"running.{name}.count={n}" for name, n in self.running]
        return "\n".join(lines) + "\n"

    @property
    def emission_counts(self) -> dict[str, int]:
        return dict(self.emissions)


def _check_program(program: CompiledProgram) -> None:
    n_pred = len(program.predicates)
    if len(program.returns) != len(program.machines):
        raise InvalidProgramError("one return plan per machine is required")
    names = [m.name for m in program.machines]
    if len(set(names)) != len(names):
        raise InvalidProgramError("machine names must be unique")
    plans = program.window_index
    fields = program.field_widths
    for _, expr in program.predicates:
        for op in (expr.lhs, expr.rhs):
            if isinstance(op, AggRef) and plan_name(op) not in plans:
                raise InvalidProgramError(f"predicate {expr} reads unknown window {op.target}")
    for plan in program.windows:
        if plan.source is not None and plan.source.name not in fields:
            raise InvalidProgramError(f"window {plan.name} reads undeclared field {plan.source}")
        if plan.kind == "running" and plan.owner is not None and plan.owner not in names:
            raise InvalidProgramError(f"running plan {plan.name} has unknown owner")
    for m, ret in zip(program.machines, program.returns):
        if m.strategy is None:
            raise InvalidProgramError(f"machine {m.name} has no strategy")
        if not 0 <= m.initial < m.n_states or m.initial in m.accepting:
            raise InvalidProgramError(f"machine {m.name} has an invalid initial state")
        seen = set()
        for r in m.rows:
            if (r.q, r.x) in seen:
                raise InvalidProgramError(f"machine {m.name} is not deterministic at {r.q},{r.x}")
            seen.add((r.q, r.x))
            if not (0 <= r.q < m.n_states and 0 <= r.q_n < m.n_states and 0 <= r.x < n_pred):
                raise InvalidProgramError(f"machine {m.name}: row {r} out of range")
            if r.q in m.accepting or r.is_accepting != (r.q_n in m.accepting):
                raise InvalidProgramError(f"machine {m.name}: row {r} breaks acceptance rules")
        if ret.kind == "aggregate" and ret.plan not in plans:
            raise InvalidProgramError(f"machine {m.name} returns from unknown plan {ret.plan}")


class EngineHandle:
    """A deployed engine plus the lock that serialises all access to it."""

    def __init__(self, program: CompiledProgram):
        self._engine = Engine(program)
        self._lock = threading.Lock()
        self._tables = {table_name(j, m.name): m.name for j, m in enumerate(program.machines)}

    @property
    def program(self) -> CompiledProgram:
        return self._engine.program

    @property
    def ops(self) -> int:
        return self._engine.counter.ops

    def ingest(self, pkt: EventPacket) -> list[Emission]:
        with self._lock:
            return self._engine.ingest(pkt)

    def run(self, packets: Iterable[EventPacket]) -> list[Emission]:
        out: list[Emission] = []
        for pkt in packets:
            with self._lock:
                out.extend(self._engine.run([pkt]))
        return out

    def rows(self, machine: str) -> list[TransitionRow]:
        with self._lock:
            return self._engine.table(machine).rows()

    def current_state(self, machine: str) -> int:
        with self._lock:
            return self._engine.current[machine]

    # -- updates -----------------------------------------------------------

    def _machine(self, machine: str):
        try:
            return self._engine.table(machine)
        except KeyError:
            raise TableUpdateError(f"unknown machine {machine!r}") from None

    def update_table(self, machine: str, rows: Sequence[TransitionRow],
                     mode: str = "replace") -> int:
        """Apply ``rows`` atomically; returns the number of rows applied.

        ``add`` rejects rows whose ``(q, x)`` key already exists, ``replace``
        inserts or overwrites, ``delete`` removes existing keys (``q_n`` and
        ``is_accepting`` are ignored). Nothing is applied if any row fails.
        """
        if mode not in UPDATE_MODES:
            raise TableUpdateError(f"unknown update mode {mode!r}")
        with self._lock:
            table = self._machine(machine)
            n_pred = len(self.program.predicates)
            keys = set()
            for r in rows:
                key = (r.q, r.x)
                if not 0 <= r.q < table.n_states or r.q in table.accepting:
                    raise TableUpdateError(f"{machine}: invalid source state {r.q}")
                if not 0 <= r.x < n_pred:
                    raise TableUpdateError(f"{machine}: unknown predicate id {r.x}")
                if key in keys:
                    raise TableUpdateError(f"{machine}: key {key} appears twice in one update")
                keys.add(key)
                if mode == "delete":
                    if key not in table.delta:
                        raise TableUpdateError(f"{machine}: no row for key {key}")
                    continue
                if not 0 <= r.q_n < table.n_states:
                    raise TableUpdateError(f"{machine}: invalid target state {r.q_n}")
                if r.is_accepting != (r.q_n in table.accepting):
                    raise TableUpdateError(
                        f"{machine}: is_accepting must be {r.q_n in table.accepting} for {r.q_n}")
                if mode == "add" and key in table.delta:
                    raise TableUpdateError(f"{machine}: key {key} exists; use replace")
            for r in rows:
                if mode == "delete":
                    del table.delta[(r.q, r.x)]
                else:
                    table.delta[(r.q, r.x)] = (r.q_n, r.is_accepting)
            return len(rows)

    def set_default(self, machine: str, strategy: Strategy) -> None:
        with self._lock:
            self._machine(machine).strategy = strategy

    def apply_entries(self, text: str, mode: str = "replace") -> int:
        """Apply a table-entry file in the format produced by code generation."""
        defaults, rows = parse_table_entries(text, self._tables)
        applied = 0
        for machine, batch in rows.items():
            applied += self.update_table(machine, batch, mode)
        for machine, strategy in defaults.items():
            self.set_default(machine, strategy)
        return applied

    def force_state(self, machine: str, state_id: int) -> None:
        with self._lock:
            table = self._machine(machine)
            if not 0 <= state_id < table.n_states:
                raise TableUpdateError(f"{machine}: no state {state_id}")
            if state_id in table.accepting:
                raise TableUpdateError(f"{machine}: state {state_id} is accepting")
            self._engine.set_state(machine, state_id)

    def snapshot(self) -> StatsSnapshot:
        with self._lock:
            e = self._engine
            return StatsSnapshot(
                packets_in=e.stats.packets_in,
                packets_dropped=e.stats.packets_dropped,
                emissions=tuple((m.name, e.stats.emissions[m.name]) for m in e.tables),
                states=tuple((m.name, e.current[m.name]) for m in e.tables),
                windows=tuple((name, w.head, w.fill) for name, w in e.windows.items()),
                running=tuple((name, acc.count) for name, acc in e.running.items()),
            )


def deploy(program: CompiledProgram) -> EngineHandle:
    """Validate ``program`` and start a fresh engine for it."""
    _check_program(program)
    return EngineHandle(program)


def parse_table_entries(text: str, tables: dict[str, str]
                        ) -> tuple[dict[str, Strategy], dict[str, list[TransitionRow]]]:
    """Parse ``table_add`` / ``table_set_default`` lines.

    ``tables`` maps generated table names to machine names. Returns the
    default strategies and the rows grouped by machine, in file order.
    """
    defaults: dict[str, Strategy] = {}
    rows: dict[str, list[TransitionRow]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            machine = tables[parts[1]]
        except (IndexError, KeyError):
            raise TableUpdateError(f"line {lineno}: unknown table") from None
        if parts[0] == "table_set_default" and len(parts) == 3 and parts[2] in _DEFAULT_ACTIONS:
            defaults[machine] = _DEFAULT_ACTIONS[parts[2]]
        elif (parts[0] == "table_add" and len(parts) == 8 and parts[2] == "do_transition"
              and parts[5] == "=>"):
            try:
                q, x, qn, acc = (int(v) for v in parts[3:5] + parts[6:8])
            except ValueError:
                raise TableUpdateError(f"line {lineno}: non-numeric field") from None
            if acc not in (0, 1) or x == NO_MATCH:
                raise TableUpdateError(f"line {lineno}: bad row values")
            rows.setdefault(machine, []).append(TransitionRow(q, x, qn, bool(acc)))
        else:
            raise TableUpdateError(f"line {lineno}: unrecognised entry {raw.strip()!r}")
    return defaults, rows
