"""Compile complex-event patterns into deterministic transition tables.

Each pattern becomes a machine ``(Sigma, S, s0, delta, F)`` whose input
alphabet is the set of predicate ids. Construction goes through an
epsilon-NFA (Thompson fragments for ``;`` and ``||``, a shuffle product for
``&&``) followed by subset construction. All accepting subsets collapse into
one terminal accepting state, so a machine signals the earliest completed
match and is then reset by the engine.
"""

from __future__ import annotations

import dataclasses
from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Sequence

from .rules import (
    AggRef,
    And,
    ComplexEventDecl,
    FieldRef,
    Or,
    PatternNode,
    Pred,
    PredicateExpr,
    RuleAst,
    Seq,
    Strategy,
    pattern_leaves,
)

__all__ = [
    "NO_MATCH", "DEFAULT_WIDTH", "TransitionRow", "PredicateTable", "NFA",
    "StateMachine", "WindowPlan", "ReturnPlan", "CompiledProgram",
    "extract_predicates", "build_nfa", "subset_dfa", "determinize",
    "apply_strategy", "compile_rules", "plan_name",
]

#: Symbol used when no predicate holds for a packet.
NO_MATCH = -1
DEFAULT_WIDTH = 32


@dataclass(frozen=True, order=True)
class TransitionRow:
    q: int
    x: int
    q_n: int
    is_accepting: bool


@dataclass(frozen=True)
class PredicateTable:
    """Predicates in first-occurrence order; the position is the symbol id."""

    predicates: tuple[PredicateExpr, ...] = ()

    def __len__(self) -> int:
        return len(self.predicates)

    def __iter__(self) -> Iterator[tuple[int, PredicateExpr]]:
        return iter(enumerate(self.predicates))

    def __getitem__(self, x: int) -> PredicateExpr:
        return self.predicates[x]

    def id_of(self, expr: PredicateExpr) -> int:
        return self._index[expr]

    @cached_property
    def _index(self) -> dict[PredicateExpr, int]:
        return {p: i for i, p in enumerate(self.predicates)}


def extract_predicates(ast: RuleAst) -> PredicateTable:
    seen: dict[PredicateExpr, None] = {}
    for event in ast.events:
        for leaf in pattern_leaves(event.pattern):
            seen.setdefault(leaf, None)
    return PredicateTable(tuple(seen))


# --------------------------------------------------------------------------
# NFA

class NFA:
    """Epsilon-NFA with a single start and a single final state."""

    def __init__(self) -> None:
        self.eps: list[list[int]] = []
        self.edges: list[list[tuple[int, int]]] = []
        self.start = 0
        self.final = 0

    @property
    def n_states(self) -> int:
        return len(self.eps)

    def add_state(self) -> int:
        self.eps.append([])
        self.edges.append([])
        return len(self.eps) - 1

    def embed(self, other: "NFA") -> int:
        offset = self.n_states
        for targets in other.eps:
            self.eps.append([t + offset for t in targets])
        for edges in other.edges:
            self.edges.append([(x, t + offset) for x, t in edges])
        return offset

    def closure(self, states: Iterable[int]) -> frozenset[int]:
        stack = list(states)
        seen = set(stack)
        while stack:
            for t in self.eps[stack.pop()]:
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
        return frozenset(seen)


def _symbol(nfa_x: int) -> NFA:
    nfa = NFA()
    nfa.start, nfa.final = nfa.add_state(), nfa.add_state()
    nfa.edges[nfa.start].append((nfa_x, nfa.final))
    return nfa


def _concat(a: NFA, b: NFA) -> NFA:
    nfa = NFA()
    oa, ob = nfa.embed(a), nfa.embed(b)
    nfa.eps[a.final + oa].append(b.start + ob)
    nfa.start, nfa.final = a.start + oa, b.final + ob
    return nfa


def _union(a: NFA, b: NFA) -> NFA:
    nfa = NFA()
    nfa.start = nfa.add_state()
    oa, ob = nfa.embed(a), nfa.embed(b)
    nfa.final = nfa.add_state()
    nfa.eps[nfa.start] += [a.start + oa, b.start + ob]
    nfa.eps[a.final + oa].append(nfa.final)
    nfa.eps[b.final + ob].append(nfa.final)
    return nfa


def _shuffle(a: NFA, b: NFA) -> NFA:
    # Product automaton where each move advances exactly one operand.
    nfa = NFA()
    index: dict[tuple[int, int], int] = {}

    def state(pair: tuple[int, int]) -> int:
        if pair not in index:
            index[pair] = nfa.add_state()
            work.append(pair)
        return index[pair]

    work: list[tuple[int, int]] = []
    nfa.start = state((a.start, b.start))
    while work:
        sa, sb = pair = work.pop()
        src = index[pair]
        for t in a.eps[sa]:
            nfa.eps[src].append(state((t, sb)))
        for t in b.eps[sb]:
            nfa.eps[src].append(state((sa, t)))
        for x, t in a.edges[sa]:
            nfa.edges[src].append((x, state((t, sb))))
        for x, t in b.edges[sb]:
            nfa.edges[src].append((x, state((sa, t))))
    nfa.final = state((a.final, b.final))
    return nfa


def build_nfa(pattern: PatternNode, table: PredicateTable) -> NFA:
    if isinstance(pattern, Pred):
        return _symbol(table.id_of(pattern.expr))
    left, right = build_nfa(pattern.left, table), build_nfa(pattern.right, table)
    if isinstance(pattern, Seq):
        return _concat(left, right)
    if isinstance(pattern, Or):
        return _union(left, right)
    if isinstance(pattern, And):
        return _shuffle(left, right)
    raise TypeError(f"not a pattern node: {pattern!r}")


# --------------------------------------------------------------------------
# DFA

def _moves(nfa: NFA, subset: frozenset[int]) -> dict[int, set[int]]:
    moves: dict[int, set[int]] = defaultdict(set)
    for s in subset:
        for x, t in nfa.edges[s]:
            moves[x].add(t)
    return moves


def subset_dfa(nfa: NFA) -> tuple[int, dict[tuple[int, int], int], frozenset[int]]:
    """Plain subset construction without collapsing accepting states.

    Returns ``(n_states, delta, accepting)``; state 0 is the start state.
    Recognises exactly the NFA's language, so it serves as a reference for
    :func:`determinize`.
    """
    start = nfa.closure([nfa.start])
    order, index = [start], {start: 0}
    delta: dict[tuple[int, int], int] = {}
    i = 0
    while i < len(order):
        for x, targets in sorted(_moves(nfa, order[i]).items()):
            t = nfa.closure(targets)
            if t not in index:
                index[t] = len(order)
                order.append(t)
            delta[(i, x)] = index[t]
        i += 1
    accepting = frozenset(i for i, s in enumerate(order) if nfa.final in s)
    return len(order), delta, accepting


@dataclass(frozen=True)
class StateMachine:
    """Deterministic machine; states are ``range(n_states)``.

    ``strategy`` decides what happens on a symbol without an explicit row:
    skip-till-next-match stays put, strict returns to ``initial``. ``None``
    means no default is attached yet and misses are undefined.
    """

    name: str
    n_states: int
    initial: int
    accepting: frozenset[int]
    rows: tuple[TransitionRow, ...]
    strategy: Strategy | None = None

    @property
    def states(self) -> range:
        return range(self.n_states)

    @cached_property
    def delta(self) -> dict[tuple[int, int], tuple[int, bool]]:
        return {(r.q, r.x): (r.q_n, r.is_accepting) for r in self.rows}

    def lookup(self, q: int, x: int) -> tuple[int, bool] | None:
        return self.delta.get((q, x))

    def step(self, q: int, symbol: int) -> tuple[int, bool]:
        hit = self.delta.get((q, symbol))
        if hit is not None:
            return hit
        if self.strategy is Strategy.STRICT:
            return self.initial, False
        if self.strategy is Strategy.SKIP_TILL_NEXT_MATCH:
            return q, False
        raise LookupError(f"no transition for ({q}, {symbol}) and no strategy set")

    def accepts(self, symbols: Sequence[int]) -> bool:
        """Exact-match acceptance using explicit rows only (misses reject)."""
        q = self.initial
        for i, x in enumerate(symbols):
            hit = self.delta.get((q, x))
            if hit is None:
                return False
            q, accepted = hit
            if accepted:
                return i == len(symbols) - 1
        return False


def determinize(nfa: NFA, name: str = "") -> StateMachine:
    """Subset construction with one terminal accepting state.

    State ids follow BFS discovery order from the start subset, expanding
    symbols in ascending id order, so the numbering is canonical.
    """
    start = nfa.closure([nfa.start])
    accept_id: int | None = None
    order: list[frozenset[int] | None] = [start]
    index = {start: 0}
    rows: list[TransitionRow] = []
    i = 0
    while i < len(order):
        subset = order[i]
        if subset is not None:
            for x, targets in sorted(_moves(nfa, subset).items()):
                t = nfa.closure(targets)
                if nfa.final in t:
                    if accept_id is None:
                        accept_id = len(order)
                        order.append(None)
                    rows.append(TransitionRow(i, x, accept_id, True))
                    continue
                if t not in index:
                    index[t] = len(order)
                    order.append(t)
                rows.append(TransitionRow(i, x, index[t], False))
        i += 1
    accepting = frozenset() if accept_id is None else frozenset([accept_id])
    return StateMachine(name, len(order), 0, accepting, tuple(sorted(rows)))


def apply_strategy(machine: StateMachine, strategy: Strategy) -> StateMachine:
    return dataclasses.replace(machine, strategy=strategy)


# --------------------------------------------------------------------------
# Program assembly

@dataclass(frozen=True)
class WindowPlan:
    """Storage needed for one aggregation source.

    ``kind`` is ``"value"`` (ring buffer of a header field), ``"predicate"``
    (ring buffer of 0/1 predicate outcomes) or ``"running"`` (unbounded
    accumulator over a header field). Running plans with an ``owner`` are
    restarted whenever that machine is at its initial state.
    """

    name: str
    kind: str
    capacity: int
    width: int
    aggregates: tuple[str, ...] = ()
    source: FieldRef | None = None
    predicate: PredicateExpr | None = None
    owner: str | None = None


@dataclass(frozen=True)
class ReturnPlan:
    kind: str  # "const" | "field" | "aggregate"
    const: int = 0
    field: FieldRef | None = None
    plan: str | None = None
    func: str | None = None

    def describe(self) -> str:
        if self.kind == "const":
            return str(self.const)
        if self.kind == "field":
            return str(self.field)
        return f"{self.func}({self.plan})"


def plan_name(ref: AggRef, owner: str | None = None) -> str:
    """Name of the window plan an aggregate reference reads from."""
    if ref.targets_window:
        return ref.target
    base = f"{ref.func}({ref.target.name})"
    return f"{owner}:{base}" if owner else base


@dataclass(frozen=True)
class CompiledProgram:
    predicates: PredicateTable
    machines: tuple[StateMachine, ...]
    windows: tuple[WindowPlan, ...]
    returns: tuple[ReturnPlan, ...]
    fields: tuple[tuple[str, int], ...]

    @cached_property
    def window_index(self) -> dict[str, WindowPlan]:
        return {w.name: w for w in self.windows}

    def machine(self, name: str) -> StateMachine:
        for m in self.machines:
            if m.name == name:
                return m
        raise KeyError(name)

    @property
    def field_widths(self) -> dict[str, int]:
        return dict(self.fields)


def _operands(expr: PredicateExpr):
    yield expr.lhs
    yield expr.rhs


def _require_bound(ref: FieldRef) -> FieldRef:
    if ref.width is None:
        raise ValueError(f"field {ref.name} is unresolved; validate the rules first")
    return ref


def _width(ref: FieldRef) -> int:
    return max(DEFAULT_WIDTH, ref.width)


class _PlanCollector:
    def __init__(self, ast: RuleAst):
        self.decls = {w.name: w for w in ast.windows}
        self.funcs: dict[str, dict[str, None]] = {w.name: {} for w in ast.windows}
        self.implicit: dict[str, WindowPlan] = {}
        self.fields: dict[str, int] = {}

    def field(self, ref: FieldRef) -> None:
        self.fields[ref.name] = _require_bound(ref).width

    def operand(self, op, owner: str | None = None) -> None:
        if isinstance(op, FieldRef):
            self.field(op)
        elif isinstance(op, AggRef):
            name = plan_name(op, owner)
            if op.targets_window:
                self.funcs[name].setdefault(op.func, None)
            else:
                self.field(op.target)
                self.implicit.setdefault(name, WindowPlan(
                    name, "running", 0, _width(op.target), (op.func,),
                    source=op.target, owner=owner))

    def plans(self) -> tuple[WindowPlan, ...]:
        out = []
        for name, decl in self.decls.items():
            aggs = tuple(self.funcs[name])
            if decl.is_predicate_window:
                out.append(WindowPlan(name, "predicate", decl.size, DEFAULT_WIDTH, aggs,
                                      predicate=decl.value))
            else:
                out.append(WindowPlan(name, "value", decl.size, _width(decl.value), aggs,
                                      source=decl.value))
        return tuple(out) + tuple(self.implicit.values())


def _return_plan(event: ComplexEventDecl, plans: _PlanCollector) -> ReturnPlan:
    ret = event.return_value
    plans.operand(ret, owner=event.name)
    if isinstance(ret, int):
        return ReturnPlan("const", const=ret % (1 << DEFAULT_WIDTH))
    if isinstance(ret, FieldRef):
        return ReturnPlan("field", field=ret)
    return ReturnPlan("aggregate", plan=plan_name(ret, event.name), func=ret.func)


def compile_rules(ast: RuleAst) -> CompiledProgram:
    """Compile a validated AST; one machine per complex event, in order."""
    table = extract_predicates(ast)
    plans = _PlanCollector(ast)
    for w in ast.windows:
        if w.is_predicate_window:
            for op in _operands(w.value):
                plans.operand(op)
        else:
            plans.field(w.value)
    for _, expr in table:
        for op in _operands(expr):
            plans.operand(op)

    machines, returns = [], []
    for event in ast.events:
        dfa = determinize(build_nfa(event.pattern, table), event.name)
        machines.append(apply_strategy(dfa, event.strategy))
        returns.append(_return_plan(event, plans))

    return CompiledProgram(
        predicates=table,
        machines=tuple(machines),
        windows=plans.plans(),
        returns=tuple(returns),
        fields=tuple(sorted(plans.fields.items())),
    )

