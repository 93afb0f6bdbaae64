import itertools
import random
from pathlib import Path

import pytest

from p4cep.compiler import (
    NO_MATCH,
    CompiledProgram,
    PredicateTable,
    StateMachine,
    TransitionRow,
    apply_strategy,
    build_nfa,
    compile_rules,
    determinize,
    extract_predicates,
    subset_dfa,
)
from p4cep.rules import And, Or, Pred, Seq, Strategy, parse_headers, parse_rules, validate

from gen import random_tree, symbol_leaves
from oracles import earliest, language

DATA = Path(__file__).parent / "data"
LISTING = (DATA / "listing1.rules").read_text()
HEADERS = parse_headers((DATA / "l3l4.headers").read_text())
X = symbol_leaves(6)
P = [Pred(x) for x in X]


def table_for(*trees):
    seen = {}
    for t in trees:
        for leaf in _leaves(t):
            seen.setdefault(leaf, None)
    return PredicateTable(tuple(seen))


def _leaves(node):
    if isinstance(node, Pred):
        return [node.expr]
    return _leaves(node.left) + _leaves(node.right)


def dfa_words(machine: StateMachine, max_len: int) -> set[tuple]:
    """Every string up to ``max_len`` the machine accepts, by exhaustive DFS."""
    out, stack = set(), [(machine.initial, ())]
    while stack:
        q, w = stack.pop()
        if len(w) == max_len:
            continue
        for (src, x), (qn, acc) in machine.delta.items():
            if src != q:
                continue
            if acc:
                out.add(w + (x,))
            else:
                stack.append((qn, w + (x,)))
    return out


class TestPredicates:
    def test_listing_ids(self):
        table = extract_predicates(parse_rules(LISTING))
        assert [str(e) for _, e in table] == [
            "ipv4.totalLen > 500", "tcp.dstPort == 80", "sum(sample_wnd) > 6000",
            "ipv4.protocol == 17"]

    def test_structural_dedup(self):
        ast = parse_rules("complex_event e { value 1 pattern [a.b==1] ; [a.b == 1] }")
        assert len(extract_predicates(ast)) == 1

    def test_dedup_across_events(self):
        ast = parse_rules("complex_event e { value 1 pattern [a.b==1] ; [a.c==2] }\n"
                          "complex_event f { value 1 pattern [a.c==2] || [a.b==3] }")
        assert [str(e) for _, e in extract_predicates(ast)] == ["a.b == 1", "a.c == 2", "a.b == 3"]

    def test_random_distinct_in_source_order(self):
        rng = random.Random(11)
        for _ in range(50):
            values = rng.sample(range(1000), 10)
            pattern = " ; ".join(f"[h.f == {v}]" for v in values)
            table = extract_predicates(parse_rules(f"complex_event e {{ value 1 pattern {pattern} }}"))
            assert [e.rhs for _, e in table] == values
            assert [x for x, _ in table] == list(range(10))


class TestConstruction:
    def test_single_predicate(self):
        table = table_for(P[0])
        nfa = build_nfa(P[0], table)
        m = determinize(nfa)
        assert m.n_states == 2
        assert m.rows == (TransitionRow(0, 0, 1, True),)

    def test_and_is_a_diamond(self):
        tree = And(P[0], P[1])
        m = determinize(build_nfa(tree, table_for(tree)))
        assert m.rows == (TransitionRow(0, 0, 1, False), TransitionRow(0, 1, 2, False),
                          TransitionRow(1, 1, 3, True), TransitionRow(2, 0, 3, True))

    def test_shuffle_of_sequence(self):
        tree = And(Seq(P[0], P[1]), P[2])
        table = table_for(tree)
        lang = language(tree, table.id_of)
        # every string of length <= 3 over the alphabet, against the oracle
        nfa = build_nfa(tree, table)
        n, delta, acc = subset_dfa(nfa)
        m = determinize(nfa)
        members = set()
        for k in range(4):
            for s in itertools.product(range(3), repeat=k):
                q, ok = 0, True
                for x in s:
                    if (q, x) not in delta:
                        ok = False
                        break
                    q = delta[(q, x)]
                assert (ok and q in acc) == (s in lang)
                assert m.accepts(s) == (s in lang)
                if s in lang:
                    members.add(s)
        assert members == {(0, 1, 2), (0, 2, 1), (2, 0, 1)}

    def test_listing_machine(self):
        program = compile_rules(validate(parse_rules(LISTING), HEADERS))
        (m,) = program.machines
        assert m.n_states == 5 and m.accepting == frozenset({4})
        assert [(r.q, r.x, r.q_n, r.is_accepting) for r in m.rows] == [
            (0, 0, 1, False), (0, 1, 2, False), (1, 1, 3, False), (2, 0, 3, False),
            (3, 2, 4, True), (3, 3, 4, True)]

    def test_two_state_fragment_is_fixed_point(self):
        m = determinize(build_nfa(P[3], table_for(P[3])))
        again = determinize(build_nfa(P[3], table_for(P[3])))
        assert m == again and m.n_states == 2

    def test_or_merges_into_one_accepting_state(self):
        tree = Or(P[0], Seq(P[1], P[2]))
        m = determinize(build_nfa(tree, table_for(tree)))
        assert len(m.accepting) == 1
        (acc,) = m.accepting
        assert not any(r.q == acc for r in m.rows)

    def test_earliest_match_semantics(self):
        # [x0] || ([x0] ; [x1]): the longer word is shadowed by its prefix
        tree = Or(P[0], Seq(P[0], P[1]))
        m = determinize(build_nfa(tree, table_for(tree)))
        assert m.accepts((0,)) and not m.accepts((0, 1))
        _, delta, acc = subset_dfa(build_nfa(tree, table_for(tree)))
        assert delta[(delta[(0, 0)], 1)] in acc


@pytest.mark.parametrize("seed", range(300))
def test_random_patterns_exhaustive(seed):
    rng = random.Random(seed)
    tree = random_tree(rng, X[:4], max_leaves=4, max_depth=3)
    table = table_for(tree)
    lang = language(tree, table.id_of)
    m = determinize(build_nfa(tree, table))
    assert dfa_words(m, 8) == {w for w in earliest(lang) if len(w) <= 8}
    assert m.initial == 0 and m.initial not in m.accepting
    keys = [(r.q, r.x) for r in m.rows]
    assert len(keys) == len(set(keys))
    assert all(r.is_accepting == (r.q_n in m.accepting) for r in m.rows)


class TestStrategies:
    def listing_machine(self, strategy=Strategy.SKIP_TILL_NEXT_MATCH):
        program = compile_rules(validate(parse_rules(LISTING), HEADERS))
        return apply_strategy(program.machines[0], strategy)

    def test_skip_self_loops_on_non_accepting(self):
        m = self.listing_machine()
        for q in range(4):
            for x in (NO_MATCH, 0, 1, 2, 3):
                if m.lookup(q, x) is None:
                    assert m.step(q, x) == (q, False)

    def test_strict_resets(self):
        m = self.listing_machine(Strategy.STRICT)
        assert m.step(1, 3) == (0, False)
        assert m.step(1, NO_MATCH) == (0, False)
        assert m.step(1, 1) == (3, False)

    def test_accepting_transition(self):
        assert self.listing_machine().step(3, 3) == (4, True)

    def test_no_strategy_is_partial(self):
        m = determinize(build_nfa(P[0], table_for(P[0])))
        with pytest.raises(LookupError):
            m.step(0, 5)

    @pytest.mark.parametrize("strategy", list(Strategy))
    def test_total_after_completion(self, strategy):
        rng = random.Random(5)
        for _ in range(100):
            tree = random_tree(rng, X[:4])
            table = table_for(tree)
            m = apply_strategy(determinize(build_nfa(tree, table)), strategy)
            # accepting states are never occupied: the engine resets on entry
            for q in set(m.states) - m.accepting:
                for x in (NO_MATCH, *range(len(table))):
                    qn, acc = m.step(q, x)
                    assert qn in m.states and acc == (qn in m.accepting)


class TestProgram:
    def test_listing(self):
        program = compile_rules(validate(parse_rules(LISTING), HEADERS))
        assert len(program.machines) == 1 and len(program.predicates) == 4
        assert [(w.name, w.kind) for w in program.windows] == [
            ("sample_wnd", "value"), ("sample_evt:sum(ipv4.totalLen)", "running")]
        assert program.windows[1].owner == "sample_evt"
        assert program.returns[0].describe() == "sum(sample_evt:sum(ipv4.totalLen))"

    def test_empty(self):
        program = compile_rules(validate(parse_rules(""), {}))
        assert program == CompiledProgram(PredicateTable(), (), (), (), ())

    def test_machines_follow_declaration_order(self):
        text = ("complex_event zeta { value 1 pattern [a.b == 1] }\n"
                "complex_event alpha { value 2 pattern [a.b == 2] }")
        program = compile_rules(validate(parse_rules(text), {"a.b": 8}))
        assert [m.name for m in program.machines] == ["zeta", "alpha"]

    def test_global_and_event_running_plans_are_separate(self):
        text = "complex_event e { value max(a.b) pattern [max(a.b) > 3] }"
        program = compile_rules(validate(parse_rules(text), {"a.b": 8}))
        assert {(w.name, w.owner) for w in program.windows} == {
            ("max(a.b)", None), ("e:max(a.b)", "e")}

    def test_widths(self):
        text = "window w { size 2 value a.b }\ncomplex_event e { value 1 pattern [sum(w) > 1] }"
        program = compile_rules(validate(parse_rules(text), {"a.b": 48}))
        assert program.windows[0].width == 48
        program = compile_rules(validate(parse_rules(text), {"a.b": 4}))
        assert program.windows[0].width == 32

    def test_requires_validation(self):
        with pytest.raises(ValueError):
            compile_rules(parse_rules(LISTING))
