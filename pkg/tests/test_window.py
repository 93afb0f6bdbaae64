import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from p4cep.errors import WarmUpError
from p4cep.window import (
    OpCounter,
    RunningAggregate,
    WindowState,
    window_aggregate,
    window_average,
    window_insert,
)

from oracles import DequeWindow


def filled(n, values, **kw):
    w = WindowState(n, **kw)
    for v in values:
        w.insert(v)
    return w


def test_first_insert():
    w = window_insert(WindowState(3), 7)
    assert (w.slots, w.head, w.fill) == ([7, 0, 0], 1, 1)


def test_eviction_order():
    w = filled(3, [1, 2, 3]).insert(9)
    assert w.contents() == [2, 3, 9]


def test_long_run_keeps_last_n():
    assert filled(8, range(1, 11)).contents() == list(range(3, 11))


def test_sum():
    assert window_aggregate(filled(8, range(1, 9)), "sum") == 36


def test_min_ignores_unwritten_slots():
    w = filled(4, [5, 3])
    assert w.fill == 2
    assert w.aggregate("min") == 3
    assert w.aggregate("max") == 5


def test_empty_window_identities():
    w = WindowState(4, width=16)
    assert w.aggregate_many(("sum", "min", "max")) == {"sum": 0, "min": 0xFFFF, "max": 0}


def test_average_exact_and_truncating():
    assert window_average(filled(4, [2, 4, 6, 8])) == 5
    assert window_average(filled(4, [1, 1, 1, 2])) == 1


def test_average_warm_up():
    w = filled(4, [1, 2, 3])
    with pytest.raises(WarmUpError):
        w.average()
    assert w.aggregate_many(("avg",))["avg"] is None


def test_average_needs_power_of_two():
    with pytest.raises(ValueError):
        filled(6, range(6)).average()


def test_average_does_not_wrap():
    w = filled(4, [0xFF] * 4, width=8)
    assert w.aggregate("sum") == (4 * 0xFF) & 0xFF
    assert w.average() == 0xFF


def test_count_only_on_predicate_windows():
    with pytest.raises(ValueError):
        filled(4, [1, 0]).aggregate("count")
    assert filled(4, [1, 0, 1, 1, 0], predicate=True).aggregate("count") == 2


def test_sum_wraps_at_width():
    assert filled(2, [200, 100], width=8).aggregate("sum") == 300 & 0xFF


def test_fold_cost_is_capacity():
    counter = OpCounter()
    filled(16, [1]).aggregate_many(("sum", "min", "max"), counter)
    assert counter.ops == 16


def test_checkpoint_rollback():
    w = filled(3, [1, 2, 3])
    before = (list(w.slots), w.head, w.fill)
    cp = w.checkpoint()
    w.insert(99)
    w.rollback(cp)
    assert (w.slots, w.head, w.fill) == before


def test_copy_is_independent():
    w = filled(3, [1])
    c = w.copy().insert(5)
    assert w.contents() == [1] and c.contents() == [1, 5]


def test_invalid_capacity():
    with pytest.raises(ValueError):
        WindowState(0)


@pytest.mark.parametrize("func, values, expected", [
    ("sum", [3, 4, 5], 12), ("min", [3, 1, 5], 1), ("max", [3, 9, 5], 9)])
def test_running_aggregate(func, values, expected):
    acc = RunningAggregate(func)
    for v in values:
        acc.update(v)
    assert (acc.value, acc.count) == (expected, len(values))
    acc.reset()
    assert acc.count == 0


def test_running_rejects_count():
    with pytest.raises(ValueError):
        RunningAggregate("count")


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 64), st.sampled_from([8, 16, 32]), st.data())
def test_matches_deque(n, width, data):
    values = data.draw(st.lists(st.integers(0, (1 << width) - 1), max_size=3 * n))
    w, ref = WindowState(n, width), DequeWindow(n, width)
    for v in values:
        w.insert(v)
        ref.insert(v)
        assert w.contents() == list(ref.items)
    assert w.aggregate("sum") == ref.sum()
    assert w.aggregate("min") == ref.min()
    assert w.aggregate("max") == ref.max()
    if n & (n - 1) == 0 and len(values) >= n:
        assert w.average() == sum(ref.items) // n
