"""Ring-buffer windows with register-style unsigned arithmetic."""

from __future__ import annotations

from typing import Iterable

from .errors import WarmUpError

__all__ = [
    "WindowState", "RunningAggregate", "OpCounter",
    "window_insert", "window_aggregate", "window_average",
]


class OpCounter:
    """Counts primitive data-plane operations (inserts, slot visits, lookups)."""

    __slots__ = ("ops",)

    def __init__(self) -> None:
        self.ops = 0


class WindowState:
    """Fixed-capacity FIFO of ``width``-bit unsigned values.

    ``slots`` is the physical register array. Writes go to ``head`` which then
    advances modulo the capacity, so until the buffer wraps the filled slots
    are exactly ``slots[:fill]``. Aggregation walks every slot, mirroring an
    unrolled loop, and skips the ones not yet written.
    """

    def __init__(self, capacity: int, width: int = 32, predicate: bool = False):
        if capacity < 1:
            raise ValueError("window capacity must be positive")
        self.capacity = capacity
        self.width = width
        self.mask = (1 << width) - 1
        self.predicate = predicate
        self.slots = [0] * capacity
        self.head = 0
        self.fill = 0

    def __repr__(self) -> str:
        return (f"WindowState(capacity={self.capacity}, head={self.head}, "
                f"fill={self.fill}, contents={self.contents()})")

    def copy(self) -> "WindowState":
        other = WindowState(self.capacity, self.width, self.predicate)
        other.slots = list(self.slots)
        other.head, other.fill = self.head, self.fill
        return other

    def contents(self) -> list[int]:
        """Stored values, oldest first."""
        if self.fill < self.capacity:
            return self.slots[:self.fill]
        return self.slots[self.head:] + self.slots[:self.head]

    def insert(self, value: int) -> "WindowState":
        self.slots[self.head] = value & self.mask
        self.head = (self.head + 1) % self.capacity
        if self.fill < self.capacity:
            self.fill += 1
        return self

    def checkpoint(self) -> tuple[int, int, int]:
        return self.head, self.fill, self.slots[self.head]

    def rollback(self, cp: tuple[int, int, int]) -> None:
        self.head, self.fill, old = cp
        self.slots[self.head] = old

    def aggregate_many(self, funcs: Iterable[str], counter: OpCounter | None = None
                       ) -> dict[str, int | None]:
        """Fold every requested function in a single guarded pass.

        ``avg`` maps to ``None`` while the window is still warming up. It is
        taken from an accumulator ``log2(capacity)`` bits wider than the
        slots, so it never wraps even when ``sum`` does.
        """
        funcs = tuple(funcs)
        total, lo, hi = 0, self.mask, 0
        for i in range(self.capacity):
            if i < self.fill:
                v = self.slots[i]
                total += v
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
        if counter is not None:
            counter.ops += self.capacity
        out: dict[str, int | None] = {}
        for f in funcs:
            if f in ("sum", "count"):
                out[f] = total & self.mask
            elif f == "min":
                out[f] = lo
            elif f == "max":
                out[f] = hi
            elif f == "avg":
                if self.capacity & (self.capacity - 1):
                    raise ValueError("average needs a power-of-two capacity")
                out[f] = self._shifted(total) if self.fill == self.capacity else None
            else:
                raise ValueError(f"unknown aggregate {f!r}")
        return out

    def aggregate(self, func: str) -> int:
        if func == "avg":
            return self.average()
        if func == "count" and not self.predicate:
            raise ValueError("count is only defined on predicate-outcome windows")
        return self.aggregate_many((func,))[func]

    def average(self) -> int:
        if self.capacity & (self.capacity - 1):
            raise ValueError(f"average needs a power-of-two capacity, got {self.capacity}")
        if self.fill < self.capacity:
            raise WarmUpError(
                f"average undefined until the window is full ({self.fill}/{self.capacity})")
        return self.aggregate_many(("avg",))["avg"]

    def _shifted(self, total: int) -> int:
        return total >> (self.capacity.bit_length() - 1)


class RunningAggregate:
    """Unbounded accumulator over a header field (sum, min or max)."""

    def __init__(self, func: str, width: int = 32):
        if func not in ("sum", "min", "max"):
            raise ValueError(f"running aggregate does not support {func!r}")
        self.func = func
        self.width = width
        self.mask = (1 << width) - 1
        self.reset()

    def reset(self) -> None:
        self.value = self.mask if self.func == "min" else 0
        self.count = 0

    def update(self, v: int) -> None:
        if self.func == "sum":
            self.value = (self.value + v) & self.mask
        elif self.func == "min":
            self.value = min(self.value, v)
        else:
            self.value = max(self.value, v)
        self.count += 1

    def checkpoint(self) -> tuple[int, int]:
        return self.value, self.count

    def rollback(self, cp: tuple[int, int]) -> None:
        self.value, self.count = cp


def window_insert(w: WindowState, v: int) -> WindowState:
    return w.insert(v)


def window_aggregate(w: WindowState, func: str) -> int:
    return w.aggregate(func)


def window_average(w: WindowState) -> int:
    return w.average()
