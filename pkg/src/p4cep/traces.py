"""CSV event traces: one header row of field names, one event per row."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .engine import EventPacket
from .errors import TraceFormatError

__all__ = ["parse_trace", "read_trace", "format_trace", "write_trace", "random_trace"]


def parse_trace(text: str, widths: Mapping[str, int] | None = None) -> list[EventPacket]:
    """Parse trace CSV text; sequence numbers start at 1 on the first data row.

    With ``widths`` given, every column named there must be present and every
    value must fit its width. Errors carry the 1-based row number of the file
    (the header is row 1).
    """
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header is None:
        if widths:
            raise TraceFormatError("empty trace has no header row", 1)
        return []
    names = [h.strip() for h in header]
    if len(set(names)) != len(names) or not all(names):
        raise TraceFormatError("header has blank or repeated column names", 1)
    if widths:
        missing = sorted(set(widths) - set(names))
        if missing:
            raise TraceFormatError(f"header lacks required fields {', '.join(missing)}", 1)
    packets = []
    for row_no, row in enumerate(rows, 2):
        if not row:
            continue
        if len(row) != len(names):
            raise TraceFormatError(
                f"expected {len(names)} columns, found {len(row)}", row_no)
        fields = {}
        for name, cell in zip(names, row):
            cell = cell.strip()
            if not cell.isdigit():
                raise TraceFormatError(f"{name}: {cell!r} is not an unsigned integer", row_no)
            value = int(cell)
            if widths and name in widths and value >= 1 << widths[name]:
                raise TraceFormatError(
                    f"{name}={value} does not fit in {widths[name]} bits", row_no)
            fields[name] = value
        packets.append(EventPacket(len(packets) + 1, fields))
    return packets


def read_trace(path: str | Path, widths: Mapping[str, int] | None = None) -> list[EventPacket]:
    return parse_trace(Path(path).read_text(), widths)


def format_trace(packets: Iterable[EventPacket], columns: Iterable[str] | None = None) -> str:
    packets = list(packets)
    if columns is None:
        columns = sorted(packets[0].fields) if packets else []
    columns = list(columns)
    lines = [",".join(columns)]
    lines += [",".join(str(p.fields[c]) for c in columns) for p in packets]
    return "\n".join(lines) + "\n"


def write_trace(path: str | Path, packets: Iterable[EventPacket],
                columns: Iterable[str] | None = None) -> None:
    Path(path).write_text(format_trace(packets, columns))


def random_trace(widths: Mapping[str, int], n_events: int, seed: int = 0,
                 limits: Mapping[str, int] | None = None) -> list[EventPacket]:
    """Uniform random events; ``limits`` caps a field's values below ``2**width``."""
    rng = np.random.default_rng(seed)
    names = sorted(widths)
    cols = {}
    for name in names:
        high = 1 << widths[name]
        if limits and name in limits:
            high = min(high, limits[name])
        cols[name] = rng.integers(0, high, size=n_events, dtype=np.uint64).tolist()
    return [EventPacket(i + 1, {name: cols[name][i] for name in names})
            for i in range(n_events)]
