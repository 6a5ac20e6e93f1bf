"""Trace and segment CSV files.

Trace CSV: header ``timestamp_s,current_a`` with an optional ``voltage_v``
column. Timestamps carry 6 decimals and currents 17 significant digits, which
round-trips float64 samples exactly. Large files are read in chunks into a
disk-backed array so analysis never holds the whole trace in memory.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import pandas as pd

from .core import DEFAULT_SUPPLY_V, CurrentTrace, Segment, SegmentKind, Source

__all__ = [
    "TraceFormatError",
    "TRACE_COLUMNS",
    "write_trace_csv",
    "read_trace_csv",
    "load_trace_memmap",
    "write_segments_csv",
    "read_segments_csv",
    "parse_column_map",
]

TRACE_COLUMNS = ("timestamp_s", "current_a", "voltage_v")
READ_CHUNK_ROWS = 1 << 20
RATE_TOLERANCE = 0.01


class TraceFormatError(ValueError):
    pass


def write_trace_csv(path: str | Path, chunks: Iterable[np.ndarray], rate_hz: float,
                    voltage_v: float | None = None, t0: float = 0.0) -> int:
    """Stream sample chunks to CSV; returns the number of rows written."""
    n = 0
    row = "%.6f,%.16e\n" if voltage_v is None else f"%.6f,%.16e,{voltage_v:.6g}\n"
    with open(path, "w", newline="") as f:
        cols = ["timestamp_s", "current_a"] + (["voltage_v"] if voltage_v is not None else [])
        f.write(",".join(cols) + "\n")
        for c in chunks:
            ts = t0 + (n + np.arange(c.size)) / rate_hz
            f.write("".join(map(row.__mod__, zip(ts.tolist(), c.tolist()))))
            n += c.size
    return n


def parse_column_map(text: str | None) -> dict[str, str]:
    """``"timestamp_s=Time (s),current_a=Main current"`` -> {file column: canonical name}."""
    if not text:
        return {}
    out = {}
    for part in text.split(","):
        if "=" not in part:
            raise TraceFormatError(f"column map entry {part!r} is not canonical=source")
        canon, src = (s.strip() for s in part.split("=", 1))
        if canon not in TRACE_COLUMNS:
            raise TraceFormatError(f"unknown canonical column {canon!r}; expected one of {TRACE_COLUMNS}")
        out[src] = canon
    return out


def _iter_chunks(path: Path, column_map: dict[str, str],
                 chunk_rows: int) -> Iterator[tuple[int, pd.DataFrame]]:
    try:
        reader = pd.read_csv(path, chunksize=chunk_rows, dtype=str, skipinitialspace=True,
                             keep_default_na=False)
        row = 0
        for df in reader:
            df = df.rename(columns=column_map)
            yield row, df
            row += len(df)
    except pd.errors.EmptyDataError:
        raise TraceFormatError(f"{path}: empty file") from None
    except pd.errors.ParserError as e:
        raise TraceFormatError(f"{path}: {e}") from None


def _numeric(df: pd.DataFrame, col: str, first_row: int, path: Path) -> np.ndarray:
    try:
        # Python's float() rounds correctly, so written samples read back exactly
        v = df[col].to_numpy(dtype=object).astype(float)
    except ValueError:
        v = pd.to_numeric(df[col], errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(v)
    if col == "current_a":
        bad |= v < 0
    if bad.any():
        # line 1 is the header
        lines = (np.flatnonzero(bad)[:10] + first_row + 2).tolist()
        raise TraceFormatError(f"{path}: malformed {col} value on line(s) {lines}")
    return v


class _RateCheck:
    def __init__(self, rate_hz: float | None):
        self.rate = rate_hz
        self.t_first: float | None = None
        self.t_last: float | None = None

    def feed(self, ts: np.ndarray, first_row: int, path: Path) -> None:
        if ts.size == 0:
            return
        if self.t_first is None:
            self.t_first = ts[0]
            if self.rate is None:
                if ts.size < 2:
                    raise TraceFormatError(f"{path}: cannot infer sample rate from one row")
                dt = float(np.median(np.diff(ts[:4096])))
                if not dt > 0:
                    raise TraceFormatError(f"{path}: timestamps are not increasing")
                self.rate = float(round(1.0 / dt, 6))
        full = ts if self.t_last is None else np.concatenate(([self.t_last], ts))
        d = np.diff(full)
        expect = 1.0 / self.rate
        bad = np.abs(d - expect) > RATE_TOLERANCE * expect
        if bad.any():
            k = int(np.flatnonzero(bad)[0]) + (0 if self.t_last is None else -1)
            raise TraceFormatError(f"{path}: non-uniform timestamp step on line {first_row + k + 3}")
        self.t_last = ts[-1]


def _ingest(path: Path, sink, column_map: dict[str, str], rate_hz: float | None,
            voltage_v: float | None, chunk_rows: int) -> tuple[int, float, float, float]:
    rc = _RateCheck(rate_hz)
    volt = voltage_v
    n = 0
    for first_row, df in _iter_chunks(path, column_map, chunk_rows):
        missing = [c for c in ("timestamp_s", "current_a") if c not in df.columns]
        if missing:
            raise TraceFormatError(f"{path}: missing column(s) {missing}; found {list(df.columns)} "
                                   "(use a column map for other exports)")
        ts = _numeric(df, "timestamp_s", first_row, path)
        cur = _numeric(df, "current_a", first_row, path)
        if "voltage_v" in df.columns and voltage_v is None:
            vv = _numeric(df, "voltage_v", first_row, path)
            if volt is None:
                volt = float(vv[0])
            if not np.allclose(vv, volt, rtol=1e-6, atol=0):
                raise TraceFormatError(f"{path}: supply voltage is not constant")
        rc.feed(ts, first_row, path)
        sink(cur)
        n += cur.size
    if n == 0:
        raise TraceFormatError(f"{path}: no samples")
    return n, rc.rate, (volt if volt is not None else DEFAULT_SUPPLY_V), float(rc.t_first)


def read_trace_csv(path: str | Path, *, column_map: dict[str, str] | None = None,
                   rate_hz: float | None = None, voltage_v: float | None = None,
                   chunk_rows: int = READ_CHUNK_ROWS) -> CurrentTrace:
    """Read a whole trace into memory."""
    parts: list[np.ndarray] = []
    n, rate, volt, t0 = _ingest(Path(path), parts.append, column_map or {}, rate_hz, voltage_v,
                                chunk_rows)
    return CurrentTrace(np.concatenate(parts), rate, volt, t0)


def load_trace_memmap(path: str | Path, scratch: str | Path, *,
                      column_map: dict[str, str] | None = None, rate_hz: float | None = None,
                      voltage_v: float | None = None,
                      chunk_rows: int = READ_CHUNK_ROWS) -> CurrentTrace:
    """First pass of the streaming pipeline: CSV chunks into a raw float64 file.

    The returned trace is backed by a read-only memory map of ``scratch``.
    """
    scratch = Path(scratch)
    with open(scratch, "wb") as raw:
        n, rate, volt, t0 = _ingest(Path(path), lambda c: raw.write(c.astype("<f8").tobytes()),
                                    column_map or {}, rate_hz, voltage_v, chunk_rows)
    mm = np.memmap(scratch, dtype="<f8", mode="r", shape=(n,))
    return CurrentTrace(mm, rate, volt, t0)


def write_segments_csv(path: str | Path, segments: Sequence[Segment],
                       energies_j: Sequence[float] | None = None) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        if energies_j is None:
            w.writerow(["kind", "start_idx", "end_idx"])
            for s in segments:
                w.writerow([s.kind.value, s.start_idx, s.end_idx])
        else:
            w.writerow(["kind", "start_idx", "end_idx", "energy_j"])
            for s, e in zip(segments, energies_j, strict=True):
                w.writerow([s.kind.value, s.start_idx, s.end_idx, repr(float(e))])


def read_segments_csv(path: str | Path, source: Source = Source.GroundTruth) -> list[Segment]:
    out = []
    with open(path, newline="") as f:
        r = csv.DictReader(f)
        if r.fieldnames is None or not {"kind", "start_idx", "end_idx"} <= set(r.fieldnames):
            raise TraceFormatError(f"{path}: expected columns kind,start_idx,end_idx")
        for line, row in enumerate(r, start=2):
            try:
                out.append(Segment(int(row["start_idx"]), int(row["end_idx"]),
                                   SegmentKind(row["kind"]), source))
            except (ValueError, TypeError) as e:
                raise TraceFormatError(f"{path}: line {line}: {e}") from None
    return out

