"""Clock time to transaction time mapping for one calendar year.

Transaction time advances with cumulative trading weight normalized so
the year spans exactly its number of clock hours (8760, or 8784 in leap
years): one dollar-weighted hour is an interval containing 1/8760 of the
year's dollar trading volume. Weights accumulate at one-minute (candle)
granularity; the map is linear within a minute and flat across spans
with no trading, so no transaction time elapses between sessions.

Supported weightings: dollar volume (representative price x shares),
share volume, and the identity clock (plain rescaled clock time).
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .candles import CandleSeries
from .errors import DataError


class ClockKind(enum.Enum):
    CLOCK = "clock"
    DOLLAR_WEIGHTED = "dollar"
    VOLUME_WEIGHTED = "volume"


def year_bounds(year: int) -> tuple[int, int]:
    """Unix seconds of Jan 1 00:00 UTC for this year and the next."""
    t0 = int(datetime(year, 1, 1, tzinfo=timezone.utc).timestamp())
    t1 = int(datetime(year + 1, 1, 1, tzinfo=timezone.utc).timestamp())
    return t0, t1


def hours_in_year(year: int) -> int:
    t0, t1 = year_bounds(year)
    return (t1 - t0) // 3600


@dataclass
class ClockMap:
    """Monotone piecewise-linear map between unix seconds and txn hours."""

    year: int
    kind: ClockKind
    knots_clock: np.ndarray   # unix seconds, strictly increasing
    knots_txn: np.ndarray     # transaction hours, non-decreasing
    total_txn_hours: float

    @property
    def year_start(self) -> int:
        return int(self.knots_clock[0])

    @property
    def year_end(self) -> int:
        return int(self.knots_clock[-1])

    def to_txn_time(self, t):
        """Transaction-hour coordinate(s) of unix time(s) t."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.knots_clock[0]) or np.any(t > self.knots_clock[-1]):
            raise DataError(f"time outside clock domain for year {self.year}")
        out = np.interp(t, self.knots_clock, self.knots_txn)
        return float(out) if out.ndim == 0 else out

    def to_clock_time(self, txn):
        """Inverse map; flat spans resolve to their earliest clock time.

        A value attained over a flat clock span returns the span's start;
        values strictly inside a rising segment invert exactly (segments
        rise from the last knot of one txn level to the first knot of
        the next).
        """
        scalar = np.ndim(txn) == 0
        q = np.atleast_1d(np.asarray(txn, dtype=float))
        if np.any(q < 0) or np.any(q > self.total_txn_hours):
            raise DataError(f"transaction time outside [0, {self.total_txn_hours}]")
        vals, first_idx = np.unique(self.knots_txn, return_index=True)
        last_idx = np.searchsorted(self.knots_txn, vals, side="right") - 1
        fp_first = self.knots_clock[first_idx].astype(float)
        fp_last = self.knots_clock[last_idx].astype(float)
        pos = np.minimum(np.searchsorted(vals, q, side="left"), len(vals) - 1)
        out = fp_first[pos].copy()
        inside = vals[pos] != q           # strictly between two txn levels
        if np.any(inside):
            hi = pos[inside]
            lo = hi - 1
            frac = (q[inside] - vals[lo]) / (vals[hi] - vals[lo])
            out[inside] = fp_last[lo] + frac * (fp_first[hi] - fp_last[lo])
        return float(out[0]) if scalar else out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["clock_unix", "txn_hours"])
            for c, x in zip(self.knots_clock, self.knots_txn):
                w.writerow([int(c), repr(float(x))])


def read_clock_csv(path, year: int, kind: ClockKind = ClockKind.CLOCK) -> ClockMap:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return ClockMap(year, kind, data[:, 0], data[:, 1], float(data[-1, 1]))


def build_clock(all_candles, kind: ClockKind, year: int) -> ClockMap:
    """Accumulate per-minute weights over all tickers into a ClockMap.

    Candles outside the calendar year are ignored. For CLOCK the map is
    the identity up to the hours-in-year scaling.
    """
    t0, t1 = year_bounds(year)
    total_hours = float((t1 - t0) // 3600)
    if kind is ClockKind.CLOCK:
        knots_c = np.array([t0, t1], dtype=float)
        knots_x = np.array([0.0, total_hours])
        return ClockMap(year, kind, knots_c, knots_x, total_hours)

    weights: dict[int, float] = {}
    n_seen = 0
    for series in all_candles:
        if not isinstance(series, CandleSeries):
            raise DataError("build_clock expects CandleSeries inputs")
        sub = series.slice_window(t0, t1)
        if len(sub) == 0:
            continue
        n_seen += len(sub)
        w = sub.dollar_weights() if kind is ClockKind.DOLLAR_WEIGHTED else sub.volume
        for ts, wi in zip(sub.timestamps.tolist(), w.tolist()):
            weights[ts] = weights.get(ts, 0.0) + wi
    if n_seen == 0:
        raise DataError(f"no candles inside year {year}")
    minutes = np.array(sorted(weights), dtype=np.int64)
    w = np.array([weights[m] for m in minutes.tolist()])
    total_w = w.sum()
    if total_w <= 0:
        raise DataError(f"zero total weight for year {year}")

    # knots at the start and end of every traded minute; cumulative weight
    # is flat between minute end and the next minute start
    cum = np.cumsum(w)
    starts = minutes.astype(float)
    ends = starts + 60.0
    knots_c = np.empty(2 * len(minutes) + 2)
    knots_x = np.empty_like(knots_c)
    knots_c[0], knots_x[0] = float(t0), 0.0
    knots_c[1:-1:2] = starts
    knots_x[1:-1:2] = np.concatenate(([0.0], cum[:-1])) / total_w * total_hours
    knots_c[2::2] = ends
    knots_x[2::2] = cum / total_w * total_hours
    knots_c[-1], knots_x[-1] = float(t1), total_hours
    knots_x[-2] = total_hours  # kill round-off on the last cumulative point

    # collapse duplicate clock knots (adjacent minutes, or a minute that
    # starts exactly at t0 / ends exactly at t1)
    keep = np.concatenate(([True], np.diff(knots_c) > 0))
    return ClockMap(year, kind, knots_c[keep], knots_x[keep], total_hours)
