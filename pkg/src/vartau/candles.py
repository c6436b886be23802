"""One-minute candle ingestion and resolution binning.

A candle is one traded minute: unix timestamp (start of minute), four
prices (open/high/low/close) and a share volume. Minutes in which a stock
did not trade are simply absent; prices are never held over or
interpolated. The representative price of a minute is the plain mean of
its four prices.

Coarser resolutions are built by sorting candles into consecutive
half-open bins of length tau along a transaction-time axis (see
``vartau.clock``), averaging representative prices and coordinates within
each bin. Returns are log differences of consecutive known bin prices,
each carrying its actual elapsed transaction time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

CSV_HEADER = ["timestamp", "open", "high", "low", "close", "volume"]


@dataclass(frozen=True)
class Candle:
    """A single one-minute OHLCV bar."""

    timestamp: int
    open: float
    high: float
    low: float
    close: float
    volume: float

    def validate(self) -> None:
        if self.timestamp % 60 != 0:
            raise DataError(f"timestamp {self.timestamp} is not a minute boundary")
        if self.low > min(self.open, self.close):
            raise DataError(f"low {self.low} above open/close at ts {self.timestamp}")
        if self.high < max(self.open, self.close):
            raise DataError(f"high {self.high} below open/close at ts {self.timestamp}")
        if self.volume < 0:
            raise DataError(f"negative volume at ts {self.timestamp}")
        if min(self.open, self.high, self.low, self.close) <= 0:
            raise DataError(f"non-positive price at ts {self.timestamp}")


class CandleSeries:
    """All candles of one ticker, held as column arrays, sorted by time."""

    def __init__(self, ticker, timestamps, open_, high, low, close, volume):
        self.ticker = str(ticker)
        self.timestamps = np.asarray(timestamps, dtype=np.int64)
        self.open = np.asarray(open_, dtype=float)
        self.high = np.asarray(high, dtype=float)
        self.low = np.asarray(low, dtype=float)
        self.close = np.asarray(close, dtype=float)
        self.volume = np.asarray(volume, dtype=float)
        if len({len(a) for a in (self.timestamps, self.open, self.high,
                                 self.low, self.close, self.volume)}) != 1:
            raise DataError("candle column arrays have mismatched lengths")
        if np.any(np.diff(self.timestamps) <= 0):
            raise DataError(f"{self.ticker}: timestamps not strictly increasing")

    def __len__(self) -> int:
        return len(self.timestamps)

    def __getitem__(self, i: int) -> Candle:
        return Candle(int(self.timestamps[i]), float(self.open[i]),
                      float(self.high[i]), float(self.low[i]),
                      float(self.close[i]), float(self.volume[i]))

    def rep_prices(self) -> np.ndarray:
        """Representative (OHLC-mean) price of every candle."""
        return (self.open + self.high + self.low + self.close) / 4.0

    def dollar_weights(self) -> np.ndarray:
        """Per-minute dollar volume: representative price times shares."""
        return self.rep_prices() * self.volume

    def slice_window(self, t0: int, t1: int) -> "CandleSeries":
        """Candles with t0 <= timestamp < t1."""
        i = np.searchsorted(self.timestamps, t0, side="left")
        j = np.searchsorted(self.timestamps, t1, side="left")
        return CandleSeries(self.ticker, self.timestamps[i:j], self.open[i:j],
                            self.high[i:j], self.low[i:j], self.close[i:j],
                            self.volume[i:j])


@dataclass
class BinnedSeries:
    """Bin-averaged prices of one ticker at resolution tau.

    ``index`` is the bin's position on the tau grid anchored at
    transaction time 0 of the year (bin k covers [k*tau, (k+1)*tau)).
    Bins with no candles are absent.
    """

    ticker: str
    tau: float                # transaction hours
    index: np.ndarray         # int64, strictly increasing grid indices
    time: np.ndarray          # mean transaction-time coordinate per bin
    price: np.ndarray         # mean representative price per bin
    n_candles: np.ndarray     # candles per bin, >= 1

    def __len__(self) -> int:
        return len(self.index)


@dataclass
class ReturnSeries:
    """Log returns of consecutive known bin prices.

    Entry i is the return from bin i to bin i+1 of the source
    BinnedSeries; ``dt`` is the elapsed transaction time between the two
    bin mean times and ``start_index`` the grid index of the earlier bin.
    """

    tau: float
    r: np.ndarray
    dt: np.ndarray
    start_index: np.ndarray

    def __len__(self) -> int:
        return len(self.r)


def representative_price(c: Candle) -> float:
    """Mean of open, high, low and close."""
    return (c.open + c.high + c.low + c.close) / 4.0


def parse_candles(path, ticker: str | None = None) -> CandleSeries:
    """Read one ticker's candle CSV.

    Expects header ``timestamp,open,high,low,close,volume``. Rows may be
    out of order (they are sorted); duplicate timestamps, malformed
    fields and OHLC-invariant violations are rejected with the offending
    line number.
    """
    path = Path(path)
    if ticker is None:
        ticker = path.stem
    ts, op, hi, lo, cl, vo = [], [], [], [], [], []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip().lower() for h in header] != CSV_HEADER:
            raise DataError(f"{path}: bad header {header!r}, want {CSV_HEADER}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 6:
                raise DataError(f"{path}:{lineno}: expected 6 fields, got {len(row)}")
            try:
                t = int(row[0])
                o, h, l, c, v = (float(x) for x in row[1:])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            try:
                Candle(t, o, h, l, c, v).validate()
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            ts.append(t); op.append(o); hi.append(h); lo.append(l); cl.append(c); vo.append(v)
    if not ts:
        raise DataError(f"{path}: no candles")
    order = np.argsort(np.asarray(ts, dtype=np.int64), kind="stable")
    ts = np.asarray(ts, dtype=np.int64)[order]
    dup = np.nonzero(np.diff(ts) == 0)[0]
    if dup.size:
        raise DataError(f"{path}: duplicate timestamp {int(ts[dup[0]])}")
    pick = lambda a: np.asarray(a, dtype=float)[order]
    return CandleSeries(ticker, ts, pick(op), pick(hi), pick(lo), pick(cl), pick(vo))


def write_candles(path, series: CandleSeries) -> None:
    """Write a CandleSeries back to the interchange CSV format."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i in range(len(series)):
            w.writerow([int(series.timestamps[i]), repr(float(series.open[i])),
                        repr(float(series.high[i])), repr(float(series.low[i])),
                        repr(float(series.close[i])), repr(float(series.volume[i]))])


def bin_coordinates(coords: np.ndarray, prices: np.ndarray, tau: float):
    """Core binning: sorted transaction coordinates -> per-bin means.

    Returns (grid index, mean coord, mean price, count) arrays with empty
    bins absent. Bins are half-open [k*tau, (k+1)*tau), anchored at 0.
    """
    if tau <= 0:
        raise DataError(f"tau must be positive, got {tau}")
    idx = np.floor_divide(coords, tau).astype(np.int64)
    uniq, first, counts = np.unique(idx, return_index=True, return_counts=True)
    sums_t = np.add.reduceat(coords, first)
    sums_p = np.add.reduceat(prices, first)
    return uniq, sums_t / counts, sums_p / counts, counts


def bin_series(s: CandleSeries, clock, tau: float) -> BinnedSeries:
    """Sort a candle series into tau-resolution bins in the given clock.

    Each candle is assigned by its transaction-time coordinate; the bin
    price is the mean of representative prices, the bin time the mean of
    coordinates. A coordinate exactly on a boundary goes to the later
    bin. Candles outside the clock's domain raise DataError.
    """
    coords = clock.to_txn_time(s.timestamps)
    idx, times, prices, counts = bin_coordinates(coords, s.rep_prices(), tau)
    return BinnedSeries(s.ticker, float(tau), idx, times, prices, counts)


def log_returns(b: BinnedSeries) -> ReturnSeries:
    """Log differences of consecutive bin prices with elapsed times."""
    if len(b) < 2:
        raise DataError(f"{b.ticker}: need at least 2 bins, have {len(b)}")
    if np.any(b.price <= 0):
        raise DataError(f"{b.ticker}: non-positive bin price")
    logp = np.log(b.price)
    r = np.diff(logp)
    dt = np.diff(b.time)
    if np.any(dt <= 0):
        raise DataError(f"{b.ticker}: non-increasing bin times")
    return ReturnSeries(b.tau, r, dt, b.index[:-1].copy())
