"""Candle parsing, representative prices, binning and log returns."""

import numpy as np
import pytest

from vartau.candles import (Candle, CandleSeries, bin_series, log_returns,
                            parse_candles, representative_price, write_candles)
from vartau.clock import ClockKind, ClockMap, build_clock, year_bounds
from vartau.errors import DataError
from vartau.synthetic import point_candles

T0, _ = year_bounds(2021)


def write_csv(tmp_path, rows, name="TEST.csv"):
    path = tmp_path / name
    path.write_text("timestamp,open,high,low,close,volume\n"
                    + "".join(r + "\n" for r in rows))
    return path


def identity_clock(year=2021):
    return build_clock([point_candles("X", [year_bounds(year)[0]], [1.0])],
                       ClockKind.CLOCK, year)


class TestParse:
    def test_direct_field_mapping(self, tmp_path):
        p = write_csv(tmp_path, ["1609459200,10,11,9,10.5,1000"])
        s = parse_candles(p)
        c = s[0]
        assert (c.timestamp, c.open, c.high, c.low, c.close, c.volume) == \
            (1609459200, 10.0, 11.0, 9.0, 10.5, 1000.0)
        assert s.ticker == "TEST"

    def test_high_below_open_reports_line(self, tmp_path):
        p = write_csv(tmp_path, ["1609459200,10,11,9,10.5,1000",
                                 "1609459260,10,9.5,9,9.2,50"])
        with pytest.raises(DataError, match=":3:"):
            parse_candles(p)

    def test_out_of_order_rows_sorted(self, tmp_path):
        p = write_csv(tmp_path, ["1609459260,10,10,10,10,1",
                                 "1609459200,11,11,11,11,1"])
        s = parse_candles(p)
        assert list(s.timestamps) == [1609459200, 1609459260]
        assert list(s.open) == [11.0, 10.0]

    def test_duplicate_timestamp_rejected(self, tmp_path):
        p = write_csv(tmp_path, ["1609459200,10,10,10,10,1",
                                 "1609459200,11,11,11,11,1"])
        with pytest.raises(DataError, match="duplicate"):
            parse_candles(p)

    def test_non_positive_price_rejected(self, tmp_path):
        p = write_csv(tmp_path, ["1609459200,0,0,0,0,1"])
        with pytest.raises(DataError):
            parse_candles(p)

    def test_off_minute_timestamp_rejected(self, tmp_path):
        p = write_csv(tmp_path, ["1609459230,10,10,10,10,1"])
        with pytest.raises(DataError, match="minute"):
            parse_candles(p)

    def test_bad_field_count_and_header(self, tmp_path):
        p = write_csv(tmp_path, ["1609459200,10,10,10,10"])
        with pytest.raises(DataError, match="6 fields"):
            parse_candles(p)
        q = tmp_path / "BAD.csv"
        q.write_text("time,o,h,l,c,v\n1,2,3,4,5,6\n")
        with pytest.raises(DataError, match="header"):
            parse_candles(q)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            parse_candles(tmp_path / "NOPE.csv")

    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        ts = T0 + 60 * np.sort(rng.choice(10000, size=50, replace=False)).astype(np.int64)
        base = np.exp(rng.normal(0, 0.01, 50)) * 50
        s = point_candles("RT", ts, base, volume=3.0)
        path = tmp_path / "RT.csv"
        write_candles(path, s)
        back = parse_candles(path)
        assert np.array_equal(back.timestamps, s.timestamps)
        assert np.array_equal(back.close, s.close)


class TestRepresentativePrice:
    @pytest.mark.parametrize("ohlc,want", [
        ((10, 11, 9, 10.5), 10.125),
        ((5, 5, 5, 5), 5.0),
        ((1, 3, 1, 3), 2.0),
    ])
    def test_values(self, ohlc, want):
        o, h, l, c = ohlc
        assert representative_price(Candle(T0, o, h, l, c, 1)) == want


class TestBinning:
    def test_constant_hour(self):
        ts = T0 + 60 * np.arange(60, dtype=np.int64)
        s = point_candles("C", ts, np.full(60, 7.0))
        b = bin_series(s, identity_clock(), 1.0)
        assert len(b) == 1
        assert b.price[0] == pytest.approx(7.0)
        # mean of the 60 minute coordinates inside the hour
        assert b.time[0] == pytest.approx(np.mean(np.arange(60) / 60))
        assert b.n_candles[0] == 60

    def test_missing_bin_gives_long_dt(self):
        # candles only in hours 0 and 2: two bins, the return spans 2 hours
        ts = np.concatenate([T0 + 60 * np.arange(10),
                             T0 + 2 * 3600 + 60 * np.arange(10)]).astype(np.int64)
        s = point_candles("G", ts, np.concatenate([np.full(10, 5.0), np.full(10, 6.0)]))
        b = bin_series(s, identity_clock(), 1.0)
        assert list(b.index) == [0, 2]
        r = log_returns(b)
        assert len(r) == 1
        assert r.dt[0] > 1.0

    def test_boundary_goes_to_later_bin(self):
        ts = np.array([T0, T0 + 3600], dtype=np.int64)
        s = point_candles("B", ts, [1.0, 2.0])
        b = bin_series(s, identity_clock(), 1.0)
        assert list(b.index) == [0, 1]

    def test_two_segment_clock_hand_assignment(self):
        # map: first clock hour -> 1 txn hour, next clock hour -> 2 more
        clock = ClockMap(2021, ClockKind.DOLLAR_WEIGHTED,
                         np.array([T0, T0 + 3600, T0 + 7200], dtype=float),
                         np.array([0.0, 1.0, 3.0]), 3.0)
        ts = np.array([T0, T0 + 1800, T0 + 5400], dtype=np.int64)
        # hand evaluation: coords 0.0, 0.5 (half of first segment),
        # 2.0 (half of the second segment: 1 + 0.5*2)
        s = point_candles("H", ts, [1.0, 2.0, 3.0])
        coords = clock.to_txn_time(s.timestamps)
        assert np.allclose(coords, [0.0, 0.5, 2.0])
        b = bin_series(s, clock, 1.0)
        assert list(b.index) == [0, 2]
        assert b.n_candles[0] == 2 and b.n_candles[1] == 1
        assert b.price[0] == pytest.approx(1.5)
        assert b.time[0] == pytest.approx(0.25)

    def test_outside_clock_domain(self):
        ts = np.array([T0 - 60], dtype=np.int64)
        s = point_candles("O", ts, [1.0])
        with pytest.raises(DataError, match="domain"):
            bin_series(s, identity_clock(), 1.0)

    def test_partition_preserves_counts(self):
        rng = np.random.default_rng(1)
        ts = T0 + 60 * np.sort(rng.choice(50000, size=800, replace=False)).astype(np.int64)
        s = point_candles("P", ts, np.exp(rng.normal(0, 0.01, 800)))
        clock = identity_clock()
        for tau in (0.5, 1.0, 2.0, 7.3):
            b = bin_series(s, clock, tau)
            assert b.n_candles.sum() == len(s)
            assert np.all(np.diff(b.index) > 0)
            assert np.all(b.n_candles >= 1)

    def test_tau_doubling_preserves_weighted_mean(self):
        rng = np.random.default_rng(2)
        ts = T0 + 60 * np.sort(rng.choice(30000, size=500, replace=False)).astype(np.int64)
        s = point_candles("W", ts, np.exp(rng.normal(0, 0.01, 500)) * 20)
        clock = identity_clock()
        b1 = bin_series(s, clock, 1.0)
        b2 = bin_series(s, clock, 2.0)
        m1 = np.sum(b1.price * b1.n_candles) / b1.n_candles.sum()
        m2 = np.sum(b2.price * b2.n_candles) / b2.n_candles.sum()
        assert m1 == pytest.approx(m2, rel=1e-12)
        assert b1.n_candles.sum() == b2.n_candles.sum()

    def test_no_interpolation_on_candle_removal(self):
        rng = np.random.default_rng(3)
        ts = T0 + 60 * np.sort(rng.choice(5000, size=60, replace=False)).astype(np.int64)
        prices = np.exp(rng.normal(0, 0.01, 60))
        s = point_candles("N", ts, prices)
        clock = identity_clock()
        b_full = bin_series(s, clock, 1.0)
        drop = 17
        s2 = point_candles("N", np.delete(ts, drop), np.delete(prices, drop))
        b_less = bin_series(s2, clock, 1.0)
        assert set(b_less.index).issubset(set(b_full.index))
        touched = int(clock.to_txn_time(int(ts[drop])) // 1.0)
        for idx, price in zip(b_less.index, b_less.price):
            if idx != touched:
                k = np.nonzero(b_full.index == idx)[0][0]
                assert price == b_full.price[k]


class TestLogReturns:
    def test_log_identity(self):
        b = bin_series(point_candles("L", T0 + 3600 * np.arange(2, dtype=np.int64),
                                     [1.0, np.e]), identity_clock(), 1.0)
        r = log_returns(b)
        assert r.r[0] == pytest.approx(1.0)
        assert r.dt[0] == pytest.approx(1.0)
        assert r.start_index[0] == 0

    def test_constant_prices(self):
        b = bin_series(point_candles("K", T0 + 3600 * np.arange(5, dtype=np.int64),
                                     np.full(5, 3.0)), identity_clock(), 1.0)
        assert np.allclose(log_returns(b).r, 0.0)

    def test_small_sequence(self):
        b = bin_series(point_candles("S", T0 + 3600 * np.arange(3, dtype=np.int64),
                                     [100.0, 101.0, 99.0]), identity_clock(), 1.0)
        r = log_returns(b)
        assert np.allclose(r.r, [np.log(1.01), np.log(99 / 101)])

    def test_cumsum_roundtrip(self):
        rng = np.random.default_rng(4)
        prices = np.exp(np.cumsum(rng.normal(0, 0.02, 300))) * 40
        b = bin_series(point_candles("R", T0 + 3600 * np.arange(300, dtype=np.int64),
                                     prices), identity_clock(), 1.0)
        r = log_returns(b)
        rebuilt = np.exp(np.cumsum(r.r))
        assert np.allclose(rebuilt, b.price[1:] / b.price[0], rtol=1e-12)

    def test_needs_two_bins(self):
        b = bin_series(point_candles("E", np.array([T0], dtype=np.int64), [1.0]),
                       identity_clock(), 1.0)
        with pytest.raises(DataError, match="2 bins"):
            log_returns(b)
