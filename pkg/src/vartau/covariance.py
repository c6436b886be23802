"""Pairwise covariance and correlation of asynchronous returns.

Returns of two tickers are paired by the grid index of the bin they
start from; each product r_A * r_B is reweighted by tau/sqrt(dt_A*dt_B)
to put unequal elapsed times on the common tau scale (the same
martingale-consistent reweighting used by the variogram estimators), and
per-ticker mean returns are removed first. Pairs with too few joint
observations are reported as missing.

The two-component return model splits each stock's return into a
cross-correlated part with partial variogram V(tau) sharing one factor
draw per period, and an uncorrelated part U(tau). Its observable
correlation is rho * V/(V+U); when V is memoryless the normalized
observed correlation must follow tau/V_tot(tau), which is what
``predicted_corr_ratio`` computes from a measured total variogram.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .candles import BinnedSeries, ReturnSeries, bin_coordinates, log_returns
from .errors import DataError
from .variogram import DEFAULT_MAX_DT_FACTOR, loglog_interp

DEFAULT_MIN_OBS = 50


@dataclass
class CovMatrix:
    tickers: list[str]
    c: np.ndarray           # n x n, NaN where a pair had too few samples
    tau: float
    n_obs: np.ndarray       # n x n joint sample counts

    def filled(self) -> "CovMatrix":
        """Impute missing off-diagonal cells with the observed mean.

        Matrix-level consumers (precision/LOO) need a complete matrix;
        missing pairs take the cross-sectional mean off-diagonal value.
        Missing diagonals cannot be imputed and raise.
        """
        c = self.c.copy()
        if np.isnan(np.diag(c)).any():
            raise DataError("cannot impute a missing diagonal (variance) entry")
        off = ~np.eye(len(self.tickers), dtype=bool)
        miss = np.isnan(c)
        have = off & ~miss
        if miss.any():
            # with no observed off-diagonal at all, fall back to uncorrelated
            c[miss] = c[have].mean() if have.any() else 0.0
        return CovMatrix(list(self.tickers), c, self.tau, self.n_obs.copy())

    def write_csv(self, path, n_obs_path=None) -> None:
        _write_matrix_csv(path, self.tickers, self.c)
        if n_obs_path is not None:
            _write_matrix_csv(n_obs_path, self.tickers, self.n_obs, as_int=True)


@dataclass
class CorrMatrix:
    tickers: list[str]
    rho: np.ndarray          # clamped to [-1, 1], unit diagonal
    rho_raw: np.ndarray      # before clamping, for diagnostics

    def write_csv(self, path) -> None:
        _write_matrix_csv(path, self.tickers, self.rho)


@dataclass
class TwoComponentModel:
    """Correlated/uncorrelated partial variograms and the latent correlation."""

    v: Callable[[float], float]
    u: Callable[[float], float]
    rho: float

    def __post_init__(self):
        if not -1.0 <= self.rho <= 1.0:
            raise DataError(f"latent correlation must be in [-1, 1], got {self.rho}")

    def total(self, tau: float) -> float:
        return float(self.v(tau)) + float(self.u(tau))

    def observed_rho(self, tau: float) -> float:
        """Expected measured correlation at tau: rho * V/(V+U)."""
        vt = self.total(tau)
        if vt <= 0:
            return 0.0
        return self.rho * float(self.v(tau)) / vt


def _write_matrix_csv(path, tickers, m, as_int=False) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(tickers)
        for row in m:
            w.writerow([int(x) if as_int else repr(float(x)) for x in row])


def _prep_returns(rs: ReturnSeries, tau: float, max_dt_factor: float):
    """Apply the dt acceptance band, demean, map start index -> (r, dt)."""
    keep = (rs.dt > 0) & (rs.dt <= max_dt_factor * tau)
    r = rs.r[keep]
    if len(r):
        r = r - r.mean()
    return rs.start_index[keep], r, rs.dt[keep]


def pair_stats(idx_a, r_a, dt_a, idx_b, r_b, dt_b, tau: float):
    """Weighted cross-moment of two prepared return sets.

    Returns (covariance estimate, joint count); (nan, 0) without overlap.
    """
    common, ia, ib = np.intersect1d(idx_a, idx_b, assume_unique=True,
                                    return_indices=True)
    if len(common) == 0:
        return np.nan, 0
    w = tau / np.sqrt(dt_a[ia] * dt_b[ib])
    return float(np.mean(w * r_a[ia] * r_b[ib])), int(len(common))


def estimate_cov_from_returns(returns: Mapping[str, ReturnSeries], tau: float,
                              min_obs: int = DEFAULT_MIN_OBS,
                              max_dt_factor: float = DEFAULT_MAX_DT_FACTOR) -> CovMatrix:
    """Pairwise-complete covariance matrix from per-ticker return series."""
    tickers = list(returns)
    n = len(tickers)
    prepped = [_prep_returns(returns[t], tau, max_dt_factor) for t in tickers]
    c = np.full((n, n), np.nan)
    n_obs = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(i, n):
            cij, nij = pair_stats(*prepped[i], *prepped[j], tau)
            n_obs[i, j] = n_obs[j, i] = nij
            if nij >= max(min_obs, 2):
                c[i, j] = c[j, i] = cij
    return CovMatrix(tickers, c, float(tau), n_obs)


def estimate_cov(series: Mapping[str, BinnedSeries] | list[BinnedSeries],
                 min_obs: int = DEFAULT_MIN_OBS,
                 max_dt_factor: float = DEFAULT_MAX_DT_FACTOR) -> CovMatrix:
    """Covariance of log returns of binned series sharing one resolution."""
    if not isinstance(series, Mapping):
        series = {b.ticker: b for b in series}
    taus = {float(b.tau) for b in series.values()}
    if len(taus) != 1:
        raise DataError(f"binned series disagree on tau: {sorted(taus)}")
    tau = taus.pop()
    returns = {t: log_returns(b) for t, b in series.items()}
    return estimate_cov_from_returns(returns, tau, min_obs, max_dt_factor)


def cov_to_corr(c: CovMatrix) -> CorrMatrix:
    """Normalize by the diagonal; clamp into [-1, 1]; force unit diagonal."""
    d = np.diag(c.c)
    if np.any(~np.isnan(d) & (d <= 0)):
        raise DataError("non-positive variance on the diagonal")
    scale = np.sqrt(np.outer(d, d))
    raw = c.c / scale
    rho = np.clip(raw, -1.0, 1.0)
    np.fill_diagonal(rho, 1.0)
    return CorrMatrix(list(c.tickers), rho, raw)


def _normalize_curve(tau_grid, values, tau0: float):
    """Divide a curve by its interpolated value at tau0.

    Log-log interpolation when every value is positive (the power-law
    convention); otherwise falls back to linear in log tau.
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if np.all(values > 0):
        v0 = float(loglog_interp(tau0, tau_grid, values))
    else:
        v0 = float(np.interp(np.log(tau0), np.log(tau_grid), values))
    if v0 == 0 or not np.isfinite(v0):
        raise DataError("curve vanishes at the normalization point")
    return values / v0


def corr_vs_tau(series: Mapping[str, "object"], clock, tau_grid,
                pairs: list[tuple[str, str]] | None = None,
                normalize_tau: float = 1.0,
                min_obs: int = 2,
                max_dt_factor: float = DEFAULT_MAX_DT_FACTOR):
    """Pairwise correlation as a function of resolution, normalized at 1 hr.

    ``series`` maps ticker to CandleSeries. Returns (pairs, curves) where
    curves is (n_pairs, n_tau) of normalized rho values (NaN where a pair
    lacked joint samples at some tau).
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    tickers = list(series)
    if pairs is None:
        pairs = [(a, b) for i, a in enumerate(tickers) for b in tickers[i + 1:]]
    coords = {}
    prices = {}
    for t in set(x for p in pairs for x in p):
        s = series[t]
        coords[t] = clock.to_txn_time(s.timestamps)
        prices[t] = s.rep_prices()
    raw = np.full((len(pairs), len(tau_grid)), np.nan)
    for k, tau in enumerate(tau_grid):
        prepped = {}
        for t in coords:
            idx, tbar, pbar, _ = bin_coordinates(coords[t], prices[t], tau)
            if len(pbar) < 2 or np.any(pbar <= 0):
                continue
            rs = ReturnSeries(tau, np.diff(np.log(pbar)), np.diff(tbar),
                              idx[:-1])
            prepped[t] = _prep_returns(rs, tau, max_dt_factor)
        for p, (a, b) in enumerate(pairs):
            if a not in prepped or b not in prepped:
                continue
            cab, nab = pair_stats(*prepped[a], *prepped[b], tau)
            caa, naa = pair_stats(*prepped[a], *prepped[a], tau)
            cbb, nbb = pair_stats(*prepped[b], *prepped[b], tau)
            if min(nab, naa, nbb) >= max(min_obs, 2) and caa > 0 and cbb > 0:
                raw[p, k] = cab / np.sqrt(caa * cbb)
    curves = np.full_like(raw, np.nan)
    for p in range(len(pairs)):
        ok = ~np.isnan(raw[p])
        if ok.any() and tau_grid[ok][0] <= normalize_tau <= tau_grid[ok][-1]:
            curves[p, ok] = _normalize_curve(tau_grid[ok], raw[p, ok], normalize_tau)
    return pairs, curves


def predicted_corr_ratio(v_tot, tau_grid, normalize_tau: float = 1.0) -> np.ndarray:
    """Two-component prediction tau / V_tot(tau), normalized to 1 at 1 hr.

    ``v_tot`` is a Variogram of the total return variance; it is
    interpolated onto the requested grid in log-log space.
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    vt = loglog_interp(tau_grid, v_tot.tau, v_tot.v)
    curve = tau_grid / vt
    return _normalize_curve(tau_grid, curve, normalize_tau)


def simulate_two_component(model: TwoComponentModel, tau: float,
                           n_periods: int, seed: int = 0
                           ) -> tuple[ReturnSeries, ReturnSeries]:
    """Draw paired returns at resolution tau from the two-component model.

    Each period shares one factor draw between the two stocks; the
    uncorrelated parts get independent draws. A negative latent rho puts
    the minus sign on the second stock's factor loading.
    """
    if n_periods < 2:
        raise DataError("need at least 2 periods")
    rng = np.random.default_rng(seed)
    v = float(model.v(tau))
    u = float(model.u(tau))
    if v < 0 or u < 0:
        raise DataError("partial variograms must be non-negative")
    root = np.sqrt(abs(model.rho))
    sign_b = -1.0 if model.rho < 0 else 1.0
    n_c = rng.standard_normal(n_periods)
    n_a1 = rng.standard_normal(n_periods)
    n_a2 = rng.standard_normal(n_periods)
    n_b1 = rng.standard_normal(n_periods)
    n_b2 = rng.standard_normal(n_periods)
    resid = np.sqrt(1.0 - abs(model.rho))
    r_a = np.sqrt(v) * (root * n_c + resid * n_a1) + np.sqrt(u) * n_a2
    r_b = np.sqrt(v) * (sign_b * root * n_c + resid * n_b1) + np.sqrt(u) * n_b2
    idx = np.arange(n_periods, dtype=np.int64)
    dt = np.full(n_periods, float(tau))
    return (ReturnSeries(float(tau), r_a, dt, idx),
            ReturnSeries(float(tau), r_b, dt, idx))
