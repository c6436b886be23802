"""Leave-one-out linear prediction of each ticker's return from the rest.

Given a return covariance matrix C, the minimum-mean-square predictor of
return I from all others has coefficients that come out of the single
full inverse A = C^-1 through the partitioned-inverse identity:

    B[I, K] = -(A[K, I] / A[I, I])  for K != I,  B[I, I] = 0

so one n x n inversion replaces n separate (n-1) x (n-1) inversions.
Prediction quality is summarized by the fraction of variance explained
(FVE) and the fractional mean-square error (FMSE), linked for
standardized data by FVE = (1 - FMSE/2)^2.

Coefficients can optionally be refined by direct gradient descent on the
empirical mean-square prediction error, early-stopped on validation
panels, which helps when C is near singular.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .covariance import CovMatrix
from .errors import DataError, NumericalError


@dataclass
class PrecisionMatrix:
    tickers: list[str]
    a: np.ndarray
    ridge: float


@dataclass
class PredictionCoeffs:
    tickers: list[str]
    b: np.ndarray            # zero diagonal

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.tickers)
            for row in self.b:
                w.writerow([repr(float(x)) for x in row])


def read_coeffs_csv(path) -> PredictionCoeffs:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty coefficients file")
    tickers = rows[0]
    b = np.array([[float(x) for x in r] for r in rows[1:]])
    if b.shape != (len(tickers), len(tickers)):
        raise DataError(f"{path}: coefficient matrix shape {b.shape} does not "
                        f"match {len(tickers)} tickers")
    return PredictionCoeffs(tickers, b)


@dataclass
class PredictionReport:
    """Per-ticker and aggregate prediction quality.

    ``fve`` follows the printed squared-bracket formula; ``fve_plain`` is
    the plain squared correlation between prediction and outcome, which
    coincides with the former when predictions are standardized to the
    outcome's variance.
    """

    tickers: list[str]
    fmse_by_ticker: np.ndarray
    fve_by_ticker: np.ndarray
    fve_plain_by_ticker: np.ndarray
    fmse: float
    fve: float
    fve_plain: float
    by_group: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "aggregate": {"fmse": self.fmse, "fve": self.fve,
                          "fve_plain": self.fve_plain},
            "per_ticker": {
                t: {"fmse": float(self.fmse_by_ticker[i]),
                    "fve": float(self.fve_by_ticker[i]),
                    "fve_plain": float(self.fve_plain_by_ticker[i])}
                for i, t in enumerate(self.tickers)
            },
        }
        if self.by_group:
            out["by_group"] = self.by_group
        return out


@dataclass
class RefineConfig:
    step: float | None = None      # None picks 1/(2 max eigenvalue)
    max_iter: int = 500
    patience: int = 20
    min_step: float = 1e-12


def invert_with_ridge(c: CovMatrix | np.ndarray, ridge: float = 0.0,
                      tickers: list[str] | None = None) -> PrecisionMatrix:
    """Exact inverse of C + ridge*I; raises if not positive definite."""
    if isinstance(c, CovMatrix):
        tickers = list(c.tickers)
        m = c.c
    else:
        m = np.asarray(c, dtype=float)
        tickers = list(tickers) if tickers is not None else [str(i) for i in range(len(m))]
    if ridge < 0:
        raise DataError("ridge must be non-negative")
    if np.isnan(m).any():
        raise DataError("covariance matrix has missing entries; impute first")
    if not np.allclose(m, m.T, atol=1e-10 * max(1.0, float(np.abs(m).max()))):
        raise DataError("covariance matrix is not symmetric")
    ridged = m + ridge * np.eye(len(m))
    try:
        np.linalg.cholesky(ridged)
    except np.linalg.LinAlgError:
        raise NumericalError(
            f"matrix not positive definite at ridge={ridge}; increase ridge"
        ) from None
    a = np.linalg.inv(ridged)
    a = (a + a.T) / 2.0
    return PrecisionMatrix(tickers, a, float(ridge))


def default_ridge(c: CovMatrix | np.ndarray, scale: float = 1e-4) -> float:
    """A small stabilizer: scale times the mean diagonal of C."""
    m = c.c if isinstance(c, CovMatrix) else np.asarray(c)
    d = np.diag(m)
    d = d[~np.isnan(d)]
    if len(d) == 0:
        raise DataError("no usable diagonal entries")
    return float(scale * d.mean())


def partitioned_inverse(a: PrecisionMatrix | np.ndarray, i: int) -> np.ndarray:
    """Inverse of C with row/column i deleted, re-padded with a zero row/col.

    Uses the partitioned-matrix identity A'_KJ = A_KJ - A_JI*A_KI/A_II so
    no extra inversion is needed.
    """
    m = a.a if isinstance(a, PrecisionMatrix) else np.asarray(a, dtype=float)
    n = len(m)
    if not 0 <= i < n:
        raise DataError(f"index {i} out of range for size {n}")
    if m[i, i] == 0:
        raise NumericalError(f"zero diagonal element at {i}")
    out = m - np.outer(m[:, i], m[i, :]) / m[i, i]
    out[i, :] = 0.0
    out[:, i] = 0.0
    return out


def loo_coefficients(a: PrecisionMatrix) -> PredictionCoeffs:
    """Prediction coefficients B[I,K] = -A[K,I]/A[I,I], zero diagonal."""
    m = a.a
    d = np.diag(m)
    if np.any(d == 0):
        raise NumericalError("zero diagonal element in precision matrix")
    b = -(m.T / d[:, None])
    np.fill_diagonal(b, 0.0)
    return PredictionCoeffs(list(a.tickers), b)


def predict(b: PredictionCoeffs, r: np.ndarray) -> np.ndarray:
    """Apply coefficients to returns; missing (NaN) returns contribute 0.

    r may be a vector (one period) or an (n_tickers, n_periods) panel.
    """
    r = np.asarray(r, dtype=float)
    if r.shape[0] != len(b.tickers):
        raise DataError(f"return vector size {r.shape[0]} does not match "
                        f"{len(b.tickers)} tickers")
    return b.b @ np.nan_to_num(r, nan=0.0)


def naive_predict(r: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """Equal-weight prediction: scaled mean of all other normalized returns.

    Missing returns contribute 0, keeping the constant n-1 denominator so
    this stays identical to ``predict`` under an equal-correlation matrix.
    """
    r = np.asarray(r, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if np.any(variances <= 0):
        raise DataError("variances must be positive")
    n = r.shape[0]
    if n < 2:
        raise DataError("need at least 2 tickers")
    sd = np.sqrt(variances)
    z = np.nan_to_num(r, nan=0.0) / (sd[:, None] if r.ndim == 2 else sd)
    total = z.sum(axis=0)
    others = (total - z) / (n - 1)
    return others * (sd[:, None] if r.ndim == 2 else sd)


def equal_corr_matrix(variances: np.ndarray, rho: float) -> np.ndarray:
    """Covariance with common correlation rho and given variances."""
    sd = np.sqrt(np.asarray(variances, dtype=float))
    c = rho * np.outer(sd, sd)
    np.fill_diagonal(c, sd * sd)
    return c


def _per_ticker_moments(r_hat: np.ndarray, r: np.ndarray):
    """Per-ticker sums over periods where the outcome is present."""
    r_hat = np.atleast_2d(np.asarray(r_hat, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    if r_hat.shape != r.shape:
        raise DataError(f"shape mismatch {r_hat.shape} vs {r.shape}")
    ok = ~np.isnan(r)
    n = ok.sum(axis=1)
    err2 = np.where(ok, (np.nan_to_num(r_hat) - np.nan_to_num(r)) ** 2, 0.0).sum(axis=1)
    rr = np.where(ok, np.nan_to_num(r) ** 2, 0.0).sum(axis=1)
    cross = np.where(ok, np.nan_to_num(r_hat) * np.nan_to_num(r), 0.0).sum(axis=1)
    hh = np.where(ok, np.nan_to_num(r_hat) ** 2, 0.0).sum(axis=1)
    return n, err2, rr, cross, hh


def fmse(r_hat: np.ndarray, r: np.ndarray) -> float:
    """Fractional mean-square error, averaged across tickers."""
    n, err2, rr, _, _ = _per_ticker_moments(r_hat, r)
    ok = (n > 0) & (rr > 0)
    if not ok.any():
        raise DataError("no ticker has usable observations")
    return float(np.mean(err2[ok] / rr[ok]))


def fve(r_hat: np.ndarray, r: np.ndarray) -> float:
    """Fraction of variance explained: mean over tickers of (1 - FMSE_K/2)^2."""
    n, err2, rr, _, _ = _per_ticker_moments(r_hat, r)
    ok = (n > 0) & (rr > 0)
    if not ok.any():
        raise DataError("no ticker has usable observations")
    return float(np.mean((1.0 - 0.5 * err2[ok] / rr[ok]) ** 2))


def fve_plain(r_hat: np.ndarray, r: np.ndarray) -> float:
    """Mean over tickers of the plain squared correlation of r_hat and r.

    A constant (zero-variance) prediction explains nothing and counts 0.
    """
    n, _, rr, cross, hh = _per_ticker_moments(r_hat, r)
    ok = (n > 0) & (rr > 0)
    if not ok.any():
        raise DataError("no ticker has usable observations")
    with np.errstate(divide="ignore", invalid="ignore"):
        per = np.where(hh > 0, cross ** 2 / np.where(hh > 0, rr * hh, 1.0), 0.0)
    return float(np.mean(per[ok]))


def fve_from_fmse(x) -> float | np.ndarray:
    """Identity linking the two metrics on standardized data."""
    x = np.asarray(x, dtype=float)
    out = (1.0 - x / 2.0) ** 2
    return float(out) if out.ndim == 0 else out


def prediction_report(b: PredictionCoeffs, r: np.ndarray,
                      group_labels=None) -> PredictionReport:
    """Evaluate coefficients on a return panel (n_tickers, n_periods)."""
    r = np.asarray(r, dtype=float)
    r_hat = predict(b, r)
    n, err2, rr, cross, hh = _per_ticker_moments(r_hat, r)
    with np.errstate(divide="ignore", invalid="ignore"):
        fmse_k = np.where((n > 0) & (rr > 0), err2 / rr, np.nan)
        fve_k = (1.0 - 0.5 * fmse_k) ** 2
        plain_k = np.where(hh > 0, cross ** 2 / np.where(hh > 0, rr * hh, 1.0), 0.0)
        plain_k = np.where((n > 0) & (rr > 0), plain_k, np.nan)
    by_group = {}
    if group_labels is not None:
        group_labels = np.asarray(group_labels)
        for g in np.unique(group_labels):
            cols = group_labels == g
            by_group[str(g)] = {
                "fmse": fmse(r_hat[:, cols], r[:, cols]),
                "fve": fve(r_hat[:, cols], r[:, cols]),
            }
    return PredictionReport(
        list(b.tickers), fmse_k, fve_k, plain_k,
        fmse=float(np.nanmean(fmse_k)),
        fve=float(np.nanmean(fve_k)),
        fve_plain=float(np.nanmean(plain_k)),
        by_group=by_group,
    )


def _loss(b: np.ndarray, s: np.ndarray) -> float:
    """Empirical mean-square prediction error, summed over tickers."""
    d = b - np.eye(len(b))
    return float(np.trace(d @ s @ d.T))


def gradient_refine(train: np.ndarray, validation: np.ndarray | list[np.ndarray],
                    init: PredictionCoeffs, config: RefineConfig | None = None
                    ) -> tuple[PredictionCoeffs, dict]:
    """Refine coefficients by gradient descent on training prediction error.

    Starts from ``init`` (normally the inverse-covariance solution), takes
    plain gradient steps with a fixed rate that halves whenever a step
    fails to reduce the training loss, and stops once validation FMSE has
    not improved for ``patience`` accepted steps. The returned
    coefficients are the validation-best snapshot, never worse than the
    initialization.
    """
    config = config or RefineConfig()
    train = np.nan_to_num(np.asarray(train, dtype=float), nan=0.0)
    if isinstance(validation, np.ndarray):
        validation = [validation]
    validation = [np.asarray(v, dtype=float) for v in validation]
    n, n_h = train.shape
    if n != len(init.tickers):
        raise DataError("training panel does not match coefficient tickers")
    s = train @ train.T / n_h

    def val_fmse(bmat: np.ndarray) -> float:
        coeffs = PredictionCoeffs(init.tickers, bmat)
        return float(np.mean([fmse(predict(coeffs, v), v) for v in validation]))

    b = init.b.copy()
    np.fill_diagonal(b, 0.0)
    step = config.step
    if step is None:
        lam = float(np.linalg.eigvalsh(s)[-1])
        step = 0.5 / lam if lam > 0 else 0.0
    best_b = b.copy()
    best_val = val_fmse(b)
    loss = _loss(b, s)
    history = [best_val]
    stale = 0
    iterations = 0
    while iterations < config.max_iter and step > config.min_step and stale < config.patience:
        grad = 2.0 * (b - np.eye(n)) @ s
        np.fill_diagonal(grad, 0.0)
        cand = b - step * grad
        cand_loss = _loss(cand, s)
        if not np.isfinite(cand_loss):
            raise NumericalError(
                f"gradient refinement diverged at iteration {iterations} "
                f"(step={step}, loss={cand_loss})")
        if cand_loss >= loss:
            step *= 0.5
            continue
        b, loss = cand, cand_loss
        iterations += 1
        v = val_fmse(b)
        history.append(v)
        if v < best_val:
            best_val, best_b = v, b.copy()
            stale = 0
        else:
            stale += 1
    info = {"iterations": iterations, "validation_fmse": best_val,
            "history": history, "final_step": step}
    return PredictionCoeffs(list(init.tickers), best_b), info
