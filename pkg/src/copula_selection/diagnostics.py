"""Heidelberger-Welch stationarity test for single-parameter MCMC traces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, special


class DiagnosticError(ValueError):
    pass


def cramer_von_mises_cdf(q: float, eps: float = 1e-5) -> float:
    """Asymptotic CDF of the Cramer-von Mises statistic (Brownian bridge integral).

    Uses the Anderson-Darling series with modified Bessel functions, summed
    until the terms are negligible (a handful for small q, more in the tail).
    """
    if q <= 0:
        return 0.0
    total = 0.0
    for k in range(200):
        u = (4 * k + 1) ** 2 / (16.0 * q)
        if u > 700:
            break
        # Gamma(k+1/2)/Gamma(k+1) via log-gamma to stay finite for large k
        z = (np.exp(special.gammaln(k + 0.5) - special.gammaln(k + 1)) * np.sqrt(4 * k + 1)
             / (np.pi**1.5 * np.sqrt(q)))
        term = z * special.kve(0.25, u) * np.exp(-2 * u)
        total += term
        if k >= 3 and term < eps * 1e-6:
            break
    return float(min(total, 1.0))


def cramer_von_mises_critical(alpha: float) -> float:
    """Upper-alpha critical value of the asymptotic CvM distribution."""
    return float(optimize.brentq(lambda q: cramer_von_mises_cdf(q) - (1.0 - alpha), 0.02, 5.0, xtol=1e-12))


def spectrum0_bartlett(x: np.ndarray, max_lag: int | None = None) -> float:
    """Spectral density at frequency zero with a Bartlett lag window.

    Equals the long-run variance ``gamma_0 + 2 sum_k (1 - k/(M+1)) gamma_k``.
    The default truncation is ``M = floor(sqrt(n))``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if max_lag is None:
        max_lag = int(np.sqrt(n))
    max_lag = min(max_lag, n - 1)
    xc = x - x.mean()
    f = np.fft.rfft(xc, 2 * n)
    acov = np.fft.irfft(f * np.conj(f))[: max_lag + 1] / n
    weights = 1.0 - np.arange(1, max_lag + 1) / (max_lag + 1.0)
    return float(acov[0] + 2.0 * np.sum(weights * acov[1:]))


@dataclass(frozen=True)
class HeidelbergerWelchResult:
    stationary: bool
    kept_fraction: float
    cvm_statistic: float
    critical_value: float
    start: int


def heidelberger_welch(series, alpha: float = 0.05, max_lag: int | None = None) -> HeidelbergerWelchResult:
    """Stationarity stage of the Heidelberger-Welch diagnostic.

    The spectral density at zero is estimated once from the second half of
    the series. For start points at 0%, 10%, ..., 50% the standardized
    partial-sum bridge of the retained segment is tested with the Cramer-von
    Mises statistic; the first segment that passes is reported.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 100:
        raise DiagnosticError(f"series of length {n} is too short (need >= 100)")
    if not 0 < alpha <= 0.2:
        raise DiagnosticError("alpha must lie in (0, 0.2]")
    if not np.all(np.isfinite(x)):
        raise DiagnosticError("series contains non-finite values")

    s0 = spectrum0_bartlett(x[n // 2:], max_lag)
    if not s0 > 1e-300 or np.ptp(x) == 0.0:
        raise DiagnosticError("series has zero spectral density at frequency zero (constant chain?)")
    crit = cramer_von_mises_critical(alpha)

    stat = np.nan
    for j in range(6):
        start = (j * n) // 10
        y = x[start:]
        m = y.size
        bridge = np.cumsum(y) - y.mean() * np.arange(1, m + 1)
        stat = float(np.sum(bridge**2) / (m**2 * s0))
        if stat < crit:
            return HeidelbergerWelchResult(True, m / n, stat, crit, start)
    return HeidelbergerWelchResult(False, 0.0, stat, crit, start)


def heidelberger_welch_table(draws: np.ndarray, names, alpha: float = 0.05):
    """Run the test on every column of a draws matrix."""
    return {name: heidelberger_welch(draws[:, j], alpha) for j, name in enumerate(names)}
