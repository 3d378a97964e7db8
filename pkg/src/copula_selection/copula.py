"""Logistic marginals and the Clayton copula family.

The scalar functions (:func:`clayton_cdf2`, :func:`clayton_cdf3`) validate
their inputs and are meant for direct use. :func:`clayton_eval` is the
vectorized workhorse used by the likelihood; it returns the copula value
together with its partial derivatives and skips argument validation.
"""

from __future__ import annotations

import numpy as np
from scipy import special

THETA_MIN = -0.5
INDEPENDENCE_TOL = 1e-8

# above this the expm1 form overflows; switch to a max-shifted sum
_T_SWITCH = 50.0


class CopulaDomainError(ValueError):
    """Raised for a copula parameter or argument outside its valid range."""


def logistic_cdf(x):
    """Standard logistic CDF, stable for large |x|."""
    out = special.expit(np.asarray(x, dtype=float))
    return out if np.ndim(out) else float(out)


def log_logistic_cdf(x):
    """``log(logistic_cdf(x))`` without underflow for very negative x."""
    out = special.log_expit(np.asarray(x, dtype=float))
    return out if np.ndim(out) else float(out)


def logistic_quantile(u):
    out = special.logit(np.asarray(u, dtype=float))
    return out if np.ndim(out) else float(out)


def kendall_tau(theta: float) -> float:
    """Kendall's tau implied by a Clayton parameter."""
    if not np.isfinite(theta) or theta <= THETA_MIN:
        raise CopulaDomainError(f"theta={theta} outside (-0.5, inf)")
    return theta / (theta + 2.0)


def theta_transform(theta_tilde: float) -> tuple[float, float]:
    """Map the unconstrained sampler coordinate to theta; returns (theta, dtheta/dtilde)."""
    return (theta_tilde + 1.0) ** 2 - 1.0, 2.0 * (theta_tilde + 1.0)


def _check_theta(theta):
    if not np.isfinite(theta) or theta <= THETA_MIN:
        raise CopulaDomainError(
            f"theta={theta} is not a valid trivariate Clayton parameter (need theta > -0.5)"
        )


def _check_unit(*args):
    for a in args:
        a = np.asarray(a, dtype=float)
        if np.any(~np.isfinite(a)) or np.any(a < 0.0) or np.any(a > 1.0):
            raise CopulaDomainError("copula arguments must lie in [0, 1]")


def clayton_eval(us, theta: float, derivatives: bool = True):
    """Evaluate the k-variate Clayton CDF on arrays of uniforms.

    Parameters
    ----------
    us : sequence of ndarray
        k arrays of equal shape with entries in (0, 1].
    theta : float
        Dependence parameter. ``|theta| < 1e-8`` uses the product copula and
        its first-order expansion in theta for the theta derivative.
    derivatives : bool
        When False only the CDF is returned.

    Returns
    -------
    c : ndarray
    dc_du : list of ndarray
        Partial derivative with respect to each argument.
    dc_dtheta : ndarray
    """
    us = [np.asarray(u, dtype=float) for u in us]
    k = len(us)
    with np.errstate(divide="ignore"):
        logs = [np.log(u) for u in us]

    if abs(theta) < INDEPENDENCE_TOL:
        c = us[0]
        for u in us[1:]:
            c = c * u
        if not derivatives:
            return c
        logs = [np.where(u > 0, l, 0.0) for u, l in zip(us, logs)]
        l1 = sum(logs)
        l2 = sum(l * l for l in logs)
        dc_du = []
        for i in range(k):
            rest = np.ones_like(c)
            for j in range(k):
                if j != i:
                    rest = rest * us[j]
            dc_du.append(rest)
        dc_dtheta = c * 0.5 * (l1 * l1 - l2)
        return c, dc_du, dc_dtheta

    ts = [-theta * l for l in logs]
    tmax = np.maximum.reduce(ts)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        small = tmax <= _T_SWITCH
        # S - 1 = sum(expm1(t_i)); exact near theta -> 0
        s_minus_1 = sum(np.expm1(np.minimum(t, _T_SWITCH)) for t in ts)
        positive_small = s_minus_1 > -1.0
        log_s_small = np.log1p(np.where(positive_small, s_minus_1, 0.0))
        m = np.where(small, 0.0, tmax)
        shifted = sum(np.exp(t - m) for t in ts) - (k - 1) * np.exp(-m)
        log_s_big = m + np.log(np.where(shifted > 0, shifted, 1.0))
    positive = np.where(small, positive_small, True)
    log_s = np.where(small, log_s_small, log_s_big)

    log_c = np.where(positive, -log_s / theta, -np.inf)
    c = np.exp(log_c)
    if not derivatives:
        return c

    dc_du = []
    weight_log_sum = np.zeros_like(c)
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        for t, l, u in zip(ts, logs, us):
            # w_i = u_i^{-theta} / S
            w = np.where(positive, np.exp(np.where(positive, t - log_s, 0.0)), 0.0)
            dc_du.append(np.where(positive, c * w / u, 0.0))
            weight_log_sum = weight_log_sum + w * np.where(np.isfinite(l), l, 0.0)
        dc_dtheta = np.where(
            positive, c * (log_s / theta**2 + weight_log_sum / theta), 0.0
        )
    return c, dc_du, dc_dtheta


def clayton_cdf3(u: float, v: float, w: float, theta: float) -> float:
    """Trivariate Clayton CDF ``([u^-t + v^-t + w^-t - 2]_+)^(-1/t)``."""
    _check_theta(theta)
    _check_unit(u, v, w)
    if min(u, v, w) == 0.0:
        return 0.0
    return float(clayton_eval([np.array(u), np.array(v), np.array(w)], theta, derivatives=False))


def clayton_cdf2(u: float, v: float, theta: float) -> float:
    """Bivariate Clayton margin ``([u^-t + v^-t - 1]_+)^(-1/t)``."""
    _check_theta(theta)
    _check_unit(u, v)
    if min(u, v) == 0.0:
        return 0.0
    return float(clayton_eval([np.array(u), np.array(v)], theta, derivatives=False))
