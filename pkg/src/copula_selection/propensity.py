"""Propensity-score benchmarks and the naive probit.

These estimators assume selection on observables. They are the comparison
point for the copula model: when the selection errors are independent of
the outcome errors all of them should agree with the model-implied ATE.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special, stats


class RankDeficiencyError(ValueError):
    pass


class SeparationError(RuntimeError):
    pass


@dataclass
class FitResult:
    coefficients: np.ndarray
    standard_errors: np.ndarray
    n_used: int
    converged: bool
    names: list[str] = field(default_factory=list)
    covariance: np.ndarray | None = None
    log_likelihood: float | None = None
    residual_variance: float | None = None
    iterations: int = 0

    def __post_init__(self):
        if not self.names:
            self.names = [f"x{j}" for j in range(len(self.coefficients))]

    @property
    def z_values(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coefficients / self.standard_errors

    @property
    def p_values(self) -> np.ndarray:
        return 2.0 * stats.norm.sf(np.abs(self.z_values))

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def se(self, name: str) -> float:
        return float(self.standard_errors[self.names.index(name)])


def _names(X, names):
    return list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]


def check_rank(X: np.ndarray, names=None, tol: float = 1e-10) -> None:
    """Raise naming the columns that make ``X`` rank deficient."""
    names = _names(X, names)
    zero = [names[j] for j in range(X.shape[1]) if not np.any(X[:, j])]
    if zero:
        raise RankDeficiencyError(f"columns identically zero: {zero}")
    _, r, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > tol * diag[0]))
    if rank < X.shape[1]:
        bad = [names[j] for j in sorted(piv[rank:])]
        raise RankDeficiencyError(f"design is rank deficient; collinear columns: {bad}")


def _probit_loglik_parts(X, d, beta):
    q = 2.0 * d - 1.0
    t = q * (X @ beta)
    logcdf = special.log_ndtr(t)
    # inverse Mills ratio phi(t)/Phi(t), stable in both tails
    lam = np.exp(-0.5 * t * t - 0.5 * np.log(2 * np.pi) - logcdf)
    grad = X.T @ (q * lam)
    w = lam * (lam + t)
    hess = -(X * w[:, None]).T @ X
    return float(np.sum(logcdf)), grad, hess


def probit_fit(X, d, names=None, tol: float = 1e-8, max_iter: int = 100) -> FitResult:
    """Probit maximum likelihood by Newton's method with step halving."""
    X = np.asarray(X, dtype=float)
    d = np.asarray(d, dtype=float)
    n, k = X.shape
    names = _names(X, names)
    if n <= k:
        raise ValueError(f"need more rows ({n}) than columns ({k})")
    if not np.all((d == 0) | (d == 1)):
        raise ValueError("probit outcome must be 0/1")
    check_rank(X, names)

    beta = np.zeros(k)
    ll, grad, hess = _probit_loglik_parts(X, d, beta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        step = linalg.solve(-hess, grad, assume_a="pos")
        scale = 1.0
        while True:
            cand = beta + scale * step
            ll_new, g_new, h_new = _probit_loglik_parts(X, d, cand)
            if ll_new >= ll - 1e-12 * abs(ll) or scale < 1e-10:
                break
            scale *= 0.5
        beta, ll, grad, hess = cand, ll_new, g_new, h_new
        if np.max(np.abs(beta)) > 1e3:
            raise SeparationError(
                "probit coefficients diverge (|beta| > 1e3): the outcome is (quasi-)perfectly "
                f"separated by {[names[j] for j in np.flatnonzero(np.abs(beta) > 1e3)]}"
            )
        if np.max(np.abs(grad)) < tol:
            converged = True
            break

    cov = linalg.inv(-hess)
    cov = 0.5 * (cov + cov.T)
    return FitResult(beta, np.sqrt(np.maximum(np.diag(cov), 0.0)), n, converged, names,
                     cov, log_likelihood=ll, iterations=it)


def propensity_scores(fit: FitResult, X) -> np.ndarray:
    return special.ndtr(np.asarray(X, dtype=float) @ fit.coefficients)


def ols_fit(X, y, names=None) -> FitResult:
    """Least squares with classic homoskedastic standard errors."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    names = _names(X, names)
    check_rank(X, names)
    q, r = linalg.qr(X, mode="economic")
    beta = linalg.solve_triangular(r, q.T @ y)
    resid = y - X @ beta
    dof = n - k
    sigma2 = float(resid @ resid / dof) if dof > 0 else 0.0
    rinv = linalg.solve_triangular(r, np.eye(k))
    cov = sigma2 * (rinv @ rinv.T)
    return FitResult(beta, np.sqrt(np.maximum(np.diag(cov), 0.0)), n, True, names, cov,
                     residual_variance=sigma2)


@dataclass
class EffectEstimate:
    ate: float
    se: float
    n_used: int
    fit: FitResult | None = None
    n_trimmed: int = 0


def control_function_design(d, p_hat, degree: int = 1):
    """Regressors 1, d, p, [p^2, p^3], d*(p - mean p)."""
    if degree not in (1, 3):
        raise ValueError("degree must be 1 or 3")
    d = np.asarray(d, dtype=float)
    p = np.asarray(p_hat, dtype=float)
    if np.std(p) < 1e-8:
        raise RankDeficiencyError("propensity scores are (nearly) constant; collinear with the intercept")
    cols = [np.ones_like(p), d, p]
    names = ["const", "d", "p_hat"]
    if degree == 3:
        cols += [p**2, p**3]
        names += ["p_hat^2", "p_hat^3"]
    cols.append(d * (p - p.mean()))
    names.append("d*(p_hat-mean)")
    return np.column_stack(cols), names


def control_function_ate(y, d, p_hat, degree: int = 1) -> EffectEstimate:
    """ATE as the coefficient on d in the control-function regression.

    Standard errors are the plain OLS ones and ignore that p_hat is estimated.
    """
    X, names = control_function_design(d, p_hat, degree)
    fit = ols_fit(X, y, names)
    return EffectEstimate(fit.coef("d"), fit.se("d"), fit.n_used, fit)


def ipw_ate(y, d, p_hat, trim: float = 1e-3) -> EffectEstimate:
    """Inverse probability weighted ATE, mean of y (d - p) / (p (1 - p)).

    Rows with p_hat outside (trim, 1 - trim) are dropped and counted.
    """
    y = np.asarray(y, dtype=float)
    d = np.asarray(d, dtype=float)
    p = np.asarray(p_hat, dtype=float)
    keep = (p > trim) & (p < 1.0 - trim)
    if not np.any(keep):
        raise ValueError("every propensity score was trimmed")
    terms = y[keep] * (d[keep] - p[keep]) / (p[keep] * (1.0 - p[keep]))
    m = terms.size
    se = float(np.std(terms, ddof=1) / np.sqrt(m)) if m > 1 else float("nan")
    return EffectEstimate(float(np.mean(terms)), se, m, None, int(np.sum(~keep)))


def regression_adjustment_ate(X, y, d, names=None) -> EffectEstimate:
    """Average over all rows of the difference of arm-specific probit predictions.

    The standard error combines the sampling variance of the covariates with
    the delta-method variance of both arm fits. An arm whose outcome is
    constant predicts that constant.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    d = np.asarray(d).astype(bool)
    if d.all() or not d.any():
        raise ValueError("both treatment arms must be non-empty")
    n = X.shape[0]
    preds, delta_var = [], 0.0
    for arm in (d, ~d):
        ya = y[arm]
        if np.all(ya == ya[0]):
            # the probit MLE diverges; its limit predicts the constant everywhere
            preds.append(np.full(n, float(ya[0])))
            continue
        fit = probit_fit(X[arm], ya, names)
        xb = X @ fit.coefficients
        jac = (stats.norm.pdf(xb)[:, None] * X).mean(axis=0)
        preds.append(special.ndtr(xb))
        delta_var += jac @ fit.covariance @ jac
    r = preds[0] - preds[1]
    var = np.var(r, ddof=1) / n + delta_var
    return EffectEstimate(float(r.mean()), float(np.sqrt(var)), n)


def naive_probit_effect(X_with_d, outcome, treatment_index: int = -1, names=None):
    """Probit of the outcome on covariates and d, with its average marginal effect of d.

    Returns ``(fit, ame)`` where ``ame`` averages Phi(x b | d=1) - Phi(x b | d=0).
    """
    X = np.asarray(X_with_d, dtype=float)
    fit = probit_fit(X, outcome, names)
    x1, x0 = X.copy(), X.copy()
    x1[:, treatment_index] = 1.0
    x0[:, treatment_index] = 0.0
    ame = float(np.mean(special.ndtr(x1 @ fit.coefficients) - special.ndtr(x0 @ fit.coefficients)))
    return fit, ame
