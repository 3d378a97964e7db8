"""Priors, log-posterior and the MALA sampler."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .copula import THETA_MIN, theta_transform
from .likelihood import (
    Dataset,
    ParameterSet,
    as_dataset,
    log_likelihood,
    log_likelihood_and_gradient,
    parameter_names,
    score_matrix,
)
from .simulate import substream

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
HIER_SD_MIN = 1e-12


class SamplerError(RuntimeError):
    pass


@dataclass
class PriorSpec:
    """Prior hyperparameters.

    ``w1_sd`` is a standard deviation. ``instrument_index`` is the position
    of the instrument's coefficient inside the beta block; its prior is
    N(0, (delta * alpha1[0])^2) instead of the default.
    """

    default_sd: float = 100.0
    w1_mean: float = 0.5
    w1_sd: float = 0.5
    theta_tilde_sd: float = 100.0
    delta: float = 0.25
    instrument_index: int | None = None

    def __post_init__(self):
        if min(self.default_sd, self.w1_sd, self.theta_tilde_sd) <= 0:
            raise ValueError("prior standard deviations must be positive")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")


@dataclass
class MalaConfig:
    iterations: int = 5000
    initial_step: float = 0.5
    target_accept: float = 0.574
    adapt_until: int | None = None  # defaults to the burn-in length
    seed: int = 0
    burn_in_fraction: float = 0.5
    preconditioner: str = "fisher"  # "fisher" or "identity"
    refresh_every: int = 0  # >0 re-estimates the preconditioner this often during adaptation
    warm_start: str = "map"  # "map": start at the posterior mode found from the neutral point

    def __post_init__(self):
        if self.adapt_until is None:
            self.adapt_until = int(self.iterations * self.burn_in_fraction)
        if not 0 <= self.adapt_until <= self.iterations:
            raise ValueError("adapt_until must lie in [0, iterations]")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ValueError("burn_in_fraction must lie in [0, 1)")
        if self.initial_step <= 0 or not 0 < self.target_accept < 1:
            raise ValueError("initial_step must be positive and target_accept in (0, 1)")
        if self.preconditioner not in ("fisher", "identity"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if self.warm_start not in ("map", "none"):
            raise ValueError(f"unknown warm_start {self.warm_start!r}")


def _normal_logpdf(x, mean, sd):
    return -0.5 * ((x - mean) / sd) ** 2 - np.log(sd) - 0.5 * LOG_2PI


def log_prior_and_gradient(params: ParameterSet, spec: PriorSpec):
    x = params.flatten()
    p1, pz, p2 = params.dims
    theta = params.theta
    if not np.isfinite(theta) or theta <= THETA_MIN:
        return -np.inf, np.full_like(x, np.nan)

    sd = np.full_like(x, spec.default_sd)
    mean = np.zeros_like(x)
    i_w1 = p1 + pz + p2 + 1
    mean[i_w1], sd[i_w1] = spec.w1_mean, spec.w1_sd
    sd[-1] = spec.theta_tilde_sd
    free = np.ones(x.size, dtype=bool)

    lp = 0.0
    grad = np.zeros_like(x)
    if spec.instrument_index is not None:
        gi = p1 + pz + spec.instrument_index
        ai = p1  # alpha1 baseline
        free[gi] = False
        g, a = x[gi], x[ai]
        s = spec.delta * abs(a)
        if s < HIER_SD_MIN:
            return -np.inf, np.full_like(x, np.nan)
        lp += _normal_logpdf(g, 0.0, s)
        grad[gi] += -g / s**2
        grad[ai] += g**2 / (spec.delta**2 * a**3) - 1.0 / a

    lp += float(np.sum(_normal_logpdf(x[free], mean[free], sd[free])))
    grad[free] += -(x[free] - mean[free]) / sd[free] ** 2
    return lp, grad


def log_prior(params: ParameterSet, spec: PriorSpec) -> float:
    """Log prior density; -inf outside the copula domain or for a degenerate instrument scale."""
    return log_prior_and_gradient(params, spec)[0]


def log_prior_gradient(params: ParameterSet, spec: PriorSpec) -> np.ndarray:
    return log_prior_and_gradient(params, spec)[1]


def log_posterior(data, params: ParameterSet, spec: PriorSpec) -> float:
    lp = log_prior(params, spec)
    if not np.isfinite(lp):
        return -np.inf
    return log_likelihood(data, params) + lp


def log_posterior_gradient(data, params: ParameterSet, spec: PriorSpec) -> np.ndarray:
    lp, g = log_prior_and_gradient(params, spec)
    if not np.isfinite(lp):
        raise ValueError("gradient requested at a point with zero posterior density")
    return log_likelihood_and_gradient(data, params)[1] + g


class Posterior:
    """Log posterior on flat parameter vectors, returning (value, gradient)."""

    def __init__(self, data, spec: PriorSpec):
        self.data = as_dataset(data)
        self.spec = spec
        self.dims = self.data.dims

    def __call__(self, x: np.ndarray):
        params = ParameterSet.unflatten(x, self.dims)
        lp, g = log_prior_and_gradient(params, self.spec)
        if not np.isfinite(lp):
            return -np.inf, None
        ll, gl = log_likelihood_and_gradient(self.data, params)
        return ll + lp, gl + g

    def preconditioner(self, x: np.ndarray) -> np.ndarray:
        """Inverse of empirical information plus prior precision at ``x``."""
        params = ParameterSet.unflatten(x, self.dims)
        s = score_matrix(self.data, params)
        info = s.T @ s
        prior_prec = np.full(x.size, 1.0 / self.spec.default_sd**2)
        p1, pz, p2 = self.dims
        prior_prec[p1 + pz + p2 + 1] = 1.0 / self.spec.w1_sd**2
        prior_prec[-1] = 1.0 / self.spec.theta_tilde_sd**2
        info[np.diag_indices_from(info)] += prior_prec
        cov = np.linalg.inv(info)
        return 0.5 * (cov + cov.T)


@dataclass
class MalaState:
    x: np.ndarray
    logp: float
    grad: np.ndarray


@dataclass
class MalaStep:
    state: MalaState
    accepted: bool
    accept_prob: float
    proposal: np.ndarray


def _log_q(to, frm, grad_frm, step, prec_chol=None, cov=None):
    """Log density (up to a constant) of the Langevin proposal frm -> to."""
    drift = 0.5 * step**2 * (grad_frm if cov is None else cov @ grad_frm)
    r = to - frm - drift
    if prec_chol is not None:
        r = prec_chol.T @ r
    return -0.5 * float(r @ r) / step**2


def mala_step(
    state: MalaState,
    step: float,
    rng: np.random.Generator,
    target: Callable[[np.ndarray], tuple[float, np.ndarray | None]],
    cov: np.ndarray | None = None,
    noise: np.ndarray | None = None,
) -> MalaStep:
    """One Metropolis-adjusted Langevin transition.

    Proposal ``x + (step^2/2) M grad + step L xi`` with ``M = L L^T`` (the
    identity unless ``cov`` is given), accepted by the Metropolis-Hastings
    ratio including both proposal densities. ``noise`` overrides ``xi``.
    """
    x = state.x
    xi = rng.standard_normal(x.size) if noise is None else np.asarray(noise, dtype=float)
    if cov is None:
        chol = prec_chol = None
        prop = x + 0.5 * step**2 * state.grad + step * xi
    else:
        chol = np.linalg.cholesky(cov)
        prec_chol = np.linalg.cholesky(np.linalg.inv(cov))
        prop = x + 0.5 * step**2 * (cov @ state.grad) + step * (chol @ xi)

    logp_new, grad_new = target(prop)
    if not np.isfinite(logp_new) or grad_new is None or not np.all(np.isfinite(grad_new)):
        # consume the acceptance uniform so the stream position does not depend on the branch
        rng.random()
        return MalaStep(state, False, 0.0, prop)

    log_ratio = (
        logp_new - state.logp
        + _log_q(x, prop, grad_new, step, prec_chol, cov)
        - _log_q(prop, x, state.grad, step, prec_chol, cov)
    )
    accept_prob = 1.0 if log_ratio >= 0 else math.exp(log_ratio)
    if rng.random() < accept_prob:
        return MalaStep(MalaState(prop, logp_new, grad_new), True, accept_prob, prop)
    return MalaStep(state, False, accept_prob, prop)


@dataclass
class PosteriorChain:
    draws: np.ndarray
    accept_flags: np.ndarray
    step_sizes: np.ndarray
    log_posteriors: np.ndarray
    names: list[str] = field(default_factory=list)
    dims: tuple[int, int, int] | None = None

    def __post_init__(self):
        if not self.names:
            self.names = [f"p{j}" for j in range(self.draws.shape[1])]

    @property
    def iterations(self) -> int:
        return self.draws.shape[0]

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accept_flags)) if self.iterations else 0.0

    def acceptance_rate_after(self, start: int) -> float:
        return float(np.mean(self.accept_flags[start:]))

    def kept(self, burn_in_fraction: float) -> np.ndarray:
        return self.draws[int(self.iterations * burn_in_fraction):]


def sample_mala(
    target: Callable[[np.ndarray], tuple[float, np.ndarray | None]],
    x0: np.ndarray,
    config: MalaConfig,
    names: Sequence[str] | None = None,
    preconditioner: Callable[[np.ndarray], np.ndarray] | None = None,
) -> PosteriorChain:
    """Run an adaptive MALA chain on an arbitrary differentiable log density.

    The log step is moved by ``t^-0.6 (accept_prob - target_accept)`` until
    ``adapt_until``; afterwards step and preconditioner are frozen, so the
    post-adaptation chain is a time-homogeneous Markov chain.
    """
    rng = substream(config.seed, "mala")
    x0 = np.asarray(x0, dtype=float)
    logp, grad = target(x0)
    if not np.isfinite(logp):
        raise SamplerError("initial point has zero posterior density")
    state = MalaState(x0.copy(), logp, grad)

    use_cov = preconditioner is not None and config.preconditioner == "fisher"
    cov = preconditioner(state.x) if use_cov else None

    n, p = config.iterations, x0.size
    draws = np.empty((n, p))
    flags = np.zeros(n, dtype=bool)
    steps = np.empty(n)
    logps = np.empty(n)
    log_step = math.log(config.initial_step)

    for t in range(n):
        step = math.exp(log_step)
        res = mala_step(state, step, rng, target, cov)
        state = res.state
        draws[t], flags[t], steps[t], logps[t] = state.x, res.accepted, step, state.logp

        if t + 1 == 200 and flags[:200].sum() <= 1:
            raise SamplerError(
                "more than 99% of the first 200 proposals were rejected; "
                "reduce the initial step or check the posterior"
            )
        if t < config.adapt_until:
            log_step += (t + 1) ** -0.6 * (res.accept_prob - config.target_accept)
            if use_cov and config.refresh_every and (t + 1) % config.refresh_every == 0 \
                    and t + 1 < config.adapt_until:
                cov = preconditioner(state.x)
        if (t + 1) % 500 == 0:
            logger.info("iteration %d: accept %.3f step %.4g logp %.6g",
                        t + 1, flags[: t + 1].mean(), step, state.logp)

    return PosteriorChain(draws, flags, steps, logps, list(names or []))


def initial_point(data, prior_spec: PriorSpec) -> ParameterSet:
    """Neutral start; with an instrument prior the alpha1 baseline cannot be 0.

    The instrument prior scale delta*|alpha1[0]| makes alpha1[0] = 0 a barrier,
    so the baseline starts at +-0.1 on whichever side has higher posterior.
    """
    start = ParameterSet.initial(as_dataset(data).dims)
    if prior_spec.instrument_index is None:
        return start
    best, best_lp = None, -np.inf
    for sign in (1.0, -1.0):
        cand = ParameterSet.unflatten(start.flatten(), start.dims)
        cand.alpha1[0] = 0.1 * sign
        lp = log_posterior(data, cand, prior_spec)
        if lp > best_lp:
            best, best_lp = cand, lp
    return best


def _support_bounds(x0, dims, prior_spec: PriorSpec):
    """Box inside the posterior support containing ``x0``.

    theta_tilde stays on the branch above -1 (theta > -0.5) and, with an
    instrument prior, alpha1[0] keeps its starting sign.
    """
    bounds = [(None, None)] * len(x0)
    bounds[-1] = (math.sqrt(1.0 + THETA_MIN) - 1.0 + 1e-6, None)
    if prior_spec.instrument_index is not None:
        i = dims[0]
        bounds[i] = (1e-6, None) if x0[i] > 0 else (None, -1e-6)
    return bounds


def find_mode(target, x0: np.ndarray, bounds=None, max_iter: int = 5000) -> np.ndarray:
    """Posterior mode by bounded L-BFGS starting from ``x0``."""

    def objective(x):
        lp, g = target(x)
        if not np.isfinite(lp):
            return 1e300, np.zeros_like(x)
        return -lp, -g

    res = optimize.minimize(objective, np.asarray(x0, dtype=float), jac=True,
                            method="L-BFGS-B", bounds=bounds, options={"maxiter": max_iter})
    if not np.isfinite(target(res.x)[0]):
        raise SamplerError("mode search left the posterior support")
    logger.info("mode search: %d iterations, log posterior %.6g", res.nit, -res.fun)
    return res.x


def run_chain(data, prior_spec: PriorSpec, config: MalaConfig, model_spec=None,
              init: ParameterSet | None = None) -> PosteriorChain:
    """MALA on the model posterior from the neutral starting point."""
    data = as_dataset(data)
    if len(data) == 0:
        raise ValueError("empty dataset")
    post = Posterior(data, prior_spec)
    x0 = (init or initial_point(data, prior_spec)).flatten()
    if config.warm_start == "map":
        x0 = find_mode(post, x0, _support_bounds(x0, data.dims, prior_spec))
    names = parameter_names(data.x1_names, data.z_names, data.x2_names)
    chain = sample_mala(post, x0, config, names, post.preconditioner)
    chain.dims = data.dims
    return chain


def _run_one(args):
    data, prior_spec, config = args
    return run_chain(data, prior_spec, config)


def run_chains(data, prior_spec: PriorSpec, config: MalaConfig, n_chains: int = 1,
               workers: int = 1) -> list[PosteriorChain]:
    """Independent chains with seeds ``config.seed + k``."""
    jobs = [(data, prior_spec, replace(config, seed=config.seed + k)) for k in range(n_chains)]
    if workers <= 1 or n_chains == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


@dataclass
class PosteriorSummary:
    names: list[str]
    mean: np.ndarray
    sd: np.ndarray
    theta_mean: float
    theta_sd: float
    n_draws: int
    dims: tuple[int, int, int] | None = None

    def params(self) -> ParameterSet:
        """Posterior mean as a ParameterSet (theta_tilde taken as its posterior mean)."""
        if self.dims is None:
            raise ValueError("summary carries no parameter dimensions")
        return ParameterSet.unflatten(self.mean, self.dims)

    def as_dict(self) -> dict:
        out = {name: {"mean": float(m), "sd": float(s)}
               for name, m, s in zip(self.names, self.mean, self.sd)}
        out["theta"] = {"mean": float(self.theta_mean), "sd": float(self.theta_sd)}
        return out


def posterior_summary(chain: PosteriorChain, burn_in_fraction: float = 0.5) -> PosteriorSummary:
    """Means and sds of the post-burn-in draws; theta is transformed draw by draw."""
    kept = chain.kept(burn_in_fraction)
    if kept.shape[0] < 100:
        raise ValueError(f"only {kept.shape[0]} draws after burn-in; need at least 100")
    theta = theta_transform(kept[:, -1])[0]
    return PosteriorSummary(
        names=list(chain.names),
        mean=kept.mean(axis=0),
        sd=kept.std(axis=0, ddof=1),
        theta_mean=float(theta.mean()),
        theta_sd=float(theta.std(ddof=1)),
        n_draws=kept.shape[0],
        dims=chain.dims,
    )


CHAIN_FIXED_COLUMNS = ["iteration", "accept", "step", "log_posterior"]


def write_chain_csv(chain: PosteriorChain, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CHAIN_FIXED_COLUMNS + list(chain.names))
        for t in range(chain.iterations):
            w.writerow(
                [t + 1, int(chain.accept_flags[t]), repr(float(chain.step_sizes[t])),
                 repr(float(chain.log_posteriors[t]))]
                + [repr(float(v)) for v in chain.draws[t]]
            )


def read_chain_csv(path, dims: tuple[int, int, int] | None = None) -> PosteriorChain:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[:4] != CHAIN_FIXED_COLUMNS:
        raise ValueError(f"{path}: not a chain dump (header starts {header[:4]})")
    arr = np.array([[float(v) for v in r] for r in body]) if body else np.empty((0, len(header)))
    return PosteriorChain(
        draws=arr[:, 4:],
        accept_flags=arr[:, 1].astype(bool),
        step_sizes=arr[:, 2],
        log_posteriors=arr[:, 3],
        names=header[4:],
        dims=dims,
    )
