"""Closed-form likelihood of the selection / intermediate / install model.

Each impression falls in one of six observable cells of (d, y_tau, y). With
logistic errors coupled by a trivariate Clayton copula, every cell is an
inclusion-exclusion combination of the marginal CDFs and the bivariate and
trivariate copula margins, so both the log-likelihood and its gradient are
available without numerical integration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .copula import (
    THETA_MIN,
    CopulaDomainError,
    clayton_eval,
    logistic_cdf,
    theta_transform,
)

PROB_FLOOR = 1e-300
DEFAULT_CHUNK = 8192

CELL_LABELS = ("d0_yt0", "d0_yt1_y0", "d0_yt1_y1", "d1_yt0", "d1_yt1_y0", "d1_yt1_y1")

# Each cell = const + ua*A + ub*B + uc*C + C2(a,b)*AB + C2(a,c)*AC + C2(b,c)*BC + C3*ABC,
# with u = F(-index) the probability that the corresponding latent event fails.
_CELL_COEF = np.array(
    [
        # const  ua   ub   uc   ab   ac   bc  abc
        [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],  # d=0, yt=0
        [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0],  # d=0, yt=1, y=0
        [0.0, 1.0, 0.0, 0.0, -1.0, -1.0, 0.0, 1.0],  # d=0, yt=1, y=1
        [0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0],  # d=1, yt=0
        [0.0, 0.0, 0.0, 1.0, 0.0, -1.0, -1.0, 1.0],  # d=1, yt=1, y=0
        [1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, -1.0],  # d=1, yt=1, y=1
    ]
)


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class ImpressionRecord:
    """One ad impression: treatment, the two outcomes and the role vectors."""

    d: int
    y_tau: int
    y: int
    x1: np.ndarray
    x2: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        if self.y > self.y_tau:
            raise ValueError("final outcome requires the intermediate outcome (y <= y_tau)")
        for name in ("x1", "x2", "z"):
            v = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"non-finite covariate in {name}")
            object.__setattr__(self, name, v)


@dataclass
class Dataset:
    """Column-oriented impressions; the form every numerical routine consumes."""

    d: np.ndarray
    y_tau: np.ndarray
    y: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    z: np.ndarray
    x1_names: list[str] = field(default_factory=list)
    x2_names: list[str] = field(default_factory=list)
    z_names: list[str] = field(default_factory=list)
    groups: np.ndarray | None = None

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=np.int8)
        self.y_tau = np.asarray(self.y_tau, dtype=np.int8)
        self.y = np.asarray(self.y, dtype=np.int8)
        self.x1 = np.atleast_2d(np.asarray(self.x1, dtype=float))
        self.x2 = np.atleast_2d(np.asarray(self.x2, dtype=float))
        self.z = np.atleast_2d(np.asarray(self.z, dtype=float))
        n = self.d.shape[0]
        for name in ("y_tau", "y", "x1", "x2", "z"):
            if getattr(self, name).shape[0] != n:
                raise DimensionError(f"{name} has {getattr(self, name).shape[0]} rows, expected {n}")
        if np.any(self.y > self.y_tau):
            raise ValueError("final outcome requires the intermediate outcome (y <= y_tau)")
        if not self.x1_names:
            self.x1_names = [f"x1_{j}" for j in range(self.x1.shape[1])]
        if not self.x2_names:
            self.x2_names = [f"x2_{j}" for j in range(self.x2.shape[1])]
        if not self.z_names:
            self.z_names = [f"z_{j}" for j in range(self.z.shape[1])]

    def __len__(self) -> int:
        return int(self.d.shape[0])

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.x1.shape[1], self.z.shape[1], self.x2.shape[1]

    @property
    def cell_index(self) -> np.ndarray:
        """Observed cell id 0..5 in ``CELL_LABELS`` order."""
        return np.where(
            self.y_tau == 0, 3 * self.d, 3 * self.d + 1 + self.y
        ).astype(np.intp)

    @classmethod
    def from_records(cls, records: Iterable[ImpressionRecord], **names) -> "Dataset":
        records = list(records)
        if not records:
            raise ValueError("empty dataset")
        return cls(
            d=[r.d for r in records],
            y_tau=[r.y_tau for r in records],
            y=[r.y for r in records],
            x1=np.vstack([r.x1 for r in records]),
            x2=np.vstack([r.x2 for r in records]),
            z=np.vstack([r.z for r in records]),
            **names,
        )

    def records(self) -> list[ImpressionRecord]:
        return [
            ImpressionRecord(int(self.d[i]), int(self.y_tau[i]), int(self.y[i]),
                             self.x1[i], self.x2[i], self.z[i])
            for i in range(len(self))
        ]

    def subset(self, mask) -> "Dataset":
        mask = np.asarray(mask)
        return Dataset(
            self.d[mask], self.y_tau[mask], self.y[mask],
            self.x1[mask], self.x2[mask], self.z[mask],
            list(self.x1_names), list(self.x2_names), list(self.z_names),
            None if self.groups is None else self.groups[mask],
        )

    def repeat(self, k: int) -> "Dataset":
        """The dataset stacked ``k`` times (used for additivity checks)."""
        idx = np.tile(np.arange(len(self)), k)
        return self.subset(idx)


def as_dataset(data) -> Dataset:
    if isinstance(data, Dataset):
        return data
    if isinstance(data, ImpressionRecord):
        return Dataset.from_records([data])
    return Dataset.from_records(data)


@dataclass
class ParameterSet:
    """Model coefficients in the canonical flat order.

    Order: gamma (selection), alpha1 (intermediate treatment effect: baseline
    then interactions), beta (intermediate outcome), alpha2, w1, w2,
    theta_tilde.
    """

    gamma: np.ndarray
    alpha1: np.ndarray
    beta: np.ndarray
    alpha2: float = 0.0
    w1: float = 0.5
    w2: float = 0.0
    theta_tilde: float = 0.1

    def __post_init__(self):
        self.gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        self.alpha1 = np.atleast_1d(np.asarray(self.alpha1, dtype=float))
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        self.alpha2 = float(self.alpha2)
        self.w1 = float(self.w1)
        self.w2 = float(self.w2)
        self.theta_tilde = float(self.theta_tilde)

    @property
    def theta(self) -> float:
        return theta_transform(self.theta_tilde)[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        return len(self.gamma), len(self.alpha1), len(self.beta)

    @property
    def size(self) -> int:
        return sum(self.dims) + 4

    def flatten(self) -> np.ndarray:
        return np.concatenate(
            [self.gamma, self.alpha1, self.beta,
             [self.alpha2, self.w1, self.w2, self.theta_tilde]]
        )

    @classmethod
    def unflatten(cls, vec, dims: Sequence[int]) -> "ParameterSet":
        p1, pz, p2 = dims
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (p1 + pz + p2 + 4,):
            raise DimensionError(f"parameter vector of length {vec.shape} does not match dims {dims}")
        i, j, k = p1, p1 + pz, p1 + pz + p2
        return cls(vec[:i].copy(), vec[i:j].copy(), vec[j:k].copy(),
                   vec[k], vec[k + 1], vec[k + 2], vec[k + 3])

    @classmethod
    def initial(cls, dims: Sequence[int]) -> "ParameterSet":
        """Neutral starting point: zero coefficients, w1 = 0.5, theta_tilde = 0.1."""
        p1, pz, p2 = dims
        return cls(np.zeros(p1), np.zeros(pz), np.zeros(p2), 0.0, 0.5, 0.0, 0.1)

    @classmethod
    def with_theta(cls, gamma, alpha1, beta, alpha2, w1, w2, theta: float) -> "ParameterSet":
        """Build from theta directly, choosing the theta_tilde branch above -1."""
        return cls(gamma, alpha1, beta, alpha2, w1, w2, np.sqrt(theta + 1.0) - 1.0)


def parameter_names(x1_names, z_names, x2_names) -> list[str]:
    return (
        [f"gamma[{n}]" for n in x1_names]
        + [f"alpha1[{n}]" for n in z_names]
        + [f"beta[{n}]" for n in x2_names]
        + ["alpha2", "w1", "w2", "theta_tilde"]
    )


@dataclass(frozen=True)
class LinearIndices:
    a: np.ndarray
    b0: np.ndarray
    b1: np.ndarray
    c0: np.ndarray
    c1: np.ndarray


@dataclass(frozen=True)
class CellProbabilities:
    p: np.ndarray  # (..., 6) in CELL_LABELS order

    def __getitem__(self, key):
        if isinstance(key, str):
            return self.p[..., CELL_LABELS.index(key)]
        return self.p[..., key]

    @property
    def p_d0(self):
        return self.p[..., :3].sum(axis=-1)

    @property
    def p_d1(self):
        return self.p[..., 3:].sum(axis=-1)


def _check_dims(data: Dataset, params: ParameterSet):
    if data.dims != params.dims:
        raise DimensionError(
            f"data dims (x1, z, x2) = {data.dims} but parameter dims = {params.dims}"
        )


def linear_indices(data, params: ParameterSet) -> LinearIndices:
    """Latent indices of the three equations at d = 0 and d = 1."""
    data = as_dataset(data)
    _check_dims(data, params)
    a = data.x1 @ params.gamma
    xb = data.x2 @ params.beta
    te = data.z @ params.alpha1
    c0 = params.w1 * xb + params.w2
    return LinearIndices(a=a, b0=xb, b1=xb + te, c0=c0, c1=c0 + params.alpha2)


def _validated_theta(params: ParameterSet) -> float:
    theta = params.theta
    if not np.isfinite(theta) or theta <= THETA_MIN:
        raise CopulaDomainError(f"theta={theta} outside (-0.5, inf)")
    return theta


def _margins(ua, ub, uc, theta, derivatives=True):
    """Copula margins C2(a,b), C2(a,c), C2(b,c), C3(a,b,c) with partials."""
    return (
        clayton_eval([ua, ub], theta, derivatives),
        clayton_eval([ua, uc], theta, derivatives),
        clayton_eval([ub, uc], theta, derivatives),
        clayton_eval([ua, ub, uc], theta, derivatives),
    )


def _cells_from_uniforms(ua, ub, uc, theta):
    """All three cells of the arm whose u's are given (rows of _CELL_COEF)."""
    ab, ac, bc, abc = _margins(ua, ub, uc, theta, derivatives=False)
    basis = np.stack([np.ones_like(ua), ua, ub, uc, ab, ac, bc, abc], axis=-1)
    return basis @ _CELL_COEF.T


def cell_probabilities(data, params: ParameterSet) -> CellProbabilities:
    """Probabilities of the six observable cells for every record.

    For a single :class:`ImpressionRecord` the result holds one row.
    """
    data = as_dataset(data)
    theta = _validated_theta(params)
    idx = linear_indices(data, params)
    ua = logistic_cdf(-idx.a)
    p0 = _cells_from_uniforms(ua, logistic_cdf(-idx.b0), logistic_cdf(-idx.c0), theta)
    p1 = _cells_from_uniforms(ua, logistic_cdf(-idx.b1), logistic_cdf(-idx.c1), theta)
    p = np.concatenate([p0[:, :3], p1[:, 3:]], axis=1)
    # inclusion-exclusion can leave ~1e-18 negatives on cells that are nearly empty
    return CellProbabilities(np.maximum(p, 0.0))


def _chunked_sum(values: np.ndarray, chunk: int) -> np.ndarray:
    """Sum along axis 0 in fixed-size chunks, then sum the partials in order."""
    n = values.shape[0]
    partials = [values[s:s + chunk].sum(axis=0) for s in range(0, n, chunk)]
    return np.sum(np.stack(partials), axis=0)


def _observed_terms(data: Dataset, params: ParameterSet, gradient: bool):
    """Per-record log cell probability and, optionally, per-record score rows."""
    theta = _validated_theta(params)
    idx = linear_indices(data, params)
    d = data.d.astype(bool)
    b = np.where(d, idx.b1, idx.b0)
    c = np.where(d, idx.c1, idx.c0)
    ua, ub, uc = logistic_cdf(-idx.a), logistic_cdf(-b), logistic_cdf(-c)

    coef = _CELL_COEF[data.cell_index]
    if not gradient:
        ab, ac, bc, abc = _margins(ua, ub, uc, theta, derivatives=False)
        basis = np.stack([np.ones_like(ua), ua, ub, uc, ab, ac, bc, abc], axis=-1)
        p = np.einsum("ij,ij->i", coef, basis)
        return np.log(np.maximum(p, PROB_FLOOR)), None

    (ab, dab, tab), (ac, dac, tac), (bc, dbc, tbc), (abc, dabc, tabc) = _margins(
        ua, ub, uc, theta
    )
    basis = np.stack([np.ones_like(ua), ua, ub, uc, ab, ac, bc, abc], axis=-1)
    p = np.einsum("ij,ij->i", coef, basis)
    clamped = p < PROB_FLOOR
    logp = np.log(np.maximum(p, PROB_FLOOR))

    k_ab, k_ac, k_bc, k_abc = coef[:, 4], coef[:, 5], coef[:, 6], coef[:, 7]
    dp_dua = coef[:, 1] + k_ab * dab[0] + k_ac * dac[0] + k_abc * dabc[0]
    dp_dub = coef[:, 2] + k_ab * dab[1] + k_bc * dbc[0] + k_abc * dabc[1]
    dp_duc = coef[:, 3] + k_ac * dac[1] + k_bc * dbc[1] + k_abc * dabc[2]
    dp_dtheta = k_ab * tab + k_ac * tac + k_bc * tbc + k_abc * tabc

    inv_p = np.where(clamped, 0.0, 1.0 / np.maximum(p, PROB_FLOOR))
    # u = F(-index)  =>  du/dindex = -u (1 - u)
    g_a = -dp_dua * ua * (1.0 - ua) * inv_p
    g_b = -dp_dub * ub * (1.0 - ub) * inv_p
    g_c = -dp_duc * uc * (1.0 - uc) * inv_p
    g_theta = dp_dtheta * inv_p

    xb = data.x2 @ params.beta
    dtheta_dtilde = theta_transform(params.theta_tilde)[1]
    scores = np.concatenate(
        [
            g_a[:, None] * data.x1,
            (g_b * d)[:, None] * data.z,
            (g_b + g_c * params.w1)[:, None] * data.x2,
            (g_c * d)[:, None],
            (g_c * xb)[:, None],
            g_c[:, None],
            (g_theta * dtheta_dtilde)[:, None],
        ],
        axis=1,
    )
    return logp, scores


def log_likelihood(data, params: ParameterSet, chunk: int = DEFAULT_CHUNK) -> float:
    """Sum of log cell probabilities of the observed cells."""
    data = as_dataset(data)
    if len(data) == 0:
        raise ValueError("empty dataset")
    logp, _ = _observed_terms(data, params, gradient=False)
    return float(_chunked_sum(logp, chunk))


def log_likelihood_and_gradient(data, params: ParameterSet, chunk: int = DEFAULT_CHUNK):
    data = as_dataset(data)
    if len(data) == 0:
        raise ValueError("empty dataset")
    logp, scores = _observed_terms(data, params, gradient=True)
    return float(_chunked_sum(logp, chunk)), _chunked_sum(scores, chunk)


def log_likelihood_gradient(data, params: ParameterSet, chunk: int = DEFAULT_CHUNK) -> np.ndarray:
    """Analytic gradient in the flat ``ParameterSet`` order (theta_tilde last)."""
    return log_likelihood_and_gradient(data, params, chunk)[1]


def score_matrix(data, params: ParameterSet) -> np.ndarray:
    """Per-record gradient rows; their outer-product sum is the empirical information."""
    data = as_dataset(data)
    return _observed_terms(data, params, gradient=True)[1]
