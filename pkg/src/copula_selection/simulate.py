"""Synthetic impressions drawn from the full selection model."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .copula import INDEPENDENCE_TOL, THETA_MIN, CopulaDomainError, logistic_quantile
from .likelihood import Dataset, DimensionError, ParameterSet, linear_indices

_BASE_FLOOR = 1e-300
_U_EPS = 1e-12

INTERCEPT = "const"


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named purpose under one top-level seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), zlib.crc32(name.encode())]))


def sample_clayton3(theta: float, rng: np.random.Generator, size: int | None = None, uniforms=None):
    """Draw trivariate Clayton uniforms by conditional inversion.

    ``uniforms`` may supply the driving (u1, p2, p3) draws explicitly, which
    makes the map testable point by point.
    """
    if not np.isfinite(theta) or theta <= THETA_MIN:
        raise CopulaDomainError(f"theta={theta} outside (-0.5, inf)")
    if uniforms is None:
        n = 1 if size is None else size
        u1, p2, p3 = rng.random((3, n))
    else:
        u1, p2, p3 = (np.asarray(v, dtype=float) for v in uniforms)

    if abs(theta) < INDEPENDENCE_TOL:
        u2, u3 = p2, p3
    else:
        a1 = u1 ** (-theta)
        base2 = np.maximum((p2 ** (-theta / (1.0 + theta)) - 1.0) * a1 + 1.0, _BASE_FLOOR)
        u2 = base2 ** (-1.0 / theta)
        s2 = np.maximum(a1 + u2 ** (-theta) - 1.0, _BASE_FLOOR)
        base3 = np.maximum(s2 * (p3 ** (-theta / (1.0 + 2.0 * theta)) - 1.0) + 1.0, _BASE_FLOOR)
        u3 = base3 ** (-1.0 / theta)

    out = tuple(np.clip(u, _U_EPS, 1.0 - _U_EPS) for u in (u1, u2, u3))
    if uniforms is None and size is None:
        return tuple(float(u[0]) for u in out)
    return out


def sample_error_triple(theta: float, rng: np.random.Generator, size: int | None = None):
    """Logistic error triple (e1, e2, e3) with Clayton dependence."""
    us = sample_clayton3(theta, rng, size)
    return tuple(logistic_quantile(u) for u in us)


@dataclass
class CategoricalBlock:
    name: str
    levels: list[str]
    probs: list[float]

    def __post_init__(self):
        if len(self.levels) != len(self.probs):
            raise ValueError(f"{self.name}: levels and probs differ in length")
        if abs(sum(self.probs) - 1.0) > 1e-9 or min(self.probs) < 0:
            raise ValueError(f"{self.name}: level probabilities must sum to 1")

    @property
    def indicator_names(self) -> list[str]:
        return [f"{self.name}_{lv}" for lv in self.levels[1:]]


@dataclass
class ContinuousBlock:
    name: str
    dist: str = "uniform"  # "uniform" (low, high) or "normal" (mean, sd)
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if self.dist not in ("uniform", "normal"):
            raise ValueError(f"{self.name}: unknown distribution {self.dist!r}")


@dataclass
class CovariateGenSpec:
    """Covariate design and role assignment for synthetic data.

    Role lists name generated columns; ``"const"`` is the intercept.
    Categorical blocks contribute one indicator per non-reference level,
    named ``<block>_<level>``.
    """

    n: int
    categorical: list[CategoricalBlock] = field(default_factory=list)
    continuous: list[ContinuousBlock] = field(default_factory=list)
    x1: list[str] = field(default_factory=lambda: [INTERCEPT])
    x2: list[str] = field(default_factory=lambda: [INTERCEPT])
    z: list[str] = field(default_factory=lambda: [INTERCEPT])
    instrument: str | None = None
    group_block: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        known = set(self.columns) | {INTERCEPT}
        for role in ("x1", "x2", "z"):
            missing = [c for c in getattr(self, role) if c not in known]
            if missing:
                raise ValueError(f"{role} references unknown columns {missing}")

    @property
    def columns(self) -> list[str]:
        cols = []
        for blk in self.categorical:
            cols += blk.indicator_names
        cols += [blk.name for blk in self.continuous]
        return cols

    @property
    def dims(self) -> tuple[int, int, int]:
        return len(self.x1), len(self.z), len(self.x2)


@dataclass
class SimulatedData:
    dataset: Dataset
    raw: dict[str, np.ndarray]
    """Raw columns as they would appear in an input CSV (categoricals as level labels)."""


def _draw_covariates(spec: CovariateGenSpec, rng: np.random.Generator):
    raw: dict[str, np.ndarray] = {}
    design: dict[str, np.ndarray] = {INTERCEPT: np.ones(spec.n)}
    for blk in spec.categorical:
        codes = rng.choice(len(blk.levels), size=spec.n, p=blk.probs)
        raw[blk.name] = np.asarray(blk.levels, dtype=object)[codes]
        for j, col in enumerate(blk.indicator_names, start=1):
            design[col] = (codes == j).astype(float)
    for blk in spec.continuous:
        if blk.dist == "uniform":
            vals = rng.uniform(blk.a, blk.b, size=spec.n)
        else:
            vals = rng.normal(blk.a, blk.b, size=spec.n)
        raw[blk.name] = vals
        design[blk.name] = vals
    return raw, design


def simulate(params: ParameterSet, spec: CovariateGenSpec) -> SimulatedData:
    if params.dims != spec.dims:
        raise DimensionError(f"parameter dims {params.dims} do not match design dims {spec.dims}")
    raw, design = _draw_covariates(spec, substream(spec.seed, "covariates"))
    x1 = np.column_stack([design[c] for c in spec.x1])
    x2 = np.column_stack([design[c] for c in spec.x2])
    z = np.column_stack([design[c] for c in spec.z])

    e1, e2, e3 = sample_error_triple(params.theta, substream(spec.seed, "errors"), spec.n)
    n = spec.n
    zero = np.zeros(n, dtype=np.int8)
    tmp = Dataset(zero, zero, zero, x1, x2, z)
    idx = linear_indices(tmp, params)
    d = (idx.a + e1 >= 0).astype(np.int8)
    b = np.where(d == 1, idx.b1, idx.b0)
    c = np.where(d == 1, idx.c1, idx.c0)
    y_tau = (b + e2 >= 0).astype(np.int8)
    y = (y_tau * (c + e3 >= 0)).astype(np.int8)

    groups = None
    if spec.group_block is not None:
        groups = raw[spec.group_block]
    dataset = Dataset(d, y_tau, y, x1, x2, z, list(spec.x1), list(spec.x2), list(spec.z), groups)
    raw = {"d": d, "ytau": y_tau, "y": y, **raw}
    return SimulatedData(dataset, raw)


def simulate_dataset(params: ParameterSet, spec: CovariateGenSpec) -> Dataset:
    """Draw covariates and errors and apply the three threshold equations."""
    return simulate(params, spec).dataset


def potential_outcomes(data: Dataset, params: ParameterSet, rng: np.random.Generator, draws_per_record: int = 1):
    """Brute-force install outcomes under both arms sharing one error draw.

    Returns arrays (y1, y0, treated) with one entry per (record, draw).
    """
    idx = linear_indices(data, params)
    reps = np.repeat(np.arange(len(data)), draws_per_record)
    e1, e2, e3 = sample_error_triple(params.theta, rng, reps.size)
    y1 = (idx.b1[reps] + e2 >= 0) & (idx.c1[reps] + e3 >= 0)
    y0 = (idx.b0[reps] + e2 >= 0) & (idx.c0[reps] + e3 >= 0)
    treated = idx.a[reps] + e1 >= 0
    return y1.astype(float), y0.astype(float), treated


def acceptance_design(n: int, seed: int, theta: float = -0.35) -> tuple[ParameterSet, CovariateGenSpec]:
    """Six-covariate synthetic design with event rates in the 0.1-0.5 range.

    Covariates: a three-level language (two indicators), wifi, brand,
    device volume (the instrument) and a standardized OS version.
    """
    spec = CovariateGenSpec(
        n=n,
        categorical=[
            CategoricalBlock("lang", ["other", "en", "es"], [0.3, 0.45, 0.25]),
            CategoricalBlock("wifi", ["0", "1"], [0.4, 0.6]),
            CategoricalBlock("brand", ["other", "samsung"], [0.7, 0.3]),
        ],
        continuous=[
            ContinuousBlock("volume", "uniform", 0.0, 1.0),
            ContinuousBlock("version", "normal", 0.0, 1.0),
        ],
        x1=[INTERCEPT, "lang_en", "lang_es", "wifi_1", "brand_samsung", "volume", "version"],
        x2=[INTERCEPT, "lang_en", "lang_es", "wifi_1", "brand_samsung", "volume", "version"],
        z=[INTERCEPT, "lang_en", "lang_es"],
        instrument="volume",
        group_block="lang",
        seed=seed,
    )
    params = ParameterSet.with_theta(
        gamma=[0.6, 0.3, -0.2, -0.4, 0.2, -1.2, 0.15],
        alpha1=[-0.5, 0.3, 0.2],
        beta=[-0.3, 0.25, -0.15, 0.2, -0.1, 0.0, 0.3],
        alpha2=0.141,
        w1=0.5,
        w2=0.2,
        theta=theta,
    )
    return params, spec
