"""Model-implied treatment effects and the adverse-selection counterfactual."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .copula import INDEPENDENCE_TOL, clayton_eval, logistic_cdf
from .likelihood import ParameterSet, as_dataset, cell_probabilities, linear_indices

logger = logging.getLogger(__name__)

DEFAULT_PRICE = 0.52


def joint_outcome_prob(data, params: ParameterSet, forced_d: int) -> np.ndarray:
    """P(y_tau = 1, y = 1) per record with treatment set to ``forced_d``."""
    data = as_dataset(data)
    idx = linear_indices(data, params)
    b, c = (idx.b1, idx.c1) if forced_d else (idx.b0, idx.c0)
    ub, uc = logistic_cdf(-b), logistic_cdf(-c)
    return 1.0 - ub - uc + clayton_eval([ub, uc], params.theta, derivatives=False)


def effect_per_record(data, params: ParameterSet) -> np.ndarray:
    return joint_outcome_prob(data, params, 1) - joint_outcome_prob(data, params, 0)


def ate(data, params: ParameterSet) -> float:
    data = as_dataset(data)
    if len(data) == 0:
        raise ValueError("empty dataset")
    return float(np.mean(effect_per_record(data, params)))


def att(data, params: ParameterSet) -> float:
    data = as_dataset(data)
    treated = data.d == 1
    if not treated.any():
        raise ValueError("no treated records")
    return float(np.mean(effect_per_record(data, params)[treated]))


def late_by_group(data, params: ParameterSet, group_labels=None) -> dict[str, float]:
    """Average effect within each label, in sorted label order."""
    data = as_dataset(data)
    labels = data.groups if group_labels is None else np.asarray(group_labels)
    if labels is None or len(labels) != len(data):
        raise ValueError("every record needs a group label")
    eff = effect_per_record(data, params)
    labels = np.asarray([str(v) for v in labels])
    out = {}
    for g in sorted(set(labels)):
        mask = labels == g
        if not mask.any():
            logger.warning("group %s is empty; omitted", g)
            continue
        out[str(g)] = float(np.mean(eff[mask]))
    return out


def adverse_selection_loss(data, params: ParameterSet) -> float:
    """Treated-average of P(d=1) P(y_tau=1, y=1 | d=1) - P(d=1, y_tau=1, y=1).

    Under independence the two terms coincide, and 0.0 is returned exactly.
    """
    data = as_dataset(data)
    treated = data.d == 1
    if not treated.any():
        raise ValueError("no treated records")
    if abs(params.theta) < INDEPENDENCE_TOL:
        return 0.0
    sub = data.subset(treated)
    p_d1 = logistic_cdf(linear_indices(sub, params).a)
    joint = joint_outcome_prob(sub, params, 1)
    cell = cell_probabilities(sub, params)["d1_yt1_y1"]
    return float(np.mean(p_d1 * joint - cell))


def cpm(quantity: float, price_per_install: float = DEFAULT_PRICE) -> float:
    """Revenue per thousand impressions of a per-impression install-rate change."""
    if price_per_install < 0:
        raise ValueError("price must be non-negative")
    return quantity * price_per_install * 1000.0


@dataclass
class CounterfactualReport:
    ate: float
    att: float
    late_by_group: dict[str, float]
    adverse_selection_loss: float
    price_per_install: float
    n: int
    n_treated: int
    mode: str = "posterior-mean"
    n_draws: int = 1
    cpm_equivalents: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.cpm_equivalents:
            q = {"ate": self.ate, "att": self.att, "adverse_selection_loss": self.adverse_selection_loss}
            q.update({f"late[{g}]": v for g, v in self.late_by_group.items()})
            self.cpm_equivalents = {k: cpm(v, self.price_per_install) for k, v in q.items()}

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n_draws": self.n_draws,
            "n": self.n,
            "n_treated": self.n_treated,
            "price_per_install": self.price_per_install,
            "ate": self.ate,
            "att": self.att,
            "late_by_group": dict(self.late_by_group),
            "adverse_selection_loss": self.adverse_selection_loss,
            "cpm_equivalents": dict(self.cpm_equivalents),
        }


def _quantities(data, params, groups):
    lates = late_by_group(data, params, groups) if groups is not None else {}
    return ate(data, params), att(data, params), lates, adverse_selection_loss(data, params)


def counterfactual_report(data, params=None, draws=None, dims=None,
                          price_per_install: float = DEFAULT_PRICE,
                          max_draws: int = 200) -> CounterfactualReport:
    """Evaluate every counterfactual at a point estimate or averaged over draws.

    Pass ``params`` for posterior-mean evaluation, or ``draws`` (rows of flat
    parameter vectors) with ``dims`` to average over up to ``max_draws``
    evenly spaced draws.
    """
    data = as_dataset(data)
    groups = data.groups
    n, n_treated = len(data), int(np.sum(data.d == 1))
    if draws is None:
        if params is None:
            raise ValueError("need params or draws")
        a, t, lates, loss = _quantities(data, params, groups)
        return CounterfactualReport(a, t, lates, loss, price_per_install, n, n_treated)

    draws = np.asarray(draws, dtype=float)
    pick = np.unique(np.linspace(0, draws.shape[0] - 1, min(max_draws, draws.shape[0])).astype(int))
    acc = []
    for i in pick:
        acc.append(_quantities(data, ParameterSet.unflatten(draws[i], dims), groups))
    a = float(np.mean([q[0] for q in acc]))
    t = float(np.mean([q[1] for q in acc]))
    keys = acc[0][2].keys()
    lates = {k: float(np.mean([q[2][k] for q in acc])) for k in keys}
    loss = float(np.mean([q[3] for q in acc]))
    return CounterfactualReport(a, t, lates, loss, price_per_install, n, n_treated,
                                mode="draw-averaged", n_draws=len(pick))
