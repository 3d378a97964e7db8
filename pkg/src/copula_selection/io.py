"""CSV ingestion, dataset export and the INI run configuration."""

from __future__ import annotations

import configparser
import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .likelihood import Dataset
from .propensity import RankDeficiencyError, check_rank
from .sampler import MalaConfig, PriorSpec
from .simulate import INTERCEPT, CategoricalBlock, ContinuousBlock, CovariateGenSpec


class IngestionError(ValueError):
    pass


@dataclass
class ModelSpec:
    """Maps CSV columns to model roles.

    Role lists use design-column names: ``const`` for the intercept, a raw
    numeric column name, or ``<column>_<level>`` for an indicator of a
    categorical column listed in ``categorical`` (column -> reference level).
    """

    treatment_column: str = "d"
    intermediate_column: str = "ytau"
    final_column: str = "y"
    x1_columns: list[str] = field(default_factory=lambda: [INTERCEPT])
    x2_columns: list[str] = field(default_factory=lambda: [INTERCEPT])
    z_columns: list[str] = field(default_factory=lambda: [INTERCEPT])
    instrument_column: str | None = None
    categorical: dict[str, str] = field(default_factory=dict)
    drop_columns: list[str] = field(default_factory=list)
    group_column: str | None = None

    def __post_init__(self):
        for role in ("x1_columns", "x2_columns", "z_columns"):
            bad = [c for c in getattr(self, role) if c in self.drop_columns]
            if bad:
                raise IngestionError(f"{role} references dropped columns {bad}")
        if self.instrument_column is not None:
            if self.instrument_column not in self.x1_columns or self.instrument_column not in self.x2_columns:
                raise IngestionError(
                    f"instrument {self.instrument_column!r} must appear in both x1_columns and x2_columns"
                )

    @property
    def instrument_index(self) -> int | None:
        if self.instrument_column is None:
            return None
        return self.x2_columns.index(self.instrument_column)

    def _source(self, design_col: str) -> str | None:
        """Raw CSV column that a design column is built from."""
        if design_col == INTERCEPT:
            return None
        for cat in self.categorical:
            if design_col.startswith(cat + "_"):
                return cat
        return design_col

    def raw_columns(self) -> list[str]:
        cols = []
        for c in self.x1_columns + self.x2_columns + self.z_columns:
            src = self._source(c)
            if src is not None and src not in cols:
                cols.append(src)
        if self.group_column is not None and self.group_column not in cols:
            cols.append(self.group_column)
        return cols


@dataclass
class IngestionReport:
    rows_in: int
    rows_kept: int
    dropped: dict[str, int]
    levels: dict[str, list[str]] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"rows_in": self.rows_in, "rows_kept": self.rows_kept,
                "rows_dropped": sum(self.dropped.values()), "dropped_by_reason": dict(self.dropped),
                "categorical_levels": dict(self.levels)}


def _binary(value: str, column: str, line: int):
    v = value.strip()
    if v == "":
        return None
    try:
        f = float(v)
    except ValueError:
        return None
    if f not in (0.0, 1.0):
        raise IngestionError(f"line {line}: column {column!r} must be 0/1, got {value!r}")
    return int(f)


def parse_dataset(path, spec: ModelSpec) -> tuple[Dataset, IngestionReport]:
    """Read an impressions CSV and assemble the role matrices.

    Rows with a missing or unparseable required field are dropped, as are
    rows with y = 1 but y_tau = 0; both are counted by reason.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)
    if not header or not rows:
        raise IngestionError(f"{path}: empty result (no data rows)")
    outcome_cols = [spec.treatment_column, spec.intermediate_column, spec.final_column]
    raw_cols = spec.raw_columns()
    missing = [c for c in outcome_cols + raw_cols if c not in header]
    if missing:
        raise IngestionError(f"{path}: missing columns {missing}")

    dropped: Counter = Counter()
    kept_outcomes, kept_raw = [], []
    for line, row in enumerate(rows, start=2):
        vals = [_binary(row[c] or "", c, line) for c in outcome_cols]
        if any(v is None for v in vals):
            dropped["missing_or_unparseable"] += 1
            continue
        raw = {}
        ok = True
        for c in raw_cols:
            s = (row[c] or "").strip()
            if s == "":
                ok = False
                break
            if c in spec.categorical or c == spec.group_column:
                raw[c] = s
            else:
                try:
                    raw[c] = float(s)
                except ValueError:
                    ok = False
                    break
                if not np.isfinite(raw[c]):
                    ok = False
                    break
        if not ok:
            dropped["missing_or_unparseable"] += 1
            continue
        if vals[2] > vals[1]:
            dropped["install_without_intermediate"] += 1
            continue
        kept_outcomes.append(vals)
        kept_raw.append(raw)

    if not kept_outcomes:
        raise IngestionError(f"{path}: empty result after ingestion ({len(rows)} rows read)")

    n = len(kept_outcomes)
    design: dict[str, np.ndarray] = {INTERCEPT: np.ones(n)}
    levels = {}
    for cat, ref in spec.categorical.items():
        if cat not in raw_cols:
            continue
        col = np.array([r[cat] for r in kept_raw], dtype=object)
        lv = sorted(set(col))
        levels[cat] = lv
        for level in lv:
            if level != ref:
                design[f"{cat}_{level}"] = (col == level).astype(float)
    for c in raw_cols:
        if c not in spec.categorical and c != spec.group_column:
            design[c] = np.array([r[c] for r in kept_raw], dtype=float)

    def build(role):
        cols = getattr(spec, role)
        absent = [c for c in cols if c not in design]
        if absent:
            raise IngestionError(f"{role}: design columns {absent} not present in data")
        X = np.column_stack([design[c] for c in cols])
        try:
            check_rank(X, cols)
        except RankDeficiencyError as exc:
            raise IngestionError(f"{role}: {exc}") from exc
        return X

    out = np.array(kept_outcomes, dtype=np.int8)
    groups = None
    if spec.group_column is not None:
        groups = np.array([str(r[spec.group_column]) for r in kept_raw], dtype=object)
    dataset = Dataset(
        out[:, 0], out[:, 1], out[:, 2],
        build("x1_columns"), build("x2_columns"), build("z_columns"),
        list(spec.x1_columns), list(spec.x2_columns), list(spec.z_columns), groups,
    )
    report = IngestionReport(len(rows), n, dict(sorted(dropped.items())), levels)
    return dataset, report


def write_dataset_csv(raw: dict[str, np.ndarray], path) -> None:
    """Write raw columns; floats use repr so a re-read is exact."""
    cols = list(raw)
    n = len(next(iter(raw.values())))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i in range(n):
            row = []
            for c in cols:
                v = raw[c][i]
                if isinstance(v, (float, np.floating)):
                    row.append(repr(float(v)))
                elif isinstance(v, (int, np.integer)):
                    row.append(str(int(v)))
                else:
                    row.append(str(v))
            w.writerow(row)


def model_spec_for(covspec: CovariateGenSpec) -> ModelSpec:
    """ModelSpec that reads back a CSV written from this synthetic design."""
    return ModelSpec(
        x1_columns=list(covspec.x1), x2_columns=list(covspec.x2), z_columns=list(covspec.z),
        instrument_column=covspec.instrument,
        categorical={blk.name: blk.levels[0] for blk in covspec.categorical},
        group_column=covspec.group_block,
    )


# ---------------------------------------------------------------- config files


def _list(value: str) -> list[str]:
    return [v.strip() for v in value.replace("\n", ",").split(",") if v.strip()]


@dataclass
class RunConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    prior: PriorSpec = field(default_factory=PriorSpec)
    mala: MalaConfig = field(default_factory=MalaConfig)
    covariates: CovariateGenSpec | None = None
    true_params: dict | None = None
    price_per_install: float = 0.52
    out_dir: Path = Path("out")
    formats: list[str] = field(default_factory=lambda: ["json"])
    figures: bool = True
    data_path: Path | None = None
    counterfactual_mode: str = "posterior-mean"


def counterfactual_draws(mode: str) -> int:
    """Posterior draws to average for ``mode``; 0 means the posterior mean.

    Accepted modes are ``posterior-mean`` and ``draws:N``.
    """
    if mode == "posterior-mean":
        return 0
    head, _, count = mode.partition(":")
    if head == "draws" and count.strip().isdigit() and int(count) > 0:
        return int(count)
    raise IngestionError(f"counterfactual_mode {mode!r}: expected posterior-mean or draws:N")


def load_config(path) -> RunConfig:
    """Read an INI run configuration (see README for the grammar)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh)
    cfg = RunConfig()

    if cp.has_section("model"):
        m = cp["model"]
        categorical = {}
        for item in _list(m.get("categorical", "")):
            col, _, ref = item.partition(":")
            categorical[col.strip()] = ref.strip()
        cfg.model = ModelSpec(
            treatment_column=m.get("treatment", "d"),
            intermediate_column=m.get("intermediate", "ytau"),
            final_column=m.get("final", "y"),
            x1_columns=_list(m.get("x1", INTERCEPT)),
            x2_columns=_list(m.get("x2", INTERCEPT)),
            z_columns=_list(m.get("z", INTERCEPT)),
            instrument_column=m.get("instrument") or None,
            categorical=categorical,
            drop_columns=_list(m.get("drop", "")),
            group_column=m.get("group") or None,
        )
    prior_kw = {}
    if cp.has_section("prior"):
        p = cp["prior"]
        for key in ("default_sd", "w1_mean", "w1_sd", "theta_tilde_sd", "delta"):
            if key in p:
                prior_kw[key] = p.getfloat(key)
    cfg.prior = PriorSpec(instrument_index=cfg.model.instrument_index, **prior_kw)

    if cp.has_section("mala"):
        s = cp["mala"]
        kw = {}
        for key in ("iterations", "adapt_until", "seed", "refresh_every"):
            if key in s:
                kw[key] = s.getint(key)
        for key in ("initial_step", "target_accept", "burn_in_fraction"):
            if key in s:
                kw[key] = s.getfloat(key)
        for key in ("preconditioner", "warm_start"):
            if key in s:
                kw[key] = s.get(key)
        cfg.mala = MalaConfig(**kw)

    if cp.has_section("simulate"):
        cfg.covariates, cfg.true_params = _simulate_section(cp, cfg.model)

    if cp.has_section("run"):
        r = cp["run"]
        cfg.price_per_install = r.getfloat("price", cfg.price_per_install)
        cfg.out_dir = Path(r.get("out", str(cfg.out_dir)))
        cfg.formats = _list(r.get("format", ",".join(cfg.formats)))
        cfg.figures = r.getboolean("figures", cfg.figures)
        cfg.counterfactual_mode = r.get("counterfactual_mode", cfg.counterfactual_mode)
        counterfactual_draws(cfg.counterfactual_mode)
        if "data" in r:
            cfg.data_path = Path(r["data"])
    return cfg


def _simulate_section(cp, model: ModelSpec):
    s = cp["simulate"]
    categorical, continuous = [], []
    for sec in cp.sections():
        if sec.startswith("categorical:"):
            name = sec.split(":", 1)[1].strip()
            categorical.append(CategoricalBlock(
                name, _list(cp[sec]["levels"]), [float(v) for v in _list(cp[sec]["probs"])]))
        elif sec.startswith("continuous:"):
            name = sec.split(":", 1)[1].strip()
            c = cp[sec]
            continuous.append(ContinuousBlock(name, c.get("dist", "uniform"),
                                              c.getfloat("a", 0.0), c.getfloat("b", 1.0)))
    covspec = CovariateGenSpec(
        n=s.getint("n"), categorical=categorical, continuous=continuous,
        x1=list(model.x1_columns), x2=list(model.x2_columns), z=list(model.z_columns),
        instrument=model.instrument_column, group_block=model.group_column,
        seed=s.getint("seed", 0),
    )
    truth = {
        "gamma": [float(v) for v in _list(s["gamma"])],
        "alpha1": [float(v) for v in _list(s["alpha1"])],
        "beta": [float(v) for v in _list(s["beta"])],
        "alpha2": s.getfloat("alpha2"),
        "w1": s.getfloat("w1"),
        "w2": s.getfloat("w2"),
        "theta": s.getfloat("theta"),
    }
    return covspec, truth
