"""Command-line pipeline: simulate, fit, diagnose, counterfactual, propensity, naive."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import plots
from .copula import kendall_tau, theta_transform
from .counterfactuals import DEFAULT_PRICE, counterfactual_report, cpm
from .diagnostics import heidelberger_welch
from .io import (ModelSpec, RunConfig, counterfactual_draws, load_config, model_spec_for, parse_dataset,
                 write_dataset_csv)
from .likelihood import ParameterSet, parameter_names
from .propensity import (
    control_function_ate,
    ipw_ate,
    naive_probit_effect,
    probit_fit,
    propensity_scores,
    regression_adjustment_ate,
)
from .report import emit_report, fit_rows
from .sampler import PosteriorChain, posterior_summary, read_chain_csv, run_chain, write_chain_csv
from .simulate import acceptance_design, simulate

logger = logging.getLogger("copula_selection")

SUBCOMMANDS = ("simulate", "fit", "counterfactual", "propensity", "naive", "diagnose")


class CommandError(RuntimeError):
    pass


# ---------------------------------------------------------------- config plumbing


def build_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if not args.config:
        _, covspec = acceptance_design(args.n or 50_000, 0, theta=args.theta)
        cfg.covariates = covspec
        cfg.model = model_spec_for(covspec)
        cfg.prior = dataclasses.replace(cfg.prior, instrument_index=cfg.model.instrument_index)
    if args.out:
        cfg.out_dir = Path(args.out)
    if args.format:
        cfg.formats = [f.strip() for f in args.format.split(",")]
    if args.no_figures:
        cfg.figures = False
    if args.seed is not None:
        cfg.mala = dataclasses.replace(cfg.mala, seed=args.seed)
        if cfg.covariates is not None:
            cfg.covariates = dataclasses.replace(cfg.covariates, seed=args.seed)
    if getattr(args, "iterations", None):
        cfg.mala = dataclasses.replace(cfg.mala, iterations=args.iterations, adapt_until=None)
    if getattr(args, "delta", None) is not None:
        cfg.prior = dataclasses.replace(cfg.prior, delta=args.delta)
    if getattr(args, "price", None) is not None:
        cfg.price_per_install = args.price
    if getattr(args, "n", None) and args.config and cfg.covariates is not None:
        cfg.covariates = dataclasses.replace(cfg.covariates, n=args.n)
    if getattr(args, "data", None):
        cfg.data_path = Path(args.data)
    return cfg


def _data_path(cfg: RunConfig) -> Path:
    path = cfg.data_path or cfg.out_dir / "data.csv"
    if not Path(path).exists():
        raise CommandError(f"data file {path} does not exist")
    return Path(path)


def _rel(path, base) -> str:
    return os.path.relpath(Path(path), Path(base)).replace(os.sep, "/")


def _load_data(cfg: RunConfig, spec: ModelSpec | None = None):
    dataset, ingest = parse_dataset(_data_path(cfg), spec or cfg.model)
    logger.info("ingested %d of %d rows", ingest.rows_kept, ingest.rows_in)
    return dataset, ingest


def _covariate_design(dataset):
    """Union of x1 and x2 columns (x1 order first) for the observables-only methods."""
    names = list(dataset.x1_names)
    cols = [dataset.x1[:, j] for j in range(dataset.x1.shape[1])]
    for j, name in enumerate(dataset.x2_names):
        if name not in names:
            names.append(name)
            cols.append(dataset.x2[:, j])
    return np.column_stack(cols), names


# ---------------------------------------------------------------- subcommands


def cmd_simulate(cfg: RunConfig, args) -> dict:
    if cfg.covariates is None:
        raise CommandError("simulate needs a [simulate] section in the config")
    if cfg.true_params is not None:
        t = cfg.true_params
        params = ParameterSet.with_theta(t["gamma"], t["alpha1"], t["beta"], t["alpha2"],
                                         t["w1"], t["w2"], t["theta"])
    else:
        params, _ = acceptance_design(cfg.covariates.n, cfg.covariates.seed, theta=args.theta)
    sim = simulate(params, cfg.covariates)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    data_file = cfg.out_dir / "data.csv"
    write_dataset_csv(sim.raw, data_file)

    ds = sim.dataset
    names = parameter_names(ds.x1_names, ds.z_names, ds.x2_names)
    truth = counterfactual_report(ds, params, price_per_install=cfg.price_per_install)
    results = {
        "command": "simulate",
        "data_file": "data.csv",
        "seed": cfg.covariates.seed,
        "n": len(ds),
        "rates": {"d": float(ds.d.mean()), "ytau": float(ds.y_tau.mean()), "y": float(ds.y.mean())},
        "true_parameters": dict(zip(names, params.flatten().tolist())),
        "true_theta": params.theta,
        "true_kendall_tau": kendall_tau(params.theta),
        "true_counterfactuals": truth.as_dict(),
    }
    emit_report(results, cfg.out_dir, "truth", cfg.formats)
    return results


def cmd_fit(cfg: RunConfig, args) -> dict:
    dataset, ingest = _load_data(cfg)
    chain = run_chain(dataset, cfg.prior, cfg.mala)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_chain_csv(chain, out / "chain.csv")

    burn = cfg.mala.burn_in_fraction
    summary = posterior_summary(chain, burn)
    kept = chain.kept(burn)
    hw = [_hw_row(name, kept[:, j]) for j, name in enumerate(chain.names)]
    start = int(chain.iterations * burn)
    results = {
        "command": "fit",
        "data_file": _rel(_data_path(cfg), out),
        "chain_file": "chain.csv",
        "ingestion": ingest.as_dict(),
        "model_spec": dataclasses.asdict(cfg.model),
        "prior": dataclasses.asdict(cfg.prior),
        "mala": dataclasses.asdict(cfg.mala),
        "dims": list(dataset.dims),
        "n": len(dataset),
        "iterations": chain.iterations,
        "burn_in_fraction": burn,
        "n_draws": summary.n_draws,
        "acceptance_rate": chain.acceptance_rate,
        "acceptance_rate_post_burn_in": chain.acceptance_rate_after(start),
        "final_step": float(chain.step_sizes[-1]),
        "parameters": [
            {"name": nm, "mean": float(m), "sd": float(s)}
            for nm, m, s in zip(summary.names, summary.mean, summary.sd)
        ],
        "theta": {"mean": summary.theta_mean, "sd": summary.theta_sd},
        "kendall_tau_at_theta_mean": kendall_tau(summary.theta_mean),
        "heidelberger_welch": hw,
        "all_stationary": all(r["stationary"] for r in hw),
    }
    emit_report(results, out, "summary", cfg.formats)
    if cfg.figures:
        plots.trace_plot(chain.draws, chain.names, out / "trace.png", burn_in=start)
        plots.posterior_plot(kept, chain.names, out / "posterior.png")
    return results


def _hw_row(name, series, alpha=0.05) -> dict:
    r = heidelberger_welch(series, alpha)
    return {"name": name, "stationary": r.stationary, "kept_fraction": r.kept_fraction,
            "start": r.start, "cvm_statistic": r.cvm_statistic, "critical_value": r.critical_value}


def _read_summary(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise CommandError(f"summary file {path} does not exist")
    return json.loads(path.read_text(encoding="utf-8"))


def _chain_from_summary(summary: dict, summary_path: Path) -> PosteriorChain:
    dims = tuple(summary["dims"])
    return read_chain_csv(summary_path.parent / summary["chain_file"], dims)


def cmd_counterfactual(cfg: RunConfig, args) -> dict:
    summary_path = Path(args.summary) if args.summary else cfg.out_dir / "summary.json"
    summary = _read_summary(summary_path)
    price = cfg.price_per_install

    if "chain_file" not in summary:
        # a summary of already-computed quantities: reprice only
        quantities = {k: float(summary[k]) for k in ("ate", "att", "adverse_selection_loss") if k in summary}
        for g, v in summary.get("late_by_group", {}).items():
            quantities[f"late[{g}]"] = float(v)
        if not quantities:
            raise CommandError(f"{summary_path}: no parameters and no effect quantities to price")
        results = {"command": "counterfactual", "mode": "reprice", "price_per_install": price,
                   **{k: v for k, v in quantities.items() if not k.startswith("late[")},
                   "cpm_equivalents": {k: cpm(v, price) for k, v in quantities.items()}}
        emit_report(results, cfg.out_dir, "counterfactual", cfg.formats)
        return results

    spec = ModelSpec(**summary["model_spec"])
    if cfg.data_path is None:
        cfg.data_path = summary_path.parent / summary["data_file"]
    dataset, _ = _load_data(cfg, spec)
    chain = _chain_from_summary(summary, summary_path)
    kept = chain.kept(summary["burn_in_fraction"])
    n_draws = args.draws if args.draws else counterfactual_draws(cfg.counterfactual_mode)
    if n_draws:
        rep = counterfactual_report(dataset, draws=kept, dims=chain.dims, price_per_install=price,
                                    max_draws=n_draws)
    else:
        params = ParameterSet.unflatten(kept.mean(axis=0), chain.dims)
        rep = counterfactual_report(dataset, params, price_per_install=price)
    results = {"command": "counterfactual", **rep.as_dict()}
    emit_report(results, cfg.out_dir, "counterfactual", cfg.formats)
    if cfg.figures and rep.late_by_group:
        plots.late_plot(rep.late_by_group, rep.ate, cfg.out_dir / "late.png")
    return results


def cmd_propensity(cfg: RunConfig, args) -> dict:
    dataset, ingest = _load_data(cfg)
    X, names = _covariate_design(dataset)
    first = probit_fit(X, dataset.d, names)
    p_hat = propensity_scores(first, X)
    outcomes = {}
    for label, y in (("ytau", dataset.y_tau), ("y", dataset.y)):
        cf1 = control_function_ate(y, dataset.d, p_hat, 1)
        cf3 = control_function_ate(y, dataset.d, p_hat, 3)
        ipw = ipw_ate(y, dataset.d, p_hat)
        ra = regression_adjustment_ate(X, y, dataset.d, names)
        outcomes[label] = {
            "control_function_degree1": {"ate": cf1.ate, "se": cf1.se, "n_used": cf1.n_used,
                                         "table": fit_rows(cf1.fit)},
            "control_function_degree3": {"ate": cf3.ate, "se": cf3.se, "n_used": cf3.n_used,
                                         "table": fit_rows(cf3.fit)},
            "ipw": {"ate": ipw.ate, "se": ipw.se, "n_used": ipw.n_used, "n_trimmed": ipw.n_trimmed},
            "regression_adjustment": {"ate": ra.ate, "se": ra.se, "n_used": ra.n_used},
        }
    results = {
        "command": "propensity",
        "ingestion": ingest.as_dict(),
        "first_stage": {"n_used": first.n_used, "converged": first.converged,
                        "log_likelihood": first.log_likelihood, "table": fit_rows(first)},
        "outcomes": outcomes,
        "note": "second-stage standard errors ignore estimation of the propensity score",
    }
    emit_report(results, cfg.out_dir, "propensity", cfg.formats)
    if cfg.figures:
        plots.overlap_plot(p_hat, dataset.d, cfg.out_dir / "overlap.png")
    return results


def cmd_naive(cfg: RunConfig, args) -> dict:
    dataset, ingest = _load_data(cfg)
    X, names = _covariate_design(dataset)
    Xd = np.column_stack([X, dataset.d])
    names = names + ["d"]
    out = {}
    for label, y in (("ytau", dataset.y_tau), ("y", dataset.y)):
        fit, ame = naive_probit_effect(Xd, y, -1, names)
        out[label] = {"n_used": fit.n_used, "average_marginal_effect_of_d": ame,
                      "log_likelihood": fit.log_likelihood, "table": fit_rows(fit)}
    results = {"command": "naive", "ingestion": ingest.as_dict(), "outcomes": out}
    emit_report(results, cfg.out_dir, "naive", cfg.formats)
    return results


def cmd_diagnose(cfg: RunConfig, args) -> dict:
    summary = None
    if args.summary:
        summary_path = Path(args.summary)
        summary = _read_summary(summary_path)
        chain = _chain_from_summary(summary, summary_path)
        burn = summary["burn_in_fraction"]
    else:
        chain_path = Path(args.chain) if args.chain else cfg.out_dir / "chain.csv"
        if not chain_path.exists():
            raise CommandError(f"chain file {chain_path} does not exist")
        chain = read_chain_csv(chain_path)
        burn = cfg.mala.burn_in_fraction
    if args.chain and args.summary:
        chain = read_chain_csv(args.chain, chain.dims)
    kept = chain.kept(burn)
    hw = [_hw_row(name, kept[:, j], args.alpha) for j, name in enumerate(chain.names)]
    theta = theta_transform(kept[:, -1])[0]
    results = {
        "command": "diagnose",
        "iterations": chain.iterations,
        "burn_in_fraction": burn,
        "alpha": args.alpha,
        "acceptance_rate": chain.acceptance_rate,
        "posterior_means": dict(zip(chain.names, kept.mean(axis=0).tolist())),
        "theta_mean": float(theta.mean()),
        "heidelberger_welch": hw,
        "all_stationary": all(r["stationary"] for r in hw),
    }
    if summary is not None and "heidelberger_welch" in summary:
        stored = {r["name"]: r["stationary"] for r in summary["heidelberger_welch"]}
        results["matches_summary"] = all(stored.get(r["name"]) == r["stationary"] for r in hw)
    emit_report(results, cfg.out_dir, "diagnostics", cfg.formats)
    return results


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "counterfactual": cmd_counterfactual,
    "propensity": cmd_propensity,
    "naive": cmd_naive,
    "diagnose": cmd_diagnose,
}


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--seed", type=int, help="top-level seed (simulation and sampler)")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--format", help="json, csv or json,csv")
    common.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    common.add_argument("--data", help="input impressions CSV")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="copsel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic impressions CSV")
    p.add_argument("--n", type=int, help="number of impressions")
    p.add_argument("--theta", type=float, default=-0.35, help="copula parameter (built-in design)")

    p = sub.add_parser("fit", parents=[common], help="run the MALA chain and summarize")
    p.add_argument("--iterations", type=int)
    p.add_argument("--delta", type=float, help="instrument prior scale")

    p = sub.add_parser("counterfactual", parents=[common], help="ATE/ATT/LATE and the selection loss")
    p.add_argument("--summary", help="fit summary JSON (default: <out>/summary.json)")
    p.add_argument("--price", type=float, help=f"price per install (default {DEFAULT_PRICE})")
    p.add_argument("--draws", type=int, default=0, help="average over this many posterior draws")

    sub.add_parser("propensity", parents=[common], help="propensity-score benchmark estimators")
    sub.add_parser("naive", parents=[common], help="probit with treatment as a regressor")

    p = sub.add_parser("diagnose", parents=[common], help="Heidelberger-Welch on a stored chain")
    p.add_argument("--chain", help="chain dump CSV")
    p.add_argument("--summary", help="fit summary JSON (locates the chain)")
    p.add_argument("--alpha", type=float, default=0.05)

    for name in ("propensity", "naive", "diagnose", "counterfactual", "fit"):
        sub.choices[name].set_defaults(n=None, theta=-0.35)
    return parser


def run_command(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        results = COMMANDS[args.command](cfg, args)
    except Exception as exc:  # surfaced as a machine-readable record
        record = {
            "status": "error",
            "command": args.command,
            "error": type(exc).__name__,
            "module": type(exc).__module__,
            "message": str(exc),
        }
        sys.stderr.write(json.dumps(record) + "\n")
        return 1
    sys.stdout.write(json.dumps({"status": "ok", "command": args.command,
                                 "out": str(cfg.out_dir)}) + "\n")
    return 0


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
