"""Static PNG figures written next to the delimited reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 120,
}
# no version string in the PNG header, so reruns are byte-identical
_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, bbox_inches="tight", metadata=_PNG_META)
    plt.close(fig)
    return path


def _grid(k: int, ncol: int = 4):
    nrow = int(np.ceil(k / ncol))
    fig, axes = plt.subplots(nrow, ncol, figsize=(2.6 * ncol, 1.7 * nrow), squeeze=False)
    for ax in axes.flat[k:]:
        ax.set_visible(False)
    return fig, axes.flat


def trace_plot(draws: np.ndarray, names, path, burn_in: int = 0) -> Path:
    with plt.rc_context(STYLE):
        fig, axes = _grid(draws.shape[1])
        for j, ax in enumerate(axes):
            if j >= draws.shape[1]:
                break
            ax.plot(draws[:, j], lw=0.4, color="0.2")
            if burn_in:
                ax.axvline(burn_in, color="tab:red", lw=0.6, ls="--")
            ax.set_title(names[j])
        fig.tight_layout()
        return _save(fig, path)


def posterior_plot(kept: np.ndarray, names, path, truth=None) -> Path:
    with plt.rc_context(STYLE):
        fig, axes = _grid(kept.shape[1])
        for j, ax in enumerate(axes):
            if j >= kept.shape[1]:
                break
            ax.hist(kept[:, j], bins=40, color="0.6", edgecolor="none")
            ax.axvline(kept[:, j].mean(), color="0.1", lw=0.8)
            if truth is not None:
                ax.axvline(truth[j], color="tab:red", lw=0.8, ls="--")
            ax.set_title(names[j])
            ax.set_yticks([])
        fig.tight_layout()
        return _save(fig, path)


def late_plot(late: dict[str, float], ate: float, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 2.8))
        groups = list(late)
        ax.bar(groups, [late[g] for g in groups], color="0.55")
        ax.axhline(ate, color="tab:red", lw=0.8, ls="--", label="ATE")
        ax.axhline(0.0, color="0.2", lw=0.5)
        ax.set_ylabel("effect on install probability")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def overlap_plot(p_hat: np.ndarray, d: np.ndarray, path) -> Path:
    """Propensity-score histograms for the two treatment arms."""
    d = np.asarray(d).astype(bool)
    bins = np.linspace(0.0, 1.0, 41)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 2.8))
        ax.hist(p_hat[~d], bins=bins, density=True, alpha=0.6, color="0.4", label="d = 0")
        ax.hist(p_hat[d], bins=bins, density=True, alpha=0.6, color="tab:blue", label="d = 1")
        ax.set_xlabel("estimated propensity score")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)
