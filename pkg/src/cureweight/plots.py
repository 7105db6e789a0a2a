"""Matplotlib figures written next to the CSV reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}

LINESTYLES = ("-", "--", ":", "-.")


def figsize(scale=1.0, ratio=None):
    width = 6.5 * scale
    ratio = ratio or (np.sqrt(5.0) - 1.0) / 2.0
    return width, width * ratio


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_curves(curves: dict, path, title="Survival under control", until=None) -> None:
    """Step plot of named SurvivalCurve objects, held flat out to ``until``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        for i, (name, curve) in enumerate(curves.items()):
            t = np.concatenate(([0.0], curve.times))
            s = np.concatenate(([1.0], curve.probs))
            if until is not None and until > t[-1]:
                t, s = np.append(t, until), np.append(s, s[-1])
            ax.step(t, s, where="post", ls=LINESTYLES[i % len(LINESTYLES)], label=name)
        ax.set_ylim(0, 1.02)
        ax.set_xlabel("Time")
        ax.set_ylabel("Survival probability")
        ax.set_title(title)
        ax.legend(frameon=False)
        _save(fig, path)


def plot_error_boxes(result, path) -> None:
    """Box plots of estimate - truth per estimator, one panel per time."""
    from .simulation import SURVIVAL_ESTIMATORS

    times = result.times
    ncol = min(3, len(times))
    nrow = int(np.ceil(len(times) / ncol))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(nrow, ncol, figsize=figsize(1.2, 0.45 * nrow), squeeze=False,
                                 sharey=True)
        for j, t in enumerate(times):
            ax = axes.flat[j]
            data = [result.errors[:, i, j][np.isfinite(result.errors[:, i, j])]
                    for i in range(len(SURVIVAL_ESTIMATORS))]
            ax.boxplot(data, showfliers=False)
            ax.set_xticks(range(1, len(SURVIVAL_ESTIMATORS) + 1))
            ax.set_xticklabels(SURVIVAL_ESTIMATORS, rotation=30)
            ax.axhline(0.0, color="grey", lw=0.8)
            ax.set_title(f"t = {t:g}")
        for ax in list(axes.flat)[len(times):]:
            ax.set_visible(False)
        axes[0, 0].set_ylabel("Estimate - truth")
        _save(fig, path)


def plot_distributions(samples: dict, path, ylabel="Cure rate") -> None:
    """Box plots of replicate estimates (bootstrap or Monte Carlo)."""
    names = list(samples)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(0.9))
        ax.boxplot([np.asarray(samples[k])[np.isfinite(samples[k])] for k in names])
        ax.set_xticks(range(1, len(names) + 1))
        ax.set_xticklabels(names, rotation=20)
        ax.set_ylabel(ylabel)
        _save(fig, path)


def plot_bias(results, path) -> None:
    """Grouped bars of bias x100 per scenario and estimator."""
    from .simulation import CURE_ESTIMATORS

    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(1.1))
        k = len(CURE_ESTIMATORS)
        x = np.arange(len(results))
        width = 0.8 / k
        for j, name in enumerate(CURE_ESTIMATORS):
            ax.bar(x + (j - (k - 1) / 2) * width, [r.bias100[name] for r in results], width,
                   label=name)
        ax.axhline(0.0, color="grey", lw=0.8)
        ax.set_xticks(x)
        ax.set_xticklabels([r.spec.label() for r in results], rotation=30, ha="right")
        ax.set_ylabel("Bias x100")
        ax.legend(frameon=False, ncol=k)
        _save(fig, path)
