"""Matplotlib figure rendering for the report path.

Figures are written next to the delimited outputs so a run directory is
self-contained: per-state occupancy curves with the non-parametric
baseline dashed, and the transition-probability panel over horizon time.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .chain import N_STATES, STATE_LABELS, StateProbabilityCurve, TransitionMatrixSeries

_STATE_COLORS = plt.rcParams["axes.prop_cycle"].by_key()["color"]


def state_probability_figure(
    model_curves: dict[str, StateProbabilityCurve],
    baseline: StateProbabilityCurve | None,
    path,
    train_cutoff: float | None = None,
) -> None:
    """One panel per state: model occupancy curves plus dashed baseline."""
    fig, axes = plt.subplots(2, 3, figsize=(12, 6.5), sharex=True, sharey=True)
    for k in range(N_STATES):
        ax = axes.flat[k]
        for idx, (name, curve) in enumerate(sorted(model_curves.items())):
            ax.plot(curve.grid, curve.probs[:, k], color=_STATE_COLORS[idx % len(_STATE_COLORS)], label=name)
        if baseline is not None:
            ax.plot(baseline.grid, baseline.probs[:, k], "k--", lw=1.2, label="Turnbull")
        if train_cutoff is not None:
            ax.axvline(train_cutoff, color="grey", ls=":", lw=1)
        ax.set_title(f"state {STATE_LABELS[k]}")
        ax.set_ylim(-0.02, 1.02)
    for ax in axes[-1]:
        ax.set_xlabel("age [years]")
    for ax in axes[:, 0]:
        ax.set_ylabel("probability")
    handles, labels = axes.flat[0].get_legend_handles_labels()
    fig.legend(handles, labels, loc="lower center", ncol=min(len(labels), 6), frameon=False)
    fig.tight_layout(rect=(0, 0.06, 1, 1))
    fig.savefig(path, dpi=150)
    plt.close(fig)


def transition_matrix_figure(series: TransitionMatrixSeries, path) -> None:
    """6x6 grid of transition probabilities P_ij(t, tau) against tau."""
    fig, axes = plt.subplots(N_STATES, N_STATES, figsize=(13, 11), sharex=True, sharey=True)
    for i in range(N_STATES):
        for j in range(N_STATES):
            ax = axes[i, j]
            ax.plot(series.tau_grid, series.matrices[:, i, j], lw=1.2)
            ax.set_ylim(-0.05, 1.05)
            if i == N_STATES - 1:
                ax.set_xlabel("tau")
            if j == 0:
                ax.set_ylabel(f"from {STATE_LABELS[i]}")
            if i == 0:
                ax.set_title(f"to {STATE_LABELS[j]}")
    fig.suptitle(f"P(t={series.t:g}, tau)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def turnbull_figure(threshold_survival: dict[int, tuple], path) -> None:
    """Threshold survival curves: one line per binarization threshold."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for k_bin, (ages, values) in sorted(threshold_survival.items()):
        ax.step(ages, values, where="post", label=f"k_bin={STATE_LABELS[k_bin - 1]}")
    ax.set_xlabel("age [years]")
    ax.set_ylabel("P(state < k_bin)")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
