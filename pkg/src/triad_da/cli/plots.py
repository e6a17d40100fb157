#!/usr/bin/env python3
"""
SVG figures drawn from the same arrays that go into the CSV outputs.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from triad_da.model.enums import MODE_NAMES  # noqa: E402

# byte-stable SVG output
plt.rcParams["svg.hashsalt"] = "triad-da"
plt.rcParams["svg.fonttype"] = "none"

MODE_COLORS = ("tab:blue", "tab:orange", "tab:green")
SVG_METADATA = {"Date": None}


def _save(fig, path: str) -> str:
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    return path


def _mode_label(j: int) -> str:
    return f"mode {MODE_NAMES[j]}"


def plot_trajectory(path: str, traj) -> str:
    """Modal energies, total energy and helicity of one trajectory."""
    fig, (ax_e, ax_h) = plt.subplots(2, 1, figsize=(9, 6), sharex=True, constrained_layout=True)
    energies = traj.modal_energies()
    for j in range(3):
        ax_e.plot(traj.times, energies[:, j], color=MODE_COLORS[j], lw=1.0, label=_mode_label(j))
    ax_e.plot(traj.times, traj.energy_series, color="black", lw=1.2, label="E")
    ax_e.set_ylabel("energy")
    ax_e.legend(loc="upper right", fontsize="small")
    ax_h.plot(traj.times, traj.helicity_series, color="tab:red", lw=1.2, label="H")
    ax_h.set_xlabel("t")
    ax_h.set_ylabel("helicity")
    ax_h.legend(loc="upper right", fontsize="small")
    ax_e.set_title(f"{traj.model.label} triad")
    return _save(fig, path)


def plot_realisations(path: str, times: np.ndarray, energies: np.ndarray, title: str, d_diag=None,
                      mean=None) -> str:
    """Saved realisations (thin) and ensemble means (thick).

    Modal energies are coloured; the total energy is black and, when
    ``d_diag`` is given, the helicity grey.
    """
    fig, ax = plt.subplots(1, 1, figsize=(9, 5), constrained_layout=True)
    for r in range(energies.shape[0]):
        for j in range(3):
            ax.plot(times, energies[r, :, j], color=MODE_COLORS[j], lw=0.5, alpha=0.5)
        ax.plot(times, energies[r].sum(axis=1), color="black", lw=0.5, alpha=0.5)
        if d_diag is not None:
            ax.plot(times, energies[r] @ d_diag, color="grey", lw=0.5, alpha=0.5)
    if mean is not None:
        filled = mean.filled(np.nan)
        for j in range(3):
            ax.plot(times, filled[:, j], color=MODE_COLORS[j], lw=2.0, label=_mode_label(j))
        ax.plot(times, filled.sum(axis=1), color="black", lw=2.0, label="E")
        if d_diag is not None:
            ax.plot(times, filled @ d_diag, color="grey", lw=2.0, label="H")
        ax.legend(loc="upper right", fontsize="small")
    ax.set_title(title)
    ax.set_xlabel("t")
    return _save(fig, path)


def plot_moments(path: str, moments, title: str) -> str:
    """Mean, standard deviation, skew and excess kurtosis of the modal energies."""
    fig, axes = plt.subplots(4, 1, figsize=(9, 10), sharex=True, constrained_layout=True)
    for ax, name in zip(axes, ("mean", "std", "skew", "kurtosis")):
        values = getattr(moments, name)
        for j in range(3):
            ax.plot(moments.times, values[:, j].filled(np.nan), color=MODE_COLORS[j], lw=1.0, label=_mode_label(j))
        ax.set_ylabel(name)
    axes[0].legend(loc="upper right", fontsize="small")
    axes[0].set_title(title)
    axes[-1].set_xlabel("t")
    return _save(fig, path)


def plot_filter_stats(path: str, diag) -> str:
    """Per-mode bias and RMSE against the observations."""
    fig, axes = plt.subplots(2, 1, figsize=(9, 6), sharex=True, constrained_layout=True)
    for j in range(3):
        axes[0].plot(diag.times, diag.bias[:, j], marker="o", ms=3, color=MODE_COLORS[j], label=_mode_label(j))
        axes[1].plot(diag.times, diag.rmse[:, j], marker="o", ms=3, color=MODE_COLORS[j], label=_mode_label(j))
    axes[0].axhline(0.0, color="grey", lw=0.5)
    axes[0].set_ylabel("bias")
    axes[1].set_ylabel("RMSE")
    axes[1].set_xlabel("t")
    axes[0].legend(loc="upper left", fontsize="small")
    axes[0].set_title(f"{diag.model.label} kernel, {diag.n_particles} particles")
    return _save(fig, path)


def plot_filter_envelope(path: str, diag) -> str:
    """Forecast envelope, ensemble mean, observations and truth for each mode."""
    fig, axes = plt.subplots(3, 1, figsize=(9, 9), sharex=True, constrained_layout=True)
    for j, ax in enumerate(axes):
        if diag.particle_tracks is not None:
            for track in diag.particle_tracks[:, :, j]:
                ax.plot(diag.particle_track_times, track, color=MODE_COLORS[j], lw=0.4, alpha=0.3)
        ax.fill_between(diag.times, diag.ensemble_min[:, j], diag.ensemble_max[:, j], color=MODE_COLORS[j],
                        alpha=0.2, step="mid", label="forecast min/max")
        ax.plot(diag.times, diag.ensemble_mean[:, j], color=MODE_COLORS[j], marker="s", ms=3, lw=1.0,
                label="forecast mean")
        if diag.truth_track is not None:
            ax.plot(diag.truth_track_times, diag.truth_track[:, j], color="black", lw=1.0, label="truth")
        else:
            ax.plot(diag.times, diag.truth_energies[:, j], color="black", lw=1.0, label="truth")
        ax.plot(diag.times, diag.observations[:, j], "x", color="tab:red", ms=4, label="observation")
        ax.set_ylabel(f"|a_{MODE_NAMES[j]}|^2")
    axes[0].legend(loc="upper right", fontsize="small")
    axes[0].set_title(f"{diag.model.label} kernel, {diag.n_particles} particles")
    axes[-1].set_xlabel("t")
    return _save(fig, path)


def plot_ess(path: str, diag) -> str:
    """Effective sample size and unique lineages before resampling."""
    fig, ax = plt.subplots(1, 1, figsize=(9, 3.5), constrained_layout=True)
    ax.plot(diag.times, diag.ess, marker="o", ms=3, color="tab:purple", label="ESS")
    ax.plot(diag.times, diag.unique_count, marker=".", ms=3, color="grey", label="unique lineages")
    ax.set_ylim(0, diag.n_particles * 1.05)
    ax.set_xlabel("t")
    ax.legend(loc="upper right", fontsize="small")
    return _save(fig, path)


def plot_repeat(path: str, summary, title: str) -> str:
    """Mean bias and RMSE across runs with their min/max envelope."""
    fig, axes = plt.subplots(3, 2, figsize=(11, 8), sharex=True, constrained_layout=True)
    for j in range(3):
        for col, name in enumerate(("bias", "rmse")):
            ax = axes[j, col]
            ax.fill_between(summary.times, getattr(summary, f"{name}_min")[:, j],
                            getattr(summary, f"{name}_max")[:, j], color=MODE_COLORS[j], alpha=0.25)
            ax.plot(summary.times, getattr(summary, f"{name}_mean")[:, j], color=MODE_COLORS[j], lw=1.2)
            ax.set_ylabel(f"{name} {MODE_NAMES[j]}")
    axes[0, 0].set_title(title)
    axes[-1, 0].set_xlabel("t")
    axes[-1, 1].set_xlabel("t")
    return _save(fig, path)


def plot_rank_histograms(path: str, counts: np.ndarray, title: str) -> str:
    """Stacked rank histograms, one panel per mode."""
    fig, axes = plt.subplots(3, 1, figsize=(6, 7), sharex=True, constrained_layout=True)
    bins = np.arange(counts.shape[1])
    for j, ax in enumerate(axes):
        ax.bar(bins, counts[j], color=MODE_COLORS[j], width=0.9)
        ax.set_ylabel(f"count {MODE_NAMES[j]}")
    axes[0].set_title(title)
    axes[-1].set_xlabel("rank")
    return _save(fig, path)


def plot_repeat_means(path: str, runs, summary, title: str) -> str:
    """Each run's forecast ensemble mean, their across-run mean and the signal."""
    fig, axes = plt.subplots(3, 1, figsize=(9, 9), sharex=True, constrained_layout=True)
    for j, ax in enumerate(axes):
        for diag in runs:
            ax.plot(diag.times, diag.ensemble_mean[:, j], color=MODE_COLORS[j], lw=0.6, alpha=0.5)
        ax.plot(summary.times, summary.ensemble_mean[:, j], color=MODE_COLORS[j], lw=2.0, label="mean over runs")
        ax.plot(summary.times, summary.truth[:, j], color="black", lw=1.0, label="signal")
        ax.set_ylabel(f"|a_{MODE_NAMES[j]}|^2")
    axes[0].legend(loc="upper right", fontsize="small")
    axes[0].set_title(title)
    axes[-1].set_xlabel("t")
    return _save(fig, path)
