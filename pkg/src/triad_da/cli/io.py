#!/usr/bin/env python3
"""
CSV and manifest writers.

Floats are written with format(x, ".17e") so files are locale free and
round-trip exactly; undefined values (masked or NaN) are empty cells.
"""

import csv
import json
import logging
import os
from typing import Iterable, List, Optional, Sequence

import numpy as np

from triad_da import __version__
from triad_da.model.enums import MODE_NAMES

logger = logging.getLogger(__name__)

SCHEMA_TRAJECTORY = "trajectory/1"
SCHEMA_MOMENTS = "ensemble-moments/1"
SCHEMA_REALISATIONS = "ensemble-realisations/1"
SCHEMA_FILTER = "filter-diagnostics/1"
SCHEMA_TRACKS = "filter-tracks/1"
SCHEMA_TRUTH_TRACK = "truth-track/1"
SCHEMA_REPEAT = "repeat-summary/1"
SCHEMA_SCORES = "calibration-scores/1"
SCHEMA_SCORE_SUMMARY = "calibration-summary/1"
SCHEMA_RANKS = "rank-histogram/1"
SCHEMA_SVG = "svg"


def fmt(value) -> str:
    """Format one CSV cell."""
    if value is None or value is np.ma.masked:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    x = float(value)
    if np.isnan(x):
        return ""
    return format(x, ".17e")


def _cells(values) -> List[str]:
    """Format a row of values, honouring masks on masked arrays."""
    if isinstance(values, np.ma.MaskedArray):
        mask = np.ma.getmaskarray(values)
        return [("" if m else fmt(v)) for v, m in zip(values.data, mask)]
    return [fmt(v) for v in values]


def mode_columns(prefix: str) -> List[str]:
    return [f"{prefix}_{m}" for m in MODE_NAMES]


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write a CSV with a header row; rows may hold raw values or pre-formatted cells."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    logger.debug("Wrote %s", path)


class Manifest:
    """MANIFEST.json describing a command's outputs; rewritten after every artifact."""

    def __init__(self, out_dir: str, command: str, seed: int, config_hash: str, config: dict):
        self.out_dir = out_dir
        self.data = {
            "command": command,
            "version": __version__,
            "seed": int(seed),
            "config_sha256": config_hash,
            "config": config,
            "status": "running",
            "artifacts": [],
        }

    @property
    def path(self) -> str:
        return os.path.join(self.out_dir, "MANIFEST.json")

    @property
    def artifacts(self) -> List[dict]:
        return self.data["artifacts"]

    def add(self, filename: str, schema: str) -> str:
        """Record an artifact (path relative to the output directory) and rewrite."""
        self.artifacts.append({"file": filename, "schema": schema})
        self.write()
        return os.path.join(self.out_dir, filename)

    def finish(self, status: str = "ok", message: Optional[str] = None) -> None:
        self.data["status"] = status
        if message:
            self.data["message"] = message
        self.write()

    def write(self) -> None:
        os.makedirs(self.out_dir, exist_ok=True)
        with open(self.path, "w") as f:
            json.dump(self.data, f, indent=2)
            f.write("\n")


# --------------------------------------------------------------------------
# Artifact writers
# --------------------------------------------------------------------------

def write_trajectory_csv(path: str, traj) -> None:
    header = ["t"]
    for m in MODE_NAMES:
        header += [f"re_a_{m}", f"im_a_{m}"]
    header += mode_columns("energy") + ["E", "H"]
    energies = traj.modal_energies()

    def rows():
        for i, t in enumerate(traj.times):
            a = traj.states[i]
            cells = [fmt(t)]
            for j in range(3):
                cells += [fmt(a[j].real), fmt(a[j].imag)]
            cells += _cells(energies[i]) + [fmt(traj.energy_series[i]), fmt(traj.helicity_series[i])]
            yield cells

    write_csv(path, header, rows())


def write_moments_csv(path: str, moments) -> None:
    header = (["t", "count", "diverged"] + mode_columns("mean") + mode_columns("std")
              + mode_columns("skew") + mode_columns("kurtosis"))
    rows = ([fmt(t), fmt(moments.count[i]), fmt(moments.diverged[i])] + _cells(moments.mean[i])
            + _cells(moments.std[i]) + _cells(moments.skew[i]) + _cells(moments.kurtosis[i])
            for i, t in enumerate(moments.times))
    write_csv(path, header, rows)


def write_realisations_csv(path: str, times: np.ndarray, ids: np.ndarray, energies: np.ndarray) -> None:
    """Long format: one row per (realisation, time)."""
    header = ["realisation", "t"] + mode_columns("energy")
    rows = ([fmt(ids[r]), fmt(t)] + _cells(energies[r, i])
            for r in range(energies.shape[0]) for i, t in enumerate(times))
    write_csv(path, header, rows)


def write_filter_csv(path: str, diag) -> None:
    header = (["t"] + mode_columns("bias") + mode_columns("rmse") + ["ess", "unique", "diverged"]
              + mode_columns("obs") + mode_columns("truth") + mode_columns("mean") + mode_columns("min")
              + mode_columns("max"))
    relative = diag.truth_bias is not None
    if relative:
        header += mode_columns("truth_bias") + mode_columns("truth_rmse")

    def rows():
        for i, t in enumerate(diag.times):
            cells = ([fmt(t)] + _cells(diag.bias[i]) + _cells(diag.rmse[i])
                     + [fmt(diag.ess[i]), fmt(diag.unique_count[i]), fmt(diag.diverged[i])]
                     + _cells(diag.observations[i]) + _cells(diag.truth_energies[i])
                     + _cells(diag.ensemble_mean[i]) + _cells(diag.ensemble_min[i]) + _cells(diag.ensemble_max[i]))
            if relative:
                cells += _cells(diag.truth_bias[i]) + _cells(diag.truth_rmse[i])
            yield cells

    write_csv(path, header, rows())


def write_tracks_csv(path: str, times: np.ndarray, tracks: np.ndarray) -> None:
    """Dense per-particle modal energies, long format."""
    header = ["particle", "t"] + mode_columns("energy")
    rows = ([fmt(p), fmt(t)] + _cells(tracks[p, i]) for p in range(tracks.shape[0]) for i, t in enumerate(times))
    write_csv(path, header, rows)


def write_truth_track_csv(path: str, times: np.ndarray, energies: np.ndarray) -> None:
    header = ["t"] + mode_columns("energy")
    write_csv(path, header, ([fmt(t)] + _cells(energies[i]) for i, t in enumerate(times)))


def write_repeat_csv(path: str, summary) -> None:
    header = ["t", "runs"]
    for name in ("bias", "rmse"):
        for stat in ("mean", "min", "max"):
            header += mode_columns(f"{name}_{stat}")
    header += mode_columns("ensemble_mean") + mode_columns("truth")

    def rows():
        for i, t in enumerate(summary.times):
            cells = [fmt(t), fmt(summary.runs[i])]
            for name in ("bias", "rmse"):
                for stat in ("mean", "min", "max"):
                    cells += _cells(getattr(summary, f"{name}_{stat}")[i])
            cells += _cells(summary.ensemble_mean[i]) + _cells(summary.truth[i])
            yield cells

    write_csv(path, header, rows())


def write_scores_csv(path: str, table) -> None:
    header = ["b_k", "b_p", "b_q", "model"] + mode_columns("crps") + ["crps_mean", "seed", "events", "status"]
    rows = (_cells(row.b) + [row.model.label] + _cells(row.crps)
            + [fmt(row.crps_mean), fmt(row.seed), fmt(row.n_events), row.status]
            for row in table.rows)
    write_csv(path, header, rows)


def write_score_summary_csv(path: str, table) -> None:
    header = ["b_k", "b_p", "b_q"] + [f"crps_{m.value}" for m in table.models] + ["crps_overall", "rank"]
    rows = (_cells(s.b) + [fmt(s.crps_by_model[m]) for m in table.models] + [fmt(s.overall), fmt(s.rank)]
            for s in table.summary())
    write_csv(path, header, rows)


def write_rank_histograms_csv(path: str, table) -> None:
    """Long format: one row per (b, model, seed, mode, bin)."""
    header = ["b_k", "b_p", "b_q", "model", "seed", "mode", "bin", "count"]

    def rows():
        for row in table.rows:
            for j, mode in enumerate(MODE_NAMES):
                for bin_index, count in enumerate(row.rank_counts[j]):
                    yield _cells(row.b) + [row.model.label, fmt(row.seed), mode, fmt(bin_index), fmt(count)]

    write_csv(path, header, rows())
