#!/usr/bin/env python3
"""
Noise-amplitude grid sweep scored with CRPS and rank histograms.

Every grid cell runs the twin experiment for one noise vector b and one
stochastic model. At each assimilation time the forecast ensemble's modal
energies are scored against the observation, mode by mode.
"""

import itertools
import logging
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

import numpy as np

from triad_da.assimilation.particle_filter import run_twin_experiment
from triad_da.model.enums import ModelKind
from triad_da.utils.parallel import parallel_map
from triad_da.utils.rng import StreamPurpose, derive_seed, stream

if TYPE_CHECKING:
    from triad_da.cli.config import ExperimentConfig

logger = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_COLLAPSED = "collapsed"
STATUS_DEGENERATE = "degenerate"
STATUS_DIVERGED = "diverged"
SENTINEL_SCORE = float("inf")


def crps_ensemble(members, y: float, fair: bool = False) -> float:
    """Empirical CRPS of an ensemble forecast for observation ``y``.

    CRPS = mean|X_i - y| - sum_ij |X_i - X_j| / (2 M^2). With ``fair`` the
    second term is divided by 2 M (M - 1) instead.
    """
    x = np.sort(np.asarray(members, dtype=float).ravel())
    m = x.size
    if m == 0:
        raise ValueError("CRPS needs at least one ensemble member")
    spread_term = np.abs(x - y).mean()
    # sum_ij |x_i - x_j| for sorted x
    pair_sum = 2.0 * np.sum((2.0 * np.arange(m) - m + 1.0) * x)
    if fair:
        return float(spread_term - (pair_sum / (2.0 * m * (m - 1)) if m > 1 else 0.0))
    return float(max(0.0, spread_term - pair_sum / (2.0 * m * m)))


def rank_of_observation(members, y: float, rng: np.random.Generator) -> int:
    """Rank of ``y`` among the members, 0..M, ties broken uniformly at random."""
    x = np.asarray(members, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("Rank needs at least one ensemble member")
    below = int(np.sum(x < y))
    ties = int(np.sum(x == y))
    return below + int(rng.integers(0, ties + 1)) if ties else below


@dataclass
class ScoreRow:
    """Scores of one (b, model, seed) filter run."""
    b: Tuple[float, float, float]
    model: ModelKind
    seed: int
    crps: np.ndarray               # per-mode mean over assimilation times
    rank_counts: np.ndarray        # (3, M + 1)
    n_events: int
    status: str = STATUS_OK

    @property
    def crps_mean(self) -> float:
        return float(np.mean(self.crps))

    @property
    def failed(self) -> bool:
        return self.status in (STATUS_DEGENERATE, STATUS_DIVERGED)


def score_run(cfg: "ExperimentConfig", fair: bool = False) -> ScoreRow:
    """Run one twin experiment and score its forecasts.

    Degenerate and fully diverged runs keep their partial rank counts and get
    the sentinel score (inf).
    """
    m = cfg.n_particles
    rank_counts = np.zeros((3, m + 1), dtype=np.int64)
    crps_sum = np.zeros(3)
    events = [0]
    last_diverged = [0]
    tie_rng = stream(cfg.seed, StreamPurpose.RANK_TIES)

    def hook(_window, ensemble, obs, _truth):
        energies = ensemble.modal_energies()
        last_diverged[0] = int(ensemble.diverged.sum())
        if last_diverged[0] == ensemble.size:
            return
        for j in range(3):
            crps_sum[j] += crps_ensemble(energies[:, j], obs.z[j], fair=fair)
            rank_counts[j, rank_of_observation(energies[:, j], obs.z[j], tie_rng)] += 1
        events[0] += 1

    diagnostics = run_twin_experiment(cfg, forecast_hook=hook)
    b = tuple(float(np.real(v)) for v in cfg.b_array)
    if diagnostics.status != "ok":
        status = STATUS_DIVERGED if last_diverged[0] == m else STATUS_DEGENERATE
        # the aborted window was scored by the hook but never assimilated
        return ScoreRow(b=b, model=cfg.model, seed=cfg.seed, crps=np.full(3, SENTINEL_SCORE),
                        rank_counts=rank_counts, n_events=events[0], status=status)
    crps = crps_sum / max(events[0], 1)
    status = STATUS_COLLAPSED if diagnostics.n_windows and diagnostics.unique_count[-1] == 1 else STATUS_OK
    return ScoreRow(b=b, model=cfg.model, seed=cfg.seed, crps=crps, rank_counts=rank_counts,
                    n_events=events[0], status=status)


def _score_task(task) -> ScoreRow:
    cfg, fair = task
    row = score_run(cfg, fair=fair)
    logger.info("b=%s %s seed=%d: crps_mean=%.5g (%s)", list(row.b), row.model.label, row.seed, row.crps_mean,
                row.status)
    return row


@dataclass
class SummaryRow:
    """Mean-over-seeds scores for one noise vector."""
    b: Tuple[float, float, float]
    crps_by_model: Dict[ModelKind, float]
    overall: float
    rank: int = 0


@dataclass
class ScoreTable:
    """All scored runs of a sweep, in grid order."""
    rows: List[ScoreRow]
    models: Tuple[ModelKind, ...]

    def grid(self) -> List[Tuple[float, float, float]]:
        seen = []
        for row in self.rows:
            if row.b not in seen:
                seen.append(row.b)
        return seen

    def summary(self) -> List[SummaryRow]:
        """One row per b, ranked by overall mean CRPS (1 is best, sentinels last)."""
        out = []
        for b in self.grid():
            by_model = {}
            for model in self.models:
                scores = [r.crps_mean for r in self.rows if r.b == b and r.model is model]
                by_model[model] = float(np.mean(scores)) if scores else SENTINEL_SCORE
            out.append(SummaryRow(b=b, crps_by_model=by_model, overall=float(np.mean(list(by_model.values())))))
        order = sorted(range(len(out)), key=lambda i: (out[i].overall, i))
        for rank, i in enumerate(order, start=1):
            out[i].rank = rank
        return out

    def ranked(self) -> List[SummaryRow]:
        return sorted(self.summary(), key=lambda s: s.rank)

    def rank_of(self, b: Sequence[float]) -> Optional[int]:
        target = tuple(float(v) for v in b)
        for s in self.summary():
            if np.allclose(s.b, target, rtol=0, atol=1e-12):
                return s.rank
        return None

    def rank_counts(self, model: ModelKind, b: Optional[Sequence[float]] = None) -> np.ndarray:
        """Rank counts summed over seeds (and over b unless given)."""
        selected = [r.rank_counts for r in self.rows
                    if r.model is model and (b is None or np.allclose(r.b, b, rtol=0, atol=1e-12))]
        return np.sum(selected, axis=0) if selected else np.zeros((3, 0), dtype=np.int64)


def grid_sweep(grid: Tuple[Sequence[float], Sequence[float], Sequence[float]], cfg: "ExperimentConfig",
               models: Sequence[ModelKind] = (ModelKind.EST, ModelKind.HST), repeats: int = 1,
               fair: bool = False, workers: int = 1) -> ScoreTable:
    """Score every combination of b_k, b_p, b_q for every model.

    Each (b, repeat) cell draws its seed from the master seed, so both models
    share initial ensembles and observation noise within a cell. Cells run
    in parallel; the table is assembled in grid order.

    Args:
        grid: (b_k values, b_p values, b_q values).
        cfg: Base configuration; its particle count, final time and DA
            interval apply to every cell.
        models: Models to score.
        repeats: Seeds per cell.
        fair: Use the fair CRPS estimator.
        workers: Worker processes.
    """
    models = tuple(ModelKind.parse(m) for m in models)
    vectors = list(itertools.product(*grid))
    tasks = []
    for index, b in enumerate(vectors):
        for repeat in range(repeats):
            seed = derive_seed(cfg.seed, StreamPurpose.CELL, index, repeat)
            for model in models:
                cell_cfg = replace(cfg, b=tuple(complex(v) for v in b), model=model, seed=seed, workers=1,
                                   record_tracks=False, truth_relative=False)
                tasks.append((cell_cfg, fair))
    logger.info("Calibration sweep: %d noise vectors x %d models x %d repeats", len(vectors), len(models), repeats)
    return ScoreTable(rows=parallel_map(_score_task, tasks, workers), models=models)
