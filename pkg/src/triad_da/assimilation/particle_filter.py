#!/usr/bin/env python3
"""
SIR particle filter for the triad twin experiment.

The truth is a deterministic triad run. At every assimilation time the
modal energies of the truth are observed with Gaussian noise, the ensemble
is propagated under the chosen kernel (deterministic, HST or EST), weighted
by the Gaussian likelihood and resampled multinomially. Diagnostics are
recorded on the forecast ensemble, before resampling.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Callable, List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from triad_da.ensemble.ensemble_engine import (Ensemble, init_ensemble, modal_energies, propagate_ensemble,
                                               propagate_with_tracks, window_steps)
from triad_da.integrate.sde_integrator import integrate_batch
from triad_da.model.enums import ModelKind
from triad_da.model.helical_algebra import as_complex3
from triad_da.utils.errors import FilterDegeneracyError, ObservationError
from triad_da.utils.rng import StreamPurpose, stream

if TYPE_CHECKING:
    from triad_da.cli.config import ExperimentConfig

logger = logging.getLogger(__name__)

# forecast_hook(window_index, forecast_ensemble, observation, truth_state)
ForecastHook = Callable[[int, Ensemble, "Observation", np.ndarray], None]


@dataclass
class Observation:
    """Noisy modal energies observed at time t."""
    z: np.ndarray
    t: float
    cov_diag: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self.cov_diag = np.asarray(self.cov_diag, dtype=float)
        if self.z.shape != (3,) or self.cov_diag.shape != (3,):
            raise ObservationError(f"Observation and covariance must have shape (3,), got {self.z.shape} "
                                   f"and {self.cov_diag.shape}")
        if not np.all(self.cov_diag > 0):
            raise ObservationError(f"Observation variances must be positive, got {self.cov_diag.tolist()}")


def observe(truth, cov_diag, rng: np.random.Generator, t: float = 0.0) -> Observation:
    """z = modal_energies(truth) + eta, eta ~ N(0, diag(cov_diag))."""
    cov_diag = np.asarray(cov_diag, dtype=float)
    if cov_diag.shape != (3,) or not np.all(cov_diag > 0):
        raise ObservationError(f"Observation variances must be three positive numbers, got {cov_diag.tolist()}")
    z = modal_energies(as_complex3(truth)) + rng.normal(0.0, np.sqrt(cov_diag))
    return Observation(z=z, t=t, cov_diag=cov_diag)


def log_likelihood(e: Ensemble, obs: Observation) -> np.ndarray:
    """Gaussian log-likelihood of every particle; -inf for diverged particles."""
    residual = e.modal_energies() - obs.z
    loglik = -0.5 * np.sum(residual ** 2 / obs.cov_diag, axis=1)
    return np.where(e.diverged | ~np.isfinite(loglik), -np.inf, loglik)


def likelihood_weights(e: Ensemble, obs: Observation) -> np.ndarray:
    """Posterior weights: prior weights times likelihood, normalised in log space.

    Raises:
        FilterDegeneracyError: If every particle has zero likelihood or zero prior weight.
    """
    with np.errstate(divide="ignore"):
        log_w = np.log(e.weights) + log_likelihood(e, obs)
    if not np.any(np.isfinite(log_w)):
        raise FilterDegeneracyError()
    log_w -= logsumexp(log_w)
    w = np.exp(log_w)
    return w / w.sum()


def ess(weights) -> float:
    """Effective sample size 1 / sum(w^2)."""
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w ** 2))


def multinomial_resample(e: Ensemble, rng: np.random.Generator) -> Ensemble:
    """Draw n particles with replacement with probabilities ``e.weights``.

    Root lineages follow their particles; identities are reassigned 0..n-1.
    """
    n = e.size
    idx = rng.choice(n, size=n, replace=True, p=e.weights)
    return Ensemble(particles=e.particles[idx], weights=np.full(n, 1.0 / n), ancestors=e.ancestors[idx],
                    t=e.t, ids=np.arange(n, dtype=np.int64), diverged=e.diverged[idx])


def unique_count(e: Ensemble) -> int:
    """Number of distinct root lineages in the ensemble."""
    return int(np.unique(e.ancestors).size)


def bias_and_rmse(e: Ensemble, reference) -> Tuple[np.ndarray, np.ndarray]:
    """Unweighted per-mode bias and RMSE of the particles' modal energies.

    Args:
        e: Ensemble.
        reference: Observation, or a 3-vector of reference modal energies.
    """
    z = reference.z if isinstance(reference, Observation) else np.asarray(reference, dtype=float)
    diff = e.modal_energies() - z
    return diff.mean(axis=0), np.sqrt(np.mean(diff ** 2, axis=0))


@dataclass
class FilterDiagnostics:
    """Per-assimilation-time filter diagnostics (forecast ensemble, pre-resampling)."""
    model: ModelKind
    n_particles: int
    times: np.ndarray
    bias: np.ndarray
    rmse: np.ndarray
    ess: np.ndarray
    unique_count: np.ndarray
    observations: np.ndarray
    truth_energies: np.ndarray
    ensemble_mean: np.ndarray
    ensemble_min: np.ndarray
    ensemble_max: np.ndarray
    diverged: np.ndarray
    truth_bias: Optional[np.ndarray] = None
    truth_rmse: Optional[np.ndarray] = None
    status: str = "ok"
    degenerate_time: Optional[float] = None
    truth_track_times: Optional[np.ndarray] = None
    truth_track: Optional[np.ndarray] = None
    particle_track_times: Optional[np.ndarray] = None
    particle_tracks: Optional[np.ndarray] = None     # (n, m, 3)

    @property
    def n_windows(self) -> int:
        return int(self.times.shape[0])

    def envelope_coverage(self) -> np.ndarray:
        """Fraction of assimilation times with the truth inside the min/max envelope, per mode."""
        if not self.n_windows:
            return np.zeros(3)
        inside = (self.truth_energies >= self.ensemble_min) & (self.truth_energies <= self.ensemble_max)
        return inside.mean(axis=0)


@dataclass
class _Recorder:
    times: List[float] = field(default_factory=list)
    bias: List[np.ndarray] = field(default_factory=list)
    rmse: List[np.ndarray] = field(default_factory=list)
    ess: List[float] = field(default_factory=list)
    unique: List[int] = field(default_factory=list)
    observations: List[np.ndarray] = field(default_factory=list)
    truth: List[np.ndarray] = field(default_factory=list)
    mean: List[np.ndarray] = field(default_factory=list)
    low: List[np.ndarray] = field(default_factory=list)
    high: List[np.ndarray] = field(default_factory=list)
    diverged: List[int] = field(default_factory=list)
    truth_bias: List[np.ndarray] = field(default_factory=list)
    truth_rmse: List[np.ndarray] = field(default_factory=list)

    @staticmethod
    def _stack(rows, width=3):
        return np.asarray(rows, dtype=float).reshape(-1, width)


def _advance_truth(cfg, geom, truth: np.ndarray, t0: float, n_steps: int, dense: Optional[list]):
    recorder = None
    if dense is not None:
        def recorder(index, t, a, _flags):
            if index or not dense:
                dense.append((t, modal_energies(a[0])))
    states, _ = integrate_batch(ModelKind.DETERMINISTIC, geom, truth.reshape(1, 3), np.zeros(3), cfg.dt, n_steps,
                                record_stride=cfg.record_stride, on_record=recorder, t0=t0)
    return states[0]


def run_twin_experiment(cfg: "ExperimentConfig", forecast_hook: Optional[ForecastHook] = None,
                        raise_on_degeneracy: bool = False) -> FilterDiagnostics:
    """Run the SIR twin experiment described by ``cfg``.

    Args:
        cfg: Experiment configuration (model, noise, ensemble and observation settings).
        forecast_hook: Called with every forecast ensemble before weighting.
        raise_on_degeneracy: Re-raise FilterDegeneracyError instead of
            returning partial diagnostics with status "degenerate".

    Returns:
        FilterDiagnostics with one row per completed assimilation time.
    """
    geom = cfg.geometry()
    model = cfg.model
    b = cfg.b_array
    seed = cfg.seed
    window = window_steps(cfg.da_interval, cfg.dt)
    n_windows = int(cfg.final_time / cfg.da_interval + 1e-9)
    e = init_ensemble(cfg.a0_array, cfg.n_particles, cfg.spread_std, seed)
    truth = cfg.a0_array.copy()
    rec = _Recorder()
    truth_dense = [] if cfg.record_tracks else None
    track_times, tracks = [], []
    status, degenerate_time = "ok", None
    logger.info("Twin experiment: %s kernel, %d particles, %d windows of %g", model.label, e.size, n_windows,
                cfg.da_interval)

    for w in range(1, n_windows + 1):
        t0 = e.t
        if cfg.record_tracks:
            e, times, energies = propagate_with_tracks(e, geom, model, b, cfg.dt, cfg.da_interval, seed,
                                                       cfg.record_stride, workers=cfg.workers)
            track_times.append(times if w == 1 else times[1:])
            tracks.append(energies if w == 1 else energies[:, 1:])
        else:
            e = propagate_ensemble(e, geom, model, b, cfg.dt, cfg.da_interval, seed, workers=cfg.workers)
        truth = _advance_truth(cfg, geom, truth, t0, window, truth_dense)
        obs = observe(truth, cfg.cov_diag, stream(seed, StreamPurpose.OBSERVATION, w), t=e.t)
        if forecast_hook is not None:
            forecast_hook(w, e, obs, truth)

        try:
            weights = likelihood_weights(e, obs)
        except FilterDegeneracyError as exc:
            exc.step = w
            if raise_on_degeneracy:
                raise
            logger.warning("Filter degeneracy at window %d (t=%g): zero total likelihood", w, e.t)
            status, degenerate_time = "degenerate", e.t
            break

        energies_now = e.modal_energies()
        live = energies_now[~e.diverged] if (~e.diverged).any() else energies_now
        bias, rmse = bias_and_rmse(e, obs)
        rec.times.append(e.t)
        rec.bias.append(bias)
        rec.rmse.append(rmse)
        rec.observations.append(obs.z)
        rec.truth.append(modal_energies(truth))
        rec.mean.append(live.mean(axis=0))
        rec.low.append(live.min(axis=0))
        rec.high.append(live.max(axis=0))
        rec.diverged.append(int(e.diverged.sum()))
        if cfg.truth_relative:
            tb, tr = bias_and_rmse(e, modal_energies(truth))
            rec.truth_bias.append(tb)
            rec.truth_rmse.append(tr)

        e = replace(e, weights=weights)
        rec.ess.append(ess(weights))
        e = multinomial_resample(e, stream(seed, StreamPurpose.RESAMPLE, w))
        rec.unique.append(unique_count(e))
        logger.debug("window %d t=%g ess=%.3f unique=%d", w, e.t, rec.ess[-1], rec.unique[-1])

    tracks_arr = np.concatenate(tracks, axis=1) if tracks else None
    return FilterDiagnostics(
        model=model, n_particles=cfg.n_particles, times=np.asarray(rec.times, dtype=float),
        bias=rec._stack(rec.bias), rmse=rec._stack(rec.rmse), ess=np.asarray(rec.ess, dtype=float),
        unique_count=np.asarray(rec.unique, dtype=np.int64), observations=rec._stack(rec.observations),
        truth_energies=rec._stack(rec.truth), ensemble_mean=rec._stack(rec.mean),
        ensemble_min=rec._stack(rec.low), ensemble_max=rec._stack(rec.high),
        diverged=np.asarray(rec.diverged, dtype=np.int64),
        truth_bias=rec._stack(rec.truth_bias) if cfg.truth_relative else None,
        truth_rmse=rec._stack(rec.truth_rmse) if cfg.truth_relative else None,
        status=status, degenerate_time=degenerate_time,
        truth_track_times=np.asarray([t for t, _ in truth_dense]) if truth_dense is not None else None,
        truth_track=np.asarray([v for _, v in truth_dense]).reshape(-1, 3) if truth_dense is not None else None,
        particle_track_times=np.concatenate(track_times) if track_times else None,
        particle_tracks=tracks_arr)


@dataclass
class RepeatSummary:
    """Across-run statistics of repeated twin experiments, per assimilation time.

    Rows cover the assimilation times reached by at least one run; ``runs``
    counts the runs contributing to each row.
    """
    times: np.ndarray
    runs: np.ndarray
    bias_mean: np.ndarray
    bias_min: np.ndarray
    bias_max: np.ndarray
    rmse_mean: np.ndarray
    rmse_min: np.ndarray
    rmse_max: np.ndarray
    ensemble_mean: np.ndarray
    truth: np.ndarray


def aggregate_runs(runs: List[FilterDiagnostics]) -> RepeatSummary:
    """Mean and min/max envelope of bias and RMSE across runs."""
    if not runs:
        raise ValueError("Need at least one run to aggregate")
    longest = max(runs, key=lambda d: d.n_windows)
    m = longest.n_windows
    stacks = {name: np.full((len(runs), m, 3), np.nan) for name in ("bias", "rmse", "ensemble_mean")}
    for r, diag in enumerate(runs):
        for name in stacks:
            stacks[name][r, :diag.n_windows] = getattr(diag, name)
    counts = np.array([sum(d.n_windows > i for d in runs) for i in range(m)], dtype=np.int64)
    with np.errstate(invalid="ignore"):
        return RepeatSummary(
            times=longest.times.copy(), runs=counts,
            bias_mean=np.nanmean(stacks["bias"], axis=0), bias_min=np.nanmin(stacks["bias"], axis=0),
            bias_max=np.nanmax(stacks["bias"], axis=0), rmse_mean=np.nanmean(stacks["rmse"], axis=0),
            rmse_min=np.nanmin(stacks["rmse"], axis=0), rmse_max=np.nanmax(stacks["rmse"], axis=0),
            ensemble_mean=np.nanmean(stacks["ensemble_mean"], axis=0), truth=longest.truth_energies.copy())
