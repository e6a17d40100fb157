#!/usr/bin/env python3
"""
Particle ensembles of the triad model.

Particles are propagated in fixed-size chunks; each chunk reduces its own
modal energies to central moment sums at every record time, and the chunk
sums are merged in index order. Neither the chunking nor the number of
worker processes changes any result.
"""

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy import stats

from triad_da.integrate.sde_integrator import KeyedNoise, integrate_batch, record_count
from triad_da.model.enums import ModelKind
from triad_da.model.helical_algebra import TriadGeometry, as_complex3
from triad_da.model.triad_dynamics import is_diverged
from triad_da.utils.parallel import parallel_map
from triad_da.utils.rng import StreamPurpose, stream

logger = logging.getLogger(__name__)

PARTICLE_CHUNK = 1000
WEIGHT_SUM_TOLERANCE = 1e-10
# m2 at or below (ZERO_VARIANCE_RTOL * max(1, |mean|))^2 counts as zero variance
ZERO_VARIANCE_RTOL = 1e-14


@dataclass
class Ensemble:
    """Weighted particle ensemble at time ``t``.

    ``ancestors`` holds the root lineage (index in the initial ensemble) of
    every particle. ``ids`` are the stable identities that key each
    particle's noise stream within a propagation window.
    """
    particles: np.ndarray
    weights: np.ndarray
    ancestors: np.ndarray
    t: float = 0.0
    ids: Optional[np.ndarray] = None
    diverged: Optional[np.ndarray] = None

    def __post_init__(self):
        self.particles = np.asarray(as_complex3(self.particles)).reshape(-1, 3)
        self.weights = np.asarray(self.weights, dtype=float)
        self.ancestors = np.asarray(self.ancestors, dtype=np.int64)
        n = self.particles.shape[0]
        if self.ids is None:
            self.ids = np.arange(n, dtype=np.int64)
        if self.diverged is None:
            self.diverged = is_diverged(self.particles)
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.diverged = np.asarray(self.diverged, dtype=bool)
        if n < 1:
            raise ValueError("Ensemble must contain at least one particle")
        for name in ("weights", "ancestors", "ids", "diverged"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"Ensemble {name} must have shape ({n},), got {getattr(self, name).shape}")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise ValueError(f"Ensemble weights must be non-negative and sum to 1, sum is {self.weights.sum()!r}")

    @property
    def size(self) -> int:
        return self.particles.shape[0]

    def modal_energies(self) -> np.ndarray:
        return modal_energies(self.particles)


def modal_energies(a) -> np.ndarray:
    """(|a_k|^2, |a_p|^2, |a_q|^2) for every state in ``a``."""
    a = np.asarray(a)
    return np.real(a * np.conj(a))


def init_ensemble(a0, n: int, spread_std: float, seed: int) -> Ensemble:
    """n particles around ``a0`` with independent Gaussian perturbations.

    Real and imaginary parts of every amplitude are perturbed independently
    with standard deviation ``spread_std``; ``a0`` itself is not a member.
    """
    if n < 1:
        raise ValueError(f"Ensemble size must be >= 1, got {n}")
    if spread_std < 0:
        raise ValueError(f"spread_std must be >= 0, got {spread_std}")
    a0 = as_complex3(a0)
    rng = stream(seed, StreamPurpose.INITIAL)
    perturbation = rng.normal(0.0, 1.0, size=(n, 3)) + 1j * rng.normal(0.0, 1.0, size=(n, 3))
    particles = a0 + spread_std * perturbation
    index = np.arange(n, dtype=np.int64)
    return Ensemble(particles=particles, weights=np.full(n, 1.0 / n), ancestors=index.copy(), t=0.0, ids=index)


def window_steps(duration: float, dt: float) -> int:
    """Steps in a window of ``duration``, which must be a multiple of dt."""
    if duration < 0:
        raise ValueError(f"duration must be >= 0, got {duration}")
    n_steps = int(round(duration / dt))
    if abs(n_steps * dt - duration) > 1e-9 * max(1.0, abs(duration)):
        raise ValueError(f"duration {duration} is not a multiple of dt {dt}")
    return n_steps


# --------------------------------------------------------------------------
# Moments
# --------------------------------------------------------------------------

@dataclass
class MomentSeries:
    """Pointwise-in-time moments of the modal energies over live particles.

    mean/std/skew/kurtosis have shape (m, 3); undefined entries are masked.
    Kurtosis is excess kurtosis (0 for a normal distribution).
    """
    times: np.ndarray
    count: np.ndarray
    diverged: np.ndarray
    mean: np.ma.MaskedArray
    std: np.ma.MaskedArray
    skew: np.ma.MaskedArray
    kurtosis: np.ma.MaskedArray


def _zero_variance(m2: np.ndarray, mean: np.ndarray) -> np.ndarray:
    return m2 <= (ZERO_VARIANCE_RTOL * np.maximum(1.0, np.abs(mean))) ** 2


def ensemble_moments(samples) -> Tuple[np.ma.MaskedArray, np.ma.MaskedArray, np.ma.MaskedArray, np.ma.MaskedArray]:
    """Sample mean, std (divisor n-1), skew and excess kurtosis per component.

    Skew and kurtosis use the biased moment forms m3/m2^1.5 and m4/m2^2 - 3.
    Entries are masked when too few samples are given (2 for std, 3 for skew,
    4 for kurtosis) or, for skew and kurtosis, when the variance is zero.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    shape = x.shape[1:]
    if n == 0:
        masked = np.ma.masked_all(shape)
        return masked, masked.copy(), masked.copy(), masked.copy()
    mean = x.mean(axis=0)
    m2 = np.mean((x - mean) ** 2, axis=0)
    flat = _zero_variance(m2, mean)
    with warnings.catch_warnings(), np.errstate(all="ignore"):
        warnings.simplefilter("ignore")
        std = x.std(axis=0, ddof=1) if n >= 2 else np.zeros(shape)
        skew = stats.skew(x, axis=0, bias=True) if n >= 3 else np.zeros(shape)
        kurt = stats.kurtosis(x, axis=0, fisher=True, bias=True) if n >= 4 else np.zeros(shape)
    std = np.ma.masked_array(std, mask=np.full(shape, n < 2))
    skew = np.ma.masked_array(skew, mask=flat | (n < 3))
    kurt = np.ma.masked_array(kurt, mask=flat | (n < 4))
    return np.ma.masked_array(mean), std, skew, kurt


@dataclass
class CentralSums:
    """Count, mean and central power sums M2..M4 per record time and mode."""
    count: np.ndarray
    mean: np.ndarray
    m2: np.ndarray
    m3: np.ndarray
    m4: np.ndarray

    @classmethod
    def empty(cls, n_records: int) -> "CentralSums":
        zeros = np.zeros((n_records, 3))
        return cls(count=np.zeros(n_records), mean=zeros.copy(), m2=zeros.copy(), m3=zeros.copy(), m4=zeros.copy())

    def set_record(self, index: int, x: np.ndarray) -> None:
        n = x.shape[0]
        self.count[index] = n
        if n == 0:
            return
        mean = x.mean(axis=0)
        d = x - mean
        d2 = d * d
        self.mean[index] = mean
        self.m2[index] = d2.sum(axis=0)
        self.m3[index] = (d2 * d).sum(axis=0)
        self.m4[index] = (d2 * d2).sum(axis=0)

    def merge(self, other: "CentralSums") -> "CentralSums":
        """Pairwise combination of two disjoint samples."""
        na = self.count[:, None]
        nb = other.count[:, None]
        n = na + nb
        safe = np.where(n > 0, n, 1.0)
        delta = other.mean - self.mean
        mean = self.mean + delta * nb / safe
        m2 = self.m2 + other.m2 + delta ** 2 * na * nb / safe
        m3 = (self.m3 + other.m3 + delta ** 3 * na * nb * (na - nb) / safe ** 2
              + 3.0 * delta * (na * other.m2 - nb * self.m2) / safe)
        m4 = (self.m4 + other.m4 + delta ** 4 * na * nb * (na * na - na * nb + nb * nb) / safe ** 3
              + 6.0 * delta ** 2 * (na * na * other.m2 + nb * nb * self.m2) / safe ** 2
              + 4.0 * delta * (na * other.m3 - nb * self.m3) / safe)
        # an empty side contributes nothing
        only_a = (nb == 0) & (na > 0)
        only_b = (na == 0) & (nb > 0)

        def pick(combined, a, b):
            return np.where(only_a, a, np.where(only_b, b, combined))

        return CentralSums(count=n[:, 0], mean=pick(mean, self.mean, other.mean), m2=pick(m2, self.m2, other.m2),
                           m3=pick(m3, self.m3, other.m3), m4=pick(m4, self.m4, other.m4))

    def to_series(self, times: np.ndarray, diverged: np.ndarray) -> MomentSeries:
        n = self.count[:, None]
        safe = np.where(n > 0, n, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            var = self.m2 / safe
            std = np.sqrt(self.m2 / np.where(n > 1, n - 1, 1.0))
            skew = (self.m3 / safe) / var ** 1.5
            kurt = (self.m4 / safe) / var ** 2 - 3.0
        flat = _zero_variance(var, self.mean)
        n_full = np.broadcast_to(n, self.mean.shape)
        return MomentSeries(times=np.asarray(times), count=self.count.astype(np.int64), diverged=np.asarray(diverged),
                            mean=np.ma.masked_array(self.mean, mask=n_full < 1),
                            std=np.ma.masked_array(std, mask=n_full < 2),
                            skew=np.ma.masked_array(skew, mask=(n_full < 3) | flat),
                            kurtosis=np.ma.masked_array(kurt, mask=(n_full < 4) | flat))


# --------------------------------------------------------------------------
# Propagation
# --------------------------------------------------------------------------

@dataclass
class _ChunkTask:
    geom: TriadGeometry
    model: ModelKind
    b: np.ndarray
    states: np.ndarray
    ids: np.ndarray
    diverged: np.ndarray
    dt: float
    n_steps: int
    seed: int
    start_step: int
    t0: float
    record_stride: int = 0          # 0 disables recording
    n_saved: int = 0


@dataclass
class _ChunkResult:
    states: np.ndarray
    diverged: np.ndarray
    sums: Optional[CentralSums] = None
    diverged_count: Optional[np.ndarray] = None
    saved: Optional[np.ndarray] = None
    times: Optional[np.ndarray] = None


def _run_chunk(task: _ChunkTask) -> _ChunkResult:
    noise = None
    if task.model.stochastic and task.n_steps > 0:
        noise = KeyedNoise(task.seed, task.ids, task.start_step, task.dt)
    if not task.record_stride:
        states, flags = integrate_batch(task.model, task.geom, task.states, task.b, task.dt, task.n_steps,
                                        noise=noise, t0=task.t0, diverged=task.diverged)
        return _ChunkResult(states=states, diverged=flags)

    m = record_count(task.n_steps, task.record_stride)
    sums = CentralSums.empty(m)
    diverged_count = np.zeros(m, dtype=np.int64)
    saved = np.zeros((task.n_saved, m, 3))
    times = np.zeros(m)

    def recorder(index, t, a, flags):
        times[index] = t
        live = modal_energies(a[~flags])
        sums.set_record(index, live)
        diverged_count[index] = int(flags.sum())
        if task.n_saved:
            saved[:, index] = modal_energies(a[:task.n_saved])

    states, flags = integrate_batch(task.model, task.geom, task.states, task.b, task.dt, task.n_steps,
                                    noise=noise, record_stride=task.record_stride, on_record=recorder,
                                    t0=task.t0, diverged=task.diverged)
    return _ChunkResult(states=states, diverged=flags, sums=sums, diverged_count=diverged_count,
                        saved=saved, times=times)


def _chunk_slices(n: int) -> List[slice]:
    return [slice(start, min(start + PARTICLE_CHUNK, n)) for start in range(0, n, PARTICLE_CHUNK)]


def _chunk_tasks(e: Ensemble, geom, model, b, dt, n_steps, master_seed, record_stride=0, max_saved=0):
    start_step = int(round(e.t / dt))
    tasks = []
    for sl in _chunk_slices(e.size):
        n_saved = max(0, min(max_saved - sl.start, sl.stop - sl.start))
        tasks.append(_ChunkTask(geom=geom, model=model, b=as_complex3(b), states=e.particles[sl], ids=e.ids[sl],
                                diverged=e.diverged[sl], dt=dt, n_steps=n_steps, seed=master_seed,
                                start_step=start_step, t0=e.t, record_stride=record_stride, n_saved=n_saved))
    return tasks


def propagate_ensemble(e: Ensemble, geom: TriadGeometry, model: ModelKind, b, dt: float, duration: float,
                       master_seed: int, workers: int = 1) -> Ensemble:
    """Advance every particle by ``duration`` with its own keyed noise stream.

    Streams are keyed by (master_seed, particle id, start step of the window).
    Weights, ancestors and ids are unchanged; diverged particles stay frozen
    at their last finite state and are flagged.

    Raises:
        ValueError: If ``duration`` is negative or not a multiple of ``dt``.
    """
    model = ModelKind.parse(model)
    n_steps = window_steps(duration, dt)
    if n_steps == 0:
        return replace(e, particles=e.particles.copy())
    results = parallel_map(_run_chunk, _chunk_tasks(e, geom, model, b, dt, n_steps, master_seed), workers)
    particles = np.concatenate([r.states for r in results])
    flags = np.concatenate([r.diverged for r in results])
    newly = int(flags.sum() - e.diverged.sum())
    if newly:
        logger.info("%d particles diverged in window ending at t=%.6g", newly, e.t + n_steps * dt)
    return Ensemble(particles=particles, weights=e.weights.copy(), ancestors=e.ancestors.copy(),
                    t=e.t + n_steps * dt, ids=e.ids.copy(), diverged=flags)


@dataclass
class EnsembleRun:
    """Result of a free ensemble run (no assimilation)."""
    model: ModelKind
    moments: MomentSeries
    final: Ensemble
    saved_ids: np.ndarray
    saved_energies: np.ndarray      # (n_saved, m, 3)
    b: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.complex128))

    @property
    def times(self) -> np.ndarray:
        return self.moments.times

    @property
    def diverged_count(self) -> int:
        return int(self.final.diverged.sum())


def run_ensemble(geom: TriadGeometry, model: ModelKind, b, a0, n: int, spread_std: float, dt: float,
                 duration: float, master_seed: int, record_stride: int = 100, max_saved: int = 20,
                 workers: int = 1) -> EnsembleRun:
    """Free ensemble run from t = 0 with on-the-fly moment statistics.

    Args:
        geom: Triad geometry.
        model: Triad model.
        b: Noise amplitude.
        a0: Initial state around which the ensemble is drawn.
        n: Number of realisations.
        spread_std: Initial perturbation standard deviation (0 for identical starts).
        dt: Time step.
        duration: Final time.
        master_seed: Master seed.
        record_stride: Steps between recorded times.
        max_saved: Number of realisations whose modal energies are kept in full.
        workers: Worker processes.

    Returns:
        EnsembleRun with moment series over the live particles and the
        diverged count per record time.
    """
    model = ModelKind.parse(model)
    n_steps = window_steps(duration, dt)
    e = init_ensemble(a0, n, spread_std, master_seed)
    tasks = _chunk_tasks(e, geom, model, b, dt, n_steps, master_seed, record_stride=record_stride,
                         max_saved=max_saved)
    logger.info("Running %s ensemble: %d realisations, %d steps, %d chunks", model.label, n, n_steps, len(tasks))
    results = parallel_map(_run_chunk, tasks, workers)
    sums = results[0].sums
    diverged_count = results[0].diverged_count.copy()
    for r in results[1:]:
        sums = sums.merge(r.sums)
        diverged_count += r.diverged_count
    saved = np.concatenate([r.saved for r in results if r.saved.shape[0]]) if max_saved > 0 else np.zeros((0, len(results[0].times), 3))
    final = Ensemble(particles=np.concatenate([r.states for r in results]), weights=e.weights, ancestors=e.ancestors,
                     t=n_steps * dt, ids=e.ids, diverged=np.concatenate([r.diverged for r in results]))
    moments = sums.to_series(results[0].times, diverged_count)
    if final.diverged.any():
        logger.warning("%d of %d realisations diverged", int(final.diverged.sum()), n)
    return EnsembleRun(model=model, moments=moments, final=final, saved_ids=e.ids[:saved.shape[0]],
                       saved_energies=saved, b=as_complex3(b).copy())


def propagate_with_tracks(e: Ensemble, geom: TriadGeometry, model: ModelKind, b, dt: float, duration: float,
                          master_seed: int, record_stride: int, workers: int = 1
                          ) -> Tuple[Ensemble, np.ndarray, np.ndarray]:
    """propagate_ensemble that also returns every particle's modal energies.

    Returns:
        (propagated ensemble, record times (m,), modal energies (n, m, 3)).
        The first record is the state at ``e.t``.
    """
    model = ModelKind.parse(model)
    n_steps = window_steps(duration, dt)
    tasks = _chunk_tasks(e, geom, model, b, dt, n_steps, master_seed, record_stride=record_stride, max_saved=e.size)
    results = parallel_map(_run_chunk, tasks, workers)
    propagated = Ensemble(particles=np.concatenate([r.states for r in results]), weights=e.weights.copy(),
                          ancestors=e.ancestors.copy(), t=e.t + n_steps * dt, ids=e.ids.copy(),
                          diverged=np.concatenate([r.diverged for r in results]))
    return propagated, results[0].times, np.concatenate([r.saved for r in results])
