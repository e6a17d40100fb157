#!/usr/bin/env python3
"""
Strong-stability-preserving Runge-Kutta (SSPRK3) integration of the triad.

The stochastic models are Stratonovich SDEs driven by one scalar Wiener
process per trajectory. Each step applies the three-stage SSPRK3 combination
to the increment F(a) dt + G(a, b) dW, reusing the same dW in every stage.

Batches of independent trajectories are integrated together as (n, 3)
arrays; each row draws its noise from its own keyed stream so results do not
depend on how rows are grouped.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from triad_da.model.enums import ModelKind
from triad_da.model.helical_algebra import TriadGeometry, as_complex3
from triad_da.model.triad_dynamics import energy, helicity, is_diverged, stage_increment
from triad_da.utils.rng import StreamPurpose, stream

logger = logging.getLogger(__name__)

NOISE_BLOCK = 4096

# on_record(record_index, t, states, diverged)
Recorder = Callable[[int, float, np.ndarray, np.ndarray], None]


def steps_for(duration: float, dt: float) -> int:
    """Number of dt steps covering ``duration``."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if duration < 0:
        raise ValueError(f"duration must be non-negative, got {duration}")
    return int(math.ceil(duration / dt - 1e-9))


@dataclass
class NoisePath:
    """Wiener increments on a uniform grid."""
    dt: float
    increments: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        self.increments = np.asarray(self.increments, dtype=float)

    @property
    def n_steps(self) -> int:
        return self.increments.shape[-1]

    @property
    def path(self) -> np.ndarray:
        """W(t_n) for n = 0..n_steps."""
        return np.concatenate(([0.0], np.cumsum(self.increments)))

    def coarsen(self, factor: int = 2) -> "NoisePath":
        """Same path on a grid ``factor`` times coarser (increments summed)."""
        if self.n_steps % factor:
            raise ValueError(f"Cannot coarsen {self.n_steps} steps by a factor of {factor}")
        summed = self.increments.reshape(-1, factor).sum(axis=1)
        return NoisePath(dt=self.dt * factor, increments=summed, seed=self.seed)


def generate_noise_path(seed: int, n_steps: int, dt: float, path_id: int = 0, start_step: int = 0) -> NoisePath:
    """Draw a path from the NOISE stream keyed by (seed, path_id, start_step)."""
    if n_steps < 0:
        raise ValueError(f"n_steps must be non-negative, got {n_steps}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    rng = stream(seed, StreamPurpose.NOISE, path_id, start_step)
    return NoisePath(dt=dt, increments=math.sqrt(dt) * rng.standard_normal(n_steps), seed=seed)


class KeyedNoise:
    """Per-row noise streams keyed by (seed, row id, start step)."""

    def __init__(self, seed: int, ids: Sequence[int], start_step: int, dt: float):
        self._generators = [stream(seed, StreamPurpose.NOISE, int(i), int(start_step)) for i in ids]
        self._scale = math.sqrt(dt)

    def block(self, length: int) -> np.ndarray:
        return self._scale * np.stack([g.standard_normal(length) for g in self._generators])


class ArrayNoise:
    """Pre-drawn increments, shape (n_steps,) shared by all rows or (n, n_steps)."""

    def __init__(self, increments: np.ndarray, n_rows: int):
        inc = np.asarray(increments, dtype=float)
        self._inc = np.broadcast_to(inc, (n_rows, inc.shape[-1])) if inc.ndim == 1 else inc
        if self._inc.shape[0] != n_rows:
            raise ValueError(f"Noise has {self._inc.shape[0]} rows for {n_rows} trajectories")
        self._pos = 0

    def block(self, length: int) -> np.ndarray:
        if self._pos + length > self._inc.shape[1]:
            raise ValueError(f"Noise path too short: need {self._pos + length} steps, have {self._inc.shape[1]}")
        out = self._inc[:, self._pos:self._pos + length]
        self._pos += length
        return out


def ssprk3_step(model: ModelKind, a, b, dt: float, dw, geom: TriadGeometry) -> np.ndarray:
    """One SSPRK3 step for a single state (3,) or a batch (n, 3).

    Args:
        model: Triad model.
        a: Current state(s).
        b: Noise amplitude (3,).
        dt: Time step.
        dw: Wiener increment, scalar or one per row.
        geom: Triad geometry.

    Returns:
        State(s) after the step, same shape as ``a``.
    """
    model = ModelKind.parse(model)
    a = as_complex3(a)
    single = a.ndim == 1
    batch = np.atleast_2d(a)
    dw_rows = np.broadcast_to(np.asarray(dw, dtype=float), (batch.shape[0],))
    b = as_complex3(b)
    out = _ssprk3(model, batch, b, dt, dw_rows, geom)
    return out[0] if single else out


def _ssprk3(model, a, b, dt, dw, geom):
    a1 = a + stage_increment(model, a, b, dt, dw, geom)
    a2 = 0.75 * a + 0.25 * (a1 + stage_increment(model, a1, b, dt, dw, geom))
    return a / 3.0 + (2.0 / 3.0) * (a2 + stage_increment(model, a2, b, dt, dw, geom))


def integrate_batch(model: ModelKind, geom: TriadGeometry, a0, b, dt: float, n_steps: int,
                    noise=None, record_stride: int = 1, on_record: Optional[Recorder] = None,
                    t0: float = 0.0, diverged=None, stop_on_divergence: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """Integrate a batch of trajectories for ``n_steps`` steps.

    Rows that exceed the blow-up threshold are frozen at their last finite
    state and flagged; the remaining rows carry on.

    Args:
        model: Triad model.
        geom: Triad geometry.
        a0: Initial states, shape (n, 3).
        b: Noise amplitude (3,).
        dt: Time step.
        n_steps: Number of steps.
        noise: Object with ``block(length) -> (n, length)`` increments
            (KeyedNoise or ArrayNoise). Unused for the deterministic model.
        record_stride: Record every this many steps (the first and last step are
            always recorded).
        on_record: Callback receiving (record_index, t, states, diverged).
        t0: Time of ``a0``.
        diverged: Initial divergence flags, shape (n,).
        stop_on_divergence: Return early once every row has diverged.

    Returns:
        (final states (n, 3), diverged flags (n,)).
    """
    model = ModelKind.parse(model)
    if record_stride < 1:
        raise ValueError(f"record_stride must be >= 1, got {record_stride}")
    a = np.array(as_complex3(a0), dtype=np.complex128, copy=True)
    if a.ndim != 2:
        raise ValueError(f"Batch states must have shape (n, 3), got {a.shape}")
    b = as_complex3(b)
    n = a.shape[0]
    flags = np.zeros(n, dtype=bool) if diverged is None else np.array(diverged, dtype=bool, copy=True)
    flags |= is_diverged(a)
    if model.stochastic and noise is None:
        raise ValueError(f"{model.label} model requires a noise source")

    record_index = 0
    if on_record is not None:
        on_record(record_index, t0, a, flags)
        record_index += 1

    zeros = np.zeros(n)
    done = 0
    while done < n_steps:
        length = min(NOISE_BLOCK, n_steps - done)
        dw_block = noise.block(length) if model.stochastic else None
        for j in range(length):
            dw = dw_block[:, j] if dw_block is not None else zeros
            with np.errstate(over="ignore", invalid="ignore"):
                new = _ssprk3(model, a, b, dt, dw, geom)
            bad = is_diverged(new)
            if bad.any() or flags.any():
                frozen = bad | flags
                new = np.where(frozen[:, None], a, new)
                newly = bad & ~flags
                if newly.any():
                    logger.debug("%d trajectories diverged at t=%.6g", int(newly.sum()), t0 + (done + j + 1) * dt)
                flags = frozen
            a = new
            step = done + j + 1
            stop = stop_on_divergence and flags.all()
            if on_record is not None and (step % record_stride == 0 or step == n_steps or stop):
                on_record(record_index, t0 + step * dt, a, flags)
                record_index += 1
            if stop:
                return a, flags
        done += length
    return a, flags


def record_count(n_steps: int, record_stride: int) -> int:
    """Number of on_record calls made by integrate_batch."""
    count = 1 + n_steps // record_stride
    if n_steps % record_stride:
        count += 1
    return count


@dataclass
class Trajectory:
    """Recorded single trajectory."""
    model: ModelKind
    dt: float
    times: np.ndarray
    states: np.ndarray
    energy_series: np.ndarray
    helicity_series: np.ndarray
    diverged: bool = False
    divergence_time: Optional[float] = None
    b: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.complex128))

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def modal_energies(self) -> np.ndarray:
        return np.real(self.states * np.conj(self.states))


def integrate(model: ModelKind, geom: TriadGeometry, a0, b, dt: float, duration: float,
              noise: Optional[NoisePath] = None, seed: Optional[int] = None,
              record_stride: int = 1, path_id: int = 0) -> Trajectory:
    """Integrate one trajectory from t = 0 to ``duration``.

    Stochastic models take their increments from ``noise`` or, when absent,
    from the NOISE stream of ``seed``. On divergence the trajectory is
    truncated at the last finite recorded state and flagged.

    Raises:
        ValueError: For a missing or mismatched noise path.
    """
    model = ModelKind.parse(model)
    n_steps = steps_for(duration, dt)
    a0 = as_complex3(a0).reshape(1, 3)
    source = None
    if model.stochastic:
        if noise is None:
            if seed is None:
                raise ValueError(f"{model.label} model needs a noise path or a seed")
            noise = generate_noise_path(seed, n_steps, dt, path_id)
        if not math.isclose(noise.dt, dt, rel_tol=1e-12):
            raise ValueError(f"Noise path step {noise.dt} does not match dt {dt}")
        if noise.n_steps < n_steps:
            raise ValueError(f"Noise path has {noise.n_steps} increments, {n_steps} required")
        source = ArrayNoise(noise.increments[:n_steps], 1)

    times: List[float] = []
    states: List[np.ndarray] = []
    divergence: List[float] = []

    def recorder(_index, t, batch, flags):
        if flags[0]:
            if not divergence:
                divergence.append(t)
            return
        times.append(t)
        states.append(batch[0].copy())

    integrate_batch(model, geom, a0, b, dt, n_steps, noise=source, record_stride=record_stride,
                    on_record=recorder, stop_on_divergence=True)
    states_arr = np.asarray(states).reshape(-1, 3)
    return Trajectory(model=model, dt=dt, times=np.asarray(times), states=states_arr,
                      energy_series=energy(states_arr), helicity_series=helicity(states_arr, geom),
                      diverged=bool(divergence), divergence_time=divergence[0] if divergence else None,
                      b=as_complex3(b).copy())
