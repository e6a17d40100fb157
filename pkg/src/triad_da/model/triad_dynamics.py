#!/usr/bin/env python3
"""
Vector fields and invariants of the deterministic and stochastic helical triad.

State ``a`` is a complex array (..., 3) holding (a_k, a_p, a_q); noise amplitude
``b`` is a 3-vector applied to every batch row. With D = diag(s_k|k|, s_p|p|, s_q|q|):

    drift            F(a)    = g (a* x D a*)
    HST diffusion    G(a, b) = g (b* x D a*)
    EST diffusion    G(a, b) = g (a* x D b*)

Energy E = a·a* and helicity H = a·D a* are conserved by F.
"""

from dataclasses import dataclass
from typing import Dict, Mapping, Tuple

import numpy as np

from triad_da.model.enums import ModelKind
from triad_da.model.helical_algebra import (TriadGeometry, WaveVector, as_complex3, as_wavevector,
                                            cross, dot, helical_vector)
from triad_da.utils.errors import RealityConditionError

# |a_j| above this (or non-finite) marks a trajectory as diverged
BLOWUP_THRESHOLD = 1e8

# Full Galerkin sum visits (p, q) and (q, p) and carries the opposite overall sign
GALERKIN_TRIAD_SCALE = -0.5


@dataclass
class NoiseAmplitude:
    """Per-mode noise amplitude b = (b_k, b_p, b_q)."""
    b: np.ndarray

    def __post_init__(self):
        self.b = as_complex3(self.b)
        if self.b.shape != (3,):
            raise ValueError(f"Noise amplitude must have shape (3,), got {self.b.shape}")

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.b, dtype=dtype)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.b)


@dataclass
class TriadState:
    """Mode amplitudes at one time."""
    a: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.a = as_complex3(self.a)

    @property
    def diverged(self) -> bool:
        return bool(is_diverged(self.a))


def is_diverged(a) -> np.ndarray:
    """True where any |a_j| exceeds BLOWUP_THRESHOLD or is non-finite (reduces the last axis)."""
    a = np.asarray(a)
    with np.errstate(over="ignore", invalid="ignore"):
        bad = ~np.isfinite(a) | (np.abs(a) > BLOWUP_THRESHOLD)
    return np.any(bad, axis=-1)


def deterministic_rhs(a, geom: TriadGeometry) -> np.ndarray:
    """F(a) = g (a* x D a*)."""
    a_conj = np.conj(as_complex3(a))
    return geom.g * cross(a_conj, geom.d_diag * a_conj)


def hst_diffusion(a, b, geom: TriadGeometry) -> np.ndarray:
    """HST noise direction g (b* x D a*)."""
    return geom.g * cross(np.conj(as_complex3(b)), geom.d_diag * np.conj(as_complex3(a)))


def est_diffusion(a, b, geom: TriadGeometry) -> np.ndarray:
    """EST noise direction g (a* x D b*)."""
    return geom.g * cross(np.conj(as_complex3(a)), geom.d_diag * np.conj(as_complex3(b)))


def diffusion(model: ModelKind, a, b, geom: TriadGeometry) -> np.ndarray:
    """Diffusion direction for ``model``; zero for the deterministic model."""
    model = ModelKind.parse(model)
    if model is ModelKind.HST:
        return hst_diffusion(a, b, geom)
    if model is ModelKind.EST:
        return est_diffusion(a, b, geom)
    return np.zeros_like(as_complex3(a))


def stage_increment(model: ModelKind, a: np.ndarray, b: np.ndarray, dt: float, dw: np.ndarray,
                    geom: TriadGeometry) -> np.ndarray:
    """F(a) dt + G(a, b) dW for a batch of states.

    Args:
        a: States, shape (n, 3).
        b: Noise amplitude, shape (3,).
        dt: Time step.
        dw: Scalar Wiener increments, shape (n,).

    Both stochastic forms are bilinear in (a*, b*) so drift and diffusion
    share one cross product.
    """
    a_conj = np.conj(a)
    if model is ModelKind.DETERMINISTIC:
        return (geom.g * dt) * cross(a_conj, geom.d_diag * a_conj)
    mixed = a_conj * dt + np.conj(b) * dw[:, None]
    if model is ModelKind.HST:
        return geom.g * cross(mixed, geom.d_diag * a_conj)
    return geom.g * cross(a_conj, geom.d_diag * mixed)


def energy(a) -> np.ndarray:
    """E = a·a* = sum |a_j|^2."""
    a = np.asarray(a)
    return np.real(np.sum(a * np.conj(a), axis=-1))


def helicity(a, geom: TriadGeometry) -> np.ndarray:
    """H = a·D a* = sum s_j |j| |a_j|^2."""
    a = np.asarray(a)
    return np.real(np.sum(geom.d_diag * a * np.conj(a), axis=-1))


def difference_identity_residual(a, b, geom: TriadGeometry) -> float:
    """Max |(a* x D b - b x D a*) - (rho I - D)(a x b)*| for real b."""
    a = as_complex3(a)
    b = np.real(as_complex3(b)).astype(np.complex128)
    lhs = cross(np.conj(a), geom.d_diag * b) - cross(b, geom.d_diag * np.conj(a))
    rhs = (geom.rho - geom.d_diag) * np.conj(cross(a, b))
    return float(np.max(np.abs(lhs - rhs)))


def deviation_increment(model: ModelKind, a, b, geom: TriadGeometry) -> np.ndarray:
    """Coefficient of dW in the deviation of the quantity the model does not conserve.

    HST leaves H fixed and moves the energy: Re(g b·(D a* x a*)); the change of
    E = a·a* over one step is twice this times dW to leading order.
    EST leaves E fixed and moves the helicity: Re(g (D b)·(D a* x a*)); the
    change of H = a·D a* over one step is twice this times dW to leading order.

    Raises:
        ValueError: For the deterministic model, which has no deviation.
    """
    model = ModelKind.parse(model)
    a_conj = np.conj(as_complex3(a))
    b = as_complex3(b)
    c = cross(geom.d_diag * a_conj, a_conj)
    if model is ModelKind.HST:
        return np.real(geom.g * dot(b, c))
    if model is ModelKind.EST:
        return np.real(geom.g * dot(geom.d_diag * b, c))
    raise ValueError("Deterministic model has no energy or helicity deviation")


def galerkin_oracle_rhs(coeffs: Mapping[Tuple[WaveVector, int], complex], k, s_k: int,
                        gamma=(1.0, 1.0, 1.0)) -> complex:
    """Right-hand side for mode (k, s_k) by direct summation over all interacting pairs.

    Evaluates sum over p + q = -k and parities of
    -(1/4) (s_p|p| - s_q|q|) u_p* u_q* (h_p* x h_q*)·h_k*.

    Args:
        coeffs: Mapping (wavevector, parity) -> complex coefficient. Must
            satisfy u(-w, s) = u(w, s)* for every entry.
        k: Target wavevector.
        s_k: Target parity.
        gamma: Orientation vector for the helical basis.

    Raises:
        RealityConditionError: If a conjugate partner is missing or mismatched.
    """
    table: Dict[Tuple[WaveVector, int], complex] = {}
    for (w, s), value in coeffs.items():
        table[(as_wavevector(w), int(s))] = complex(value)
    for (w, s), value in table.items():
        partner = table.get((tuple(-x for x in w), s))
        if partner is None or abs(partner - np.conj(value)) > 1e-12 * max(1.0, abs(value)):
            raise RealityConditionError(
                f"Reality condition violated for mode {w} (parity {s}): "
                f"partner {tuple(-x for x in w)} is {partner}, expected {np.conj(value)}")

    k = as_wavevector(k)
    h_k_conj = np.conj(helical_vector(k, s_k, gamma))
    total = 0j
    for (p, s_p), u_p in table.items():
        q = tuple(-kc - pc for kc, pc in zip(k, p))
        if q == (0, 0, 0) or p == (0, 0, 0) or u_p == 0:
            continue
        for s_q in (1, -1):
            u_q = table.get((q, s_q))
            if not u_q:
                continue
            h_p = helical_vector(p, s_p, gamma)
            h_q = helical_vector(q, s_q, gamma)
            weight = s_p * np.linalg.norm(p) - s_q * np.linalg.norm(q)
            total += -0.25 * weight * np.conj(u_p) * np.conj(u_q) * dot(cross(np.conj(h_p), np.conj(h_q)), h_k_conj)
    return complex(total)


def triad_coefficients(a, geom: TriadGeometry) -> Dict[Tuple[WaveVector, int], complex]:
    """Six-mode coefficient map (triad members and conjugate partners) for state ``a``."""
    a = as_complex3(a)
    coeffs = {}
    for w, s, value in zip(geom.wavevectors, geom.parities, a):
        coeffs[(w, s)] = complex(value)
        coeffs[(tuple(-x for x in w), s)] = complex(np.conj(value))
    return coeffs


def galerkin_triad_reduction(a, geom: TriadGeometry) -> np.ndarray:
    """Galerkin sum over the six-mode set, normalised to compare with deterministic_rhs."""
    coeffs = triad_coefficients(a, geom)
    raw = [galerkin_oracle_rhs(coeffs, w, s, geom.gamma) for w, s in zip(geom.wavevectors, geom.parities)]
    return GALERKIN_TRIAD_SCALE * np.asarray(raw)


def has_extra_closures(geom: TriadGeometry) -> bool:
    """True if the mode set {+-k, +-p, +-q} closes into triads other than +-(k, p, q).

    A repeated wavevector leaves fewer than six distinct modes, which also counts.
    """
    modes = set()
    for w in geom.wavevectors:
        modes.add(w)
        modes.add(tuple(-x for x in w))
    if len(modes) < 6:
        return True
    own = {tuple(sorted(geom.wavevectors)), tuple(sorted(tuple(-x for x in w) for w in geom.wavevectors))}
    for target in modes:
        for p in modes:
            q = tuple(-t - pc for t, pc in zip(target, p))
            if q in modes and 0 not in (sum(abs(x) for x in p), sum(abs(x) for x in q)):
                if tuple(sorted((target, p, q))) not in own:
                    return True
    return False


def lu_salt_coincidence_residual(geom: TriadGeometry) -> float:
    """Max |f| over the three transport-noise interaction coefficients.

    f_k = (-i (p + q)·h_k)(h_p·h_q) and cyclic permutations, which vanish by
    transversality; the location-uncertainty and SALT closures coincide.
    """
    kv = [np.asarray(w, dtype=float) for w in geom.wavevectors]
    h = geom.h
    residual = 0.0
    for i in range(3):
        j, l = (i + 1) % 3, (i + 2) % 3
        f = (-1j * dot(kv[j] + kv[l], h[i])) * dot(h[j], h[l])
        residual = max(residual, abs(f))
    return float(residual)
