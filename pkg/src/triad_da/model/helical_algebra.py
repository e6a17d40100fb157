#!/usr/bin/env python3
"""
Complex 3-vector algebra, helical basis vectors and triad geometry.

Vectors are numpy arrays whose last axis has length 3; any leading axes are
treated as a batch. Dot products are bilinear (no conjugation), so the
Hermitian norm of ``a`` is ``dot(a, a.conj())``.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Sequence, Tuple

import numpy as np

from triad_da.utils.errors import GeometryError

DEFAULT_GAMMA = (1.0, 1.0, 1.0)
IDENTITY_TOLERANCE = 1e-12

# Reference triad of the numerical studies
REFERENCE_K = (1, 0, 0)
REFERENCE_P = (0, -1, 1)
REFERENCE_Q = (-1, 1, -1)
REFERENCE_PARITIES = (1, -1, -1)

WaveVector = Tuple[int, int, int]


def as_complex3(a) -> np.ndarray:
    """Convert to a complex128 array with trailing axis of length 3."""
    arr = np.asarray(a, dtype=np.complex128)
    if arr.shape[-1:] != (3,):
        raise ValueError(f"Expected a 3-vector (trailing axis 3), got shape {arr.shape}")
    return arr


def as_wavevector(k) -> WaveVector:
    """Convert to an integer 3-tuple, rejecting non-integer components."""
    values = tuple(k)
    if len(values) != 3:
        raise GeometryError(f"Wavevector must have 3 components, got {values}")
    out = []
    for v in values:
        if isinstance(v, (int, np.integer)):
            out.append(int(v))
        elif float(v).is_integer():
            out.append(int(v))
        else:
            raise GeometryError(f"Wavevector components must be integers, got {values}")
    return tuple(out)


def dot(a, b) -> np.ndarray:
    """Bilinear dot product a·b over the last axis."""
    return np.sum(np.asarray(a) * np.asarray(b), axis=-1)


def cross(a, b) -> np.ndarray:
    """Componentwise complex cross product over the last axis."""
    a = np.asarray(a)
    b = np.asarray(b)
    return np.stack((a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
                     a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
                     a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]), axis=-1)


def norm2(a) -> np.ndarray:
    """Hermitian squared norm a·a*, real and non-negative."""
    a = np.asarray(a)
    return np.real(np.sum(a * np.conj(a), axis=-1))


def _check_parity(s) -> int:
    if s not in (1, -1):
        raise GeometryError(f"Parity must be +1 or -1, got {s}")
    return int(s)


def make_helical_vector(k, s: int, gamma=DEFAULT_GAMMA) -> np.ndarray:
    """Helical basis vector h_s(k) = nu x kappa + i s nu.

    Args:
        k: Integer wavevector (nonzero).
        s: Parity, +1 or -1.
        gamma: Constant orientation vector; must not be parallel to k.

    Returns:
        Complex 3-vector with |h|^2 = 2, k·h = 0 and i k x h = s|k| h.

    Raises:
        GeometryError: If k is zero or parallel to gamma.
    """
    kv = np.asarray(as_wavevector(k), dtype=float)
    s = _check_parity(s)
    g = np.asarray(gamma, dtype=float)
    k_norm = np.linalg.norm(kv)
    if k_norm == 0.0:
        raise GeometryError("Wavevector must be nonzero")
    k_cross_gamma = np.cross(kv, g)
    kg_norm = np.linalg.norm(k_cross_gamma)
    if kg_norm <= IDENTITY_TOLERANCE * k_norm * max(np.linalg.norm(g), 1.0):
        raise GeometryError(
            f"Wavevector {tuple(int(x) for x in kv)} is parallel to gamma {tuple(g.tolist())}; "
            "choose a different gamma")
    kappa = kv / k_norm
    nu = k_cross_gamma / kg_norm
    return np.cross(nu, kappa) + 1j * s * nu


@lru_cache(maxsize=4096)
def _cached_helical(k: WaveVector, s: int, gamma: Tuple[float, float, float]) -> np.ndarray:
    h = make_helical_vector(k, s, gamma)
    h.setflags(write=False)
    return h


def helical_vector(k, s: int, gamma=DEFAULT_GAMMA) -> np.ndarray:
    """Cached, read-only variant of make_helical_vector."""
    return _cached_helical(as_wavevector(k), _check_parity(s), tuple(float(x) for x in gamma))


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TriadGeometry:
    """Fixed wavevector triad k + p + q = 0 with parities and derived constants."""
    k: WaveVector
    p: WaveVector
    q: WaveVector
    parities: Tuple[int, int, int]
    gamma: Tuple[float, float, float]
    h: np.ndarray = field(repr=False)          # rows h_{s_k}(k), h_{s_p}(p), h_{s_q}(q)
    g: complex
    d_diag: np.ndarray = field(repr=False)     # (s_k|k|, s_p|p|, s_q|q|)
    magnitudes: np.ndarray = field(repr=False)

    @property
    def wavevectors(self) -> Tuple[WaveVector, WaveVector, WaveVector]:
        return (self.k, self.p, self.q)

    @property
    def h_k(self) -> np.ndarray:
        return self.h[0]

    @property
    def h_p(self) -> np.ndarray:
        return self.h[1]

    @property
    def h_q(self) -> np.ndarray:
        return self.h[2]

    @property
    def rho(self) -> float:
        """Trace of D."""
        return float(np.sum(self.d_diag))

    def scaled(self, m: int) -> "TriadGeometry":
        """The same triad with every wavevector multiplied by the integer m >= 1."""
        if m < 1:
            raise GeometryError(f"Scale factor must be a positive integer, got {m}")
        return build_triad(tuple(m * x for x in self.k), tuple(m * x for x in self.p),
                           tuple(m * x for x in self.q), *self.parities, gamma=self.gamma)


def interaction_coefficient(h_k, h_p, h_q) -> complex:
    """g = -(1/4) h_p* x h_q* · h_k*."""
    return complex(-0.25 * dot(cross(np.conj(h_p), np.conj(h_q)), np.conj(h_k)))


def build_triad(k, p, q, s_k: int, s_p: int, s_q: int, gamma=DEFAULT_GAMMA) -> TriadGeometry:
    """Build and validate a triad geometry.

    Raises:
        GeometryError: If k + p + q != 0, a wavevector is zero or parallel to
            gamma, or a parity is not +1/-1.
    """
    k, p, q = as_wavevector(k), as_wavevector(p), as_wavevector(q)
    total = tuple(a + b + c for a, b, c in zip(k, p, q))
    if total != (0, 0, 0):
        raise GeometryError(f"Triad closure violated: k + p + q = {list(total)}, expected [0, 0, 0]")
    parities = tuple(_check_parity(s) for s in (s_k, s_p, s_q))
    gamma = tuple(float(x) for x in gamma)
    h = np.stack([make_helical_vector(w, s, gamma) for w, s in zip((k, p, q), parities)])
    magnitudes = np.array([np.linalg.norm(np.asarray(w, dtype=float)) for w in (k, p, q)])
    d_diag = np.asarray(parities, dtype=float) * magnitudes
    return TriadGeometry(k=k, p=p, q=q, parities=parities, gamma=gamma,
                         h=_frozen(h), g=interaction_coefficient(h[0], h[1], h[2]),
                         d_diag=_frozen(d_diag), magnitudes=_frozen(magnitudes))


def reference_triad(gamma=DEFAULT_GAMMA) -> TriadGeometry:
    """The k=[1,0,0], p=[0,-1,1], q=[-1,1,-1], s=(+1,-1,-1) triad."""
    return build_triad(REFERENCE_K, REFERENCE_P, REFERENCE_Q, *REFERENCE_PARITIES, gamma=gamma)


@dataclass
class IdentityReport:
    """Maximum absolute residual per basis identity."""
    transversality: float
    curl_eigenfunction: float
    norm: float
    orthogonality: float
    scale_invariance: float

    def as_dict(self) -> Dict[str, float]:
        return dict(self.__dict__)

    def max_residual(self) -> float:
        return max(self.as_dict().values())

    def passed(self, tol: float = IDENTITY_TOLERANCE) -> bool:
        return self.max_residual() <= tol


def verify_basis_identities(geom: TriadGeometry, scales: Sequence[int] = (1, 2, 3)) -> IdentityReport:
    """Check the helical-basis identities for every member of the triad.

    Both parities are built for each wavevector so that h_+ / h_- orthogonality
    can be tested alongside the triad's own helical vectors.
    """
    transversality = curl = norm = ortho = 0.0
    for w in geom.wavevectors:
        kv = np.asarray(w, dtype=float)
        k_abs = np.linalg.norm(kv)
        h_plus = make_helical_vector(w, 1, geom.gamma)
        h_minus = make_helical_vector(w, -1, geom.gamma)
        for s, h in ((1, h_plus), (-1, h_minus)):
            transversality = max(transversality, abs(dot(kv, h)))
            curl = max(curl, float(np.max(np.abs(1j * cross(kv, h) - s * k_abs * h))))
            norm = max(norm, abs(norm2(h) - 2.0))
        ortho = max(ortho, abs(dot(h_plus, np.conj(h_minus))))
    scale = 0.0
    for m in scales:
        scale = max(scale, abs(geom.scaled(m).g - geom.g))
    return IdentityReport(transversality=float(transversality), curl_eigenfunction=float(curl),
                          norm=float(norm), orthogonality=float(ortho), scale_invariance=float(scale))


def vector_identity_residuals(a, b, c, d) -> Dict[str, float]:
    """Residuals of the standard complex vector identities.

    triple_product: a·(b x c) - b·(c x a) and a·(b x c) - c·(a x b)
    bac_cab:        a x (b x c) - (b (a·c) - c (a·b))
    lagrange:       (a x b)·(c x d) - ((a·c)(b·d) - (a·d)(b·c))
    self_cross:     a x a
    """
    abc = dot(a, cross(b, c))
    triple = max(abs(abc - dot(b, cross(c, a))), abs(abc - dot(c, cross(a, b))))
    bac_cab = np.max(np.abs(cross(a, cross(b, c)) - (b * dot(a, c) - c * dot(a, b))))
    lagrange = abs(dot(cross(a, b), cross(c, d)) - (dot(a, c) * dot(b, d) - dot(a, d) * dot(b, c)))
    self_cross = np.max(np.abs(cross(a, a)))
    return {"triple_product": float(triple), "bac_cab": float(bac_cab),
            "lagrange": float(lagrange), "self_cross": float(self_cross)}
