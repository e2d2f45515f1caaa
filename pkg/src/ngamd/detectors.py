"""Covariance estimation and test statistics.

All functions broadcast over leading batch dimensions: ``y`` may be (..., N)
and a covariance estimate (..., N, N), with ``A`` a single (N, r) matrix.
Quadratic forms go through Cholesky factors; no explicit inverse is formed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import DegenerateSecondary, DomainError, FactorizationError, SingularGram, ZeroSnapshot
from .specfun import TextureParams, cholesky_factor

__all__ = [
    "NGAMD",
    "ASD",
    "GLRT1S",
    "DETECTORS",
    "CovEstimate",
    "DetectorOutput",
    "nscm",
    "mle_x",
    "ngamd_statistic",
    "asd_statistic",
    "glrt1s_statistic",
    "compute_statistics",
    "detect",
]

NGAMD = "ngamd"
ASD = "asd"
GLRT1S = "glrt1s"
DETECTORS = (NGAMD, ASD, GLRT1S)

GRAM_COND_MAX = 1e12


@dataclass(frozen=True, eq=False)
class CovEstimate:
    """A Hermitian PD covariance estimate with its Cholesky factor.

    ``source`` is one of ``"nscm"``, ``"true"`` or ``"external"``.
    """

    matrix: np.ndarray
    source: str
    chol: np.ndarray

    @classmethod
    def from_matrix(cls, R, source: str = "external") -> "CovEstimate":
        R = np.asarray(R)
        return cls(R, source, cholesky_factor(R))


@dataclass(frozen=True)
class DetectorOutput:
    statistic: float
    detector: str


def nscm(secondary) -> CovEstimate:
    """Normalized sample covariance (N/K) sum_k y_k y_k^H / (y_k^H y_k).

    Parameters
    ----------
    secondary : array_like, shape (..., K, N)

    Raises
    ------
    DegenerateSecondary
        If any snapshot is zero or the estimate is not positive definite.
    """
    Y = np.asarray(secondary, dtype=complex)
    K, N = Y.shape[-2:]
    energy = np.einsum("...kn,...kn->...k", Y.conj(), Y).real
    if np.any(energy <= 0):
        raise DegenerateSecondary("secondary snapshot with zero energy")
    Z = Y / np.sqrt(energy)[..., None]
    R = (N / K) * (np.swapaxes(Z, -1, -2) @ Z.conj())
    try:
        L = cholesky_factor(R)
    except FactorizationError as exc:
        raise DegenerateSecondary(str(exc)) from exc
    return CovEstimate(R, "nscm", L)


def _as_estimate(Rhat) -> CovEstimate:
    return Rhat if isinstance(Rhat, CovEstimate) else CovEstimate.from_matrix(Rhat)


def _solve_vec(L, b):
    return np.linalg.solve(L, b[..., None])[..., 0]


@dataclass
class _Whitened:
    y: np.ndarray  # L^-1 y
    gram_chol: np.ndarray  # Cholesky factor of A^H R^-1 A
    u: np.ndarray  # A^H R^-1 y


def _whiten(y, A, Rhat) -> _Whitened:
    est = _as_estimate(Rhat)
    y = np.asarray(y, dtype=complex)
    A = np.asarray(A, dtype=complex)
    yw = _solve_vec(est.chol, y)
    Aw = np.linalg.solve(est.chol, A)
    G = np.swapaxes(Aw.conj(), -1, -2) @ Aw
    ev = np.linalg.eigvalsh(G)
    if np.any(ev[..., 0] <= 0) or np.any(ev[..., -1] > GRAM_COND_MAX * ev[..., 0]):
        raise SingularGram("A^H R^-1 A is numerically singular")
    u = np.einsum("...nr,...n->...r", Aw.conj(), yw)
    return _Whitened(yw, np.linalg.cholesky(G), u)


def mle_x(y, A, Rhat) -> np.ndarray:
    """Weighted least-squares estimate (A^H R^-1 A)^-1 A^H R^-1 y."""
    w = _whiten(y, A, Rhat)
    z = _solve_vec(w.gram_chol, w.u)
    return _solve_vec(np.swapaxes(w.gram_chol.conj(), -1, -2), z)


def _energy(v):
    return np.einsum("...i,...i->...", v.conj(), v).real


def _ngamd(w: _Whitened):
    return _energy(_solve_vec(w.gram_chol, w.u))


def ngamd_statistic(y, A, Rhat):
    """nG-AMD: y^H R^-1 A (A^H R^-1 A)^-1 A^H R^-1 y."""
    return _ngamd(_whiten(y, A, Rhat))


def asd_statistic(y, A, Rhat):
    """Adaptive subspace detector: nG-AMD energy over total whitened energy."""
    w = _whiten(y, A, Rhat)
    q0 = _energy(w.y)
    if np.any(q0 <= 0):
        raise ZeroSnapshot("ASD is undefined for a zero primary snapshot")
    return np.clip(_ngamd(w) / q0, 0.0, 1.0)


def _glrt1s(lam, q0, texture: TextureParams):
    c = 1.0 / texture.beta
    q1 = np.maximum(q0 - lam, 0.0)
    return (c + q0) / (c + q1)


def glrt1s_statistic(y, A, Rhat, texture: TextureParams):
    """One-step GLRT with the inverse-gamma texture integrated out.

    Marginalizing kappa gives likelihoods proportional to
    (1/beta + q)^-(N + alpha); the ratio (1/beta + q0) / (1/beta + q1) is the
    monotone-equivalent statistic, with q0 = y^H R^-1 y and q1 = q0 - nG-AMD.
    """
    w = _whiten(y, A, Rhat)
    return _glrt1s(_ngamd(w), _energy(w.y), texture)


def compute_statistics(
    y, A, Rhat, detectors=DETECTORS, texture: Optional[TextureParams] = None
) -> dict:
    """Several statistics from one shared whitening pass."""
    w = _whiten(y, A, Rhat)
    lam = _ngamd(w)
    q0 = _energy(w.y)
    out = {}
    for d in detectors:
        if d == NGAMD:
            out[d] = lam
        elif d == ASD:
            if np.any(q0 <= 0):
                raise ZeroSnapshot("ASD is undefined for a zero primary snapshot")
            out[d] = np.clip(lam / q0, 0.0, 1.0)
        elif d == GLRT1S:
            if texture is None:
                raise DomainError("1S-GLRT needs texture parameters")
            out[d] = _glrt1s(lam, q0, texture)
        else:
            raise DomainError(f"unknown detector {d!r}")
    return out


def detect(detector: str, y, A, Rhat, texture: Optional[TextureParams] = None) -> DetectorOutput:
    value = compute_statistics(y, A, Rhat, (detector,), texture)[detector]
    return DetectorOutput(float(value), detector)
