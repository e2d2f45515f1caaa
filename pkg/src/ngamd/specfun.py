"""Special functions, combinatorics and random sampling primitives.

Everything downstream (scenario synthesis, the closed-form performance
expressions and the Monte Carlo engine) draws on the handful of helpers
collected here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

from .errors import DomainError, FactorizationError

__all__ = [
    "TextureParams",
    "RngStream",
    "as_generator",
    "ln_gamma",
    "binom",
    "falling_factorial",
    "sample_inverse_gamma",
    "cholesky_factor",
    "sample_complex_mvn",
    "standard_complex_normal",
]

# Relative pivot floor for declaring a Cholesky factorization failed.
PIVOT_RTOL = 1e-13


@dataclass(frozen=True)
class TextureParams:
    """Inverse-gamma texture law with shape ``alpha`` and scale ``beta``.

    The density is ``kappa**-(alpha+1) * exp(-1/(beta*kappa)) / (beta**alpha * Gamma(alpha))``,
    so that ``1/(beta*kappa)`` is a standard Gamma(alpha, 1) variate.
    """

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise DomainError(
                f"texture parameters must be positive, got alpha={self.alpha}, beta={self.beta}"
            )

    @property
    def mean(self) -> float:
        """E[kappa] = 1/(beta*(alpha-1)); infinite for alpha <= 1."""
        if self.alpha <= 1:
            return math.inf
        return 1.0 / (self.beta * (self.alpha - 1.0))

    def pdf(self, kappa):
        kappa = np.asarray(kappa, dtype=float)
        with np.errstate(divide="ignore"):
            logp = (
                -(self.alpha + 1.0) * np.log(kappa)
                - 1.0 / (self.beta * kappa)
                - self.alpha * math.log(self.beta)
                - special.gammaln(self.alpha)
            )
        return np.where(kappa > 0, np.exp(logp), 0.0)


@dataclass(frozen=True)
class RngStream:
    """Reproducible, splittable random stream.

    A stream is identified by ``(seed, stream_id)``.  :meth:`generator`
    returns a fresh :class:`numpy.random.Generator` positioned at the start of
    the stream, optionally keyed further by ``subkeys`` so that Monte Carlo
    chunks get their own independent substreams.
    """

    seed: int
    stream_id: int = 0

    def generator(self, *subkeys: int) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=int(self.seed), spawn_key=(int(self.stream_id),) + tuple(int(k) for k in subkeys)
        )
        return np.random.Generator(np.random.PCG64(ss))

    def substream(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


RngLike = Union[RngStream, np.random.Generator]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def ln_gamma(x):
    """Natural log of the Gamma function for positive arguments."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(~(x_arr > 0)):
        raise DomainError("ln_gamma requires x > 0")
    out = special.gammaln(x_arr)
    return float(out) if out.ndim == 0 else out


def binom(n: int, m: int) -> float:
    """Binomial coefficient C(n, m); exact up to n = 60, log-space beyond."""
    if n < 0 or m < 0 or m > n:
        raise DomainError(f"binom requires 0 <= m <= n, got n={n}, m={m}")
    if n <= 60:
        return float(math.comb(n, m))
    return math.exp(
        special.gammaln(n + 1.0) - special.gammaln(m + 1.0) - special.gammaln(n - m + 1.0)
    )


def falling_factorial(n, m: int):
    """n (n-1) ... (n-m+1), with the empty product 1 for m = 0."""
    if m < 0:
        raise DomainError("falling_factorial requires m >= 0")
    out = 1.0
    for j in range(m):
        out = out * (n - j)
    return out


def sample_inverse_gamma(p: TextureParams, rng: RngLike, size=None):
    """Draw texture values kappa = 1/(beta * G) with G ~ Gamma(alpha, 1)."""
    gen = as_generator(rng)
    g = gen.standard_gamma(p.alpha, size=size)
    return 1.0 / (p.beta * g)


def cholesky_factor(R, rtol: float = PIVOT_RTOL) -> np.ndarray:
    """Lower Cholesky factor of a Hermitian PD matrix (or stack of them).

    Raises :class:`FactorizationError` when the factorization breaks down or
    any squared pivot falls below ``rtol`` times the largest diagonal entry.
    """
    R = np.asarray(R)
    try:
        L = np.linalg.cholesky(R)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError("matrix is not positive definite") from exc
    pivots = np.abs(np.diagonal(L, axis1=-2, axis2=-1)) ** 2
    diag = np.abs(np.diagonal(R, axis1=-2, axis2=-1).real)
    if np.any(pivots <= rtol * diag.max(axis=-1, keepdims=True)):
        raise FactorizationError("matrix is numerically singular (pivot below tolerance)")
    return L


def standard_complex_normal(gen: np.random.Generator, shape) -> np.ndarray:
    """Circular CN(0, 1) variates: independent real/imag parts of variance 1/2."""
    z = gen.standard_normal(tuple(shape) + (2,))
    z *= math.sqrt(0.5)
    return z.view(np.complex128)[..., 0]


def sample_complex_mvn(mean, R, rng: RngLike, size=None) -> np.ndarray:
    """Circularly-symmetric complex Gaussian draws with covariance ``R``.

    Parameters
    ----------
    mean : array_like, shape (N,)
        Mean vector.
    R : array_like, shape (N, N)
        Hermitian positive definite covariance, E[(z-m)(z-m)^H] = R.
    rng : RngStream or numpy.random.Generator
    size : int or tuple, optional
        Leading batch shape; ``None`` returns a single vector.

    Returns
    -------
    ndarray, shape size + (N,)
    """
    gen = as_generator(rng)
    L = cholesky_factor(R)
    n = L.shape[-1]
    batch = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
    w = standard_complex_normal(gen, batch + (n,))
    return np.asarray(mean, dtype=complex) + w @ L.T
