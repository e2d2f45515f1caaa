"""Signal and noise model, the reference experiment constants, and data synthesis.

Snapshots follow ``y = A x + sqrt(kappa) g`` with ``g ~ CN(0, R)`` and an
inverse-gamma texture ``kappa``.  The speckle covariance is stored as an
unscaled shape ``R_base`` together with the power factor ``kappa0`` so that a
target SNR can be met by rescaling the noise while the signal stays fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .errors import DomainError
from .specfun import (
    RngLike,
    TextureParams,
    as_generator,
    cholesky_factor,
    standard_complex_normal,
)

__all__ = [
    "DeterministicTarget",
    "FluctuatingTarget",
    "Scenario",
    "Dataset",
    "DatasetBatch",
    "REFERENCE_RX",
    "build_steering_matrix",
    "build_toeplitz_cov",
    "solve_power_scale",
    "reference_scenario",
    "generate_batch",
    "generate_dataset",
]

PER_CELL_IID = "per-cell-iid"
COMMON_ACROSS_CELLS = "common-across-cells"
TEXTURE_SHARING = (PER_CELL_IID, COMMON_ACROSS_CELLS)

# Fluctuating-target covariance used in the reference experiment.
REFERENCE_RX = np.array([[1.0, 0.5j], [-0.5j, 1.0]])


@dataclass(frozen=True, eq=False)
class DeterministicTarget:
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=complex).reshape(-1))

    @property
    def kind(self) -> str:
        return "deterministic"

    @property
    def r(self) -> int:
        return self.x.shape[0]

    @property
    def energy(self) -> float:
        return float(np.vdot(self.x, self.x).real)


@dataclass(frozen=True, eq=False)
class FluctuatingTarget:
    Rx: np.ndarray

    def __post_init__(self):
        Rx = np.asarray(self.Rx, dtype=complex)
        if Rx.ndim != 2 or Rx.shape[0] != Rx.shape[1]:
            raise DomainError("Rx must be square")
        if not np.allclose(Rx, Rx.conj().T, rtol=0, atol=1e-12 * max(1.0, np.abs(Rx).max())):
            raise DomainError("Rx must be Hermitian")
        if np.linalg.eigvalsh(Rx).min() < -1e-12 * max(1.0, np.abs(Rx).max()):
            raise DomainError("Rx must be positive semidefinite")
        object.__setattr__(self, "Rx", Rx)

    @property
    def kind(self) -> str:
        return "fluctuating"

    @property
    def r(self) -> int:
        return self.Rx.shape[0]

    @property
    def energy(self) -> float:
        return float(np.trace(self.Rx).real)


TargetModel = Union[DeterministicTarget, FluctuatingTarget]


def build_steering_matrix(N: int, r: int) -> np.ndarray:
    """System response with column l = exp(-2j*pi * l * 1.8 * n / N), l = 1..r, n = 0..N-1."""
    if not (1 <= r < N):
        raise DomainError(f"need 1 <= r < N, got r={r}, N={N}")
    n = np.arange(N)[:, None]
    ell = np.arange(1, r + 1)[None, :]
    return np.exp(-2j * np.pi * ell * 1.8 * n / N)


def build_toeplitz_cov(N: int, one_lag: float, kappa0: float = 1.0) -> np.ndarray:
    """Exponentially correlated speckle covariance kappa0 * one_lag**|i-j|."""
    if not abs(one_lag) < 1:
        raise DomainError(f"|one_lag| must be < 1, got {one_lag}")
    if not kappa0 > 0:
        raise DomainError(f"kappa0 must be positive, got {kappa0}")
    lag = np.abs(np.subtract.outer(np.arange(N), np.arange(N)))
    # 0**0 == 1 keeps the one_lag = 0 case exactly diagonal
    return kappa0 * np.power(float(one_lag), lag)


def solve_power_scale(R_base, target: TargetModel, target_snr_db: float) -> float:
    """Noise scale kappa0 meeting the SNR for the given target.

    A deterministic target uses 10 log10(||x||^2 / tr R), a fluctuating one
    10 log10(tr Rx / tr R), where R = kappa0 * R_base.
    """
    energy = target.energy
    if not energy > 0:
        raise DomainError("signal energy must be positive to define an SNR")
    tr = float(np.trace(np.asarray(R_base)).real)
    return energy / (tr * 10.0 ** (target_snr_db / 10.0))


@dataclass(frozen=True, eq=False)
class Scenario:
    """Immutable description of one detection experiment.

    ``texture=None`` selects the Gaussian limit (kappa identically 1), which is
    handy for testing but not part of the compound-Gaussian model proper.
    """

    A: np.ndarray
    R_base: np.ndarray
    K: int
    texture: Optional[TextureParams]
    target: TargetModel
    kappa0: float = 1.0
    texture_sharing: str = PER_CELL_IID
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=complex)
        R = np.asarray(self.R_base)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "R_base", R)
        N, r = A.shape
        if not (r < N <= self.K):
            raise DomainError(f"need r < N <= K, got r={r}, N={N}, K={self.K}")
        if R.shape != (N, N):
            raise DomainError(f"R must be {N}x{N}, got {R.shape}")
        if not np.allclose(R, R.conj().T, rtol=0, atol=1e-12 * np.abs(R).max()):
            raise DomainError("R must be Hermitian")
        cholesky_factor(R)
        sv = np.linalg.svd(A, compute_uv=False)
        if sv.min() <= 1e-10 * max(1.0, sv.max()):
            raise DomainError("A must have full column rank")
        if self.target.r != r:
            raise DomainError(f"target dimension {self.target.r} does not match r={r}")
        if self.texture_sharing not in TEXTURE_SHARING:
            raise DomainError(f"texture_sharing must be one of {TEXTURE_SHARING}")
        if not self.kappa0 > 0:
            raise DomainError("kappa0 must be positive")

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def r(self) -> int:
        return self.A.shape[1]

    @property
    def R(self) -> np.ndarray:
        return self.kappa0 * self.R_base

    def with_snr(self, snr_db: float) -> "Scenario":
        """Copy with kappa0 chosen so the target meets ``snr_db``."""
        k0 = solve_power_scale(self.R_base, self.target, snr_db)
        return replace(self, kappa0=k0, meta={**self.meta, "snr_db": float(snr_db)})

    def with_kappa0(self, kappa0: float) -> "Scenario":
        return replace(self, kappa0=float(kappa0))

    def with_texture(self, texture: Optional[TextureParams]) -> "Scenario":
        return replace(self, texture=texture)

    def snr_db(self) -> float:
        return 10.0 * math.log10(self.target.energy / float(np.trace(self.R).real))

    def mu1(self) -> float:
        """x^H A^H R^-1 A x for a deterministic target, with the true R."""
        if not isinstance(self.target, DeterministicTarget):
            raise DomainError("mu1 is defined for deterministic targets only")
        L = cholesky_factor(self.R)
        w = np.linalg.solve(L, self.A @ self.target.x)
        return float(np.vdot(w, w).real)

    def whitened_gram(self) -> np.ndarray:
        """R0 = A^H R^-1 A with the true R."""
        L = cholesky_factor(self.R)
        W = np.linalg.solve(L, self.A)
        return W.conj().T @ W


def reference_scenario(
    texture: Optional[TextureParams],
    target: str = "deterministic",
    snr_db: Optional[float] = None,
    N: int = 6,
    r: int = 2,
    K: int = 16,
    one_lag: float = 0.9,
    texture_sharing: str = PER_CELL_IID,
    Rx=None,
) -> Scenario:
    """The reference experiment: N=6, r=2, K=16, 0.9-lag Toeplitz speckle.

    A deterministic target defaults to x = [1, ..., 1] / sqrt(r) (unit energy);
    a fluctuating one to the 2x2 ``REFERENCE_RX`` covariance.
    """
    A = build_steering_matrix(N, r)
    R_base = build_toeplitz_cov(N, one_lag, 1.0)
    if target == "deterministic":
        tgt: TargetModel = DeterministicTarget(np.ones(r) / math.sqrt(r))
    elif target == "fluctuating":
        tgt = FluctuatingTarget(REFERENCE_RX if Rx is None else Rx)
    else:
        raise DomainError(f"unknown target kind {target!r}")
    s = Scenario(
        A=A,
        R_base=R_base,
        K=K,
        texture=texture,
        target=tgt,
        texture_sharing=texture_sharing,
        meta={"one_lag": one_lag},
    )
    return s if snr_db is None else s.with_snr(snr_db)


@dataclass(frozen=True, eq=False)
class Dataset:
    primary: np.ndarray
    secondary: np.ndarray
    hypothesis: str


@dataclass(frozen=True, eq=False)
class DatasetBatch:
    """A stack of independent datasets.

    Shapes: ``primary`` (T, N), ``secondary`` (T, K, N), ``kappa`` (T,),
    ``kappa_secondary`` (T, K).
    """

    primary: np.ndarray
    secondary: np.ndarray
    kappa: np.ndarray
    kappa_secondary: np.ndarray
    hypothesis: str

    def __len__(self):
        return self.primary.shape[0]

    def __getitem__(self, i) -> Dataset:
        return Dataset(self.primary[i], self.secondary[i], self.hypothesis)


def _check_hypothesis(h: str) -> str:
    if h not in ("H0", "H1"):
        raise DomainError(f"hypothesis must be 'H0' or 'H1', got {h!r}")
    return h


def generate_batch(s: Scenario, hypothesis: str, trials: int, rng: RngLike) -> DatasetBatch:
    """Draw ``trials`` independent (primary, secondary) datasets.

    Random numbers are consumed in a fixed order (secondary speckle, primary
    speckle, textures, then the fluctuating signal) so that H0 and H1 runs on
    the same stream share their noise sample paths.
    """
    _check_hypothesis(hypothesis)
    gen = as_generator(rng)
    N, K = s.N, s.K
    L = cholesky_factor(s.R)
    g_sec = standard_complex_normal(gen, (trials, K, N)) @ L.T
    g_pri = standard_complex_normal(gen, (trials, N)) @ L.T
    if s.texture is None:
        kappa = np.ones(trials)
        kappa_sec = np.ones((trials, K))
    else:
        # 1/(beta*G), G ~ Gamma(alpha, 1); drawn in one block to fix the stream layout
        g = gen.standard_gamma(s.texture.alpha, size=(trials, K + 1))
        kap = 1.0 / (s.texture.beta * g)
        kappa = kap[:, 0]
        if s.texture_sharing == COMMON_ACROSS_CELLS:
            kappa_sec = np.repeat(kappa[:, None], K, axis=1)
        else:
            kappa_sec = kap[:, 1:]
    secondary = np.sqrt(kappa_sec)[..., None] * g_sec
    primary = np.sqrt(kappa)[:, None] * g_pri
    if hypothesis == "H1":
        if isinstance(s.target, FluctuatingTarget):
            Lx = _psd_factor(s.target.Rx)
            x = standard_complex_normal(gen, (trials, s.r)) @ Lx.T
            primary = primary + x @ s.A.T
        else:
            primary = primary + s.A @ s.target.x
    return DatasetBatch(primary, secondary, kappa, kappa_sec, hypothesis)


def generate_dataset(s: Scenario, hypothesis: str, rng: RngLike) -> Dataset:
    """One primary snapshot plus K secondary snapshots."""
    return generate_batch(s, hypothesis, 1, rng)[0]


def _psd_factor(M: np.ndarray) -> np.ndarray:
    """Square-root factor F with F F^H = M for a PSD (possibly singular) M."""
    w, V = np.linalg.eigh(M)
    return V * np.sqrt(np.clip(w, 0.0, None))
