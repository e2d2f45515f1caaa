"""Closed-form and quadrature performance of the nG-AMD.

Conditionally on the loss factor ``rho``, the statistic satisfies
``rho * Lambda = t / tau`` with ``t ~ Gamma(r, 1)`` (noncentral under H1) and
``tau ~ Gamma(K-N+1, 1)``.  The texture enters detection through
``mu = mu1 / kappa``, which is Gamma(alpha, scale beta*mu1).  Unconditional
probabilities integrate these finite sums against the loss-factor density,
and against the density of ``mu1 = x^H R0 x`` for a fluctuating target.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import special

from .errors import BracketError, DegenerateSpectrum, DomainError, NumericalInstability, TruncationWarning
from .specfun import TextureParams, binom, falling_factorial

__all__ = [
    "DetectorDims",
    "LossFactorModel",
    "EigGrouping",
    "QuadratureSpec",
    "f_rho_pdf",
    "conditional_pfa",
    "pfa",
    "invert_threshold",
    "conditional_pd_given_mu",
    "conditional_pd_deterministic",
    "pd_deterministic",
    "eig_grouping",
    "f_mu1_pdf",
    "pd_fluctuating",
    "f_mu_pdf",
    "scenario_pd",
]

PROB_SLACK = 1e-12


@dataclass(frozen=True)
class DetectorDims:
    N: int
    r: int
    K: int

    def __post_init__(self):
        if not (1 <= self.r < self.N <= self.K):
            raise DomainError(f"need 1 <= r < N <= K, got N={self.N}, r={self.r}, K={self.K}")

    @property
    def dof(self) -> int:
        """K - N + 1, the shape of the denominator gamma variate."""
        return self.K - self.N + 1


@dataclass(frozen=True)
class LossFactorModel:
    """Beta(a, b) law of the loss factor rho on (0, 1).

    :meth:`for_dims` gives Beta(K-N+r+1, N-r), the law of
    1 / (1 + y2^H S22^-1 y2) for the complex multirank AMF.  The ``"rank-one"``
    variant, Beta(K-N+2, N-r), coincides with it only when r = 1.
    """

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise DomainError("beta parameters must be positive")

    @classmethod
    def for_dims(cls, d: DetectorDims, variant: str = "multirank") -> "LossFactorModel":
        if variant == "multirank":
            return cls(d.K - d.N + d.r + 1, d.N - d.r)
        if variant == "rank-one":
            return cls(d.K - d.N + 2, d.N - d.r)
        raise DomainError(f"unknown loss-factor variant {variant!r}")

    @property
    def mode(self) -> float:
        return (self.a - 1.0) / (self.a + self.b - 2.0)

    def pdf(self, rho):
        rho = np.asarray(rho, dtype=float)
        logf = (
            (self.a - 1.0) * np.log(rho)
            + (self.b - 1.0) * np.log1p(-rho)
            - special.betaln(self.a, self.b)
        )
        return np.exp(logf)

    def sample(self, gen: np.random.Generator, size=None):
        return gen.beta(self.a, self.b, size=size)


@lru_cache(maxsize=32)
def _gauss_legendre_unit(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class QuadratureSpec:
    """Integration rules for the rho and mu1 integrals.

    The rho rule is Gauss-Legendre on (0, 1).  The mu1 range (0, mu1_max),
    mu1_max = ``mu1_span`` * max e_k, is split into ``mu1_panels`` geometrically
    graded panels, each carrying ``mu1_nodes`` Gauss-Legendre points; grading
    resolves components whose means differ by orders of magnitude.
    """

    rho_nodes: int = 64
    mu1_nodes: int = 128
    mu1_span: float = 40.0
    mu1_panels: int = 4
    mu1_grading: float = 10.0

    @property
    def rho_rule(self):
        return _gauss_legendre_unit(self.rho_nodes)

    def mu1_rule(self, mu1_max: float):
        x, w = _gauss_legendre_unit(self.mu1_nodes)
        edges = [0.0] + [
            mu1_max * self.mu1_grading ** (-(self.mu1_panels - 1 - j)) for j in range(self.mu1_panels)
        ]
        nodes, weights = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            nodes.append(lo + (hi - lo) * x)
            weights.append((hi - lo) * w)
        return np.concatenate(nodes), np.concatenate(weights)


DEFAULT_QUADRATURE = QuadratureSpec()


def _defaults(d: DetectorDims, q: Optional[QuadratureSpec], m: Optional[LossFactorModel]):
    return (q or DEFAULT_QUADRATURE), (m or LossFactorModel.for_dims(d))


def f_rho_pdf(rho, m: LossFactorModel):
    """Loss-factor density on (0, 1)."""
    rho_arr = np.asarray(rho, dtype=float)
    if np.any((rho_arr <= 0) | (rho_arr >= 1)):
        raise DomainError("rho must lie in (0, 1)")
    out = m.pdf(rho_arr)
    return float(out) if out.ndim == 0 else out


def _log_ratio_terms(rho, lambda0):
    """log x, log1p(x) for x = rho * lambda0, with x = 0 mapped to -inf."""
    x = np.asarray(rho, dtype=float) * np.asarray(lambda0, dtype=float)
    with np.errstate(divide="ignore"):
        logx = np.log(x)
    return x, logx, np.log1p(x)


def conditional_pfa(rho, lambda0, d: DetectorDims):
    """P(t > tau * rho * lambda0) under H0, as a finite sum.

    (1+x)^-(K-N+1) * sum_{i=1..r} C(K-N+r-i, r-i) (x/(1+x))^(r-i), x = rho*lambda0.
    """
    x, logx, l1p = _log_ratio_terms(rho, lambda0)
    log_s = logx - l1p
    total = np.zeros_like(x)
    for i in range(1, d.r + 1):
        j = d.r - i
        term = math.log(binom(d.dof - 1 + j, j)) - d.dof * l1p
        if j:
            term = term + j * log_s
        total = total + np.exp(term)
    return float(total) if total.ndim == 0 else total


def pfa(lambda0, d: DetectorDims, q: Optional[QuadratureSpec] = None, m: Optional[LossFactorModel] = None):
    """Unconditional false-alarm probability: conditional_pfa averaged over rho."""
    q, m = _defaults(d, q, m)
    rho, w = q.rho_rule
    wf = w * m.pdf(rho)
    lam = np.asarray(lambda0, dtype=float)
    vals = conditional_pfa(rho, lam[..., None], d) @ wf
    return float(vals) if lam.ndim == 0 else vals


def invert_threshold(
    pfa_target: float,
    d: DetectorDims,
    q: Optional[QuadratureSpec] = None,
    m: Optional[LossFactorModel] = None,
    bracket=(1e-8, 1e8),
    rtol: float = 1e-10,
) -> float:
    """Threshold lambda0 with pfa(lambda0) = pfa_target, by bisection on log lambda0."""
    if not 0 < pfa_target < 1:
        raise DomainError("pfa_target must lie in (0, 1)")
    q, m = _defaults(d, q, m)
    lo, hi = math.log(bracket[0]), math.log(bracket[1])
    p_lo, p_hi = pfa(math.exp(lo), d, q, m), pfa(math.exp(hi), d, q, m)
    if not p_hi <= pfa_target <= p_lo:
        raise BracketError(
            f"P_FA {pfa_target} not attainable in [{bracket[0]}, {bracket[1]}] "
            f"(range {p_hi:.3e} .. {p_lo:.6f})"
        )
    best, best_err = math.exp(lo), abs(p_lo - pfa_target)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        p = pfa(math.exp(mid), d, q, m)
        err = abs(p - pfa_target)
        if err < best_err:
            best, best_err = math.exp(mid), err
        if err <= rtol * pfa_target:
            return math.exp(mid)
        if p > pfa_target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return best


def _check_probability(p):
    if np.any((p < -PROB_SLACK) | (p > 1 + PROB_SLACK)) or np.any(np.isnan(p)):
        raise NumericalInstability("probability sum left [0, 1]")
    return np.clip(p, 0.0, 1.0)


def _outer_log_coeffs(d: DetectorDims, logx, l1p):
    """log of C(K-N+r, r+i) x^(r+i) / (1+x)^(r+K-N) for i = 0..K-N, stacked last."""
    KN = d.K - d.N
    i = np.arange(KN + 1)
    logc = np.array([math.log(binom(KN + d.r, d.r + k)) for k in i])
    with np.errstate(invalid="ignore"):
        out = logc + (d.r + i) * logx[..., None] - (d.r + KN) * l1p[..., None]
    return np.where(np.isneginf(logx)[..., None], -np.inf, out)


def conditional_pd_given_mu(rho, lambda0, mu, d: DetectorDims):
    """Detection probability given rho and the texture-scaled SNR mu (no texture averaging).

    1 - x^r/(1+x)^(r+K-N) sum_i C(K-N+r, r+i) x^i exp(-mu s) sum_{m<=i} (mu s)^m/m!,
    with x = rho*lambda0 and s = rho/(1+x).
    """
    rho = np.asarray(rho, dtype=float)
    mu = np.asarray(mu, dtype=float)
    x, logx, l1p = _log_ratio_terms(rho, lambda0)
    outer = _outer_log_coeffs(d, logx, l1p)
    ms = mu * rho / (1.0 + x)
    # Poisson CDF sum_{m<=i} e^-ms ms^m / m!
    i = np.arange(d.K - d.N + 1)
    pois = special.pdtr(i, ms[..., None])
    p = 1.0 - np.sum(np.exp(outer) * pois, axis=-1)
    p = _check_probability(p)
    return float(p) if p.ndim == 0 else p


def conditional_pd_deterministic(rho, lambda0, mu1, texture: TextureParams, d: DetectorDims):
    """Detection probability given rho, with the inverse-gamma texture averaged out.

    Averaging exp(-mu s) (mu s)^m / m! over mu ~ Gamma(alpha, scale beta*mu1)
    yields negative-binomial weights Gamma(m+alpha)/(Gamma(alpha) m!) p^m (1-p)^alpha
    with p = beta*mu1*s / (1 + beta*mu1*s).  At mu1 = 0 this reduces to
    :func:`conditional_pfa`.
    """
    rho = np.asarray(rho, dtype=float)
    mu1 = np.asarray(mu1, dtype=float)
    if np.any(mu1 < 0):
        raise DomainError("mu1 must be nonnegative")
    x, logx, l1p = _log_ratio_terms(rho, lambda0)
    outer = _outer_log_coeffs(d, logx, l1p)
    z = texture.beta * mu1 * rho / (1.0 + x)
    alpha = texture.alpha
    m = np.arange(d.K - d.N + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_p = np.log(z) - np.log1p(z)
        log_nb = (
            special.gammaln(m + alpha)
            - special.gammaln(alpha)
            - special.gammaln(m + 1.0)
            + np.where(m > 0, m * log_p[..., None], 0.0)
            - alpha * np.log1p(z)[..., None]
        )
    nb_cdf = np.cumsum(np.exp(log_nb), axis=-1)
    p = 1.0 - np.sum(np.exp(outer) * nb_cdf, axis=-1)
    p = _check_probability(p)
    return float(p) if p.ndim == 0 else p


def pd_deterministic(
    lambda0,
    mu1,
    texture: TextureParams,
    d: DetectorDims,
    q: Optional[QuadratureSpec] = None,
    m: Optional[LossFactorModel] = None,
):
    """Deterministic-target detection probability, integrated over rho."""
    q, m = _defaults(d, q, m)
    rho, w = q.rho_rule
    wf = w * m.pdf(rho)
    mu1 = np.asarray(mu1, dtype=float)
    vals = conditional_pd_deterministic(rho, lambda0, mu1[..., None], texture, d) @ wf
    return float(np.clip(vals, 0, 1)) if mu1.ndim == 0 else np.clip(vals, 0, 1)


@dataclass(frozen=True, eq=False)
class EigGrouping:
    """Distinct weights e_k of mu1 = sum_i a_i |w_i|^2 and their multiplicities n_k + 1."""

    values: np.ndarray
    multiplicities: np.ndarray
    raw: np.ndarray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "multiplicities", np.asarray(self.multiplicities, dtype=int))
        if np.any(self.values <= 0):
            raise DegenerateSpectrum("grouped weights must be positive")
        if np.any(self.multiplicities < 1):
            raise DomainError("multiplicities must be >= 1")

    @property
    def m(self) -> int:
        return len(self.values)

    @property
    def n(self) -> np.ndarray:
        return self.multiplicities - 1

    @property
    def r(self) -> int:
        return int(self.multiplicities.sum())

    def scaled(self, c: float) -> "EigGrouping":
        return EigGrouping(self.values * c, self.multiplicities)

    @property
    def mean(self) -> float:
        return float(np.dot(self.values, self.multiplicities))


def _group(a: np.ndarray, tie_tol: float) -> EigGrouping:
    a = np.sort(a)[::-1]
    scale = a.max()
    values, mults = [], []
    for v in a:
        if values and abs(values[-1] - v) <= tie_tol * scale:
            # running mean keeps the representative centred in its cluster
            values[-1] = (values[-1] * mults[-1] + v) / (mults[-1] + 1)
            mults[-1] += 1
        else:
            values.append(v)
            mults.append(1)
    return EigGrouping(np.array(values), np.array(mults), raw=a)


def eig_grouping(R0, Rx, tie_tol: float = 1e-8, method: str = "printed") -> EigGrouping:
    """Weights of the Gaussian quadratic form mu1 = x^H R0 x, x ~ CN(0, Rx).

    ``method="printed"`` forms a_i = lambda_i u_i^H Rx u_i from the eigenpairs
    of R0; this is exact when R0 and Rx share eigenvectors and an
    approximation otherwise.  ``method="exact"`` uses the eigenvalues of
    Rx^(1/2) R0 Rx^(1/2).  Weights within ``tie_tol * max`` are merged.
    """
    R0 = np.asarray(R0, dtype=complex)
    Rx = np.asarray(Rx, dtype=complex)
    if method == "printed":
        lam, U = np.linalg.eigh(R0)
        a = lam * np.einsum("ni,nm,mi->i", U.conj(), Rx, U).real
    elif method == "exact":
        w, V = np.linalg.eigh(Rx)
        F = V * np.sqrt(np.clip(w, 0.0, None))
        a = np.linalg.eigvalsh(F.conj().T @ R0 @ F)
    else:
        raise DomainError(f"unknown grouping method {method!r}")
    rx_pd = np.linalg.eigvalsh(Rx).min() > 0
    if rx_pd and np.any(a <= 0):
        raise DegenerateSpectrum("non-positive quadratic-form weight with Rx positive definite")
    keep = a > tie_tol * max(a.max(), 0.0)
    if not np.any(keep):
        raise DegenerateSpectrum("all quadratic-form weights vanish")
    return _group(a[keep], tie_tol)


def _rational_derivatives(k: int, e: np.ndarray, mult: np.ndarray, order: int) -> np.ndarray:
    """Derivatives 0..order at w = e_k of D(w) = w^-2 prod_{j!=k} (w - e_j)^-(n_j+1).

    Uses D' = D * phi' with phi = log D and the closed-form derivatives of phi,
    giving exact values by the Leibniz recursion.
    """
    ek = e[k]
    others = [(e[j], mult[j]) for j in range(len(e)) if j != k]
    out = np.empty(order + 1)
    out[0] = ek ** -2.0 * np.prod([(ek - ej) ** (-float(mj)) for ej, mj in others])

    def dphi(mm):
        s = 2.0 * ek ** (-float(mm)) + sum(mj * (ek - ej) ** (-float(mm)) for ej, mj in others)
        return (-1.0) ** mm * math.factorial(mm - 1) * s

    for qq in range(1, order + 1):
        out[qq] = sum(binom(qq - 1, l) * out[l] * dphi(qq - l) for l in range(qq))
    return out


def f_mu1_pdf(mu1, g: EigGrouping):
    """Density of mu1 = sum_k e_k * Gamma(n_k + 1, 1) (independent gamma components).

    Expansion: sum_k exp(-mu1/e_k) / n_k! * sum_{i=0..n_k} C(n_k, i) d_{n_k-i}(e_k)
    * sum_{p=0..i} C(i, p) (r-p)^(i-p) e_k^(r-i-p) mu1^p, where d_q is the q-th
    derivative of the rational function above.  Weights are rescaled by
    max e_k internally for conditioning.
    """
    mu1 = np.asarray(mu1, dtype=float)
    if np.any(mu1 <= 0):
        raise DomainError("mu1 must be positive")
    scale = float(g.values.max())
    e = g.values / scale
    mult = g.multiplicities
    r = g.r
    v = mu1 / scale
    total = np.zeros_like(v)
    for k in range(g.m):
        nk = int(mult[k] - 1)
        dk = _rational_derivatives(k, e, mult, nk)
        poly = np.zeros_like(v)
        for i in range(nk + 1):
            inner = np.zeros_like(v)
            for p in range(i + 1):
                c = binom(i, p) * falling_factorial(r - p, i - p) * e[k] ** (r - i - p)
                inner = inner + c * v**p
            poly = poly + binom(nk, i) * dk[nk - i] * inner
        total = total + np.exp(-v / e[k]) * poly / math.factorial(nk)
    out = np.clip(total, 0.0, None) / scale
    return float(out) if out.ndim == 0 else out


def pd_fluctuating(
    lambda0,
    g: EigGrouping,
    texture: TextureParams,
    d: DetectorDims,
    q: Optional[QuadratureSpec] = None,
    m: Optional[LossFactorModel] = None,
    tail_tol: float = 1e-6,
) -> float:
    """Fluctuating-target detection probability by nested quadrature over rho and mu1."""
    q, m = _defaults(d, q, m)
    rho, wr = q.rho_rule
    wf = wr * m.pdf(rho)
    mu_max = q.mu1_span * float(g.values.max())
    mu, wm = q.mu1_rule(mu_max)
    fm = wm * f_mu1_pdf(mu, g)
    tail = 1.0 - fm.sum()
    if tail > tail_tol:
        warnings.warn(
            f"mu1 integration misses an estimated mass of {tail:.2e}", TruncationWarning, stacklevel=2
        )
    cpd = conditional_pd_deterministic(rho[:, None], lambda0, mu[None, :], texture, d)
    return float(np.clip(wf @ cpd @ fm, 0.0, 1.0))


def f_mu_pdf(mu, mu1: float, texture: TextureParams):
    """Density of mu = mu1 / kappa: Gamma(alpha, scale beta*mu1)."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0) or not mu1 > 0:
        raise DomainError("mu and mu1 must be positive")
    a, th = texture.alpha, texture.beta * mu1
    out = np.exp((a - 1.0) * np.log(mu) - mu / th - a * math.log(th) - special.gammaln(a))
    return float(out) if out.ndim == 0 else out


def scenario_pd(
    scenario,
    lambda0: float,
    q: Optional[QuadratureSpec] = None,
    m: Optional[LossFactorModel] = None,
    grouping_method: str = "printed",
) -> float:
    """Theoretical P_D for a :class:`~ngamd.scenario.Scenario`, using its true R."""
    from .scenario import DeterministicTarget

    d = DetectorDims(scenario.N, scenario.r, scenario.K)
    if scenario.texture is None:
        raise DomainError("theoretical P_D needs an inverse-gamma texture")
    if isinstance(scenario.target, DeterministicTarget):
        return pd_deterministic(lambda0, scenario.mu1(), scenario.texture, d, q, m)
    g = eig_grouping(scenario.whitened_gram(), scenario.target.Rx, method=grouping_method)
    return pd_fluctuating(lambda0, g, scenario.texture, d, q, m)
