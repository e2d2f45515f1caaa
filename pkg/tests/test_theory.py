import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from ngamd.errors import BracketError, DegenerateSpectrum, DomainError, TruncationWarning
from ngamd.scenario import REFERENCE_RX, reference_scenario
from ngamd.specfun import TextureParams, standard_complex_normal
from ngamd.theory import (
    DEFAULT_QUADRATURE,
    DetectorDims,
    EigGrouping,
    LossFactorModel,
    QuadratureSpec,
    conditional_pd_deterministic,
    conditional_pd_given_mu,
    conditional_pfa,
    eig_grouping,
    f_mu1_pdf,
    f_mu_pdf,
    f_rho_pdf,
    invert_threshold,
    pd_deterministic,
    pd_fluctuating,
    pfa,
    scenario_pd,
)

D = DetectorDims(6, 2, 16)
TEX = TextureParams(2.0, 0.5)
# Threshold for P_FA = 1e-2 at (N, r, K) = (6, 2, 16) under Beta(13, 4); frozen
# from an independent F-distribution quadrature (see test_threshold_frozen_value).
LAMBDA0_1E2 = 1.0776502393384644


# -- oracles --------------------------------------------------------------------

def pfa_2d_oracle(x, d):
    """P(t > tau*x), t ~ Gamma(r), tau ~ Gamma(K-N+1), by 2-D quadrature of the gamma densities."""
    ft, fs = stats.gamma(d.r).pdf, stats.gamma(d.dof).pdf
    val, _ = integrate.dblquad(
        lambda t, tau: ft(t) * fs(tau), 0, np.inf, lambda tau: tau * x, lambda tau: np.inf,
        epsabs=1e-13, epsrel=1e-12,
    )
    return val


def pfa_nested_oracle(x, d):
    """Same probability with the inner t-integral done analytically (upper incomplete gamma)."""
    f = lambda tau: stats.gamma(d.dof).pdf(tau) * special.gammaincc(d.r, tau * x)
    return integrate.quad(f, 0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)[0]


def pd_given_mu_oracle(rho, lam, mu, d):
    """Noncentral version: 2t ~ chi'^2(2r, 2 rho mu), integrated over tau."""
    x = rho * lam
    f = lambda tau: stats.gamma(d.dof).pdf(tau) * stats.ncx2.sf(2 * x * tau, 2 * d.r, 2 * rho * mu)
    return integrate.quad(f, 0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)[0]


def pfa_f_oracle(lam, d, m):
    """E_rho[P(F(2r, 2dof) > rho*lam*dof/r)] by adaptive quadrature."""
    f = lambda rho: stats.beta(m.a, m.b).pdf(rho) * stats.f.sf(rho * lam * d.dof / d.r, 2 * d.r, 2 * d.dof)
    return integrate.quad(f, 0, 1, epsabs=1e-15, epsrel=1e-12, limit=200)[0]


# -- dims / loss factor ---------------------------------------------------------

def test_dims_validation():
    assert D.dof == 11
    for bad in [(6, 6, 16), (6, 0, 16), (6, 2, 5)]:
        with pytest.raises(DomainError):
            DetectorDims(*bad)


def test_loss_factor_mode_and_variants():
    assert LossFactorModel(12, 4).mode == pytest.approx(11 / 14, rel=1e-15)
    assert LossFactorModel.for_dims(D, "rank-one") == LossFactorModel(12, 4)
    assert LossFactorModel.for_dims(D) == LossFactorModel(13, 4)
    assert LossFactorModel.for_dims(DetectorDims(6, 1, 16)) == LossFactorModel.for_dims(DetectorDims(6, 1, 16), "rank-one")
    with pytest.raises(DomainError):
        LossFactorModel.for_dims(D, "kelly")


def test_uniform_loss_factor():
    assert np.allclose(f_rho_pdf(np.linspace(0.01, 0.99, 9), LossFactorModel(1, 1)), 1.0, rtol=1e-14)


@pytest.mark.parametrize("m", [LossFactorModel(12, 4), LossFactorModel(13, 4), LossFactorModel(2, 1), LossFactorModel(30, 10)])
def test_loss_factor_normalizes_under_rule(m):
    rho, w = DEFAULT_QUADRATURE.rho_rule
    assert abs(w @ f_rho_pdf(rho, m) - 1) < 1e-10


def test_loss_factor_pdf_matches_scipy():
    rho = np.linspace(0.05, 0.95, 19)
    assert np.allclose(f_rho_pdf(rho, LossFactorModel(13, 4)), stats.beta(13, 4).pdf(rho), rtol=1e-12)


def test_loss_factor_domain():
    with pytest.raises(DomainError):
        f_rho_pdf(1.0, LossFactorModel(13, 4))
    with pytest.raises(DomainError):
        LossFactorModel(0, 3)


def test_quadrature_rules():
    rho, w = DEFAULT_QUADRATURE.rho_rule
    assert len(rho) == 64 and np.all(w > 0) and abs(w.sum() - 1) < 1e-12
    mu, wm = DEFAULT_QUADRATURE.mu1_rule(40.0)
    assert np.all(wm > 0) and abs(wm.sum() - 40.0) < 1e-11
    assert mu.min() > 0 and mu.max() < 40.0


# -- P_FA -----------------------------------------------------------------------

def test_conditional_pfa_limits():
    assert conditional_pfa(0.5, 0.0, D) == 1.0
    assert conditional_pfa(0.5, 1e9, D) < 1e-12


def test_conditional_pfa_checkpoint():
    assert abs(conditional_pfa(0.7, 1.0, D) - pfa_2d_oracle(0.7, D)) < 1e-8


@settings(max_examples=15, deadline=None)
@given(
    st.sampled_from([(6, 2, 16), (6, 1, 16), (8, 3, 12), (4, 3, 24), (10, 4, 10)]),
    st.floats(0.05, 1.0),
    st.floats(0.01, 5.0),
)
def test_conditional_pfa_matches_gamma_quadrature(dims, rho, lam):
    d = DetectorDims(*dims)
    assert abs(conditional_pfa(rho, lam, d) - pfa_nested_oracle(rho * lam, d)) < 1e-8


def test_threshold_frozen_value():
    m = LossFactorModel.for_dims(D)
    assert pfa_f_oracle(LAMBDA0_1E2, D, m) == pytest.approx(1e-2, rel=1e-9)
    assert invert_threshold(1e-2, D) == pytest.approx(LAMBDA0_1E2, rel=1e-9)


@pytest.mark.parametrize("lam", [0.1, 0.5, 1.0, 3.0, 10.0])
@pytest.mark.parametrize("variant", ["multirank", "rank-one"])
def test_pfa_matches_f_oracle(lam, variant):
    m = LossFactorModel.for_dims(D, variant)
    assert pfa(lam, D, m=m) == pytest.approx(pfa_f_oracle(lam, D, m), rel=1e-9, abs=1e-15)


def test_pfa_limits_and_monotone():
    assert pfa(0.0, D) == pytest.approx(1.0, abs=1e-12)
    lam = np.logspace(-2, 2, 20)
    p = pfa(lam, D)
    p2 = pfa(2 * lam, D)
    assert np.all(p > p2)
    assert np.all(np.diff(p) < 0)


@pytest.mark.parametrize("target", [0.5, 1e-1, 1e-2, 1e-4, 1e-6])
def test_invert_threshold_roundtrip(target):
    lam = invert_threshold(target, D)
    assert abs(pfa(lam, D) - target) <= 1e-10 * target


def test_invert_threshold_edges():
    near_one = [invert_threshold(1 - eps, D) for eps in (1e-3, 1e-6, 1e-9)]
    assert near_one[0] > near_one[1] > near_one[2] and near_one[2] < 1e-4
    with pytest.raises(BracketError):
        invert_threshold(1e-200, D)
    with pytest.raises(DomainError):
        invert_threshold(1.0, D)


# -- deterministic P_D ----------------------------------------------------------

@pytest.mark.parametrize("rho,lam,mu", [(0.7, 1.0, 5.0), (0.3, 2.0, 0.5), (0.95, 0.2, 20.0), (0.5, 4.0, 1e-3)])
def test_pd_given_mu_matches_noncentral_oracle(rho, lam, mu):
    assert abs(conditional_pd_given_mu(rho, lam, mu, D) - pd_given_mu_oracle(rho, lam, mu, D)) < 1e-10


def texture_marginal_oracle(rho, lam, mu1, tex, d):
    g = stats.gamma(tex.alpha, scale=tex.beta * mu1)
    f = lambda mu: conditional_pd_given_mu(rho, lam, mu, d) * g.pdf(mu)
    return integrate.quad(f, 0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=400)[0]


def test_conditional_pd_checkpoint():
    ref = texture_marginal_oracle(0.7, 1.0, 5.0, TEX, D)
    assert abs(conditional_pd_deterministic(0.7, 1.0, 5.0, TEX, D) - ref) < 1e-7


@settings(max_examples=12, deadline=None)
@given(
    st.floats(0.05, 0.99),
    st.floats(0.05, 5.0),
    st.floats(0.01, 100.0),
    st.sampled_from([(2.0, 0.5), (5.0, 2.0), (0.8, 3.0)]),
)
def test_conditional_pd_matches_texture_integral(rho, lam, mu1, ab):
    tex = TextureParams(*ab)
    ref = texture_marginal_oracle(rho, lam, mu1, tex, D)
    assert abs(conditional_pd_deterministic(rho, lam, mu1, tex, D) - ref) < 1e-7


def test_conditional_pd_limits():
    assert conditional_pd_deterministic(0.7, 1.0, 1e-10, TEX, D) == pytest.approx(conditional_pfa(0.7, 1.0, D), abs=1e-6)
    assert conditional_pd_deterministic(0.7, 1.0, 0.0, TEX, D) == pytest.approx(conditional_pfa(0.7, 1.0, D), abs=1e-15)
    assert conditional_pd_deterministic(0.7, 1.0, 1e12, TEX, D) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(DomainError):
        conditional_pd_deterministic(0.7, 1.0, -1.0, TEX, D)


def test_pd_deterministic_zero_signal_and_monotone():
    lam = LAMBDA0_1E2
    assert pd_deterministic(lam, 1e-10, TEX, D) == pytest.approx(pfa(lam, D), abs=1e-6)
    mu1 = np.logspace(-2, 3, 20)
    pd = pd_deterministic(lam, mu1, TEX, D)
    assert np.all(np.diff(pd) > 0)
    assert np.all((pd >= 0) & (pd <= 1))


def test_pd_deterministic_decreasing_in_threshold():
    lam = np.logspace(-1, 1.5, 20)
    pd = np.array([pd_deterministic(l, 10.0, TEX, D) for l in lam])
    assert np.all(np.diff(pd) < 0)


# -- f_mu -----------------------------------------------------------------------

def test_f_mu_value_and_normalization():
    assert f_mu_pdf(1.0, 1.0, TEX) == pytest.approx(4 * math.exp(-2), rel=1e-14)
    assert integrate.quad(lambda u: f_mu_pdf(u, 3.0, TEX), 0, np.inf, epsrel=1e-12)[0] == pytest.approx(1, abs=1e-10)
    with pytest.raises(DomainError):
        f_mu_pdf(0.0, 1.0, TEX)


def test_f_mu_mean_from_draws():
    # mu = mu1/kappa with kappa inverse-gamma: mean alpha*beta*mu1
    gen = np.random.default_rng(20)
    tex, mu1 = TextureParams(3.0, 0.7), 2.5
    kappa = 1.0 / (tex.beta * gen.standard_gamma(tex.alpha, 10**5))
    mu = mu1 / kappa
    mean = tex.alpha * tex.beta * mu1
    sd = math.sqrt(tex.alpha) * tex.beta * mu1
    assert abs(mu.mean() - mean) < 4 * sd / math.sqrt(10**5)
    mean_q = integrate.quad(lambda u: u * f_mu_pdf(u, mu1, tex), 0, np.inf, epsrel=1e-12)[0]
    assert mean_q == pytest.approx(mean, rel=1e-9)


# -- eigen grouping / f_mu1 -------------------------------------------------------

def test_grouping_distinct_and_tied():
    g = eig_grouping(np.diag([2.0, 1.0]), np.eye(2))
    assert np.allclose(g.values, [2, 1]) and list(g.n) == [0, 0] and g.m == 2
    g = eig_grouping(np.eye(2), np.eye(2))
    assert g.m == 1 and list(g.multiplicities) == [2] and g.r == 2
    g = eig_grouping(np.diag([3.0, 3.0 * (1 + 1e-10), 1.0]), np.eye(3))
    assert list(g.multiplicities) == [2, 1]


def test_grouping_reference_setup():
    s = reference_scenario(TEX, "fluctuating", snr_db=0.0)
    R0 = s.whitened_gram()
    lam, U = np.linalg.eigh(R0)
    a = np.sort(lam * np.einsum("ni,nm,mi->i", U.conj(), REFERENCE_RX, U).real)[::-1]
    g = eig_grouping(R0, REFERENCE_RX)
    assert g.m == 2 and np.allclose(g.values, a, rtol=1e-12)


def test_grouping_exact_method():
    s = reference_scenario(TEX, "fluctuating", snr_db=0.0)
    R0 = s.whitened_gram()
    g = eig_grouping(R0, REFERENCE_RX, method="exact")
    # the weights of x^H R0 x, x ~ CN(0, Rx), are the eigenvalues of Rx R0
    ref = np.sort(np.linalg.eigvals(REFERENCE_RX @ R0).real)[::-1]
    assert np.allclose(g.values, ref, rtol=1e-10)
    # the exact weights preserve E[mu1] = tr(Rx R0); both methods agree on it here
    assert g.mean == pytest.approx(np.trace(REFERENCE_RX @ R0).real, rel=1e-10)
    # commuting case: both methods coincide
    a = eig_grouping(np.diag([3.0, 1.0]), np.eye(2), method="exact")
    assert np.allclose(a.values, [3, 1])
    with pytest.raises(DomainError):
        eig_grouping(R0, REFERENCE_RX, method="guess")


def test_grouping_errors():
    with pytest.raises(DegenerateSpectrum):
        eig_grouping(np.eye(2), np.zeros((2, 2)))
    with pytest.raises(DegenerateSpectrum):
        EigGrouping(np.array([1.0, -1.0]), np.array([1, 1]))


def test_f_mu1_rank_one_exponential():
    g = EigGrouping(np.array([2.5]), np.array([1]))
    v = np.linspace(0.1, 20, 15)
    assert np.allclose(f_mu1_pdf(v, g), np.exp(-v / 2.5) / 2.5, rtol=1e-12)


@pytest.mark.parametrize("vals,mults", [([2.0], [3]), ([3.0, 1.0], [1, 2]), ([4.0, 2.0, 0.5], [2, 1, 3])])
def test_f_mu1_matches_gamma_convolution(vals, mults):
    # oracle: numerical convolution of the component gamma densities
    g = EigGrouping(np.array(vals), np.array(mults))
    comps = [stats.gamma(n, scale=e) for e, n in zip(vals, mults)]
    for v in (0.3, 1.5, 6.0):
        if len(comps) == 1:
            ref = comps[0].pdf(v)
        else:
            def conv(fa, fb, u):
                return integrate.quad(lambda s: fa(s) * fb(u - s), 0, u, epsabs=1e-14, epsrel=1e-11, limit=200)[0]
            f12 = lambda u: conv(comps[0].pdf, comps[1].pdf, u)
            ref = f12(v) if len(comps) == 2 else conv(f12, comps[2].pdf, v)
        assert f_mu1_pdf(v, g) == pytest.approx(ref, rel=1e-8, abs=1e-14)


@pytest.mark.parametrize("vals,mults", [([2.0, 1.0], [1, 1]), ([5.0, 1e-2], [1, 1]), ([1.0], [4]), ([3.0, 2.9, 0.4], [2, 1, 1])])
def test_f_mu1_normalizes_under_rule(vals, mults):
    g = EigGrouping(np.array(vals), np.array(mults))
    mu, w = DEFAULT_QUADRATURE.mu1_rule(DEFAULT_QUADRATURE.mu1_span * max(vals))
    assert abs(w @ f_mu1_pdf(mu, g) - 1) < 1e-6


def test_f_mu1_domain():
    with pytest.raises(DomainError):
        f_mu1_pdf(0.0, EigGrouping(np.array([1.0]), np.array([1])))


def chi2_gof(draws, g, bins=50):
    edges = np.quantile(draws, np.linspace(0, 1, bins + 1))
    edges[0], edges[-1] = 0.0, np.inf
    probs = np.array([
        integrate.quad(lambda u: f_mu1_pdf(u, g) if u > 0 else 0.0, lo, hi, epsabs=1e-13, epsrel=1e-11, limit=200)[0]
        for lo, hi in zip(edges[:-1], edges[1:])
    ])
    counts = np.histogram(draws, edges)[0]
    return stats.chisquare(counts, probs / probs.sum() * counts.sum()).pvalue


def quadratic_form_draws(M, Rx, n, seed):
    gen = np.random.default_rng(seed)
    w, V = np.linalg.eigh(Rx)
    F = V * np.sqrt(np.clip(w, 0, None))
    x = standard_complex_normal(gen, (n, Rx.shape[0])) @ F.T
    return np.einsum("ti,ij,tj->t", x.conj(), M, x).real


def test_f_mu1_chi2_distinct_case():
    draws = quadratic_form_draws(np.diag([2.0, 1.0]), np.eye(2), 10**6, 21)
    assert chi2_gof(draws, eig_grouping(np.diag([2.0, 1.0]), np.eye(2))) > 0.01


def test_f_mu1_chi2_repeated_case():
    M = np.diag([2.0, 2.0, 0.7])
    draws = quadratic_form_draws(M, np.eye(3), 10**6, 22)
    g = eig_grouping(M, np.eye(3))
    assert list(g.multiplicities) == [2, 1]
    assert chi2_gof(draws, g) > 0.01


def test_f_mu1_chi2_exact_grouping_reference():
    s = reference_scenario(TEX, "fluctuating", snr_db=0.0)
    R0 = s.whitened_gram()
    draws = quadratic_form_draws(R0, REFERENCE_RX, 10**6, 23)
    assert chi2_gof(draws, eig_grouping(R0, REFERENCE_RX, method="exact")) > 0.01


# -- fluctuating P_D ------------------------------------------------------------

def test_pd_fluctuating_zero_signal():
    g = EigGrouping(np.array([2.0, 1.0]), np.array([1, 1])).scaled(1e-9)
    assert pd_fluctuating(LAMBDA0_1E2, g, TEX, D) == pytest.approx(pfa(LAMBDA0_1E2, D), abs=1e-4)


def test_pd_fluctuating_monotone_in_scale():
    g = EigGrouping(np.array([2.0, 0.6]), np.array([1, 1]))
    pd = [pd_fluctuating(LAMBDA0_1E2, g.scaled(c), TEX, D) for c in (1, 2, 4, 8)]
    assert all(a < b for a, b in zip(pd, pd[1:]))


def test_pd_fluctuating_single_group_matches_deterministic_mixture():
    # with one weight e of multiplicity r, mu1 ~ Gamma(r, e): compare with adaptive quadrature
    g = EigGrouping(np.array([3.0]), np.array([2]))
    f = lambda u: pd_deterministic(LAMBDA0_1E2, u, TEX, D) * stats.gamma(2, scale=3.0).pdf(u)
    ref = integrate.quad(f, 0, np.inf, epsabs=1e-12, epsrel=1e-10, limit=200)[0]
    assert pd_fluctuating(LAMBDA0_1E2, g, TEX, D) == pytest.approx(ref, abs=1e-7)


def test_pd_fluctuating_truncation_warning():
    g = EigGrouping(np.array([2.0, 1.0]), np.array([1, 1]))
    with pytest.warns(TruncationWarning):
        pd_fluctuating(LAMBDA0_1E2, g, TEX, D, q=QuadratureSpec(mu1_span=3.0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        pd_fluctuating(LAMBDA0_1E2, g, TEX, D)


# -- scenario wrapper ------------------------------------------------------------

def test_scenario_pd_dispatch():
    det = reference_scenario(TEX, "deterministic", snr_db=-5.0)
    assert scenario_pd(det, LAMBDA0_1E2) == pytest.approx(pd_deterministic(LAMBDA0_1E2, det.mu1(), TEX, D), rel=1e-14)
    fl = reference_scenario(TEX, "fluctuating", snr_db=-5.0)
    g = eig_grouping(fl.whitened_gram(), REFERENCE_RX)
    assert scenario_pd(fl, LAMBDA0_1E2) == pytest.approx(pd_fluctuating(LAMBDA0_1E2, g, TEX, D), rel=1e-14)
    with pytest.raises(DomainError):
        scenario_pd(det.with_texture(None), LAMBDA0_1E2)


# -- loss-factor law against Gaussian data -----------------------------------------

@pytest.mark.slow
def test_multirank_loss_factor_matches_gaussian_amf():
    """Gaussian noise with the unnormalized sample covariance obeys rho*Lambda = t/tau exactly.

    The empirical P_FA at the multirank threshold sits at 1e-2; the rank-one
    law gives a different threshold that the data reject.
    """
    from ngamd.detectors import CovEstimate, ngamd_statistic
    from ngamd.scenario import generate_batch
    from ngamd.specfun import RngStream

    s = reference_scenario(None, snr_db=0.0)
    n, hits_mr, hits_r1 = 0, 0, 0
    lam_mr = invert_threshold(1e-2, D)
    lam_r1 = invert_threshold(1e-2, D, m=LossFactorModel.for_dims(D, "rank-one"))
    for chunk in range(10):
        b = generate_batch(s, "H0", 20000, RngStream(24).generator(chunk))
        S = np.einsum("tkn,tkm->tnm", b.secondary, b.secondary.conj())
        lam = ngamd_statistic(b.primary, s.A, CovEstimate.from_matrix(S))
        n += lam.size
        hits_mr += int((lam > lam_mr).sum())
        hits_r1 += int((lam > lam_r1).sum())
    sigma = math.sqrt(1e-2 * 0.99 / n)
    assert abs(hits_mr / n - 1e-2) < 4 * sigma
    assert abs(hits_r1 / n - 1e-2) > 4 * sigma
