"""Monte Carlo trial engine: exceedance rates, threshold calibration, SNR sweeps
and the false-alarm (CFAR) study.

Trials are generated in fixed-size chunks, each drawn from its own substream
of an :class:`~ngamd.specfun.RngStream`, so a run is reproducible bit for bit
and the chunks can be farmed out to worker threads without changing results.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import binomtest

from .detectors import ASD, NGAMD, compute_statistics, nscm
from .errors import DomainError, InsufficientTrials
from .scenario import Scenario, generate_batch
from .specfun import RngStream, TextureParams
from .theory import DetectorDims, invert_threshold, scenario_pd

__all__ = [
    "Calibrate",
    "TrialPlan",
    "Exceedance",
    "CurvePoint",
    "PerformanceCurve",
    "simulate_statistics",
    "wilson_interval",
    "estimate_exceedance",
    "quantile_threshold",
    "calibrate_threshold",
    "sweep_snr",
    "theory_curve",
    "cfar_study",
]

CHUNK = 20_000

# substream purposes; calibration and evaluation never share a stream
_CAL, _EVAL = 1, 2

# Calibration never uses fewer than this many trials, whatever the target.
MIN_CALIBRATION = 1000
ANALYTIC = "analytic"
MC = "mc"


@dataclass(frozen=True)
class Calibrate:
    pfa_target: float


@dataclass(frozen=True, eq=False)
class TrialPlan:
    scenario: Scenario
    detector: str
    trials: int
    seed: RngStream
    threshold: Union[float, Calibrate] = Calibrate(1e-2)
    hypothesis: str = "H0"
    chunk: int = CHUNK
    workers: int = 1


@dataclass(frozen=True)
class Exceedance:
    p_hat: float
    ci_low: float
    ci_high: float
    count: int
    trials: int

    def __iter__(self):
        return iter((self.p_hat, self.ci_low, self.ci_high))


@dataclass(frozen=True)
class CurvePoint:
    snr_db: float
    probability: float
    ci_low: float
    ci_high: float


@dataclass(eq=False)
class PerformanceCurve:
    points: List[CurvePoint]
    source: str
    detector: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for p in self.points:
            if not (0 <= p.ci_low <= p.probability <= p.ci_high <= 1):
                raise DomainError(f"inconsistent curve point {p}")

    @property
    def snr_db(self) -> np.ndarray:
        return np.array([p.snr_db for p in self.points])

    @property
    def probability(self) -> np.ndarray:
        return np.array([p.probability for p in self.points])


def wilson_interval(count: int, trials: int, level: float = 0.95) -> Tuple[float, float]:
    if trials <= 0:
        raise DomainError("trials must be positive")
    ci = binomtest(int(count), int(trials)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def _chunk_sizes(trials: int, chunk: int) -> List[int]:
    full, rest = divmod(trials, chunk)
    return [chunk] * full + ([rest] if rest else [])


def simulate_statistics(
    scenario: Scenario,
    hypothesis: str,
    detectors: Sequence[str],
    trials: int,
    stream: RngStream,
    key: Tuple[int, ...] = (),
    chunk: int = CHUNK,
    workers: int = 1,
) -> Dict[str, np.ndarray]:
    """Test statistics of ``trials`` independent datasets.

    Chunk ``c`` is drawn from ``stream.generator(*key, c)``; the output is the
    ordered concatenation of chunks, independent of ``workers``.
    """
    if trials < 0:
        raise DomainError("trials must be nonnegative")
    sizes = _chunk_sizes(trials, chunk)

    def run(c: int):
        batch = generate_batch(scenario, hypothesis, sizes[c], stream.generator(*key, c))
        est = nscm(batch.secondary)
        return compute_statistics(batch.primary, scenario.A, est, detectors, scenario.texture)

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(c) for c in range(len(sizes))]
    if not parts:
        return {d: np.empty(0) for d in detectors}
    return {d: np.concatenate([p[d] for p in parts]) for d in detectors}


def _exceedance(values: np.ndarray, threshold: float) -> Exceedance:
    n = int(values.size)
    k = int(np.count_nonzero(values > threshold))
    lo, hi = wilson_interval(k, n)
    p = k / n
    return Exceedance(p, min(lo, p), max(hi, p), k, n)


def estimate_exceedance(plan: TrialPlan) -> Exceedance:
    """Fraction of trials whose statistic exceeds the plan's fixed threshold."""
    if isinstance(plan.threshold, Calibrate):
        raise DomainError("estimate_exceedance needs a fixed threshold")
    stats = simulate_statistics(
        plan.scenario, plan.hypothesis, (plan.detector,), plan.trials, plan.seed,
        (_EVAL,), plan.chunk, plan.workers,
    )[plan.detector]
    return _exceedance(stats, plan.threshold)


def quantile_threshold(values, pfa_target: float) -> float:
    """Order statistic at 1-based index ceil((1 - pfa_target) * n)."""
    v = np.sort(np.asarray(values, dtype=float))
    n = v.size
    if n == 0:
        raise InsufficientTrials("no samples to calibrate on")
    idx = max(1, math.ceil((1.0 - pfa_target) * n))
    return float(v[idx - 1])


def _check_calibration_budget(trials: int, pfa_target: float):
    if not 0 < pfa_target < 1:
        raise DomainError("pfa_target must lie in (0, 1)")
    floor = max(MIN_CALIBRATION, math.ceil(100.0 / pfa_target))
    if trials < floor:
        raise InsufficientTrials(f"{trials} trials is below the max(1000, 100/P_FA) = {floor} floor")


def calibrate_threshold(
    plan: TrialPlan, sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None
) -> float:
    """Empirical (1 - P_FA) quantile of the H0 statistic.

    ``sampler(generator, n)`` replaces the detector statistic, which is how
    the quantile machinery is tested against known distributions.
    """
    if not isinstance(plan.threshold, Calibrate):
        raise DomainError("plan does not request calibration")
    target = plan.threshold.pfa_target
    _check_calibration_budget(plan.trials, target)
    if sampler is not None:
        values = np.concatenate(
            [sampler(plan.seed.generator(_CAL, c), n) for c, n in enumerate(_chunk_sizes(plan.trials, plan.chunk))]
        )
    else:
        values = simulate_statistics(
            plan.scenario, "H0", (plan.detector,), plan.trials, plan.seed,
            (_CAL,), plan.chunk, plan.workers,
        )[plan.detector]
    return quantile_threshold(values, target)


def analytic_threshold(scenario: Scenario, pfa_target: float) -> float:
    return invert_threshold(pfa_target, DetectorDims(scenario.N, scenario.r, scenario.K))


def sweep_snr(
    template: Scenario,
    detectors: Union[str, Sequence[str]],
    snr_grid: Sequence[float],
    pfa_target: float,
    trials: int,
    seed: RngStream,
    threshold_mode: str = ANALYTIC,
    calibration_trials: Optional[int] = None,
    chunk: int = CHUNK,
    workers: int = 1,
) -> Dict[str, PerformanceCurve]:
    """Monte Carlo P_D versus SNR for one or more detectors.

    SNR is set by rescaling the noise, so each grid point gets its own H0
    calibration at its own kappa0.  All points share one calibration stream and
    one (disjoint) evaluation stream.  ``threshold_mode="analytic"`` uses the
    closed-form threshold for the nG-AMD; the comparators are always calibrated
    by simulation.
    """
    if isinstance(detectors, str):
        detectors = (detectors,)
    detectors = tuple(detectors)
    if threshold_mode not in (ANALYTIC, MC):
        raise DomainError(f"threshold_mode must be {ANALYTIC!r} or {MC!r}")
    n_cal = calibration_trials or max(trials, MIN_CALIBRATION, math.ceil(100.0 / pfa_target))
    needs_cal = [d for d in detectors if not (d == NGAMD and threshold_mode == ANALYTIC)]
    if needs_cal:
        _check_calibration_budget(n_cal, pfa_target)
    lam0 = analytic_threshold(template, pfa_target) if NGAMD in detectors else None
    points = {d: [] for d in detectors}
    thresholds = {d: [] for d in detectors}
    for snr in snr_grid:
        s = template.with_snr(snr)
        thr = {}
        if needs_cal:
            h0 = simulate_statistics(s, "H0", needs_cal, n_cal, seed, (_CAL,), chunk, workers)
            thr = {d: quantile_threshold(h0[d], pfa_target) for d in needs_cal}
        if NGAMD in detectors and threshold_mode == ANALYTIC:
            thr[NGAMD] = lam0
        h1 = simulate_statistics(s, "H1", detectors, trials, seed, (_EVAL,), chunk, workers)
        for d in detectors:
            e = _exceedance(h1[d], thr[d])
            points[d].append(CurvePoint(float(snr), e.p_hat, e.ci_low, e.ci_high))
            thresholds[d].append(thr[d])
    out = {}
    for d in detectors:
        mode = threshold_mode if d == NGAMD else MC
        out[d] = PerformanceCurve(
            points[d],
            "monte-carlo",
            d,
            _curve_metadata(template, pfa_target, trials=trials, threshold_mode=mode,
                            calibration_trials=n_cal if d in needs_cal else 0,
                            thresholds=thresholds[d], seed=seed.seed),
        )
    return out


def theory_curve(
    template: Scenario,
    snr_grid: Sequence[float],
    pfa_target: float,
    grouping_method: str = "printed",
) -> PerformanceCurve:
    """Closed-form nG-AMD P_D at each SNR, using the analytic threshold."""
    lam0 = analytic_threshold(template, pfa_target)
    pts = []
    for snr in snr_grid:
        p = scenario_pd(template.with_snr(snr), lam0, grouping_method=grouping_method)
        pts.append(CurvePoint(float(snr), p, p, p))
    return PerformanceCurve(
        pts, "theory", NGAMD,
        _curve_metadata(template, pfa_target, lambda0=lam0, grouping_method=grouping_method),
    )


def _curve_metadata(s: Scenario, pfa_target: float, **extra) -> dict:
    meta = {
        "N": s.N,
        "r": s.r,
        "K": s.K,
        "pfa_target": pfa_target,
        "target": s.target.kind,
        "texture_sharing": s.texture_sharing,
    }
    if s.texture is not None:
        meta["alpha"] = s.texture.alpha
        meta["beta"] = s.texture.beta
    meta.update(extra)
    return meta


@dataclass(frozen=True)
class CfarRow:
    detector: str
    alpha: float
    beta: float
    kappa0: float
    threshold: float
    p_hat: float
    ci_low: float
    ci_high: float
    trials: int


@dataclass(eq=False)
class CfarTable:
    rows: List[CfarRow]
    lambda0: float
    pfa_target: float

    def control_invariant(self) -> bool:
        """ASD false-alarm rates agree across power scalings within Wilson CIs."""
        groups: Dict[tuple, List[CfarRow]] = {}
        for r in self.rows:
            if r.detector == ASD:
                key = tuple(None if math.isnan(v) else v for v in (r.alpha, r.beta))
                groups.setdefault(key, []).append(r)
        return all(b.ci_low <= a.p_hat <= b.ci_high for g in groups.values() for a in g for b in g)


def cfar_study(
    template: Scenario,
    lambda0: float,
    texture_grid: Sequence[Optional[TextureParams]],
    power_grid: Sequence[float],
    trials: int,
    seed: RngStream,
    pfa_target: float = 1e-2,
    calibration_trials: Optional[int] = None,
    chunk: int = CHUNK,
    workers: int = 1,
) -> CfarTable:
    """Empirical P_FA of the nG-AMD at a fixed threshold across textures and noise powers.

    The ASD rows act as a positive control: its threshold is calibrated once
    per texture at kappa0 = 1 on the calibration stream and then held fixed.
    Every cell of one texture reuses the same evaluation stream, so power
    scaling is the only thing that changes between its rows.  A ``None``
    texture selects the Gaussian limit and is reported with NaN shape/scale.
    """
    n_cal = calibration_trials or max(trials, MIN_CALIBRATION, math.ceil(100.0 / pfa_target))
    _check_calibration_budget(n_cal, pfa_target)
    rows = []
    for ti, tex in enumerate(texture_grid):
        base = template.with_texture(tex)
        h0 = simulate_statistics(base.with_kappa0(1.0), "H0", (ASD,), n_cal, seed, (_CAL, ti), chunk, workers)
        asd_thr = quantile_threshold(h0[ASD], pfa_target)
        for k0 in power_grid:
            st = simulate_statistics(base.with_kappa0(k0), "H0", (NGAMD, ASD), trials, seed, (_EVAL, ti), chunk, workers)
            for d, thr in ((NGAMD, lambda0), (ASD, asd_thr)):
                e = _exceedance(st[d], thr)
                a, b = (tex.alpha, tex.beta) if tex is not None else (math.nan, math.nan)
                rows.append(CfarRow(d, a, b, float(k0), thr, e.p_hat, e.ci_low, e.ci_high, e.trials))
    return CfarTable(rows, lambda0, pfa_target)
