"""Severity selection: AIC, modified Anderson-Darling, truncation screen, quantile score."""

from __future__ import annotations

import enum
import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from oplda.annual_loss import AnnualLossModel, QuantileFunction
from oplda.distributions import SPLICED, Family, SeverityModel
from oplda.likelihood import FitConfig, FitResult, TruncatedSample, fit_truncated

WORST_RANK = 9
QS_LOWER = 0.75
QS_UPPER = 0.9995
QS_POINTS = 200
AD_CLAMP = 1e-12


class EliminationReason(enum.Enum):
    NONE = "none"
    NON_CONVERGENCE = "non_convergence"
    BOUNDARY = "boundary"
    TRUNC_PROB_TOO_HIGH = "trunc_prob_too_high"
    AD_REJECTED = "ad_rejected"


class SelectionMode(enum.Enum):
    QS = "qs"
    AIC_AD = "aic_ad"


# ---------------------------------------------------------------------------
# AIC


def aic(fit: FitResult) -> float:
    """-2 loglik + 2k; NaN for fits that did not converge."""
    if not fit.converged or not math.isfinite(fit.loglik):
        return math.nan
    return -2.0 * fit.loglik + 2.0 * fit.n_params


# ---------------------------------------------------------------------------
# Anderson-Darling


def _log_cond_sf(model: SeverityModel, x, tau):
    with np.errstate(all="ignore"):
        return model.logsf(x) - float(model.logsf(tau))


def ad_statistic_from_cdf(cond_cdf) -> float:
    """Modified (upper-tail) AD statistic from sorted conditional cdf values."""
    u = np.sort(np.asarray(cond_cdf, dtype=float))
    n = u.size
    u = np.minimum(u, 1.0 - AD_CLAMP)
    i = np.arange(1, n + 1)
    return float(n / 2.0 - 2.0 * u.sum() - np.sum((2.0 - (2.0 * i - 1.0) / n) * np.log1p(-u)))


def modified_ad_statistic(model: Union[SeverityModel, FitResult], sample: TruncatedSample, with_clamps=False):
    """Upper-tail AD statistic of the sample against the fitted conditional cdf.

    Conditional cdf values at or above ``1 - 1e-12`` are clamped; with
    ``with_clamps`` the number of clamped points is returned as well.
    """
    if isinstance(model, FitResult):
        model = model.model
    x = np.sort(sample.losses)
    n = x.size
    log_s = _log_cond_sf(model, x, sample.threshold)
    floor = math.log(AD_CLAMP)
    clamps = int(np.sum(~(log_s > floor)))
    log_s = np.where(log_s > floor, log_s, floor)
    log_s = np.minimum(log_s, 0.0)
    u = -np.expm1(log_s)
    i = np.arange(1, n + 1)
    stat = float(n / 2.0 - 2.0 * u.sum() - np.sum((2.0 - (2.0 * i - 1.0) / n) * log_s))
    return (stat, clamps) if with_clamps else stat


def sample_conditional(model: SeverityModel, tau: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` values from the model conditioned on exceeding ``tau``."""
    s_tau = float(model.sf(tau))
    v = rng.random(n)
    v = np.where(v > 0, v, 0.5)
    x = model.quantile(np.clip(1.0 - s_tau * v, 1e-300, 1.0 - 1e-16))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return np.where(x > tau, x, np.nextafter(tau, np.inf))


@dataclass
class ADTestResult:
    statistic: float
    pvalue: float
    reject: bool
    replicates: int
    skipped: bool = False
    null_statistics: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)


def ad_test(
    fit: FitResult,
    sample: TruncatedSample,
    level: float = 0.95,
    B: int = 500,
    config: FitConfig = FitConfig(),
) -> ADTestResult:
    """Parametric-bootstrap AD test under estimated parameters.

    Each replicate draws ``n`` losses from the fitted conditional model, refits
    the family (warm-started at the fitted parameters) and recomputes the
    statistic. ``p`` is the fraction of replicate statistics >= the observed.
    """
    if B < 199:
        raise ValueError("at least 199 bootstrap replicates are required")
    if not fit.usable:
        return ADTestResult(math.nan, math.nan, True, 0, skipped=True)
    model = fit.model
    observed = modified_ad_statistic(model, sample)
    tau = sample.threshold
    boot_cfg = replace(
        config,
        restarts=0,
        start=None if fit.family in SPLICED else fit.params,
        simplex=fit.family in SPLICED,
    )
    base = [config.seed, zlib.crc32(b"ad-bootstrap"), zlib.crc32(fit.family.value.encode()),
            zlib.crc32(str(config.fit_id).encode())]
    stats = []
    for b in range(B):
        rng = np.random.default_rng(base + [b])
        xb = sample_conditional(model, tau, sample.n, rng)
        try:
            refit = fit_truncated(fit.family, TruncatedSample(xb, tau), replace(boot_cfg, fit_id=f"{config.fit_id}/{b}"))
        except ValueError:
            continue
        if refit.params is None:
            continue
        stats.append(modified_ad_statistic(refit.model, TruncatedSample(xb, tau)))
    stats = np.asarray(stats)
    if stats.size == 0:
        return ADTestResult(observed, math.nan, True, 0, skipped=True)
    p = float(np.mean(stats >= observed))
    return ADTestResult(observed, p, p < 1.0 - level, int(stats.size), null_statistics=stats)


# ---------------------------------------------------------------------------
# truncation probability


def truncation_screen(fit: FitResult, threshold: float = 0.5) -> bool:
    """True when the candidate must be eliminated (probability >= threshold)."""
    p = fit.threshold_prob
    return not (math.isfinite(p) and p < threshold)


# ---------------------------------------------------------------------------
# quantile score


def annual_series(losses_by_year: Iterable[Sequence[float]]) -> np.ndarray:
    """Observed annual losses: the sum of reported losses in each year."""
    return np.array([float(np.sum(y)) for y in losses_by_year])


def quantile_score(forecast_quantile, series, alpha):
    """Mean of (1(q >= L_t) - alpha)(q - L_t) over the observed series.

    ``forecast_quantile`` and ``alpha`` may be arrays of equal shape.
    """
    L = np.asarray(series, dtype=float)
    if L.size == 0:
        raise ValueError("series must contain at least one year")
    q = np.asarray(forecast_quantile, dtype=float)
    a = np.asarray(alpha, dtype=float)
    d = q[..., None] - L
    with np.errstate(invalid="ignore"):
        s = np.mean(((d >= 0).astype(float) - a[..., None]) * d, axis=-1)
    return float(s) if s.ndim == 0 else s


def qs_grid(lo: float = QS_LOWER, hi: float = QS_UPPER, points: int = QS_POINTS) -> np.ndarray:
    return np.linspace(lo, hi, points)


def integrated_qs(
    model: Union[AnnualLossModel, QuantileFunction],
    series,
    alpha_lo: float = QS_LOWER,
    alpha_hi: float = QS_UPPER,
    points: int = QS_POINTS,
) -> float:
    """Trapezoid integral of the quantile score over ``[alpha_lo, alpha_hi]``."""
    qf = model.quantile_fn if isinstance(model, AnnualLossModel) else model
    alphas = qs_grid(alpha_lo, alpha_hi, points)
    scores = quantile_score(qf(alphas), series, alphas)
    return float(np.trapezoid(scores, alphas))


# ---------------------------------------------------------------------------
# records and ranking


@dataclass
class CriteriaRecord:
    family: Family
    n_params: int
    loglik: float = math.nan
    aic: float = math.nan
    ad_stat: float = math.nan
    ad_pvalue: float = math.nan
    trunc_prob: float = math.nan
    qs: float = math.nan
    log_q999: float = math.nan
    eliminated: bool = False
    elimination_reason: EliminationReason = EliminationReason.NONE
    rank: int = 0
    params: Optional[tuple] = None

    def eliminate(self, reason: EliminationReason) -> None:
        if not self.eliminated:
            self.eliminated = True
            self.elimination_reason = reason

    def to_row(self) -> dict:
        return {
            "family": self.family.value,
            "n_params": self.n_params,
            "loglik": self.loglik,
            "aic": self.aic,
            "ad_stat": self.ad_stat,
            "ad_pvalue": self.ad_pvalue,
            "trunc_prob": self.trunc_prob,
            "qs": self.qs,
            "log_q999": self.log_q999,
            "eliminated": self.eliminated,
            "elimination_reason": self.elimination_reason.value,
            "rank": self.rank,
            "params": " ".join(f"{v:.17g}" for v in self.params) if self.params else "",
        }


def record_from_fit(fit: FitResult, trunc_threshold: float = 0.5) -> CriteriaRecord:
    """Record with the fit-level screens applied: convergence, boundary, truncation."""
    rec = CriteriaRecord(
        family=fit.family,
        n_params=fit.n_params,
        loglik=fit.loglik,
        aic=aic(fit),
        trunc_prob=fit.threshold_prob,
        params=fit.params,
    )
    if fit.params is None or not fit.converged:
        rec.eliminate(EliminationReason.NON_CONVERGENCE)
    elif fit.at_boundary:
        rec.eliminate(EliminationReason.BOUNDARY)
    elif truncation_screen(fit, trunc_threshold):
        rec.eliminate(EliminationReason.TRUNC_PROB_TOO_HIGH)
    return rec


def _sort_key(rec: CriteriaRecord, mode: SelectionMode):
    score = rec.qs if mode is SelectionMode.QS else rec.aic
    if not math.isfinite(score):
        score = math.inf
    return (score, rec.n_params, rec.family.order)


def rank_candidates(records: List[CriteriaRecord], mode: SelectionMode = SelectionMode.QS) -> List[CriteriaRecord]:
    """Rank survivors 1..s by score (ties: fewer parameters, then family order).

    Eliminated candidates get rank 9. Returns the records best first.
    """
    if not records:
        raise ValueError("no candidates to rank")
    alive = sorted((r for r in records if not r.eliminated), key=lambda r: _sort_key(r, mode))
    for i, r in enumerate(alive, start=1):
        r.rank = i
    dead = sorted((r for r in records if r.eliminated), key=lambda r: r.family.order)
    for r in dead:
        r.rank = WORST_RANK
    return alive + dead


@dataclass
class SelectionReport:
    orc: str
    mode: SelectionMode
    records: List[CriteriaRecord]

    @property
    def selected(self) -> Optional[CriteriaRecord]:
        for r in self.records:
            if not r.eliminated and r.rank == 1:
                return r
        return None

    def rows(self) -> List[dict]:
        return [dict(orc=self.orc, mode=self.mode.value, **r.to_row()) for r in self.records]

    def to_dict(self) -> dict:
        sel = self.selected
        return {
            "orc": self.orc,
            "mode": self.mode.value,
            "selected": sel.family.value if sel else None,
            "candidates": self.rows(),
        }
