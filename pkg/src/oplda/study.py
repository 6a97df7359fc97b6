"""Simulation studies on the three synthetic operational risk categories.

Four experiments are provided:

* ``aic_ad``     -- select by AIC after boundary, truncation and AD screens,
                    forecast the 99.9% annual-loss quantile over growing windows
* ``gh_lsas``    -- g-and-h versus log-SaS forecasts and parameter tables
* ``censoring``  -- truncation versus censoring probability estimates (Burr only)
* ``qs_ranking`` -- rank candidates by integrated quantile score on annual losses

Every replicate draws from a generator keyed by (master seed, experiment,
category, replicate), so results do not depend on execution order or on the
number of worker processes.
"""

from __future__ import annotations

import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from oplda.annual_loss import AnnualLossModel
from oplda.dataio import write_json, write_rows_csv
from oplda.distributions import Family, Mixture, SeverityModel
from oplda.frequency import estimate_rate, scale_rate
from oplda.likelihood import CensoredSample, FitConfig, TruncatedSample, fit_censored, fit_truncated
from oplda.selection import (
    EliminationReason,
    SelectionMode,
    ad_test,
    annual_series,
    integrated_qs,
    rank_candidates,
    record_from_fit,
)

ALL_FAMILIES = tuple(Family)
SUBEXPONENTIAL_ON_ORC1 = (Family.LOGNORMAL, Family.WEIBULL, Family.SPLICED_LN_LN)


@dataclass(frozen=True)
class ORCSpec:
    id: int
    rate: float
    severity: Union[SeverityModel, Mixture]
    tau: float
    true_log_q999: float


BURR_ORC1 = SeverityModel(Family.BURR, (0.07, 12.0, 1.1))
LOGSAS_ORC2 = SeverityModel(Family.LOGSAS, (1.06, 0.37, 1.65, 0.97))
MIXTURE_ORC3 = Mixture(0.33, SeverityModel(Family.LOGNORMAL, (0.7, 0.5)), BURR_ORC1)

ORC_SPECS = {
    1: ORCSpec(1, 100.0, BURR_ORC1, 1.026, 13.774),
    2: ORCSpec(2, 100.0, LOGSAS_ORC2, 3.147, 10.543),
    3: ORCSpec(3, 100.0, MIXTURE_ORC3, 0.923, 13.362),
}


@dataclass
class ORCData:
    """Simulated losses for one category, kept by year."""

    full_by_year: List[np.ndarray]
    tau: float

    @property
    def years(self) -> int:
        return len(self.full_by_year)

    def truncated_by_year(self, tau: Optional[float] = None) -> List[np.ndarray]:
        tau = self.tau if tau is None else tau
        return [y[y > tau] for y in self.full_by_year]

    def below_counts(self, tau: Optional[float] = None) -> List[int]:
        tau = self.tau if tau is None else tau
        return [int(np.sum(y <= tau)) for y in self.full_by_year]

    def window(self, years: int) -> "ORCData":
        return ORCData(self.full_by_year[:years], self.tau)

    def truncated_sample(self, tau: Optional[float] = None) -> TruncatedSample:
        tau = self.tau if tau is None else tau
        return TruncatedSample(np.concatenate(self.truncated_by_year(tau)), tau)

    def censored_sample(self, tau: Optional[float] = None) -> CensoredSample:
        tau = self.tau if tau is None else tau
        return CensoredSample(np.concatenate(self.truncated_by_year(tau)), sum(self.below_counts(tau)), tau)


def generate_orc_data(spec: ORCSpec, years: int, rng: np.random.Generator) -> ORCData:
    """Poisson counts per year with i.i.d. severities from the category's generator."""
    if years < 1:
        raise ValueError("years must be at least 1")
    counts = rng.poisson(spec.rate, years)
    return ORCData([np.asarray(spec.severity.sample(int(c), rng), dtype=float) for c in counts], spec.tau)


def replicate_rng(seed: int, experiment: str, orc: int, rep: int) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(experiment.encode()), orc, rep])


@dataclass
class ExperimentResult:
    experiment: str
    settings: dict
    rows: List[dict]
    summary: dict
    tables: Dict[str, List[dict]] = field(default_factory=dict)

    def write(self, outdir: str) -> List[str]:
        """Write rows, extra tables (CSV) and the summary (JSON); return paths."""
        os.makedirs(outdir, exist_ok=True)
        paths = [write_rows_csv(os.path.join(outdir, f"{self.experiment}_replicates.csv"), self.rows)]
        for name, rows in self.tables.items():
            paths.append(write_rows_csv(os.path.join(outdir, f"{self.experiment}_{name}.csv"), rows))
        body = {"experiment": self.experiment, "settings": self.settings, "summary": self.summary}
        paths.append(write_json(os.path.join(outdir, f"{self.experiment}_summary.json"), body))
        return paths


def _run_jobs(func, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(func, jobs))
    return [func(j) for j in jobs]


def _forecast_log_q(fit, counts, n_sim, seed, stream, positive_only=False) -> float:
    rate = scale_rate(estimate_rate(counts), fit.threshold_prob)
    model = AnnualLossModel.build(rate, fit.model, n_sim, seed, stream, positive_only=positive_only)
    q = model.quantile(0.999)
    return math.log(q) if q > 0 else math.nan


# ---------------------------------------------------------------------------
# truncation vs censoring


def _censoring_replicate(job):
    seed, rep, levels, years, fit_cfg = job
    rng = replicate_rng(seed, "censoring", 1, rep)
    data = generate_orc_data(ORC_SPECS[1], years, rng)
    rows = []
    for level in levels:
        tau = float(BURR_ORC1.quantile(level))
        cfg = replace(fit_cfg, fit_id=f"censoring/{rep}/{level}")
        tr = fit_truncated(Family.BURR, data.truncated_sample(tau), cfg)
        ce = fit_censored(Family.BURR, data.censored_sample(tau), cfg)
        rows.append({
            "replicate": rep,
            "level": level,
            "tau": tau,
            "n_observed": data.truncated_sample(tau).n,
            "n_below": sum(data.below_counts(tau)),
            "trunc_prob": tr.threshold_prob,
            "trunc_converged": tr.usable,
            "cens_prob": ce.threshold_prob,
            "cens_converged": ce.usable,
        })
    return rows


def run_censoring_study(
    n_sims: int = 2000,
    levels: Sequence[float] = (0.025, 0.05, 0.1, 0.2),
    years: int = 14,
    seed: int = 0,
    fit_config: FitConfig = FitConfig(restarts=1),
    workers: int = 1,
) -> ExperimentResult:
    """Burr-only truncated and censored fits of ORC 1 at several thresholds."""
    jobs = [(seed, rep, tuple(levels), years, replace(fit_config, seed=seed)) for rep in range(n_sims)]
    rows = [r for chunk in _run_jobs(_censoring_replicate, jobs, workers) for r in chunk]
    summary = {}
    table = []
    for level in levels:
        sel = [r for r in rows if r["level"] == level and r["trunc_converged"] and r["cens_converged"]]
        tp = np.array([r["trunc_prob"] for r in sel])
        cp = np.array([r["cens_prob"] for r in sel])
        entry = {
            "true_prob": level,
            "trunc_mean": float(tp.mean()) if tp.size else math.nan,
            "trunc_sd": float(tp.std(ddof=1)) if tp.size > 1 else math.nan,
            "cens_mean": float(cp.mean()) if cp.size else math.nan,
            "cens_sd": float(cp.std(ddof=1)) if cp.size > 1 else math.nan,
            "co_converged": len(sel),
        }
        summary[str(level)] = entry
        table.append(entry)
    settings = {"n_sims": n_sims, "levels": list(levels), "years": years, "seed": seed,
                "restarts": fit_config.restarts}
    return ExperimentResult("censoring", settings, rows, summary, {"table": table})


# ---------------------------------------------------------------------------
# quantile-score ranking


def _evaluate_candidates(data: ORCData, families, fit_cfg, n_sim, seed, stream, qs_bounds, positive_only):
    sample = data.truncated_sample()
    counts = [y.size for y in data.truncated_by_year()]
    series = annual_series(data.truncated_by_year())
    records = []
    for fam in families:
        fit = fit_truncated(fam, sample, replace(fit_cfg, fit_id=f"{stream}/{fam.value}"))
        rec = record_from_fit(fit)
        if not rec.eliminated:
            rate = scale_rate(estimate_rate(counts), fit.threshold_prob)
            model = AnnualLossModel.build(
                rate, fit.model, n_sim, seed, f"{stream}/{fam.value}",
                positive_only=positive_only and fam is Family.GANDH,
            )
            rec.qs = integrated_qs(model, series, *qs_bounds)
            q = model.quantile(0.999)
            rec.log_q999 = math.log(q) if q > 0 else math.nan
        records.append(rec)
    return rank_candidates(records, SelectionMode.QS)


def _qs_replicate(job):
    seed, orc, rep, years, families, fit_cfg, n_sim, qs_bounds, positive_only = job
    rng = replicate_rng(seed, "qs_ranking", orc, rep)
    data = generate_orc_data(ORC_SPECS[orc], years, rng)
    stream = f"qs_ranking/{orc}/{rep}"
    ranked = _evaluate_candidates(data, families, fit_cfg, n_sim, [seed, orc, rep], stream, qs_bounds, positive_only)
    return [
        {
            "orc": orc,
            "replicate": rep,
            "family": r.family.value,
            "rank": r.rank,
            "qs": r.qs,
            "trunc_prob": r.trunc_prob,
            "eliminated": r.eliminated,
            "reason": r.elimination_reason.value,
            "log_q999": r.log_q999,
        }
        for r in sorted(ranked, key=lambda r: r.family.order)
    ]


def _quartiles(v):
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return float(q1), float(med), float(q3)


def run_qs_ranking_study(
    n_sims: int = 100,
    years: int = 50,
    orcs: Sequence[int] = (1, 2, 3),
    families: Sequence[Family] = ALL_FAMILIES,
    n_sim: int = 250_000,
    seed: int = 0,
    fit_config: FitConfig = FitConfig(restarts=2),
    qs_bounds: tuple = (0.75, 0.9995, 200),
    positive_only: bool = False,
    workers: int = 1,
) -> ExperimentResult:
    """Fit, screen, simulate and rank every candidate on each replicate."""
    jobs = [
        (seed, orc, rep, years, tuple(families), replace(fit_config, seed=seed), n_sim, tuple(qs_bounds), positive_only)
        for orc in orcs
        for rep in range(n_sims)
    ]
    rows = [r for chunk in _run_jobs(_qs_replicate, jobs, workers) for r in chunk]
    summary: dict = {}
    box = []
    for orc in orcs:
        per = {}
        for fam in families:
            ranks = np.array([r["rank"] for r in rows if r["orc"] == orc and r["family"] == fam.value])
            q1, med, q3 = _quartiles(ranks)
            per[fam.value] = {
                "median_rank": med,
                "mean_rank": float(ranks.mean()),
                "share_rank9": float(np.mean(ranks == 9)),
            }
            box.append({"orc": orc, "family": fam.value, "q1": q1, "median": med, "q3": q3,
                        "min": int(ranks.min()), "max": int(ranks.max()), "share_rank9": float(np.mean(ranks == 9))})
        summary[str(orc)] = per
    settings = {"n_sims": n_sims, "years": years, "orcs": list(orcs), "families": [f.value for f in families],
                "n_sim": n_sim, "seed": seed, "qs_bounds": list(qs_bounds), "restarts": fit_config.restarts}
    return ExperimentResult("qs_ranking", settings, rows, summary, {"rank_boxplot": box})


# ---------------------------------------------------------------------------
# AIC / AD selection


def _aic_ad_replicate(job):
    seed, orc, rep, years, first, families, fit_cfg, n_sim, B, level = job
    rng = replicate_rng(seed, "aic_ad", orc, rep)
    full = generate_orc_data(ORC_SPECS[orc], years, rng)
    rows = []
    for T in range(first, years + 1):
        data = full.window(T)
        sample = data.truncated_sample()
        counts = [y.size for y in data.truncated_by_year()]
        stream = f"aic_ad/{orc}/{rep}/{T}"
        fits = {}
        accepted = {}
        records = []
        for fam in families:
            cfg = replace(fit_cfg, fit_id=f"{stream}/{fam.value}")
            fit = fit_truncated(fam, sample, cfg)
            fits[fam] = fit
            rec = record_from_fit(fit)
            if fit.usable:
                res = ad_test(fit, sample, level=level, B=B, config=cfg)
                rec.ad_stat, rec.ad_pvalue = res.statistic, res.pvalue
                ad_accept = not res.reject
                if res.reject:
                    rec.eliminate(EliminationReason.AD_REJECTED)
            else:
                ad_accept = False
            accepted[fam] = ad_accept
            records.append(rec)
        ranked = rank_candidates(records, SelectionMode.AIC_AD)
        best = ranked[0] if not ranked[0].eliminated else None
        log_q = math.nan
        if best is not None:
            log_q = _forecast_log_q(fits[best.family], counts, n_sim, [seed, orc, rep, T], stream)
        for r in records:
            rows.append({
                "orc": orc, "replicate": rep, "years": T, "forecast_index": T - first + 1,
                "family": r.family.value, "aic": r.aic, "trunc_prob": r.trunc_prob,
                "ad_stat": r.ad_stat, "ad_pvalue": r.ad_pvalue, "ad_accept": accepted[r.family],
                "eliminated": r.eliminated, "reason": r.elimination_reason.value,
                "selected": best is not None and r.family is best.family,
                "log_q999_forecast": log_q if best is not None and r.family is best.family else math.nan,
            })
    return rows


def run_aic_ad_study(
    n_sims: int = 10,
    years: int = 14,
    first_window: int = 10,
    orcs: Sequence[int] = (1, 2, 3),
    families: Sequence[Family] = ALL_FAMILIES,
    n_sim: int = 250_000,
    B: int = 500,
    level: float = 0.95,
    seed: int = 0,
    fit_config: FitConfig = FitConfig(restarts=2),
    workers: int = 1,
) -> ExperimentResult:
    """Windows of ``first_window..years`` years give the five yearly forecasts."""
    jobs = [
        (seed, orc, rep, years, first_window, tuple(families), replace(fit_config, seed=seed), n_sim, B, level)
        for orc in orcs
        for rep in range(n_sims)
    ]
    rows = [r for chunk in _run_jobs(_aic_ad_replicate, jobs, workers) for r in chunk]
    accept_table = []
    for orc in orcs:
        entry = {"orc": orc}
        for fam in families:
            entry[fam.value] = int(sum(1 for r in rows if r["orc"] == orc and r["family"] == fam.value and r["ad_accept"]))
        entry["decisions"] = n_sims * (years - first_window + 1)
        accept_table.append(entry)
    lines = [
        {"orc": r["orc"], "replicate": r["replicate"], "forecast_index": r["forecast_index"],
         "family": r["family"], "log_q999_forecast": r["log_q999_forecast"],
         "true_log_q999": ORC_SPECS[r["orc"]].true_log_q999}
        for r in rows if r["selected"]
    ]
    summary = {"ad_accepts": accept_table,
               "true_log_q999": {str(o): ORC_SPECS[o].true_log_q999 for o in orcs}}
    settings = {"n_sims": n_sims, "years": years, "first_window": first_window, "orcs": list(orcs),
                "families": [f.value for f in families], "n_sim": n_sim, "B": B, "level": level, "seed": seed}
    return ExperimentResult("aic_ad", settings, rows, summary, {"ad_accepts": accept_table, "forecast_lines": lines})


# ---------------------------------------------------------------------------
# g-and-h versus log-SaS


def _gh_lsas_replicate(job):
    seed, orc, rep, years, first, fit_cfg, n_sim, positive_only = job
    rng = replicate_rng(seed, "gh_lsas", orc, rep)
    full = generate_orc_data(ORC_SPECS[orc], years, rng)
    rows = []
    for T in range(first, years + 1):
        data = full.window(T)
        sample = data.truncated_sample()
        counts = [y.size for y in data.truncated_by_year()]
        for fam in (Family.GANDH, Family.LOGSAS):
            stream = f"gh_lsas/{orc}/{rep}/{T}/{fam.value}"
            fit = fit_truncated(fam, sample, replace(fit_cfg, fit_id=stream))
            row = {"orc": orc, "replicate": rep, "years": T, "forecast_index": T - first + 1,
                   "family": fam.value, "converged": fit.converged, "at_boundary": fit.at_boundary,
                   "trunc_prob": fit.threshold_prob, "loglik": fit.loglik}
            names = fam.impl.names
            for i, name in enumerate(names):
                row[name] = fit.params[i] if fit.params else math.nan
            row["prob_negative"] = float(fit.model.cdf(0.0)) if fit.params else math.nan
            row["log_q999_forecast"] = math.nan
            if fit.params and fit.threshold_prob < 1.0:
                row["log_q999_forecast"] = _forecast_log_q(
                    fit, counts, n_sim, [seed, orc, rep, T], stream,
                    positive_only=positive_only and fam is Family.GANDH,
                )
            rows.append(row)
    return rows


def run_gh_vs_lsas_study(
    replicate: int = 0,
    years: int = 14,
    first_window: int = 10,
    orcs: Sequence[int] = (1, 2, 3),
    n_sim: int = 250_000,
    seed: int = 0,
    fit_config: FitConfig = FitConfig(restarts=4),
    positive_only: bool = True,
    workers: int = 1,
) -> ExperimentResult:
    """One replicate per category; g-and-h severities are drawn positive-only by default."""
    jobs = [(seed, orc, replicate, years, first_window, replace(fit_config, seed=seed), n_sim, positive_only)
            for orc in orcs]
    rows = [r for chunk in _run_jobs(_gh_lsas_replicate, jobs, workers) for r in chunk]
    summary = {}
    for orc in orcs:
        gh = [r for r in rows if r["orc"] == orc and r["family"] == Family.GANDH.value]
        summary[str(orc)] = {
            "max_prob_negative_gandh": float(np.nanmax([r["prob_negative"] for r in gh])) if gh else math.nan,
            "true_log_q999": ORC_SPECS[orc].true_log_q999,
        }
    params = {
        "gandh": [{k: r[k] for k in ("orc", "years", "a", "b", "g", "h", "prob_negative")}
                  for r in rows if r["family"] == "gandh"],
        "logsas": [{k: r[k] for k in ("orc", "years", "a", "b", "eps", "delta")}
                   for r in rows if r["family"] == "logsas"],
    }
    settings = {"replicate": replicate, "years": years, "first_window": first_window, "orcs": list(orcs),
                "n_sim": n_sim, "seed": seed, "positive_only": positive_only}
    return ExperimentResult("gh_lsas", settings, rows, summary,
                            {"gandh_params": params["gandh"], "logsas_params": params["logsas"]})


EXPERIMENTS = {
    "aic_ad": run_aic_ad_study,
    "gh_lsas": run_gh_vs_lsas_study,
    "censoring": run_censoring_study,
    "qs_ranking": run_qs_ranking_study,
}
