"""End-to-end run: fit candidates, screen, select, simulate and sum capital."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Mapping, Optional

import numpy as np

from oplda.annual_loss import DEFAULT_SIMULATIONS, AnnualLossModel, CapitalReport, capital_proxy, write_quantile_table_csv
from oplda.dataio import LossDataset, write_json, write_rows_csv
from oplda.distributions import Family
from oplda.frequency import estimate_rate, scale_rate
from oplda.likelihood import CensoredSample, FitConfig, FitResult, TruncatedSample, fit_censored, fit_truncated
from oplda.selection import (
    QS_LOWER,
    QS_POINTS,
    QS_UPPER,
    EliminationReason,
    SelectionMode,
    SelectionReport,
    ad_test,
    annual_series,
    integrated_qs,
    rank_candidates,
    record_from_fit,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NO_SURVIVOR = 3


@dataclass(frozen=True)
class RunConfig:
    candidates: tuple = tuple(Family)
    seed: int = 12345
    n_sim: int = DEFAULT_SIMULATIONS
    bootstrap: int = 500
    qs_lower: float = QS_LOWER
    qs_upper: float = QS_UPPER
    qs_points: int = QS_POINTS
    mode: SelectionMode = SelectionMode.QS
    alpha: float = 0.999
    ad_level: float = 0.95
    min_obs: int = 30
    trunc_limit: float = 0.5
    restarts: int = 4
    likelihood: str = "truncated"
    positive_only: bool = False
    workers: int = 1

    def __post_init__(self):
        cands = tuple(Family.parse(c) if not isinstance(c, Family) else c for c in self.candidates)
        if not cands:
            raise ValueError("at least one candidate family is required")
        object.__setattr__(self, "candidates", cands)
        if not isinstance(self.mode, SelectionMode):
            object.__setattr__(self, "mode", SelectionMode(str(self.mode).lower()))
        if self.likelihood not in ("truncated", "censored"):
            raise ValueError("likelihood must be 'truncated' or 'censored'")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.n_sim < 4:
            raise ValueError("n_sim must be at least 4")
        if self.bootstrap < 199 and self.mode is SelectionMode.AIC_AD:
            raise ValueError("bootstrap must be at least 199")
        if not self.qs_lower < self.qs_upper:
            raise ValueError("qs_lower must be below qs_upper")

    def fit_config(self, fit_id: str = "") -> FitConfig:
        return FitConfig(seed=self.seed, restarts=self.restarts, fit_id=fit_id)

    @classmethod
    def from_mapping(cls, values: Mapping) -> "RunConfig":
        """Build from strings or native values; unknown keys are an error."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw, known[key].default)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["candidates"] = [c.value for c in self.candidates]
        d["mode"] = self.mode.value
        return d


def _coerce(key, raw, default):
    if key == "candidates":
        if isinstance(raw, str):
            raw = [s for s in raw.replace(";", ",").split(",") if s.strip()]
        return tuple(Family.parse(str(s).strip()) for s in raw)
    if key == "mode":
        return SelectionMode(str(raw).strip().lower())
    if isinstance(default, bool):
        if isinstance(raw, bool):
            return raw
        s = str(raw).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return str(raw)


def load_config_file(path: str) -> dict:
    """Read a JSON object or ``key=value`` lines (``#`` starts a comment)."""
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        return json.loads(text)
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


@dataclass
class ORCOutcome:
    orc: str
    report: Optional[SelectionReport] = None
    fits: Dict[Family, FitResult] = field(default_factory=dict)
    annual: Optional[AnnualLossModel] = None
    error: Optional[str] = None
    notes: List[str] = field(default_factory=list)

    @property
    def selected(self):
        return self.report.selected if self.report else None


@dataclass
class PipelineResult:
    outcomes: Dict[str, ORCOutcome]
    capital: Optional[CapitalReport]
    exit_code: int

    @property
    def reports(self) -> Dict[str, SelectionReport]:
        return {k: o.report for k, o in self.outcomes.items() if o.report is not None}


def fit_candidates(orc, dataset: LossDataset, config: RunConfig, out: ORCOutcome):
    """Fit every configured family to one ORC, storing results in ``out.fits``."""
    tau = dataset.thresholds[orc]
    by_year = dataset.losses_by_year(orc)
    losses = np.concatenate(list(by_year.values()))
    censored = config.likelihood == "censored"
    if censored and not dataset.has_counts(orc):
        out.notes.append("censored likelihood unavailable without counts; using truncated")
        censored = False
    trunc_sample = TruncatedSample(losses, tau)
    if censored:
        sample = CensoredSample(losses, sum(dataset.counts_by_year(orc).values()), tau)
    for fam in config.candidates:
        cfg = config.fit_config(f"{orc}/{fam.value}")
        try:
            fit = fit_censored(fam, sample, cfg) if censored else fit_truncated(fam, trunc_sample, cfg)
        except ValueError as exc:
            fit = FitResult(fam, None, math.nan, False, False, math.nan, fam.n_free,
                            "censored" if censored else "truncated", losses.size, str(exc))
        out.fits[fam] = fit
    return by_year, trunc_sample


def _annual_model(fit: FitResult, counts, config: RunConfig, orc: str) -> AnnualLossModel:
    rate = scale_rate(estimate_rate(counts), fit.threshold_prob)
    return AnnualLossModel.build(
        rate, fit.model, config.n_sim, config.seed, f"{orc}/{fit.family.value}",
        positive_only=config.positive_only and fit.family is Family.GANDH,
    )


def evaluate_orc(orc: str, dataset: LossDataset, config: RunConfig) -> ORCOutcome:
    """Run every selection step for one ORC; failures are recorded, not raised."""
    out = ORCOutcome(orc)
    n = dataset.n_events(orc)
    if n < config.min_obs:
        out.error = f"ORC {orc}: {n} observations, at least {config.min_obs} required"
        return out
    by_year, trunc_sample = fit_candidates(orc, dataset, config, out)
    counts = [v.size for v in by_year.values()]
    series = annual_series(by_year.values())
    records = []
    models = {}
    for fam, fit in out.fits.items():
        rec = record_from_fit(fit, config.trunc_limit)
        if not rec.eliminated and config.mode is SelectionMode.AIC_AD:
            res = ad_test(fit, trunc_sample, config.ad_level, config.bootstrap, config.fit_config(f"{orc}/{fam.value}"))
            rec.ad_stat, rec.ad_pvalue = res.statistic, res.pvalue
            if res.reject:
                rec.eliminate(EliminationReason.AD_REJECTED)
        if not rec.eliminated and config.mode is SelectionMode.QS:
            models[fam] = _annual_model(fit, counts, config, orc)
            rec.qs = integrated_qs(models[fam], series, config.qs_lower, config.qs_upper, config.qs_points)
        records.append(rec)
    ranked = rank_candidates(records, config.mode)
    out.report = SelectionReport(orc, config.mode, ranked)
    best = out.report.selected
    if best is not None:
        out.annual = models.get(best.family) or _annual_model(out.fits[best.family], counts, config, orc)
        q = out.annual.quantile(config.alpha)
        best.log_q999 = math.log(q) if q > 0 else math.nan
    return out


def pipeline_run(dataset: LossDataset, config: RunConfig, outdir: Optional[str] = None) -> PipelineResult:
    """Select a severity per ORC and sum the selected annual-loss quantiles.

    Exit code 2 when no ORC meets the observation floor, 3 when some ORC has
    no surviving candidate, else 0.
    """
    orcs = dataset.orcs
    if config.workers > 1 and len(orcs) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(lambda o: evaluate_orc(o, dataset, config), orcs))
    else:
        results = [evaluate_orc(o, dataset, config) for o in orcs]
    outcomes = {o.orc: o for o in results}
    evaluated = [o for o in results if o.report is not None]
    if not evaluated:
        code = EXIT_VALIDATION
    elif any(o.selected is None for o in evaluated):
        code = EXIT_NO_SURVIVOR
    else:
        code = EXIT_OK
    models = {o.orc: o.annual for o in evaluated if o.annual is not None}
    capital = capital_proxy(models, config.alpha) if models else None
    if capital is not None:
        capital.warnings.extend(o.error for o in results if o.error)
    result = PipelineResult(outcomes, capital, code)
    if outdir is not None:
        write_pipeline_outputs(result, config, outdir)
    return result


def write_pipeline_outputs(result: PipelineResult, config: RunConfig, outdir: str) -> List[str]:
    """Per-ORC directories with selection tables, plus a top-level capital.json."""
    paths = []
    os.makedirs(outdir, exist_ok=True)
    for orc, o in result.outcomes.items():
        d = os.path.join(outdir, f"orc_{orc}")
        os.makedirs(d, exist_ok=True)
        summary = {"orc": orc, "error": o.error, "notes": o.notes}
        if o.report is not None:
            paths.append(write_rows_csv(os.path.join(d, "selection.csv"), o.report.rows()))
            summary.update(o.report.to_dict())
        if o.annual is not None:
            p = os.path.join(d, "annual_quantiles.csv")
            write_quantile_table_csv(p, o.annual.quantile_fn)
            paths.append(p)
            summary["scaled_rate"] = o.annual.scaled_rate
        paths.append(write_json(os.path.join(d, "selection.json"), summary))
    body = {"config": config.to_dict(), "exit_code": result.exit_code,
            "capital": result.capital.to_dict() if result.capital else None}
    paths.append(write_json(os.path.join(outdir, "capital.json"), body))
    return paths
