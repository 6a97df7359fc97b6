"""Command-line entry point: ``oplda {fit,select,simulate,capital,study,qq}``.

Settings come from an optional config file (JSON or ``key=value``), then
``--set key=value`` overrides, then dedicated flags. Artifacts go to
``--output-dir``, defaulting to ``$OPLDA_OUTPUT_DIR`` or ``./oplda_out``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

import numpy as np

from oplda.annual_loss import AnnualLossModel, write_losses_csv, write_quantile_table_csv
from oplda.dataio import DataValidationError, ingest, jsonable, read_thresholds, write_rows_csv
from oplda.distributions import Family, SeverityModel
from oplda.likelihood import FitConfig, TruncatedSample, fit_truncated
from oplda.pipeline import (
    EXIT_OK,
    EXIT_VALIDATION,
    ORCOutcome,
    RunConfig,
    fit_candidates,
    load_config_file,
    pipeline_run,
)
from oplda.selection import aic
from oplda.study import EXPERIMENTS

OUTPUT_ENV = "OPLDA_OUTPUT_DIR"

_FLAG_KEYS = {
    "candidates": "candidates",
    "mode": "mode",
    "n_sim": "n_sim",
    "bootstrap": "bootstrap",
    "alpha": "alpha",
    "likelihood": "likelihood",
    "restarts": "restarts",
    "seed": "seed",
    "min_obs": "min_obs",
    "workers": "workers",
}


def _output_dir(args) -> str:
    return args.output_dir or os.environ.get(OUTPUT_ENV) or "oplda_out"


def _run_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    for attr, key in _FLAG_KEYS.items():
        v = getattr(args, attr, None)
        if v is not None:
            values[key] = v
    return RunConfig.from_mapping(values)


def _thresholds(args) -> dict:
    out = {}
    if args.thresholds:
        out.update(read_thresholds(args.thresholds))
    for item in args.threshold or []:
        if "=" not in item:
            raise ValueError(f"--threshold expects ORC=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = float(v)
    if not out:
        raise ValueError("no thresholds given (use --thresholds FILE or --threshold ORC=VALUE)")
    return out


def _dataset(args):
    return ingest(args.losses, _thresholds(args), args.counts)


def _print_json(obj) -> None:
    print(json.dumps(jsonable(obj), indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# subcommands


def cmd_fit(args) -> int:
    config = _run_config(args)
    data = _dataset(args)
    out = _output_dir(args)
    os.makedirs(out, exist_ok=True)
    rows = []
    for orc in data.orcs:
        if data.n_events(orc) < config.min_obs:
            print(f"ORC {orc}: fewer than {config.min_obs} observations, skipped", file=sys.stderr)
            continue
        outcome = ORCOutcome(orc)
        fit_candidates(orc, data, config, outcome)
        for fam, f in outcome.fits.items():
            rows.append({
                "orc": orc, "family": fam.value, "mode": f.mode, "n_obs": f.n_obs,
                "loglik": f.loglik, "aic": aic(f), "converged": f.converged,
                "at_boundary": f.at_boundary, "trunc_prob": f.threshold_prob,
                "params": " ".join(f"{v:.17g}" for v in f.params) if f.params else "",
                "message": f.message,
            })
    if not rows:
        return EXIT_VALIDATION
    path = write_rows_csv(os.path.join(out, "fits.csv"), rows)
    print(path)
    return EXIT_OK


def cmd_select(args) -> int:
    config = _run_config(args)
    result = pipeline_run(_dataset(args), config, _output_dir(args))
    summary = {
        orc: {"selected": o.selected.family.value if o.selected else None, "error": o.error}
        for orc, o in result.outcomes.items()
    }
    _print_json({"exit_code": result.exit_code, "orcs": summary})
    return result.exit_code


def cmd_capital(args) -> int:
    config = _run_config(args)
    result = pipeline_run(_dataset(args), config, _output_dir(args))
    _print_json(result.capital.to_dict() if result.capital else {"error": "no ORC produced a model"})
    return result.exit_code


def cmd_simulate(args) -> int:
    family = Family.parse(args.family)
    params = tuple(float(v) for v in args.params.replace(",", " ").split())
    model = SeverityModel(family, params)
    n_sim = args.n_sim if args.n_sim is not None else RunConfig().n_sim
    annual = AnnualLossModel.build(args.rate, model, n_sim, args.seed, "simulate", positive_only=args.positive_only)
    out = _output_dir(args)
    os.makedirs(out, exist_ok=True)
    write_losses_csv(os.path.join(out, "annual_losses.csv"), annual.simulated_losses)
    write_quantile_table_csv(os.path.join(out, "annual_quantiles.csv"), annual.quantile_fn)
    _print_json({"q999": annual.quantile(0.999), "rejection_fraction": annual.rejection_fraction, "output_dir": out})
    return EXIT_OK


def qq_pairs(model: SeverityModel, sample: TruncatedSample):
    """(empirical, fitted) conditional quantiles at plotting positions i/(n+1)."""
    x = sample.losses
    n = x.size
    p = np.arange(1, n + 1) / (n + 1.0)
    f_tau = float(model.cdf(sample.threshold))
    fitted = model.quantile(f_tau + p * (1.0 - f_tau))
    return x, np.asarray(fitted, dtype=float)


def cmd_qq(args) -> int:
    data = _dataset(args)
    orc = args.orc or data.orcs[0]
    family = Family.parse(args.family)
    by_year = data.losses_by_year(orc)
    sample = TruncatedSample(np.concatenate(list(by_year.values())), data.thresholds[orc])
    seed = args.seed if args.seed is not None else FitConfig().seed
    fit = fit_truncated(family, sample, FitConfig(seed=seed, fit_id=f"{orc}/{family.value}"))
    if fit.params is None:
        print(f"fit failed: {fit.message}", file=sys.stderr)
        return EXIT_VALIDATION
    emp, fitted = qq_pairs(fit.model, sample)
    out = _output_dir(args)
    os.makedirs(out, exist_ok=True)
    path = write_rows_csv(
        os.path.join(out, f"qq_{orc}_{family.value}.csv"),
        [{"empirical": e, "fitted": f} for e, f in zip(emp, fitted)],
    )
    print(path)
    return EXIT_OK


def cmd_study(args) -> int:
    name = args.experiment
    kwargs = {"seed": args.seed, "workers": args.workers or 1}
    if args.sims is not None:
        if name == "gh_lsas":
            raise ValueError("gh_lsas runs one replicate per ORC; use --replicate")
        kwargs["n_sims"] = args.sims
    if args.replicate is not None:
        if name != "gh_lsas":
            raise ValueError("--replicate applies to gh_lsas only")
        kwargs["replicate"] = args.replicate
    if args.years is not None:
        kwargs["years"] = args.years
    if args.n_sim is not None and name != "censoring":
        kwargs["n_sim"] = args.n_sim
    if args.bootstrap is not None and name == "aic_ad":
        kwargs["B"] = args.bootstrap
    if args.orcs:
        if name == "censoring":
            raise ValueError("the censoring study uses ORC 1 only")
        kwargs["orcs"] = tuple(int(o) for o in args.orcs.split(","))
    if args.restarts is not None:
        kwargs["fit_config"] = FitConfig(restarts=args.restarts)
    result = EXPERIMENTS[name](**kwargs)
    paths = result.write(os.path.join(_output_dir(args), name))
    for p in paths:
        print(p)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output-dir", help=f"artifact directory (default ${OUTPUT_ENV} or ./oplda_out)")


def _add_run(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON or key=value settings file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting")
    p.add_argument("--candidates", help="comma-separated family names")
    p.add_argument("--mode", choices=["qs", "aic_ad"])
    p.add_argument("--n-sim", dest="n_sim", type=int, help="simulated years per annual-loss model")
    p.add_argument("--bootstrap", type=int, help="AD bootstrap replicates")
    p.add_argument("--likelihood", choices=["truncated", "censored"])
    p.add_argument("--restarts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--min-obs", dest="min_obs", type=int)
    p.add_argument("--workers", type=int)


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--losses", required=True, help="CSV orc_id,year,amount")
    p.add_argument("--thresholds", help="CSV orc_id,threshold")
    p.add_argument("--threshold", action="append", metavar="ORC=VALUE")
    p.add_argument("--counts", help="CSV orc_id,year,below_count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oplda", description="Loss distribution approach severity selection and capital.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit every candidate family per ORC")
    _add_common(p), _add_run(p), _add_data(p)
    p.set_defaults(func=cmd_fit, alpha=None)

    p = sub.add_parser("select", help="screen and rank candidates per ORC")
    _add_common(p), _add_run(p), _add_data(p)
    p.set_defaults(func=cmd_select, alpha=None)

    p = sub.add_parser("capital", help="select, simulate and sum annual-loss quantiles")
    _add_common(p), _add_run(p), _add_data(p)
    p.add_argument("--alpha", type=float, help="quantile level (default 0.999)")
    p.set_defaults(func=cmd_capital)

    p = sub.add_parser("simulate", help="simulate annual losses for a given severity")
    _add_common(p)
    p.add_argument("--family", required=True, choices=[f.value for f in Family])
    p.add_argument("--params", required=True, help="parameter values, space or comma separated")
    p.add_argument("--rate", required=True, type=float, help="Poisson rate of all loss events")
    p.add_argument("--n-sim", dest="n_sim", type=int)
    p.add_argument("--seed", type=int, default=RunConfig().seed)
    p.add_argument("--positive-only", action="store_true", help="redraw negative severities")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("qq", help="emit conditional QQ pairs for one fitted family")
    _add_common(p), _add_data(p)
    p.add_argument("--family", required=True, choices=[f.value for f in Family])
    p.add_argument("--orc")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_qq)

    p = sub.add_parser("study", help="run a simulation study")
    _add_common(p)
    p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--sims", type=int, help="replicates per ORC")
    p.add_argument("--replicate", type=int, help="replicate index (gh_lsas)")
    p.add_argument("--years", type=int)
    p.add_argument("--orcs", help="comma-separated ORC ids")
    p.add_argument("--n-sim", dest="n_sim", type=int)
    p.add_argument("--bootstrap", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_study)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DataValidationError as exc:
        for e in exc.errors:
            print(e, file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
