"""Compound-Poisson annual losses, their quantile function and the capital proxy."""

from __future__ import annotations

import csv
import math
import warnings
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np
from scipy.interpolate import PchipInterpolator

from oplda import kernels
from oplda.distributions import Mixture, SeverityModel

DEFAULT_SIMULATIONS = 250_000
CHUNK_YEARS = 16_384
_CLIP = 1e300

SeedLike = Union[int, Sequence[int]]


def _stream_key(stream) -> int:
    if isinstance(stream, (int, np.integer)):
        return int(stream)
    return zlib.crc32(str(stream).encode())


def _seed_list(seed: SeedLike) -> list:
    if isinstance(seed, (int, np.integer)):
        return [int(seed)]
    return [int(s) for s in seed]


def _simulate_chunk(rate, severity, size, key, positive_only):
    rng = np.random.default_rng(key)
    counts = rng.poisson(rate, size)
    total = int(counts.sum())
    if positive_only:
        draws, frac = severity.sample(total, rng, positive_only=True)
        drawn = total / (1.0 - frac) if frac < 1.0 else float(total)
    else:
        draws = severity.sample(total, rng)
        drawn = float(total)
    return kernels.segment_sums(draws, counts), total, drawn


def simulate_with_rejection(
    rate: float,
    severity: Union[SeverityModel, Mixture],
    n_years: int,
    seed: SeedLike,
    stream="",
    positive_only: bool = False,
    workers: int = 1,
    chunk_years: int = CHUNK_YEARS,
):
    """Simulate ``n_years`` annual losses; also return the rejected fraction.

    Chunk ``c`` uses the generator keyed by ``(seed, stream, c)`` so the output
    does not depend on ``workers``.
    """
    if rate < 0 or not math.isfinite(rate):
        raise ValueError("rate must be finite and nonnegative")
    if n_years < 1:
        raise ValueError("n_years must be at least 1")
    base = _seed_list(seed) + [_stream_key(stream)]
    sizes = [min(chunk_years, n_years - s) for s in range(0, n_years, chunk_years)]
    jobs = [(rate, severity, size, base + [c], positive_only) for c, size in enumerate(sizes)]
    with warnings.catch_warnings(), np.errstate(over="ignore", invalid="ignore"):
        warnings.simplefilter("ignore", RuntimeWarning)
        if workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(lambda j: _simulate_chunk(*j), jobs))
        else:
            parts = [_simulate_chunk(*j) for j in jobs]
    losses = np.concatenate([p[0] for p in parts])
    kept = sum(p[1] for p in parts)
    drawn = sum(p[2] for p in parts)
    frac = 1.0 - kept / drawn if drawn else 0.0
    return losses, frac


def simulate_annual_losses(
    rate: float,
    severity: Union[SeverityModel, Mixture],
    n_years: int,
    seed: SeedLike,
    stream="",
    positive_only: bool = False,
    workers: int = 1,
) -> np.ndarray:
    """Each entry sums N ~ Poisson(rate) i.i.d. unconditional severities."""
    return simulate_with_rejection(rate, severity, n_years, seed, stream, positive_only, workers)[0]


class QuantileFunction:
    """Monotone cubic Hermite interpolant through ``(i / (M + 1), x_(i))``."""

    def __init__(self, losses):
        x = np.sort(np.asarray(losses, dtype=float))
        if x.size < 4:
            raise ValueError("at least 4 simulated losses are needed")
        x = np.nan_to_num(x, nan=_CLIP, posinf=_CLIP, neginf=-_CLIP)
        x = np.clip(x, -_CLIP, _CLIP)
        m = x.size
        self.nodes = np.arange(1, m + 1) / (m + 1.0)
        self.values = x
        self._interp = PchipInterpolator(self.nodes, x, extrapolate=False)

    @property
    def p_min(self) -> float:
        return float(self.nodes[0])

    @property
    def p_max(self) -> float:
        return float(self.nodes[-1])

    def __call__(self, p):
        q = np.clip(np.asarray(p, dtype=float), self.p_min, self.p_max)
        out = self._interp(q)
        return float(out) if np.ndim(p) == 0 else out


def build_quantile_fn(simulated_losses) -> QuantileFunction:
    return QuantileFunction(simulated_losses)


@dataclass
class AnnualLossModel:
    scaled_rate: float
    severity: Union[SeverityModel, Mixture]
    simulated_losses: np.ndarray
    quantile_fn: QuantileFunction
    rejection_fraction: float = 0.0

    @classmethod
    def build(
        cls,
        scaled_rate: float,
        severity,
        n_years: int = DEFAULT_SIMULATIONS,
        seed: SeedLike = 0,
        stream="",
        positive_only: bool = False,
        workers: int = 1,
    ) -> "AnnualLossModel":
        losses, frac = simulate_with_rejection(
            scaled_rate, severity, n_years, seed, stream, positive_only, workers
        )
        losses = np.sort(losses)
        return cls(scaled_rate, severity, losses, QuantileFunction(losses), frac)

    def quantile(self, p):
        return self.quantile_fn(p)


@dataclass
class CapitalReport:
    per_orc_q999: dict
    firm_total: float
    quantile_level: float = 0.999
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "quantile_level": self.quantile_level,
            "per_orc": {k: float(v) for k, v in self.per_orc_q999.items()},
            "firm_total": float(self.firm_total),
            "warnings": list(self.warnings),
        }


def capital_proxy(models: Mapping[str, AnnualLossModel], alpha: float = 0.999) -> CapitalReport:
    """Sum of per-category annual-loss quantiles at level ``alpha``."""
    per = {}
    notes = []
    for orc, model in models.items():
        qf = model.quantile_fn
        if not qf.p_min <= alpha <= qf.p_max:
            notes.append(f"{orc}: level {alpha} clamped to [{qf.p_min:.6g}, {qf.p_max:.6g}]")
        per[orc] = qf(alpha)
    return CapitalReport(per, float(sum(per.values())), alpha, notes)


def write_losses_csv(path, losses) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "annual_loss"])
        for i, v in enumerate(losses):
            w.writerow([i, f"{v:.17g}"])


def write_quantile_table_csv(path, quantile_fn: QuantileFunction, levels=None) -> None:
    if levels is None:
        levels = np.concatenate([np.linspace(0.01, 0.99, 99), [0.995, 0.999, 0.9995]])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "quantile"])
        for p in levels:
            w.writerow([f"{p:.17g}", f"{quantile_fn(p):.17g}"])
