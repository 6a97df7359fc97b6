"""Poisson loss-frequency estimation and threshold scaling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class FrequencyEstimate:
    observed_rate: float
    scaled_rate: float
    years: int


def estimate_rate(annual_counts: Sequence[int]) -> float:
    """Mean annual number of reported (above-threshold) losses."""
    counts = np.asarray(annual_counts, dtype=float)
    if counts.size == 0:
        raise ValueError("at least one year of counts is required")
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    return float(counts.mean())


def scale_rate(observed_rate: float, trunc_prob: float) -> float:
    """Rate of all loss events, ``observed_rate / (1 - trunc_prob)``."""
    if not 0.0 <= trunc_prob < 1.0:
        raise ValueError(f"truncation probability must lie in [0, 1), got {trunc_prob}")
    if observed_rate < 0:
        raise ValueError("observed rate must be nonnegative")
    return observed_rate / (1.0 - trunc_prob)


def estimate(annual_counts: Sequence[int], trunc_prob: float) -> FrequencyEstimate:
    rate = estimate_rate(annual_counts)
    return FrequencyEstimate(rate, scale_rate(rate, trunc_prob), len(annual_counts))
