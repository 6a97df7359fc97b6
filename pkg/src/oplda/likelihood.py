"""Truncated and censored maximum-likelihood fitting.

Reported losses above a known threshold ``tau`` are either treated as a
left-truncated sample (density ``f(x) / (1 - F(tau))``) or, when the number
of losses at or below ``tau`` is known, as a left-censored one
(``F(tau)^(n - m) * prod f(x_i)``).

Optimisation runs in an unconstrained space (log for positive parameters,
identity for real ones): a bounded Nelder-Mead pass followed by an L-BFGS-B
polish with central-difference gradients, repeated from jittered starts.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from oplda.distributions import (
    SPLICED,
    Family,
    ParameterDomainError,
    SeverityModel,
    _LOGNORMAL,
    gpd_logpdf,
)

DEFAULT_SPLICE_LEVELS = tuple(np.round(np.linspace(0.50, 0.95, 10), 2))


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings. Defaults are the documented reproducible ones."""

    seed: int = 12345
    restarts: int = 4
    jitter: float = 0.75
    max_iter: int = 2000
    ftol: float = 1e-10
    xtol: float = 1e-8
    box: float = 25.0
    boundary: float = 20.0
    grad_tol: float = 1e-4
    simplex: bool = True
    fit_id: str = ""
    start: Optional[tuple] = None
    splice_levels: tuple = DEFAULT_SPLICE_LEVELS

    def rng(self, family: Family) -> np.random.Generator:
        key = [self.seed, zlib.crc32(family.value.encode()), zlib.crc32(str(self.fit_id).encode())]
        return np.random.default_rng(key)


@dataclass(frozen=True)
class TruncatedSample:
    losses: np.ndarray
    threshold: float

    def __post_init__(self):
        x = np.sort(np.asarray(self.losses, dtype=float))
        object.__setattr__(self, "losses", x)
        if x.size == 0:
            raise ValueError("sample is empty")
        if not np.all(np.isfinite(x)):
            raise ValueError("losses must be finite")
        if np.any(x <= self.threshold):
            raise ValueError("every loss must exceed the threshold")

    @property
    def n(self) -> int:
        return int(self.losses.size)


@dataclass(frozen=True)
class CensoredSample:
    observed: np.ndarray
    below_count: int
    threshold: float

    def __post_init__(self):
        x = np.sort(np.asarray(self.observed, dtype=float))
        object.__setattr__(self, "observed", x)
        if x.size == 0:
            raise ValueError("observed part of a censored sample is empty")
        if self.below_count < 0:
            raise ValueError("below_count must be nonnegative")
        if np.any(x <= self.threshold):
            raise ValueError("every observed loss must exceed the threshold")

    @property
    def losses(self) -> np.ndarray:
        return self.observed

    @property
    def n(self) -> int:
        return int(self.observed.size)


@dataclass
class FitResult:
    family: Family
    params: Optional[tuple]
    loglik: float
    converged: bool
    at_boundary: bool
    threshold_prob: float
    n_params: int
    mode: str = "truncated"
    n_obs: int = 0
    message: str = ""

    @property
    def model(self) -> Optional[SeverityModel]:
        if self.params is None:
            return None
        return SeverityModel(self.family, self.params)

    @property
    def trunc_prob(self) -> float:
        return self.threshold_prob

    @property
    def usable(self) -> bool:
        return self.converged and not self.at_boundary


# ---------------------------------------------------------------------------
# log-likelihoods


def loglik_truncated(model: SeverityModel, sample: TruncatedSample) -> float:
    """Sum of log f(x_i) - n log(1 - F(tau)); -inf if any term vanishes."""
    with np.errstate(all="ignore"):
        total = float(np.sum(model.logpdf(sample.losses)))
        total -= sample.n * float(model.logsf(sample.threshold))
    return total if math.isfinite(total) else -math.inf


def loglik_censored(model: SeverityModel, sample: CensoredSample) -> float:
    """Sum of log f(x_i) + (n - m) log F(tau); -inf if any term vanishes."""
    with np.errstate(all="ignore"):
        total = float(np.sum(model.logpdf(sample.observed)))
        if sample.below_count:
            total += sample.below_count * float(model.logcdf(sample.threshold))
    return total if math.isfinite(total) else -math.inf


def _impl_loglik(impl, p, sample, mode):
    # fast path used inside the optimizer: skips SeverityModel construction
    logpdf = impl.logpdf(p, sample.losses)
    total = float(np.sum(logpdf))
    if mode == "truncated":
        total -= sample.n * float(impl.logsf(p, sample.threshold))
    elif sample.below_count:
        total += sample.below_count * float(impl.logcdf(p, sample.threshold))
    return total


# ---------------------------------------------------------------------------
# optimizer core


class _Space:
    """Maps between natural free parameters and the unconstrained space."""

    def __init__(self, kinds: Sequence[str]):
        self.pos = np.array([k == "pos" for k in kinds])

    def to_t(self, free) -> np.ndarray:
        free = np.asarray(free, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(self.pos, np.log(np.where(self.pos, free, 1.0)), free)

    def to_free(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            return np.where(self.pos, np.exp(t), t)


@dataclass
class _Opt:
    t: np.ndarray
    loglik: float
    converged: bool
    at_boundary: bool
    message: str = ""


def _central_grad(f, t, step=1e-5):
    g = np.empty_like(t)
    for i in range(t.size):
        h = step * (1.0 + abs(t[i]))
        e = np.zeros_like(t)
        e[i] = h
        g[i] = (f(t + e) - f(t - e)) / (2.0 * h)
    return g


def maximize(
    loglik: Callable[[np.ndarray], float],
    kinds: Sequence[str],
    start: Sequence[float],
    config: FitConfig,
    rng: np.random.Generator,
) -> _Opt:
    """Maximise ``loglik(free)`` over natural free parameters of ``kinds``."""
    space = _Space(kinds)
    box = config.box
    penalty = 1e100

    def negll(t):
        if np.any(np.abs(t) > box) or not np.all(np.isfinite(t)):
            return penalty
        try:
            v = loglik(space.to_free(t))
        except (ParameterDomainError, FloatingPointError, ValueError, ZeroDivisionError, OverflowError):
            return penalty
        return -v if math.isfinite(v) else penalty

    t0 = np.clip(space.to_t(start), -box + 1.0, box - 1.0)
    if not np.all(np.isfinite(t0)):
        t0 = np.zeros_like(t0)
    starts = [t0] + [
        np.clip(t0 + config.jitter * rng.standard_normal(t0.size), -box + 1.0, box - 1.0)
        for _ in range(config.restarts)
    ]
    bounds = [(-box, box)] * t0.size
    best_t, best_f = None, math.inf
    for s in starts:
        t = s
        if config.simplex:
            res = optimize.minimize(
                negll,
                t,
                method="Nelder-Mead",
                bounds=bounds,
                options={"xatol": 1e-4, "fatol": 1e-7, "maxiter": config.max_iter, "maxfev": 4 * config.max_iter},
            )
            t = res.x
        f_t = negll(t)
        if f_t < penalty:
            res = optimize.minimize(
                negll,
                t,
                method="L-BFGS-B",
                jac=lambda x: _central_grad(negll, x),
                bounds=bounds,
                options={"ftol": config.ftol, "gtol": 1e-9, "maxiter": config.max_iter},
            )
            if res.fun <= f_t:
                t, f_t = res.x, float(res.fun)
        if f_t < best_f:
            best_t, best_f = np.asarray(t, dtype=float), f_t
    if best_t is None or best_f >= penalty:
        return _Opt(t0, -math.inf, False, False, "no finite likelihood found")
    ll = -best_f
    grad = _central_grad(negll, best_t)
    gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
    converged = math.isfinite(gnorm) and gnorm <= config.grad_tol * (1.0 + abs(ll))
    at_boundary = bool(np.any(np.abs(best_t) > config.boundary))
    msg = "" if converged else f"gradient norm {gnorm:.3g}"
    return _Opt(best_t, ll, converged, at_boundary, msg)


# ---------------------------------------------------------------------------
# fitting


def _prob_at_threshold(model: SeverityModel, tau: float) -> float:
    return float(model.cdf(tau))


def _failed(family, mode, n, message) -> FitResult:
    return FitResult(family, None, -math.inf, False, False, math.nan, family.n_free, mode, n, message)


def _fit(family: Family, sample, config: FitConfig, mode: str) -> FitResult:
    n = sample.n
    if n < family.param_count + 1:
        raise ValueError(f"{family.value} needs at least {family.param_count + 1} observations")
    x = sample.losses
    if np.ptp(x) == 0.0:
        return _failed(family, mode, n, "degenerate sample")
    if family in SPLICED:
        return _fit_spliced(family, sample, config, mode)

    impl = family.impl
    tau = float(sample.threshold)
    start = config.start if config.start is not None else impl.start(x, tau)
    start_free = impl.pack(start)

    def ll(free):
        p = impl.unpack(free, tau)
        impl.validate(p)
        with np.errstate(all="ignore"):
            return _impl_loglik(impl, p, sample, mode)

    opt = maximize(ll, impl.free_kind, start_free, config, config.rng(family))
    if not math.isfinite(opt.loglik):
        return _failed(family, mode, n, opt.message)
    params = impl.unpack(_Space(impl.free_kind).to_free(opt.t), tau)
    try:
        model = SeverityModel(family, params)
    except ParameterDomainError as exc:
        return _failed(family, mode, n, str(exc))
    return FitResult(
        family,
        model.params,
        opt.loglik,
        opt.converged,
        opt.at_boundary,
        _prob_at_threshold(model, tau),
        family.n_free,
        mode,
        n,
        opt.message,
    )


def fit_truncated(family: Family, sample: TruncatedSample, config: FitConfig = FitConfig()) -> FitResult:
    """Maximise the truncated likelihood; ``threshold_prob`` is F(tau; theta_hat)."""
    return _fit(family, sample, config, "truncated")


def fit_censored(family: Family, sample: CensoredSample, config: FitConfig = FitConfig()) -> FitResult:
    """Maximise the censored likelihood; ``threshold_prob`` is F(tau; theta_hat_c)."""
    return _fit(family, sample, config, "censored")


def fit(family: Family, sample, config: FitConfig = FitConfig()) -> FitResult:
    if isinstance(sample, CensoredSample):
        return fit_censored(family, sample, config)
    return fit_truncated(family, sample, config)


# ---------------------------------------------------------------------------
# spliced families


def _splice_points(x: np.ndarray, levels: Sequence[float]) -> list:
    n = x.size
    out = []
    for lev in levels:
        k = int(math.ceil(lev * n)) - 1
        k = min(max(k, 0), n - 1)
        xs = float(x[k])
        if not out or xs != out[-1]:
            out.append(xs)
    return out


def _fit_body(xb, tau, xs, config, rng):
    """Lognormal on (tau, xs]: sum log f - m log(Fb(xs) - Fb(tau))."""
    m = xb.size
    lx = np.log(xb)

    def ll(free):
        p = (free[0], free[1])
        if not p[1] > 0:
            return -math.inf
        hi = float(_LOGNORMAL.logsf(p, tau)) if tau > 0 else 0.0
        lo = float(_LOGNORMAL.logsf(p, xs))
        if not hi > lo:
            return -math.inf
        log_mass = hi + math.log(-math.expm1(lo - hi))
        z = (lx - p[0]) / p[1]
        return float(np.sum(-0.5 * z * z - lx)) - m * (math.log(p[1]) + 0.5 * math.log(2 * math.pi) + log_mass)

    start = (float(lx.mean()), float(max(lx.std(), 1e-3)))
    return maximize(ll, ("real", "pos"), start, config, rng)


def _fit_tail(xt, xs, gpd_tail, config, rng):
    m = xt.size
    if gpd_tail:
        y = xt - xs

        def ll(free):
            return float(np.sum(gpd_logpdf(y, free[0], free[1])))

        mean, var = y.mean(), y.var()
        r = mean * mean / var if var > 0 else 1.0
        start = (max(0.5 * mean * (1 + r), 1e-6), float(np.clip(0.5 * (1 - r), -0.4, 0.9)))
        return maximize(ll, ("pos", "real"), start, config, rng)

    def ll(free):
        p = (free[0], free[1])
        return float(np.sum(_LOGNORMAL.logpdf(p, xt))) - m * float(_LOGNORMAL.logsf(p, xs))

    lx = np.log(xt)
    start = (float(lx.mean()), float(max(lx.std(), 1e-3)))
    return maximize(ll, ("real", "pos"), start, config, rng)


def _fit_spliced(family: Family, sample, config: FitConfig, mode: str) -> FitResult:
    gpd_tail = family is Family.SPLICED_LN_GPD
    tau = float(sample.threshold)
    x = sample.losses
    n = x.size
    rng = config.rng(family)
    kinds = ("real", "pos", "pos", "real") if gpd_tail else ("real", "pos", "real", "pos")
    best = None
    for xs in _splice_points(x, config.splice_levels):
        mb = int(np.searchsorted(x, xs, side="right"))
        mt = n - mb
        if mb < 3 or mt < 3:
            continue
        pb = mb / n
        body = _fit_body(x[:mb], tau, xs, config, rng)
        tail = _fit_tail(x[mb:], xs, gpd_tail, config, rng)
        if not (math.isfinite(body.loglik) and math.isfinite(tail.loglik)):
            continue
        b_free = np.array([body.t[0], math.exp(body.t[1])])
        if gpd_tail:
            t_free = np.array([math.exp(tail.t[0]), tail.t[1]])
        else:
            t_free = np.array([tail.t[0], math.exp(tail.t[1])])
        free = np.concatenate([b_free, t_free])
        ll = body.loglik + tail.loglik + mb * math.log(pb) + mt * math.log1p(-pb)
        converged = body.converged and tail.converged
        at_boundary = body.at_boundary or tail.at_boundary
        if mode == "censored":
            # censored likelihood does not factorise: polish jointly from the truncated fit
            def joint(fr, xs=xs, pb=pb):
                p = (fr[0], fr[1], fr[2], fr[3], xs, pb, tau)
                family.impl.validate(p)
                with np.errstate(all="ignore"):
                    return _impl_loglik(family.impl, p, sample, mode)

            opt = maximize(joint, kinds, free, replace(config, restarts=0), rng)
            if not math.isfinite(opt.loglik):
                continue
            free = _Space(kinds).to_free(opt.t)
            ll, converged, at_boundary = opt.loglik, opt.converged, opt.at_boundary
        cand = (ll, free, xs, pb, converged, at_boundary)
        if best is None or ll > best[0]:
            best = cand
    if best is None:
        return _failed(family, mode, n, "no admissible splicing point")
    ll, free, xs, pb, converged, at_boundary = best
    params = (float(free[0]), float(free[1]), float(free[2]), float(free[3]), xs, pb, tau)
    try:
        model = SeverityModel(family, params)
    except ParameterDomainError as exc:
        return _failed(family, mode, n, str(exc))
    return FitResult(
        family,
        model.params,
        ll,
        converged,
        at_boundary,
        _prob_at_threshold(model, tau),
        family.n_free,
        mode,
        n,
        "",
    )
