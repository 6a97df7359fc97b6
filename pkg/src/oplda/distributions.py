"""Candidate loss-severity families.

Nine families share one interface: ``logpdf``, ``pdf``, ``cdf``, ``sf``,
``quantile``, ``sample`` and ``tail_class``. A :class:`SeverityModel` pairs a
:class:`Family` with a parameter tuple in the family's canonical order:

=================  ===========================================
Family             parameters
=================  ===========================================
LOGNORMAL          (mu, sigma)
GPD                (u, theta, xi)
BURR               (alpha, gamma, theta)
WEIBULL            (a, theta)
LOGLOGISTIC        (gamma, theta)
GANDH              (a, b, g, h)
LOGSAS             (a, b, eps, delta)
SPLICED_LN_LN      (mu_b, sigma_b, mu_t, sigma_t, x_s, p_b, tau)
SPLICED_LN_GPD     (mu_b, sigma_b, theta, xi, x_s, p_b, tau)
=================  ===========================================

The spliced families carry the reporting threshold ``tau`` because their
normalising constants depend on it; ``p_b`` is the fraction of the
above-threshold sample lying at or below the splicing point ``x_s``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from oplda import kernels

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
SMALL_XI = 1e-8


class ParameterDomainError(ValueError):
    """Raised for parameters outside a family's domain."""


class Family(enum.Enum):
    LOGNORMAL = "lognormal"
    GPD = "gpd"
    BURR = "burr"
    WEIBULL = "weibull"
    LOGLOGISTIC = "loglogistic"
    GANDH = "gandh"
    LOGSAS = "logsas"
    SPLICED_LN_LN = "lnln"
    SPLICED_LN_GPD = "lngpd"

    @property
    def impl(self) -> "_FamilyImpl":
        return _IMPLS[self]

    @property
    def param_count(self) -> int:
        return self.impl.n_params

    @property
    def n_free(self) -> int:
        """Number of parameters estimated from data (what AIC counts)."""
        return self.impl.n_free

    @property
    def order(self) -> int:
        return list(Family).index(self)

    @classmethod
    def parse(cls, name: str) -> "Family":
        key = name.strip().lower().replace("-", "").replace("_", "")
        for fam in cls:
            if key in (fam.value, fam.name.lower().replace("_", "")):
                return fam
        raise ValueError(f"unknown severity family {name!r}")


class TailClass(enum.Enum):
    SUPER_EXPONENTIAL = "SupX"
    SUB_EXPONENTIAL = "SubX"
    REGULARLY_VARYING = "RV"
    BOUNDED = "Bounded"
    EXPONENTIAL = "Exponential"


def _asarray(x):
    return np.asarray(x, dtype=float)


def _norm_logpdf(z):
    return -0.5 * z * z - _LOG_SQRT_2PI


# ---------------------------------------------------------------------------
# transforms shared by several families


def gpd_sf(y, theta, xi):
    """Survival of a GPD exceedance ``y >= 0`` (0 beyond a bounded endpoint)."""
    y = _asarray(y)
    with np.errstate(all="ignore"):
        if abs(xi) < SMALL_XI:
            s = np.exp(-y / theta)
        else:
            base = 1.0 + xi * y / theta
            s = np.where(base > 0, np.exp(-np.log(np.where(base > 0, base, 1.0)) / xi), 0.0)
    return np.where(y <= 0, 1.0, s)


def gpd_logpdf(y, theta, xi):
    y = _asarray(y)
    with np.errstate(all="ignore"):
        if abs(xi) < SMALL_XI:
            lp = -math.log(theta) - y / theta
        else:
            base = 1.0 + xi * y / theta
            lp = np.where(
                base > 0,
                -math.log(theta) - (1.0 / xi + 1.0) * np.log(np.where(base > 0, base, 1.0)),
                -np.inf,
            )
    return np.where(y < 0, -np.inf, lp)


def gpd_isf(s, theta, xi):
    """Exceedance y with survival probability ``s``."""
    s = _asarray(s)
    with np.errstate(divide="ignore"):
        ls = np.log(s)
    if abs(xi) < SMALL_XI:
        return -theta * ls
    return theta * np.expm1(-xi * ls) / xi


def sas_inverse(w, eps, delta):
    """Return (z, log dz/dw) for the inverse sinh-arcsinh map of ``w``.

    ``eps == 0, delta == 1`` is the identity and is returned exactly.
    """
    w = _asarray(w)
    if eps == 0.0 and delta == 1.0:
        return w, np.zeros_like(w)
    with np.errstate(invalid="ignore", over="ignore"):
        s = delta * np.arcsinh(w) - eps
        z = np.sinh(s)
        # log cosh(s) computed without overflow
        log_cosh = np.logaddexp(s, -s) - math.log(2.0)
        return z, log_cosh + math.log(delta) - 0.5 * np.log1p(w * w)


def sas_forward(z, eps, delta):
    z = _asarray(z)
    if eps == 0.0 and delta == 1.0:
        return z
    return np.sinh((np.arcsinh(z) + eps) / delta)


# ---------------------------------------------------------------------------
# family implementations


class _FamilyImpl:
    n_params: int
    names: tuple
    free_index: tuple
    free_kind: tuple  # "pos" or "real" per free parameter

    @property
    def n_free(self) -> int:
        return len(self.free_index)

    def validate(self, p) -> None:
        raise NotImplementedError

    def logpdf(self, p, x):
        raise NotImplementedError

    def cdf(self, p, x):
        raise NotImplementedError

    def sf(self, p, x):
        return 1.0 - self.cdf(p, x)

    def logcdf(self, p, x):
        with np.errstate(divide="ignore"):
            return np.log(self.cdf(p, x))

    def logsf(self, p, x):
        with np.errstate(divide="ignore"):
            return np.log(self.sf(p, x))

    def ppf(self, p, u):
        raise NotImplementedError

    def sample(self, p, n, rng):
        return self.ppf(p, rng.random(n))

    def tail_class(self, p) -> TailClass:
        raise NotImplementedError

    def lower_support(self, p) -> float:
        return 0.0

    def pack(self, p) -> np.ndarray:
        return np.array([p[i] for i in self.free_index], dtype=float)

    def unpack(self, free, tau: float) -> tuple:
        return tuple(float(v) for v in free)

    def start(self, x, tau: float) -> tuple:
        raise NotImplementedError


def _check(cond, msg):
    if not cond:
        raise ParameterDomainError(msg)


class _Lognormal(_FamilyImpl):
    n_params = 2
    names = ("mu", "sigma")
    free_index = (0, 1)
    free_kind = ("real", "pos")

    def validate(self, p):
        _check(np.isfinite(p[0]), "mu must be finite")
        _check(p[1] > 0 and np.isfinite(p[1]), "sigma must be positive")

    def _z(self, p, x):
        x = _asarray(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (np.log(np.where(x > 0, x, 0.0)) - p[0]) / p[1]

    def logpdf(self, p, x):
        x = _asarray(x)
        z = self._z(p, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = _norm_logpdf(z) - math.log(p[1]) - np.log(x)
        return np.where(x > 0, lp, -np.inf)

    def cdf(self, p, x):
        return special.ndtr(self._z(p, x))

    def sf(self, p, x):
        return special.ndtr(-self._z(p, x))

    def logcdf(self, p, x):
        return special.log_ndtr(self._z(p, x))

    def logsf(self, p, x):
        return special.log_ndtr(-self._z(p, x))

    def ppf(self, p, u):
        return np.exp(p[0] + p[1] * special.ndtri(_asarray(u)))

    def sample(self, p, n, rng):
        return np.exp(p[0] + p[1] * rng.standard_normal(n))

    def tail_class(self, p):
        return TailClass.SUB_EXPONENTIAL

    def start(self, x, tau):
        lx = np.log(x)
        return (float(lx.mean()), float(max(lx.std(), 1e-3)))


class _GPD(_FamilyImpl):
    n_params = 3
    names = ("u", "theta", "xi")
    free_index = (1, 2)
    free_kind = ("pos", "real")

    def validate(self, p):
        _check(np.isfinite(p[0]), "u must be finite")
        _check(p[1] > 0 and np.isfinite(p[1]), "theta must be positive")
        _check(np.isfinite(p[2]), "xi must be finite")

    def logpdf(self, p, x):
        return gpd_logpdf(_asarray(x) - p[0], p[1], p[2])

    def sf(self, p, x):
        return gpd_sf(_asarray(x) - p[0], p[1], p[2])

    def cdf(self, p, x):
        return 1.0 - self.sf(p, x)

    def logsf(self, p, x):
        y = _asarray(x) - p[0]
        u, theta, xi = p
        with np.errstate(all="ignore"):
            if abs(xi) < SMALL_XI:
                ls = -y / theta
            else:
                base = 1.0 + xi * y / theta
                ls = np.where(base > 0, -np.log(np.where(base > 0, base, 1.0)) / xi, -np.inf)
        return np.where(y <= 0, 0.0, ls)

    def ppf(self, p, u):
        return p[0] + gpd_isf(1.0 - _asarray(u), p[1], p[2])

    def tail_class(self, p):
        xi = p[2]
        if abs(xi) < SMALL_XI:
            return TailClass.EXPONENTIAL
        return TailClass.REGULARLY_VARYING if xi > 0 else TailClass.BOUNDED

    def lower_support(self, p):
        return p[0]

    def unpack(self, free, tau):
        return (float(tau), float(free[0]), float(free[1]))

    def start(self, x, tau):
        y = x - tau
        m, v = y.mean(), y.var()
        r = m * m / v if v > 0 else 1.0
        xi = float(np.clip(0.5 * (1.0 - r), -0.4, 0.9))
        theta = float(max(0.5 * m * (1.0 + r), 1e-6))
        if xi < 0:
            # keep the upper endpoint beyond the largest observation
            theta = max(theta, -1.1 * xi * float(y.max()))
        return (float(tau), theta, xi)


class _Burr(_FamilyImpl):
    n_params = 3
    names = ("alpha", "gamma", "theta")
    free_index = (0, 1, 2)
    free_kind = ("pos", "pos", "pos")

    def validate(self, p):
        for name, v in zip(self.names, p):
            _check(v > 0 and np.isfinite(v), f"{name} must be positive")

    def _log1p_y(self, p, x):
        x = _asarray(x)
        with np.errstate(divide="ignore"):
            t = p[1] * np.log(np.where(x > 0, x, 0.0) / p[2])
        return t, np.logaddexp(0.0, t)

    def logpdf(self, p, x):
        x = _asarray(x)
        alpha, gamma, theta = p
        t, l1 = self._log1p_y(p, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = math.log(alpha * gamma) - np.log(x) + t - (alpha + 1.0) * l1
        return np.where(x > 0, lp, -np.inf)

    def logsf(self, p, x):
        return -p[0] * self._log1p_y(p, x)[1]

    def sf(self, p, x):
        return np.exp(self.logsf(p, x))

    def cdf(self, p, x):
        return -np.expm1(self.logsf(p, x))

    def ppf(self, p, u):
        alpha, gamma, theta = p
        with np.errstate(divide="ignore"):
            s = -np.log1p(-_asarray(u)) / alpha
            # log(exp(s) - 1), stable for both small and large s
            lg = np.where(s > 30.0, s + np.log1p(-np.exp(-s)), np.log(np.expm1(s)))
        return theta * np.exp(lg / gamma)

    def tail_class(self, p):
        return TailClass.REGULARLY_VARYING

    def start(self, x, tau):
        lx = np.log(x)
        sd = max(lx.std(), 1e-3)
        return (1.0, float(math.pi / (math.sqrt(3.0) * sd)), float(np.exp(np.median(lx))))


class _Weibull(_FamilyImpl):
    n_params = 2
    names = ("a", "theta")
    free_index = (0, 1)
    free_kind = ("pos", "pos")

    def validate(self, p):
        for name, v in zip(self.names, p):
            _check(v > 0 and np.isfinite(v), f"{name} must be positive")

    def _r(self, p, x):
        x = _asarray(x)
        return np.where(x > 0, x, 0.0) / p[1]

    def logpdf(self, p, x):
        x = _asarray(x)
        a = p[0]
        r = self._r(p, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            lr = np.log(r)
            lp = math.log(a / p[1]) + (a - 1.0) * lr - np.exp(a * lr)
        return np.where(x > 0, lp, -np.inf)

    def logsf(self, p, x):
        return -(self._r(p, x) ** p[0])

    def sf(self, p, x):
        return np.exp(self.logsf(p, x))

    def cdf(self, p, x):
        return -np.expm1(self.logsf(p, x))

    def ppf(self, p, u):
        with np.errstate(divide="ignore"):
            return p[1] * (-np.log1p(-_asarray(u))) ** (1.0 / p[0])

    def tail_class(self, p):
        a = p[0]
        if a < 1:
            return TailClass.SUB_EXPONENTIAL
        if a > 1:
            return TailClass.SUPER_EXPONENTIAL
        return TailClass.EXPONENTIAL

    def start(self, x, tau):
        lx = np.log(x)
        a = math.pi / (math.sqrt(6.0) * max(lx.std(), 1e-3))
        return (float(a), float(np.exp(lx.mean() + 0.5772156649 / a)))


class _Loglogistic(_FamilyImpl):
    n_params = 2
    names = ("gamma", "theta")
    free_index = (0, 1)
    free_kind = ("pos", "pos")

    def validate(self, p):
        for name, v in zip(self.names, p):
            _check(v > 0 and np.isfinite(v), f"{name} must be positive")

    def _t(self, p, x):
        x = _asarray(x)
        with np.errstate(divide="ignore"):
            return p[0] * np.log(np.where(x > 0, x, 0.0) / p[1])

    def logpdf(self, p, x):
        x = _asarray(x)
        t = self._t(p, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = math.log(p[0]) - np.log(x) - np.logaddexp(0.0, t) - np.logaddexp(0.0, -t)
        return np.where(x > 0, lp, -np.inf)

    def cdf(self, p, x):
        return special.expit(self._t(p, x))

    def sf(self, p, x):
        return special.expit(-self._t(p, x))

    def logsf(self, p, x):
        return -np.logaddexp(0.0, self._t(p, x))

    def logcdf(self, p, x):
        return -np.logaddexp(0.0, -self._t(p, x))

    def ppf(self, p, u):
        return p[1] * np.exp(special.logit(_asarray(u)) / p[0])

    def tail_class(self, p):
        return TailClass.REGULARLY_VARYING

    def start(self, x, tau):
        lx = np.log(x)
        return (float(math.pi / (math.sqrt(3.0) * max(lx.std(), 1e-3))), float(np.exp(np.median(lx))))


class _GandH(_FamilyImpl):
    n_params = 4
    names = ("a", "b", "g", "h")
    free_index = (0, 1, 2, 3)
    free_kind = ("real", "pos", "real", "pos")

    def validate(self, p):
        a, b, g, h = p
        _check(np.isfinite(a) and np.isfinite(g), "a and g must be finite")
        _check(b > 0 and np.isfinite(b), "b must be positive")
        _check(h > 0 and np.isfinite(h), "h must be positive")

    def inverse(self, p, x):
        a, b, g, h = p
        return kernels.gh_inverse(_asarray(x), a, b, g, h).reshape(np.shape(x))

    def logpdf(self, p, x):
        a, b, g, h = p
        z = self.inverse(p, x)
        with np.errstate(all="ignore"):
            if abs(g) < kernels.SMALL_G:
                inner = 1.0 + g * z + h * z * (z + 0.5 * g * z * z)
            else:
                inner = np.exp(g * z) + h * z * np.expm1(g * z) / g
            lp = _norm_logpdf(z) - math.log(b) - 0.5 * h * z * z - np.log(inner)
        return np.where(np.isfinite(z), lp, -np.inf)

    def cdf(self, p, x):
        return special.ndtr(self.inverse(p, x))

    def sf(self, p, x):
        return special.ndtr(-self.inverse(p, x))

    def logcdf(self, p, x):
        return special.log_ndtr(self.inverse(p, x))

    def logsf(self, p, x):
        return special.log_ndtr(-self.inverse(p, x))

    def ppf(self, p, u):
        a, b, g, h = p
        return a + b * kernels.gh_transform(special.ndtri(_asarray(u)), g, h)

    def sample(self, p, n, rng):
        a, b, g, h = p
        return a + b * kernels.gh_transform(rng.standard_normal(n), g, h)

    def tail_class(self, p):
        return TailClass.REGULARLY_VARYING

    def lower_support(self, p):
        return -np.inf

    def start(self, x, tau):
        q25, q50, q75 = np.quantile(x, [0.25, 0.5, 0.75])
        zq = 0.6744897501960817
        lo, hi = max(q50 - q25, 1e-12), max(q75 - q50, 1e-12)
        g = float(np.clip(math.log(hi / lo) / zq, -3.0, 3.0))
        h = 0.1
        span = float(kernels.gh_transform(np.array([zq]), g, h)[0] - kernels.gh_transform(np.array([-zq]), g, h)[0])
        b = max((q75 - q25) / span, 1e-8)
        return (float(q50), float(b), g, h)


class _LogSaS(_FamilyImpl):
    n_params = 4
    names = ("a", "b", "eps", "delta")
    free_index = (0, 1, 2, 3)
    free_kind = ("real", "pos", "real", "pos")

    def validate(self, p):
        a, b, eps, delta = p
        _check(np.isfinite(a) and np.isfinite(eps), "a and eps must be finite")
        _check(b > 0 and np.isfinite(b), "b must be positive")
        _check(delta > 0 and np.isfinite(delta), "delta must be positive")

    def _w(self, p, x):
        x = _asarray(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (np.log(np.where(x > 0, x, 0.0)) - p[0]) / p[1]

    def logpdf(self, p, x):
        x = _asarray(x)
        z, ljac = sas_inverse(self._w(p, x), p[2], p[3])
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = _norm_logpdf(z) + ljac - math.log(p[1]) - np.log(x)
        return np.where(x > 0, lp, -np.inf)

    def cdf(self, p, x):
        return special.ndtr(sas_inverse(self._w(p, x), p[2], p[3])[0])

    def sf(self, p, x):
        return special.ndtr(-sas_inverse(self._w(p, x), p[2], p[3])[0])

    def logcdf(self, p, x):
        return special.log_ndtr(sas_inverse(self._w(p, x), p[2], p[3])[0])

    def logsf(self, p, x):
        return special.log_ndtr(-sas_inverse(self._w(p, x), p[2], p[3])[0])

    def ppf(self, p, u):
        with np.errstate(over="ignore"):
            return np.exp(p[0] + p[1] * sas_forward(special.ndtri(_asarray(u)), p[2], p[3]))

    def sample(self, p, n, rng):
        with np.errstate(over="ignore"):
            return np.exp(p[0] + p[1] * sas_forward(rng.standard_normal(n), p[2], p[3]))

    def tail_class(self, p):
        delta = p[3]
        if delta <= 0.5:
            return TailClass.REGULARLY_VARYING
        if delta <= 1.0:
            return TailClass.SUB_EXPONENTIAL
        return TailClass.SUPER_EXPONENTIAL

    def start(self, x, tau):
        # match the median and IQR of log x over a small (eps, delta) grid and
        # keep the candidate with the best truncated likelihood
        lx = np.log(x)
        q25, q50, q75 = np.quantile(lx, [0.25, 0.5, 0.75])
        zq = special.ndtri(np.array([0.25, 0.5, 0.75]))
        best, best_ll = (float(lx.mean()), float(max(lx.std(), 1e-3)), 0.0, 1.0), -np.inf
        for eps in (-2.0, -1.0, 0.0, 1.0, 2.0):
            for delta in (0.5, 0.75, 1.0, 1.5):
                s25, s50, s75 = sas_forward(zq, eps, delta)
                b = (q75 - q25) / (s75 - s25)
                if not b > 0:
                    continue
                p = (float(q50 - b * s50), float(b), eps, delta)
                with np.errstate(all="ignore"):
                    ll = float(np.sum(self.logpdf(p, x)) - x.size * self.logsf(p, tau))
                if ll > best_ll:
                    best, best_ll = p, ll
        return best


class _Spliced(_FamilyImpl):
    """Lognormal body spliced at ``x_s`` to a lognormal or GPD tail.

    With body cdf ``Fb`` and threshold ``tau``,
    ``D1 = Fb(x_s) - (1 - p_b) Fb(tau)`` and the cdf is ``p_b Fb(x) / D1`` on
    ``(0, x_s]``; above ``x_s`` the survival is ``D2 * S_t(x)`` where ``S_t``
    is the tail survival and
    ``D2 = (1 - p_b) (Fb(x_s) - Fb(tau)) / (D1 S_t(x_s))``. Conditional on
    exceeding ``tau`` the body then carries mass ``p_b`` exactly.
    """

    n_params = 7

    def __init__(self, gpd_tail: bool):
        self.gpd_tail = gpd_tail
        if gpd_tail:
            self.names = ("mu_b", "sigma_b", "theta", "xi", "x_s", "p_b", "tau")
            self.free_kind = ("real", "pos", "pos", "real")
        else:
            self.names = ("mu_b", "sigma_b", "mu_t", "sigma_t", "x_s", "p_b", "tau")
            self.free_kind = ("real", "pos", "real", "pos")
        self.free_index = (0, 1, 2, 3)

    @property
    def n_free(self) -> int:
        # four continuous parameters plus the splicing point; p_b is a data proportion
        return 5

    def validate(self, p):
        mu_b, sigma_b, t1, t2, xs, pb, tau = p
        _check(np.isfinite(mu_b), "mu_b must be finite")
        _check(sigma_b > 0 and np.isfinite(sigma_b), "sigma_b must be positive")
        if self.gpd_tail:
            _check(t1 > 0 and np.isfinite(t1), "theta must be positive")
            _check(np.isfinite(t2), "xi must be finite")
        else:
            _check(np.isfinite(t1), "mu_t must be finite")
            _check(t2 > 0 and np.isfinite(t2), "sigma_t must be positive")
        _check(0.0 < pb < 1.0, "p_b must lie in (0, 1)")
        _check(tau >= 0 and np.isfinite(tau), "tau must be nonnegative")
        _check(xs > tau and np.isfinite(xs), "x_s must exceed tau")

    def _body(self, p):
        return (p[0], p[1])

    def _tail_logsf(self, p, x):
        x = _asarray(x)
        if self.gpd_tail:
            return _GPD_IMPL.logsf((p[4], p[2], p[3]), x)
        return _LOGNORMAL.logsf((p[2], p[3]), x)

    def _tail_logpdf(self, p, x):
        if self.gpd_tail:
            return gpd_logpdf(_asarray(x) - p[4], p[2], p[3])
        return _LOGNORMAL.logpdf((p[2], p[3]), x)

    def constants(self, p):
        """Return (D1, D2) and the log of the tail survival at ``x_s``."""
        mu_b, sigma_b, _, _, xs, pb, tau = p
        fb_xs = float(_LOGNORMAL.cdf((mu_b, sigma_b), xs))
        fb_tau = float(_LOGNORMAL.cdf((mu_b, sigma_b), tau)) if tau > 0 else 0.0
        d1 = fb_xs - (1.0 - pb) * fb_tau
        lst_xs = float(self._tail_logsf(p, xs))
        with np.errstate(divide="ignore", over="ignore"):
            d2 = (1.0 - pb) * (fb_xs - fb_tau) / (d1 * math.exp(lst_xs)) if d1 > 0 else np.inf
        return d1, d2, lst_xs

    def _log_body_mass_above_tau(self, p):
        """log(Fb(x_s) - Fb(tau)); the denominator of both conditional pieces."""
        mu_b, sigma_b, _, _, xs, pb, tau = p
        hi = float(_LOGNORMAL.logsf((mu_b, sigma_b), tau)) if tau > 0 else 0.0
        lo = float(_LOGNORMAL.logsf((mu_b, sigma_b), xs))
        if not hi > lo:
            return -np.inf
        return hi + math.log(-math.expm1(lo - hi))

    def logpdf(self, p, x):
        x = _asarray(x)
        mu_b, sigma_b, _, _, xs, pb, tau = p
        d1, d2, lst_xs = self.constants(p)
        with np.errstate(divide="ignore", invalid="ignore"):
            body = math.log(pb) - math.log(d1) + _LOGNORMAL.logpdf((mu_b, sigma_b), x)
            # log D2 written through its definition to keep it finite when S_t(x_s) is tiny
            log_d2 = math.log1p(-pb) + self._log_body_mass_above_tau(p) - math.log(d1) - lst_xs
            tail = log_d2 + self._tail_logpdf(p, x)
        return np.where(x <= xs, body, tail)

    def cdf(self, p, x):
        x = _asarray(x)
        mu_b, sigma_b, _, _, xs, pb, tau = p
        d1, d2, lst_xs = self.constants(p)
        body = pb * _LOGNORMAL.cdf((mu_b, sigma_b), x) / d1
        return np.where(x <= xs, body, 1.0 - self.sf(p, x))

    def sf(self, p, x):
        x = _asarray(x)
        mu_b, sigma_b, _, _, xs, pb, tau = p
        d1, d2, lst_xs = self.constants(p)
        body = 1.0 - pb * _LOGNORMAL.cdf((mu_b, sigma_b), x) / d1
        log_d2 = math.log1p(-pb) + self._log_body_mass_above_tau(p) - math.log(d1) - lst_xs
        with np.errstate(over="ignore"):
            tail = np.exp(log_d2 + self._tail_logsf(p, x))
        return np.where(x <= xs, body, tail)

    def ppf(self, p, u):
        u = _asarray(u)
        mu_b, sigma_b, t1, t2, xs, pb, tau = p
        d1, d2, lst_xs = self.constants(p)
        f_xs = pb * float(_LOGNORMAL.cdf((mu_b, sigma_b), xs)) / d1
        log_d2 = math.log1p(-pb) + self._log_body_mass_above_tau(p) - math.log(d1) - lst_xs
        with np.errstate(all="ignore"):
            body = _LOGNORMAL.ppf((mu_b, sigma_b), np.clip(u * d1 / pb, 0.0, 1.0))
            # tail survival needed: (1 - u) / D2
            s_t = np.exp(np.log1p(-u) - log_d2)
            if self.gpd_tail:
                tail = xs + gpd_isf(s_t, t1, t2)
            else:
                tail = np.exp(t1 + t2 * -special.ndtri(np.clip(s_t, 0.0, 1.0)))
        return np.where(u <= f_xs, body, np.maximum(tail, xs))

    def tail_class(self, p):
        if not self.gpd_tail:
            return TailClass.SUB_EXPONENTIAL
        return _GPD_IMPL.tail_class((0.0, p[2], p[3]))

    def unpack(self, free, tau):
        raise TypeError("spliced parameters are assembled by the spliced fitter")

    def start(self, x, tau):
        raise TypeError("spliced families are fitted on a splicing-point grid")


_LOGNORMAL = _Lognormal()
_GPD_IMPL = _GPD()
_IMPLS = {
    Family.LOGNORMAL: _LOGNORMAL,
    Family.GPD: _GPD_IMPL,
    Family.BURR: _Burr(),
    Family.WEIBULL: _Weibull(),
    Family.LOGLOGISTIC: _Loglogistic(),
    Family.GANDH: _GandH(),
    Family.LOGSAS: _LogSaS(),
    Family.SPLICED_LN_LN: _Spliced(gpd_tail=False),
    Family.SPLICED_LN_GPD: _Spliced(gpd_tail=True),
}

SPLICED = (Family.SPLICED_LN_LN, Family.SPLICED_LN_GPD)


@dataclass(frozen=True)
class SeverityModel:
    """An immutable (family, parameters) pair with the distribution interface."""

    family: Family
    params: tuple

    def __post_init__(self):
        params = tuple(float(v) for v in self.params)
        impl = self.family.impl
        if len(params) != impl.n_params:
            raise ParameterDomainError(
                f"{self.family.value} takes {impl.n_params} parameters, got {len(params)}"
            )
        impl.validate(params)
        object.__setattr__(self, "params", params)

    @property
    def impl(self) -> _FamilyImpl:
        return self.family.impl

    @property
    def names(self) -> tuple:
        return self.impl.names

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.params))

    def logpdf(self, x):
        return self.impl.logpdf(self.params, x)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        return self.impl.cdf(self.params, x)

    def sf(self, x):
        return self.impl.sf(self.params, x)

    def logcdf(self, x):
        return self.impl.logcdf(self.params, x)

    def logsf(self, x):
        return self.impl.logsf(self.params, x)

    def quantile(self, p):
        p_arr = _asarray(p)
        if np.any(~((p_arr > 0) & (p_arr < 1))):
            raise ValueError("quantile levels must lie strictly inside (0, 1)")
        out = self.impl.ppf(self.params, p_arr)
        return float(out) if np.ndim(p) == 0 else out

    def sample(self, n: int, rng: np.random.Generator, positive_only: bool = False):
        """Draw ``n`` i.i.d. severities.

        With ``positive_only`` non-positive draws are rejected and redrawn;
        the method then returns ``(draws, rejection_fraction)``.
        """
        if n < 0:
            raise ValueError("n must be nonnegative")
        if not positive_only:
            return self.impl.sample(self.params, n, rng)
        kept = []
        have = drawn = rejected = 0
        while have < n:
            batch = self.impl.sample(self.params, max(n - have, 1024), rng)
            pos = batch[batch > 0]
            drawn += batch.size
            rejected += batch.size - pos.size
            kept.append(pos[: n - have])
            have += kept[-1].size
        out = np.concatenate(kept) if kept else np.empty(0)
        frac = rejected / drawn if drawn else 0.0
        return out, frac

    def tail_class(self) -> TailClass:
        return self.impl.tail_class(self.params)

    def lower_support(self) -> float:
        return self.impl.lower_support(self.params)


def cdf(family: Family, params: Sequence[float], x):
    return SeverityModel(family, tuple(params)).cdf(x)


def quantile(family: Family, params: Sequence[float], p):
    return SeverityModel(family, tuple(params)).quantile(p)


def sample(family: Family, params: Sequence[float], n: int, rng: np.random.Generator):
    return SeverityModel(family, tuple(params)).sample(n, rng)


def tail_class(family: Family, params: Sequence[float]) -> TailClass:
    return SeverityModel(family, tuple(params)).tail_class()


def gh_inverse_transform(params: Sequence[float], x):
    """The z solving ``a + b * A_{g,h}(z) = x``."""
    a, b, g, h = params
    _GandH().validate(tuple(params))
    out = kernels.gh_inverse(_asarray(x), a, b, g, h)
    return float(out[0]) if np.ndim(x) == 0 else out.reshape(np.shape(x))


class Mixture:
    """Two-component severity mixture used only as a data generator.

    Each draw picks the first component with probability ``weight``.
    """

    def __init__(self, weight: float, first: SeverityModel, second: SeverityModel):
        if not 0.0 <= weight <= 1.0:
            raise ParameterDomainError("mixture weight must lie in [0, 1]")
        self.weight = float(weight)
        self.first = first
        self.second = second

    def cdf(self, x):
        return self.weight * self.first.cdf(x) + (1.0 - self.weight) * self.second.cdf(x)

    def sf(self, x):
        return self.weight * self.first.sf(x) + (1.0 - self.weight) * self.second.sf(x)

    def pdf(self, x):
        return self.weight * self.first.pdf(x) + (1.0 - self.weight) * self.second.pdf(x)

    def quantile(self, p):
        from scipy.optimize import brentq

        def one(level):
            lo, hi = min(self.first.quantile(level), self.second.quantile(level)), max(
                self.first.quantile(level), self.second.quantile(level)
            )
            if lo == hi:
                return lo
            return brentq(lambda x: float(self.cdf(x)) - level, lo, hi, xtol=1e-14, rtol=1e-14)

        if np.ndim(p) == 0:
            return one(float(p))
        return np.array([one(float(v)) for v in np.ravel(p)]).reshape(np.shape(p))

    def sample(self, n: int, rng: np.random.Generator):
        pick = rng.random(n) < self.weight
        out = np.empty(n)
        k = int(pick.sum())
        out[pick] = self.first.sample(k, rng)
        out[~pick] = self.second.sample(n - k, rng)
        return out
