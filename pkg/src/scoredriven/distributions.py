"""Conditional densities available to score-driven models.

Each distribution exposes its log-density, analytic score, expected Fisher
information, a sampler, its first two moments and a static maximum-likelihood
fit. Parameter order is fixed per distribution:

====================  ===========================  ==================
Distribution          Parameters (in order)        Scalings
====================  ===========================  ==================
Beta                  alpha, beta                  0, 1/2, 1
BetaLocationScale     a, c, alpha, beta            0
Exponential           lambda (rate)                0, 1/2, 1
Gamma                 alpha (shape), k (scale)     0, 1/2, 1
LogitNormal           mu, sigma2                   0, 1/2, 1
LogNormal             mu, sigma2                   0, 1/2, 1
NegativeBinomial      r, p                         0
Normal                mu, sigma2                   0, 1/2, 1
Poisson               lambda                       0, 1/2, 1
TDist                 nu                           0, 1/2, 1
TDistLocationScale    mu, sigma2, nu               0, 1/2, 1
Weibull               lambda (scale), k (shape)    0
====================  ===========================  ==================

Time-varying masks refer to these positions (1-based).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from scoredriven import _kernels as K
from scoredriven.errors import DegenerateData, DomainError, UnsupportedScaling
from scoredriven.links import IdentityLink, Link, LogitLink, LogLink

__all__ = [
    "Distribution",
    "Domain",
    "DISTRIBUTIONS",
    "get_distribution",
    "Beta",
    "BetaLocationScale",
    "Exponential",
    "Gamma",
    "LogitNormal",
    "LogNormal",
    "NegativeBinomial",
    "Normal",
    "Poisson",
    "TDist",
    "TDistLocationScale",
    "Weibull",
]

ALL_SCALINGS = frozenset({0.0, 0.5, 1.0})
IDENTITY_ONLY = frozenset({0.0})


@dataclass(frozen=True)
class Domain:
    """Open parameter domain ``(lower, upper)``."""

    lower: float = -math.inf
    upper: float = math.inf

    @property
    def kind(self) -> str:
        if math.isinf(self.lower) and math.isinf(self.upper):
            return "real"
        if math.isinf(self.upper):
            return "halfline"
        return "interval"

    def contains(self, x) -> bool:
        return bool(self.lower < x < self.upper)

    def default_link(self) -> Link:
        kind = self.kind
        if kind == "real":
            return IdentityLink()
        if kind == "halfline":
            return LogLink(self.lower)
        return LogitLink(self.lower, self.upper)


REAL = Domain()
POSITIVE = Domain(0.0)
UNIT = Domain(0.0, 1.0)


class Distribution:
    """Base class; concrete distributions are module-level singletons."""

    name: str = ""
    code: int = -1
    param_names: tuple = ()
    domains: tuple = ()
    supported_scalings: frozenset = ALL_SCALINGS
    discrete: bool = False

    def __repr__(self):
        return self.name

    def __reduce__(self):
        return (get_distribution, (self.name,))

    @property
    def num_params(self) -> int:
        return len(self.param_names)

    @property
    def default_links(self) -> tuple:
        return tuple(d.default_link() for d in self.domains)

    def supports_scaling(self, d) -> bool:
        return float(d) in self.supported_scalings

    # -- validation ------------------------------------------------------

    def check_params(self, params) -> np.ndarray:
        p = np.asarray(params, dtype=float).reshape(-1)
        if p.shape[0] != self.num_params:
            raise DomainError(f"{self.name} takes {self.num_params} parameters, got {p.shape[0]}")
        for name, dom, v in zip(self.param_names, self.domains, p):
            if not dom.contains(v):
                raise DomainError(f"{self.name}: {name}={v} outside ({dom.lower}, {dom.upper})")
        if not K.params_valid(self.code, p):
            raise DomainError(f"{self.name}: invalid parameters {p.tolist()}")
        return p

    def _in_support(self, y, params):
        raise NotImplementedError

    def in_support(self, y, params=None) -> np.ndarray:
        """Elementwise support test. ``params`` only matters for BetaLocationScale."""
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(y)
        if self.discrete:
            ok &= (y >= 0) & (np.abs(y - np.round(y)) <= 1e-9)
        return ok & self._in_support(y, params)

    def check_support(self, y, params=None) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        ok = self.in_support(y, params)
        if not np.all(ok):
            bad = np.atleast_1d(y)[~np.atleast_1d(ok)][0]
            raise DomainError(f"observation {bad} outside the support of {self.name}")
        if self.discrete:
            y = np.round(y)
        return y

    # -- density, score, information -------------------------------------

    def log_pdf(self, params, y):
        """Log-density at ``y`` (scalar or array)."""
        p = self.check_params(params)
        y = self.check_support(y, p)
        if y.ndim == 0:
            return float(K.log_pdf(self.code, p, float(y)))
        out = np.empty(y.shape[0])
        K.log_pdf_many(self.code, p, np.ascontiguousarray(y, dtype=float), out)
        return out

    def score(self, params, y) -> np.ndarray:
        """Gradient of the log-density w.r.t. the parameters.

        Scalar ``y`` gives shape ``(k,)``, a vector gives ``(n, k)``.
        """
        p = self.check_params(params)
        y = self.check_support(y, p)
        if y.ndim == 0:
            out = np.empty(self.num_params)
            K.score(self.code, p, float(y), out)
            return out
        out = np.empty((y.shape[0], self.num_params))
        K.score_many(self.code, p, np.ascontiguousarray(y, dtype=float), out)
        return out

    def fisher_information(self, params) -> np.ndarray:
        if self.supported_scalings == IDENTITY_ONLY:
            raise UnsupportedScaling(
                f"{self.name} only supports identity scaling; no Fisher information is available"
            )
        p = self.check_params(params)
        out = np.empty((self.num_params, self.num_params))
        K.fisher(self.code, p, out)
        return out

    # -- simulation and moments ------------------------------------------

    def sample(self, params, rng: np.random.Generator, size=None):
        p = self.check_params(params)
        return self._sample(p, rng, size)

    def _sample(self, p, rng, size):
        raise NotImplementedError

    def mean(self, params) -> float:
        return self._mean(self.check_params(params))

    def var(self, params) -> float:
        return self._var(self.check_params(params))

    # -- static fit ------------------------------------------------------

    def static_mle(self, data) -> np.ndarray:
        """Constant-parameter maximum likelihood estimate over ``data``."""
        y = np.asarray(data, dtype=float).reshape(-1)
        if y.size == 0:
            raise DegenerateData("static_mle needs at least one observation")
        y = self.check_support(y)
        return self._static_mle(y)

    def _static_mle(self, y):
        return self._numerical_mle(y, self._moment_start(y))

    def _moment_start(self, y):
        raise NotImplementedError

    def _numerical_mle(self, y, x0, links=None, bounds=None):
        """Maximise the static likelihood over linked parameters with L-BFGS-B."""
        links = links or self.default_links
        ys = np.ascontiguousarray(y, dtype=float)
        n, k = ys.shape[0], self.num_params
        lp = np.empty(n)
        sc = np.empty((n, k))

        def unpack(x):
            return np.array([lk.unlink(v) for lk, v in zip(links, x)])

        def nll(x):
            p = unpack(x)
            if not K.params_valid(self.code, p) or not np.all(self._in_support(ys, p)):
                return np.inf, np.zeros(k)
            K.log_pdf_many(self.code, p, ys, lp)
            K.score_many(self.code, p, ys, sc)
            total = lp.sum()
            if not np.isfinite(total):
                return np.inf, np.zeros(k)
            jac = np.array([lk.jacobian(v) for lk, v in zip(links, p)])
            return -total, -sc.sum(axis=0) / jac

        x0 = np.array([lk.link(v) for lk, v in zip(links, x0)])
        res = optimize.minimize(nll, x0, jac=True, method="L-BFGS-B", bounds=bounds)
        if not np.isfinite(res.fun):
            raise DegenerateData(f"static fit of {self.name} failed: {res.message}")
        return unpack(res.x)


def _require_spread(y, name):
    if np.ptp(y) == 0.0:
        raise DegenerateData(f"{name}: data has zero variance, scale parameter is not identified")


class Beta(Distribution):
    name = "Beta"
    code = K.BETA
    param_names = ("alpha", "beta")
    domains = (POSITIVE, POSITIVE)

    def _in_support(self, y, params):
        return (y > 0) & (y < 1)

    def _sample(self, p, rng, size):
        return rng.beta(p[0], p[1], size)

    def _mean(self, p):
        return p[0] / (p[0] + p[1])

    def _var(self, p):
        s = p[0] + p[1]
        return p[0] * p[1] / (s * s * (s + 1))

    def _moment_start(self, y):
        _require_spread(y, self.name)
        m, v = y.mean(), y.var()
        c = max(m * (1 - m) / v - 1, 1e-2)
        return np.array([m * c, (1 - m) * c])


class BetaLocationScale(Distribution):
    name = "BetaLocationScale"
    code = K.BETA_LS
    param_names = ("a", "c", "alpha", "beta")
    domains = (REAL, REAL, POSITIVE, POSITIVE)
    supported_scalings = IDENTITY_ONLY

    def _in_support(self, y, params):
        if params is None:
            return np.ones(np.shape(y), dtype=bool)
        return (y > params[0]) & (y < params[1])

    def _sample(self, p, rng, size):
        return p[0] + (p[1] - p[0]) * rng.beta(p[2], p[3], size)

    def _mean(self, p):
        return p[0] + (p[1] - p[0]) * p[2] / (p[2] + p[3])

    def _var(self, p):
        s = p[2] + p[3]
        return (p[1] - p[0]) ** 2 * p[2] * p[3] / (s * s * (s + 1))

    def _static_mle(self, y):
        _require_spread(y, self.name)
        lo, hi = y.min(), y.max()
        pad = 1e-6 * (hi - lo)
        span = hi - lo
        u = (y - lo + 0.05 * span) / (1.1 * span)
        m, v = u.mean(), u.var()
        c = max(m * (1 - m) / v - 1, 1e-2)
        x0 = np.array([lo - 0.05 * span, hi + 0.05 * span, m * c, (1 - m) * c])
        links = (IdentityLink(), IdentityLink(), LogLink(0.0), LogLink(0.0))
        bounds = [(None, lo - pad), (hi + pad, None), (None, None), (None, None)]
        return self._numerical_mle(y, x0, links=links, bounds=bounds)


class Exponential(Distribution):
    name = "Exponential"
    code = K.EXPONENTIAL
    param_names = ("lambda",)
    domains = (POSITIVE,)

    def _in_support(self, y, params):
        return y > 0

    def _sample(self, p, rng, size):
        return rng.exponential(1.0 / p[0], size)

    def _mean(self, p):
        return 1.0 / p[0]

    def _var(self, p):
        return 1.0 / p[0] ** 2

    def _static_mle(self, y):
        return np.array([1.0 / y.mean()])


class Gamma(Distribution):
    name = "Gamma"
    code = K.GAMMA
    param_names = ("alpha", "k")
    domains = (POSITIVE, POSITIVE)

    def _in_support(self, y, params):
        return y > 0

    def _sample(self, p, rng, size):
        return rng.gamma(p[0], p[1], size)

    def _mean(self, p):
        return p[0] * p[1]

    def _var(self, p):
        return p[0] * p[1] ** 2

    def _moment_start(self, y):
        _require_spread(y, self.name)
        m, v = y.mean(), y.var()
        return np.array([m * m / v, v / m])


class _GaussianTransform(Distribution):
    """Normal-family densities whose MLE is the Gaussian MLE of a transform."""

    param_names = ("mu", "sigma2")
    domains = (REAL, POSITIVE)

    @staticmethod
    def _transform(y):
        return y

    def _static_mle(self, y):
        z = self._transform(y)
        _require_spread(z, self.name)
        return np.array([z.mean(), z.var()])


class LogitNormal(_GaussianTransform):
    name = "LogitNormal"
    code = K.LOGIT_NORMAL

    @staticmethod
    def _transform(y):
        return special.logit(y)

    def _in_support(self, y, params):
        return (y > 0) & (y < 1)

    def _sample(self, p, rng, size):
        return special.expit(rng.normal(p[0], math.sqrt(p[1]), size))

    def _raw_moment(self, p, order):
        # no closed form; integrate over the underlying normal
        sd = math.sqrt(p[1])

        def integrand(z):
            return special.expit(p[0] + sd * z) ** order * math.exp(-0.5 * z * z)

        val, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12)
        return val / math.sqrt(2 * math.pi)

    def _mean(self, p):
        return self._raw_moment(p, 1)

    def _var(self, p):
        m = self._raw_moment(p, 1)
        return self._raw_moment(p, 2) - m * m


class LogNormal(_GaussianTransform):
    name = "LogNormal"
    code = K.LOG_NORMAL

    @staticmethod
    def _transform(y):
        return np.log(y)

    def _in_support(self, y, params):
        return y > 0

    def _sample(self, p, rng, size):
        return rng.lognormal(p[0], math.sqrt(p[1]), size)

    def _mean(self, p):
        return math.exp(p[0] + p[1] / 2)

    def _var(self, p):
        return math.expm1(p[1]) * math.exp(2 * p[0] + p[1])


class NegativeBinomial(Distribution):
    """Number of failures before the r-th success, success probability p."""

    name = "NegativeBinomial"
    code = K.NEG_BINOMIAL
    param_names = ("r", "p")
    domains = (POSITIVE, UNIT)
    supported_scalings = IDENTITY_ONLY
    discrete = True

    def _in_support(self, y, params):
        return np.ones(np.shape(y), dtype=bool)

    def _sample(self, p, rng, size):
        return np.asarray(rng.negative_binomial(p[0], p[1], size), dtype=float)[()]

    def _mean(self, p):
        return p[0] * (1 - p[1]) / p[1]

    def _var(self, p):
        return p[0] * (1 - p[1]) / p[1] ** 2

    def _moment_start(self, y):
        _require_spread(y, self.name)
        m, v = y.mean(), y.var()
        if m == 0:
            raise DegenerateData("NegativeBinomial: all observations are zero")
        if v > m:
            q = m / v
            return np.array([m * q / (1 - q), q])
        # under-dispersed data: the MLE sits at r -> inf, start far out
        return np.array([100.0 * m, 100.0 / 101.0])


class Normal(_GaussianTransform):
    name = "Normal"
    code = K.NORMAL

    def _in_support(self, y, params):
        return np.ones(np.shape(y), dtype=bool)

    def _sample(self, p, rng, size):
        return rng.normal(p[0], math.sqrt(p[1]), size)

    def _mean(self, p):
        return p[0]

    def _var(self, p):
        return p[1]


class Poisson(Distribution):
    name = "Poisson"
    code = K.POISSON
    param_names = ("lambda",)
    domains = (POSITIVE,)
    discrete = True

    def _in_support(self, y, params):
        return np.ones(np.shape(y), dtype=bool)

    def _sample(self, p, rng, size):
        return np.asarray(rng.poisson(p[0], size), dtype=float)[()]

    def _mean(self, p):
        return p[0]

    def _var(self, p):
        return p[0]

    def _static_mle(self, y):
        m = y.mean()
        if m == 0:
            raise DegenerateData("Poisson: all observations are zero")
        return np.array([m])


class TDist(Distribution):
    name = "TDist"
    code = K.TDIST
    param_names = ("nu",)
    domains = (POSITIVE,)

    def _in_support(self, y, params):
        return np.ones(np.shape(y), dtype=bool)

    def _sample(self, p, rng, size):
        return rng.standard_t(p[0], size)

    def _mean(self, p):
        return 0.0 if p[0] > 1 else math.nan

    def _var(self, p):
        nu = p[0]
        if nu > 2:
            return nu / (nu - 2)
        return math.inf if nu > 1 else math.nan

    def _moment_start(self, y):
        return np.array([5.0])


class TDistLocationScale(Distribution):
    name = "TDistLocationScale"
    code = K.TDIST_LS
    param_names = ("mu", "sigma2", "nu")
    domains = (REAL, POSITIVE, POSITIVE)

    def _in_support(self, y, params):
        return np.ones(np.shape(y), dtype=bool)

    def _sample(self, p, rng, size):
        return p[0] + math.sqrt(p[1]) * rng.standard_t(p[2], size)

    def _mean(self, p):
        return p[0] if p[2] > 1 else math.nan

    def _var(self, p):
        nu = p[2]
        if nu > 2:
            return p[1] * nu / (nu - 2)
        return math.inf if nu > 1 else math.nan

    def _moment_start(self, y):
        _require_spread(y, self.name)
        return np.array([np.median(y), 0.6 * y.var(), 5.0])


class Weibull(Distribution):
    name = "Weibull"
    code = K.WEIBULL
    param_names = ("lambda", "k")
    domains = (POSITIVE, POSITIVE)
    supported_scalings = IDENTITY_ONLY

    def _in_support(self, y, params):
        return y > 0

    def _sample(self, p, rng, size):
        return p[0] * rng.weibull(p[1], size)

    def _mean(self, p):
        return p[0] * math.gamma(1 + 1 / p[1])

    def _var(self, p):
        g1 = math.gamma(1 + 1 / p[1])
        return p[0] ** 2 * (math.gamma(1 + 2 / p[1]) - g1 * g1)

    def _moment_start(self, y):
        _require_spread(y, self.name)
        ly = np.log(y)
        k = 1.2 / ly.std()
        return np.array([math.exp(ly.mean() + 0.5772 / k), k])


DISTRIBUTIONS = {
    cls.name: cls()
    for cls in (
        Beta,
        BetaLocationScale,
        Exponential,
        Gamma,
        LogitNormal,
        LogNormal,
        NegativeBinomial,
        Normal,
        Poisson,
        TDist,
        TDistLocationScale,
        Weibull,
    )
}

_ALIASES = {
    "beta-ls": "BetaLocationScale",
    "betals": "BetaLocationScale",
    "exp": "Exponential",
    "negbin": "NegativeBinomial",
    "nb": "NegativeBinomial",
    "t": "TDist",
    "tdist-ls": "TDistLocationScale",
    "tdistls": "TDistLocationScale",
    "t-ls": "TDistLocationScale",
}


def get_distribution(name) -> Distribution:
    """Look up a distribution by canonical name or a short alias (case-insensitive)."""
    if isinstance(name, Distribution):
        return name
    key = str(name).strip()
    lowered = {k.lower(): v for k, v in DISTRIBUTIONS.items()}
    if key.lower() in lowered:
        return lowered[key.lower()]
    if key.lower() in _ALIASES:
        return DISTRIBUTIONS[_ALIASES[key.lower()]]
    raise ValueError(f"unknown distribution {name!r}; choose from {', '.join(DISTRIBUTIONS)}")
