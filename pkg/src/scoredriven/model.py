"""GAS(p, q) model definition and the score-driven filtering recursion.

The recursion runs in linked space::

    f~[t+1] = omega + sum_i A_i s~[t-i+1] + sum_j B_j f~[t-j+1]

with ``f = unlink(f~)`` and ``s~`` the linked scaled score. The first
``m = max lag`` periods are seeded from initial parameters; their scores are
computed from the data but their log-densities do not enter the total.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from scoredriven import _kernels as K
from scoredriven.distributions import Distribution, get_distribution
from scoredriven.errors import (
    DegenerateData,
    DomainError,
    FilterDivergence,
    NonstationaryB,
    UnsupportedScaling,
)
from scoredriven.links import Link, link_arrays

__all__ = [
    "ModelSpec",
    "Coefficients",
    "FilterResult",
    "update_step",
    "filter_series",
    "unconditional_mean_init",
    "dynamic_initial_params",
    "simulate_series",
]

_STATUS_TEXT = {
    K.NONFINITE: "non-finite value",
    K.SINGULAR: "singular Fisher information",
    K.JACOBIAN_BLOWUP: "link Jacobian blew up near the domain boundary",
    K.OUT_OF_DOMAIN: "parameter left its domain",
}


def _normalize_lags(lags, what) -> tuple:
    if isinstance(lags, (int, np.integer)):
        if lags < 1:
            raise ValueError(f"{what} must be >= 1, got {lags}")
        return tuple(range(1, int(lags) + 1))
    out = [int(v) for v in lags]
    if not out:
        raise ValueError(f"{what} must not be empty")
    if any(v < 1 for v in out):
        raise ValueError(f"{what} must be positive integers, got {out}")
    if len(set(out)) != len(out):
        raise ValueError(f"{what} contains duplicates: {out}")
    return tuple(sorted(out))


class ModelSpec:
    """Score-driven model definition.

    Parameters
    ----------
    dist : Distribution or str
        Conditional distribution.
    p, q : int or sequence of int
        Score and autoregressive lags. An integer ``n`` means lags ``1..n``;
        a sequence lists the lags explicitly (e.g. ``[1, 12]``).
    scaling : {0, 0.5, 1}
        Exponent d of the inverse Fisher information scaling.
    time_varying : sequence of int, optional
        1-based indices of the time-varying parameters. Defaults to all.
    links : sequence of Link, optional
        Per-parameter link overrides. Defaults to the distribution's links.
    """

    def __init__(self, dist, p=1, q=1, scaling=0.0, time_varying=None, links=None):
        self.dist: Distribution = get_distribution(dist)
        self.score_lags = _normalize_lags(p, "score lags")
        self.ar_lags = _normalize_lags(q, "autoregressive lags")
        scaling = float(scaling)
        if scaling not in (0.0, 0.5, 1.0):
            raise ValueError(f"scaling must be 0, 0.5 or 1, got {scaling}")
        if not self.dist.supports_scaling(scaling):
            raise UnsupportedScaling(
                f"scaling {scaling:g} is not supported by {self.dist.name}; "
                f"supported: {', '.join(f'{d:g}' for d in sorted(self.dist.supported_scalings))}"
            )
        self.scaling = scaling
        k = self.dist.num_params
        if time_varying is None:
            tv = tuple(range(1, k + 1))
        else:
            tv = tuple(sorted({int(i) for i in time_varying}))
            if not tv:
                raise ValueError("at least one parameter must be time-varying")
            if tv[0] < 1 or tv[-1] > k:
                raise ValueError(f"time-varying indices must lie in 1..{k}, got {list(tv)}")
        self.time_varying = tv
        if links is None:
            links = self.dist.default_links
        links = tuple(links)
        if len(links) != k:
            raise ValueError(f"{self.dist.name} needs {k} links, got {len(links)}")
        if not all(isinstance(lk, Link) for lk in links):
            raise TypeError("links must be Link instances")
        self.links = links
        self._kinds, self._la, self._lb = link_arrays(links)

    @property
    def k(self) -> int:
        return self.dist.num_params

    @property
    def max_lag(self) -> int:
        return max(self.score_lags + self.ar_lags)

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.k, dtype=bool)
        m[np.array(self.time_varying) - 1] = True
        return m

    def __eq__(self, other):
        if not isinstance(other, ModelSpec):
            return NotImplemented
        return (
            self.dist is other.dist
            and self.score_lags == other.score_lags
            and self.ar_lags == other.ar_lags
            and self.scaling == other.scaling
            and self.time_varying == other.time_varying
            and self.links == other.links
        )

    def __repr__(self):
        return (
            f"ModelSpec({self.dist.name}, p={list(self.score_lags)}, q={list(self.ar_lags)}, "
            f"scaling={self.scaling:g}, time_varying={list(self.time_varying)})"
        )


@dataclass
class Coefficients:
    """omega plus diagonal A_i / B_j matrices keyed by lag.

    Unknown entries are NaN; rows of constant parameters are exactly zero.
    """

    omega: np.ndarray
    A: Dict[int, np.ndarray]
    B: Dict[int, np.ndarray]

    @classmethod
    def unset(cls, spec: ModelSpec) -> "Coefficients":
        k = spec.k
        diag = np.where(spec.mask, np.nan, 0.0)
        return cls(
            omega=np.full(k, np.nan),
            A={lag: np.diag(diag) for lag in spec.score_lags},
            B={lag: np.diag(diag) for lag in spec.ar_lags},
        )

    @classmethod
    def from_diagonals(cls, spec: ModelSpec, omega, A, B) -> "Coefficients":
        """Build from diagonals given as ``{lag: length-k vector}`` (or a scalar for k == 1)."""

        def mats(d, lags):
            out = {}
            for lag in lags:
                v = np.broadcast_to(np.asarray(d[lag], dtype=float), (spec.k,))
                out[lag] = np.diag(np.where(spec.mask, v, 0.0))
            return out

        return cls(
            np.asarray(omega, dtype=float).reshape(spec.k).copy(),
            mats(A, spec.score_lags),
            mats(B, spec.ar_lags),
        )

    def is_set(self) -> bool:
        arrays = [self.omega, *self.A.values(), *self.B.values()]
        return all(np.all(np.isfinite(a)) for a in arrays)

    def check(self, spec: ModelSpec):
        if sorted(self.A) != list(spec.score_lags) or sorted(self.B) != list(spec.ar_lags):
            raise ValueError("coefficient lags do not match the model's lag structure")
        if not self.is_set():
            raise ValueError("coefficients contain unset (NaN) entries; estimate the model first")
        off = ~spec.mask
        for mat in (*self.A.values(), *self.B.values()):
            if np.any(mat[off, off] != 0.0):
                raise ValueError("A/B entries of constant parameters must be zero")

    def kernel_arrays(self, spec: ModelSpec):
        a_lags = np.array(spec.score_lags, dtype=np.int64)
        b_lags = np.array(spec.ar_lags, dtype=np.int64)
        A = np.array([np.diag(self.A[lag]) for lag in spec.score_lags], dtype=float)
        B = np.array([np.diag(self.B[lag]) for lag in spec.ar_lags], dtype=float)
        return np.ascontiguousarray(self.omega, dtype=float), A, a_lags, B, b_lags

    def equals(self, other: "Coefficients") -> bool:
        def same(a, b):
            return np.array_equal(a, b, equal_nan=True)

        return (
            same(self.omega, other.omega)
            and self.A.keys() == other.A.keys()
            and self.B.keys() == other.B.keys()
            and all(same(self.A[k], other.A[k]) for k in self.A)
            and all(same(self.B[k], other.B[k]) for k in self.B)
        )


@dataclass
class FilterResult:
    f: np.ndarray
    f_tilde: np.ndarray
    s_tilde: np.ndarray
    loglik_contributions: np.ndarray
    presample: int
    total_loglik: float = field(init=False)

    def __post_init__(self):
        self.total_loglik = float(np.sum(self.loglik_contributions[self.presample :]))


def _as_init(spec: ModelSpec, init) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(init, dtype=float))
    if rows.shape[1] != spec.k:
        raise ValueError(f"initial parameters need {spec.k} columns, got {rows.shape[1]}")
    for row in rows:
        spec.dist.check_params(row)
        for lk, v in zip(spec.links, row):
            if not lk.in_domain(v):
                raise DomainError(f"initial value {v} outside the domain of {lk}")
    return np.ascontiguousarray(rows)


def update_step(spec: ModelSpec, coef: Coefficients, history_f_tilde, history_s_tilde) -> np.ndarray:
    """One step of the linked recursion.

    Histories are ``(n, k)`` arrays ordered oldest to newest; the last row is
    the current period. Lags reaching before the history contribute nothing.
    """
    ftil = np.atleast_2d(np.asarray(history_f_tilde, dtype=float))
    stil = np.atleast_2d(np.asarray(history_s_tilde, dtype=float))
    out = np.array(coef.omega, dtype=float)
    for lag in spec.score_lags:
        if lag <= stil.shape[0]:
            out += coef.A[lag] @ stil[-lag]
    for lag in spec.ar_lags:
        if lag <= ftil.shape[0]:
            out += coef.B[lag] @ ftil[-lag]
    return out


def _raise_divergence(status, t):
    raise FilterDivergence(f"filter diverged at period {t + 1}: {_STATUS_TEXT.get(status, status)}", t)


def _filter_arrays(spec, y, omega, A, a_lags, B, b_lags, init):
    T, k = y.shape[0], spec.k
    f = np.empty((T, k))
    ftil = np.empty((T, k))
    stil = np.empty((T, k))
    ll = np.empty(T)
    status, t = K.run_filter(
        spec.dist.code, y, omega, A, a_lags, B, b_lags,
        spec._kinds, spec._la, spec._lb, spec.scaling, init, spec.max_lag,
        f, ftil, stil, ll,
    )
    return status, t, f, ftil, stil, ll


def filter_series(spec: ModelSpec, coef: Coefficients, y, init=None) -> FilterResult:
    """Run the recursion over ``y`` and collect parameters, scores and log-densities.

    ``init`` defaults to the unconditional mean of the recursion.
    """
    coef.check(spec)
    y = np.ascontiguousarray(spec.dist.check_support(np.asarray(y, dtype=float).reshape(-1)))
    init = unconditional_mean_init(spec, coef) if init is None else _as_init(spec, init)
    status, t, f, ftil, stil, ll = _filter_arrays(spec, y, *coef.kernel_arrays(spec), init)
    if status != K.OK:
        _raise_divergence(status, t)
    return FilterResult(f, ftil, stil, ll, min(spec.max_lag, y.shape[0]))


def stationary_linked_mean(spec: ModelSpec, omega, B_diags) -> np.ndarray:
    """omega (I - sum_j B_j)^-1 for diagonal B_j given as rows of ``B_diags``."""
    M = np.eye(spec.k) - np.diag(np.sum(B_diags, axis=0))
    if np.linalg.cond(M) > 1e12:
        raise NonstationaryB("I - sum(B_j) is singular; unconditional mean undefined")
    return np.linalg.solve(M.T, omega)


def unconditional_mean_init(spec: ModelSpec, coef: Coefficients) -> np.ndarray:
    """Seed every presample row at the stationary mean mapped to natural space."""
    omega, _, _, B, _ = coef.kernel_arrays(spec)
    mean = stationary_linked_mean(spec, omega, B)
    row = np.array([lk.unlink(v) for lk, v in zip(spec.links, mean)])
    if not K.params_valid(spec.dist.code, row):
        raise DomainError(f"unconditional mean {row.tolist()} outside the parameter domain")
    return np.tile(row, (spec.max_lag, 1))


def dynamic_initial_params(y, spec: ModelSpec, period: int = 12) -> np.ndarray:
    """Per-season static fits used as presample parameters.

    Row ``r`` is the static MLE over ``y[r], y[r + period], y[r + 2 period], ...``.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    period = int(period)
    if period < 1:
        raise ValueError("period must be positive")
    if period < spec.max_lag:
        raise ValueError(f"period {period} is shorter than the largest lag {spec.max_lag}")
    if y.shape[0] < 2 * period:
        raise DegenerateData(f"need at least {2 * period} observations, got {y.shape[0]}")
    rows = [spec.dist.static_mle(y[r::period]) for r in range(period)]
    return np.array(rows)


def simulate_series(spec: ModelSpec, coef: Coefficients, init, T: int, rng: np.random.Generator):
    """Draw a path of length ``T`` from the model.

    Returns ``(y, FilterResult)``; filtering ``y`` again reproduces the result.
    """
    coef.check(spec)
    init = unconditional_mean_init(spec, coef) if init is None else _as_init(spec, init)
    omega, A, a_lags, B, b_lags = coef.kernel_arrays(spec)
    k, m, code = spec.k, spec.max_lag, spec.dist.code
    y = np.empty(T)
    f = np.empty((T, k))
    ftil = np.empty((T, k))
    stil = np.empty((T, k))
    ll = np.empty(T)
    ws = K.workspace(k)
    for t in range(T):
        status = K.advance(t, code, omega, A, a_lags, B, b_lags, spec._kinds, spec._la, spec._lb,
                           init, m, ftil, stil, f[t], ftil[t])
        if status != K.OK:
            _raise_divergence(status, t)
        y[t] = spec.dist._sample(f[t], rng, None)
        status, ll[t] = K.observe(code, f[t], y[t], spec._kinds, spec._la, spec._lb, spec.scaling, stil[t], ws)
        if status != K.OK:
            _raise_divergence(status, t)
    return y, FilterResult(f, ftil, stil, ll, min(m, T))
