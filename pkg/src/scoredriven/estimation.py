"""Maximum-likelihood estimation of score-driven models.

The unknowns are flattened into a vector theta laid out as all omega entries,
then the A diagonals by ascending lag, then the B diagonals; only
time-varying parameters get A/B entries. Estimates and standard errors are
reported in this (linked) space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import optimize, stats

from scoredriven import _kernels as K
from scoredriven.errors import AllStartsFailed
from scoredriven.model import Coefficients, ModelSpec, _as_init

__all__ = [
    "ThetaLayout",
    "FitOptions",
    "FitResult",
    "StartLog",
    "Objective",
    "objective",
    "fit",
    "fit_stats",
    "random_starts",
    "numerical_gradient",
    "numerical_hessian",
    "p_value",
    "t_statistics",
]

METHODS = {
    "nm": "nm",
    "neldermead": "nm",
    "nelder-mead": "nm",
    "simplex": "nm",
    "simplexsearch": "nm",
    "lbfgs": "lbfgs",
    "l-bfgs": "lbfgs",
    "quasinewton": "lbfgs",
    "ipnewton": "ipnewton",
    "interiorpoint": "ipnewton",
    "interiorpointboxed": "ipnewton",
}
_METHOD_LABEL = {"nm": "Nelder-Mead", "lbfgs": "L-BFGS", "ipnewton": "interior-point Newton (boxed)"}

# stand-in for +inf where an optimizer needs finite values; see _penalty
_PENALTY = 1e10


class ThetaLayout:
    """Bijection between the flat parameter vector and Coefficients."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        k = spec.k
        tv = [i - 1 for i in spec.time_varying]
        names = [f"omega_{i + 1}" for i in range(k)]
        a_slots, b_slots = [], []
        pos = k
        for n, lag in enumerate(spec.score_lags):
            for i in tv:
                names.append(f"A_{lag}_{i + 1}{i + 1}")
                a_slots.append((n, i, pos))
                pos += 1
        for n, lag in enumerate(spec.ar_lags):
            for i in tv:
                names.append(f"B_{lag}_{i + 1}{i + 1}")
                b_slots.append((n, i, pos))
                pos += 1
        self.names: List[str] = names
        self.size = pos
        self._a = np.array(a_slots, dtype=np.int64).reshape(-1, 3)
        self._b = np.array(b_slots, dtype=np.int64).reshape(-1, 3)
        self.a_lags = np.array(spec.score_lags, dtype=np.int64)
        self.b_lags = np.array(spec.ar_lags, dtype=np.int64)

    def __len__(self):
        return self.size

    def kernel_arrays(self, theta):
        """(omega, A rows, B rows) in the layout the filter kernel expects."""
        theta = np.asarray(theta, dtype=float)
        k = self.spec.k
        A = np.zeros((self.a_lags.shape[0], k))
        B = np.zeros((self.b_lags.shape[0], k))
        A[self._a[:, 0], self._a[:, 1]] = theta[self._a[:, 2]]
        B[self._b[:, 0], self._b[:, 1]] = theta[self._b[:, 2]]
        return np.ascontiguousarray(theta[:k]), A, B

    def to_coefficients(self, theta) -> Coefficients:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.shape[0] != self.size:
            raise ValueError(f"theta has length {theta.shape[0]}, expected {self.size}")
        omega, A, B = self.kernel_arrays(theta)
        return Coefficients(
            omega.copy(),
            {lag: np.diag(A[n]) for n, lag in enumerate(self.spec.score_lags)},
            {lag: np.diag(B[n]) for n, lag in enumerate(self.spec.ar_lags)},
        )

    def from_coefficients(self, coef: Coefficients) -> np.ndarray:
        theta = np.empty(self.size)
        theta[: self.spec.k] = coef.omega
        for n, i, pos in self._a:
            theta[pos] = coef.A[self.spec.score_lags[n]][i, i]
        for n, i, pos in self._b:
            theta[pos] = coef.B[self.spec.ar_lags[n]][i, i]
        return theta


class Objective:
    """Negative log-likelihood as a function of theta.

    Returns ``inf`` whenever the filter diverges or, with the default
    initialization, when the unconditional mean does not exist. Buffers are
    reused between calls, so an instance must not be shared across threads.
    """

    def __init__(self, spec: ModelSpec, y, init=None):
        self.spec = spec
        self.layout = ThetaLayout(spec)
        self.y = np.ascontiguousarray(spec.dist.check_support(np.asarray(y, dtype=float).reshape(-1)))
        if self.y.shape[0] <= spec.max_lag:
            raise ValueError(f"need more than {spec.max_lag} observations, got {self.y.shape[0]}")
        self.init = None if init is None else _as_init(spec, init)
        T, k = self.y.shape[0], spec.k
        self._f = np.empty((T, k))
        self._ftil = np.empty((T, k))
        self._stil = np.empty((T, k))
        self._ll = np.empty(T)
        self._m = spec.max_lag
        self.n_calls = 0

    def stationary_init(self, omega, B):
        """Unconditional-mean rows, or None when I - sum(B) is near singular."""
        d = 1.0 - B.sum(axis=0)
        ad = np.abs(d)
        if not np.all(ad > 0.0) or ad.max() / ad.min() > K.COND_LIMIT:
            return None
        mean = omega / d
        row = np.array([lk.unlink(v) for lk, v in zip(self.spec.links, mean)])
        if not K.params_valid(self.spec.dist.code, row):
            return None
        return np.tile(row, (self._m, 1))

    def __call__(self, theta) -> float:
        self.n_calls += 1
        theta = np.asarray(theta, dtype=float)
        if not np.all(np.isfinite(theta)):
            return math.inf
        omega, A, B = self.layout.kernel_arrays(theta)
        init = self.init
        if init is None:
            init = self.stationary_init(omega, B)
            if init is None:
                return math.inf
        spec = self.spec
        status, _ = K.run_filter(
            spec.dist.code, self.y, omega, A, self.layout.a_lags, B, self.layout.b_lags,
            spec._kinds, spec._la, spec._lb, spec.scaling, init, self._m,
            self._f, self._ftil, self._stil, self._ll,
        )
        if status != K.OK:
            return math.inf
        val = -float(np.sum(self._ll[self._m :]))
        return val if math.isfinite(val) else math.inf


def objective(spec: ModelSpec, y, init, theta) -> float:
    """Negative log-likelihood at ``theta``; ``inf`` on divergence."""
    return Objective(spec, y, init)(theta)


@dataclass
class FitOptions:
    """Optimizer settings.

    Parameters
    ----------
    method : str
        ``"nm"`` (Nelder-Mead), ``"lbfgs"`` or ``"ipnewton"`` (boxed
        interior point; needs ``lower`` and ``upper``).
    n_starts : int
        Number of random starting points when ``initial_points`` is None.
    initial_points : list of arrays, optional
        Explicit starting points; overrides ``n_starts``.
    lower, upper : array, optional
        Bounds on theta.
    tol : float
        Convergence tolerance (simplex spread of objective values for
        Nelder-Mead, projected gradient norm otherwise).
    seed : int, optional
        Seed for the random starting points.
    verbosity : int
        0 silent, 1 per-start log-likelihood, 2 adds the best-start summary,
        3 adds per-iteration objective values.
    max_iter : int
        Iteration cap per start (and per restart for Nelder-Mead).
    """

    method: str = "nm"
    n_starts: int = 3
    initial_points: Optional[Sequence] = None
    lower: Optional[Sequence[float]] = None
    upper: Optional[Sequence[float]] = None
    tol: float = 1e-6
    seed: Optional[int] = None
    verbosity: int = 0
    max_iter: int = 20000

    def __post_init__(self):
        key = str(self.method).lower().replace("_", "")
        if key not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; use nm, lbfgs or ipnewton")
        self.method = METHODS[key]
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if (self.lower is None) != (self.upper is None):
            raise ValueError("give both lower and upper bounds or neither")
        if self.lower is not None:
            lo = np.asarray(self.lower, dtype=float)
            hi = np.asarray(self.upper, dtype=float)
            if lo.shape != hi.shape or np.any(lo >= hi):
                raise ValueError("bounds must have equal length with lower < upper componentwise")
        elif self.method == "ipnewton":
            raise ValueError("ipnewton needs lower and upper bounds")
        if self.verbosity not in (0, 1, 2, 3):
            raise ValueError("verbosity must be 0..3")


@dataclass
class StartLog:
    index: int
    theta0: np.ndarray
    theta: Optional[np.ndarray]
    loglik: float
    success: bool
    message: str
    n_iter: int = 0
    n_fev: int = 0


@dataclass
class FitResult:
    spec: ModelSpec
    layout: ThetaLayout
    theta_hat: np.ndarray
    coefficients: Coefficients
    loglik: float
    n_obs: int
    n_params: int
    std_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    starts: List[StartLog] = field(default_factory=list)
    best_start: int = 0
    method: str = "nm"
    init: Optional[np.ndarray] = None

    @property
    def aic(self) -> float:
        return 2.0 * self.n_params - 2.0 * self.loglik

    @property
    def bic(self) -> float:
        return self.n_params * math.log(self.n_obs) - 2.0 * self.loglik

    @property
    def names(self):
        return self.layout.names


def random_starts(spec: ModelSpec, n: int, seed=None) -> List[np.ndarray]:
    """``n`` starting vectors with entries i.i.d. Uniform(-0.5, 0.5)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    size = ThetaLayout(spec).size
    return [rng.uniform(-0.5, 0.5, size) for _ in range(n)]


def _finite_random_starts(obj, n, seed, max_draws=200):
    """Random starts with a finite objective.

    Draws come from the same seeded Uniform(-0.5, 0.5) stream as
    ``random_starts``; draws where the filter diverges are skipped because
    a simplex started there never leaves the infinite plateau.
    """
    rng = np.random.default_rng(seed)
    out, first = [], []
    for _ in range(max(max_draws, n)):
        x = rng.uniform(-0.5, 0.5, obj.layout.size)
        if len(first) < n:
            first.append(x)
        if math.isfinite(obj(x)):
            out.append(x)
            if len(out) == n:
                return out
    # nothing better found; let the caller report the failures
    return (out + first)[:n]


def numerical_gradient(fun, x, rel_step=1e-7):
    """Central differences with step ``rel_step * (1 + |x_i|)``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.shape[0]):
        h = rel_step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (fun(xp) - fun(xm)) / (xp[i] - xm[i])
    return g


def numerical_hessian(fun, x, rel_step=1e-4):
    """Central-difference Hessian, symmetrized."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    h = rel_step * (1.0 + np.abs(x))
    f0 = fun(x)
    H = np.empty((n, n))

    def at(*moves):
        z = x.copy()
        for i, s in moves:
            z[i] += s * h[i]
        return fun(z)

    for i in range(n):
        H[i, i] = (at((i, 1)) - 2.0 * f0 + at((i, -1))) / (h[i] * h[i])
        for j in range(i):
            v = (at((i, 1), (j, 1)) - at((i, 1), (j, -1)) - at((i, -1), (j, 1)) + at((i, -1), (j, -1)))
            H[i, j] = H[j, i] = v / (4.0 * h[i] * h[j])
    return H


def t_statistics(theta, std_errors):
    """estimate / std error; a zero estimate gets t = 0 whatever its error."""
    theta = np.asarray(theta, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(theta == 0.0, 0.0, theta / np.asarray(std_errors, dtype=float))


def p_value(t, dof):
    """Two-sided Student-t tail probability."""
    return 2.0 * stats.t.sf(np.abs(t), dof)


def _standard_errors(obj, theta):
    H = numerical_hessian(obj, theta)
    n = theta.shape[0]
    nan = np.full(n, np.nan)
    if not np.all(np.isfinite(H)):
        return nan
    try:
        cov = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        return nan
    if np.linalg.cond(H) > 1e14:
        return nan
    d = np.diag(cov)
    return np.where(d > 0.0, np.sqrt(np.abs(d)), np.nan)


def _penalty(f0):
    """Finite value standing in for a diverging filter.

    It must exceed any reachable objective but stay moderate: L-BFGS-B
    measures progress relative to the largest value seen, so an enormous
    penalty makes it declare convergence after the first rejected step.
    """
    if not math.isfinite(f0):
        return _PENALTY
    return max(_PENALTY, 1e3 * (1.0 + abs(f0)))


def _finite(fun, penalty):
    def wrapped(x):
        v = fun(x)
        return v if math.isfinite(v) else penalty

    return wrapped


def _run_start(obj, x0, opts: FitOptions, bounds, log_iter):
    """One optimizer run; returns (x, fun, n_iter, n_fev, success, message)."""
    n = x0.shape[0]
    callback = None
    if log_iter:
        def callback(xk, *args):
            print(f"    iter objective: {obj(xk):.10g}")

    if opts.method == "nm":
        # restart from the optimum until the objective stops improving; a
        # single simplex run often stalls on elongated likelihood surfaces
        x, fx = x0, obj(x0)
        n_iter = n_fev = 0
        res = None
        for _ in range(10):
            res = optimize.minimize(
                obj, x, method="Nelder-Mead", callback=callback,
                options={"fatol": opts.tol, "xatol": 1e-8, "maxiter": opts.max_iter,
                         "maxfev": 2 * opts.max_iter, "adaptive": n > 4},
            )
            n_iter += res.nit
            n_fev += res.nfev
            improved = fx - res.fun if math.isfinite(fx) else math.inf
            if res.fun <= fx:
                x, fx = res.x, res.fun
            if not math.isfinite(fx) or not improved > opts.tol:
                break
        return x, fx, n_iter, n_fev, bool(res.success) and math.isfinite(fx), res.message

    fun = _finite(obj, _penalty(obj(x0)))

    def jac(x):
        return numerical_gradient(fun, x)

    if opts.method == "lbfgs":
        # the line search stalls when a trial step lands on a diverging theta;
        # restarting resets the curvature memory and usually gets it moving
        x, fx = x0, fun(x0)
        n_iter = n_fev = 0
        for _ in range(50):
            res = optimize.minimize(
                fun, x, method="L-BFGS-B", jac=jac, bounds=bounds, callback=callback,
                options={"gtol": opts.tol, "ftol": 1e-15, "maxiter": opts.max_iter},
            )
            n_iter += res.nit
            n_fev += res.nfev
            improved = fx - res.fun
            if res.fun <= fx:
                x, fx = res.x, res.fun
            if not improved > opts.tol or np.max(np.abs(res.jac)) <= opts.tol:
                break
        fx = obj(x)
        ok = math.isfinite(fx) and np.max(np.abs(jac(x))) <= max(opts.tol, 1e-3)
        return x, fx, n_iter, n_fev, bool(ok), str(res.message)
    else:
        res = optimize.minimize(
            fun, x0, method="trust-constr", jac=jac, hess=optimize.BFGS(),
            bounds=bounds, callback=callback,
            options={"gtol": opts.tol, "xtol": 1e-12, "maxiter": opts.max_iter},
        )
    fx = obj(res.x)
    return res.x, fx, int(getattr(res, "nit", 0)), int(res.nfev), bool(res.success) and math.isfinite(fx), str(res.message)


def fit(spec: ModelSpec, y, options: Optional[FitOptions] = None, init=None) -> FitResult:
    """Estimate theta by multi-start numerical optimization.

    Parameters
    ----------
    spec : ModelSpec
    y : array_like
        Observations.
    options : FitOptions, optional
    init : array_like, optional
        Presample parameter rows. When omitted every candidate theta is
        filtered from its own unconditional mean.

    Returns
    -------
    FitResult
        Best start by log-likelihood; ties go to the lowest start index.
    """
    opts = options or FitOptions()
    if opts.lower is not None and opts.method == "nm":
        raise ValueError("bounds need method lbfgs or ipnewton")
    obj = Objective(spec, y, init)
    layout = obj.layout
    n = layout.size
    if opts.initial_points is not None:
        starts = [np.asarray(p, dtype=float).reshape(-1) for p in opts.initial_points]
        if not starts:
            raise ValueError("initial_points is empty")
    else:
        starts = _finite_random_starts(obj, opts.n_starts, opts.seed)
    for s in starts:
        if s.shape[0] != n:
            raise ValueError(f"starting point has length {s.shape[0]}, expected {n} ({', '.join(layout.names)})")

    bounds = None
    if opts.lower is not None:
        lo = np.asarray(opts.lower, dtype=float)
        hi = np.asarray(opts.upper, dtype=float)
        if lo.shape[0] != n:
            raise ValueError(f"bounds have length {lo.shape[0]}, expected {n}")
        bounds = optimize.Bounds(lo, hi, keep_feasible=True)
        # random or user points may sit on or outside the box; move them inside
        pad = 1e-3 * (hi - lo)
        starts = [np.clip(s, lo + pad, hi - pad) for s in starts]

    logs: List[StartLog] = []
    for i, x0 in enumerate(starts):
        try:
            with np.errstate(invalid="ignore", over="ignore"):
                x, fx, nit, nfev, ok, msg = _run_start(obj, x0, opts, bounds, opts.verbosity >= 3)
        except (FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
            x, fx, nit, nfev, ok, msg = None, math.inf, 0, 0, False, str(exc)
        ll = -float(fx) if math.isfinite(fx) else -math.inf
        logs.append(StartLog(i, x0, x, ll, ok, str(msg), nit, nfev))
        if opts.verbosity >= 1:
            if math.isfinite(ll):
                print(f"Round {i + 1} of {len(starts)} - Log-likelihood: {ll!r}")
            else:
                print(f"Round {i + 1} of {len(starts)} - failed: {msg}")

    finite = [lg for lg in logs if math.isfinite(lg.loglik)]
    if not finite:
        raise AllStartsFailed(f"all {len(starts)} starting points diverged")
    best = max(finite, key=lambda lg: (lg.loglik, -lg.index))
    theta = np.asarray(best.theta, dtype=float)

    if opts.verbosity >= 2:
        print()
        print("Best initial_point optimization result:")
        print(f" * Status: {'success' if best.success else 'failure'}")
        print(f" * Algorithm: {_METHOD_LABEL[opts.method]}")
        print(f" * Minimizer: {np.array2string(theta, precision=3)}")
        print(f" * Minimum: {-best.loglik:.6e}")
        print(f" * Initial point: {np.array2string(best.theta0, precision=3)}")
        print(f" * Iterations: {best.n_iter}")
        print(f" * f(x) calls: {best.n_fev}")

    se = _standard_errors(obj, theta)
    tstat = t_statistics(theta, se)
    pv = p_value(tstat, n)
    return FitResult(
        spec=spec,
        layout=layout,
        theta_hat=theta,
        coefficients=layout.to_coefficients(theta),
        loglik=best.loglik,
        n_obs=int(obj.y.shape[0]),
        n_params=n,
        std_errors=se,
        t_stats=tstat,
        p_values=pv,
        starts=logs,
        best_start=best.index,
        method=opts.method,
        init=obj.init,
    )


_RULE = "-" * 56


def fit_stats(result: FitResult) -> str:
    """Text report: model summary followed by the coefficient table."""
    lines = [
        _RULE,
        f"{'Distribution:':<30}{result.spec.dist.name}",
        f"{'Number of observations:':<30}{result.n_obs}",
        f"{'Number of unknown parameters:':<30}{result.n_params}",
        f"{'Log-likelihood:':<30}{result.loglik:.4f}",
        f"{'AIC:':<30}{result.aic:.4f}",
        f"{'BIC:':<30}{result.bic:.4f}",
        _RULE,
        f"{'Parameter':<13}{'Estimate':>10}{'Std.Error':>12}{'t stat':>11}{'p-value':>10}",
    ]
    for name, est, se, t, p in zip(
        result.names, result.theta_hat, result.std_errors, result.t_stats, result.p_values
    ):
        lines.append(f"{name:<13}{est:>10.4f}{se:>12.4f}{t:>11.4f}{p:>10.4f}")
    return "\n".join(lines)
