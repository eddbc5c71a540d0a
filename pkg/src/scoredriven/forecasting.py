"""Simulation-based multi-step forecasts.

Each scenario draws ``y[T+h]`` from the conditional density, feeds its own
draw back through the recursion and repeats for ``h = 1..H``. Scenario ``s``
owns the random stream ``SeedSequence(seed, spawn_key=(s,))`` so results do
not depend on how scenarios are split across threads or calls.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from scoredriven import _kernels as K
from scoredriven.errors import EmptyInput, FilterDivergence
from scoredriven.model import Coefficients, ModelSpec, _as_init, filter_series, unconditional_mean_init

__all__ = ["Forecast", "forecast", "empirical_quantile", "scenario_rng", "DEFAULT_QUANTILES"]

DEFAULT_QUANTILES = (0.025, 0.5, 0.975)
MAX_RETRIES = 10


@dataclass
class Forecast:
    """Forecast output.

    Attributes
    ----------
    parameter_forecast : (H, k) array
        Mean over scenarios of the natural-space parameters.
    parameter_scenarios : (H, k, S) array
    observation_scenarios : (H, S) array
    observation_forecast : (H,) array
        Mean over scenarios of the simulated observations.
    quantiles : dict
        Probability to (H,) array of empirical quantiles of the observations.
    """

    parameter_forecast: np.ndarray
    parameter_scenarios: np.ndarray
    observation_scenarios: np.ndarray
    observation_forecast: np.ndarray
    quantiles: Dict[float, np.ndarray]

    @property
    def horizon(self) -> int:
        return self.observation_scenarios.shape[0]

    @property
    def n_scenarios(self) -> int:
        return self.observation_scenarios.shape[1]


def empirical_quantile(samples, q) -> float:
    """Linear interpolation between order statistics (numpy's default rule)."""
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size == 0:
        raise EmptyInput("cannot take a quantile of an empty sample")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quantile level must lie in [0, 1], got {q}")
    return float(np.quantile(x, q))


def scenario_rng(seed, index: int) -> np.random.Generator:
    """Independent stream for scenario ``index``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(int(index),))))


def _default_threads():
    env = os.environ.get("SDM_THREADS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("SDM_THREADS must be a positive integer")
        return n
    return os.cpu_count() or 1


class _Simulator:
    """Holds the in-sample tail that every scenario starts from."""

    def __init__(self, spec, coef, fr, init, H):
        self.spec = spec
        self.H = H
        self.m = spec.max_lag
        self.T = fr.f.shape[0]
        self.omega, self.A, self.a_lags, self.B, self.b_lags = coef.kernel_arrays(spec)
        self.init = init
        k = spec.k
        # history buffers: the full in-sample path followed by H free rows
        self.ftil0 = np.zeros((self.T + H, k))
        self.stil0 = np.zeros((self.T + H, k))
        self.ftil0[: self.T] = fr.f_tilde
        self.stil0[: self.T] = fr.s_tilde
        # trim to the lags that can still be reached
        keep = min(self.T, self.m)
        self.off = self.T - keep
        self.ftil0 = self.ftil0[self.off :].copy()
        self.stil0 = self.stil0[self.off :].copy()
        self.start = keep

    def run(self, seed, first, count, fpath, ypath):
        """Fill scenarios ``first .. first + count - 1`` into the output slices."""
        spec = self.spec
        code = spec.dist.code
        kinds, la, lb = spec._kinds, spec._la, spec._lb
        k = spec.k
        ws = K.workspace(k)
        # local row r is period off + r; presample rows can only be reached
        # when nothing was trimmed (series shorter than the largest lag)
        m_local = self.m if self.off == 0 else 0
        for j in range(count):
            rng = scenario_rng(seed, first + j)
            for attempt in range(MAX_RETRIES + 1):
                ftil = self.ftil0.copy()
                stil = self.stil0.copy()
                ok = True
                for h in range(self.H):
                    t = self.start + h
                    fo = fpath[h, :, j]
                    f_t = np.empty(k)
                    status = K.advance(t, code, self.omega, self.A, self.a_lags, self.B, self.b_lags,
                                       kinds, la, lb, self.init, m_local, ftil, stil, f_t, ftil[t])
                    if status != K.OK:
                        ok = False
                        break
                    y = float(spec.dist._sample(f_t, rng, None))
                    status, _ = K.observe(code, f_t, y, kinds, la, lb, spec.scaling, stil[t], ws)
                    fo[:] = f_t
                    ypath[h, j] = y
                    if status != K.OK:
                        ok = False
                        break
                if ok:
                    break
            else:
                raise FilterDivergence(
                    f"scenario {first + j} diverged {MAX_RETRIES + 1} times; the fitted coefficients look unstable",
                    None,
                )


def forecast(
    y,
    spec: ModelSpec,
    coef: Coefficients,
    H: int,
    S: int = 10000,
    init=None,
    seed=None,
    quantiles: Sequence[float] = DEFAULT_QUANTILES,
    threads: Optional[int] = None,
    first_scenario: int = 0,
) -> Forecast:
    """Simulate ``S`` future paths of length ``H`` after the observed ``y``.

    Parameters
    ----------
    y : array_like
        In-sample observations; the filter is run over them first.
    spec, coef : ModelSpec, Coefficients
        Fitted model.
    H, S : int
        Horizon and number of scenarios.
    init : array_like, optional
        Presample parameters, as used when fitting. Defaults to the
        unconditional mean.
    seed : int, optional
        Root seed. ``None`` draws fresh entropy (not reproducible).
    quantiles : sequence of float
        Levels reported in ``Forecast.quantiles``.
    threads : int, optional
        Worker threads; defaults to ``SDM_THREADS`` or the CPU count. The
        output does not depend on it.
    first_scenario : int
        Index of the first scenario stream, so that a large run can be split
        into pieces that concatenate to the same matrix.
    """
    H, S = int(H), int(S)
    if H < 1 or S < 1:
        raise ValueError("H and S must be positive")
    qs = tuple(float(q) for q in quantiles)
    if any(not 0.0 < q < 1.0 for q in qs):
        raise ValueError("quantile levels must lie in (0, 1)")
    coef.check(spec)
    init = unconditional_mean_init(spec, coef) if init is None else _as_init(spec, init)
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size == 0:
        raise EmptyInput("forecast needs at least one observation")
    fr = filter_series(spec, coef, y, init)
    if seed is None:
        seed = np.random.SeedSequence().entropy
    sim = _Simulator(spec, coef, fr, init, H)

    k = spec.k
    fpaths = np.empty((H, k, S))
    ypaths = np.empty((H, S))
    n_threads = max(1, min(threads or _default_threads(), S))
    bounds = np.linspace(0, S, n_threads + 1).astype(int)

    def work(c):
        lo, hi = bounds[c], bounds[c + 1]
        if hi > lo:
            sim.run(seed, first_scenario + lo, hi - lo, fpaths[:, :, lo:hi], ypaths[:, lo:hi])

    if n_threads == 1:
        work(0)
    else:
        with ThreadPoolExecutor(n_threads) as pool:
            list(pool.map(work, range(n_threads)))

    return Forecast(
        parameter_forecast=fpaths.mean(axis=2),
        parameter_scenarios=fpaths,
        observation_scenarios=ypaths,
        observation_forecast=ypaths.mean(axis=1),
        quantiles={q: np.quantile(ypaths, q, axis=1) for q in qs},
    )
