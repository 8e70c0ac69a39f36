"""Seasonal-mean baseline and a conditional-sum-of-squares SARIMA."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _css
from .core import DEFAULT_PERIOD, Series
from .errors import (
    AllFitsFailed,
    InsufficientHistory,
    InvalidConfig,
    NonConvergence,
    WaterBenchError,
)

MAX_ITER = 500
SIMPLEX_TOL = 1e-6
INIT_COEF = 0.1
SIGMA2_FLOOR = 1e-12


def _values(series) -> np.ndarray:
    if isinstance(series, Series):
        return series.array()
    return np.asarray(series, dtype=np.float64)


def baseline_forecast(series, s: int = DEFAULT_PERIOD, horizon: int = 1) -> list[float]:
    """Mean of the same-season values one and two cycles back.

    Beyond the first step, earlier forecasts stand in for missing actuals.
    """
    history = list(_values(series))
    if len(history) < 2 * s:
        raise InsufficientHistory(f"baseline needs {2 * s} observations, got {len(history)}")
    out = []
    for _ in range(horizon):
        f = (history[-s] + history[-2 * s]) / 2
        history.append(f)
        out.append(f)
    return out


@dataclass(frozen=True)
class DiffContext:
    """Everything needed to undo a chain of differences.

    ``levels[0]`` is the original series and each following entry is the
    result of applying ``lags[k]``-differencing to ``levels[k]``.
    """

    levels: tuple[np.ndarray, ...]
    lags: tuple[int, ...]

    def invert(self, z) -> np.ndarray:
        """Rebuild the original series from its fully differenced values."""
        y = np.asarray(z, dtype=np.float64)
        for level, lag in zip(reversed(self.levels[:-1]), reversed(self.lags)):
            out = np.empty(len(y) + lag)
            out[:lag] = level[:lag]
            for i in range(lag, len(out)):
                out[i] = y[i - lag] + out[i - lag]
            y = out
        return y

    def integrate_forecast(self, z_future) -> np.ndarray:
        """Carry forecasts on the differenced scale back to the original scale."""
        y = np.asarray(z_future, dtype=np.float64)
        for level, lag in zip(reversed(self.levels[:-1]), reversed(self.lags)):
            ext = np.concatenate([level, np.empty(len(y))])
            n = len(level)
            for h in range(len(y)):
                ext[n + h] = y[h] + ext[n + h - lag]
            y = ext[n:]
        return y


def seasonal_difference(values, s: int = DEFAULT_PERIOD, D: int = 1, d: int = 0):
    """Apply seasonal differencing ``D`` times then ordinary differencing ``d`` times."""
    y = _values(values)
    if len(y) <= D * s + d:
        raise InsufficientHistory(
            f"differencing (d={d}, D={D}, s={s}) needs more than {D * s + d} values, got {len(y)}"
        )
    levels, lags = [y], []
    for lag in [s] * D + [1] * d:
        cur = levels[-1]
        levels.append(cur[lag:] - cur[:-lag])
        lags.append(lag)
    return levels[-1], DiffContext(tuple(levels), tuple(lags))


@dataclass(frozen=True, order=True)
class SarimaOrder:
    p: int = 0
    d: int = 0
    q: int = 0
    P: int = 0
    D: int = 0
    Q: int = 0
    s: int = DEFAULT_PERIOD

    def __post_init__(self):
        orders = (self.p, self.d, self.q, self.P, self.D, self.Q)
        if any(o < 0 or o > 2 for o in orders):
            raise InvalidConfig(f"orders must be in 0..2, got {orders}")
        if self.d + self.D > 2:
            raise InvalidConfig("d + D must not exceed 2")
        if self.s < 1:
            raise InvalidConfig("season period must be >= 1")

    @property
    def n_coef(self) -> int:
        return self.p + self.q + self.P + self.Q

    def __str__(self) -> str:
        return f"({self.p},{self.d},{self.q})({self.P},{self.D},{self.Q})_{self.s}"


def default_grid(s: int = DEFAULT_PERIOD) -> list[SarimaOrder]:
    grid = []
    for p, q, P, Q, d, D in itertools.product((0, 1), repeat=6):
        if d + D <= 1:
            grid.append(SarimaOrder(p, d, q, P, D, Q, s))
    return grid


@dataclass(frozen=True)
class SarimaModel:
    order: SarimaOrder
    ar: tuple[float, ...]
    ma: tuple[float, ...]
    sar: tuple[float, ...]
    sma: tuple[float, ...]
    intercept: float
    sigma2: float
    aic: float
    n_residuals: int
    iterations: int = 0

    @property
    def coefficients(self) -> np.ndarray:
        return np.array(self.ar + self.ma + self.sar + self.sma, dtype=np.float64)

    def to_json(self) -> str:
        data = asdict(self)
        return json.dumps(data, indent=2, sort_keys=True)


def fit_sarima(series, order: SarimaOrder) -> SarimaModel:
    z, _ = seasonal_difference(series, order.s, order.D, order.d)
    k = order.n_coef
    if len(z) < 3 * (k + 1):
        raise InsufficientHistory(
            f"order {order} needs {3 * (k + 1)} differenced values, got {len(z)}"
        )
    ncond = order.p + order.P * order.s
    if len(z) - ncond < 1:
        raise InsufficientHistory(f"no residuals left for order {order}")
    intercept = float(z.mean())
    w = z - intercept
    iterations = 0
    if k == 0:
        x = np.zeros(0)
        sse = float(np.dot(w, w))
    else:
        x0 = np.full(k, INIT_COEF)
        x, sse, iterations, converged = _css.nelder_mead(
            w, order.p, order.q, order.P, order.Q, order.s,
            x0, INIT_COEF, MAX_ITER, SIMPLEX_TOL,
        )
        if not converged:
            raise NonConvergence(f"simplex for {order} did not converge in {MAX_ITER} iterations")
        x = np.clip(x, -_css.BOUND, _css.BOUND)
        sse = float(sse)
    n = len(z) - ncond
    sigma2 = max(sse / n, SIGMA2_FLOOR)
    aic = n * math.log(sigma2) + 2 * (k + 1)
    p, q, P = order.p, order.q, order.P
    return SarimaModel(
        order=order,
        ar=tuple(map(float, x[:p])),
        ma=tuple(map(float, x[p:p + q])),
        sar=tuple(map(float, x[p + q:p + q + P])),
        sma=tuple(map(float, x[p + q + P:])),
        intercept=intercept,
        sigma2=sigma2,
        aic=aic,
        n_residuals=n,
        iterations=int(iterations),
    )


def select_order(series, grid: Iterable[SarimaOrder] | None = None) -> SarimaOrder:
    """Grid point with the smallest AIC.

    Ties go to fewer coefficients, then to the lexicographically smaller order.
    """
    return select_model(series, grid).order


def select_model(series, grid: Iterable[SarimaOrder] | None = None) -> SarimaModel:
    grid = list(default_grid() if grid is None else grid)
    if not grid:
        raise InvalidConfig("order grid is empty")
    y = _values(series)
    fits, errors = [], []
    for order in grid:
        try:
            fits.append(fit_sarima(y, order))
        except WaterBenchError as exc:
            errors.append(f"{order}: {exc}")
    if not fits:
        raise AllFitsFailed("; ".join(errors))
    return min(fits, key=lambda m: (m.aic, m.order.n_coef, m.order))


def sarima_forecast(model: SarimaModel, series, horizon: int) -> list[float]:
    if horizon <= 0:
        return []
    order = model.order
    z, ctx = seasonal_difference(series, order.s, order.D, order.d)
    w = z - model.intercept
    ar, ma = _css.expand_polys(model.coefficients, order.p, order.q, order.P, order.Q, order.s)
    e = _css.residuals(w, ar, ma)
    n = len(w)
    w_ext = np.concatenate([w, np.zeros(horizon)])
    e_ext = np.concatenate([e, np.zeros(horizon)])
    for t in range(n, n + horizon):
        acc = 0.0
        for k in range(1, len(ar)):
            if t - k >= 0:
                acc -= ar[k] * w_ext[t - k]
        for k in range(1, len(ma)):
            if t - k >= 0:
                acc += ma[k] * e_ext[t - k]
        w_ext[t] = acc
    z_future = w_ext[n:] + model.intercept
    return [float(v) for v in ctx.integrate_forecast(z_future)]


def forecast_series(series, horizon: int, grid: Sequence[SarimaOrder] | None = None) -> list[float]:
    """Select, fit and forecast in one call."""
    model = select_model(series, grid)
    return sarima_forecast(model, series, horizon)
