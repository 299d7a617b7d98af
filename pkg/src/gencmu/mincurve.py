"""The minimizing curve ``f`` and the generalized c-mu priority partition.

For a workload level ``w`` the curve point ``f(w)`` is the cheapest queue
vector with ``theta . q = w``.  It is found through the common index level
``c``: ``q_i(c) = (C_i')^{-1}(c / mu_i)`` and ``F(c) = theta . q(c)`` is
strictly increasing from 0 to infinity on ``[0, min_i M_i)``, so ``f(w)``
is ``q(F^{-1}(w))``.
"""
from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import NegativeArgument, OutOfRange, ToleranceNotMet, ZeroVector
from .model import CostSpec, SystemConfig

MAX_BISECTION = 200


class MinCurve:
    """Minimizing curve for one (config, cost) pair.

    Parameters
    ----------
    config : SystemConfig
        Supplies the limit service rates ``mu`` and ``theta = 1/mu``.
    cost : CostSpec
    tol_c : float
        Relative bisection tolerance on the index level ``c``.  The default
        0 bisects until the bracket stops shrinking; near ``min_i M_i`` the
        map ``c -> F(c)`` is steep enough that a 1e-12 tolerance in ``c``
        costs about 1e-9 in workload.
    """

    def __init__(self, config: SystemConfig, cost: CostSpec, tol_c: float = 0.0):
        if cost.d != config.d:
            raise ValueError("cost and config disagree on the number of classes")
        self.config = config
        self.cost = cost
        self.tol_c = tol_c
        self.mu = np.array(config.mu, dtype=float)
        self.theta = 1.0 / self.mu
        self.M = cost.level_sup(self.mu)
        self.c_sup = float(self.M.min())
        self._table = None

    @property
    def theta_min(self) -> float:
        return float(self.theta.min())

    @property
    def theta_max(self) -> float:
        return float(self.theta.max())

    # level parametrization ---------------------------------------------

    def level_point(self, c):
        """``q^c`` with ``mu_i C_i'(q_i) = c`` for every class.  Vectorized in ``c``."""
        c_arr = np.asarray(c, dtype=float)
        if np.any(c_arr < 0) or np.any(c_arr >= self.c_sup):
            raise OutOfRange(f"level outside [0, {self.c_sup})")
        return self.cost.derivative_inverses(c_arr[..., None] / self.mu)

    def workload_of_level(self, c):
        """``F(c) = theta . q^c``."""
        return self.level_point(c) @ self.theta

    def _upper_level(self, w_max: float) -> float:
        # push the top of the bracket toward c_sup until F covers w_max
        for k in range(20, 60):
            c_hi = self.c_sup * (1.0 - 2.0**-k)
            if c_hi >= self.c_sup:
                break
            if self.workload_of_level(c_hi) >= w_max:
                return c_hi
        raise ToleranceNotMet(f"workload {w_max} exceeds the representable range of F")

    def level_of_workload(self, w):
        """Solve ``F(c) = w`` by vectorized bisection."""
        w_arr = np.asarray(w, dtype=float)
        if np.any(w_arr < 0):
            raise NegativeArgument("workload must be nonnegative")
        flat = w_arr.ravel()
        if flat.size == 0:
            return w_arr.copy()
        lo = np.zeros_like(flat)
        hi = np.full_like(flat, self._upper_level(float(flat.max())))
        active = flat > 0
        hi[~active] = 0.0
        for _ in range(MAX_BISECTION):
            width = hi - lo
            if not np.any(width > self.tol_c * np.maximum(1.0, hi)):
                break
            mid = 0.5 * (lo + hi)
            stuck = (mid <= lo) | (mid >= hi)
            if np.all(stuck | (width <= 0)):
                break
            below = self.workload_of_level(mid) < flat
            lo = np.where(below & ~stuck, mid, lo)
            hi = np.where(~below & ~stuck, mid, hi)
        else:
            raise ToleranceNotMet("bisection on the index level did not converge")
        # pick whichever endpoint reproduces w more closely
        f_lo = self.workload_of_level(lo)
        f_hi = self.workload_of_level(hi)
        c = np.where(np.abs(f_lo - flat) <= np.abs(f_hi - flat), lo, hi)
        return c.reshape(w_arr.shape)

    def min_curve(self, w):
        """``f(w)``; a ``(..., d)`` array for array input."""
        return self.level_point(self.level_of_workload(w))

    __call__ = min_curve

    def curve_cost(self, w):
        """``C(f(w))``; its derivative in ``w`` is the index level ``c(w)``."""
        return self.cost.total(self.min_curve(w))

    # priority partition --------------------------------------------------

    def index_values(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return self.mu * self.cost.derivatives(q)

    def priority_class(self, q_scaled) -> int:
        """0-based ``argmax*`` of ``mu_j C_j'(q_j)``; ties go to the lowest index."""
        q = np.ascontiguousarray(q_scaled, dtype=float)
        if q.shape != (self.config.d,):
            raise ValueError(f"expected a {self.config.d}-vector")
        if np.any(q < 0):
            raise NegativeArgument("scaled queue lengths must be nonnegative")
        if not np.any(q > 0):
            raise ZeroVector("priority is undefined at the empty state")
        return int(_kernels.priority_index(q, self.mu, self.cost.a, self.cost.b, self.cost.p))

    # fast evaluation table for optimizers -------------------------------

    def cost_table(self, w_max: float, step: float = 2e-4) -> tuple[np.ndarray, np.ndarray, float]:
        """Uniform table ``(w_grid, C(f(w_grid)), step)`` covering ``[0, w_max]``.

        Cached; the cache only ever grows.
        """
        if self._table is None or self._table[0][-1] < w_max or self._table[2] != step:
            top = max(w_max, 1.0)
            if self._table is not None and self._table[2] == step:
                top = max(top, 2.0 * self._table[0][-1])
            k = int(np.ceil(top / step))
            grid = np.arange(k + 1) * step
            self._table = (grid, self.curve_cost(grid), step)
        return self._table


def level_point(curve: MinCurve, c):
    return curve.level_point(c)


def workload_of_level(curve: MinCurve, c):
    return curve.workload_of_level(c)


def min_curve(curve: MinCurve, w):
    return curve.min_curve(w)


def priority_class(curve: MinCurve, q_scaled) -> int:
    return curve.priority_class(q_scaled)
