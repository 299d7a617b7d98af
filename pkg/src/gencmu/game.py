"""The limiting differential game and three ways of computing its value.

Strategy and cost
-----------------
A disturbance ``psi = (psi1, psi2)`` (2d components, ``psi(0) = 0``) is
answered by the minimizing strategy

    xi   = y t + psi1 - rho[psi2]
    w    = Gamma[theta . xi]
    phi  = f(w)
    zeta = phi - xi

and the game pays ``int_0^T C(phi) dt - I(psi)``.  The value ``V`` is the
supremum of that payoff over ``psi``.

Reduction to one dimension
--------------------------
The payoff sees ``psi`` only through the scalar ``h = theta . (psi1 -
rho[psi2])``, since ``w = Gamma[a t + h]`` with ``a = theta . y``.  For a
prescribed ``h`` the cheapest ``psi`` is found pointwise in time.  Write
``u_i = d psi1_i / dt`` and ``v_i(t) = d/dt [psi2_i(rho_i t)] = rho_i
psi2_i'(rho_i t)``.  Substituting ``s = rho_i t`` in the second rate term
gives the Jacobian factor

    int_0^{rho_i T} psi2_i'(s)^2 ds / (2 s2_i) = int_0^T v_i(t)^2 dt / (2 rho_i s2_i),

and ``psi2_i`` beyond ``rho_i T`` is irrelevant and set flat.  At each
``t`` we minimise ``sum u_i^2 / (2 s1_i) + sum v_i^2 / (2 rho_i s2_i)``
subject to ``sum theta_i (u_i - v_i) = h'``.  Lagrange gives
``u_i = theta_i s1_i h' / sw2`` and ``v_i = -theta_i rho_i s2_i h' / sw2``
with minimum ``h'^2 / (2 sw2)``, where

    sw2 = sum theta_i^2 (s1_i + rho_i s2_i).

Hence ``V = sup_h int C(f(Gamma[a t + h])) dt - int h'^2 / (2 sw2)``.  The
optimal ``h`` lifts back to ``psi1_i = theta_i s1_i h / sw2`` and
``psi2_i(s) = -(theta_i rho_i s2_i / sw2) h(s / rho_i)`` for
``s <= rho_i T``.  :func:`brute_force_workload_variance` checks the
constant against a direct numerical minimisation of the full rate.

Solvers
-------
``solve_value_full`` ascends over all 2d m node increments of ``psi``,
``solve_value_reduced`` over the m increments of ``h``, and
``dp_oracle_value`` runs backward dynamic programming on the scalar
problem.  The two path solvers use finite-difference gradients and
L-BFGS-B, and report the exact payoff of the path they return.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateVariance, DomainMismatch, GridTooCoarse, NonFinite
from .mincurve import MinCurve
from .model import CostSpec, SystemConfig
from .paths import (
    LINEAR,
    SIMPSON_PANELS,
    PiecewisePath,
    _merge_times,
    integrate_cost,
    rate_function,
    simpson_nodes,
    skorohod_map,
    time_change_rho,
    uniform_grid,
)

FD_STEP = 1e-5
INNER_PANELS = 8


class CurvePath:
    """``t -> f(w(t))`` for a piecewise-linear workload path ``w``.

    Not piecewise linear itself, but smooth between the breakpoints of
    ``w``, which is all Simpson integration needs.
    """

    kind = LINEAR

    def __init__(self, w: PiecewisePath, curve: MinCurve):
        self.w = w
        self.curve = curve
        self.times = w.times

    @property
    def T(self) -> float:
        return self.w.T

    @property
    def dim(self) -> int:
        return int(self.curve.mu.shape[0])

    @property
    def values(self) -> np.ndarray:
        return self.curve.min_curve(self.w.scalar_values())

    def __call__(self, t):
        wt = self.w(t)
        return self.curve.min_curve(wt[..., 0])

    def sampled(self, times=None) -> PiecewisePath:
        """Piecewise-linear interpolant through ``f(w(t))``."""
        t = self.times if times is None else _merge_times(self.times, np.asarray(times, float), self.T)
        return PiecewisePath(t, self(t), LINEAR)


def _drift_path(y, T: float) -> PiecewisePath:
    y = np.asarray(y, dtype=float)
    return PiecewisePath([0.0, T], np.vstack([np.zeros_like(y), y * T]))


def strategy_zeta_star(psi: PiecewisePath, config: SystemConfig, curve: MinCurve):
    """Minimizing response ``(xi, w, phi, zeta)`` to the disturbance ``psi``.

    ``phi`` is a :class:`CurvePath`; ``zeta`` is sampled at the breakpoints
    of ``w``, where ``theta . zeta`` equals the Skorohod regulator.
    """
    d = config.d
    if psi.dim != 2 * d:
        raise DomainMismatch(f"expected a {2 * d}-dimensional disturbance")
    if psi.kind != LINEAR:
        raise DomainMismatch("disturbances are piecewise linear")
    if np.any(psi.values[0] != 0.0):
        raise DomainMismatch("disturbance must start at zero")
    T = psi.T
    psi1 = psi.components(range(d))
    psi2 = time_change_rho(psi.components(range(d, 2 * d)), config.rho)
    xi = _drift_path(config.y, T) + psi1 - psi2
    w = skorohod_map(xi.dot(config.theta))
    phi = CurvePath(w, curve)
    zeta = PiecewisePath(w.times, phi.values - xi(w.times), LINEAR)
    return xi, w, phi, zeta


def game_cost(psi: PiecewisePath, config: SystemConfig, curve: MinCurve, cost: CostSpec,
              panels: int = SIMPSON_PANELS) -> float:
    """``int_0^T C(phi) dt - I(psi)`` under the minimizing strategy."""
    rate = rate_function(psi, config)
    if math.isinf(rate):
        return -math.inf
    _, _, phi, _ = strategy_zeta_star(psi, config, curve)
    return integrate_cost(phi, cost, panels) - rate


@dataclass
class GameSolution:
    psi_star: PiecewisePath
    w_star: PiecewisePath
    phi_star: CurvePath
    zeta_star: PiecewisePath
    value: float
    diagnostics: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"value": self.value, **self.diagnostics}


# ---------------------------------------------------------------------------
# batched path-space objective
# ---------------------------------------------------------------------------


class _RampObjective:
    """``x -> int G(Gamma[a t + sum_k x_k r_k(t)]) dt - |x|^2 / 2``.

    Each ramp is ``r_k(t) = coef_k * clip((kappa_k t - t0_k) / dt, 0, 1)``;
    the ramps are the node-increment basis of the disturbance, scaled so the
    rate function is exactly ``|x|^2 / 2``.  ``G = C o f`` comes from a
    tabulated curve cost.  Between breakpoints the input is linear, and the
    running minimum is taken over the quadrature nodes (which contain every
    breakpoint), so only the detachment instants inside a panel are
    approximated.
    """

    def __init__(self, a: float, T: float, coef, kappa, t0, dt: float, curve: MinCurve,
                 panels: int = INNER_PANELS):
        self.a = float(a)
        self.curve = curve
        coef, kappa, t0 = (np.asarray(v, dtype=float) for v in (coef, kappa, t0))
        brk = np.concatenate([uniform_grid(T, 1), t0 / kappa, (t0 + dt) / kappa])
        breaks = _merge_times(np.array([0.0, T]), brk, T)
        self.nodes, self.weights = simpson_nodes(breaks, panels)
        arg = (np.outer(self.nodes, kappa) - t0) / dt
        self.B = np.clip(arg, 0.0, 1.0) * coef
        self.n = coef.shape[0]

    def values(self, X: np.ndarray) -> np.ndarray:
        Z = self.a * self.nodes[:, None] + self.B @ X
        W = Z - np.minimum(np.minimum.accumulate(Z, axis=0), 0.0)
        grid, table, _ = self.curve.cost_table(float(W.max()))
        G = np.interp(W, grid, table)
        out = self.weights @ G - 0.5 * np.sum(X * X, axis=0)
        if not np.all(np.isfinite(out)):
            raise NonFinite("game objective is not finite")
        return out

    def neg_value_and_grad(self, x: np.ndarray):
        n = self.n
        X = np.empty((n, 2 * n + 1))
        X[:] = x[:, None]
        X[np.arange(n), np.arange(n)] += FD_STEP
        X[np.arange(n), n + np.arange(n)] -= FD_STEP
        v = self.values(X)
        grad = (v[:n] - v[n:2 * n]) / (2.0 * FD_STEP)
        return -v[-1], -grad

    def maximize(self, x0: np.ndarray, maxiter: int = 500):
        res = minimize(self.neg_value_and_grad, x0, jac=True, method="L-BFGS-B",
                       options={"maxiter": maxiter, "ftol": 1e-13, "gtol": 1e-9})
        return res.x, -float(res.fun), int(res.nit)


def _multistart(obj: _RampObjective, restarts: int, seed: int, build_psi, config, curve, cost):
    """Optimize from zero plus ``restarts`` seeded random starts; rank by exact payoff."""
    starts = [np.zeros(obj.n)]
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        starts.append(rng.normal(0.0, 1.0, obj.n) / math.sqrt(max(obj.n, 1)))
    zero_psi = build_psi(np.zeros(obj.n))
    best = (game_cost(zero_psi, config, curve, cost), zero_psi)
    values, iters = [], []
    for x0 in starts:
        x, _, nit = obj.maximize(x0)
        psi = build_psi(x)
        val = game_cost(psi, config, curve, cost)
        values.append(val)
        iters.append(nit)
        if val > best[0]:
            best = (val, psi)
    diag = {"restart_values": values, "iterations": iters,
            "restart_spread": float(max(values) - min(values)), "restarts": restarts}
    return best, diag


def _solution(psi, value, config, curve, diag) -> GameSolution:
    _, w, phi, zeta = strategy_zeta_star(psi, config, curve)
    return GameSolution(psi, w, phi, zeta, float(value), diag)


def _ramp_scale(var: float, dt: float) -> float:
    return math.sqrt(var * dt) if var > 0 else 0.0


def solve_value_full(config: SystemConfig, curve: MinCurve, cost: CostSpec, m: int = 64,
                     restarts: int = 16, seed: int = 0) -> GameSolution:
    """Maximize the payoff over ``psi`` with ``m`` uniform linear segments.

    Node increments are the variables, so ``psi(0) = 0`` holds by
    construction.  Components with zero variance stay at zero, and segments
    of ``psi2_i`` starting after ``rho_i T`` (invisible to the payoff but
    costly) are fixed at zero.
    """
    if m < 8 or restarts < 1:
        raise ValueError("need m >= 8 and at least one restart")
    d, T = config.d, config.T
    dt = T / m
    grid = uniform_grid(T, m)
    s1, s2, rho, th = config.sigma1_hat2, config.sigma2_hat2, config.rho, config.theta
    slots, coef, kappa, t0 = [], [], [], []
    for i in range(d):
        for j in range(m):
            if s1[i] > 0:
                slots.append((i, j))
                coef.append(th[i] * _ramp_scale(s1[i], dt))
                kappa.append(1.0)
                t0.append(grid[j])
    for i in range(d):
        for j in range(m):
            if s2[i] > 0 and grid[j] < rho[i] * T * (1 - 1e-12):
                slots.append((d + i, j))
                coef.append(-th[i] * _ramp_scale(s2[i], dt))
                kappa.append(rho[i])
                t0.append(grid[j])
    scale = np.concatenate([s1, s2])

    def build_psi(x):
        inc = np.zeros((m, 2 * d))
        for (c, j), xv in zip(slots, x):
            inc[j, c] = xv * _ramp_scale(scale[c], dt)
        return PiecewisePath(grid, np.vstack([np.zeros(2 * d), np.cumsum(inc, axis=0)]))

    diag = {"m": m, "variables": len(slots), "method": "full"}
    if not slots:
        psi = build_psi(np.zeros(0))
        return _solution(psi, game_cost(psi, config, curve, cost), config, curve,
                         {**diag, "restarts": restarts, "restart_spread": 0.0, "iterations": []})
    obj = _RampObjective(float(th @ config.y), T, coef, kappa, t0, dt, curve)
    (value, psi), d2 = _multistart(obj, restarts, seed, build_psi, config, curve, cost)
    return _solution(psi, value, config, curve, {**diag, **d2})


def lift_workload_disturbance(h: PiecewisePath, config: SystemConfig) -> PiecewisePath:
    """Cheapest 2d-dimensional ``psi`` whose projection ``theta.(psi1 - rho[psi2])`` is ``h``."""
    s1, s2, rho, th = config.sigma1_hat2, config.sigma2_hat2, config.rho, config.theta
    sw2 = config.workload_variance
    T = h.T
    times = _merge_times(h.times, np.concatenate([rho[i] * h.times for i in range(config.d)]), T)
    hv = h(times)[:, 0]
    cols = [th[i] * s1[i] / sw2 * hv for i in range(config.d)]
    for i in range(config.d):
        ht = h(np.minimum(times / rho[i], T))[:, 0]
        cols.append(-th[i] * rho[i] * s2[i] / sw2 * ht)
    return PiecewisePath(times, np.column_stack(cols))


def solve_value_reduced(config: SystemConfig, curve: MinCurve, cost: CostSpec, m: int = 128,
                        restarts: int = 4, seed: int = 0) -> GameSolution:
    """Maximize the one-dimensional reduced payoff over ``h`` with ``m`` segments.

    The optimal ``h`` is lifted to the full disturbance, whose exact payoff
    is reported.  With zero projected variance a :class:`DegenerateVariance`
    warning is issued and the undisturbed payoff returned.
    """
    d, T = config.d, config.T
    sw2 = config.workload_variance
    grid = uniform_grid(T, m)
    diag = {"m": m, "method": "reduced", "workload_variance": sw2}
    if not sw2 > 0:
        warnings.warn("zero workload variance: no admissible disturbance", DegenerateVariance)
        psi = PiecewisePath.zeros(T, 2 * d)
        return _solution(psi, game_cost(psi, config, curve, cost), config, curve,
                         {**diag, "restarts": 0, "restart_spread": 0.0, "iterations": []})
    dt = T / m
    step = _ramp_scale(sw2, dt)
    obj = _RampObjective(float(config.theta @ config.y), T, np.full(m, step), np.ones(m),
                         grid[:-1], dt, curve)

    def build_psi(x):
        h = PiecewisePath(grid, np.concatenate([[0.0], np.cumsum(x * step)]))
        return lift_workload_disturbance(h, config)

    (value, psi), d2 = _multistart(obj, restarts, seed, build_psi, config, curve, cost)
    return _solution(psi, value, config, curve, {**diag, **d2})


# ---------------------------------------------------------------------------
# dynamic programming oracle
# ---------------------------------------------------------------------------


def _dp_control_bound(config: SystemConfig, curve: MinCurve) -> float:
    # |h'| / sw2 is bounded by the costate, itself at most T * sup c(w)
    a = float(config.theta @ config.y)
    return max(1.5 * config.workload_variance * config.T * curve.c_sup, 4.0 * abs(a) + 1.0)


def _dp_once(config, curve, K: int, W: int, w_max: float, controls: int) -> float:
    T = config.T
    a = float(config.theta @ config.y)
    sw2 = config.workload_variance
    dt = T / K
    w = np.linspace(0.0, w_max, W)
    Gw = curve.curve_cost(w)
    if sw2 > 0:
        H = _dp_control_bound(config, curve)
        u = np.linspace(-H, H, controls)
    else:
        u = np.zeros(1)
    wn = np.maximum(w[:, None] + (a + u[None, :]) * dt, 0.0)
    reward = 0.5 * (Gw[:, None] + np.interp(wn, w, Gw)) * dt
    if sw2 > 0:
        reward -= u[None, :] ** 2 * dt / (2.0 * sw2)
    rows = np.arange(W)
    du = u[1] - u[0] if u.shape[0] > 1 else 0.0
    V = np.zeros(W)
    for _ in range(K):
        Q = reward + np.interp(wn, w, V)
        k = np.argmax(Q, axis=1)
        best = Q[rows, k]
        if u.shape[0] > 2:
            # parabolic refinement between the stencil neighbours
            inner = (k > 0) & (k < u.shape[0] - 1)
            kk = np.clip(k, 1, u.shape[0] - 2)
            qm, q0, qp = Q[rows, kk - 1], Q[rows, kk], Q[rows, kk + 1]
            curv = qm - 2.0 * q0 + qp
            shift = np.where(inner & (curv < 0), 0.5 * (qm - qp) / np.where(curv < 0, curv, -1.0), 0.0)
            ur = u[kk] + shift * du
            wr = np.maximum(w + (a + ur) * dt, 0.0)
            qr = (0.5 * (Gw + np.interp(wr, w, Gw)) * dt - ur**2 * dt / (2.0 * sw2)
                  + np.interp(wr, w, V))
            best = np.maximum(best, qr)
        V = best
    return float(V[0])


def dp_oracle_value(config: SystemConfig, curve: MinCurve, cost: CostSpec | None = None,
                    K: int = 400, W: int = 800, w_max: float | None = None, controls: int = 201,
                    check: bool = True, atol: float = 1e-5) -> float:
    """Backward dynamic programming value of the reduced scalar game.

    Reflection is a clamp at zero; the control ``h'`` ranges over a
    symmetric stencil.  With ``check`` the computation is repeated with
    ``2K`` steps and ``2W`` points and :class:`GridTooCoarse` is raised if
    the two differ by more than 1% (or ``atol``, which only matters when the
    value itself is essentially zero and a relative test is meaningless).
    """
    if K < 100 or W < 200:
        raise ValueError("need K >= 100 and W >= 200")
    a = float(config.theta @ config.y)
    if w_max is None:
        w_max = (max(a, 0.0) + _dp_control_bound(config, curve)) * config.T / 0.8
    v1 = _dp_once(config, curve, K, W, w_max, controls)
    if check:
        v2 = _dp_once(config, curve, 2 * K, 2 * W, w_max, controls)
        if abs(v2 - v1) > max(0.01 * max(abs(v1), abs(v2)), atol):
            raise GridTooCoarse(f"DP value moved from {v1:.6g} to {v2:.6g} under grid doubling")
    return v1


# ---------------------------------------------------------------------------
# variance constant check
# ---------------------------------------------------------------------------


def brute_force_workload_variance(config: SystemConfig, trials: int = 1000, seed: int = 0):
    """Compare the reduced rate ``h'^2 / (2 sw2)`` with a direct minimisation.

    For each random target slope ``h'`` the full rate function of a
    disturbance with constant slopes (``psi2_i`` flat after ``rho_i T``) is
    minimised numerically subject to ``theta.(psi1 - rho[psi2])(T) = h' T``;
    constant slopes are optimal by Jensen's inequality.  Returns the
    largest relative discrepancy.
    """
    from scipy.optimize import minimize as _min

    d, T = config.d, config.T
    rho, th = config.rho, config.theta
    var = np.concatenate([config.sigma1_hat2, config.sigma2_hat2])
    gain = np.concatenate([th, -th * rho])  # projected slope per unit component slope
    free = np.nonzero(var > 0)[0]
    if free.size == 0:
        raise DegenerateVariance("no component carries noise")
    pivot = free[np.argmax(np.abs(gain[free]))]
    others = free[free != pivot]
    times = _merge_times(np.array([0.0, T]), rho * T, T)
    sw2 = config.workload_variance
    rng = np.random.default_rng(seed)
    worst = 0.0

    def path_of(slopes):
        vals = np.empty((times.shape[0], 2 * d))
        vals[:, :d] = np.outer(times, slopes[:d])
        for i in range(d):
            vals[:, d + i] = slopes[d + i] * np.minimum(times, rho[i] * T)
        return PiecewisePath(times, vals)

    for _ in range(trials):
        target = rng.normal(0.0, 2.0)

        def full(z):
            s = np.zeros(2 * d)
            s[others] = z
            s[pivot] = (target - gain[others] @ z) / gain[pivot]
            return s

        def objective(z):
            return rate_function(path_of(full(z)), config)

        res = _min(objective, np.zeros(others.size), method="BFGS", options={"gtol": 1e-12})
        psi = path_of(full(res.x))
        proj = psi.components(range(d)) - time_change_rho(psi.components(range(d, 2 * d)), rho)
        if abs(proj.dot(th)(T)[0] - target * T) > 1e-9 * (1 + abs(target)):
            raise AssertionError("constraint lost in the brute-force minimisation")
        exact = target**2 * T / (2.0 * sw2)
        worst = max(worst, abs(res.fun - exact) / max(exact, 1e-300))
    return worst
