import numpy as np
import pytest

from gencmu.errors import DegenerateVariance, DomainMismatch
from gencmu.game import (
    brute_force_workload_variance,
    dp_oracle_value,
    game_cost,
    lift_workload_disturbance,
    solve_value_full,
    solve_value_reduced,
    strategy_zeta_star,
)
from gencmu.mincurve import MinCurve
from gencmu.model import CostSpec, build_config
from gencmu.paths import PiecewisePath, integrate_cost, rate_function, time_change_rho

from oracles import FROZEN


def setup(lam, mu, lam_tilde=None, T=1.0, cost=None, **kw):
    cfg = build_config(lam, mu, n=1024, b_n=4.0, T=T, lam_tilde=lam_tilde, **kw)
    cost = cost or CostSpec.uniform(len(lam))
    return cfg, cost, MinCurve(cfg, cost)


def random_psi(rng, d, T=1.0, m=12, scale=0.5):
    t = np.linspace(0, T, m + 1)
    v = np.vstack([np.zeros(2 * d), rng.normal(0, scale, (m, 2 * d)).cumsum(axis=0)])
    return PiecewisePath(t, v)


def test_zero_disturbance_nonpositive_drift():
    cfg, cost, cv = setup([0.5, 1.0], [1.0, 2.0])
    xi, w, phi, zeta = strategy_zeta_star(PiecewisePath.zeros(1.0, 4), cfg, cv)
    assert np.all(w.values == 0) and np.all(phi.values == 0)
    assert game_cost(PiecewisePath.zeros(1.0, 4), cfg, cv, cost) == 0.0


def test_zero_disturbance_positive_drift():
    cfg, cost, cv = setup([1.0], [1.0], lam_tilde=[1.0])
    xi, w, phi, zeta = strategy_zeta_star(PiecewisePath.zeros(1.0, 2), cfg, cv)
    t = np.linspace(0, 1, 11)
    assert np.allclose(w(t)[:, 0], t, atol=1e-15)
    assert np.allclose(phi(t)[:, 0], t, atol=1e-12)
    val = game_cost(PiecewisePath.zeros(1.0, 2), cfg, cv, cost)
    assert abs(val - FROZEN["int_linear"]) < 1e-9


def test_admissibility_random_disturbances():
    cfg, cost, cv = setup([0.5, 1.0], [1.0, 2.0], lam_tilde=[0.1, -0.2])
    rng = np.random.default_rng(0)
    for _ in range(30):
        psi = random_psi(rng, 2)
        xi, w, phi, zeta = strategy_zeta_star(psi, cfg, cv)
        assert phi.values.min() >= 0.0
        tz = zeta.values @ cfg.theta
        assert abs(tz[0]) < 1e-15
        assert np.all(np.diff(tz) >= -1e-12)
        assert np.allclose(phi.values @ cfg.theta, w.scalar_values(), atol=1e-10)
        reg = -np.minimum(np.minimum.accumulate(np.minimum(xi(w.times) @ cfg.theta, 0.0)), 0.0)
        assert np.allclose(tz, reg, atol=1e-10)


def test_causality_of_strategy():
    cfg, cost, cv = setup([0.5, 1.0], [1.0, 2.0])
    rng = np.random.default_rng(1)
    t = np.linspace(0, 1, 11)
    base = np.vstack([np.zeros(4), rng.normal(0, 0.5, (10, 4)).cumsum(axis=0)])
    other = base.copy()
    other[6:] = base[5] + rng.normal(0, 1.0, (5, 4)).cumsum(axis=0)
    z1 = strategy_zeta_star(PiecewisePath(t, base), cfg, cv)[3]
    z2 = strategy_zeta_star(PiecewisePath(t, other), cfg, cv)[3]
    # psi2 enters through psi2(rho t), so it looks ahead by nothing: rho <= 1
    s = np.linspace(0, 0.5, 26)
    assert np.allclose(z1(s), z2(s), atol=1e-12)


def test_rate_scaling_by_two():
    cfg, cost, cv = setup([0.5, 1.0], [1.0, 2.0])
    psi = random_psi(np.random.default_rng(2), 2)
    r1 = rate_function(psi, cfg)
    r2 = rate_function(psi * 2.0, cfg)
    assert r2 == pytest.approx(4 * r1, rel=1e-14)
    gain = integrate_cost(strategy_zeta_star(psi * 2.0, cfg, cv)[2], cost)
    assert game_cost(psi * 2.0, cfg, cv, cost) == pytest.approx(gain - 4 * r1, rel=1e-12)


def test_bad_disturbance_rejected():
    cfg, cost, cv = setup([0.5, 1.0], [1.0, 2.0])
    with pytest.raises(DomainMismatch):
        strategy_zeta_star(PiecewisePath.zeros(1.0, 3), cfg, cv)
    with pytest.raises(DomainMismatch):
        strategy_zeta_star(PiecewisePath([0, 1], np.ones((2, 4))), cfg, cv)


def test_lift_realizes_projection_at_reduced_rate():
    cfg, cost, cv = setup([0.5, 1.0], [1.0, 2.0])
    rng = np.random.default_rng(3)
    t = np.linspace(0, 1, 17)
    h = PiecewisePath(t, np.concatenate([[0.0], rng.normal(0, 0.3, 16).cumsum()]))
    psi = lift_workload_disturbance(h, cfg)
    proj = (psi.components(range(2)) - time_change_rho(psi.components(range(2, 4)), cfg.rho)).dot(cfg.theta)
    s = np.linspace(0, 1, 101)
    assert np.allclose(proj(s), h(s), atol=1e-13)
    energy = np.sum(np.diff(h.scalar_values()) ** 2 / np.diff(t))
    assert rate_function(psi, cfg) == pytest.approx(energy / (2 * cfg.workload_variance), rel=1e-12)


def test_brute_force_variance_small():
    cfg, _, _ = setup([0.5, 0.5, 1.0], [1.5, 3.0, 2.0], st_dist=["erlang:2", "exponential", "erlang:3"])
    assert brute_force_workload_variance(cfg, trials=50, seed=1) < 1e-6


def _solution_invariants(sol, cfg, cost):
    lhs = integrate_cost(sol.phi_star, cost) - rate_function(sol.psi_star, cfg)
    assert abs(sol.value - lhs) <= 1e-9
    assert sol.phi_star.values.min() >= 0.0
    tz = sol.zeta_star.values @ cfg.theta
    assert abs(tz[0]) < 1e-15 and np.all(np.diff(tz) >= -1e-12)


def test_degenerate_noise():
    cfg, cost, cv = setup([1.0], [1.0], lam_tilde=[0.5], ia_dist="deterministic", st_dist="deterministic")
    zero = game_cost(PiecewisePath.zeros(1.0, 2), cfg, cv, cost)
    full = solve_value_full(cfg, cv, cost, m=16, restarts=2)
    assert full.value == pytest.approx(zero, abs=1e-9)
    with pytest.warns(DegenerateVariance):
        red = solve_value_reduced(cfg, cv, cost, m=16)
    assert red.value == zero


def test_single_class_solvers_agree():
    cfg, cost, cv = setup([1.0], [1.0], T=2.0)
    full = solve_value_full(cfg, cv, cost, m=32, restarts=3)
    red = solve_value_reduced(cfg, cv, cost, m=32, restarts=3)
    assert full.value > 0
    assert abs(full.value - red.value) <= 0.005 * red.value
    dp = dp_oracle_value(cfg, cv, cost, check=False)
    assert abs(dp - red.value) <= 0.02 * red.value
    for sol in (full, red):
        _solution_invariants(sol, cfg, cost)


def test_symmetric_two_class():
    cfg, cost, cv = setup([1.0, 1.0], [2.0, 2.0], lam_tilde=[0.25, 0.25])
    full = solve_value_full(cfg, cv, cost, m=32, restarts=3)
    red = solve_value_reduced(cfg, cv, cost, m=32, restarts=3)
    assert abs(full.value - red.value) <= 0.005 * red.value
    ph = full.phi_star.values
    assert np.max(np.abs(ph[:, 0] - ph[:, 1])) <= 1e-6
    assert full.value >= game_cost(PiecewisePath.zeros(1.0, 4), cfg, cv, cost) - 1e-12
    assert full.diagnostics["restart_spread"] >= 0.0


def test_dp_vanishing_noise_limit():
    cost = CostSpec(np.array([1.0]), np.array([0.01]), np.array([2.0]))
    cfg, _, cv = setup([1.0], [1.0], lam_tilde=[0.5], cost=cost,
                       ia_dist="erlang:400", st_dist="erlang:400")
    det = game_cost(PiecewisePath.zeros(1.0, 2), cfg, cv, cost)
    # interpolation on a coarse state grid acts like extra noise; keep dw small
    dp = dp_oracle_value(cfg, cv, cost, w_max=1.0, W=800, check=False)
    assert dp >= det - 1e-12
    assert abs(dp - det) <= 1e-3 * det


def test_dp_dominates_deterministic():
    cfg, cost, cv = setup([0.5, 1.0], [1.0, 2.0], lam_tilde=[0.3, 0.0])
    det = game_cost(PiecewisePath.zeros(1.0, 4), cfg, cv, cost)
    assert dp_oracle_value(cfg, cv, cost, check=False) >= det


def test_value_monotone_in_cost_and_horizon():
    lo_cost = CostSpec.uniform(1)
    hi_cost = CostSpec(np.array([1.0]), np.array([1.5]), np.array([2.0]))
    v = []
    for T, cost in ((1.5, lo_cost), (1.5, hi_cost), (2.0, lo_cost)):
        cfg, _, cv = setup([1.0], [1.0], lam_tilde=[0.2], T=T, cost=cost)
        v.append(solve_value_reduced(cfg, cv, cost, m=32, restarts=2).value)
    assert v[1] >= v[0] and v[2] >= v[0]


def test_grid_convergence_cauchy():
    cfg, cost, cv = setup([1.0], [1.0], lam_tilde=[0.5])
    vals = [solve_value_reduced(cfg, cv, cost, m=m, restarts=1).value for m in (16, 32, 64, 128)]
    assert abs(vals[3] - vals[2]) <= 0.01 * abs(vals[3])
    assert all(b >= a - 1e-4 * abs(vals[3]) for a, b in zip(vals, vals[1:]))
