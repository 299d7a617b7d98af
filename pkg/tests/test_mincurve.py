import numpy as np
import pytest

from gencmu.errors import NegativeArgument, OutOfRange, ZeroVector
from gencmu.mincurve import MinCurve
from gencmu.model import CostSpec, build_config

from oracles import FROZEN, level_point_p2


def curve_for(lam, mu, cost=None):
    cfg = build_config(lam, mu, n=1024, b_n=4.0)
    return MinCurve(cfg, cost or CostSpec.uniform(len(lam)))


@pytest.fixture
def asym():
    return curve_for([0.5, 1.0], [1.0, 2.0])


def test_level_point_examples(asym):
    assert np.all(asym.level_point(0.0) == 0.0)
    assert np.allclose(asym.level_point(0.6), FROZEN["level_06"], atol=1e-12)
    assert np.allclose(asym.level_point(0.45), level_point_p2(0.45, (1.0, 2.0)), atol=1e-12)
    sym = curve_for([1.0, 1.0], [2.0, 2.0])
    q = sym.level_point(1.1)
    assert q[0] == q[1]
    with pytest.raises(OutOfRange):
        asym.level_point(asym.c_sup)


def test_workload_of_level(asym):
    assert asym.workload_of_level(0.0) == 0.0
    assert abs(asym.workload_of_level(0.6) - FROZEN["workload_06"]) < 1e-12
    assert asym.workload_of_level(0.3) < asym.workload_of_level(0.6)


def test_min_curve_examples(asym):
    assert np.all(asym.min_curve(0.0) == 0.0)
    sym = curve_for([1.0, 1.0], [2.0, 2.0])
    assert np.allclose(sym.min_curve(3.0), [3.0, 3.0], rtol=1e-12)
    assert np.allclose(asym.min_curve(FROZEN["workload_06"]), FROZEN["level_06"], atol=1e-10)


def test_min_curve_vectorized_matches_scalar(asym):
    w = np.linspace(0, 10, 17)
    vec = asym.min_curve(w)
    for wi, row in zip(w, vec):
        assert np.array_equal(asym.min_curve(wi), row)


def test_priority_class_examples(asym):
    # 0-based class indices
    assert asym.priority_class([1.0, 1.0]) == 1
    sym = curve_for([1.0, 1.0], [2.0, 2.0])
    assert sym.priority_class([1.0, 1.0]) == 0
    assert asym.priority_class([0.0, 5.0]) == 1
    with pytest.raises(ZeroVector):
        asym.priority_class([0.0, 0.0])
    with pytest.raises(NegativeArgument):
        asym.priority_class([-1.0, 1.0])


def test_priority_of_bumped_curve():
    cv = curve_for([0.5, 0.5, 1.0], [1.5, 3.0, 2.0])
    rng = np.random.default_rng(2)
    for w in rng.uniform(0, 20, 50):
        f = cv.min_curve(w)
        for i in range(3):
            q = f.copy()
            q[i] += 1e-3
            assert cv.priority_class(q) == i


def test_continuity_modulus():
    cv = curve_for([0.5, 1.0], [1.0, 2.0])
    eps = 0.1
    delta = eps * cv.theta_min / 2
    w = np.arange(0, 30, delta / 2)
    f = cv.min_curve(w)
    step = 2  # indices two apart are exactly delta apart
    diffs = np.abs(f[step:] - f[:-step]).sum(axis=1)
    assert diffs.max() <= eps


def test_minimality_with_mixed_cost_parameters():
    cost = CostSpec(np.array([0.5, 2.0]), np.array([2.0, 0.7]), np.array([3.0, 1.5]))
    cv = curve_for([0.5, 1.0], [1.0, 2.0], cost)
    rng = np.random.default_rng(9)
    for w in rng.uniform(0, 20, 50):
        f = cv.min_curve(w)
        assert abs(cv.theta @ f - w) <= 1e-10 * max(1, w)
        best = cost.total(f)
        q = rng.uniform(0, 1, (500, 2))
        q *= (w / (q @ cv.theta))[:, None]
        assert np.all(cost.total(q) >= best - 1e-8)


def test_cost_table_consistent(asym):
    grid, table, step = asym.cost_table(3.0)
    assert grid[-1] >= 3.0
    idx = [0, 100, 5000, len(grid) - 1]
    assert np.allclose(table[idx], asym.curve_cost(grid[idx]), rtol=1e-13)
