import numpy as np
import pytest

from gencmu.mincurve import MinCurve
from gencmu.model import CostSpec, Distribution, build_config, desk_problem
from gencmu.sim import (
    Policy,
    Primitives,
    RenewalStream,
    collapse_gap,
    draw_primitives,
    path_costs,
    scale_trajectory,
    simulate,
    simulate_nonpreemptive,
    simulate_preemptive,
    simulate_static_priority,
    stream_rng,
    systeq_residual,
    workload_check,
)

from oracles import simulate_reference


def unit_config(lam, mu, lam_n, mu_n, T=2.0, **kw):
    return build_config(lam, mu, n=1, b_n=1.0, T=T, lam_n=lam_n, mu_n=mu_n, strict=False, **kw)


def test_hand_example_deterministic():
    cfg = unit_config([1.0], [2.0], [1], [2], ia_dist="deterministic", st_dist="deterministic")
    tr = simulate_preemptive(cfg, CostSpec.uniform(1), seed=0)
    assert tr.event_table() == [(0.0, 0, -1), (1.0, 1, 0), (1.5, 0, -1), (2.0, 1, 0), (2.0, 1, 0)]
    q = tr.queue_path()
    seg = np.diff(q.times)
    assert np.sum(q.values[:-1, 0] * seg) == pytest.approx(0.5, abs=1e-15)
    sc = scale_trajectory(tr, cfg)
    assert np.array_equal(sc.q_tilde, tr.queue.astype(float))


def test_absent_class_matches_single_class():
    two = unit_config([1.0, 1.0], [1.0, 1.0], [50, 0.1], [55, 60], T=2.0,
                      ia_dist=["exponential", "deterministic"])
    one = unit_config([1.0], [1.0], [50], [55], T=2.0)
    a = simulate_preemptive(two, CostSpec.uniform(2), seed=4)
    b = simulate_preemptive(one, CostSpec.uniform(1), seed=4)
    assert np.all(a.queue[:, 1] == 0)
    assert np.array_equal(a.times, b.times)
    assert np.array_equal(a.queue[:, 0], b.queue[:, 0])


def test_symmetric_tie_goes_to_lowest_class():
    cfg = unit_config([1.0, 1.0], [2.0, 2.0], [1, 1], [2, 2])
    prim = Primitives([np.array([0.5]), np.array([0.5])], [np.array([1.0]), np.array([1.0])])
    tr = simulate(cfg, CostSpec.uniform(2), "gcmu-preemptive", 0, primitives=prim)
    row = np.nonzero(tr.times == 0.5)[0][-1]
    assert tuple(tr.queue[row]) == (1, 1) and tr.serving[row] == 0


def _mid_service_scenario():
    cfg = unit_config([0.5, 1.0], [1.0, 2.0], [1, 1], [1, 2])
    prim = Primitives([np.array([0.1]), np.array([0.3])], [np.array([1.0]), np.array([0.25])])
    return cfg, prim


def test_preemptive_hand_scenario():
    cfg, prim = _mid_service_scenario()
    tr = simulate(cfg, CostSpec.uniform(2), "gcmu-preemptive", 0, primitives=prim)
    got = [(t, tuple(q), s) for t, *q, s in tr.event_table()]
    assert got[1] == (0.1, (1, 0), 0)
    assert got[2] == (0.3, (1, 1), 1)
    assert got[3][0] == pytest.approx(0.55) and got[3][1:] == ((1, 0), 0)
    assert got[4][0] == pytest.approx(1.35) and got[4][1:] == ((0, 0), -1)


def test_nonpreemptive_hand_scenario():
    cfg, prim = _mid_service_scenario()
    tr = simulate(cfg, CostSpec.uniform(2), "gcmu-nonpreemptive", 0, primitives=prim)
    got = [(t, tuple(q), s) for t, *q, s in tr.event_table()]
    assert got[2] == (0.3, (1, 1), 0)  # class 0 keeps the server
    assert got[3][0] == pytest.approx(1.1) and got[3][1:] == ((0, 1), 1)
    assert got[4][0] == pytest.approx(1.35) and got[4][1:] == ((0, 0), -1)


def test_static_order_matching_index_ordering():
    cfg, prim = _mid_service_scenario()
    cost = CostSpec.uniform(2)
    a = simulate(cfg, cost, "gcmu-preemptive", 0, primitives=prim)
    b = simulate(cfg, cost, "static:1,0", 0, primitives=prim)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.serving, b.serving)


def test_single_class_policies_coincide():
    cfg = build_config([1.0], [1.0], n=400, b_n=3.0)
    cost = CostSpec.uniform(1)
    for seed in range(5):
        a = simulate_preemptive(cfg, cost, seed=seed)
        b = simulate_nonpreemptive(cfg, cost, seed=seed)
        c = simulate_static_priority(cfg, [0], seed=seed, cost=cost)
        for other in (b, c):
            assert np.array_equal(a.times, other.times)
            assert np.array_equal(a.queue, other.queue)
            assert a.cost_integral == other.cost_integral


def test_reversed_static_order_costs_more():
    pb = desk_problem(256)
    best = Policy.parse("static:best", pb.config, pb.cost)
    worst = Policy.parse("static:worst", pb.config, pb.cost)
    assert best.order == (1, 0) and worst.order == (0, 1)
    gc = path_costs(pb.config, pb.cost, "gcmu-preemptive", 0, range(1000))
    bad = path_costs(pb.config, pb.cost, worst, 0, range(1000))
    assert bad.mean() >= gc.mean()


def test_engine_matches_reference_simulator():
    cfg = build_config([0.5, 1.0], [1.0, 2.0], n=16, b_n=2.0, T=1.0)
    cost = CostSpec.uniform(2)
    curve = MinCurve(cfg, cost)
    for rep in range(20):
        prim = draw_primitives(cfg, 12, rep)
        for policy, pre in (("gcmu-preemptive", True), ("gcmu-nonpreemptive", False)):
            tr = simulate(cfg, cost, policy, 12, rep, primitives=prim)

            def index(q):
                return curve.priority_class(np.array(q, float) / cfg.scale)

            times, queues, area = simulate_reference(prim.arrivals, prim.requirements, index,
                                                     cfg.T, preemptive=pre)
            assert np.allclose(tr.times, times, atol=1e-12)
            assert np.array_equal(tr.queue, np.array(queues))
            qp = tr.queue_path()
            assert np.sum(qp.values[:-1].sum(axis=1) * np.diff(qp.times)) == pytest.approx(area)


def test_reproducible_bit_identical():
    pb = desk_problem(1024)
    a = simulate(pb.config, pb.cost, "gcmu-preemptive", 3, 7)
    b = simulate(pb.config, pb.cost, "gcmu-preemptive", 3, 7)
    for field in ("times", "queue", "serving", "alloc"):
        assert np.array_equal(getattr(a, field), getattr(b, field))
    assert a.cost_integral == b.cost_integral


@pytest.mark.parametrize("policy", ["gcmu-preemptive", "gcmu-nonpreemptive", "static:worst"])
def test_invariants_and_identities(policy):
    pb = desk_problem(1024)
    curve = MinCurve(pb.config, pb.cost)
    for rep in range(10):
        tr = simulate(pb.config, pb.cost, policy, 5, rep)
        inv = tr.invariant_residuals()
        for key in ("flow_balance", "negative_queue", "serve_empty", "alloc_decrease",
                    "multi_serve", "service_identity"):
            assert inv[key] == 0.0, key
        assert inv["alloc_rate"] <= 1e-12
        assert systeq_residual(scale_trajectory(tr, pb.config)) <= 1e-9
        dev, norm = workload_check(tr, pb.config)
        assert dev <= 1e-9 * (1 + norm)
        busy = tr.busy().sum(axis=1)
        nonempty = tr.queue.sum(axis=1) > 0
        assert np.all(busy[nonempty] == 1)
        if policy == "gcmu-preemptive":
            rows = np.nonzero(nonempty)[0]
            want = [curve.priority_class(tr.queue[r] / pb.config.scale) for r in rows]
            assert np.array_equal(tr.serving[rows], want)
        if policy == "gcmu-nonpreemptive":
            from gencmu.sim.engine import EV_ARRIVAL, EV_DEPARTURE
            change = np.nonzero(tr.serving[1:] != tr.serving[:-1])[0] + 1
            for r in change:
                empty_before = tr.queue[r - 1].sum() == 0
                assert tr.kinds[r] == EV_DEPARTURE or (tr.kinds[r] == EV_ARRIVAL and empty_before)
        assert collapse_gap(tr, pb.config, curve) >= 0.0


def test_idling_negative_control():
    pb = desk_problem(1024)
    policy = Policy.parse("gcmu-preemptive", pb.config, pb.cost).with_release(pb.config.T / 2)
    tr = simulate(pb.config, pb.cost, policy, 0, 0)
    dev, norm = workload_check(tr, pb.config)
    assert dev > 1e-3 * (1 + norm)
    assert tr.invariant_residuals()["flow_balance"] == 0.0


def test_empty_run():
    cfg = unit_config([1.0], [1.0], [0.1], [1.0], T=2.0, ia_dist="deterministic")
    tr = simulate_preemptive(cfg, CostSpec.uniform(1), seed=0)
    sc = scale_trajectory(tr, cfg)
    assert np.all(sc.q_tilde == 0)
    assert np.allclose(sc.a_tilde[:, 0], -0.1 * tr.times / cfg.scale)
    curve = MinCurve(build_config([1.0], [1.0], n=4, b_n=1.0), CostSpec.uniform(1))
    assert workload_check(tr, cfg)[0] == 0.0
    assert collapse_gap(tr, cfg, curve) == 0.0
    assert tr.cost_integral == 0.0


def test_collapse_single_class_formula():
    cfg = build_config([1.0], [1.0], n=400, b_n=3.0, mu_tilde=[2.0], lam_tilde=[2.0])
    curve = MinCurve(cfg, CostSpec.uniform(1))
    tr = simulate_preemptive(cfg, CostSpec.uniform(1), seed=1)
    q = tr.queue[:, 0] / cfg.scale
    theta_n, theta = cfg.theta_n[0], cfg.theta[0]
    assert collapse_gap(tr, cfg, curve) == pytest.approx(np.max(np.abs(q - theta_n / theta * q)), abs=1e-12)


@pytest.mark.parametrize("spec", ["exponential", "erlang:3", "hyperexponential:0.4,0.5,2.0"])
def test_renewal_stream_mean(spec):
    dist = Distribution.parse(spec)
    rate = 7.0
    s = RenewalStream(0, 0, dist, rate, stream_rng(1, 0, 0, 0))
    x = s.increments(1_000_000)
    assert np.all(x > 0)
    sigma = np.sqrt(dist.variance) / rate
    assert abs(x.mean() - 1 / rate) <= 5 * sigma / 1e3


def test_streams_are_independent_of_class_count():
    a = stream_rng(9, 3, 1, 0).random(5)
    b = stream_rng(9, 3, 1, 0).random(5)
    c = stream_rng(9, 3, 1, 1).random(5)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_policy_parsing_errors():
    pb = desk_problem(64)
    with pytest.raises(ValueError):
        Policy.parse("fifo", pb.config, pb.cost)
    with pytest.raises(ValueError):
        Policy.parse("static:0,0", pb.config, pb.cost)
