"""Policy parsing and the public simulation entry points."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import CostSpec, SystemConfig
from . import engine
from .streams import Primitives, draw_primitives
from .trajectory import Trajectory

POLICIES = ("gcmu-preemptive", "gcmu-nonpreemptive", "static:<order>")


@dataclass(frozen=True)
class Policy:
    """A scheduling rule understood by the event engine.

    ``order`` lists classes from highest to lowest priority (0-based) and
    is used only by static priority.  ``release`` keeps the server idle on
    ``[0, release)``.
    """

    name: str
    code: int
    order: tuple[int, ...] = ()
    release: float = 0.0

    @classmethod
    def parse(cls, spec: str, config: SystemConfig, cost: CostSpec | None = None) -> "Policy":
        if spec == "gcmu-preemptive":
            return cls(spec, engine.PREEMPTIVE)
        if spec == "gcmu-nonpreemptive":
            return cls(spec, engine.NONPREEMPTIVE)
        if spec.startswith("static:"):
            arg = spec.split(":", 1)[1]
            if arg in ("best", "worst"):
                # rank by the top index level mu_i sup C_i'; "worst" reverses it
                cost = cost or CostSpec.uniform(config.d)
                level = cost.level_sup(config.mu)
                order = tuple(int(i) for i in np.argsort(-level, kind="stable"))
                if arg == "worst":
                    order = order[::-1]
            else:
                order = tuple(int(v) for v in arg.split(","))
            if sorted(order) != list(range(config.d)):
                raise ValueError(f"static order {order} is not a permutation of the classes")
            return cls(spec, engine.STATIC, order)
        raise ValueError(f"unknown policy {spec!r}; expected one of {POLICIES}")

    def with_release(self, release: float) -> "Policy":
        return Policy(self.name + f"+idle<{release:g}", self.code, self.order, release)


def _engine_args(config: SystemConfig, cost: CostSpec, policy: Policy, prim: Primitives):
    arr, svc, counts = prim.padded()
    order = np.array(policy.order or range(config.d), dtype=np.int64)
    return (policy.code, order, float(policy.release), float(config.T), arr, counts, svc,
            float(config.scale), np.asarray(config.mu, float), cost.a, cost.b, cost.p)


def simulate(config: SystemConfig, cost: CostSpec, policy: Policy | str, seed: int,
             replication: int = 0, primitives: Primitives | None = None) -> Trajectory:
    """One recorded run on ``[0, T]`` with primitives drawn from ``(seed, replication)``."""
    if isinstance(policy, str):
        policy = Policy.parse(policy, config, cost)
    prim = primitives or draw_primitives(config, seed, replication)
    out = engine.run_queue(*_engine_args(config, cost, policy, prim), True)
    rows = out[0]
    return Trajectory(
        times=out[1][:rows], queue=out[2][:rows], serving=out[3][:rows], alloc=out[4][:rows],
        arrivals=out[5][:rows], departures=out[6][:rows], kinds=out[7][:rows],
        cost_integral=float(out[8]), policy=policy.name, seed=seed, replication=replication,
        requirements=list(prim.requirements),
    )


def simulate_preemptive(config, cost, curve=None, seed=0, replication=0) -> Trajectory:
    """Preemptive-resume generalized c-mu rule.

    ``curve`` is accepted for interface symmetry; the priority index only
    needs ``mu`` and the cost.
    """
    return simulate(config, cost, Policy("gcmu-preemptive", engine.PREEMPTIVE), seed, replication)


def simulate_nonpreemptive(config, cost, curve=None, seed=0, replication=0) -> Trajectory:
    return simulate(config, cost, Policy("gcmu-nonpreemptive", engine.NONPREEMPTIVE), seed, replication)


def simulate_static_priority(config, order, seed=0, cost=None, replication=0) -> Trajectory:
    cost = cost or CostSpec.uniform(config.d)
    policy = Policy("static:" + ",".join(map(str, order)), engine.STATIC, tuple(order))
    return simulate(config, cost, policy, seed, replication)


def path_costs(config: SystemConfig, cost: CostSpec, policy: Policy | str, seed: int,
               replications) -> np.ndarray:
    """``int_0^T C(Q~(t)) dt`` for each replication index in ``replications``."""
    if isinstance(policy, str):
        policy = Policy.parse(policy, config, cost)
    reps = list(replications)
    out = np.empty(len(reps))
    for k, r in enumerate(reps):
        prim = draw_primitives(config, seed, r)
        out[k] = engine.run_cost_only(*_engine_args(config, cost, policy, prim))
    return out
