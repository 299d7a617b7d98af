"""Convergence studies and policy comparisons over a grid of scaling levels."""
from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .game import dp_oracle_value, solve_value_full, solve_value_reduced
from .mincurve import MinCurve
from .model import Problem
from .rscost import mc_diagnostics, paired_difference, risk_sensitive_estimate
from .sim import Policy, collapse_gap, path_costs, simulate, workload_check

log = logging.getLogger(__name__)

WORKLOAD_TOL = 1e-9
CHECK_SEEDS = 200


@dataclass
class ExperimentPlan:
    """What to simulate: a limit problem, an ``n`` grid with ``b_n = n**beta``, and policies."""

    problem: Problem
    n_grid: tuple[int, ...] = (64, 256, 1024, 4096)
    beta: float = 0.2
    policies: tuple[str, ...] = ("gcmu-preemptive", "gcmu-nonpreemptive")
    replications: int = 20000
    seed: int = 0
    out_dir: str = "out"
    check_seeds: int = CHECK_SEEDS
    game_m: int = 64
    game_restarts: int = 16
    dp_K: int = 400
    dp_W: int = 800
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.beta < 0.5:
            raise ValueError("beta must lie strictly between 0 and 1/2")
        grid = tuple(int(n) for n in self.n_grid)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("n grid must be strictly increasing")
        self.n_grid = grid
        if self.replications < 2:
            raise ValueError("need at least two replications")

    def problem_at(self, n: int) -> Problem:
        cfg = self.problem.config.with_n(n, b_n=float(n) ** self.beta)
        return Problem(cfg, self.problem.cost, self.problem.source)

    def manifest(self) -> dict:
        return {
            "version": __version__,
            "config_hash": self.problem.fingerprint(),
            "config": self.problem.config.to_dict(),
            "cost": self.problem.cost.to_dict(),
            "n_grid": list(self.n_grid),
            "beta": self.beta,
            "policies": list(self.policies),
            "replications": self.replications,
            "seed": self.seed,
            "check_seeds": self.check_seeds,
            "game": {"m": self.game_m, "restarts": self.game_restarts, "K": self.dp_K, "W": self.dp_W},
        }


def worker_count() -> int:
    cap = os.environ.get("MDHT_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def _cost_block(args):
    problem, policy, seed, lo, hi = args
    return lo, path_costs(problem.config, problem.cost, policy, seed, range(lo, hi))


def replicate(problem: Problem, policy: str, seed: int, R: int, workers: int | None = None) -> np.ndarray:
    """Path costs of replications ``0..R-1``, merged in replication order."""
    workers = workers or worker_count()
    if workers <= 1 or R < 1000:
        return path_costs(problem.config, problem.cost, policy, seed, range(R))
    edges = np.linspace(0, R, 4 * workers + 1).astype(int)
    jobs = [(problem, policy, seed, int(a), int(b)) for a, b in zip(edges, edges[1:]) if b > a]
    out = np.empty(R)
    with ProcessPoolExecutor(workers) as pool:
        for lo, block in pool.map(_cost_block, jobs):
            out[lo:lo + block.shape[0]] = block
    return out


def solve_limit_game(plan: ExperimentPlan) -> dict:
    """Value of the limit game by all three solvers."""
    cfg, cost = plan.problem.config, plan.problem.cost
    curve = MinCurve(cfg, cost)
    full = solve_value_full(cfg, curve, cost, m=plan.game_m, restarts=plan.game_restarts, seed=plan.seed)
    red = solve_value_reduced(cfg, curve, cost, m=2 * plan.game_m, seed=plan.seed)
    dp = dp_oracle_value(cfg, curve, cost, K=plan.dp_K, W=plan.dp_W)
    return {"full": full.value, "reduced": red.value, "dp": dp,
            "V": red.value, "restart_spread": full.diagnostics["restart_spread"]}


def _checks(problem: Problem, policy: str, seed: int, count: int, curve: MinCurve) -> dict:
    worst, gaps, flow = 0.0, [], 0.0
    for r in range(count):
        tr = simulate(problem.config, problem.cost, policy, seed, r)
        dev, norm = workload_check(tr, problem.config)
        worst = max(worst, dev / (1.0 + norm))
        gaps.append(collapse_gap(tr, problem.config, curve))
        inv = tr.invariant_residuals()
        flow = max(flow, inv["flow_balance"], inv["negative_queue"], inv["serve_empty"])
    return {"workload_max": worst, "collapse_median": float(np.median(gaps)), "flow_max": flow}


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def _provenance(plan: ExperimentPlan) -> dict:
    return {"config_hash": plan.problem.fingerprint(), "seed": plan.seed, "version": __version__}


@dataclass
class StudyReport:
    rows: list[dict]
    game: dict
    ok: bool
    files: list[str]
    costs: dict = field(default_factory=dict, repr=False)


def run_convergence_study(plan: ExperimentPlan, workers: int | None = None,
                          keep_costs: bool = False) -> StudyReport:
    """``j_n`` per policy and ``n``, the game value, and the exact-invariant checks.

    Writes ``convergence.csv``, ``game.csv`` and ``manifest.json`` into
    ``plan.out_dir``.  ``ok`` is false when the workload identity or flow
    balance fails on any checked run.
    """
    out = Path(plan.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    game = solve_limit_game(plan)
    V = game["V"]
    prov = _provenance(plan)
    rows, ok, all_costs = [], True, {}
    for n in plan.n_grid:
        pb = plan.problem_at(n)
        curve = MinCurve(pb.config, pb.cost)
        for policy in plan.policies:
            Policy.parse(policy, pb.config, pb.cost)
            costs = replicate(pb, policy, plan.seed, plan.replications, workers)
            all_costs[(policy, n)] = costs
            est = risk_sensitive_estimate(costs, pb.config.b_n, seed=plan.seed)
            diag = mc_diagnostics(est)
            chk = _checks(pb, policy, plan.seed, plan.check_seeds, curve)
            exact = chk["flow_max"] == 0.0
            if policy.startswith("gcmu"):
                exact = exact and chk["workload_max"] <= WORKLOAD_TOL
            ok = ok and exact
            rows.append({
                "policy": policy, "n": n, "b_n": pb.config.b_n, **est.row(),
                "V": V, "gap": abs(est.j_n - V), "ess_flag": int(diag["ess_flag"]),
                "jensen_gap": diag["jensen_gap"], **chk, "invariants_ok": int(exact), **prov,
            })
            log.info("n=%d %s j_n=%.6g gap=%.3g ess=%.0f", n, policy, est.j_n, abs(est.j_n - V), est.ess)
    diffs = []
    if "gcmu-preemptive" in plan.policies and "gcmu-nonpreemptive" in plan.policies:
        for n in plan.n_grid:
            b_n = float(n) ** plan.beta
            d, lo, hi = paired_difference(all_costs[("gcmu-nonpreemptive", n)],
                                          all_costs[("gcmu-preemptive", n)], b_n, seed=plan.seed)
            diffs.append({"n": n, "b_n": b_n, "diff": d, "abs_diff": abs(d), "ci_low": lo,
                          "ci_high": hi, **prov})
    _write_csv(out / "convergence.csv", rows)
    _write_csv(out / "game.csv", [{**game, **prov}])
    files = [str(out / "convergence.csv"), str(out / "game.csv")]
    if diffs:
        _write_csv(out / "policy_difference.csv", diffs)
        files.append(str(out / "policy_difference.csv"))
    with open(out / "manifest.json", "w") as fh:
        json.dump({**plan.manifest(), "invariants_ok": ok, "game": game,
                   "note": "trend check at desk scale, not a proof-strength reproduction"},
                  fh, indent=2, sort_keys=True)
    files.append(str(out / "manifest.json"))
    return StudyReport(rows, game, ok, files, all_costs if keep_costs else {})


def run_policy_comparison(plan: ExperimentPlan, workers: int | None = None) -> StudyReport:
    """Per-``n`` table of ``j_n`` across policies; gen-c-mu flagged off the minimum."""
    if len(plan.policies) < 2:
        raise ValueError("a comparison needs at least two policies")
    out = Path(plan.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prov = _provenance(plan)
    rows = []
    for n in plan.n_grid:
        pb = plan.problem_at(n)
        ests = []  # a list, so a policy listed twice keeps both columns
        for policy in plan.policies:
            Policy.parse(policy, pb.config, pb.cost)
            ests.append((policy, risk_sensitive_estimate(
                replicate(pb, policy, plan.seed, plan.replications, workers), pb.config.b_n, seed=plan.seed)))
        best = min(e.j_n for _, e in ests)
        for policy, est in ests:
            flag = policy.startswith("gcmu") and est.j_n - est.half_width > best
            rows.append({"policy": policy, "n": n, "b_n": pb.config.b_n, **est.row(),
                         "off_minimum": int(flag), **prov})
    _write_csv(out / "comparison.csv", rows)
    with open(out / "manifest.json", "w") as fh:
        json.dump(plan.manifest(), fh, indent=2, sort_keys=True)
    return StudyReport(rows, {}, True, [str(out / "comparison.csv"), str(out / "manifest.json")])
