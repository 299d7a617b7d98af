"""Command-line entry point: ``gencmu <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import ExperimentPlan, run_convergence_study, run_policy_comparison
from .game import dp_oracle_value, solve_value_full, solve_value_reduced
from .mincurve import MinCurve
from .model import Problem, desk_problem, load_problem
from .rscost import mc_diagnostics, risk_sensitive_estimate
from .sim import Policy, path_costs, simulate, workload_check

EXIT_INVARIANT = 3


def _problem(args) -> Problem:
    if args.config:
        pb = load_problem(args.config)
    else:
        pb = desk_problem(n=1024, beta=getattr(args, "beta", None) or 0.2)
    return pb


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    pb = _problem(args)
    cfg, cost = pb.config, pb.cost
    out = _out(args)
    policy = Policy.parse(args.policy, cfg, cost)
    costs = path_costs(cfg, cost, policy, args.seed, range(args.replications))
    tol = {"alloc_rate": 1e-12, "workload": 1e-9}
    bad = False
    for r in range(min(args.dump, args.replications)):
        tr = simulate(cfg, cost, policy, args.seed, r)
        tr.to_csv(out / f"trajectory_{r:04d}.csv")
        inv = tr.invariant_residuals()
        if policy.name.startswith("gcmu"):
            dev, norm = workload_check(tr, cfg)
            inv["workload"] = dev / (1.0 + norm)
        bad = bad or any(v > tol.get(k, 0.0) for k, v in inv.items())
    with open(out / "costs.csv", "w") as fh:
        fh.write("replication,path_cost,policy,config_hash,seed,version\n")
        for r, c in enumerate(costs):
            fh.write(f"{r},{c!r},{policy.name},{pb.fingerprint()},{args.seed},{__version__}\n")
    summary = {"policy": policy.name, "n": cfg.n, "b_n": cfg.b_n, "replications": args.replications}
    if args.replications >= 2:
        est = risk_sensitive_estimate(costs, cfg.b_n, seed=args.seed)
        summary.update(est.row())
        summary.update({k: v for k, v in mc_diagnostics(est).items() if k != "ess"})
    print(json.dumps(summary, indent=2))
    return EXIT_INVARIANT if bad else 0


def cmd_solve_game(args) -> int:
    pb = _problem(args)
    cfg, cost = pb.config, pb.cost
    curve = MinCurve(cfg, cost)
    out = _out(args)
    full = solve_value_full(cfg, curve, cost, m=args.grid_m, restarts=args.restarts, seed=args.seed)
    red = solve_value_reduced(cfg, curve, cost, m=2 * args.grid_m, seed=args.seed)
    dp = dp_oracle_value(cfg, curve, cost, K=args.K, W=args.W, w_max=args.w_max)
    full.psi_star.to_csv(out / "psi_star.csv")
    full.w_star.to_csv(out / "w_star.csv")
    full.phi_star.sampled().to_csv(out / "phi_star.csv")
    full.zeta_star.to_csv(out / "zeta_star.csv")
    summary = {
        "value_full": full.value, "value_reduced": red.value, "value_dp": dp,
        "diagnostics": {k: v for k, v in full.diagnostics.items()},
        "config_hash": pb.fingerprint(), "seed": args.seed, "version": __version__,
    }
    with open(out / "game_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(json.dumps({k: summary[k] for k in ("value_full", "value_reduced", "value_dp")}, indent=2))
    return 0


def cmd_dump_curve(args) -> int:
    pb = _problem(args)
    curve = MinCurve(pb.config, pb.cost)
    w = np.linspace(0.0, args.w_max, args.points)
    f = curve.min_curve(w)
    c = curve.level_of_workload(w)
    out = _out(args)
    names = [f"f{i + 1}" for i in range(pb.config.d)]
    with open(out / "curve.csv", "w") as fh:
        fh.write(",".join(["w", *names, "c"]) + "\n")
        for wi, fi, ci in zip(w, f, c):
            fh.write(",".join(repr(float(v)) for v in (wi, *fi, ci)) + "\n")
    print(out / "curve.csv")
    return 0


def _plan(args, policies) -> ExperimentPlan:
    pb = _problem(args)
    grid = tuple(int(v) for v in args.n_grid.split(","))
    return ExperimentPlan(pb, n_grid=grid, beta=args.beta, policies=tuple(policies),
                          replications=args.replications, seed=args.seed, out_dir=args.out,
                          game_m=args.grid_m, game_restarts=args.restarts)


def cmd_converge(args) -> int:
    policies = args.policy.split("+") if args.policy else ["gcmu-preemptive", "gcmu-nonpreemptive"]
    report = run_convergence_study(_plan(args, policies))
    for row in report.rows:
        print(f"{row['policy']:>20} n={row['n']:>6} j_n={row['j_n']:.6f} V={row['V']:.6f} "
              f"gap={row['gap']:.6f} +/-{row['ci_halfwidth']:.6f} ess={row['ess']:.0f}")
    if not report.ok:
        print("exact invariant failure; see convergence.csv", file=sys.stderr)
        return EXIT_INVARIANT
    return 0


def cmd_compare(args) -> int:
    policies = args.policy.split("+") if args.policy else ["gcmu-preemptive", "static:worst"]
    report = run_policy_comparison(_plan(args, policies))
    for row in report.rows:
        mark = " *" if row["off_minimum"] else ""
        print(f"{row['policy']:>20} n={row['n']:>6} j_n={row['j_n']:.6f} +/-{row['ci_halfwidth']:.6f}{mark}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gencmu", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, replications=1000):
        sp.add_argument("--config", help="JSON problem file (default: the desk plan)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default="out")
        sp.add_argument("--replications", type=int, default=replications)

    s = sub.add_parser("simulate", help="simulate one policy and report path costs")
    common(s)
    s.add_argument("--policy", default="gcmu-preemptive",
                   help="gcmu-preemptive | gcmu-nonpreemptive | static:<i,j,...|best|worst>")
    s.add_argument("--dump", type=int, default=1, help="trajectories to write as CSV")
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("solve-game", help="value of the limit game by three solvers")
    common(g)
    g.add_argument("--grid-m", type=int, default=64)
    g.add_argument("--restarts", type=int, default=16)
    g.add_argument("--K", type=int, default=400)
    g.add_argument("--W", type=int, default=800)
    g.add_argument("--w-max", type=float, default=None)
    g.set_defaults(func=cmd_solve_game)

    c = sub.add_parser("dump-curve", help="tabulate the minimizing curve")
    common(c)
    c.add_argument("--w-max", type=float, default=5.0)
    c.add_argument("--points", type=int, default=501)
    c.set_defaults(func=cmd_dump_curve)

    for name, func, help_ in (("converge", cmd_converge, "convergence study over n"),
                              ("compare", cmd_compare, "policy comparison over n")):
        e = sub.add_parser(name, help=help_)
        common(e, replications=20000)
        e.add_argument("--policy", default=None, help="policies joined by '+'")
        e.add_argument("--n-grid", default="64,256,1024,4096")
        e.add_argument("--beta", type=float, default=0.2)
        e.add_argument("--grid-m", type=int, default=64)
        e.add_argument("--restarts", type=int, default=16)
        e.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return int(args.func(args))


if __name__ == "__main__":
    sys.exit(main())
