"""Command-line front end: gen | solve | firstbest | icprobe | simulate | sweep.

Every command is deterministic given its flags (seeds are explicit, never
wall-clock). Relative output paths resolve under $EGMARKET_OUTDIR when that
variable is set. Exit codes: 0 success, 1 acceptance-threshold failure,
2 input error, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import equilibrium, firstbest, instances, mechanism, online
from .errors import MarketError, NoConvergence
from .tolerances import TOL_KKT, TOL_SOLVER

EXIT_OK = 0
EXIT_THRESHOLD = 1
EXIT_INPUT = 2
EXIT_NOCONV = 3


def _outpath(p: str) -> Path:
    path = Path(p)
    if not path.is_absolute():
        base = os.environ.get("EGMARKET_OUTDIR")
        if base:
            path = Path(base) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _config_note(args: argparse.Namespace, keys) -> str:
    parts = [f"{k}={getattr(args, k)}" for k in keys if getattr(args, k, None) is not None]
    return "config: " + " ".join(parts)


def _family_from_args(args) -> instances.InstanceFamily:
    kwargs = dict(budget_range=(args.budget_lo, args.budget_hi),
                  tau_range=(args.tau_lo, args.tau_hi))
    if args.family == "uniform":
        return instances.InstanceFamily(values="uniform", lo=args.lo, hi=args.hi,
                                        **kwargs)
    return instances.InstanceFamily(values="lognormal", mu=args.mu,
                                    sigma=args.sigma, v_bar=args.v_bar, **kwargs)


def cmd_gen(args) -> int:
    if args.preset == "example2":
        inst = instances.example2_instance(args.eps)
    else:
        family = _family_from_args(args)
        inst = instances.sample_instance(args.n, args.m, family, args.seed)
    out = _outpath(args.out)
    instances.save_instance(inst, out)
    print(f"wrote {out}: n={inst.n} m={inst.m} v_bar={inst.v_bar!r} "
          f"budgets=[{inst.lam.min()!r}, {inst.lam.max()!r}]")
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = instances.load_instance(args.instance)
    sol = equilibrium.solve_market(inst, tol=args.tol,
                                   max_epochs=args.max_epochs, init=args.init)
    kkt = equilibrium.kkt_verify(inst, sol)
    out = _outpath(args.out)
    extra = {"config": {"tol": args.tol, "kkt_tol": args.kkt_tol,
                        "max_epochs": args.max_epochs, "init": args.init,
                        "instance": str(args.instance)}}
    equilibrium.save_solution(sol, out, kkt=kkt, extra=extra)
    print(f"revenue={sol.revenue!r} kkt_max_residual={kkt.max_residual:.3e} "
          f"binding={[b.value for b in sol.binding]}")
    if kkt.max_residual > args.kkt_tol:
        print(f"kkt residual exceeds threshold {args.kkt_tol}", file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_firstbest(args) -> int:
    inst = instances.load_instance(args.instance)
    sol = equilibrium.solve_market(inst, tol=args.tol)
    fb = firstbest.solve_first_best(inst)
    rr = firstbest.revenue_ratio(inst, sol=sol, fb=fb)
    payload = firstbest.first_best_to_dict(fb)
    target = _outpath(args.solution if args.solution else args.out)
    if args.solution and Path(args.solution).exists():
        with open(args.solution) as fh:
            doc = json.load(fh)
    else:
        doc = {}
    doc["first_best"] = payload
    doc["rev_star"] = rr.rev_star
    doc["rev_fb"] = rr.rev_fb
    doc["ratio"] = rr.ratio
    doc.setdefault("config", {})["firstbest_tol"] = args.tol
    with open(target, "w") as fh:
        json.dump(doc, fh, allow_nan=False, indent=1)
        fh.write("\n")
    print(f"ratio={rr.ratio:.4f}")
    return EXIT_OK


def cmd_icprobe(args) -> int:
    note = _config_note(args, ["batch", "seed", "grid_size", "gain_tol"])
    if args.instance:
        insts = [instances.load_instance(args.instance)]
    else:
        family = instances.InstanceFamily(values="uniform", lo=0.05, hi=1.0,
                                          budget_range=(0.2, 3.0),
                                          tau_range=(1.0, 2.0))
        insts = [instances.sample_instance(
            n=2 + (k % 4), m=5 + 3 * (k % 7), family=family,
            seed=args.seed + k) for k in range(args.batch)]
    reports = []
    worst = 0.0
    over_ok = True
    for inst in insts:
        for i in range(inst.n):
            grid = mechanism.default_misreport_grid(
                inst, i, size=args.grid_size,
                under_only=not args.include_over_reports)
            rep = mechanism.ic_probe(inst, i, grid)
            reports.append(rep)
            worst = max(worst, rep.max_gain)
            over_ok = over_ok and rep.over_reports_clean(args.gain_tol)
    out = _outpath(args.out)
    mechanism.write_ic_csv(reports, out, header_note=note)
    print(f"max_gain={worst:.3e} (threshold {args.gain_tol:g}) "
          f"over_reports_clean={over_ok}")
    if worst > args.gain_tol or not over_ok:
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.instance:
        inst = instances.load_instance(args.instance)
    else:
        inst = online.sweep_stream(args.n, args.m, args.seed,
                                   (args.rho_lo, args.rho_hi), args.tau,
                                   base_seed=args.base_seed)
    trace = online.simulate(inst)
    note = _config_note(args, ["n", "m", "seed", "rho_lo", "rho_hi", "tau"])
    out = _outpath(args.out)
    online.trace_to_csv(trace, out, header_note=note)
    msg = f"revenue={trace.revenue!r} m={trace.m} n={trace.n}"
    if args.report:
        w_star = online.offline_w_star(inst, tol=args.tol)
        rep = online.regret_report(trace, w_star)
        online.save_report(rep, _outpath(args.report),
                           extra={"config": note})
        msg += (f" r_obj_final={rep.r_obj[-1]!r}"
                f" max_strategy_gap={rep.strategy_gap.max()!r}")
    print(msg)
    return EXIT_OK


def cmd_sweep(args) -> int:
    m_values = [int(tok) for tok in args.m_grid.split(",") if tok]
    result = online.regret_sweep(m_values, n=args.n, seeds=args.seeds,
                                 rho_range=(args.rho_lo, args.rho_hi),
                                 tau=args.tau, base_seed=args.base_seed,
                                 tol=args.tol)
    note = _config_note(args, ["m_grid", "seeds", "n", "rho_lo", "rho_hi",
                               "tau", "base_seed", "tol"])
    online.sweep_to_csv(result, _outpath(args.runs_out), header_note=note)
    summary = online.sweep_summary_dict(result)
    summary["config"] = note
    with open(_outpath(args.summary_out), "w") as fh:
        json.dump(summary, fh, allow_nan=False, indent=1)
        fh.write("\n")
    print("m        r_obj/log(m)   strategy_gap   utility_regret  revenue_gap")
    for k, m in enumerate(result.m_values):
        print(f"{m:<8d} {result.median_r_obj_over_log_m[k]:<14.6g} "
              f"{result.median_strategy_gap[k]:<14.6g} "
              f"{result.median_utility_regret[k]:<15.6g} "
              f"{result.median_revenue_gap[k]:<.6g}")
    print(f"slopes: strategy_gap={result.strategy_gap_slope:.3f} "
          f"utility_regret={result.utility_regret_slope:.3f} "
          f"revenue_gap={result.revenue_gap_slope:.3f}")
    ratios = result.median_r_obj_over_log_m
    ok = (all(ratios[k + 1] <= ratios[k] + 1e-9 for k in range(len(ratios) - 1))
          and -0.6 <= result.strategy_gap_slope <= -0.4
          and result.utility_regret_slope <= 0.6
          and result.revenue_gap_slope <= 0.6)
    print(f"scaling_ok={ok}")
    return EXIT_OK if ok else EXIT_THRESHOLD


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="egmarket", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance file")
    g.add_argument("--out", required=True)
    g.add_argument("--preset", choices=["example2"])
    g.add_argument("--eps", type=float, default=0.01)
    g.add_argument("--family", choices=["uniform", "lognormal"], default="uniform")
    g.add_argument("--n", type=int, default=2)
    g.add_argument("--m", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--lo", type=float, default=0.0)
    g.add_argument("--hi", type=float, default=1.0)
    g.add_argument("--mu", type=float, default=0.0)
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--v-bar", type=float, default=None)
    g.add_argument("--budget-lo", type=float, default=0.5)
    g.add_argument("--budget-hi", type=float, default=2.0)
    g.add_argument("--tau-lo", type=float, default=1.0)
    g.add_argument("--tau-hi", type=float, default=2.0)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="offline equilibrium solve + KKT report")
    s.add_argument("--instance", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--tol", type=float, default=TOL_SOLVER)
    s.add_argument("--kkt-tol", type=float, default=TOL_KKT)
    s.add_argument("--max-epochs", type=int, default=40)
    s.add_argument("--init", default="upper")
    s.set_defaults(func=cmd_solve)

    f = sub.add_parser("firstbest", help="first-best benchmark and ratio")
    f.add_argument("--instance", required=True)
    f.add_argument("--solution", help="solution JSON to append first_best into")
    f.add_argument("--out", default="firstbest.json")
    f.add_argument("--tol", type=float, default=TOL_SOLVER)
    f.set_defaults(func=cmd_firstbest)

    ic = sub.add_parser("icprobe", help="misreport grid probe")
    ic.add_argument("--instance")
    ic.add_argument("--batch", type=int, default=50)
    ic.add_argument("--seed", type=int, default=0)
    ic.add_argument("--grid-size", type=int, default=5)
    ic.add_argument("--gain-tol", type=float, default=1e-6)
    ic.add_argument("--include-over-reports", action="store_true")
    ic.add_argument("--out", default="icprobe.csv")
    ic.set_defaults(func=cmd_icprobe)

    sim = sub.add_parser("simulate", help="online pacing simulation")
    sim.add_argument("--instance")
    sim.add_argument("--n", type=int, default=5)
    sim.add_argument("--m", type=int, default=1024)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--base-seed", type=int, default=0)
    sim.add_argument("--rho-lo", type=float, default=0.05)
    sim.add_argument("--rho-hi", type=float, default=0.2)
    sim.add_argument("--tau", type=float, default=1.0)
    sim.add_argument("--tol", type=float, default=TOL_SOLVER)
    sim.add_argument("--out", default="trace.csv")
    sim.add_argument("--report", help="also write a regret report JSON")
    sim.set_defaults(func=cmd_simulate)

    sw = sub.add_parser("sweep", help="regret scaling sweep over horizons")
    sw.add_argument("--m-grid", default="1024,4096,16384,65536")
    sw.add_argument("--seeds", type=int, default=20)
    sw.add_argument("--n", type=int, default=5)
    sw.add_argument("--rho-lo", type=float, default=0.05)
    sw.add_argument("--rho-hi", type=float, default=0.2)
    sw.add_argument("--tau", type=float, default=1.0)
    sw.add_argument("--base-seed", type=int, default=0)
    sw.add_argument("--tol", type=float, default=TOL_SOLVER)
    sw.add_argument("--runs-out", default="sweep_runs.csv")
    sw.add_argument("--summary-out", default="sweep_summary.json")
    sw.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NoConvergence as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except (MarketError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
