"""Command line entry points: solve, simulate, certify, gen."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

from .certify import certificate_rho, sandwich
from .colgen import colgen_run
from .errors import TreepackError
from .gen import random_scenario
from .scenario import (
    Scenario,
    profile_scenario,
    resolve_scenario,
    save_scenario,
    scenario_to_dict,
)
from .simulate import control_overhead, run_sim


def _load(args) -> Scenario:
    if getattr(args, "profile", None):
        return profile_scenario(args.profile, scale=args.scale, mode=args.mode)
    if not args.scenario:
        raise TreepackError("give a scenario path/name or --profile")
    sc = resolve_scenario(args.scenario)
    if getattr(args, "mode", None) and args.mode != sc.mode:
        from .net import build_overlays

        sc.mode = args.mode
        sc.overlays = build_overlays(sc.network, sc.sessions, args.mode, hub=sc.hub)
    return sc


def _write_csv(path: Path, rows) -> None:
    rows = list(rows)
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def _solver_overrides(args) -> dict:
    return {
        "oracle": args.oracle,
        "pricing_interval": args.delta,
        "iterations": args.iterations,
        "step_rule": args.step_rule,
        "step_size": args.step_size,
        "window_start": args.window_start,
        "detect_convergence": (False if args.no_detect else None),
    }


def cmd_solve(args) -> int:
    sc = _load(args)
    cfg = sc.solver_config(trace=True, **_solver_overrides(args))
    t0 = time.perf_counter()
    result = colgen_run(sc.network, sc.sessions, sc.overlays, cfg)
    elapsed = time.perf_counter() - t0
    report = {
        "scenario": sc.name,
        "mode": sc.mode,
        "oracle": cfg.oracle,
        "pricing_interval": cfg.pricing_interval,
        "iterations_used": result.iterations,
        "converged": result.converged,
        "primal": result.primal,
        "primal_avg": result.primal_avg,
        "dual": result.dual,
        "x": result.x,
        "x_avg": result.x_avg,
        "pool_sizes": {
            sid: len(result.pool.session_trees(sid))
            for sid in sorted(result.pool.trees)
        },
        "pricing_agreement": {
            sid: list(pair) for sid, pair in result.pricing_agreement.items()
        },
        "a3_flags": result.a3_flags,
        "seconds": elapsed,
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "trace.csv", result.trace or [])
        _write_csv(
            out / "admissions.csv",
            (
                {
                    "iteration": a.iteration,
                    "session": a.session_id,
                    "tree": "-".join(map(str, a.key)),
                    "cost": a.cost,
                    "pool_size": a.pool_size,
                }
                for a in result.pool.admissions
            ),
        )
        (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    print(json.dumps(report, indent=2))
    return 0


def cmd_simulate(args) -> int:
    if args.overhead_only:
        n, m, slot = int(args.overhead_only[0]), int(args.overhead_only[1]), args.overhead_only[2]
        data_rate = float(args.overhead_only[3]) if len(args.overhead_only) > 3 else None
        stats = control_overhead(n, m, Fraction(slot), data_rate)
        for key, val in stats.items():
            if key.endswith("_bps"):
                print(f"{key}: {float(val) / 1000.0:g} Kbps")
            elif key == "overhead_fraction":
                print(f"{key}: {float(val) * 100.0:g} %")
            else:
                print(f"{key}: {val}")
        return 0
    sc = _load(args)
    overrides = {
        "horizon_slots": args.slots,
        "slot_s": args.slot_s,
        "oracle": args.oracle,
        "pricing_interval": args.delta,
    }
    if args.zero_delay:
        links = [
            (ln.tail, ln.head, ln.capacity, 0.0) for ln in sc.network.links
        ]
        from .net import Network, build_overlays

        sc.network = Network(links)
        sc.overlays = build_overlays(sc.network, sc.sessions, sc.mode, hub=sc.hub)
    cfg = sc.sim_config(**overrides)
    result = run_sim(sc.network, sc.sessions, sc.overlays, cfg)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "sim_trace.csv", result.rows)
    last = result.rows[-1]
    print(json.dumps({
        "scenario": sc.name,
        "slots": cfg.horizon_slots,
        "final": last,
        "control_forward_bits": result.control_forward_bits,
        "control_feedback_bits": result.control_feedback_bits,
    }, indent=2))
    return 0


def cmd_certify(args) -> int:
    sc = _load(args)
    cfg = sc.solver_config(**_solver_overrides(args))
    result = colgen_run(sc.network, sc.sessions, sc.overlays, cfg)
    rho = args.rho if args.rho is not None else certificate_rho(cfg.oracle, sc.sessions)
    cert = sandwich(
        result, sc.network, sc.sessions, sc.overlays, rho,
        use_exact=not args.no_exact,
    )
    doc = {
        "scenario": sc.name,
        "rho": cert.rho,
        "dual_restricted": cert.dual_restricted,
        "optimal_objective": cert.optimal_objective,
        "dual_scaled": cert.dual_scaled,
        "primal_avg": cert.primal_avg,
        "certifying": cert.certifying,
        "settled": cert.settled,
        "verdicts": cert.verdicts,
        "notes": cert.notes,
        "ok": cert.ok,
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "certificate.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(json.dumps(doc, indent=2))
    return 0 if cert.ok else 1


def cmd_gen(args) -> int:
    sc = random_scenario(
        seed=args.seed,
        n_nodes=args.nodes,
        n_sessions=args.sessions,
        edge_prob=args.edge_prob,
    )
    if args.out:
        save_scenario(sc, args.out)
        print(f"wrote {args.out}")
    else:
        print(json.dumps(scenario_to_dict(sc), indent=2))
    return 0


def _add_solver_flags(p) -> None:
    p.add_argument("--oracle", help="exact | approx:<level> | arborescence")
    p.add_argument("--delta", type=int, help="iterations between global pricing rounds")
    p.add_argument("--iterations", type=int)
    p.add_argument("--step-rule", choices=["constant", "diminishing"], dest="step_rule")
    p.add_argument("--step-size", type=float, dest="step_size")
    p.add_argument("--window-start", type=int, dest="window_start",
                   help="iteration the time averages start from")
    p.add_argument("--no-detect", action="store_true",
                   help="run the full budget, no convergence stop")
    p.add_argument("--out", help="directory for trace/report files")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="treepack",
        description="Multi-tree multicast rate allocation solver and simulator",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="run the column generation solver")
    sp.add_argument("scenario", nargs="?", help="scenario file or packaged name")
    sp.add_argument("--profile", help="A1..C3 profile built on the fly")
    sp.add_argument("--scale", type=float, default=1.0)
    sp.add_argument("--mode", choices=["separate", "universal"])
    _add_solver_flags(sp)
    sp.set_defaults(func=cmd_solve)

    sm = sub.add_parser("simulate", help="event-driven protocol simulation")
    sm.add_argument("scenario", nargs="?")
    sm.add_argument("--profile")
    sm.add_argument("--scale", type=float, default=1.0)
    sm.add_argument("--mode", choices=["separate", "universal"])
    sm.add_argument("--slots", type=int)
    sm.add_argument("--slot-s", type=float, dest="slot_s")
    sm.add_argument("--oracle")
    sm.add_argument("--delta", type=int)
    sm.add_argument("--zero-delay", action="store_true")
    sm.add_argument("--out")
    sm.add_argument(
        "--overhead-only", nargs="+", metavar="N",
        help="N_NODES N_LINKS SLOT_S [DATA_RATE_BPS]: print control arithmetic",
    )
    sm.set_defaults(func=cmd_simulate)

    cp = sub.add_parser("certify", help="solve then certify the bound chain")
    cp.add_argument("scenario", nargs="?")
    cp.add_argument("--profile")
    cp.add_argument("--scale", type=float, default=1.0)
    cp.add_argument("--mode", choices=["separate", "universal"])
    cp.add_argument("--rho", type=float, help="override the oracle ratio")
    cp.add_argument("--no-exact", action="store_true",
                    help="skip the enumeration-backed reference optimum")
    _add_solver_flags(cp)
    cp.set_defaults(func=cmd_certify)

    gp = sub.add_parser("gen", help="emit a random test scenario")
    gp.add_argument("--seed", type=int, default=0)
    gp.add_argument("--nodes", type=int, default=8)
    gp.add_argument("--sessions", type=int, default=1)
    gp.add_argument("--edge-prob", type=float, default=0.35, dest="edge_prob")
    gp.add_argument("--out")
    gp.set_defaults(func=cmd_gen)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TreepackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
