"""Command-line entry point: solve, simulate, sweep, statespace, compare, verify.

Exit codes: 0 success, 1 usage/config error, 2 state-space/overflow refusal.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import model, oracle, reporting, solver
from .config import ConfigError, ScalingConfig, apply_overrides
from .reporting import ScalerSpec, SweepSpec
from .scalers import make_scaler
from .simulator import SimConfig, rng_streams, run

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_REFUSED = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for refusals here.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _load_cfg(args) -> tuple[ScalingConfig, dict]:
    with open(args.config) as fh:
        d = yaml.safe_load(fh)
    overrides = apply_overrides(d, args.set or [])
    return ScalingConfig.from_dict(d), overrides


def cmd_solve(args) -> int:
    cfg, overrides = _load_cfg(args)
    try:
        states, umodel, policy = solver.solve(cfg, state_limit=args.state_limit)
    except model.StateSpaceTooLarge as exc:
        bound = model.closed_form_state_count(cfg.max_replicas, cfg.max_queue, cfg.n_classes, cfg.n_nodes)
        print(f"refused: {exc}", file=sys.stderr)
        print(f"closed-form state count M^K Qm^K K(N+1) = {bound}", file=sys.stderr)
        return EXIT_REFUSED
    table = solver.PolicyTable.from_solution(policy, states, cfg)
    out = Path(args.out or "policy.tsv")
    solver.save_policy(table, out)
    print(f"states: {len(states)}")
    print(f"rho: {policy.rho!r}")
    print(f"lambda_bar: {policy.lambda_bar!r}")
    print(f"epsilon: {policy.epsilon!r}")
    print(f"iterations: {policy.iterations}")
    print(f"final_residual: {policy.residual_history[-1]!r}")
    print(f"policy written to {out}")
    if overrides:
        print(f"overrides: {overrides}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg, overrides = _load_cfg(args)
    policy_table = None
    if args.scaler == "smdp":
        if not args.policy:
            print(
                "error: the smdp scaler needs --policy pointing at a solved policy file; "
                "produce one with the `solve` subcommand",
                file=sys.stderr,
            )
            return EXIT_USAGE
        policy_table = solver.load_policy(args.policy)
        if policy_table.meta["config_hash"] != cfg.hash():
            print(
                "warning: policy was solved for a different config "
                f"(hash {policy_table.meta['config_hash']} != {cfg.hash()}); "
                "lookups are clamped into the policy bounds",
                file=sys.stderr,
            )
    try:
        scaler = make_scaler(
            args.scaler, cfg, rng_streams(args.seed)[3],
            threshold=args.threshold, policy_table=policy_table, window=args.window,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    sim = SimConfig(
        horizon_events=args.horizon,
        seed=args.seed,
        allocator=args.allocator,
        trace_path=args.trace,
        debug_checks=args.debug_checks,
    )
    metrics = run(cfg, sim, scaler)
    doc = {
        "scaler": args.scaler,
        "threshold": args.threshold,
        "allocator": args.allocator,
        "seed": args.seed,
        "horizon_events": args.horizon,
        "overrides": overrides,
        "metrics": {
            "arrivals": metrics.arrivals,
            "completed": metrics.completed,
            "avg_delay": metrics.avg_delay,
            "avg_delay_per_class": list(metrics.avg_delay_per_class),
            "avg_replicas": metrics.avg_replicas,
            "avg_replicas_per_class": list(metrics.avg_replicas_per_class),
            "avg_replicas_event_sampled": metrics.avg_replicas_event_sampled,
            "throughput": metrics.throughput,
            "total_reward": metrics.total_reward,
            "max_queue": metrics.max_queue,
            "downgraded_scaleups": metrics.downgraded_scaleups,
            "measured_time": metrics.measured_time,
        },
    }
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"metrics written to {args.out}")
    else:
        print(text)
    return EXIT_OK


def cmd_statespace(args) -> int:
    cfg, overrides = _load_cfg(args)
    closed = model.state_space_size(cfg, model.SizeFormula.CLOSED_FORM)
    print(f"closed-form count M^K Qm^K K(N+1): {closed}")
    bound = model.enumeration_upper_bound(cfg)
    if bound > args.state_limit:
        print(
            f"exact count: not computed (upper bound {bound} exceeds limit {args.state_limit})"
        )
    else:
        exact = model.state_space_size(cfg, model.SizeFormula.EXACT)
        print(f"exact enumerated count: {exact}")
        print(
            "(the closed form ignores the capacity constraint, zero-replica "
            "departure exclusions, and counts M/Qm instead of M+1/Qm+1 levels, "
            "so the two differ)"
        )
    try:
        time_bound, space_bound = solver.complexity_bounds(cfg, args.gamma)
        print(f"time bound at gamma={args.gamma}: {time_bound!r}")
        print(f"space bound: {space_bound!r}")
    except OverflowError as exc:
        print(f"complexity bounds overflow: {exc}")
    if overrides:
        print(f"overrides: {overrides}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    with open(args.config) as fh:
        d = yaml.safe_load(fh)
    overrides = apply_overrides(d, args.set or [])
    spec = SweepSpec.from_dict(d, base_dir=Path(args.config).parent)
    rows = reporting.run_sweep(spec)
    out = Path(args.out or "sweep")
    rows_path = reporting.emit(rows, out.with_suffix(".csv"))
    agg_path = reporting.emit_aggregate(reporting.aggregate(rows), Path(f"{out}_agg.csv"))
    meta_path = reporting.write_metadata(
        Path(f"{out}.meta.yaml"),
        {"config": str(args.config), "overrides": overrides},
        rows,
    )
    print(f"rows: {rows_path}\naggregate: {agg_path}\nmetadata: {meta_path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg, overrides = _load_cfg(args)
    thresholds = args.threshold or [0.1, 0.05]
    scalers = [ScalerSpec("smdp")]
    scalers += [ScalerSpec("mnt", threshold=t) for t in thresholds]
    scalers.append(ScalerSpec("rf"))
    spec = SweepSpec(
        scenario=cfg,
        scenario_id=args.scenario_id,
        scalers=tuple(scalers),
        allocators=tuple(args.allocator or ("ff", "rf")),
        seeds=tuple(args.seeds),
        horizon_events=args.horizon,
        lambda_scales=tuple(args.points),
        state_limit=args.state_limit,
        max_workers=args.workers,
    )
    rows = reporting.run_sweep(spec)
    out = Path(args.out or "compare")
    rows_path = reporting.emit(rows, out.with_suffix(".csv"))
    agg_path = reporting.emit_aggregate(reporting.aggregate(rows), Path(f"{out}_agg.csv"))
    meta_path = reporting.write_metadata(
        Path(f"{out}.meta.yaml"),
        {
            "config": str(args.config),
            "overrides": overrides,
            "thresholds": list(thresholds),
            "points": list(args.points),
            "seeds": list(args.seeds),
            "horizon_events": args.horizon,
        },
        rows,
    )
    skipped = sum(1 for r in rows if r.error)
    print(f"rows: {rows_path}\naggregate: {agg_path}\nmetadata: {meta_path}")
    if skipped:
        print(f"skipped cells: {skipped} (see metadata for reasons)")
    return EXIT_OK


def cmd_verify(args) -> int:
    """Fast self-checks pitting the solver against its independent references."""
    failures = 0

    def check(name: str, ok: bool, detail: str = ""):
        nonlocal failures
        status = "PASS" if ok else "FAIL"
        print(f"[{status}] {name}" + (f" ({detail})" if detail else ""))
        failures += 0 if ok else 1

    tiny = ScalingConfig(
        n_nodes=1, n_classes=1, cpu_demand=(1,), capacity=(2,),
        arrival_rate=(2.0,), service_rate=(1.0,), income=(1.0,),
        unit_cost=1.0, discount=6.0, epsilon=1e-9,
        max_replicas=2, max_queue=2,
    )
    states, umodel, policy = solver.solve(tiny)

    sums_ok = True
    for i, s in enumerate(states):
        for a in model.feasible_actions(s, tiny):
            total = sum(t.prob for t in model.transitions(s, a, tiny))
            row = umodel.pmats[int(a)].getrow(i).sum()
            if abs(total - 1.0) > 1e-9 or abs(row - 1.0) > 1e-9:
                sums_ok = False
    check("transition kernels are stochastic", sums_ok)

    bf = oracle.brute_force_optimal(umodel)
    gap = float(np.abs(bf.values - policy.values).max())
    check(
        "value iteration matches exhaustive policy search",
        gap <= tiny.epsilon + 1e-8,
        f"max gap {gap:.2e} over {bf.n_policies} policies",
    )

    wait_prob, mean_wait, sojourn = oracle.erlang_c_delay(2.0, 1.0, 3)
    check(
        "closed-form queueing reference",
        abs(wait_prob - 4.0 / 9.0) < 1e-12 and abs(sojourn - (4.0 / 9.0 + 1.0)) < 1e-12,
        f"wait_prob {wait_prob:.6f}",
    )

    mc = oracle.monte_carlo_value(
        policy.actions, umodel, solver.default_start_state(umodel),
        horizon=6.0, n_paths=3000, rng=np.random.default_rng(7),
    )
    v0 = policy.values[solver.default_start_state(umodel)]
    check(
        "Monte-Carlo discounting agrees with the solved value",
        abs(mc.mean - v0) <= 3.5 * max(mc.stderr, 1e-12),
        f"mc {mc.mean:.4f} +/- {mc.stderr:.4f}, solver {v0:.4f}",
    )
    return EXIT_OK if failures == 0 else EXIT_USAGE


def build_parser() -> _Parser:
    parser = _Parser(prog="edgescale", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="scenario config file (YAML/JSON)")
            p.add_argument(
                "--set", action="append", metavar="KEY=VALUE",
                help="override a config key (repeatable; values parsed as YAML)",
            )
        p.add_argument("--state-limit", type=int, default=model.DEFAULT_STATE_LIMIT)

    p = sub.add_parser("solve", help="solve the scaling model and export the policy table")
    common(p)
    p.add_argument("--out", help="policy output path (default policy.tsv)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="run one simulation and emit its metrics")
    common(p)
    p.add_argument("--scaler", default="mnt", choices=("smdp", "mnt", "rf", "pinned"))
    p.add_argument("--threshold", type=float, help="mnt load threshold")
    p.add_argument("--window", type=float, help="mnt load-estimator window (time units)")
    p.add_argument("--policy", help="solved policy file (required for smdp)")
    p.add_argument("--horizon", type=int, default=100_000, help="events to simulate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--allocator", default="ff", choices=("ff", "rf"))
    p.add_argument("--trace", help="write a per-event trace to this path")
    p.add_argument("--debug-checks", action="store_true", help="verify invariants after every event")
    p.add_argument("--out", help="metrics output path (JSON); default prints to stdout")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("statespace", help="report state counts and complexity bounds")
    common(p)
    p.add_argument("--gamma", type=float, default=0.9, help="discrete discount for the bounds")
    p.set_defaults(func=cmd_statespace)

    p = sub.add_parser("sweep", help="run a sweep spec file and emit CSV tables")
    p.add_argument("--config", required=True, help="sweep spec file (YAML)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", help="output prefix (default 'sweep')")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="canonical {smdp, mnt, rf} x {ff, rf} comparison sweep")
    common(p)
    p.add_argument("--scenario-id", default="scenario")
    p.add_argument("--points", type=float, nargs="+", default=[0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
                   help="arrival-rate scale factors")
    p.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--threshold", type=float, action="append",
                   help="mnt threshold (repeatable; default 0.1 and 0.05)")
    p.add_argument("--allocator", action="append", choices=("ff", "rf"),
                   help="allocator (repeatable; default both)")
    p.add_argument("--horizon", type=int, default=100_000)
    p.add_argument("--workers", type=int, help="sweep worker processes")
    p.add_argument("--out", help="output prefix (default 'compare')")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify", help="run the oracle self-checks")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, solver.SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except model.StateSpaceTooLarge as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED


if __name__ == "__main__":
    sys.exit(main())
