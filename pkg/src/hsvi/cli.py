"""Command-line entry point: ``hsvi {solve,simulate,generate,verify-theory,bench}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from pathlib import Path

from .bounds import PolicyFormatError, read_policy, write_policy
from .ingest import (BENCHMARKS, InvalidParams, MissingBlock, PomdpSyntaxError, generate_rocksample,
                     generate_tag, load_benchmark, load_pomdp, write_pomdp)
from .model import ModelError
from .sim import DEFAULT_HORIZON, AlphaActionPolicy, LookaheadPolicy, QmdpPolicy, simulate
from .solver import SolveParams, solve, write_trace_csv

log = logging.getLogger("hsvi")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_VERIFY = 0, 1, 2, 3


class InputError(Exception):
    """Bad problem, policy or output location supplied by the user."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _grid(text):
    try:
        n, k = (int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N,K, got {text!r}") from None
    return n, k


def _add_problem(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--pomdp", type=Path, help="Cassandra .pomdp file")
    g.add_argument("--rocksample", type=_grid, metavar="N,K", help="generate RockSample[N,K]")
    g.add_argument("--benchmark", choices=sorted(BENCHMARKS), help="named benchmark problem")
    p.add_argument("--rock-seed", type=int, default=0, help="seed for random rock placement")
    p.add_argument("--permissive", action="store_true",
                   help="fill unspecified T rows with identity and O rows with uniform")


def _load_problem(args):
    try:
        if args.pomdp is not None:
            if not args.pomdp.is_file():
                raise InputError(f"problem file not found: {args.pomdp}")
            return load_pomdp(args.pomdp, strict=not args.permissive)
        if args.rocksample is not None:
            n, k = args.rocksample
            return generate_rocksample(n, k, rock_seed=args.rock_seed)
        return load_benchmark(args.benchmark)
    except (PomdpSyntaxError, MissingBlock, ModelError, InvalidParams, FileNotFoundError) as exc:
        where = args.pomdp or args.benchmark or "generator"
        raise InputError(f"{where}: {exc}") from exc


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise InputError(f"output directory {out} is not writable")
    return out


class _Outputs:
    """Tracks files written by a command so they can be removed on failure."""

    def __init__(self):
        self.paths = []

    def add(self, path) -> Path:
        path = Path(path)
        self.paths.append(path)
        return path

    def discard(self):
        for p in self.paths:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


def _solve_params(args) -> SolveParams:
    return SolveParams(epsilon=args.epsilon, time_budget=args.time_budget, max_trials=args.max_trials)


def cmd_solve(args, outputs: _Outputs) -> int:
    model = _load_problem(args)
    out = _out_dir(args)
    result = solve(model, _solve_params(args))
    bounds = result.bounds
    write_policy(outputs.add(out / "policy.txt"), bounds.lower, model)
    write_trace_csv(result.trace, outputs.add(out / "trace.csv"))
    summary = {
        "problem": model.name, "states": model.num_states, "actions": model.num_actions,
        "observations": model.num_observations, "reason": result.reason,
        "lower_b0": result.lower, "upper_b0": result.upper, "width": result.upper - result.lower,
        "num_alpha": len(bounds.lower), "num_points": len(bounds.upper),
        "trials": result.trials, "updates": result.updates, "seconds": round(result.elapsed, 3),
        "epsilon": args.epsilon,
    }
    outputs.add(out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"{model.name}: {result.reason} V in [{result.lower:.6f}, {result.upper:.6f}] "
          f"|Gamma|={len(bounds.lower)} |Upsilon|={len(bounds.upper)} trials={result.trials} "
          f"time={result.elapsed:.1f}s")
    return EXIT_OK


def _end_on_positive(args) -> bool:
    spec = BENCHMARKS.get(getattr(args, "benchmark", None) or "")
    return bool(spec and spec.end_on_positive_reward) or getattr(args, "end_on_positive_reward", False)


def cmd_simulate(args, outputs: _Outputs) -> int:
    model = _load_problem(args)
    out = _out_dir(args) if args.out else None
    if args.qmdp:
        policy = QmdpPolicy.from_model(model)
    else:
        try:
            lower = read_policy(args.policy, model)
        except FileNotFoundError:
            raise InputError(f"policy file not found: {args.policy}") from None
        except PolicyFormatError as exc:
            raise InputError(f"{args.policy}: {exc}") from exc
        kind = LookaheadPolicy if args.kind == "lookahead" else AlphaActionPolicy
        policy = kind(lower, copy=False)
    report = simulate(policy, model, args.episodes, args.horizon, args.seed, _end_on_positive(args))
    text = report.to_json()
    if out is not None:
        outputs.add(out / "report.json").write_text(text + "\n")
        report.write_csv(outputs.add(out / "episodes.csv"))
    print(f"{model.name} {report.policy}: mean {report.mean:.4f} +/- {report.half_width:.4f} "
          f"(sd {report.sd:.4f}, n={report.episodes})")
    return EXIT_OK


def cmd_generate(args, outputs: _Outputs) -> int:
    try:
        if args.tag:
            model = generate_tag()
        else:
            n, k = args.rocksample
            model = generate_rocksample(n, k, rock_seed=args.rock_seed)
    except InvalidParams as exc:
        raise InputError(str(exc)) from exc
    path = Path(args.out)
    if path.parent and not path.parent.exists():
        raise InputError(f"directory {path.parent} does not exist")
    write_pomdp(model, outputs.add(path))
    print(f"wrote {model.name} ({model.num_states} states, {model.num_actions} actions, "
          f"{model.num_observations} observations) to {path}")
    return EXIT_OK


def cmd_verify_theory(args, outputs: _Outputs) -> int:
    from .theory import (GraphTruncation, belief_set, bracket_vstar, build_graph, random_model,
                         verify_contraction, verify_error_bounds)

    if args.random_seed is not None:
        model = random_model(seed=args.random_seed)
    else:
        model = _load_problem(args)
    if model.num_states > 64:
        raise InputError("verify-theory is meant for small models (at most 64 states)")
    graph = build_graph(model, args.depth)
    B = belief_set(graph, max(0, args.depth - 2))
    rows = []
    failed = False
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GraphTruncation)
        vstar = bracket_vstar(model, graph.beliefs, time_budget=args.vstar_budget)
        for p in args.p:
            c = verify_contraction(model, graph, p, args.trials, seed=args.seed,
                                   claimed_discount=args.claimed_discount)
            rows.append(("contraction", p, c.max_ratio, c.bound, c.violations == 0))
            failed |= not c.passed
            e = verify_error_bounds(model, graph, B, p, args.steps, vstar_interval=vstar)
            for name, worst, bound, bad in e.rows():
                rows.append((name, p, worst, bound, not bad))
            failed |= not e.passed
    header = ("check", "p", "worst", "bound", "pass")
    print(f"{model.name or 'model'}: depth {args.depth}, {graph.num_nodes} nodes, |B|={len(B)} "
          f"(truncated at depth {args.depth})")
    for name, p, worst, bound, ok in rows:
        print(f"  {name:<17} p={p:<5g} worst={worst:<14.6g} bound={bound:<14.6g} {'pass' if ok else 'FAIL'}")
    if args.out:
        path = outputs.add(args.out)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header + ("depth",))
            for r in rows:
                w.writerow([r[0], r[1], f"{r[2]:.12g}", f"{r[3]:.12g}", int(r[4]), args.depth])
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_bench(args, outputs: _Outputs) -> int:
    spec = BENCHMARKS[args.name]
    try:
        model = load_benchmark(args.name)
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from exc
    out = _out_dir(args)
    result = solve(model, SolveParams(epsilon=args.epsilon, time_budget=args.time_budget))
    write_trace_csv(result.trace, outputs.add(out / f"{args.name}-trace.csv"))
    hsvi = simulate(LookaheadPolicy(result.bounds.lower), model, args.episodes, args.horizon, args.seed,
                    spec.end_on_positive_reward)
    qmdp = simulate(QmdpPolicy.from_model(model), model, args.episodes, args.horizon, args.seed,
                    spec.end_on_positive_reward)
    path = outputs.add(out / f"{args.name}-bench.csv")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "mean_reward", "ci95", "reference_reward", "reference_ci", "seconds",
                    "num_alpha"])
        w.writerow(["hsvi2", f"{hsvi.mean:.6g}", f"{hsvi.half_width:.6g}", spec.hsvi2_reward, spec.reward_ci,
                    f"{result.elapsed:.2f}", len(result.bounds.lower)])
        w.writerow(["qmdp", f"{qmdp.mean:.6g}", f"{qmdp.half_width:.6g}", spec.qmdp_reward, "", "", ""])
    print(f"{args.name}: hsvi2 {hsvi.mean:.3f} +/- {hsvi.half_width:.3f} (reference {spec.hsvi2_reward}), "
          f"qmdp {qmdp.mean:.3f} +/- {qmdp.half_width:.3f} (reference {spec.qmdp_reward})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hsvi", description="Heuristic search value iteration for POMDPs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve a problem and write policy, trace and summary")
    _add_problem(p)
    p.add_argument("--epsilon", type=_positive_float, default=1e-3)
    p.add_argument("--time-budget", type=_positive_float, default=None, metavar="SECS")
    p.add_argument("--max-trials", type=_positive_int, default=None)
    p.add_argument("--out", default="hsvi-out", help="output directory")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="evaluate a policy file or the QMDP baseline")
    _add_problem(p)
    pol = p.add_mutually_exclusive_group(required=True)
    pol.add_argument("--policy", type=Path, help="policy file written by 'solve'")
    pol.add_argument("--qmdp", action="store_true", help="evaluate the QMDP baseline")
    p.add_argument("--kind", choices=("lookahead", "alpha"), default="lookahead",
                   help="how to act from a policy file")
    p.add_argument("--episodes", type=_positive_int, default=100)
    p.add_argument("--horizon", type=_positive_int, default=DEFAULT_HORIZON)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--end-on-positive-reward", action="store_true",
                   help="end episodes after the first positive reward (goal-terminated mazes)")
    p.add_argument("--out", default=None, help="directory for report.json and episodes.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("generate", help="write a generated problem as a .pomdp file")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--rocksample", type=_grid, metavar="N,K")
    g.add_argument("--tag", action="store_true")
    p.add_argument("--rock-seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output .pomdp path")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("verify-theory", help="check the reachability error bounds on a small model")
    _add_problem(p, required=False)
    p.add_argument("--random-seed", type=int, default=None, help="use a seeded random 4-state model")
    p.add_argument("--p", type=float, nargs="+", default=[0.0, 0.25, 0.5, 0.75])
    p.add_argument("--depth", type=_positive_int, default=6)
    p.add_argument("--trials", type=_positive_int, default=1000)
    p.add_argument("--steps", type=_positive_int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vstar-budget", type=_positive_float, default=20.0, metavar="SECS",
                   help="solver time used to bracket the optimal value at graph nodes")
    p.add_argument("--claimed-discount", type=float, default=None,
                   help="discount used in the contraction bound only (negative control)")
    p.add_argument("--out", default=None, help="CSV report path")
    p.set_defaults(func=cmd_verify_theory)

    p = sub.add_parser("bench", help="solve a registry benchmark and compare with reference rows")
    p.add_argument("name", choices=sorted(BENCHMARKS))
    p.add_argument("--epsilon", type=_positive_float, default=1e-3)
    p.add_argument("--time-budget", type=_positive_float, default=300.0)
    p.add_argument("--episodes", type=_positive_int, default=500)
    p.add_argument("--horizon", type=_positive_int, default=DEFAULT_HORIZON)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="hsvi-bench")
    p.set_defaults(func=cmd_bench)
    return parser


def _configure_logging():
    level = os.environ.get("HSVI_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    if args.command == "verify-theory" and args.random_seed is None and not (
            args.pomdp or args.rocksample or args.benchmark):
        build_parser().error("verify-theory needs --pomdp, --benchmark, --rocksample or --random-seed")
    if args.command == "verify-theory" and not all(0 <= p < 1 for p in args.p):
        build_parser().error("--p values must lie in [0, 1)")
    outputs = _Outputs()
    try:
        return args.func(args, outputs)
    except InputError as exc:
        outputs.discard()
        print(f"hsvi: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BaseException:
        outputs.discard()
        raise


if __name__ == "__main__":
    sys.exit(main())
