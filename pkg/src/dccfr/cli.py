"""Command-line entry point: dccfr synth|train|evaluate|ablate|report|extract."""

import argparse
import sys

from . import harness
from .errors import DccfrError, ValidationError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dccfr",
        description="Data-center carbon/energy/cost co-optimization sandbox",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write synthetic trace files")
    p.add_argument("--profile", default="NY", help="AZ, NY, or WA")
    p.add_argument("--days", type=int, default=365)
    p.add_argument("--seed", type=int, default=harness.TRACE_SEED)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train an agent combination")
    _common_run_args(p)
    p.add_argument("--iterations", type=int, default=harness.DEFAULT_ITERATIONS)
    p.add_argument("--episode-steps", type=int, default=2880)

    p = sub.add_parser("evaluate", help="greedy full-trace evaluation vs baseline")
    p.add_argument("--ckpt", default=None, help="checkpoint directory (omit for baseline-only)")
    p.add_argument("--profile", default="NY")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--baseline", default="fixed22", choices=sorted(harness.BASELINE_NAMES))
    p.add_argument("--bat-heuristic", action="store_true",
                   help="fill untrained battery slot with the CI-threshold rule")
    p.add_argument("--trace-metrics", action="store_true")
    p.add_argument("--combo", default=None, help="label recorded in metrics.json")

    p = sub.add_parser("ablate", help="train+evaluate a list of combos")
    p.add_argument("--combos", default="LS,EO,BAT,ALL")
    p.add_argument("--profile", default="NY")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--iterations", type=int, default=harness.DEFAULT_ITERATIONS)

    p = sub.add_parser("report", help="aggregate metrics.json files into a table")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--format", default="csv", choices=("csv", "text"))

    p = sub.add_parser("extract", help="figure-ready CSV extracts from traces")
    p.add_argument("--trace-dir", required=True)
    p.add_argument("--window", type=int, default=96)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def _common_run_args(p):
    p.add_argument("--combo", required=True, choices=sorted(harness.COMBOS))
    p.add_argument("--profile", default="NY")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)


def _parse_seeds(text: str):
    try:
        return tuple(int(s) for s in text.split(",") if s.strip() != "")
    except ValueError as exc:
        raise ValidationError(f"bad seed list {text!r}") from exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DccfrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    if args.command == "synth":
        for path in harness.cmd_synth(args.profile, args.days, args.seed, args.out):
            print(path)
        return 0
    if args.command == "train":
        run_cfg = harness.RunConfig(
            combo=args.combo, profile=args.profile, seeds=_parse_seeds(args.seeds),
            out_dir=args.out, env_config_path=args.config,
            iterations=args.iterations, episode_steps=args.episode_steps)
        def progress(rec):
            stats = {k: round(v["policy_loss"], 4) if "policy_loss" in v else v
                     for k, v in rec["agents"].items()}
            print(f"iter {rec['iteration']} steps {rec['env_steps']} "
                  f"co2/mo {rec['co2_tonnes']:.1f} t {stats}")
        for seed, path in harness.cmd_train(run_cfg, progress=progress).items():
            print(f"seed {seed}: {path}")
        return 0
    if args.command == "evaluate":
        res = harness.cmd_evaluate(
            args.ckpt, args.profile, args.out, baseline=args.baseline,
            bat_heuristic=args.bat_heuristic, trace_metrics=args.trace_metrics,
            env_config_path=args.config, combo_label=args.combo)
        red = res["reductions_pct"]
        print(f"co2 {red['co2']:.2f}%  energy {red['energy']:.2f}%  cost {red['cost']:.2f}%")
        return 0
    if args.command == "ablate":
        combos = [c.strip() for c in args.combos.split(",") if c.strip()]
        rows = harness.cmd_ablate(combos, args.profile, _parse_seeds(args.seeds),
                                  args.out, env_config_path=args.config,
                                  iterations=args.iterations)
        for combo, seed, co2_red in rows:
            print(f"{combo} seed {seed}: co2 reduction {co2_red:.2f}%")
        return 0
    if args.command == "report":
        print(harness.cmd_report(args.run_dirs, fmt=args.format), end="")
        return 0
    if args.command == "extract":
        for path in harness.cmd_extract_figures(args.trace_dir, args.window,
                                                args.out, start=args.start):
            print(path)
        return 0
    raise ValidationError(f"unknown command {args.command}")
