"""Command-line entry point: ``saver-lab run|scenario|report``."""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, dump_document, load_config, scenario_document
from .output import metrics_from_curves, read_curves, summary_text, write_outputs
from .runner import run_experiment
from .scenarios import SCENARIOS, UnknownScenario, scenario


def _run(args) -> int:
    cfg = load_config(args.config)
    metrics = run_experiment(cfg, threads=args.threads)
    paths = write_outputs(metrics, args.out or cfg.output_dir)
    print(f"wrote {paths['curves']} and {paths['summary']} ({metrics.wall_clock:.1f}s)", file=sys.stderr)
    return 0


def _scenario_list(args) -> int:
    for name in SCENARIOS:
        sc = scenario(name)
        m = sc.mdp
        print(f"{name}\tmode={sc.mode}\tstates={m.num_states}\tactions={m.num_actions}\thorizon={m.L}\talpha={sc.alpha}")
    return 0


def _scenario_dump(args) -> int:
    opts = {}
    if args.literal_low_variance:
        opts["literal_low_variance"] = True
    sys.stdout.write(dump_document(scenario_document(args.id, **opts)))
    return 0


def _report(args) -> int:
    metrics = metrics_from_curves(read_curves(args.inp))
    text = summary_text(metrics)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="saver-lab", description="Safe variance-reducing behavior policy experiments")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", help="output directory (overrides the config)")
    run.add_argument("--threads", type=int, default=1)
    run.set_defaults(func=_run)

    sc = sub.add_parser("scenario", help="built-in scenarios")
    sc_sub = sc.add_subparsers(dest="scenario_command", required=True)
    ls = sc_sub.add_parser("list")
    ls.set_defaults(func=_scenario_list)
    dump = sc_sub.add_parser("dump", help="print a scenario as a config document")
    dump.add_argument("id")
    dump.add_argument("--literal-low-variance", action="store_true", help="grid4x4: L/U variance 0.01")
    dump.set_defaults(func=_scenario_dump)

    rep = sub.add_parser("report", help="recompute the summary from a curves.csv")
    rep.add_argument("--in", dest="inp", required=True)
    rep.add_argument("--out", help="write summary JSON here instead of stdout")
    rep.set_defaults(func=_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigError, UnknownScenario, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
