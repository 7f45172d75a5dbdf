"""Command-line interface: run sweeps, export figure data, self-validate."""

import argparse
import json
import sys

from . import validate
from .harness import ExperimentConfig, emit_plot_data, run_sweep


def _cmd_run(args):
    if args.config:
        config = ExperimentConfig.from_json_file(args.config)
    else:
        config = ExperimentConfig()
    if args.drops is not None:
        config.drops = args.drops
    if args.seed is not None:
        config.master_seed = args.seed

    result = run_sweep(config, out_dir=args.out, workers=args.workers)
    n_rows = len(result["rows"])
    n_flagged = sum(1 for r in result["rows"] if r["flag"] is not None)
    print(f"ran {n_rows} drops ({n_flagged} flagged), "
          f"{len(result['aggregates'])} aggregate rows -> {args.out}")

    starved = [a for a in result["aggregates"] if a["n_drops"] == 0]
    if starved:
        err = {"error": "infeasible_axis_points",
               "points": [{k: a[k] for k in
                           ("n_aps", "n_ris", "p_t_dbm", "mode", "scheme",
                            "ris_mode")} for a in starved]}
        print(json.dumps(err), file=sys.stderr)
        return 4
    return 0


def _cmd_figures(args):
    with open(args.table) as fh:
        payload = json.load(fh)
    table = payload["aggregates"] if isinstance(payload, dict) else payload
    paths = emit_plot_data(table, args.figure, args.out)
    for p in paths:
        print(p)
    return 0


def _cmd_validate(_args):
    failed, _ = validate.run_all(verbose=True)
    return 1 if failed else 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="risdmimo",
        description="RIS-assisted D-MIMO energy-efficiency simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a Monte Carlo sweep")
    p_run.add_argument("--config", help="JSON experiment config (default: built-in)")
    p_run.add_argument("--out", default="results", help="output directory")
    p_run.add_argument("--drops", type=int, default=None,
                       help="override the configured drop count")
    p_run.add_argument("--workers", type=int, default=1,
                       help="process workers (results are worker-invariant)")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the master seed")
    p_run.set_defaults(func=_cmd_run)

    p_fig = sub.add_parser("figures", help="export plot-ready curve files")
    p_fig.add_argument("--table", required=True,
                       help="results.json produced by `run`")
    p_fig.add_argument("--figure", required=True,
                       choices=["fig2", "fig2_sumse", "fig3", "fig4", "fig5"])
    p_fig.add_argument("--out", default="figures", help="output directory")
    p_fig.set_defaults(func=_cmd_figures)

    p_val = sub.add_parser("validate", help="run the built-in invariant suite")
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
