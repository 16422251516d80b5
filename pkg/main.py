#!/usr/bin/env python3
"""
Fair Active Learning Bench - Main Entry Point

Usage:
    python main.py run --config configs/desk_synthetic.json --out results/desk
    python main.py compare results/fal results/entropy
    python main.py fixture --p 0.75 --eps 0.01
    python main.py synth --kind two_group --out data/two_group.csv
    python main.py history
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from fairal.config import settings

logger = logging.getLogger("fairal")


def setup_logging():
    """Configure logging."""
    log_level = logging.DEBUG if settings.debug else logging.INFO
    logging.basicConfig(
        level=log_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[
            logging.StreamHandler(),
            logging.FileHandler(settings.data_dir / settings.log_file),
        ],
        force=True,
    )


def run_experiment_command(args) -> int:
    """Run a config and write metrics files."""
    from fairal.config import load_experiment_config
    from fairal.harness import mark_run_failed, record_run, run_experiment, start_run, write_outputs

    config = load_experiment_config(args.config)
    out_dir = Path(args.out)
    run_id = start_run(config, out_dir)
    try:
        result = run_experiment(config, out_dir)
        write_outputs(result, out_dir)
    except Exception as e:
        mark_run_failed(run_id, str(e))
        raise
    record_run(result, out_dir, run_id)

    final = result.summary["final"]
    print(f"\n{'='*50}")
    print(f"{config.name}: {config.strategy.value} / {config.measure.value}")
    print(f"{'='*50}")
    print(f"Splits:            {config.n_splits} (seeds {result.seeds[0]}..{result.seeds[-1]})")
    print(f"Iterations:        {final['iteration'] + 1}")
    print(f"Final accuracy:    {final['accuracy_mean']:.4f} ± {final['accuracy_std']:.4f}")
    if final["disparity_mean"] is not None:
        print(f"Final disparity:   {final['disparity_mean']:.6f} ± {final['disparity_std']:.6f}")
    print(f"Output:            {out_dir}")
    if run_id is not None:
        print(f"Ledger run id:     {run_id}")
    print(f"{'='*50}\n")
    return 0


def compare_command(args) -> int:
    """Print per-iteration deltas between two metrics files or result directories."""
    from fairal.harness import compare_metrics, read_metrics

    comparison = compare_metrics(read_metrics(args.a), read_metrics(args.b))
    if not comparison["iterations"]:
        print("No shared iterations to compare.", file=sys.stderr)
        return 1

    def cell(v):
        return f"{v:+.6f}" if v is not None else "n/a"

    print(f"{'iteration':>9}  {'accuracy_delta':>15}  {'disparity_delta':>16}")
    for row in comparison["iterations"]:
        print(f"{row['iteration']:>9}  {cell(row['accuracy_delta']):>15}  {cell(row['disparity_delta']):>16}")
    final = comparison["final"]
    print(
        f"\nFinal iteration {final['iteration']}: mean disparity delta {cell(final['disparity_delta'])}, "
        f"mean accuracy delta {cell(final['accuracy_delta'])} ({args.a} minus {args.b})"
    )
    return 0


def fixture_command(args) -> int:
    """Print the measure-disagreement values and the covariance identity check."""
    from fairal.fairness import measure_disagreement_fixture, preference_flips
    from fairal.strategies import covariance_identity_fixture

    values = measure_disagreement_fixture(args.p, args.eps, args.construction)
    print(f"Measure disagreement (p={args.p}, eps={args.eps}, construction={args.construction})")
    for key in ("F1_C", "F1_Cprime", "F2_C", "F2_Cprime"):
        print(f"  {key:<10} {values[key]:.12f}")
    flips = preference_flips(values)
    print(f"  verdict: {'F1 prefers Cprime while F2 prefers C' if flips else 'no preference flip'}")

    identity = covariance_identity_fixture(seed=args.seed)
    print("Covariance identity cov(S, theta.X) = theta.cov(S, X)")
    print(f"  direct       {identity['direct']:.15f}")
    print(f"  via features {identity['via_features']:.15f}")
    print(f"  abs error    {identity['abs_error']:.3e}")
    return 0


def synth_command(args) -> int:
    """Generate a synthetic dataset CSV plus a matching schema file."""
    import json

    from fairal.dataset import write_csv
    from fairal.harness import (
        TILTED_BOUNDARY, TRUE_BOUNDARY, ScenarioParams, acceptance_rates,
        make_compas_like, make_synthetic_scenario,
    )

    if args.kind == "two_group":
        ds = make_synthetic_scenario(ScenarioParams(n_red=args.n, n_blue=args.n), args.seed)
    else:
        ds = make_compas_like(args.n, args.seed)

    out = write_csv(ds, args.out)
    schema_path = out.with_suffix(".schema.json")
    schema = {"features": list(ds.feature_names), "sensitive": "s", "label": "y"}
    schema_path.write_text(json.dumps(schema, indent=2), encoding="utf-8")
    print(f"Wrote {ds.n} rows to {out} (schema: {schema_path})")

    if args.kind == "two_group":
        for name, boundary in (("true", TRUE_BOUNDARY), ("tilted", TILTED_BOUNDARY)):
            rates = acceptance_rates(ds, boundary)
            print(f"  {name:<6} boundary acceptance: red {rates['red']:.4f}, blue {rates['blue']:.4f}")
    return 0


def history_command(args) -> int:
    """List runs recorded in the ledger."""
    from fairal.harness import list_runs

    runs = list_runs(args.limit)
    if not runs:
        print("No recorded runs.")
        return 0
    for r in runs:
        acc = f"{r['final_mean_accuracy']:.4f}" if r["final_mean_accuracy"] is not None else "n/a"
        disp = f"{r['final_mean_disparity']:.6f}" if r["final_mean_disparity"] is not None else "n/a"
        print(f"#{r['id']:<4} {r['started_at']}  {r['name']:<24} {r['strategy']:<8} {r['measure']:<22} acc {acc}  disp {disp}  {r['status']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Fair Active Learning Bench")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run an experiment config")
    run.add_argument("--config", required=True, help="Experiment config JSON")
    run.add_argument("--out", required=True, help="Output directory for metrics files")
    run.set_defaults(func=run_experiment_command)

    compare = sub.add_parser("compare", help="Compare two metrics files or result directories")
    compare.add_argument("a")
    compare.add_argument("b")
    compare.set_defaults(func=compare_command)

    fixture = sub.add_parser("fixture", help="Print the measure-disagreement and covariance identity fixtures")
    fixture.add_argument("--p", type=float, default=0.75)
    fixture.add_argument("--eps", type=float, default=0.01)
    fixture.add_argument("--construction", choices=["low_acceptance", "as_written"], default="low_acceptance")
    fixture.add_argument("--seed", type=int, default=0)
    fixture.set_defaults(func=fixture_command)

    synth = sub.add_parser("synth", help="Generate a synthetic scenario to CSV")
    synth.add_argument("--kind", choices=["two_group", "compas_like"], default="two_group")
    synth.add_argument("--n", type=int, default=10_000, help="Rows per group (two_group) or total rows")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True)
    synth.set_defaults(func=synth_command)

    history = sub.add_parser("history", help="List recorded runs")
    history.add_argument("--limit", type=int, default=20)
    history.set_defaults(func=history_command)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    if args.debug:
        os.environ["DEBUG"] = "true"
        settings.debug = True
    setup_logging()

    try:
        return args.func(args)
    except (ValidationError, ValueError, RuntimeError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
