"""Command-line front end.

Four subcommands drive the library:

* train: one experiment into an output directory (config.echo,
  run.jsonl, model.ckpt, masks.ckpt);
* sweep: a density x method x seed grid, one subdirectory per run plus
  an aggregated table.csv;
* analyze: survivor statistics and grid scores of a finished run as
  stats.csv;
* viz: PBM mask and PGM magnitude images for one matrix of a run.

Exit codes are the contract: 0 success, 2 unusable configuration or
input, 3 run aborted on a non-finite loss, 4 sweep finished with failed
cells. Standard output carries data summaries only; diagnostics go to
standard error as a single line.
"""

import argparse
import os
import sys

from .analysis import (
    export_magnitude_pgm,
    export_mask_pbm,
    grid_concentration,
    stats_csv_lines,
    survivor_stats,
    write_stats_csv,
)
from .config import load_config
from .errors import (
    ConfigurationError,
    ContractError,
    InputError,
    IntegrityError,
    ShapeError,
    TrainingAborted,
)
from .matrix import Matrix
from .models import layer_of, load_checkpoint
from .pruning import Mask
from .sweep import (
    persist_run,
    sweep_compare,
    sweep_failed,
    table_csv_lines,
    write_table_csv,
)
from .training import generate_dataset, train

USAGE_ERRORS = (ConfigurationError, InputError, IntegrityError, ShapeError,
                ContractError, OSError)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spur",
        description="iterative magnitude pruning with a structured-pattern "
                    "deviance penalty",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one experiment")
    p_train.add_argument("--config", required=True,
                         help="key=value experiment file")
    p_train.add_argument("--out", required=True, help="output directory")

    p_sweep = sub.add_parser("sweep", help="run a comparison grid")
    p_sweep.add_argument("--config", required=True,
                         help="base key=value experiment file")
    p_sweep.add_argument("--densities", required=True,
                         help="comma-separated final densities")
    p_sweep.add_argument("--methods", required=True,
                         help="comma-separated method tokens (imp, imp_spur, "
                              "imp_spur:<penalty>)")
    p_sweep.add_argument("--seeds", required=True,
                         help="comma-separated integer seeds")
    p_sweep.add_argument("--out", required=True, help="output directory")

    p_analyze = sub.add_parser("analyze",
                               help="survivor statistics of a finished run")
    p_analyze.add_argument("--run", required=True, help="run directory")

    p_viz = sub.add_parser("viz", help="export mask and magnitude images")
    p_viz.add_argument("--run", required=True, help="run directory")
    p_viz.add_argument("--layer", required=True, type=int,
                       help="layer index")
    p_viz.add_argument("--role", required=True,
                       help="matrix role, e.g. Q, K, V, O, FF1, FF2, HIDDEN")
    return parser


def cmd_train(args):
    config = load_config(args.config)
    data = generate_dataset(config)
    record = train(config, data)
    persist_run(args.out, config, record)
    final = record.rows[-1]
    print(f"step {final['step']} density {final['density']} "
          f"test_accuracy {final['test_accuracy']}")
    return 0


def _split(text, parse, what):
    tokens = [t.strip() for t in text.split(",") if t.strip()]
    if not tokens:
        raise ConfigurationError(f"empty {what} list")
    try:
        return [parse(t) for t in tokens]
    except ValueError:
        raise ConfigurationError(
            f"bad {what} list {text!r}; expected comma-separated values"
        ) from None


def cmd_sweep(args):
    base = load_config(args.config)
    densities = _split(args.densities, float, "density")
    seeds = _split(args.seeds, int, "seed")
    methods = _split(args.methods, str, "method")
    rows = sweep_compare(base, densities, methods, seeds, args.out)
    write_table_csv(os.path.join(args.out, "table.csv"), rows)
    for line in table_csv_lines(rows):
        print(line)
    return 4 if sweep_failed(rows) else 0


def _load_run(run_dir):
    model_path = os.path.join(run_dir, "model.ckpt")
    masks_path = os.path.join(run_dir, "masks.ckpt")
    for path in (model_path, masks_path):
        if not os.path.exists(path):
            raise IntegrityError(f"missing checkpoint {path}")
    weights = {name: (role, m) for name, role, m in load_checkpoint(model_path)}
    masks = [(name, role, Mask(m)) for name, role, m in
             load_checkpoint(masks_path)]
    return weights, masks


def cmd_analyze(args):
    weights, masks = _load_run(args.run)
    named = []
    for name, _, mask in masks:
        if name not in weights:
            raise IntegrityError(
                f"mask {name!r} has no matching model tensor"
            )
        w = weights[name][1]
        named.append((name, survivor_stats(w, mask),
                      grid_concentration(mask)))
    write_stats_csv(os.path.join(args.run, "stats.csv"), named)
    print(stats_csv_lines(named)[-1])
    return 0


def cmd_viz(args):
    weights, masks = _load_run(args.run)
    role = args.role.strip().upper()
    chosen = [(name, mask) for name, mask_role, mask in masks
              if mask_role == role and layer_of(name) == args.layer]
    if not chosen:
        known = sorted({mask_role for _, mask_role, _ in masks})
        raise ConfigurationError(
            f"no masked matrix with role {role!r} in layer {args.layer}; "
            f"masked roles here: {', '.join(known)}"
        )
    if len(chosen) > 1:
        raise IntegrityError(
            f"role {role!r} in layer {args.layer} is ambiguous"
        )
    name, mask = chosen[0]
    effective = Matrix(weights[name][1].a * mask.m.a)
    base = os.path.join(args.run, f"layer{args.layer}_{role}")
    export_mask_pbm(mask, base + ".pbm")
    export_magnitude_pgm(effective, base + ".pgm")
    print(f"{base}.pbm {base}.pgm")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = {"train": cmd_train, "sweep": cmd_sweep,
               "analyze": cmd_analyze, "viz": cmd_viz}[args.command]
    try:
        return handler(args)
    except TrainingAborted as exc:
        print(f"spur: aborted: {exc}", file=sys.stderr)
        return 3
    except USAGE_ERRORS as exc:
        print(f"spur: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
