"""Comparison sweeps: the cross product of densities x methods x seeds.

Each cell trains one run per seed, persists its artifacts under a
predictable subdirectory, and contributes to one aggregated table row
per (density, method) holding mean and population-std accuracy plus the
gap against the plain-pruning baseline at the same density. An aborted
run marks its whole cell `failed`; the sweep keeps going.

Cells are independent, so they may run in worker processes
(SPUR_THREADS, default 1); results are merged in the deterministic
cell order, never in completion order.
"""

import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from .config import write_echo
from .errors import ConfigurationError, TrainingAborted
from .models import save_checkpoint
from .training import Method, generate_dataset, train, write_run_record

CSV_HEADER = "density,method,variant,domain,seed_count,mean_acc,std_acc,gap"

IMP_TOKEN = Method.IMP.value


def parse_method_token(token):
    """`imp`, `imp_spur`, or `imp_spur:<penalty>` to (Method, override).

    The optional suffix pins the final penalty weight for that cell,
    letting one sweep cover several penalty strengths. Returns the
    normalized token as the third element.
    """
    text = token.strip().lower()
    name, sep, tail = text.partition(":")
    method = Method.from_string(name)
    if not sep:
        return method, None, method.value
    if method is not Method.IMP_SPUR:
        raise ConfigurationError(
            f"method token {token!r} cannot carry a penalty weight"
        )
    try:
        lam = float(tail)
    except ValueError:
        raise ConfigurationError(
            f"bad penalty weight in method token {token!r}"
        ) from None
    if lam < 0:
        raise ConfigurationError(
            f"penalty weight must be >= 0 in method token {token!r}"
        )
    return method, lam, f"{method.value}:{tail.strip()}"


def cell_config(base, density, token, seed):
    """Specialize the base config for one sweep cell."""
    method, lam_override, _ = parse_method_token(token)
    if method is Method.IMP:
        lam = 0.0
    elif lam_override is not None:
        lam = lam_override
    else:
        lam = base.lambda_schedule.lambda_final
    return replace(
        base,
        method=method,
        schedule=replace(base.schedule, v_final=density),
        lambda_schedule=replace(base.lambda_schedule, lambda_final=lam),
        seed=seed,
        model=replace(base.model, seed=seed),
    )


def run_dir_name(density, token, seed):
    safe = token.replace(":", "-")
    return f"d{density:g}_m{safe}_s{seed}"


def persist_run(run_dir, config, record):
    """Write config.echo, run.jsonl, model.ckpt and masks.ckpt."""
    os.makedirs(run_dir, exist_ok=True)
    write_echo(os.path.join(run_dir, "config.echo"), config)
    write_run_record(os.path.join(run_dir, "run.jsonl"), record)
    params = [(p.name, p.role, p.value) for p in record.table.params]
    save_checkpoint(os.path.join(run_dir, "model.ckpt"), params)
    roles = {p.name: p.role for p in record.table.params}
    masks = [(name, roles[name], mask.m)
             for name, mask in record.state.masks.items()]
    save_checkpoint(os.path.join(run_dir, "masks.ckpt"), masks)


def _run_cell(args):
    """Train one cell run and persist it; worker-process safe."""
    out_dir, base, density, token, seed = args
    config = cell_config(base, density, token, seed)
    run_dir = os.path.join(out_dir, run_dir_name(density, token, seed))
    os.makedirs(run_dir, exist_ok=True)
    write_echo(os.path.join(run_dir, "config.echo"), config)
    data = generate_dataset(config)
    try:
        record = train(config, data)
    except TrainingAborted as exc:
        return "aborted", str(exc)
    persist_run(run_dir, config, record)
    return "ok", record.rows[-1]["test_accuracy"]


def _thread_count(threads):
    if threads is not None:
        value = threads
    else:
        text = os.environ.get("SPUR_THREADS", "1")
        try:
            value = int(text)
        except ValueError:
            raise ConfigurationError(
                f"SPUR_THREADS must be a positive integer, got {text!r}"
            ) from None
    if value < 1:
        raise ConfigurationError(
            f"thread count must be a positive integer, got {value}"
        )
    return value


def sweep_compare(base, densities, methods, seeds, out_dir, threads=None):
    """Run the full grid and aggregate it into comparison-table rows.

    Returns a list of row dicts in cell order (density-major, then
    method). Failed cells carry the string `failed` in the three
    numeric columns; the gap column is empty when the plain-pruning
    baseline at that density is missing or failed.
    """
    if not densities or not methods or not seeds:
        raise ConfigurationError(
            "sweep needs at least one density, one method and one seed"
        )
    tokens = [parse_method_token(m)[2] for m in methods]
    if len(set(tokens)) != len(tokens):
        raise ConfigurationError("duplicate method tokens in sweep")
    if len(set(densities)) != len(densities):
        raise ConfigurationError("duplicate densities in sweep")
    if len(set(seeds)) != len(seeds):
        raise ConfigurationError("duplicate seeds in sweep")

    cells = [(out_dir, base, density, token, seed)
             for density in densities
             for token in tokens
             for seed in seeds]
    for args in cells:
        cell_config(base, args[2], args[3], args[4])

    os.makedirs(out_dir, exist_ok=True)
    workers = _thread_count(threads)
    if workers == 1:
        results = [_run_cell(args) for args in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, cells))

    by_cell = {}
    for args, outcome in zip(cells, results):
        by_cell.setdefault((args[2], args[3]), []).append(outcome)

    means = {}
    for (density, token), outcomes in by_cell.items():
        if all(status == "ok" for status, _ in outcomes):
            means[(density, token)] = statistics.fmean(
                acc for _, acc in outcomes)

    rows = []
    for density in densities:
        for token in tokens:
            outcomes = by_cell[(density, token)]
            row = {
                "density": density,
                "method": token,
                "variant": base.variant.value,
                "domain": base.domain.value,
                "seed_count": len(seeds),
            }
            if (density, token) not in means:
                row.update(mean_acc="failed", std_acc="failed", gap="failed")
            else:
                accs = [acc for _, acc in outcomes]
                row["mean_acc"] = means[(density, token)]
                row["std_acc"] = statistics.pstdev(accs)
                if token == IMP_TOKEN:
                    row["gap"] = 0.0
                elif (density, IMP_TOKEN) in means:
                    row["gap"] = row["mean_acc"] - means[(density, IMP_TOKEN)]
                else:
                    row["gap"] = ""
            rows.append(row)
    return rows


def _cell(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def table_csv_lines(rows):
    """Rows as CSV text lines, header first."""
    lines = [CSV_HEADER]
    for row in rows:
        lines.append(",".join(_cell(row[k]) for k in CSV_HEADER.split(",")))
    return lines


def write_table_csv(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(table_csv_lines(rows)) + "\n")


def sweep_failed(rows):
    """True when any cell in the table is marked failed."""
    return any(row["mean_acc"] == "failed" for row in rows)
