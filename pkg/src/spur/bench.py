"""Backend benchmark: compiled kernels against the pure-Python fallback.

Run as `python -m spur.bench`. Two parts:

* per-kernel microbenchmarks on shapes typical of the toy reference
  experiment, reporting the best wall time per backend and the speedup;
* a short end-to-end training slice run once per backend, checking the
  two produce the same final loss bit for bit (they implement identical
  arithmetic) and reporting the per-step cost.

The active backend for the slice is switched by rebinding the function
table in spur.kernels, so one process can measure both.
"""

import argparse
import time

import numpy as np

from . import kernels
from .data import TaskKind
from .kernels import pyref
from .models import ModelConfig, ModelKind
from .pruning import PruningSchedule, TargetDomain
from .regularizer import DevianceVariant, LambdaSchedule
from .training import (
    ExperimentConfig,
    Method,
    OptimizerParams,
    TaskSpec,
    generate_dataset,
    train,
)

try:
    from .kernels import _fast
except ImportError:
    _fast = None

KERNEL_NAMES = (
    "softmax_rows",
    "softmax_rows_backward",
    "cross_entropy_mean",
    "cross_entropy_mean_backward",
    "layer_norm_rows",
    "layer_norm_rows_backward",
    "sum_all",
    "sum_rows",
    "sum_cols",
    "mean_all",
    "adam_step",
)


def _best_time(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def _kernel_cases(rng):
    probs = np.abs(rng.normal(size=(256, 12))) + 0.1
    probs /= probs.sum(axis=1, keepdims=True)
    x = rng.normal(size=(128, 32))
    gain = rng.normal(size=(1, 32))
    bias = rng.normal(size=(1, 32))
    g = rng.normal(size=(128, 32))
    logits = rng.normal(size=(32, 2))
    idx = rng.integers(0, 2, size=32)
    xhat = rng.normal(size=(128, 32))
    inv = np.abs(rng.normal(size=(128, 1))) + 0.5

    def adam_args():
        return (x.copy(), g, np.zeros_like(x), np.zeros_like(x),
                np.ones_like(x), 3e-3, 0.9, 0.999, 1e-8, 0.1, 1e-3)

    return {
        "softmax_rows": lambda: (rng.normal(size=(256, 12)),),
        "softmax_rows_backward": lambda: (probs, rng.normal(size=(256, 12))),
        "cross_entropy_mean": lambda: (logits, idx),
        "cross_entropy_mean_backward": lambda: (
            kernels.softmax_rows(logits), idx, 1.0),
        "layer_norm_rows": lambda: (x, gain, bias, 1e-5),
        "layer_norm_rows_backward": lambda: (xhat, inv, gain, g),
        "sum_all": lambda: (x,),
        "sum_rows": lambda: (x,),
        "sum_cols": lambda: (x,),
        "mean_all": lambda: (x,),
        "adam_step": adam_args,
    }


def bench_kernels(repeat):
    """Per-kernel timing lines for both backends."""
    rng = np.random.default_rng(0)
    cases = _kernel_cases(rng)
    lines = ["kernel                        python_ms  cython_ms  speedup"]
    for name in KERNEL_NAMES:
        make_args = cases[name]
        py_t = _best_time(getattr(pyref, name), make_args(), repeat)
        if _fast is None:
            lines.append(f"{name:<28}  {py_t * 1e3:9.3f}        n/a      n/a")
            continue
        cy_t = _best_time(getattr(_fast, name), make_args(), repeat)
        ratio = py_t / cy_t if cy_t > 0 else float("inf")
        lines.append(
            f"{name:<28}  {py_t * 1e3:9.3f}  {cy_t * 1e3:9.3f}  {ratio:6.1f}x"
        )
    return lines


def _slice_config(steps):
    return ExperimentConfig(
        model=ModelConfig(kind=ModelKind.TRANSFORMER, layers=2,
                          hidden_dim=32, heads=2, ffn_dim=128, vocab=24,
                          max_seq=12, classes=2, seed=1),
        task=TaskSpec(kind=TaskKind.DUPLICATE, n=512, length=12, vocab=24),
        method=Method.IMP_SPUR,
        variant=DevianceVariant.SPUR,
        domain=TargetDomain.ALL,
        schedule=PruningSchedule(v_initial=1.0, v_final=0.3, t_i=0,
                                 ramp_steps=max(1, steps), cadence=16,
                                 total_steps=steps),
        lambda_schedule=LambdaSchedule(lambda_final=10.0, t_i=0,
                                       ramp_steps=max(1, steps)),
        optimizer=OptimizerParams(),
        batch_size=32,
        eval_every=10 ** 9,
        seed=7,
    )


def _use_backend(impl):
    for name in KERNEL_NAMES:
        setattr(kernels, name, getattr(impl, name))


def bench_training_slice(steps):
    """End-to-end slice timing lines, one per backend."""
    config = _slice_config(steps)
    data = generate_dataset(config)
    backends = [("python", pyref)]
    if _fast is not None:
        backends.append(("cython", _fast))
    active = kernels.impl
    lines = [f"training slice: {steps} steps of the 2-layer width-32 model"]
    losses = {}
    try:
        for label, impl in backends:
            _use_backend(impl)
            start = time.perf_counter()
            record = train(config, data)
            elapsed = time.perf_counter() - start
            losses[label] = record.rows[-1]["train_l_ce"]
            lines.append(
                f"  {label:<7} {elapsed:6.2f}s total, "
                f"{elapsed / max(1, steps) * 1e3:6.2f} ms/step"
            )
    finally:
        _use_backend(active)
    if len(losses) == 2:
        match = losses["python"] == losses["cython"]
        lines.append(f"  final losses bit-identical: {match}")
    return lines


def run_benchmark(repeat, steps):
    lines = [f"active backend: {kernels.BACKEND_NAME}"]
    if _fast is None:
        lines.append("compiled backend unavailable; timing the fallback only")
    lines.append("")
    lines.extend(bench_kernels(repeat))
    lines.append("")
    lines.extend(bench_training_slice(steps))
    return lines


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="spur.bench",
        description="compare the compiled and pure-Python kernel backends",
    )
    parser.add_argument("--repeat", type=int, default=30,
                        help="timing repetitions per kernel (default 30)")
    parser.add_argument("--steps", type=int, default=60,
                        help="optimizer steps in the end-to-end slice "
                             "(default 60)")
    args = parser.parse_args(argv)
    if args.repeat < 1 or args.steps < 0:
        parser.error("repeat must be >= 1 and steps >= 0")
    for line in run_benchmark(args.repeat, args.steps):
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
