"""Training harness: experiment configuration, Adam, the IMP and
IMP+SPUR training loops, and evaluation.

The loop at step t: run a pruning event when t lands on the cadence
grid, build the forward graph with the current masks, add the deviance
penalty scaled by lambda_at(t) when it is positive, check the loss is
finite, record an evaluation row when t lands on the eval grid, then
backpropagate and take one Adam step. A final pruning event and
evaluation row land exactly at total_steps.

Everything is a pure function of the config: model init, data, batch
order and the optimizer all draw from seeded streams, so one config
yields one byte-identical run record.
"""

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import TaskKind, gen_blobs, gen_duplicate_task, gen_majority_task
from .errors import ConfigurationError, ContractError, TrainingAborted
from .graph import ExprGraph
from .matrix import Matrix
from .models import ModelConfig, ModelKind, forward, init_model
from .pruning import (
    PruningSchedule,
    PruningState,
    TargetDomain,
    density_at,
    pruning_event,
    select_targets,
)
from .regularizer import (
    DevianceVariant,
    LambdaSchedule,
    deviance,
    lambda_at,
    regularization_node,
)


class Method(enum.Enum):
    IMP = "imp"
    IMP_SPUR = "imp_spur"

    @classmethod
    def from_string(cls, s):
        try:
            return cls(s.strip().lower())
        except ValueError:
            raise ConfigurationError(
                f"unknown method {s!r}; expected imp or imp_spur"
            ) from None


@dataclass(frozen=True)
class OptimizerParams:
    learning_rate: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not (self.learning_rate > 0):
            raise ConfigurationError(
                f"learning_rate must be positive, got {self.learning_rate}"
            )
        for label, b in (("beta1", self.beta1), ("beta2", self.beta2)):
            if not (0.0 <= b < 1.0):
                raise ConfigurationError(f"{label} must lie in [0, 1), got {b}")
        if not (self.eps > 0):
            raise ConfigurationError(f"eps must be positive, got {self.eps}")


@dataclass(frozen=True)
class TaskSpec:
    kind: TaskKind = TaskKind.DUPLICATE
    n: int = 4096
    length: int = 12
    vocab: int = 24
    dim: int = 16
    spread: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig
    task: TaskSpec
    method: Method
    variant: DevianceVariant
    domain: TargetDomain
    schedule: PruningSchedule
    lambda_schedule: LambdaSchedule
    optimizer: OptimizerParams
    batch_size: int = 32
    eval_every: int = 250
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError(
                f"batch_size must be >= 1, got {self.batch_size}"
            )
        if self.eval_every < 1:
            raise ConfigurationError(
                f"eval_every must be >= 1, got {self.eval_every}"
            )
        if not (0 <= self.seed < 2 ** 64):
            raise ConfigurationError("seed must fit in an unsigned 64-bit int")
        if (self.method is Method.IMP
                and self.lambda_schedule.lambda_final != 0.0):
            raise ConfigurationError(
                "method imp runs without the deviance penalty; "
                "lambda_final must be 0"
            )


def generate_dataset(config):
    """Build the dataset a config asks for, checking model compatibility."""
    t = config.task
    model = config.model
    if t.kind is TaskKind.BLOBS:
        if model.kind is not ModelKind.MLP:
            raise ConfigurationError("the blobs task feeds an mlp model")
        if t.dim != model.input_dim:
            raise ConfigurationError(
                f"task dim {t.dim} does not match model input_dim "
                f"{model.input_dim}"
            )
        return gen_blobs(config.seed, t.n, t.dim, model.classes, t.spread)
    if model.kind is not ModelKind.TRANSFORMER:
        raise ConfigurationError(
            f"the {t.kind.value} task feeds a transformer model"
        )
    if model.classes != 2:
        raise ConfigurationError(
            f"the {t.kind.value} task is binary; model.classes must be 2"
        )
    if t.length > model.max_seq:
        raise ConfigurationError(
            f"task length {t.length} exceeds model max_seq {model.max_seq}"
        )
    if t.kind is TaskKind.DUPLICATE:
        if t.vocab > model.vocab:
            raise ConfigurationError(
                f"task vocab {t.vocab} exceeds model vocab {model.vocab}"
            )
        return gen_duplicate_task(config.seed, t.n, t.length, t.vocab)
    if model.vocab < 2:
        raise ConfigurationError("majority task needs model vocab >= 2")
    return gen_majority_task(config.seed, t.n, t.length)


# ----- optimizer -----


class AdamState:
    """First and second moment buffers per parameter, created lazily."""

    def __init__(self):
        self.m = {}
        self.v = {}
        self._ones = {}

    def slots(self, name, shape):
        if name not in self.m:
            self.m[name] = np.zeros(shape, dtype=np.float64)
            self.v[name] = np.zeros(shape, dtype=np.float64)
        return self.m[name], self.v[name]

    def ones_mask(self, shape):
        if shape not in self._ones:
            self._ones[shape] = np.ones(shape, dtype=np.float64)
        return self._ones[shape]


def adam_step(table, state, grads_by_name, opt_state, opt, step):
    """One bias-corrected Adam update over every parameter, in place.

    step is 1-indexed. Entries masked out by the pruning state are
    frozen: the weight and both moment buffers stay untouched.
    """
    c1 = 1.0 - opt.beta1 ** step
    c2 = 1.0 - opt.beta2 ** step
    for p in table.params:
        g = grads_by_name[p.name]
        m, v = opt_state.slots(p.name, p.value.shape)
        if p.name in state.masks:
            mask = state.masks[p.name].m.a
        else:
            mask = opt_state.ones_mask(p.value.shape)
        kernels.adam_step(p.value.a, g.a, m, v, mask, opt.learning_rate,
                          opt.beta1, opt.beta2, opt.eps, c1, c2)


# ----- evaluation -----


def _forward_value(table, state, inputs):
    g = ExprGraph()
    if table.config.kind is ModelKind.MLP:
        batch = Matrix(np.asarray(inputs, dtype=np.float64))
    else:
        batch = np.asarray(inputs)
    return g.value(forward(g, table, state, batch))


EVAL_CHUNK = 256


def evaluate(table, state, inputs, labels, chunk_size=EVAL_CHUNK):
    """Accuracy of argmax predictions; logit ties resolve toward the
    smaller class index."""
    total = len(labels)
    if total == 0:
        raise ContractError("cannot evaluate on an empty split")
    correct = 0
    for start in range(0, total, chunk_size):
        chunk = inputs[start:start + chunk_size]
        logits = _forward_value(table, state, chunk)
        pred = np.argmax(logits.a, axis=1)
        correct += int(np.sum(pred == labels[start:start + chunk_size]))
    return correct / total


# ----- the run record -----


@dataclass
class RunRecord:
    """Evaluation rows plus the artifacts a run leaves behind.

    Each row reports the scheduled density at its step (masks are only
    recomputed on cadence boundaries, so the live mask may lag by less
    than one cadence), the penalty weight, the batch cross-entropy
    before that step's update, the mean and per-matrix deviance of the
    masked weights, and test accuracy.
    """

    rows: list
    final_masks: str
    table: object
    state: object


ROW_KEYS = ("step", "density", "lambda", "train_l_ce", "train_l_r",
            "test_accuracy", "deviance")


def write_run_record(path, record):
    """Serialize rows as JSON Lines; the last line names the mask file."""
    lines = []
    for row in record.rows:
        ordered = {k: row[k] for k in ROW_KEYS}
        lines.append(json.dumps(ordered))
    lines.append(json.dumps({"final_masks": record.final_masks}))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ----- training -----


def _batch_indices(perm, t, batch_size):
    n = len(perm)
    positions = (np.arange(batch_size) + t * batch_size) % n
    return perm[positions]


def train(config, data):
    """Run one experiment and return its RunRecord."""
    table = init_model(config.model)
    targets = select_targets(table, config.domain)
    state = PruningState.initial(targets, table.weights())
    n_train = len(data.train_labels)
    if n_train == 0:
        raise ContractError("training split is empty")
    shuffle_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        [config.seed, 3])))
    perm = shuffle_rng.permutation(n_train)
    opt_state = AdamState()
    rows = []
    is_mlp = config.model.kind is ModelKind.MLP

    def batch_at(t):
        idx = _batch_indices(perm, t, config.batch_size)
        if is_mlp:
            return Matrix(np.asarray(data.train_inputs[idx], dtype=np.float64)), \
                data.train_labels[idx]
        return data.train_inputs[idx], data.train_labels[idx]

    def record_row(t, l_ce):
        devs = {}
        for name in targets:
            eff = table.get(name).value.a * state.masks[name].m.a
            devs[name] = deviance(Matrix._wrap(eff), config.variant)
        rows.append({
            "step": t,
            "density": density_at(t, config.schedule),
            "lambda": lambda_at(t, config.lambda_schedule),
            "train_l_ce": l_ce,
            "train_l_r": sum(devs.values()) / len(devs),
            "test_accuracy": evaluate(table, state, data.test_inputs,
                                      data.test_labels),
            "deviance": devs,
        })

    def step_graph(t):
        inputs, labels = batch_at(t)
        g = ExprGraph()
        taps = {}
        logits = forward(g, table, state, inputs, taps)
        ce = g.cross_entropy_mean(logits, labels)
        lam_t = lambda_at(t, config.lambda_schedule)
        if lam_t > 0.0:
            reg = regularization_node(
                g, [taps["effective"][n] for n in targets], config.variant)
            total = g.add(ce, g.scalar_mul(reg, lam_t))
        else:
            total = ce
        if not math.isfinite(g.scalar(total)):
            raise TrainingAborted(f"non-finite loss at step {t}")
        return g, taps, ce, total

    for t in range(config.schedule.total_steps):
        if t % config.schedule.cadence == 0:
            state = pruning_event(state, table.weights(), t, config.schedule)
        g, taps, ce, total = step_graph(t)
        if t % config.eval_every == 0:
            record_row(t, g.scalar(ce))
        leaves = taps["leaves"]
        grads = g.backward(total, list(leaves.values()))
        grads_by_name = {name: grads[leaf] for name, leaf in leaves.items()}
        adam_step(table, state, grads_by_name, opt_state, config.optimizer,
                  t + 1)

    t_end = config.schedule.total_steps
    state = pruning_event(state, table.weights(), t_end, config.schedule)
    g, _, ce, _ = step_graph(t_end)
    record_row(t_end, g.scalar(ce))
    return RunRecord(rows=rows, final_masks="masks.ckpt", table=table,
                     state=state)
