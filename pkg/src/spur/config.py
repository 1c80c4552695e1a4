"""Flat key=value experiment configuration.

A config file is UTF-8 text, one `key = value` per line, `#` starting a
comment, keys naming ExperimentConfig fields with dots for nesting
(`schedule.v_final = 0.03`). Unknown or duplicate keys are hard errors.
Every key has a default, so the empty file is a valid config: it
resolves to the toy reference experiment (2-layer width-32 transformer
on the duplicate-detection task, 6000 steps, density 1.0 to 0.05,
lambda ramping to 10).

echo_lines() serializes a resolved config back into sorted key=value
lines. Feeding the echo back through the parser reproduces the config
exactly, so every run directory can carry a self-describing copy.
"""

from .data import TaskKind
from .errors import ConfigurationError
from .models import ModelConfig, ModelKind
from .pruning import PruningSchedule, TargetDomain
from .regularizer import DevianceVariant, LambdaSchedule
from .training import ExperimentConfig, Method, OptimizerParams, TaskSpec

DEFAULTS = {
    "batch_size": "32",
    "domain": "all",
    "eval_every": "250",
    "lambda_schedule.lambda_final": "10.0",
    "lambda_schedule.ramp_steps": "4500",
    "lambda_schedule.t_i": "500",
    "method": "imp_spur",
    "model.classes": "2",
    "model.ffn_dim": "128",
    "model.heads": "2",
    "model.hidden_dim": "32",
    "model.input_dim": "0",
    "model.kind": "transformer",
    "model.layers": "2",
    "model.max_seq": "12",
    "model.seed": "",
    "model.vocab": "24",
    "optimizer.beta1": "0.9",
    "optimizer.beta2": "0.999",
    "optimizer.eps": "1e-08",
    "optimizer.learning_rate": "0.003",
    "schedule.cadence": "16",
    "schedule.ramp_steps": "4500",
    "schedule.t_i": "500",
    "schedule.total_steps": "6000",
    "schedule.v_final": "0.05",
    "schedule.v_initial": "1.0",
    "seed": "0",
    "task.dim": "16",
    "task.kind": "duplicate",
    "task.length": "12",
    "task.n": "4096",
    "task.spread": "1.0",
    "task.vocab": "24",
    "variant": "spur",
}


def parse_config_text(text):
    """Text to a raw {key: value-string} dict, validating key names."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigurationError(
                f"config line {lineno} is not `key = value`: {line!r}"
            )
        key, value = body.split("=", 1)
        key = key.strip()
        value = value.strip()
        if key not in DEFAULTS:
            raise ConfigurationError(f"unknown config key {key!r}")
        if key in raw:
            raise ConfigurationError(f"duplicate config key {key!r}")
        raw[key] = value
    return raw


def _as_int(raw, key):
    s = raw[key]
    try:
        return int(s)
    except ValueError:
        raise ConfigurationError(
            f"config key {key} wants an integer, got {s!r}"
        ) from None


def _as_float(raw, key):
    s = raw[key]
    try:
        return float(s)
    except ValueError:
        raise ConfigurationError(
            f"config key {key} wants a number, got {s!r}"
        ) from None


def resolve_config(raw):
    """Fill defaults and build the typed ExperimentConfig.

    Two resolution rules beyond plain parsing: model.seed defaults to
    the experiment seed, and method=imp zeroes the unused penalty
    weight (setting it nonzero explicitly alongside method=imp is a
    contradiction and errors).
    """
    merged = dict(DEFAULTS)
    merged.update(raw)

    seed = _as_int(merged, "seed")
    if merged["model.seed"] == "":
        merged["model.seed"] = str(seed)

    method = Method.from_string(merged["method"])
    lambda_final = _as_float(merged, "lambda_schedule.lambda_final")
    if method is Method.IMP:
        if "lambda_schedule.lambda_final" in raw and lambda_final != 0.0:
            raise ConfigurationError(
                "method imp runs without the deviance penalty; drop "
                "lambda_schedule.lambda_final or set it to 0"
            )
        lambda_final = 0.0

    model = ModelConfig(
        kind=ModelKind.from_string(merged["model.kind"]),
        layers=_as_int(merged, "model.layers"),
        hidden_dim=_as_int(merged, "model.hidden_dim"),
        heads=_as_int(merged, "model.heads"),
        ffn_dim=_as_int(merged, "model.ffn_dim"),
        vocab=_as_int(merged, "model.vocab"),
        max_seq=_as_int(merged, "model.max_seq"),
        classes=_as_int(merged, "model.classes"),
        input_dim=_as_int(merged, "model.input_dim"),
        seed=_as_int(merged, "model.seed"),
    )
    task = TaskSpec(
        kind=TaskKind.from_string(merged["task.kind"]),
        n=_as_int(merged, "task.n"),
        length=_as_int(merged, "task.length"),
        vocab=_as_int(merged, "task.vocab"),
        dim=_as_int(merged, "task.dim"),
        spread=_as_float(merged, "task.spread"),
    )
    schedule = PruningSchedule(
        v_initial=_as_float(merged, "schedule.v_initial"),
        v_final=_as_float(merged, "schedule.v_final"),
        t_i=_as_int(merged, "schedule.t_i"),
        ramp_steps=_as_int(merged, "schedule.ramp_steps"),
        cadence=_as_int(merged, "schedule.cadence"),
        total_steps=_as_int(merged, "schedule.total_steps"),
    )
    lambda_schedule = LambdaSchedule(
        lambda_final=lambda_final,
        t_i=_as_int(merged, "lambda_schedule.t_i"),
        ramp_steps=_as_int(merged, "lambda_schedule.ramp_steps"),
    )
    optimizer = OptimizerParams(
        learning_rate=_as_float(merged, "optimizer.learning_rate"),
        beta1=_as_float(merged, "optimizer.beta1"),
        beta2=_as_float(merged, "optimizer.beta2"),
        eps=_as_float(merged, "optimizer.eps"),
    )
    return ExperimentConfig(
        model=model,
        task=task,
        method=method,
        variant=DevianceVariant.from_string(merged["variant"]),
        domain=TargetDomain.from_string(merged["domain"]),
        schedule=schedule,
        lambda_schedule=lambda_schedule,
        optimizer=optimizer,
        batch_size=_as_int(merged, "batch_size"),
        eval_every=_as_int(merged, "eval_every"),
        seed=seed,
    )


def load_config(path):
    """Read and resolve a config file."""
    with open(path, encoding="utf-8") as fh:
        return resolve_config(parse_config_text(fh.read()))


def echo_lines(config):
    """A resolved config as sorted `key = value` lines."""
    values = {
        "batch_size": config.batch_size,
        "domain": config.domain.value,
        "eval_every": config.eval_every,
        "lambda_schedule.lambda_final": config.lambda_schedule.lambda_final,
        "lambda_schedule.ramp_steps": config.lambda_schedule.ramp_steps,
        "lambda_schedule.t_i": config.lambda_schedule.t_i,
        "method": config.method.value,
        "model.classes": config.model.classes,
        "model.ffn_dim": config.model.ffn_dim,
        "model.heads": config.model.heads,
        "model.hidden_dim": config.model.hidden_dim,
        "model.input_dim": config.model.input_dim,
        "model.kind": config.model.kind.value,
        "model.layers": config.model.layers,
        "model.max_seq": config.model.max_seq,
        "model.seed": config.model.seed,
        "model.vocab": config.model.vocab,
        "optimizer.beta1": config.optimizer.beta1,
        "optimizer.beta2": config.optimizer.beta2,
        "optimizer.eps": config.optimizer.eps,
        "optimizer.learning_rate": config.optimizer.learning_rate,
        "schedule.cadence": config.schedule.cadence,
        "schedule.ramp_steps": config.schedule.ramp_steps,
        "schedule.t_i": config.schedule.t_i,
        "schedule.total_steps": config.schedule.total_steps,
        "schedule.v_final": config.schedule.v_final,
        "schedule.v_initial": config.schedule.v_initial,
        "seed": config.seed,
        "task.dim": config.task.dim,
        "task.kind": config.task.kind.value,
        "task.length": config.task.length,
        "task.n": config.task.n,
        "task.spread": config.task.spread,
        "task.vocab": config.task.vocab,
        "variant": config.variant.value,
    }
    return [f"{key} = {values[key]}" for key in sorted(values)]


def write_echo(path, config):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(echo_lines(config)) + "\n")
