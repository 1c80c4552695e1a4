"""Toy models with the pruning target layout of a transformer encoder.

Two architectures share a parameter-table representation:

* an MLP classifier (masked hidden layers, unmasked head), and
* a tiny post-norm transformer encoder whose every layer holds exactly
  six dense matrices: Q, K, V, attention output O, FFN-in FF1 and
  FFN-out FF2.

Embeddings, biases, norm parameters and the classifier head are never
pruned or regularized; only the six per-layer matrices (or the MLP
hidden matrices) are targets.
"""

import enum
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError, IntegrityError, ShapeError
from .matrix import Matrix

_LAYER_RE = re.compile(r"^layer(\d+)\.")


class ModelKind(enum.Enum):
    MLP = "mlp"
    TRANSFORMER = "transformer"

    @classmethod
    def from_string(cls, s):
        try:
            return cls(s.strip().lower())
        except ValueError:
            raise ConfigurationError(
                f"unknown model kind {s!r}; expected mlp or transformer"
            ) from None


@dataclass(frozen=True)
class ModelConfig:
    kind: ModelKind
    layers: int
    hidden_dim: int
    heads: int = 2
    ffn_dim: int = 0
    vocab: int = 0
    max_seq: int = 0
    classes: int = 2
    input_dim: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.layers < 1:
            raise ConfigurationError(f"layers must be >= 1, got {self.layers}")
        if self.hidden_dim < 1:
            raise ConfigurationError(
                f"hidden_dim must be >= 1, got {self.hidden_dim}"
            )
        if self.classes < 1:
            raise ConfigurationError(f"classes must be >= 1, got {self.classes}")
        if not (0 <= self.seed < 2 ** 64):
            raise ConfigurationError("seed must fit in an unsigned 64-bit int")
        if self.ffn_dim == 0:
            object.__setattr__(self, "ffn_dim", 4 * self.hidden_dim)
        if self.ffn_dim < 1:
            raise ConfigurationError(f"ffn_dim must be >= 1, got {self.ffn_dim}")
        if self.kind is ModelKind.TRANSFORMER:
            if self.heads < 1 or self.hidden_dim % self.heads != 0:
                raise ConfigurationError(
                    f"heads ({self.heads}) must divide hidden_dim "
                    f"({self.hidden_dim})"
                )
            if self.vocab < 1:
                raise ConfigurationError(
                    f"vocab must be >= 1 for a transformer, got {self.vocab}"
                )
            if self.max_seq < 1:
                raise ConfigurationError(
                    f"max_seq must be >= 1 for a transformer, got {self.max_seq}"
                )
        else:
            if self.input_dim == 0:
                object.__setattr__(self, "input_dim", self.hidden_dim)
            if self.input_dim < 1:
                raise ConfigurationError(
                    f"input_dim must be >= 1, got {self.input_dim}"
                )


@dataclass
class Param:
    name: str
    role: str
    layer: object
    value: Matrix


@dataclass
class ParamTable:
    config: ModelConfig
    params: list = field(default_factory=list)

    def add(self, name, role, layer, value):
        if any(p.name == name for p in self.params):
            raise ConfigurationError(f"duplicate parameter name {name!r}")
        self.params.append(Param(name, role, layer, value))

    def get(self, name):
        for p in self.params:
            if p.name == name:
                return p
        raise IntegrityError(f"no parameter named {name!r}")

    def weights(self):
        """name -> Matrix view of every parameter."""
        return {p.name: p.value for p in self.params}


def layer_of(name):
    """Layer index encoded in a parameter name, or None."""
    m = _LAYER_RE.match(name)
    return int(m.group(1)) if m else None


def _xavier(rng, rows, cols):
    a = math.sqrt(6.0 / (rows + cols))
    return Matrix(rng.uniform(-a, a, size=(rows, cols)))


def init_model(config):
    """Build a freshly initialized ParamTable.

    Dense weights (embeddings included) draw from the uniform
    distribution on [-a, a] with a = sqrt(6 / (fan_in + fan_out)); norm
    gains start at 1 and every bias at 0. Parameters are created in a
    fixed order from a seeded generator, so one seed always produces a
    bit-identical table.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        [config.seed, 0])))
    table = ParamTable(config=config)
    d = config.hidden_dim
    if config.kind is ModelKind.MLP:
        prev = config.input_dim
        for i in range(config.layers):
            table.add(f"layer{i}.w", "HIDDEN", i, _xavier(rng, prev, d))
            table.add(f"layer{i}.b", "BIAS", i, Matrix.zeros(1, d))
            prev = d
        table.add("head.w", "HEAD", None, _xavier(rng, prev, config.classes))
        table.add("head.b", "BIAS", None, Matrix.zeros(1, config.classes))
        return table

    table.add("emb.tok", "EMBED", None, _xavier(rng, config.vocab, d))
    table.add("emb.pos", "EMBED", None, _xavier(rng, config.max_seq, d))
    for i in range(config.layers):
        for role in ("Q", "K", "V", "O"):
            table.add(f"layer{i}.{role.lower()}", role, i, _xavier(rng, d, d))
            table.add(f"layer{i}.{role.lower()}_bias", "BIAS", i,
                      Matrix.zeros(1, d))
        table.add(f"layer{i}.ff1", "FF1", i, _xavier(rng, d, config.ffn_dim))
        table.add(f"layer{i}.ff1_bias", "BIAS", i, Matrix.zeros(1, config.ffn_dim))
        table.add(f"layer{i}.ff2", "FF2", i, _xavier(rng, config.ffn_dim, d))
        table.add(f"layer{i}.ff2_bias", "BIAS", i, Matrix.zeros(1, d))
        table.add(f"layer{i}.norm1_gain", "GAIN", i, Matrix.full(1, d, 1.0))
        table.add(f"layer{i}.norm1_bias", "BIAS", i, Matrix.zeros(1, d))
        table.add(f"layer{i}.norm2_gain", "GAIN", i, Matrix.full(1, d, 1.0))
        table.add(f"layer{i}.norm2_bias", "BIAS", i, Matrix.zeros(1, d))
    table.add("head.w", "HEAD", None, _xavier(rng, d, config.classes))
    table.add("head.b", "BIAS", None, Matrix.zeros(1, config.classes))
    return table


_POOL_CACHE = {}
_POS_CACHE = {}


def _pool_matrix(n, length):
    """Block-diagonal mean-pool operator mapping n*length token rows to
    n pooled rows; cached per shape since it never changes."""
    key = (n, length)
    if key not in _POOL_CACHE:
        _POOL_CACHE[key] = Matrix._wrap(
            np.kron(np.eye(n), np.full((1, length), 1.0 / length))
        )
    return _POOL_CACHE[key]


def _positions(n, length):
    key = (n, length)
    if key not in _POS_CACHE:
        _POS_CACHE[key] = np.tile(np.arange(length), n)
    return _POS_CACHE[key]


class _Tapper:
    """Creates each parameter's leaf once per graph and applies masks.

    After a forward pass, `leaves` maps parameter name to its leaf node
    and `effective` maps each masked name to the W*M product node, which
    is what the regularizer should see. Leaves share the parameter
    arrays without copying; the training loop only mutates them after
    the step's graph is done.
    """

    def __init__(self, g, table, state):
        self.g = g
        self.by_name = {p.name: p for p in table.params}
        self.masks = state.masks if state is not None else {}
        self.leaves = {}
        self.effective = {}

    def leaf(self, name):
        if name not in self.leaves:
            self.leaves[name] = self.g.constant(self.by_name[name].value)
        return self.leaves[name]

    def weight(self, name):
        """Leaf for `name`, multiplied by its mask when one exists."""
        if name in self.effective:
            return self.effective[name]
        node = self.leaf(name)
        if name in self.masks:
            node = self.g.mul(node, self.g.constant(self.masks[name].m))
        self.effective[name] = node
        return node


def forward_mlp(g, table, state, batch, taps=None):
    """Logits node for a batch through the masked MLP.

    batch is an n x input_dim Matrix. Hidden layers apply their mask to
    the weight matrix before the matmul; the classifier head is never
    masked.
    """
    config = table.config
    if batch.cols != config.input_dim:
        raise ShapeError(
            f"batch width {batch.cols} does not match input_dim "
            f"{config.input_dim}"
        )
    tap = _Tapper(g, table, state)
    x = g.leaf(batch)
    for i in range(config.layers):
        x = g.relu(g.linear(x, tap.weight(f"layer{i}.w"),
                            tap.leaf(f"layer{i}.b")))
    logits = g.linear(x, tap.leaf("head.w"), tap.leaf("head.b"))
    if taps is not None:
        taps["leaves"] = tap.leaves
        taps["effective"] = tap.effective
    return logits


def forward_transformer(g, table, state, tokens, taps=None):
    """Logits node for a batch of token sequences.

    tokens is an n x len integer grid. Each sequence gets token plus
    learned positional embeddings, runs through `layers` post-norm
    encoder layers (masked Q/K/V/O multi-head attention, then a masked
    relu FFN, each followed by a residual add and layer norm), is
    mean-pooled over positions and classified by the unmasked head.
    """
    config = table.config
    tok = np.asarray(tokens)
    if tok.ndim != 2 or tok.shape[0] < 1 or tok.shape[1] < 1:
        raise ShapeError("tokens must be a non-empty 2-D integer grid")
    if not np.issubdtype(tok.dtype, np.integer):
        raise InputError("tokens must be integers")
    n, length = tok.shape
    if length > config.max_seq:
        raise InputError(
            f"sequence length {length} exceeds max_seq {config.max_seq}"
        )
    if tok.min() < 0 or tok.max() >= config.vocab:
        raise InputError(f"token ids must lie in [0, {config.vocab})")

    tap = _Tapper(g, table, state)
    flat = tok.reshape(-1)
    x = g.add(
        g.gather_rows(tap.leaf("emb.tok"), flat),
        g.gather_rows(tap.leaf("emb.pos"), _positions(n, length)),
    )
    d = config.hidden_dim
    scale = 1.0 / math.sqrt(d / config.heads)
    for i in range(config.layers):
        q = g.linear(x, tap.weight(f"layer{i}.q"), tap.leaf(f"layer{i}.q_bias"))
        k = g.linear(x, tap.weight(f"layer{i}.k"), tap.leaf(f"layer{i}.k_bias"))
        v = g.linear(x, tap.weight(f"layer{i}.v"), tap.leaf(f"layer{i}.v_bias"))
        att = g.attention_context(q, k, v, n, config.heads, scale)
        o = g.linear(att, tap.weight(f"layer{i}.o"),
                     tap.leaf(f"layer{i}.o_bias"))
        x = g.layer_norm_rows(g.add(x, o), tap.leaf(f"layer{i}.norm1_gain"),
                              tap.leaf(f"layer{i}.norm1_bias"))
        h = g.relu(g.linear(x, tap.weight(f"layer{i}.ff1"),
                            tap.leaf(f"layer{i}.ff1_bias")))
        f = g.linear(h, tap.weight(f"layer{i}.ff2"),
                     tap.leaf(f"layer{i}.ff2_bias"))
        x = g.layer_norm_rows(g.add(x, f), tap.leaf(f"layer{i}.norm2_gain"),
                              tap.leaf(f"layer{i}.norm2_bias"))
    pooled = g.matmul(g.constant(_pool_matrix(n, length)), x)
    logits = g.linear(pooled, tap.leaf("head.w"), tap.leaf("head.b"))
    if taps is not None:
        taps["leaves"] = tap.leaves
        taps["effective"] = tap.effective
    return logits


def forward(g, table, state, inputs, taps=None):
    """Dispatch to the forward pass matching the table's model kind."""
    if table.config.kind is ModelKind.MLP:
        return forward_mlp(g, table, state, inputs, taps)
    return forward_transformer(g, table, state, inputs, taps)


# ----- checkpoints -----


def save_checkpoint(path, entries):
    """Write (name, role, Matrix) triples as plain text.

    Per tensor: a header line `name role rows cols`, then one line per
    row of whitespace-separated values with 17 significant digits.
    Tensors are sorted by name so the bytes never depend on input order.
    """
    entries = sorted(entries, key=lambda e: e[0])
    seen = set()
    lines = []
    for name, role, m in entries:
        if not name or any(ch.isspace() for ch in name):
            raise IntegrityError(f"checkpoint name {name!r} is not writable")
        if name in seen:
            raise IntegrityError(f"duplicate checkpoint tensor {name!r}")
        seen.add(name)
        lines.append(f"{name} {role} {m.rows} {m.cols}")
        for row in m.a:
            lines.append(" ".join("%.17g" % x for x in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    """Read a checkpoint back into (name, role, Matrix) triples.

    The parser is strict: malformed headers, wrong value counts,
    non-finite values or duplicate names raise IntegrityError.
    """
    with open(path) as fh:
        raw = [ln.rstrip("\n") for ln in fh]
    while raw and raw[-1] == "":
        raw.pop()
    entries = []
    seen = set()
    i = 0
    while i < len(raw):
        fields = raw[i].split()
        if len(fields) != 4:
            raise IntegrityError(
                f"{path}: line {i + 1}: expected `name role rows cols`"
            )
        name, role, rows_s, cols_s = fields
        try:
            rows, cols = int(rows_s), int(cols_s)
        except ValueError:
            raise IntegrityError(
                f"{path}: line {i + 1}: non-integer dimensions"
            ) from None
        if rows < 1 or cols < 1:
            raise IntegrityError(f"{path}: line {i + 1}: empty tensor {name!r}")
        if name in seen:
            raise IntegrityError(f"{path}: duplicate tensor {name!r}")
        seen.add(name)
        if i + rows >= len(raw):
            raise IntegrityError(f"{path}: truncated tensor {name!r}")
        data = np.empty((rows, cols), dtype=np.float64)
        for r in range(rows):
            parts = raw[i + 1 + r].split()
            if len(parts) != cols:
                raise IntegrityError(
                    f"{path}: line {i + 2 + r}: expected {cols} values, "
                    f"got {len(parts)}"
                )
            try:
                data[r] = [float(p) for p in parts]
            except ValueError:
                raise IntegrityError(
                    f"{path}: line {i + 2 + r}: unreadable value"
                ) from None
        if not np.all(np.isfinite(data)):
            raise IntegrityError(f"{path}: non-finite value in {name!r}")
        entries.append((name, role, Matrix._wrap(data)))
        i += 1 + rows
    return entries
