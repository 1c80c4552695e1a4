"""Local magnitude pruning.

Each target matrix is pruned independently ("locally"): at every pruning
event the top v fraction of entries by absolute value survive and the
rest are zeroed in the forward pass. Masks are binary, recomputed from
the current underlying weights, so a removed weight whose stored value
still ranks high can re-enter later (reselection). The density v follows
a cubic schedule from v_initial down to v_final.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    ContractError,
    InputError,
    IntegrityError,
)
from .matrix import Matrix

PRUNABLE_ATTENTION_ROLES = ("Q", "K", "V", "O", "FF1", "FF2")
PRUNABLE_MLP_ROLES = ("HIDDEN",)
SUPPORT_ROLES = ("EMBED", "GAIN", "BIAS", "HEAD")
KNOWN_ROLES = PRUNABLE_ATTENTION_ROLES + PRUNABLE_MLP_ROLES + SUPPORT_ROLES


class TargetDomain(enum.Enum):
    """Which matrices are pruned and regularized."""

    ALL = "all"
    Q_PLUS_K = "q+k"
    Q_ONLY = "q"
    K_ONLY = "k"

    @classmethod
    def from_string(cls, s):
        try:
            return cls(s.strip().lower())
        except ValueError:
            valid = ", ".join(d.value for d in cls)
            raise ConfigurationError(
                f"unknown target domain {s!r}; expected one of {valid}"
            ) from None


@dataclass(frozen=True)
class PruningSchedule:
    """Cubic density ramp plus event cadence.

    Density starts at v_initial, stays there until step t_i, falls along
    a cubic to v_final at t_i + ramp_steps, and stays at v_final through
    total_steps. Pruning events fire every `cadence` steps, with a final
    forced event at total_steps.
    """

    v_initial: float
    v_final: float
    t_i: int
    ramp_steps: int
    cadence: int
    total_steps: int

    def __post_init__(self):
        for label, v in (("v_initial", self.v_initial), ("v_final", self.v_final)):
            if not (0.0 < v <= 1.0):
                raise ConfigurationError(
                    f"{label} must be a density in (0, 1], got {v}"
                )
        if self.v_final > self.v_initial:
            raise ConfigurationError(
                f"v_final ({self.v_final}) must not exceed "
                f"v_initial ({self.v_initial})"
            )
        if self.t_i < 0:
            raise ConfigurationError(f"t_i must be >= 0, got {self.t_i}")
        if self.ramp_steps < 1:
            raise ConfigurationError(
                f"ramp_steps must be >= 1, got {self.ramp_steps}"
            )
        if self.cadence < 1:
            raise ConfigurationError(f"cadence must be >= 1, got {self.cadence}")
        if self.total_steps < 0:
            raise ConfigurationError(
                f"total_steps must be >= 0, got {self.total_steps}"
            )
        # A flat schedule never changes density, so it may run for any
        # number of steps (including zero-step smoke runs); a real ramp
        # must finish inside the run so the final density is reached.
        if self.v_final < self.v_initial:
            if self.t_i + self.ramp_steps > self.total_steps:
                raise ConfigurationError(
                    f"ramp ends at step {self.t_i + self.ramp_steps}, after "
                    f"total_steps={self.total_steps}"
                )


def density_at(t, schedule):
    """Density fraction at step t under the cubic schedule."""
    p = (t - schedule.t_i) / schedule.ramp_steps
    if p < 0.0:
        p = 0.0
    elif p > 1.0:
        p = 1.0
    span = schedule.v_initial - schedule.v_final
    return schedule.v_final + span * (1.0 - p) ** 3


class Mask:
    """Binary survival mask, stored as a float64 0/1 matrix so it can
    multiply a weight matrix directly."""

    __slots__ = ("m",)

    def __init__(self, m):
        if not isinstance(m, Matrix):
            m = Matrix(m)
        if not np.all((m.a == 0.0) | (m.a == 1.0)):
            raise InputError("mask entries must be exactly 0 or 1")
        self.m = m

    @classmethod
    def ones(cls, rows, cols):
        return cls(Matrix.full(rows, cols, 1.0))

    @property
    def rows(self):
        return self.m.rows

    @property
    def cols(self):
        return self.m.cols

    @property
    def shape(self):
        return self.m.shape

    @property
    def popcount(self):
        return int(self.m.a.sum())

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return self.m == other.m

    def __repr__(self):
        return f"Mask({self.m.a.tolist()!r})"


def survivor_count(v, size):
    """Number of surviving entries: round(v * size), half up."""
    return int(math.floor(v * size + 0.5))


def compute_mask(w, v):
    """Mask of the k = round(v*size) largest-|w| entries.

    Ties are broken by row-major position: among equal magnitudes the
    entry with the smaller flat index survives first.
    """
    if not (0.0 <= v <= 1.0):
        raise InputError(f"density must be in [0, 1], got {v}")
    flat = np.abs(w.a).ravel()
    k = survivor_count(v, flat.size)
    bits = np.zeros(flat.size, dtype=np.float64)
    if k > 0:
        # Stable sort on negated magnitudes: descending by |w|, and equal
        # magnitudes keep their row-major order.
        order = np.argsort(-flat, kind="stable")
        bits[order[:k]] = 1.0
    return Mask(Matrix._wrap(bits.reshape(w.shape)))


def select_targets(table, domain):
    """Ordered names of the matrices a domain prunes and regularizes.

    Walks layers in ascending order and roles in a fixed order within
    each layer, so the result never depends on dict iteration order.
    Embeddings, biases, norm parameters and the classifier head are
    never selected.
    """
    by_layer = {}
    for p in table.params:
        if p.role not in KNOWN_ROLES:
            raise ConfigurationError(
                f"parameter {p.name!r} has unknown role {p.role!r}"
            )
        if p.layer is not None and p.role in PRUNABLE_ATTENTION_ROLES + PRUNABLE_MLP_ROLES:
            by_layer.setdefault(p.layer, {})[p.role] = p.name

    if domain is TargetDomain.ALL:
        wanted = PRUNABLE_ATTENTION_ROLES + PRUNABLE_MLP_ROLES
    elif domain is TargetDomain.Q_PLUS_K:
        wanted = ("Q", "K")
    elif domain is TargetDomain.Q_ONLY:
        wanted = ("Q",)
    elif domain is TargetDomain.K_ONLY:
        wanted = ("K",)
    else:
        raise ContractError(f"unhandled domain {domain!r}")

    names = []
    for layer in sorted(by_layer):
        roles = by_layer[layer]
        for role in wanted:
            if role in roles:
                names.append(roles[role])
    if not names:
        raise ConfigurationError(
            f"model has no matrices for domain {domain.value!r}"
        )
    return names


@dataclass
class PruningState:
    """Masks for every target plus the density they were computed at."""

    masks: dict
    current_density: float
    last_event_step: object

    @classmethod
    def initial(cls, names, weights):
        """All-ones masks (density 1) before any pruning event."""
        masks = {}
        for name in names:
            w = weights[name]
            masks[name] = Mask.ones(w.rows, w.cols)
        return cls(masks=masks, current_density=1.0, last_event_step=None)


def pruning_event(state, weights, t, schedule):
    """Recompute every mask from current weights at density_at(t).

    Pure: returns a new PruningState. Any previously removed weight whose
    stored magnitude now ranks inside the survivor set re-enters.
    """
    if not (t == 0 or t == schedule.total_steps or t % schedule.cadence == 0):
        raise ContractError(
            f"pruning event at step {t} is not on the cadence grid"
        )
    v = density_at(t, schedule)
    masks = {}
    for name in state.masks:
        if name not in weights:
            raise IntegrityError(f"no weights supplied for masked matrix {name!r}")
        masks[name] = compute_mask(weights[name], v)
    return PruningState(masks=masks, current_density=v, last_event_step=t)


def apply_mask(g, w, mask):
    """Multiply graph node w by a constant mask leaf; gradient flows only
    to surviving entries."""
    return g.mul(w, g.leaf(mask.m))
