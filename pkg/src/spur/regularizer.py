"""Deviance regularization.

A weight matrix whose absolute values factor as (row sums x column sums)
/ grand total is maximally "independent" in the contingency-table sense:
every weight's magnitude is explained by its row and column totals. The
deviance of a matrix measures how far |W| is from that rank-one
expectation; penalizing small deviance pushes surviving magnitude toward
concentrated rows and columns. Four variants are provided:

  SPUR  mean of squared standardized deviations (chi-square / N)
  L1S   mean of absolute standardized deviations
  L1    mean of absolute raw deviations
  L2    mean of squared raw deviations

Everything exists twice: a plain-matrix evaluator for reporting, and a
graph builder (``deviance_node``) whose gradient flows through the
expectation itself.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError, InputError
from .matrix import Matrix

STANDARDIZE_EPS = 1e-12


class DevianceVariant(enum.Enum):
    SPUR = "spur"
    L1S = "l1s"
    L1 = "l1"
    L2 = "l2"

    @classmethod
    def from_string(cls, s):
        try:
            return cls(s.strip().lower())
        except ValueError:
            valid = ", ".join(v.value for v in cls)
            raise ConfigurationError(
                f"unknown deviance variant {s!r}; expected one of {valid}"
            ) from None


@dataclass(frozen=True)
class LossBreakdown:
    """One training objective evaluation: total = l_ce + lam * l_r."""

    l_ce: float
    l_r: float
    lam: float
    total: float


@dataclass(frozen=True)
class LambdaSchedule:
    """Cubic ramp of the regularization weight, from 0 at step t_i up to
    lambda_final at step t_i + ramp_steps."""

    lambda_final: float
    t_i: int
    ramp_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.lambda_final) and self.lambda_final >= 0):
            raise ConfigurationError(
                f"lambda_final must be finite and >= 0, got {self.lambda_final}"
            )
        if self.t_i < 0:
            raise ConfigurationError(f"t_i must be >= 0, got {self.t_i}")
        if self.ramp_steps < 1:
            raise ConfigurationError(
                f"ramp_steps must be >= 1, got {self.ramp_steps}"
            )


def lambda_at(t, schedule):
    """Regularization weight at step t.

    0 before t_i, lambda_final after the ramp, cubic in between:
    lambda_final * (1 - (1 - p)^3) with p the ramp fraction.
    """
    p = (t - schedule.t_i) / schedule.ramp_steps
    if p < 0.0:
        p = 0.0
    elif p > 1.0:
        p = 1.0
    return schedule.lambda_final * (1.0 - (1.0 - p) ** 3)


def expected_magnitude(w):
    """Expectation of |w| under row/column independence.

    E_ij = (sum of |row i|) * (sum of |column j|) / (sum of all |w|),
    the classic contingency-table expected count. All-zero input gives
    the zero matrix. Sums use math.fsum (exactly rounded), so the result
    is invariant under row and column permutations bit for bit.
    """
    a = np.abs(w.a)
    total = math.fsum(a.flat)
    if total == 0.0:
        return Matrix.zeros(w.rows, w.cols)
    rows = np.array([[math.fsum(row)] for row in a.tolist()])
    cols = np.array([[math.fsum(col) for col in a.T.tolist()]])
    return Matrix._wrap(rows * cols / total)


def deviance(w, variant):
    """Mean deviation of |w| from its independence expectation.

    Standardized variants (SPUR, L1S) divide by sqrt(E + 1e-12); raw
    variants (L1, L2) do not. The result is averaged over all r*c
    entries (exactly rounded sum, so entry order never matters) and is
    always >= 0.
    """
    a = np.abs(w.a)
    e = expected_magnitude(w).a
    x = a - e
    if variant is DevianceVariant.SPUR:
        cell = (x / np.sqrt(e + STANDARDIZE_EPS)) ** 2
    elif variant is DevianceVariant.L1S:
        cell = np.abs(x) / np.sqrt(e + STANDARDIZE_EPS)
    elif variant is DevianceVariant.L1:
        cell = np.abs(x)
    elif variant is DevianceVariant.L2:
        cell = x * x
    else:
        raise ContractError(f"unhandled variant {variant!r}")
    return math.fsum(cell.flat) / cell.size


def regularization_loss(targets, variant):
    """Arithmetic mean of deviance over the target matrices."""
    targets = list(targets)
    if not targets:
        raise ConfigurationError("regularization needs at least one target matrix")
    values = [deviance(w, variant) for w in targets]
    return sum(values) / len(values)


def total_loss(l_ce, lam, l_r):
    """Combine task loss and regularization into a LossBreakdown."""
    if l_ce < 0 or lam < 0 or l_r < 0:
        raise ContractError(
            f"loss terms must be non-negative, got l_ce={l_ce}, "
            f"lambda={lam}, l_r={l_r}"
        )
    return LossBreakdown(
        l_ce=float(l_ce),
        l_r=float(l_r),
        lam=float(lam),
        total=float(l_ce) + float(lam) * float(l_r),
    )


def _deviance_vjp(gout, inputs, ctx):
    """Gradient of the fused deviance node.

    The deviance depends on the weights twice: directly through
    x = |w| - e, and through the expectation e = (row sums x col sums) /
    total, which couples every entry to its row, its column and the
    grand total. Writing Ge for dD/de, the chain rule collapses to

        dD/d|w|[k,l] = dD/dx[k,l]
                       + (sum_j Ge[k,j] c[j] + sum_i Ge[i,l] r[i]
                          - sum_ij Ge[i,j] e[i,j]) / total

    and dD/dw = dD/d|w| * sign(w), with sign(0) = 0 matching the abs
    subgradient convention.
    """
    variant, x, e, u, rs, cs, total, n = ctx
    if variant is DevianceVariant.SPUR:
        d_dx = (2.0 / n) * x / u
        d_du = -(1.0 / n) * (x * x) / (u * u)
        ge = -d_dx + d_du
    elif variant is DevianceVariant.L1S:
        root = np.sqrt(u)
        d_dx = np.sign(x) / (n * root)
        d_du = -np.abs(x) / (2.0 * n * u * root)
        ge = -d_dx + d_du
    elif variant is DevianceVariant.L1:
        d_dx = np.sign(x) / n
        ge = -d_dx
    else:
        d_dx = (2.0 / n) * x
        ge = -d_dx
    row_term = (ge * cs).sum(axis=1, keepdims=True)
    col_term = (ge * rs).sum(axis=0, keepdims=True)
    scalar_term = (ge * e).sum()
    d_da = d_dx + (row_term + col_term - scalar_term) / total
    return (gout[0, 0] * d_da * np.sign(inputs[0]),)


def deviance_node(g, w, variant):
    """Build the deviance of graph node w as one differentiable node.

    The backward pass differentiates through E(|w|) as a function of w
    rather than treating it as a constant; the analytic rule lives in
    _deviance_vjp and is held to finite differences by the test suite.
    The matrix must have a non-zero magnitude total (an all-zero matrix
    has no defined expectation ratio here; the plain evaluator handles
    that case by returning 0).
    """
    if not isinstance(variant, DevianceVariant):
        raise ContractError(f"unhandled variant {variant!r}")
    wv = g.value(w).a
    a = np.abs(wv)
    total = float(a.sum())
    if total == 0.0:
        raise InputError(
            "deviance node needs a non-zero magnitude total; "
            "the matrix is entirely zero"
        )
    rs = a.sum(axis=1, keepdims=True)
    cs = a.sum(axis=0, keepdims=True)
    e = rs * cs / total
    x = a - e
    n = a.size
    u = None
    if variant is DevianceVariant.SPUR:
        u = e + STANDARDIZE_EPS
        val = float(np.mean(x * x / u))
    elif variant is DevianceVariant.L1S:
        u = e + STANDARDIZE_EPS
        val = float(np.mean(np.abs(x) / np.sqrt(u)))
    elif variant is DevianceVariant.L1:
        val = float(np.mean(np.abs(x)))
    else:
        val = float(np.mean(x * x))
    ctx = (variant, x, e, u, rs, cs, total, n)
    return g.custom("deviance", (w,), np.array([[val]]), ctx, _deviance_vjp)


def regularization_node(g, target_nodes, variant):
    """Mean of deviance_node over several target nodes, as a 1x1 node."""
    target_nodes = list(target_nodes)
    if not target_nodes:
        raise ConfigurationError("regularization needs at least one target matrix")
    acc = deviance_node(g, target_nodes[0], variant)
    for w in target_nodes[1:]:
        acc = g.add(acc, deviance_node(g, w, variant))
    return g.scalar_mul(acc, 1.0 / len(target_nodes))
