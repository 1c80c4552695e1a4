"""Post-hoc structure analysis of pruned weight matrices.

Three views of a trained, masked matrix:

* survivor statistics: mean, population standard deviation and the
  coefficient of variation (percent) of the surviving magnitudes;
* grid concentration: entropy-based scores in [0,1] measuring how
  strongly survivors pile into few rows (row_score) or few columns
  (col_score), 0 for a perfectly even spread and 1 for a single line;
* bit-exact plain-text images: PBM masks (survivor = 1 = black) and
  PGM magnitude heatmaps normalized to a 255 maximum.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

STATS_CSV_HEADER = "name,avg,std,cv,row_score,col_score,grid"


@dataclass(frozen=True)
class SurvivorStats:
    """Mean, population std and percent cv of surviving magnitudes."""

    avg: float
    std: float
    cv: float


@dataclass(frozen=True)
class GridScore:
    """Row/column concentration scores and their mean."""

    row_score: float
    col_score: float
    grid: float


def survivor_stats(w, m):
    """Statistics of |w| over the mask's surviving entries."""
    keep = m.m.a == 1.0
    if not keep.any():
        raise ContractError("survivor statistics need at least one survivor")
    vals = np.abs(w.a[keep])
    avg = float(vals.mean())
    std = float(np.sqrt(np.mean((vals - avg) ** 2)))
    cv = 100.0 * std / avg if avg > 0.0 else 0.0
    return SurvivorStats(avg=avg, std=std, cv=cv)


def aggregate_stats(per_matrix):
    """Unweighted mean of each field across matrices.

    The cv field is averaged like the others rather than recomputed
    from the averaged avg and std, so each matrix contributes its own
    scale-free spread equally.
    """
    stats = list(per_matrix)
    if not stats:
        raise ContractError("cannot aggregate an empty list of statistics")
    n = len(stats)
    return SurvivorStats(
        avg=sum(s.avg for s in stats) / n,
        std=sum(s.std for s in stats) / n,
        cv=sum(s.cv for s in stats) / n,
    )


def _concentration(counts):
    total = counts.sum()
    p = counts[counts > 0.0] / total
    entropy = float(-(p * np.log(p)).sum())
    score = 1.0 - entropy / math.log(counts.size)
    return min(1.0, max(0.0, score))


def grid_concentration(m):
    """Entropy concentration of survivors over rows and over columns.

    With p the normalized row survivor counts, the row score is
    1 - H(p)/ln(rows) using natural-log entropy and 0 ln 0 = 0; the
    column score is symmetric and grid is their mean. Scores are
    clamped into [0,1] against last-digit float round-off.
    """
    grid = m.m.a
    rows, cols = grid.shape
    if rows < 2 or cols < 2:
        raise ContractError(
            f"grid concentration needs a matrix at least 2x2, got "
            f"{rows}x{cols}"
        )
    if not grid.any():
        raise ContractError("grid concentration needs at least one survivor")
    row_score = _concentration(grid.sum(axis=1))
    col_score = _concentration(grid.sum(axis=0))
    return GridScore(row_score=row_score, col_score=col_score,
                     grid=(row_score + col_score) / 2.0)


def aggregate_grid(per_matrix):
    """Unweighted mean of each grid-score field across matrices."""
    scores = list(per_matrix)
    if not scores:
        raise ContractError("cannot aggregate an empty list of grid scores")
    n = len(scores)
    return GridScore(
        row_score=sum(s.row_score for s in scores) / n,
        col_score=sum(s.col_score for s in scores) / n,
        grid=sum(s.grid for s in scores) / n,
    )


def _write_text_image(destination, lines):
    data = ("\n".join(lines) + "\n").encode("ascii")
    with open(destination, "wb") as fh:
        fh.write(data)
    return len(data)


def export_mask_pbm(m, destination):
    """Write the mask as a plain PBM image; returns bytes written.

    Survivors are 1 (black ink), removed entries 0. One matrix row per
    line, space-separated tokens, no comments.
    """
    grid = m.m.a
    rows, cols = grid.shape
    lines = ["P1", f"{cols} {rows}"]
    for row in grid:
        lines.append(" ".join("1" if x == 1.0 else "0" for x in row))
    return _write_text_image(destination, lines)


def export_magnitude_pgm(w, destination):
    """Write |w| as a plain PGM heatmap; returns bytes written.

    Pixels are round(255 |w| / max |w|) with half-up rounding; an
    all-zero matrix maps to all-zero pixels.
    """
    a = np.abs(w.a)
    mx = a.max()
    if mx == 0.0:
        pixels = np.zeros(a.shape, dtype=np.int64)
    else:
        pixels = np.floor(255.0 * a / mx + 0.5).astype(np.int64)
    rows, cols = a.shape
    lines = ["P2", f"{cols} {rows}", "255"]
    for row in pixels:
        lines.append(" ".join(str(int(x)) for x in row))
    return _write_text_image(destination, lines)


def stats_csv_lines(named_rows):
    """CSV lines for per-matrix rows plus the trailing aggregate row.

    named_rows holds (name, SurvivorStats, GridScore) triples; rows are
    emitted sorted by name, then one `aggregate` row of field means.
    """
    triples = sorted(named_rows, key=lambda r: r[0])
    if not triples:
        raise ContractError("statistics table needs at least one matrix")
    lines = [STATS_CSV_HEADER]

    def fmt(name, s, g):
        return ",".join([name, repr(s.avg), repr(s.std), repr(s.cv),
                         repr(g.row_score), repr(g.col_score), repr(g.grid)])

    for name, s, g in triples:
        lines.append(fmt(name, s, g))
    agg_s = aggregate_stats([s for _, s, _ in triples])
    agg_g = aggregate_grid([g for _, _, g in triples])
    lines.append(fmt("aggregate", agg_s, agg_g))
    return lines


def write_stats_csv(path, named_rows):
    lines = stats_csv_lines(named_rows)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
