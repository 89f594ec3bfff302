"""Agreement statistics between automated scores and human labels.

Pearson, tie-aware Spearman, RMSE, and Fleiss' kappa, implemented directly
over python floats (math.fsum keeps the sums stable). A correlation over a
constant series, or kappa when every rating lands in one category, is
undefined; those cases raise UndefinedStatError instead of returning a
placeholder, because a silent zero in a report table looks like a finding.

RMSE assumes both series are already on a common scale; `to_unit` maps each
score family onto [0, 1] (four-point labels and scores via (v-1)/3, ten-point
holistic via (v-1)/9, percentages via v/100).
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

from .errors import DatasetError, UndefinedStatError

PairKey = tuple[str, str]


def _check_paired(x: Sequence[float], y: Sequence[float], minimum: int) -> None:
    if len(x) != len(y):
        raise ValueError(f"series lengths differ: {len(x)} vs {len(y)}")
    if len(x) < minimum:
        raise ValueError(f"need at least {minimum} points, got {len(x)}")


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample product-moment correlation."""
    _check_paired(x, y, minimum=2)
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    dx = [a - mx for a in x]
    dy = [b - my for b in y]
    sxx = math.fsum(a * a for a in dx)
    syy = math.fsum(b * b for b in dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedStatError("correlation is undefined for a constant series")
    r = math.fsum(a * b for a, b in zip(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks; tied values share the mean of the positions they span."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson over average-ranked series."""
    _check_paired(x, y, minimum=2)
    return pearson(average_ranks(x), average_ranks(y))


def rmse(x: Sequence[float], y: Sequence[float]) -> float:
    _check_paired(x, y, minimum=1)
    return math.sqrt(math.fsum((a - b) ** 2 for a, b in zip(x, y)) / len(x))


_SCALES = {
    "four_point": lambda v: (v - 1.0) / 3.0,
    "ten_point": lambda v: (v - 1.0) / 9.0,
    "percent": lambda v: v / 100.0,
    "unit": lambda v: v,
}


def to_unit(values: Sequence[float], scale: str) -> list[float]:
    """Map a score series onto [0, 1] by its declared scale."""
    try:
        f = _SCALES[scale]
    except KeyError:
        raise ValueError(f"unknown scale {scale!r}; expected one of {sorted(_SCALES)}") from None
    return [f(v) for v in values]


@dataclass(frozen=True)
class RatingMatrix:
    """Items x categories count matrix; counts[i][c] raters chose category c
    for item i. Row sums must agree (that shared sum is the rater count)."""

    counts: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if not self.counts:
            raise ValueError("rating matrix needs at least one item")
        width = len(self.counts[0])
        if width == 0:
            raise ValueError("rating matrix needs at least one category")
        sums = {sum(row) for row in self.counts}
        for row in self.counts:
            if len(row) != width:
                raise ValueError("ragged rating matrix")
            if any(c < 0 for c in row):
                raise ValueError("negative rating count")
        if len(sums) != 1:
            raise ValueError(f"rows must sum to one rater count, saw sums {sorted(sums)}")
        if self.n_raters < 2:
            raise ValueError("fleiss' kappa needs at least 2 raters")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "RatingMatrix":
        return cls(tuple(tuple(int(c) for c in row) for row in rows))

    @property
    def n_raters(self) -> int:
        return sum(self.counts[0])


def fleiss_kappa(matrix: RatingMatrix | Sequence[Sequence[int]]) -> float:
    """Chance-corrected multi-rater agreement, (P - Pe) / (1 - Pe)."""
    if not isinstance(matrix, RatingMatrix):
        matrix = RatingMatrix.from_rows(matrix)
    counts = matrix.counts
    n = matrix.n_raters
    n_items = len(counts)
    total = n_items * n
    p_cat = [math.fsum(row[c] for row in counts) / total for c in range(len(counts[0]))]
    p_bar = math.fsum(
        (math.fsum(c * c for c in row) - n) / (n * (n - 1)) for row in counts
    ) / n_items
    pe_bar = math.fsum(p * p for p in p_cat)
    if pe_bar >= 1.0:
        raise UndefinedStatError("kappa is undefined when all ratings share one category")
    return (p_bar - pe_bar) / (1.0 - pe_bar)


@dataclass(frozen=True)
class PairedSeries:
    """Human and automated values joined on (document_id, attribute_key).

    The mismatch counters record what the join dropped: keys present on one
    side only, and pairs the automated run skipped (both sides absent).
    """

    ids: tuple[PairKey, ...]
    human: tuple[float, ...]
    auto: tuple[float, ...]
    n_human_only: int = 0
    n_auto_only: int = 0
    n_skipped: int = 0

    def __post_init__(self) -> None:
        if not (len(self.ids) == len(self.human) == len(self.auto)):
            raise ValueError("ids, human, and auto must be aligned")

    def __len__(self) -> int:
        return len(self.ids)


def align(
    human_labels: Mapping[PairKey, Sequence[float]],
    auto_scores: Mapping[PairKey, float | None],
) -> PairedSeries:
    """Inner-join human labels with automated scores.

    Multi-annotator labels collapse to their mean. An automated value of None
    marks a skipped pair; those are excluded and counted. An empty join is an
    error, since every downstream statistic would be meaningless.
    """
    ids: list[PairKey] = []
    human: list[float] = []
    auto: list[float] = []
    n_skipped = 0
    shared = sorted(set(human_labels) & set(auto_scores))
    for key in shared:
        labels = human_labels[key]
        if not labels:
            raise ValueError(f"no labels for {key}")
        score = auto_scores[key]
        if score is None:
            n_skipped += 1
            continue
        ids.append(key)
        human.append(math.fsum(labels) / len(labels))
        auto.append(float(score))
    if not ids:
        raise DatasetError("alignment produced an empty join; do the sources share a run?")
    return PairedSeries(
        ids=tuple(ids),
        human=tuple(human),
        auto=tuple(auto),
        n_human_only=len(human_labels.keys() - auto_scores.keys()),
        n_auto_only=len(auto_scores.keys() - human_labels.keys()),
        n_skipped=n_skipped,
    )
