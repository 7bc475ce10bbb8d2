"""Inter-annotator agreement: contingency matrices and Cohen's kappa.

Arithmetic is exact (``fractions.Fraction``) internally; reports round to
four decimals. kappa = (p_o - p_e) / (1 - p_e) with p_o the observed
agreement (trace / N) and p_e the chance agreement
(sum of row-total x column-total products / N^2).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import DegenerateAgreement, LengthMismatch, UnknownLabel
from .tagging import ANNOTATION_GROUPS, CATEGORY_GROUPS, OTHER_GROUP, TagSet


@dataclass(frozen=True)
class ContingencyMatrix:
    categories: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        m = len(self.categories)
        if len(self.counts) != m or any(len(row) != m for row in self.counts):
            raise ValueError("counts must be a square matrix over the categories")
        if any(cell < 0 for row in self.counts for cell in row):
            raise ValueError("counts must be non-negative")

    @property
    def n(self) -> int:
        return sum(sum(row) for row in self.counts)

    def row_totals(self) -> tuple[int, ...]:
        return tuple(sum(row) for row in self.counts)

    def column_totals(self) -> tuple[int, ...]:
        return tuple(sum(row[j] for row in self.counts) for j in range(len(self.categories)))


@dataclass(frozen=True)
class KappaResult:
    p_o: Fraction
    p_e: Fraction
    kappa: Fraction

    def rounded(self, digits: int = 4) -> dict[str, float]:
        return {
            "p_o": round(float(self.p_o), digits),
            "p_e": round(float(self.p_e), digits),
            "kappa": round(float(self.kappa), digits),
        }

    @property
    def interpretation(self) -> str:
        """Landis-Koch style agreement band (advisory text)."""
        k = float(self.kappa)
        if k < 0:
            return "poor (less than chance)"
        if k <= 0.20:
            return "slight"
        if k <= 0.40:
            return "fair"
        if k <= 0.60:
            return "moderate"
        if k <= 0.80:
            return "substantial"
        return "almost perfect"


def contingency(
    ann_a: Sequence[str], ann_b: Sequence[str], categories: Sequence[str]
) -> ContingencyMatrix:
    """counts[i][j] = number of terms annotator A put in category i and
    annotator B in category j."""
    if len(ann_a) != len(ann_b):
        raise LengthMismatch(f"annotator sequences differ: {len(ann_a)} vs {len(ann_b)}")
    index = {c: i for i, c in enumerate(categories)}
    counts = [[0] * len(categories) for _ in categories]
    for a, b in zip(ann_a, ann_b):
        if a not in index:
            raise UnknownLabel(f"annotator A used unknown label {a!r}")
        if b not in index:
            raise UnknownLabel(f"annotator B used unknown label {b!r}")
        counts[index[a]][index[b]] += 1
    return ContingencyMatrix(
        categories=tuple(categories), counts=tuple(tuple(row) for row in counts)
    )


def kappa(matrix: ContingencyMatrix) -> KappaResult:
    n = matrix.n
    if n <= 0:
        raise ValueError("contingency matrix is empty")
    trace = sum(matrix.counts[i][i] for i in range(len(matrix.categories)))
    p_o = Fraction(trace, n)
    p_e = Fraction(
        sum(r * c for r, c in zip(matrix.row_totals(), matrix.column_totals())), n * n
    )
    if p_e == 1:
        raise DegenerateAgreement(
            "all mass in a single category for both annotators; kappa undefined"
        )
    return KappaResult(p_o=p_o, p_e=p_e, kappa=(p_o - p_e) / (1 - p_e))


def group_sequence(text: str, tags: TagSet) -> list[str]:
    """Whitespace tokens of ``text`` labeled with their annotation group
    (Attacker/Attack/Victim), or Other when no span covers them."""
    labels = []
    offset = 0
    for token in text.split():
        start = text.index(token, offset)
        end = start + len(token)
        offset = end
        group = OTHER_GROUP
        for span in tags.spans:
            if span.start < end and start < span.end:
                group = CATEGORY_GROUPS[span.category]
                break
        labels.append(group)
    return labels


def kappa_from_annotations(
    pairs_a: Sequence[tuple[str, TagSet]], pairs_b: Sequence[tuple[str, TagSet]]
) -> tuple[ContingencyMatrix, KappaResult]:
    """Agreement between two annotation files sharing the same texts."""
    if len(pairs_a) != len(pairs_b):
        raise LengthMismatch(
            f"annotation files differ in length: {len(pairs_a)} vs {len(pairs_b)}"
        )
    seq_a: list[str] = []
    seq_b: list[str] = []
    for (text_a, tags_a), (text_b, tags_b) in zip(pairs_a, pairs_b):
        if text_a.split() != text_b.split():
            raise LengthMismatch("annotation files disagree on the underlying text")
        seq_a.extend(group_sequence(text_a, tags_a))
        seq_b.extend(group_sequence(text_b, tags_b))
    matrix = contingency(seq_a, seq_b, ANNOTATION_GROUPS)
    return matrix, kappa(matrix)
