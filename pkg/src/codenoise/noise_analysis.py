"""Descriptive analysis of original-vs-validated label disagreement.

Notes are bucketed by how the original label set S_o relates to the
validated set S_v, and replacement pairs are broken down by the hierarchy
level at which the swapped codes diverge.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

from .corpus import Dataset, Note
from .errors import EmptyInput, EmptyIntersection, NoValidatedLabels
from .hierarchy import DifferenceLevel, IcdCode, difference_level


class DisagreementCategory(Enum):
    """How an original label set relates to the validated one."""

    MATCH = "match"
    REPLACEMENT = "replacement"
    MISSING = "missing"
    EXTRA = "extra"
    OTHER = "other"


def categorize(s_o: frozenset[IcdCode], s_v: frozenset[IcdCode]) -> DisagreementCategory:
    """Bucket one note's label pair.

    match: the sets are equal. replacement: exactly one code swapped for
    one other. missing: the original set is a proper subset. extra: the
    original set is a proper superset. other: everything else. Checked in
    that order, so replacement wins over missing/extra readings of the
    same pair.
    """
    if s_o == s_v:
        return DisagreementCategory.MATCH
    if len(s_o - s_v) == 1 and len(s_v - s_o) == 1:
        return DisagreementCategory.REPLACEMENT
    if s_o < s_v:
        return DisagreementCategory.MISSING
    if s_o > s_v:
        return DisagreementCategory.EXTRA
    return DisagreementCategory.OTHER


def _select(dataset: Dataset, split: str | None) -> list[Note]:
    notes = list(dataset.notes) if split is None else list(dataset.split_notes(split))
    if not notes:
        raise EmptyInput(f"no notes selected (split={split!r})")
    return notes


def disagreement_distribution(
    dataset: Dataset, split: str | None = None
) -> dict[DisagreementCategory, float]:
    """Fraction of selected notes per disagreement category.

    Every selected note must carry validated labels; NoValidatedLabels
    names the first offender otherwise. Ratios sum to 1.
    """
    notes = _select(dataset, split)
    counts = {cat: 0 for cat in DisagreementCategory}
    for note in notes:
        if note.validated is None:
            raise NoValidatedLabels(f"note {note.note_id!r} has no validated labels")
        counts[categorize(note.original, note.validated)] += 1
    total = len(notes)
    return {cat: counts[cat] / total for cat in DisagreementCategory}


def agreement_rate(
    a: Mapping[str, frozenset[IcdCode]], b: Mapping[str, frozenset[IcdCode]]
) -> float:
    """Exact-set agreement between two annotation maps over shared note ids."""
    shared = a.keys() & b.keys()
    if not shared:
        raise EmptyIntersection("annotation maps share no note ids")
    agree = sum(1 for nid in shared if a[nid] == b[nid])
    return agree / len(shared)


@dataclass(frozen=True)
class PrefixBreakdown:
    """Difference-level histogram over replacement pairs.

    ratios holds the fraction of pairs per level (all zero when no
    replacement pairs exist; the empty flag marks that case).
    r_chapter_fraction is the share of chapter-level pairs in which either
    code sits in chapter R.
    """

    ratios: Mapping[DifferenceLevel, float]
    r_chapter_fraction: float
    pair_count: int

    @property
    def empty(self) -> bool:
        return self.pair_count == 0


def replacement_pairs(notes: Iterable[Note]) -> list[tuple[IcdCode, IcdCode]]:
    """The (original-only, validated-only) code pair per replacement note."""
    pairs = []
    for note in notes:
        if note.validated is None:
            continue
        if categorize(note.original, note.validated) is DisagreementCategory.REPLACEMENT:
            (only_o,) = note.original - note.validated
            (only_v,) = note.validated - note.original
            pairs.append((only_o, only_v))
    return pairs


def replacement_prefix_breakdown(dataset: Dataset, split: str | None = None) -> PrefixBreakdown:
    """Break replacement pairs down by the hierarchy level where they diverge.

    Notes without validated labels are skipped. An empty replacement set
    yields an all-zero histogram flagged empty rather than an error.
    """
    notes = list(dataset.notes) if split is None else list(dataset.split_notes(split))
    pairs = replacement_pairs(notes)
    counts = {level: 0 for level in DifferenceLevel}
    chapter_pairs = 0
    chapter_with_r = 0
    for only_o, only_v in pairs:
        level = difference_level(only_o, only_v)
        counts[level] += 1
        if level is DifferenceLevel.CHAPTER:
            chapter_pairs += 1
            if only_o.chars[0] == "R" or only_v.chars[0] == "R":
                chapter_with_r += 1
    total = len(pairs)
    ratios = {level: (counts[level] / total if total else 0.0) for level in DifferenceLevel}
    r_fraction = chapter_with_r / chapter_pairs if chapter_pairs else 0.0
    return PrefixBreakdown(ratios=ratios, r_chapter_fraction=r_fraction, pair_count=total)
