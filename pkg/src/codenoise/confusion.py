"""Mining confusion codes from a ranker's false positives.

For a target code t, dev notes are ranked by the initial binary model's
probability. Codes that co-occur in the validated labels of confident
false positives (probability at least 0.5, t absent from the validated
set, rank within the top k) form the candidate set. Each candidate is
scored by the sum of reciprocal ranks of the top-k false positives whose
validated labels contain it; candidates scoring above the threshold
survive, and a hierarchy filter keeps only plausible neighbors: same
chapter as the target, or either code from a wastebasket chapter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Note
from .errors import InvalidConfig, LengthMismatch, ParseError, TargetInConfusionSet
from .features import Vocabulary, featurize_matrix
from .hierarchy import IcdCode, is_wastebasket, parse_code, same_chapter
from .models import LinearModel, predict_prob_batch

DEFAULT_K = 50
DEFAULT_SCORE_THRESHOLD = 0.1


@dataclass(frozen=True)
class RankedInstance:
    """One dev note in model-score order; rank starts at 1."""

    rank: int
    note_id: str
    prob: float
    validated: frozenset[IcdCode]


def rank_instances(
    note_ids: Sequence[str],
    probs: Sequence[float] | np.ndarray,
    validated: Sequence[frozenset[IcdCode]],
) -> list[RankedInstance]:
    """Order instances by probability descending, ties by note id ascending."""
    if not (len(note_ids) == len(probs) == len(validated)):
        raise LengthMismatch("note_ids, probs and validated must align")
    order = sorted(range(len(note_ids)), key=lambda i: (-float(probs[i]), note_ids[i]))
    return [
        RankedInstance(
            rank=r + 1,
            note_id=note_ids[i],
            prob=float(probs[i]),
            validated=validated[i],
        )
        for r, i in enumerate(order)
    ]


def rank_dev_instances(
    model: LinearModel, dev_notes: Sequence[Note], vocab: Vocabulary
) -> list[RankedInstance]:
    """Featurize dev notes, score them with the binary model, and rank them.

    Every dev note must carry validated labels.
    """
    for note in dev_notes:
        if note.validated is None:
            raise InvalidConfig(f"note {note.note_id!r} has no validated labels")
    X = featurize_matrix(dev_notes, vocab)
    probs = predict_prob_batch(model, X)
    return rank_instances(
        [n.note_id for n in dev_notes], probs, [n.validated for n in dev_notes]
    )


def _top_false_positives(
    ranked: Sequence[RankedInstance], target: IcdCode, k: int
) -> list[RankedInstance]:
    if k < 1:
        raise InvalidConfig(f"k must be at least 1, got {k}")
    return [
        inst
        for inst in ranked[:k]
        if inst.prob >= 0.5 and target not in inst.validated
    ]


def candidate_codes(
    ranked: Sequence[RankedInstance], target: IcdCode, k: int = DEFAULT_K
) -> frozenset[IcdCode]:
    """Codes found in the validated labels of confident top-k false positives."""
    out: set[IcdCode] = set()
    for inst in _top_false_positives(ranked, target, k):
        out.update(inst.validated)
    return frozenset(out)


def score_candidates(
    ranked: Sequence[RankedInstance],
    target: IcdCode,
    k: int = DEFAULT_K,
    threshold: float = DEFAULT_SCORE_THRESHOLD,
) -> dict[IcdCode, float]:
    """Reciprocal-rank score per candidate, keeping scores strictly above threshold.

    A candidate present only at rank 10 of the top k scores exactly 0.1 and
    is dropped at the default threshold.
    """
    candidates = candidate_codes(ranked, target, k)
    scores: dict[IcdCode, float] = {}
    for inst in ranked[: k if k < len(ranked) else len(ranked)]:
        if target in inst.validated:
            continue
        for code in inst.validated:
            if code in candidates:
                scores[code] = scores.get(code, 0.0) + 1.0 / inst.rank
    return {code: s for code, s in scores.items() if s > threshold}


def filter_by_hierarchy(target: IcdCode, scored: Mapping[IcdCode, float]) -> list[tuple[IcdCode, float]]:
    """Keep hierarchy-plausible candidates, ordered by score descending.

    A candidate passes when it shares the target's chapter or when either
    code comes from a wastebasket chapter. Ties order by normalized code.
    """
    kept = [
        (code, score)
        for code, score in scored.items()
        if same_chapter(code, target) or is_wastebasket(code) or is_wastebasket(target)
    ]
    kept.sort(key=lambda cs: (-cs[1], cs[0].chars))
    return kept


def select_confusion_codes(
    ranked: Sequence[RankedInstance],
    target: IcdCode,
    k: int = DEFAULT_K,
    threshold: float = DEFAULT_SCORE_THRESHOLD,
) -> list[tuple[IcdCode, float]]:
    """Full candidate pipeline: mine, score, threshold, hierarchy-filter, order."""
    return filter_by_hierarchy(target, score_candidates(ranked, target, k, threshold))


@dataclass
class ConfusionMap:
    """Ordered confusion codes with scores, per target code."""

    entries: dict[str, tuple[tuple[IcdCode, float], ...]]

    def codes_for(self, target: IcdCode | str) -> list[IcdCode]:
        key = target.render() if isinstance(target, IcdCode) else parse_code(target).render()
        return [code for code, _ in self.entries.get(key, ())]

    def __contains__(self, target: IcdCode | str) -> bool:
        key = target.render() if isinstance(target, IcdCode) else parse_code(target).render()
        return key in self.entries

    @classmethod
    def build(
        cls, selections: Mapping[IcdCode, Sequence[tuple[IcdCode, float]]]
    ) -> "ConfusionMap":
        entries: dict[str, tuple[tuple[IcdCode, float], ...]] = {}
        for target, pairs in selections.items():
            for code, _ in pairs:
                if code == target:
                    raise TargetInConfusionSet(
                        f"confusion set for {target.render()} contains the target"
                    )
            entries[target.render()] = tuple((code, float(score)) for code, score in pairs)
        return cls(entries=dict(sorted(entries.items())))

    def to_json_dict(self) -> dict:
        return {
            target: [{"code": code.render(), "score": score} for code, score in pairs]
            for target, pairs in self.entries.items()
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "ConfusionMap":
        path = Path(path)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ParseError(f"{path}: confusion map must be a JSON object")
        entries: dict[str, tuple[tuple[IcdCode, float], ...]] = {}
        for target, items in payload.items():
            pairs = []
            for item in items:
                if not isinstance(item, dict) or "code" not in item or "score" not in item:
                    raise ParseError(f"{path}: entry for {target!r} needs code and score")
                pairs.append((parse_code(item["code"]), float(item["score"])))
            entries[parse_code(target).render()] = tuple(pairs)
        return cls(entries=dict(sorted(entries.items())))
