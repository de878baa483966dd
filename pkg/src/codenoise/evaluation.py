"""Ranking metrics, oracle simulators, and evaluation reports.

Average precision follows the retrieval convention: instances are sorted
by score descending (ties broken stably by input order), and AP is the
mean of precision-at-r over the ranks r holding relevant instances. A
code with no relevant instances contributes AP 0 and is flagged through
its relevant count. MAP is the arithmetic mean of per-code APs.

Both label versions are always scored from the same score vector; only
the relevance marks change. The oracle simulators instead break score
ties randomly and average AP over many shuffles, which models a ranker
that knows the noisy labels exactly but nothing else.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Note, render_labels
from .errors import EmptyInput, InvalidConfig, LengthMismatch, ParseError
from .hierarchy import IcdCode

BUCKET_LABELS = (
    "delta>0.20",
    "0.20>=delta>0.05",
    "0.05>=delta>-0.05",
    "-0.05>=delta",
)


def _check_pair(scores, relevance) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    r = np.asarray(relevance, dtype=bool).reshape(-1)
    if s.size != r.size:
        raise LengthMismatch(f"{s.size} scores vs {r.size} relevance marks")
    if s.size == 0:
        raise EmptyInput("no instances to rank")
    return s, r


def average_precision(scores: Sequence[float], relevance: Sequence[bool]) -> float:
    """AP with deterministic, input-order-stable tie handling."""
    s, rel = _check_pair(scores, relevance)
    order = np.argsort(-s, kind="stable")
    return _ap_of_ordered(rel[order])


def _ap_of_ordered(rel_in_rank_order: np.ndarray) -> float:
    total = int(rel_in_rank_order.sum())
    if total == 0:
        return 0.0
    hits = np.cumsum(rel_in_rank_order)
    ranks = np.arange(1, rel_in_rank_order.size + 1)
    return float((hits[rel_in_rank_order] / ranks[rel_in_rank_order]).sum() / total)


def mean_average_precision(aps: Sequence[float]) -> float:
    """Arithmetic mean of per-code APs."""
    values = np.asarray(list(aps), dtype=np.float64)
    if values.size == 0:
        raise EmptyInput("no APs to average")
    return float(values.mean())


def score_change_buckets(deltas: Iterable[float]) -> dict[str, int]:
    """Count per-code AP changes into four fixed half-open buckets."""
    counts = dict.fromkeys(BUCKET_LABELS, 0)
    for delta in deltas:
        if delta > 0.20:
            counts[BUCKET_LABELS[0]] += 1
        elif delta > 0.05:
            counts[BUCKET_LABELS[1]] += 1
        elif delta > -0.05:
            counts[BUCKET_LABELS[2]] += 1
        else:
            counts[BUCKET_LABELS[3]] += 1
    return counts


# --- oracle simulators --------------------------------------------------------


def tie_shuffled_ap(
    scores: Sequence[float],
    relevance: Sequence[bool],
    repeats: int = 1000,
    seed: int = 0,
) -> float:
    """Mean AP over random reorderings within score ties.

    With all scores distinct this equals plain AP for any repeat count.
    """
    if repeats < 1:
        raise InvalidConfig(f"repeats must be at least 1, got {repeats}")
    s, rel = _check_pair(scores, relevance)
    if rel.sum() == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(repeats):
        tiebreak = rng.random(s.size)
        order = np.lexsort((tiebreak, -s))
        total += _ap_of_ordered(rel[order])
    return total / repeats


def oracle_scores(
    originals: Sequence[frozenset[IcdCode]], target: IcdCode
) -> np.ndarray:
    """Score 1 where the target sits in the original labels, else 0."""
    return np.array([1.0 if target in o else 0.0 for o in originals])


def oracle_ap(
    originals: Sequence[frozenset[IcdCode]],
    relevance: Sequence[bool],
    target: IcdCode,
    repeats: int = 1000,
    seed: int = 0,
) -> float:
    """Tie-shuffled AP of a ranker that copies the original labels."""
    return tie_shuffled_ap(oracle_scores(originals, target), relevance, repeats, seed)


def fixed_oracle_score(
    original: frozenset[IcdCode], target: IcdCode, related: frozenset[IcdCode]
) -> float:
    """Three-tier score acknowledging related diagnoses.

    1 when the target is present without any related diagnosis, 0.5 when
    both are present, 0 when the target is absent.
    """
    if target not in original:
        return 0.0
    if original & related:
        return 0.5
    return 1.0


def fixed_oracle_ap(
    originals: Sequence[frozenset[IcdCode]],
    relevance: Sequence[bool],
    target: IcdCode,
    related: Iterable[IcdCode],
    repeats: int = 1000,
    seed: int = 0,
) -> float:
    related = frozenset(related)
    scores = np.array([fixed_oracle_score(o, target, related) for o in originals])
    return tie_shuffled_ap(scores, relevance, repeats, seed)


# --- paired significance --------------------------------------------------------

_EQ_GUARD = 1e-12


def paired_significance(
    a: Sequence[float],
    b: Sequence[float],
    permutations: int = 100_000,
    seed: int = 0,
) -> float:
    """Two-sided paired sign-flip permutation p-value for mean(a - b).

    Enumerates all 2^n sign patterns when that count fits in the
    permutation budget; otherwise draws Monte-Carlo flips and reports
    (hits + 1) / (permutations + 1). Equality of |statistic| values is
    judged with a tiny absolute guard so the identity pattern always
    counts itself.
    """
    av = np.asarray(a, dtype=np.float64).reshape(-1)
    bv = np.asarray(b, dtype=np.float64).reshape(-1)
    if av.size != bv.size:
        raise LengthMismatch(f"{av.size} vs {bv.size} paired values")
    if av.size == 0:
        raise EmptyInput("no pairs")
    if permutations < 1:
        raise InvalidConfig("permutations must be at least 1")
    d = av - bv
    n = d.size
    observed = abs(float(d.sum()) / n)
    if n <= 30 and (1 << n) <= permutations:
        patterns = np.arange(1 << n, dtype=np.uint64)[:, None] >> np.arange(n, dtype=np.uint64)
        signs = np.where(patterns & 1, -1.0, 1.0)
        means = np.abs(signs @ d) / n
        hits = int(np.count_nonzero(means >= observed - _EQ_GUARD))
        return hits / float(1 << n)
    rng = np.random.default_rng(seed)
    hits = 0
    chunk = 4096
    remaining = permutations
    while remaining > 0:
        take = min(chunk, remaining)
        signs = rng.integers(0, 2, size=(take, n)).astype(np.float64) * 2.0 - 1.0
        means = np.abs(signs @ d) / n
        hits += int(np.count_nonzero(means >= observed - _EQ_GUARD))
        remaining -= take
    return (hits + 1) / (permutations + 1)


# --- top-k inspection -------------------------------------------------------------


@dataclass(frozen=True)
class TopKRow:
    """One row of a qualitative top-k table."""

    rank: int
    note_id: str
    correct: bool
    validated: tuple[str, ...]


def top_k_report(
    scores: Sequence[float],
    notes: Sequence[Note],
    target: IcdCode,
    k: int = 10,
) -> list[TopKRow]:
    """Highest-scoring notes with their validated labels and a correctness mark.

    Ties break stably by input order. Notes must carry validated labels.
    """
    if k < 1:
        raise InvalidConfig(f"k must be at least 1, got {k}")
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if s.size != len(notes):
        raise LengthMismatch(f"{s.size} scores vs {len(notes)} notes")
    if s.size == 0:
        raise EmptyInput("no notes to rank")
    order = np.argsort(-s, kind="stable")[:k]
    rows = []
    for r, i in enumerate(order, start=1):
        note = notes[int(i)]
        validated = note.validated if note.validated is not None else frozenset()
        rows.append(
            TopKRow(
                rank=r,
                note_id=note.note_id,
                correct=target in validated,
                validated=tuple(render_labels(validated)),
            )
        )
    return rows


# --- reports ------------------------------------------------------------------------


@dataclass(frozen=True)
class CodeEval:
    """Per-code AP under both label versions."""

    code: str
    ap_original: float
    ap_validated: float
    n_relevant_original: int
    n_relevant_validated: int

    @property
    def delta(self) -> float:
        return self.ap_original - self.ap_validated


@dataclass
class EvalReport:
    """One method's per-code APs plus aggregates."""

    method: str
    seed: int
    per_code: tuple[CodeEval, ...]

    @property
    def map_original(self) -> float:
        if not self.per_code:
            return math.nan
        return mean_average_precision([c.ap_original for c in self.per_code])

    @property
    def map_validated(self) -> float:
        if not self.per_code:
            return math.nan
        return mean_average_precision([c.ap_validated for c in self.per_code])

    @property
    def bucket_counts(self) -> dict[str, int]:
        return score_change_buckets(c.delta for c in self.per_code)

    def codes(self) -> list[str]:
        return [c.code for c in self.per_code]

    def to_json_dict(self) -> dict:
        map_o = self.map_original
        map_v = self.map_validated
        return {
            "method": self.method,
            "seed": self.seed,
            "map_original": None if math.isnan(map_o) else map_o,
            "map_validated": None if math.isnan(map_v) else map_v,
            "bucket_counts": self.bucket_counts,
            "per_code": [
                {
                    "code": c.code,
                    "ap_original": c.ap_original,
                    "ap_validated": c.ap_validated,
                    "delta": c.delta,
                    "n_relevant_original": c.n_relevant_original,
                    "n_relevant_validated": c.n_relevant_validated,
                }
                for c in self.per_code
            ],
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    def save_tsv(self, path: str | Path) -> None:
        lines = ["code\tAP_original\tAP_validated\tdelta\tbucket"]
        for c in self.per_code:
            label = next(lbl for lbl, cnt in score_change_buckets([c.delta]).items() if cnt)
            lines.append(
                f"{c.code}\t{c.ap_original:.6f}\t{c.ap_validated:.6f}\t{c.delta:+.6f}\t{label}"
            )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_report(path: str | Path) -> EvalReport:
    """Read back an EvalReport saved by save_json."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        per_code = tuple(
            CodeEval(
                code=row["code"],
                ap_original=float(row["ap_original"]),
                ap_validated=float(row["ap_validated"]),
                n_relevant_original=int(row["n_relevant_original"]),
                n_relevant_validated=int(row["n_relevant_validated"]),
            )
            for row in raw["per_code"]
        )
        return EvalReport(method=raw["method"], seed=int(raw["seed"]), per_code=per_code)
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad report file {path}: {exc}") from exc


def build_report(
    method: str,
    seed: int,
    scores_by_code: Mapping[str, np.ndarray],
    original_marks: Mapping[str, np.ndarray],
    validated_marks: Mapping[str, np.ndarray],
) -> EvalReport:
    """Assemble a report by scoring each code against both relevance sources."""
    per_code = []
    for code in sorted(scores_by_code):
        scores = scores_by_code[code]
        orig = np.asarray(original_marks[code], dtype=bool)
        val = np.asarray(validated_marks[code], dtype=bool)
        per_code.append(
            CodeEval(
                code=code,
                ap_original=average_precision(scores, orig),
                ap_validated=average_precision(scores, val),
                n_relevant_original=int(orig.sum()),
                n_relevant_validated=int(val.sum()),
            )
        )
    return EvalReport(method=method, seed=seed, per_code=tuple(per_code))
