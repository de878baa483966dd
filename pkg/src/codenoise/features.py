"""Bag-of-n-gram featurization.

Tokenization lowercases and splits on runs of non-alphanumeric characters.
The vocabulary is built from train-split notes only and maps each kept
n-gram (tokens joined by single spaces) to a dense index; kept means its
total occurrence count across the train notes reaches min_count. Feature
vectors are raw occurrence counts of in-vocabulary n-grams.
"""

from __future__ import annotations

import json
import re
import warnings
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix

from .corpus import Note
from .errors import EmptyTrainSet, InvalidConfig, ParseError

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens in order of appearance."""
    return _TOKEN_RE.findall(text.lower())


def ngrams(tokens: Sequence[str], n_range: tuple[int, int]) -> list[str]:
    """All n-grams for n in the inclusive range, joined by single spaces."""
    lo, hi = n_range
    out = []
    for n in range(lo, hi + 1):
        if n == 1:
            out.extend(tokens)
        else:
            out.extend(" ".join(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
    return out


@dataclass(frozen=True)
class Vocabulary:
    """Immutable n-gram to index mapping plus its construction settings."""

    index: dict[str, int]
    n_range: tuple[int, int]
    min_count: int

    @property
    def size(self) -> int:
        return len(self.index)

    def save(self, path: str | Path) -> None:
        """Write as JSON lines: a meta record, then one (ngram, index) record per entry."""
        path = Path(path)
        with path.open("w", encoding="utf-8", newline="\n") as handle:
            meta = {
                "meta": {
                    "ngram_min": self.n_range[0],
                    "ngram_max": self.n_range[1],
                    "min_count": self.min_count,
                }
            }
            handle.write(json.dumps(meta, separators=(",", ":")) + "\n")
            for ngram in sorted(self.index, key=self.index.__getitem__):
                record = {"ngram": ngram, "index": self.index[ngram]}
                handle.write(json.dumps(record, ensure_ascii=False, separators=(",", ":")) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        path = Path(path)
        index: dict[str, int] = {}
        meta = None
        with path.open("r", encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
                if "meta" in record:
                    meta = record["meta"]
                elif "ngram" in record and "index" in record:
                    index[record["ngram"]] = int(record["index"])
                else:
                    raise ParseError(f"{path}:{lineno}: unrecognized vocabulary record")
        if meta is None:
            raise ParseError(f"{path}: missing vocabulary meta record")
        return cls(
            index=index,
            n_range=(int(meta["ngram_min"]), int(meta["ngram_max"])),
            min_count=int(meta["min_count"]),
        )


def build_vocab(
    train_notes: Iterable[Note | str],
    n_range: tuple[int, int] = (1, 2),
    min_count: int = 2,
) -> Vocabulary:
    """Build a vocabulary from train-split text only.

    Accepts notes or raw strings. Indices follow lexicographic n-gram
    order. An empty input raises EmptyTrainSet; a configuration that
    filters everything out yields a size-0 vocabulary with a warning.
    """
    lo, hi = n_range
    if lo < 1 or hi < lo:
        raise InvalidConfig(f"bad n-gram range {n_range}")
    if min_count < 1:
        raise InvalidConfig(f"min_count must be at least 1, got {min_count}")
    counts: Counter[str] = Counter()
    saw_any = False
    for item in train_notes:
        saw_any = True
        text = item.text if isinstance(item, Note) else item
        counts.update(ngrams(tokenize(text), n_range))
    if not saw_any:
        raise EmptyTrainSet("no train notes supplied")
    kept = sorted(g for g, c in counts.items() if c >= min_count)
    if not kept:
        warnings.warn("vocabulary is empty after frequency filtering", stacklevel=2)
    return Vocabulary(index={g: i for i, g in enumerate(kept)}, n_range=n_range, min_count=min_count)


@dataclass(frozen=True, eq=False)
class SparseVector:
    """Sorted sparse count vector.

    indices are strictly increasing positions below dim; values are finite
    non-negative counts aligned with indices.
    """

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self) -> None:
        if self.indices.shape != self.values.shape:
            raise InvalidConfig("indices and values must align")
        if self.indices.size:
            if int(self.indices[0]) < 0 or int(self.indices[-1]) >= self.dim:
                raise InvalidConfig("index out of range")
            if np.any(np.diff(self.indices) <= 0):
                raise InvalidConfig("indices must be strictly increasing")
            if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
                raise InvalidConfig("values must be finite and non-negative")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self) -> int:
        return hash((self.dim, self.indices.tobytes(), self.values.tobytes()))

    @property
    def nnz(self) -> int:
        return int(self.indices.size)


def featurize(item: Note | str, vocab: Vocabulary) -> SparseVector:
    """Count in-vocabulary n-grams of one note or raw string."""
    text = item.text if isinstance(item, Note) else item
    counts: Counter[int] = Counter()
    for gram in ngrams(tokenize(text), vocab.n_range):
        idx = vocab.index.get(gram)
        if idx is not None:
            counts[idx] += 1
    if not counts:
        return SparseVector(
            indices=np.empty(0, dtype=np.int32), values=np.empty(0, dtype=np.float64), dim=vocab.size
        )
    indices = np.array(sorted(counts), dtype=np.int32)
    values = np.array([counts[int(i)] for i in indices], dtype=np.float64)
    return SparseVector(indices=indices, values=values, dim=vocab.size)


def featurize_matrix(items: Sequence[Note | str], vocab: Vocabulary) -> csr_matrix:
    """Featurize many notes into one CSR matrix (rows follow input order)."""
    indptr = [0]
    col_indices: list[np.ndarray] = []
    data: list[np.ndarray] = []
    for item in items:
        vec = featurize(item, vocab)
        col_indices.append(vec.indices)
        data.append(vec.values)
        indptr.append(indptr[-1] + vec.nnz)
    if col_indices:
        cols = np.concatenate(col_indices)
        vals = np.concatenate(data)
    else:
        cols = np.empty(0, dtype=np.int32)
        vals = np.empty(0, dtype=np.float64)
    return csr_matrix(
        (vals, cols, np.array(indptr, dtype=np.int64)), shape=(len(items), vocab.size)
    )


def stack(vectors: Sequence[SparseVector]) -> csr_matrix:
    """Stack sparse vectors of equal dimension into a CSR matrix."""
    if not vectors:
        raise EmptyTrainSet("no vectors to stack")
    dim = vectors[0].dim
    for vec in vectors:
        if vec.dim != dim:
            raise InvalidConfig("vectors differ in dimension")
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    np.cumsum([v.nnz for v in vectors], out=indptr[1:])
    cols = np.concatenate([v.indices for v in vectors]) if vectors else np.empty(0, np.int32)
    vals = np.concatenate([v.values for v in vectors]) if vectors else np.empty(0, np.float64)
    return csr_matrix((vals, cols, indptr), shape=(len(vectors), dim))
