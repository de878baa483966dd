"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import pytest

from codenoise.corpus import Dataset, Note, label_set
from codenoise.hierarchy import parse_code


def codes(*texts: str) -> frozenset:
    """Parse code strings into a label set."""
    return label_set(texts)


def make_note(
    note_id: str,
    text: str = "filler words",
    original: tuple[str, ...] = (),
    validated: tuple[str, ...] | None = None,
    split: str = "dev",
) -> Note:
    return Note(
        note_id=note_id,
        text=text,
        original=label_set(original),
        validated=None if validated is None else label_set(validated),
        split=split,
    )


def make_dataset(notes: list[Note]) -> Dataset:
    return Dataset(notes=tuple(notes), provenance={"kind": "loaded"})


@pytest.fixture
def m545():
    return parse_code("M54.5")
