"""Diagnosis-code normalization and hierarchy comparisons.

Codes are alphanumeric, three to seven characters once the formatting dot
is removed ("M54.5" normalizes to "M545"). The first character names the
chapter, except that C and D form one merged chapter; the first three
characters name the category. All comparisons run on the normalized
character sequence, so the dot never counts as a position.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import IdenticalCodes, MalformedCode

_CODE_RE = re.compile(r"[A-Z][A-Z0-9]{2,6}\Z")

# R collects symptoms, signs and abnormal findings; S collects injuries and
# other external causes. Both act as wastebasket chapters for vague codes.
WASTEBASKET_CHAPTERS = frozenset({"R", "S"})

_MERGED_CHAPTER = "CD"


class DifferenceLevel(Enum):
    """Hierarchy level at which two distinct codes diverge."""

    CHAPTER = "chapter"
    CATEGORY = "category"
    SUBCATEGORY = "subcategory"
    DETAIL4 = "detail4"
    DETAIL56 = "detail56"


_LEVEL_BY_COMMON_CHARS = {
    0: DifferenceLevel.CHAPTER,
    1: DifferenceLevel.CATEGORY,
    2: DifferenceLevel.CATEGORY,
    3: DifferenceLevel.SUBCATEGORY,
    4: DifferenceLevel.DETAIL4,
    5: DifferenceLevel.DETAIL56,
    6: DifferenceLevel.DETAIL56,
}


@dataclass(frozen=True)
class IcdCode:
    """A normalized code. Equality and hashing ignore the raw spelling."""

    raw: str = field(compare=False)
    chars: str = ""
    chapter: str = ""
    category: str = ""

    def __post_init__(self) -> None:
        if not self.chars:
            raise MalformedCode("IcdCode requires normalized characters; use parse_code")

    def render(self) -> str:
        """Display form with the dot reinserted after the category."""
        if len(self.chars) > 3:
            return self.chars[:3] + "." + self.chars[3:]
        return self.chars

    def __str__(self) -> str:
        return self.render()


def chapter_of(first_char: str) -> str:
    """Chapter identifier for a leading character, merging C and D."""
    return _MERGED_CHAPTER if first_char in ("C", "D") else first_char


def parse_code(text: str) -> IcdCode:
    """Parse a raw code string into a normalized IcdCode.

    Uppercases, strips the formatting dot, and validates the shape: one
    letter, then two to six alphanumerics. Raises MalformedCode on empty
    input, embedded whitespace, a non-letter lead, bad characters, or a
    length outside 3..7.
    """
    if not text:
        raise MalformedCode("empty code string")
    if any(ch.isspace() for ch in text):
        raise MalformedCode(f"whitespace in code: {text!r}")
    chars = text.replace(".", "").upper()
    if not _CODE_RE.fullmatch(chars):
        raise MalformedCode(f"not a valid code: {text!r}")
    return IcdCode(raw=text, chars=chars, chapter=chapter_of(chars[0]), category=chars[:3])


def same_chapter(a: IcdCode, b: IcdCode) -> bool:
    """True when both codes sit in the same (merged) chapter."""
    return a.chapter == b.chapter


def is_wastebasket(code: IcdCode) -> bool:
    """True for codes from the R or S chapters."""
    return code.chars[0] in WASTEBASKET_CHAPTERS


def common_prefix_len(a: IcdCode, b: IcdCode) -> int:
    """Number of leading normalized characters the codes share.

    The first position compares merged chapters, so a C code and a D code
    share at least one position. Later positions compare literally.
    """
    if a.chapter != b.chapter:
        return 0
    n = 1
    for x, y in zip(a.chars[1:], b.chars[1:]):
        if x != y:
            break
        n += 1
    return n


def difference_level(a: IcdCode, b: IcdCode) -> DifferenceLevel:
    """Hierarchy level at which two distinct codes part ways.

    0 shared characters means a chapter-level difference, 1 or 2 a category
    difference, 3 a subcategory difference, 4 a fourth-position detail
    difference, and 5 or 6 a deeper detail difference. Raises IdenticalCodes
    when the normalized codes are equal.
    """
    if a == b:
        raise IdenticalCodes(f"identical codes: {a.render()}")
    return _LEVEL_BY_COMMON_CHARS[common_prefix_len(a, b)]
