"""Label transforms that fold confusion codes into the supervision signal.

For a target code t with confusion set C, the three-class scheme assigns
class 2 when any confusion code appears in a note's original labels
(taking precedence), class 1 when t appears without any confusion code,
and class 0 otherwise. The modified-label baseline collapses the same idea
to binary: positive only when t is present and no confusion code is.
"""

from __future__ import annotations

from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

from .errors import TargetInConfusionSet, WidthMismatch
from .hierarchy import IcdCode
from .models import LinearModel, predict_class_probs, predict_class_probs_batch


class ThreeClass(IntEnum):
    """Classes of the confusion-aware softmax scheme."""

    C0 = 0
    C1 = 1
    C2 = 2


def _check_target(target: IcdCode, confusion: Iterable[IcdCode]) -> frozenset[IcdCode]:
    confusion = frozenset(confusion)
    if target in confusion:
        raise TargetInConfusionSet(f"confusion set for {target.render()} contains the target")
    return confusion


def map_to_three_class(
    original: frozenset[IcdCode], target: IcdCode, confusion: Iterable[IcdCode]
) -> ThreeClass:
    """Class of one training instance. Class 2 wins when both t and a confusion code appear."""
    confusion = _check_target(target, confusion)
    if original & confusion:
        return ThreeClass.C2
    if target in original:
        return ThreeClass.C1
    return ThreeClass.C0


def three_class_array(
    originals: Sequence[frozenset[IcdCode]], target: IcdCode, confusion: Iterable[IcdCode]
) -> np.ndarray:
    """Vectorized map_to_three_class over many instances."""
    confusion = _check_target(target, confusion)
    out = np.zeros(len(originals), dtype=np.int64)
    for i, labels in enumerate(originals):
        if labels & confusion:
            out[i] = ThreeClass.C2
        elif target in labels:
            out[i] = ThreeClass.C1
    return out


def modified_label(
    original: frozenset[IcdCode], target: IcdCode, confusion: Iterable[IcdCode]
) -> bool:
    """Binary label with confusion-tainted positives flipped to negative.

    The confusion set is expected not to contain the target.
    """
    confusion = frozenset(confusion)
    return target in original and not (original & confusion)


def modified_label_array(
    originals: Sequence[frozenset[IcdCode]], target: IcdCode, confusion: Iterable[IcdCode]
) -> np.ndarray:
    confusion = frozenset(confusion)
    return np.array(
        [target in o and not (o & confusion) for o in originals], dtype=np.float64
    )


def proposed_score(model: LinearModel, x) -> float:
    """Ranking score of the three-class model: the class-1 softmax component.

    A zero-parameter model scores every instance 1/3.
    """
    if model.n_classes != 3:
        raise WidthMismatch(f"expected a 3-class model, got {model.n_classes} classes")
    return float(predict_class_probs(model, x)[1])


def proposed_score_batch(model: LinearModel, X) -> np.ndarray:
    if model.n_classes != 3:
        raise WidthMismatch(f"expected a 3-class model, got {model.n_classes} classes")
    return predict_class_probs_batch(model, X)[:, 1]


def mlp_br_labels(
    originals: Sequence[frozenset[IcdCode]],
    target: IcdCode,
    confusion_codes: Sequence[IcdCode],
) -> np.ndarray:
    """Per-output binary label matrix: target first, then each confusion code.

    Shape (n, 1 + len(confusion_codes)); column j > 0 marks the presence of
    confusion_codes[j - 1] in the original labels.
    """
    _check_target(target, confusion_codes)
    columns = [target, *confusion_codes]
    out = np.zeros((len(originals), len(columns)), dtype=np.float64)
    for i, labels in enumerate(originals):
        for j, code in enumerate(columns):
            if code in labels:
                out[i, j] = 1.0
    return out
