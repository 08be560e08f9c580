"""Sentiment label vocabulary shared by every module.

The ordering below is fixed: every 3-vector of logits or probabilities in
this package is indexed [positive, negative, neutral]. Serialized artifacts
(policy files, sentiment CSVs) carry the same order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

POSITIVE = "positive"
NEGATIVE = "negative"
NEUTRAL = "neutral"

LABELS: tuple[str, str, str] = (POSITIVE, NEGATIVE, NEUTRAL)
LABEL_INDEX: dict[str, int] = {name: i for i, name in enumerate(LABELS)}
N_LABELS = len(LABELS)


@dataclass(frozen=True)
class LabelVocab:
    """Ordered three-class sentiment vocabulary."""

    labels: tuple[str, ...] = LABELS
    index: dict[str, int] = field(default_factory=lambda: dict(LABEL_INDEX))

    def __post_init__(self) -> None:
        if len(self.labels) != 3:
            raise ValueError(f"vocabulary must have exactly 3 labels, got {self.labels}")
        if self.index != {name: i for i, name in enumerate(self.labels)}:
            raise ValueError("index map inconsistent with label order")


DEFAULT_VOCAB = LabelVocab()


def check_label(label: str) -> str:
    """Return `label` unchanged if it is a known class, else raise ValueError."""
    if label not in LABEL_INDEX:
        raise ValueError(f"unknown sentiment label {label!r}; expected one of {LABELS}")
    return label
