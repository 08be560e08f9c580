"""Preference-pair dataset construction from labeled sentiment samples.

Each labeled text becomes one (prompt, preferred, dispreferred) triple: the
preferred label is the ground truth; the dispreferred label is the reference
model's prediction when it was wrong, otherwise a seeded uniform draw over the
two remaining labels.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .labels import LABELS, check_label
from .randomness import STREAM_PAIRS, STREAM_SPLIT, derive_rng

DEFAULT_PROMPT_TEMPLATE = (
    "Classify the sentiment of this financial text as positive, negative, "
    "or neutral. {text}"
)

SOURCES = ("FPB", "TFNS", "NWGI", "OTHER")

FIVE_CLASS_MAP = {
    "strongly_negative": "negative",
    "mildly_negative": "negative",
    "neutral": "neutral",
    "mildly_positive": "positive",
    "strongly_positive": "positive",
}


@dataclass(frozen=True)
class LabeledSample:
    """One ground-truth-labeled text."""

    raw_text: str
    truth: str
    source: str = "OTHER"

    def __post_init__(self) -> None:
        check_label(self.truth)
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}; expected one of {SOURCES}")


@dataclass(frozen=True)
class PreferencePair:
    """One training triple: instruction prompt, preferred and dispreferred label."""

    prompt: str
    preferred: str
    dispreferred: str

    def __post_init__(self) -> None:
        check_label(self.preferred)
        check_label(self.dispreferred)
        if self.preferred == self.dispreferred:
            raise ValueError("preferred and dispreferred labels must differ")

    def to_json(self) -> str:
        return json.dumps(
            {"prompt": self.prompt, "preferred": self.preferred,
             "dispreferred": self.dispreferred},
            sort_keys=True, separators=(",", ":"),
        )


def collapse_five_to_three(raw_label: str) -> str:
    """Fold the five-point label scale onto {positive, negative, neutral}."""
    try:
        return FIVE_CLASS_MAP[raw_label]
    except KeyError:
        raise ValueError(
            f"unknown five-class label {raw_label!r}; expected one of "
            f"{sorted(FIVE_CLASS_MAP)}"
        ) from None


def format_prompt(sample: LabeledSample, template: str = DEFAULT_PROMPT_TEMPLATE) -> str:
    """Substitute the sample text into `template` at its `{text}` placeholder."""
    if "{text}" not in template:
        raise ValueError("prompt template must contain the placeholder '{text}'")
    return template.replace("{text}", sample.raw_text)


def build_preference_pairs(
    samples: list[LabeledSample],
    ref_predictions: list[str],
    seed: int,
    template: str = DEFAULT_PROMPT_TEMPLATE,
) -> list[PreferencePair]:
    """Pair each sample's truth with a dispreferred label, preserving input order.

    A wrong reference prediction becomes the dispreferred label directly; a
    correct one triggers a uniform draw over the two other labels, seeded per
    sample index so parallel construction cannot change results.
    """
    if len(samples) != len(ref_predictions):
        raise ValueError(
            f"{len(samples)} samples but {len(ref_predictions)} reference predictions"
        )
    pairs: list[PreferencePair] = []
    for i, (sample, pred) in enumerate(zip(samples, ref_predictions)):
        check_label(pred)
        prompt = format_prompt(sample, template)
        if pred != sample.truth:
            dispreferred = pred
        else:
            others = [lab for lab in LABELS if lab != sample.truth]
            rng = derive_rng(seed, STREAM_PAIRS, i)
            dispreferred = others[int(rng.integers(2))]
        pairs.append(PreferencePair(prompt=prompt, preferred=sample.truth,
                                    dispreferred=dispreferred))
    return pairs


def split_train_test(pairs: list, train_fraction: float, seed: int) -> tuple[list, list]:
    """Seeded shuffle, then split at floor(train_fraction * n)."""
    if not (0.0 < train_fraction < 1.0):
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    rng = derive_rng(seed, STREAM_SPLIT)
    order = rng.permutation(len(pairs))
    shuffled = [pairs[i] for i in order]
    cut = math.floor(train_fraction * len(pairs))
    return shuffled[:cut], shuffled[cut:]


def write_pairs(pairs: list[PreferencePair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(pair.to_json() + "\n")


def read_pairs(path: str | Path) -> list[PreferencePair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                pairs.append(PreferencePair(
                    prompt=obj["prompt"], preferred=obj["preferred"],
                    dispreferred=obj["dispreferred"]))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad preference pair: {exc}") from None
    return pairs


def read_samples(path: str | Path) -> list[LabeledSample]:
    """Read labeled samples from JSONL with keys `text` + (`label` | `raw_label`).

    A `raw_label` on the five-point scale is collapsed to three classes;
    `source` defaults to OTHER.
    """
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                if "label" in obj:
                    truth = obj["label"]
                elif "raw_label" in obj:
                    truth = collapse_five_to_three(obj["raw_label"])
                else:
                    raise ValueError("needs 'label' or 'raw_label'")
                samples.append(LabeledSample(
                    raw_text=str(obj["text"]), truth=truth,
                    source=obj.get("source", "OTHER")))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad sample: {exc}") from None
    return samples
