"""Bag-of-words text preprocessing shared by the feature extractor and the
lexicon scorer: lowercase, tokenize, stop-word removal, light suffix stemming.

The stemmer is intentionally crude (strip a few common suffixes); it stands in
for full lemmatization at desk scale and is applied identically to article
text and to lexicon entries so the two sides stay comparable.
"""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[a-z0-9']+")

STOP_WORDS = frozenset(
    """a an and are as at be but by for from had has have he her his i if in is
    it its not of on or she that the their they this to was we were will with
    you your""".split()
)

# Checked in order; a suffix is stripped only when the remaining stem keeps at
# least 3 characters.
_SUFFIXES = ("ing", "edly", "ies", "es", "ed", "ly", "s")
_MIN_STEM = 3


def stem(token: str) -> str:
    """Strip one common suffix from `token` (no-op for short tokens)."""
    for suffix in _SUFFIXES:
        if token.endswith(suffix) and len(token) - len(suffix) >= _MIN_STEM:
            return token[: -len(suffix)]
    return token


def tokenize(text: str) -> list[str]:
    """Lowercased, punctuation-stripped, stop-word-filtered, stemmed tokens."""
    raw = _TOKEN_RE.findall(text.lower())
    out = []
    for tok in raw:
        tok = tok.strip("'")
        if not tok or tok in STOP_WORDS:
            continue
        out.append(stem(tok))
    return out
