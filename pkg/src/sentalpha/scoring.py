"""Logit-to-score conversion, temperature calibration, and daily aggregation.

Class logits become calibrated probabilities via softmax at a temperature fit
by NLL minimization; the signed sentiment score of an article is
P(positive) - P(negative), so the neutral mass shrinks scores toward zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date as Date

import numpy as np

from .dpo import LogLinearPolicy, _log_softmax
from .ingest import ArticleRecord
from .labels import LABEL_INDEX
from .prefdata import DEFAULT_PROMPT_TEMPLATE, PreferencePair
from .textproc import tokenize

TEMPERATURE_BRACKET = (0.05, 20.0)
_GRID_POINTS = 64
_GOLDEN_TOL = 1e-4
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ClassProbs:
    """Normalized probabilities over (positive, negative, neutral)."""

    p: tuple[float, float, float]

    def __post_init__(self) -> None:
        if len(self.p) != 3:
            raise ValueError(f"need 3 probabilities, got {len(self.p)}")
        if any(not (0.0 <= v <= 1.0) for v in self.p):
            raise ValueError(f"probabilities outside [0, 1]: {self.p}")
        if abs(sum(self.p) - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {sum(self.p)}, not 1")

    @property
    def positive(self) -> float:
        return self.p[0]

    @property
    def negative(self) -> float:
        return self.p[1]

    @property
    def neutral(self) -> float:
        return self.p[2]


@dataclass(frozen=True)
class CalibrationResult:
    """Fitted temperature plus the NLL before/after and evaluation count."""

    temperature: float
    nll_before: float
    nll_after: float
    grid_evaluations: int


@dataclass(frozen=True)
class SentimentRecord:
    """Per-article dated, ticker-linked probabilities and signed score."""

    date: Date
    ticker: str
    score: float
    probs: ClassProbs

    def __post_init__(self) -> None:
        if abs(self.score - (self.probs.positive - self.probs.negative)) > 1e-12:
            raise ValueError(
                f"score {self.score} != P(pos) - P(neg) = "
                f"{self.probs.positive - self.probs.negative}"
            )

    @classmethod
    def from_probs(cls, date: Date, ticker: str, probs: ClassProbs) -> "SentimentRecord":
        return cls(date=date, ticker=ticker,
                   score=probs.positive - probs.negative, probs=probs)


@dataclass(frozen=True)
class DailySentiment:
    """Mean sentiment of one ticker on one day over its article count."""

    date: Date
    ticker: str
    mean_score: float
    article_count: int

    def __post_init__(self) -> None:
        if self.article_count < 1:
            raise ValueError("article_count must be >= 1")
        if not (-1.0 - 1e-12 <= self.mean_score <= 1.0 + 1e-12):
            raise ValueError(f"mean_score {self.mean_score} outside [-1, 1]")


def softmax_scores(logits, temperature: float = 1.0) -> ClassProbs:
    """Temperature-scaled softmax over the three class logits."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    if z.shape != (3,) or not np.isfinite(z).all():
        raise ValueError(f"logits must be 3 finite reals, got {logits!r}")
    p = np.exp(z - z.max())
    p /= p.sum()
    return ClassProbs(p=(float(p[0]), float(p[1]), float(p[2])))


def _mean_nll(logit_matrix: np.ndarray, truth_idx: np.ndarray, temperature: float) -> float:
    lp = _log_softmax(logit_matrix / temperature)
    return float(-np.mean(lp[np.arange(len(truth_idx)), truth_idx]))


def fit_temperature(
    logits_set, truths: list[str],
    bracket: tuple[float, float] = TEMPERATURE_BRACKET,
) -> CalibrationResult:
    """Fit the scaling temperature by NLL minimization over `bracket`.

    A 64-point log-spaced grid (plus T = 1 as an explicit candidate) brackets
    the optimum; golden-section refines it to |dT| < 1e-4. Ties and flat
    regions resolve to the candidate nearest 1.0.
    """
    logit_matrix = np.asarray(logits_set, dtype=np.float64)
    if logit_matrix.ndim != 2 or logit_matrix.shape[1] != 3 or len(logit_matrix) == 0:
        raise ValueError(f"logits_set must be nonempty n x 3, got shape {logit_matrix.shape}")
    if len(truths) != len(logit_matrix):
        raise ValueError(f"{len(logit_matrix)} logit rows but {len(truths)} truths")
    truth_idx = np.array([LABEL_INDEX[t] for t in truths])

    evaluations = 0

    def nll(t: float) -> float:
        nonlocal evaluations
        evaluations += 1
        return _mean_nll(logit_matrix, truth_idx, t)

    lo, hi = bracket
    if not (0.0 < lo < 1.0 < hi):
        raise ValueError(f"bracket must satisfy 0 < lo < 1 < hi, got {bracket}")
    grid = np.unique(np.concatenate([np.geomspace(lo, hi, _GRID_POINTS), [1.0]]))
    grid_nll = np.array([nll(t) for t in grid])
    best = int(np.argmin(grid_nll))

    # Golden-section refinement inside the bracket around the grid winner.
    a = grid[max(best - 1, 0)]
    b = grid[min(best + 1, len(grid) - 1)]
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = nll(c), nll(d)
    while (b - a) > _GOLDEN_TOL:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = nll(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = nll(d)
    refined = 0.5 * (a + b)
    refined_nll = nll(refined)

    # Candidate set: grid points plus the refined point; among candidates tied
    # with the minimum (to float-level slack), pick the one nearest T = 1.
    cand_t = np.concatenate([grid, [refined]])
    cand_nll = np.concatenate([grid_nll, [refined_nll]])
    floor_nll = float(np.min(cand_nll))
    slack = 1e-12 * (1.0 + abs(floor_nll))
    tied = cand_t[cand_nll <= floor_nll + slack]
    t_star = float(tied[np.argmin(np.abs(tied - 1.0))])

    nll_before = float(grid_nll[np.searchsorted(grid, 1.0)])
    nll_star = _mean_nll(logit_matrix, truth_idx, t_star)
    if nll_star > nll_before:  # tie slack must never make calibration worse
        t_star, nll_star = 1.0, nll_before
    return CalibrationResult(temperature=t_star, nll_before=nll_before,
                             nll_after=nll_star, grid_evaluations=evaluations)


def probs_to_score(probs: ClassProbs) -> float:
    """Signed sentiment score in [-1, 1]: P(positive) - P(negative)."""
    return probs.positive - probs.negative


def score_to_probs(score: float) -> ClassProbs:
    """Two-point distribution consistent with a bare signed score.

    Used when an upstream scorer (e.g. a lexicon) supplies only a scalar:
    P(pos) = (1 + s) / 2, P(neg) = (1 - s) / 2, P(neu) = 0.
    """
    if not (-1.0 <= score <= 1.0):
        raise ValueError(f"score {score} outside [-1, 1]")
    p_pos = (1.0 + score) / 2.0
    return ClassProbs(p=(p_pos, 1.0 - p_pos, 0.0))


def lexicon_score(text: str, lexicon: dict[str, int]) -> float:
    """Hit-count polarity: (pos - neg) / (pos + neg), 0.0 when nothing matches.

    The text runs through the shared tokenize pipeline; apply the same
    normalization to lexicon keys (see `normalize_lexicon`).
    """
    pos = neg = 0
    for tok in tokenize(text):
        polarity = lexicon.get(tok)
        if polarity is None:
            continue
        if polarity > 0:
            pos += 1
        elif polarity < 0:
            neg += 1
    total = pos + neg
    return (pos - neg) / total if total else 0.0


def normalize_lexicon(raw: dict[str, int]) -> dict[str, int]:
    """Re-key a word -> {+1, -1} lexicon through the shared token pipeline."""
    out: dict[str, int] = {}
    for word, polarity in raw.items():
        for tok in tokenize(word):
            out[tok] = 1 if polarity > 0 else -1
    return out


def aggregate_daily(records: list[SentimentRecord]) -> list[DailySentiment]:
    """Group article scores by (date, ticker) and average them."""
    groups: dict[tuple[Date, str], list[float]] = {}
    for rec in records:
        groups.setdefault((rec.date, rec.ticker), []).append(rec.score)
    out = []
    for (date, ticker) in sorted(groups):
        scores = groups[(date, ticker)]
        out.append(DailySentiment(
            date=date, ticker=ticker,
            mean_score=float(np.mean(scores)), article_count=len(scores)))
    return out


def score_articles(
    articles: list[ArticleRecord],
    policy: LogLinearPolicy | None = None,
    temperature: float = 1.0,
    template: str = DEFAULT_PROMPT_TEMPLATE,
    lexicon: dict[str, int] | None = None,
) -> tuple[list[SentimentRecord], list[tuple[str, str]]]:
    """Produce one SentimentRecord per scoreable article.

    Per-article source precedence: supplied `logits` -> policy on the
    instruction-formatted text -> lexicon on the raw text -> supplied bare
    `score`. Unscoreable articles are skipped and reported as (id, reason).
    """
    records: list[SentimentRecord] = []
    skipped: list[tuple[str, str]] = []
    for art in articles:
        if art.logits is not None:
            probs = softmax_scores(art.logits, temperature)
        elif policy is not None and art.text is not None:
            prompt = template.replace("{text}", art.text)
            probs = softmax_scores(policy.logits_for(prompt), temperature)
        elif lexicon is not None and art.text is not None:
            probs = score_to_probs(lexicon_score(art.text, lexicon))
        elif art.score is not None:
            probs = score_to_probs(art.score)
        else:
            skipped.append((art.id, "no logits, text, or score to score from"))
            continue
        records.append(SentimentRecord.from_probs(art.date, art.ticker, probs))
    return records, skipped


def calibration_data_from_pairs(
    policy: LogLinearPolicy, pairs: list[PreferencePair]
) -> tuple[np.ndarray, list[str]]:
    """Policy logits and ground-truth labels for each pair, for `fit_temperature`."""
    logits = np.stack([policy.logits_for(p.prompt) for p in pairs])
    truths = [p.preferred for p in pairs]
    return logits, truths
