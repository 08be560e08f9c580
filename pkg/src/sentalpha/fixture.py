"""Synthetic desk-scale fixtures: a dense daily return panel plus an article
stream whose labels align with realized returns at a configurable strength.

At alignment 1.0 an article's label is determined by where its ticker's
return ranks cross-sectionally on the labeling day (top third positive,
bottom third negative); at 0.0 labels are uniform noise. Article text is
drawn from label-specific word pools so a text classifier can actually learn
the labels, and a matching word lexicon is emitted for the baseline scorer.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date as Date, timedelta
from pathlib import Path

import numpy as np

from .ingest import ArticleRecord
from .labels import LABELS, NEGATIVE, NEUTRAL, POSITIVE
from .randomness import STREAM_FIXTURE, derive_rng

FIRST_TRADING_DAY = Date(2020, 1, 6)  # a Monday

WORD_POOLS = {
    POSITIVE: ("surge", "rally", "beat", "upgrade", "record", "profit",
               "strong", "growth", "bullish", "soar"),
    NEGATIVE: ("plunge", "miss", "downgrade", "loss", "weak", "lawsuit",
               "bearish", "slump", "shortfall", "warning"),
    NEUTRAL: ("steady", "unchanged", "inline", "mixed", "flat", "maintains",
              "reports", "update", "schedule", "filing"),
}

FILLER = ("shares", "quarter", "analysts", "market", "outlook", "results")


@dataclass(frozen=True)
class FixturePaths:
    articles: Path
    prices: Path
    benchmark: Path
    lexicon: Path


def business_days(start: Date, count: int) -> list[Date]:
    """`count` weekdays beginning at `start` (which must be a weekday)."""
    days = []
    d = start
    while len(days) < count:
        if d.weekday() < 5:
            days.append(d)
        d += timedelta(days=1)
    return days


def gen_fixture(
    out_dir: str | Path,
    seed: int = 7,
    n_tickers: int = 5,
    n_days: int = 30,
    n_articles: int = 50,
    rho: float = 1.0,
    horizon: int = 0,
) -> FixturePaths:
    """Write articles.jsonl, prices.csv, spx.csv, and lexicon.csv under `out_dir`.

    `rho` in [0, 1] is the probability that an article's label follows its
    ticker's return rank on the labeling day; `horizon` shifts the labeling
    day forward of the article date (0 aligns labels with same-day trading,
    1 with one-session-lagged trading).
    """
    if min(n_tickers, n_days, n_articles) <= 0:
        raise ValueError("fixture sizes must be positive")
    if not (0.0 <= rho <= 1.0):
        raise ValueError(f"rho must be in [0, 1], got {rho}")
    if horizon < 0:
        raise ValueError(f"horizon must be non-negative, got {horizon}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    tickers = [f"TK{i:02d}" for i in range(n_tickers)]
    dates = business_days(FIRST_TRADING_DAY, n_days)

    # Dense return panel with cross-sectional dispersion.
    rng_prices = derive_rng(seed, STREAM_FIXTURE, 1)
    panel = 0.01 * rng_prices.standard_normal((n_days, n_tickers))

    prices_path = out / "prices.csv"
    with open(prices_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "ticker", "simple_return"])
        for di, d in enumerate(dates):
            for ti, t in enumerate(tickers):
                writer.writerow([d.isoformat(), t, repr(float(panel[di, ti]))])

    benchmark_path = out / "spx.csv"
    with open(benchmark_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "simple_return"])
        for di, d in enumerate(dates):
            writer.writerow([d.isoformat(), repr(float(np.mean(panel[di])))])

    # Articles: label from the return rank on the labeling day, kept with
    # probability rho, else a uniform random label.
    rng_articles = derive_rng(seed, STREAM_FIXTURE, 2)
    articles_path = out / "articles.jsonl"
    with open(articles_path, "w", encoding="utf-8") as fh:
        for j in range(n_articles):
            di = int(rng_articles.integers(n_days))
            ti = int(rng_articles.integers(n_tickers))
            label_di = min(di + horizon, n_days - 1)
            rank = int(np.sum(panel[label_di] > panel[label_di, ti]))  # 0 = best
            third = max(n_tickers // 3, 1)
            signal = (POSITIVE if rank < third
                      else NEGATIVE if rank >= n_tickers - third
                      else NEUTRAL)
            label = signal if rng_articles.random() < rho else LABELS[int(rng_articles.integers(3))]
            pool = WORD_POOLS[label]
            words = [pool[int(rng_articles.integers(len(pool)))] for _ in range(4)]
            words.append(FILLER[int(rng_articles.integers(len(FILLER)))])
            confidence = 0.99 if rng_articles.random() < 0.9 else 0.97
            record = ArticleRecord(
                id=f"a{j:04d}", date=dates[di], ticker=tickers[ti],
                text=f"{tickers[ti]} {' '.join(words)}", label=label,
                ner_confidence=confidence)
            fh.write(record.to_json() + "\n")

    lexicon_path = out / "lexicon.csv"
    with open(lexicon_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["word", "polarity"])
        for word in WORD_POOLS[POSITIVE]:
            writer.writerow([word, "1"])
        for word in WORD_POOLS[NEGATIVE]:
            writer.writerow([word, "-1"])

    return FixturePaths(articles=articles_path, prices=prices_path,
                        benchmark=benchmark_path, lexicon=lexicon_path)


def read_lexicon(path: str | Path) -> dict[str, int]:
    """Read a `word,polarity` CSV into a raw {word: +1/-1} map."""
    lexicon: dict[str, int] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["word", "polarity"]:
            raise ValueError(f"{path}: expected header word,polarity, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 columns")
            polarity = int(row[1])
            if polarity not in (1, -1):
                raise ValueError(f"{path}:{lineno}: polarity must be 1 or -1")
            lexicon[row[0]] = polarity
    return lexicon
