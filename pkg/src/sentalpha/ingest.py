"""Article and market-data ingestion.

Articles arrive as JSON lines (one object per line) with required keys `id`,
`date`, `ticker` and optional `text`, `label`, `ner_confidence`, `logits`
(3 reals, [positive, negative, neutral] order) and `score` (in [-1, 1]).
Prices arrive as CSV with header `date,ticker,simple_return`.
"""

from __future__ import annotations

import csv
import json
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from datetime import date as Date
from pathlib import Path

from .labels import LABEL_INDEX

DEFAULT_NER_THRESHOLD = 0.98


@dataclass
class ArticleRecord:
    """One dated, ticker-linked news article with optional model annotations."""

    id: str
    date: Date
    ticker: str
    text: str | None = None
    label: str | None = None
    ner_confidence: float | None = None
    logits: tuple[float, float, float] | None = None
    score: float | None = None

    def to_json(self) -> str:
        """Serialize to one JSON line; optional fields appear only when set."""
        obj: dict = {"id": self.id, "date": self.date.isoformat(), "ticker": self.ticker}
        if self.text is not None:
            obj["text"] = self.text
        if self.label is not None:
            obj["label"] = self.label
        if self.ner_confidence is not None:
            obj["ner_confidence"] = self.ner_confidence
        if self.logits is not None:
            obj["logits"] = list(self.logits)
        if self.score is not None:
            obj["score"] = self.score
        return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass
class ArticleParseResult:
    """Parsed records in file order plus a tally of rejected lines."""

    records: list[ArticleRecord]
    errors: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_errors(self) -> int:
        return len(self.errors)


def _parse_article_obj(obj: dict) -> ArticleRecord:
    for key in ("id", "date", "ticker"):
        if key not in obj:
            raise ValueError(f"missing required field {key!r}")
    art_id = str(obj["id"])
    ticker = str(obj["ticker"])
    if not ticker:
        raise ValueError("ticker is empty")
    try:
        day = Date.fromisoformat(str(obj["date"]))
    except ValueError as exc:
        raise ValueError(f"invalid date {obj['date']!r}: {exc}") from None

    label = obj.get("label")
    if label is not None and label not in LABEL_INDEX:
        raise ValueError(f"invalid label {label!r}")

    conf = obj.get("ner_confidence")
    if conf is not None:
        conf = float(conf)
        if not (0.0 <= conf <= 1.0) or math.isnan(conf):
            raise ValueError(f"ner_confidence {conf} outside [0, 1]")

    logits = obj.get("logits")
    if logits is not None:
        if len(logits) != 3 or not all(math.isfinite(float(v)) for v in logits):
            raise ValueError(f"logits must be 3 finite reals, got {logits!r}")
        logits = tuple(float(v) for v in logits)

    score = obj.get("score")
    if score is not None:
        score = float(score)
        if not (-1.0 <= score <= 1.0):
            raise ValueError(f"score {score} outside [-1, 1]")

    text = obj.get("text")
    if text is not None:
        text = str(text)

    return ArticleRecord(
        id=art_id, date=day, ticker=ticker, text=text, label=label,
        ner_confidence=conf, logits=logits, score=score,
    )


def parse_articles(path: str | Path) -> ArticleParseResult:
    """Parse a JSONL article file.

    Malformed lines are rejected and tallied with their 1-based line number;
    well-formed records are returned in file order.
    """
    records: list[ArticleRecord] = []
    errors: list[tuple[int, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("line is not a JSON object")
                records.append(_parse_article_obj(obj))
            except (ValueError, TypeError) as exc:
                errors.append((lineno, str(exc)))
    return ArticleParseResult(records=records, errors=errors)


def ner_filter(
    articles: list[ArticleRecord], threshold: float = DEFAULT_NER_THRESHOLD
) -> list[ArticleRecord]:
    """Keep articles whose entity-link confidence strictly exceeds `threshold`.

    Records with no confidence field are treated as pre-verified and retained.
    """
    if not (0.0 <= threshold <= 1.0):
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    return [
        a for a in articles
        if a.ner_confidence is None or a.ner_confidence > threshold
    ]


@dataclass(frozen=True)
class PriceRecord:
    """Fractional daily simple return of one ticker on one date."""

    date: Date
    ticker: str
    simple_return: float

    def __post_init__(self) -> None:
        if not self.ticker:
            raise ValueError("ticker is empty")
        if not self.simple_return > -1.0:
            raise ValueError(
                f"simple_return must exceed -1, got {self.simple_return} "
                f"({self.ticker} {self.date})"
            )


def parse_prices(path: str | Path) -> list[PriceRecord]:
    """Parse a `date,ticker,simple_return` CSV; any malformed row is a hard error."""
    records: list[PriceRecord] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["date", "ticker", "simple_return"]:
            raise ValueError(f"{path}: expected header date,ticker,simple_return, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            try:
                records.append(
                    PriceRecord(Date.fromisoformat(row[0]), row[1], float(row[2]))
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return records


@dataclass
class ReturnsTable:
    """Aligned trading calendar of per-ticker daily simple and log returns.

    `dates` is strictly increasing; a missing (date, ticker) cell means the
    name is not investable that day.
    """

    dates: list[Date]
    tickers: frozenset[str]
    returns: dict[tuple[Date, str], float]
    log_returns: dict[tuple[Date, str], float]

    @property
    def n_days(self) -> int:
        return len(self.dates)

    def get(self, date: Date, ticker: str) -> float | None:
        return self.returns.get((date, ticker))

    def next_trading_date(self, date: Date) -> Date | None:
        """First trading date >= `date`, or None when past the calendar end."""
        i = bisect_left(self.dates, date)
        return self.dates[i] if i < len(self.dates) else None

    def shift_trading_date(self, date: Date, lag: int) -> Date | None:
        """Trading date `lag` sessions after the first one >= `date`."""
        i = bisect_left(self.dates, date) + lag
        return self.dates[i] if 0 <= i < len(self.dates) else None


def build_returns_table(prices: list[PriceRecord]) -> ReturnsTable:
    """Assemble a ReturnsTable; duplicate (date, ticker) pairs are hard errors."""
    returns: dict[tuple[Date, str], float] = {}
    log_returns: dict[tuple[Date, str], float] = {}
    for rec in prices:
        key = (rec.date, rec.ticker)
        if key in returns:
            raise ValueError(f"duplicate price record for ({rec.date}, {rec.ticker})")
        returns[key] = rec.simple_return
        log_returns[key] = math.log1p(rec.simple_return)
    dates = sorted({d for d, _ in returns})
    tickers = frozenset(t for _, t in returns)
    return ReturnsTable(dates=dates, tickers=tickers, returns=returns, log_returns=log_returns)
