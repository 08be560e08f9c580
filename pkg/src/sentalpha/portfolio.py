"""Daily long-short allocation from ranked sentiment, with turnover and
linear transaction costs.

Each trading day: rank names by mean sentiment (descending, ties by ticker),
put the top floor(fraction * n) names long and the bottom the same count
short, equal-weighted and dollar-neutral. Costs follow the linear model
net = gross - (k bps) * turnover with turnover the total absolute
day-over-day weight change.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date as Date

import numpy as np

from .ingest import ReturnsTable
from .scoring import DailySentiment

DEFAULT_COST_LEVELS = (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)


@dataclass(frozen=True)
class BacktestConfig:
    """Allocation fractions, minimum book size, and the cost sweep (bps)."""

    long_fraction: float = 0.35
    short_fraction: float = 0.35
    cost_bps_levels: tuple[float, ...] = DEFAULT_COST_LEVELS
    min_names_per_side: int = 1

    def __post_init__(self) -> None:
        if self.long_fraction <= 0 or self.short_fraction <= 0:
            raise ValueError("allocation fractions must be positive")
        if self.long_fraction + self.short_fraction > 1.0:
            raise ValueError(
                f"long + short fractions exceed 1: "
                f"{self.long_fraction} + {self.short_fraction}"
            )
        if self.min_names_per_side < 1:
            raise ValueError("min_names_per_side must be >= 1")
        if any(k < 0 for k in self.cost_bps_levels):
            raise ValueError("cost levels must be non-negative")


@dataclass(frozen=True)
class AllocationDay:
    """Signed equal weights for one day's book.

    `long_names` keeps ranking order (best first); `short_names` keeps ranking
    order too, so its first element is the most marginal short and its last
    the strongest one.
    """

    date: Date
    long_names: tuple[str, ...]
    short_names: tuple[str, ...]

    def __post_init__(self) -> None:
        if set(self.long_names) & set(self.short_names):
            raise ValueError("long and short sets overlap")
        if len(self.long_names) != len(self.short_names):
            raise ValueError(
                f"sides must be equal-sized: {len(self.long_names)} long vs "
                f"{len(self.short_names)} short"
            )

    @property
    def long_set(self) -> frozenset[str]:
        return frozenset(self.long_names)

    @property
    def short_set(self) -> frozenset[str]:
        return frozenset(self.short_names)

    @property
    def weights(self) -> dict[str, float]:
        w: dict[str, float] = {}
        if self.long_names:
            w_long = 1.0 / len(self.long_names)
            for t in self.long_names:
                w[t] = w_long
        if self.short_names:
            w_short = -1.0 / len(self.short_names)
            for t in self.short_names:
                w[t] = w_short
        return w


@dataclass
class DailyPnl:
    """One traded day: side returns, gross spread, turnover, and net per cost level."""

    date: Date
    r_long: float
    r_short: float
    gross_return: float
    turnover: float = 0.0
    net_return_by_cost: dict[float, float] = field(default_factory=dict)


@dataclass(frozen=True)
class SkippedDay:
    date: Date
    reason: str


@dataclass
class BacktestResult:
    """Traded days plus the skip log and the allocations actually held."""

    days: list[DailyPnl]
    allocations: list[AllocationDay]
    skipped: list[SkippedDay]
    lag: int = 0


def rank_day(sentiments: list[DailySentiment]) -> list[str]:
    """Tickers of one date, descending by mean score; ties break by ticker."""
    if not sentiments:
        return []
    dates = {s.date for s in sentiments}
    if len(dates) > 1:
        raise ValueError(f"rank_day got multiple dates: {sorted(dates)}")
    seen: set[str] = set()
    for s in sentiments:
        if s.ticker in seen:
            raise ValueError(f"duplicate ticker {s.ticker!r} on {s.date}")
        seen.add(s.ticker)
    return [s.ticker for s in sorted(sentiments, key=lambda s: (-s.mean_score, s.ticker))]


def allocate(
    ranking: list[str], config: BacktestConfig, date: Date = Date.min
) -> AllocationDay | None:
    """Equal-weighted book from a ranking, or None when the day must be skipped.

    Side size is floor(long_fraction * n), clamped to at least
    `min_names_per_side` and at most floor(n / 2) so the sides never overlap.
    """
    if not ranking:
        raise ValueError("ranking must be nonempty")
    n = len(ranking)
    if n < 2 * config.min_names_per_side:
        return None
    n_side = int(config.long_fraction * n)
    n_side = max(n_side, config.min_names_per_side)
    n_side = min(n_side, n // 2)
    return AllocationDay(
        date=date,
        long_names=tuple(ranking[:n_side]),
        short_names=tuple(ranking[-n_side:]),
    )


def day_return(
    alloc: AllocationDay, returns: ReturnsTable
) -> tuple[DailyPnl, AllocationDay] | None:
    """Gross long/short returns for the day, dropping names with no market data.

    A dropped name forces the other side to trim its most marginal member so
    the sides stay equal-sized. Side means average over ticker-sorted members,
    making the result independent of ranking order within a side. Returns None
    when nothing tradeable remains.
    """
    long_names = [t for t in alloc.long_names if returns.get(alloc.date, t) is not None]
    short_names = [t for t in alloc.short_names if returns.get(alloc.date, t) is not None]
    # Trim to equal size: longs lose their lowest-ranked member (list tail),
    # shorts their most marginal member (list head).
    while len(long_names) > len(short_names):
        long_names.pop()
    while len(short_names) > len(long_names):
        short_names.pop(0)
    if not long_names:
        return None
    effective = AllocationDay(date=alloc.date, long_names=tuple(long_names),
                              short_names=tuple(short_names))
    r_long = float(np.mean([returns.get(alloc.date, t) for t in sorted(long_names)]))
    r_short = float(np.mean([returns.get(alloc.date, t) for t in sorted(short_names)]))
    pnl = DailyPnl(date=alloc.date, r_long=r_long, r_short=r_short,
                   gross_return=r_long - r_short)
    return pnl, effective


def turnover(prev: AllocationDay | None, curr: AllocationDay) -> float:
    """Total absolute weight change across the union of tickers.

    Absent tickers count at weight 0; with no previous book the full
    establishment is charged (2.0 when both sides trade).
    """
    w_curr = curr.weights
    w_prev = prev.weights if prev is not None else {}
    tickers = sorted(set(w_curr) | set(w_prev))
    return float(sum(abs(w_curr.get(t, 0.0) - w_prev.get(t, 0.0)) for t in tickers))


def apply_costs(gross: float, turnover_value: float, k_bps: float) -> float:
    """Linear cost model: net = gross - (k_bps / 10000) * turnover."""
    if k_bps < 0:
        raise ValueError(f"cost level must be non-negative, got {k_bps}")
    return gross - (k_bps / 10000.0) * turnover_value


def _map_to_trade_dates(
    daily_sentiment: list[DailySentiment], returns: ReturnsTable, lag: int,
    skipped: list[SkippedDay],
) -> dict[Date, list[DailySentiment]]:
    """Pool sentiment onto trading dates (next session for off-calendar dates).

    When several sentiment dates land on one trade date, their scores combine
    as an article-count-weighted mean, which equals re-averaging the pooled
    articles.
    """
    pooled: dict[tuple[Date, str], list[DailySentiment]] = {}
    for s in daily_sentiment:
        trade_date = returns.shift_trading_date(s.date, lag)
        if trade_date is None:
            skipped.append(SkippedDay(s.date, f"no trading date on or after {s.date} (+{lag})"))
            continue
        pooled.setdefault((trade_date, s.ticker), []).append(s)
    merged: dict[Date, list[DailySentiment]] = {}
    for (trade_date, ticker) in sorted(pooled):
        group = pooled[(trade_date, ticker)]
        count = sum(g.article_count for g in group)
        score = sum(g.mean_score * g.article_count for g in group) / count
        merged.setdefault(trade_date, []).append(DailySentiment(
            date=trade_date, ticker=ticker, mean_score=score, article_count=count))
    return merged


def run_backtest(
    daily_sentiment: list[DailySentiment],
    returns: ReturnsTable,
    config: BacktestConfig | None = None,
    lag: int = 0,
) -> BacktestResult:
    """Rank, allocate, and settle every trading date carrying sentiment.

    `lag` shifts trading that many sessions after the sentiment date
    (0 = same-day convention). Turnover chains over the allocations actually
    held; skipped days leave the previous book in place.
    """
    config = config or BacktestConfig()
    if lag < 0:
        raise ValueError(f"lag must be non-negative, got {lag}")
    skipped: list[SkippedDay] = []
    by_date = _map_to_trade_dates(daily_sentiment, returns, lag, skipped)

    days: list[DailyPnl] = []
    allocations: list[AllocationDay] = []
    prev_alloc: AllocationDay | None = None
    for trade_date in sorted(by_date):
        ranking = rank_day(by_date[trade_date])
        alloc = allocate(ranking, config, date=trade_date)
        if alloc is None:
            skipped.append(SkippedDay(trade_date, f"only {len(ranking)} ranked names"))
            continue
        settled = day_return(alloc, returns)
        if settled is None:
            skipped.append(SkippedDay(trade_date, "no allocated name had market data"))
            continue
        pnl, effective = settled
        pnl.turnover = turnover(prev_alloc, effective)
        pnl.net_return_by_cost = {
            k: apply_costs(pnl.gross_return, pnl.turnover, k)
            for k in config.cost_bps_levels
        }
        days.append(pnl)
        allocations.append(effective)
        prev_alloc = effective
    return BacktestResult(days=days, allocations=allocations, skipped=skipped, lag=lag)
