"""Portfolio performance metrics and the weighted-F1 classification report.

Conventions, fixed end-to-end:
  - returns are fractions, not percent;
  - cumulative return is the additive sum of daily net simple returns (it can
    drop below -100%); compounded wealth is reported alongside;
  - annualized return and Sharpe use daily log returns, Sortino and Calmar use
    daily simple returns, all annualized with 252 business days;
  - the risk-free rate defaults to 0;
  - degenerate denominators yield None plus an entry in `degenerate`, never a
    silent NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .labels import LABELS
from .portfolio import DailyPnl

TRADING_DAYS_PER_YEAR = 252


@dataclass
class MetricReport:
    """All performance metrics of one daily net return series."""

    days: int
    risk_free: float
    mean_simple: float
    cumulative_return: float
    compounded_return: float
    annualized_return: float | None
    annualized_vol: float | None
    sharpe: float | None
    downside_dev: float | None
    sortino: float | None
    max_drawdown: float
    calmar: float | None
    degenerate: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "days": self.days,
            "risk_free": self.risk_free,
            "mean_simple": self.mean_simple,
            "cumulative_return": self.cumulative_return,
            "compounded_return": self.compounded_return,
            "annualized_return": self.annualized_return,
            "annualized_vol": self.annualized_vol,
            "sharpe": self.sharpe,
            "downside_dev": self.downside_dev,
            "sortino": self.sortino,
            "max_drawdown": self.max_drawdown,
            "calmar": self.calmar,
            "degenerate": list(self.degenerate),
        }


@dataclass
class ClassificationReport:
    """Per-class precision/recall/F1 with supports, and the weighted F1."""

    per_class: dict[str, tuple[float, float, float, int]]
    weighted_f1: float

    def to_dict(self) -> dict:
        return {
            "per_class": {
                label: {"precision": p, "recall": r, "f1": f, "support": s}
                for label, (p, r, f, s) in self.per_class.items()
            },
            "weighted_f1": self.weighted_f1,
        }


def cumulative_return(daily: list[float]) -> float:
    """Additive cumulative return: the plain sum of daily returns."""
    if len(daily) == 0:
        raise ValueError("daily returns must be nonempty")
    return float(np.sum(daily))


def annualized_return(daily_log: list[float]) -> float:
    """Mean daily log return scaled by 252."""
    if len(daily_log) == 0:
        raise ValueError("daily log returns must be nonempty")
    return float(np.mean(daily_log) * TRADING_DAYS_PER_YEAR)


def sharpe(daily_log: list[float], risk_free: float = 0.0) -> float | None:
    """Annualized Sharpe on log returns with sample (N-1) volatility.

    None when the series has no variance.
    """
    r = np.asarray(daily_log, dtype=np.float64)
    if len(r) < 2:
        raise ValueError("sharpe needs at least 2 observations")
    vol = float(r.std(ddof=1) * math.sqrt(TRADING_DAYS_PER_YEAR))
    if vol == 0.0:
        return None
    return (annualized_return(daily_log) - risk_free) / vol


def downside_deviation(daily_simple: list[float]) -> float:
    """Root mean square of the negative daily returns (full-N, target 0)."""
    r = np.asarray(daily_simple, dtype=np.float64)
    return float(np.sqrt(np.mean(np.minimum(r, 0.0) ** 2)))


def sortino(daily_simple: list[float], risk_free: float = 0.0) -> float | None:
    """Annualized Sortino on simple returns; None without any negative day."""
    r = np.asarray(daily_simple, dtype=np.float64)
    if len(r) < 2:
        raise ValueError("sortino needs at least 2 observations")
    sd = downside_deviation(daily_simple)
    if sd == 0.0:
        return None
    return (float(r.mean()) - risk_free) * math.sqrt(TRADING_DAYS_PER_YEAR) / sd


def max_drawdown(daily_simple: list[float]) -> float:
    """Largest peak-to-trough fraction of the compounded equity curve (E0 = 1)."""
    if len(daily_simple) == 0:
        raise ValueError("daily returns must be nonempty")
    equity = np.cumprod(1.0 + np.asarray(daily_simple, dtype=np.float64))
    peak = np.maximum.accumulate(np.concatenate([[1.0], equity]))[1:]
    return float(np.max((peak - equity) / peak))


def calmar(daily_simple: list[float]) -> float | None:
    """Annually compounded mean simple return over max drawdown; None when MDD = 0."""
    r = np.asarray(daily_simple, dtype=np.float64)
    if len(r) == 0:
        raise ValueError("daily returns must be nonempty")
    mdd = max_drawdown(daily_simple)
    if mdd == 0.0:
        return None
    return ((1.0 + float(r.mean())) ** TRADING_DAYS_PER_YEAR - 1.0) / mdd


def weighted_f1(truths: list[str], preds: list[str]) -> ClassificationReport:
    """Support-weighted mean of per-class F1; zero denominators score 0.

    The confusion counts are integers, so the weighted mean is accumulated in
    exact rational arithmetic and converted to float once.
    """
    if len(truths) != len(preds):
        raise ValueError(f"{len(truths)} truths but {len(preds)} predictions")
    if not truths:
        raise ValueError("need at least one labeled example")
    per_class: dict[str, tuple[float, float, float, int]] = {}
    weighted = Fraction(0)
    for label in LABELS:
        tp = sum(1 for t, p in zip(truths, preds) if t == label and p == label)
        fp = sum(1 for t, p in zip(truths, preds) if t != label and p == label)
        fn = sum(1 for t, p in zip(truths, preds) if t == label and p != label)
        support = tp + fn
        precision = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
        recall = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else Fraction(0))
        per_class[label] = (float(precision), float(recall), float(f1), support)
        weighted += f1 * support
    return ClassificationReport(per_class=per_class,
                                weighted_f1=float(weighted / len(truths)))


def metric_report(daily_net_simple: list[float], risk_free: float = 0.0) -> MetricReport:
    """All metrics of one net daily simple-return series, with degeneracy flags."""
    r = np.asarray(daily_net_simple, dtype=np.float64)
    if len(r) < 2:
        raise ValueError("metric report needs at least 2 daily returns")
    if np.any(np.abs(r) >= 1.0):
        raise ValueError("daily returns must satisfy |r| < 1 (fractions, not percent)")
    degenerate: list[str] = []

    growth = 1.0 + r  # positive because |r| < 1
    daily_log = np.log(growth)

    ann_ret = annualized_return(list(daily_log))
    ann_vol = float(daily_log.std(ddof=1) * math.sqrt(TRADING_DAYS_PER_YEAR))
    sharpe_v = sharpe(list(daily_log), risk_free)
    if sharpe_v is None:
        degenerate.append("sharpe")

    sd = downside_deviation(list(r))
    sortino_v = sortino(list(r), risk_free)
    if sortino_v is None:
        degenerate.append("sortino")
    mdd = max_drawdown(list(r))
    calmar_v = calmar(list(r))
    if calmar_v is None:
        degenerate.append("calmar")

    return MetricReport(
        days=len(r),
        risk_free=risk_free,
        mean_simple=float(r.mean()),
        cumulative_return=cumulative_return(list(r)),
        compounded_return=float(np.prod(growth) - 1.0),
        annualized_return=ann_ret,
        annualized_vol=ann_vol,
        sharpe=sharpe_v,
        downside_dev=sd,
        sortino=sortino_v,
        max_drawdown=mdd,
        calmar=calmar_v,
        degenerate=tuple(degenerate),
    )


def build_report(
    pnl: list[DailyPnl], cost_levels: tuple[float, ...] | list[float],
    risk_free: float = 0.0,
) -> dict[float, MetricReport]:
    """Metric report of the net return series at each cost level."""
    if not pnl:
        raise ValueError("pnl must be nonempty")
    out: dict[float, MetricReport] = {}
    for k in cost_levels:
        series = [day.net_return_by_cost[k] for day in pnl]
        out[k] = metric_report(series, risk_free)
    return out
