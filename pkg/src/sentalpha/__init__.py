"""sentalpha: preference-optimized sentiment scoring and long-short
portfolio backtesting at desk scale.

The library turns labeled financial text into preference pairs, trains a
log-linear policy against a frozen reference with the direct-preference
objective, converts class logits into calibrated signed sentiment scores,
and backtests daily-rebalanced equal-weighted long-short books under linear
transaction costs with a full financial metric suite.
"""

__version__ = "0.1.0"

from .labels import LABELS, LabelVocab, DEFAULT_VOCAB
from .ingest import (ArticleRecord, ArticleParseResult, PriceRecord, ReturnsTable,
                     parse_articles, parse_prices, ner_filter, build_returns_table)
from .prefdata import (LabeledSample, PreferencePair, DEFAULT_PROMPT_TEMPLATE,
                       collapse_five_to_three, format_prompt,
                       build_preference_pairs, split_train_test)
from .dpo import (FeatureExtractor, LogLinearPolicy, DpoConfig, TrainTrace,
                  policy_logprob, predict, dpo_loss, dpo_grad, sft_loss,
                  train_dpo, train_sft)
from .scoring import (ClassProbs, CalibrationResult, SentimentRecord,
                      DailySentiment, softmax_scores, fit_temperature,
                      probs_to_score, score_to_probs, lexicon_score,
                      aggregate_daily, score_articles)
from .portfolio import (BacktestConfig, AllocationDay, DailyPnl, BacktestResult,
                        rank_day, allocate, day_return, turnover, apply_costs,
                        run_backtest)
from .metrics import (MetricReport, ClassificationReport, cumulative_return,
                      annualized_return, sharpe, sortino, max_drawdown, calmar,
                      weighted_f1, metric_report, build_report)
from .fixture import gen_fixture, read_lexicon
from .pipeline import RunConfig, RunSummary, PipelineError, run_pipeline, verify_run

__all__ = [
    "LABELS", "LabelVocab", "DEFAULT_VOCAB",
    "ArticleRecord", "ArticleParseResult", "PriceRecord", "ReturnsTable",
    "parse_articles", "parse_prices", "ner_filter", "build_returns_table",
    "LabeledSample", "PreferencePair", "DEFAULT_PROMPT_TEMPLATE",
    "collapse_five_to_three", "format_prompt", "build_preference_pairs",
    "split_train_test",
    "FeatureExtractor", "LogLinearPolicy", "DpoConfig", "TrainTrace",
    "policy_logprob", "predict", "dpo_loss", "dpo_grad", "sft_loss",
    "train_dpo", "train_sft",
    "ClassProbs", "CalibrationResult", "SentimentRecord", "DailySentiment",
    "softmax_scores", "fit_temperature", "probs_to_score", "score_to_probs",
    "lexicon_score", "aggregate_daily", "score_articles",
    "BacktestConfig", "AllocationDay", "DailyPnl", "BacktestResult",
    "rank_day", "allocate", "day_return", "turnover", "apply_costs",
    "run_backtest",
    "MetricReport", "ClassificationReport", "cumulative_return",
    "annualized_return", "sharpe", "sortino", "max_drawdown", "calmar",
    "weighted_f1", "metric_report", "build_report",
    "gen_fixture", "read_lexicon",
    "RunConfig", "RunSummary", "PipelineError", "run_pipeline", "verify_run",
]
