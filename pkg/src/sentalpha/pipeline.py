"""End-to-end orchestration: ingest, pairs, training, calibration, scoring,
backtest, report — with a hash-chained manifest so any stage is attributable
to its exact inputs and re-runs with identical inputs are byte-identical.

Artifacts written under the run directory:
    articles_clean.jsonl  retained articles after the entity-confidence filter
    returns.csv           validated return panel (date,ticker,simple_return)
    ingest_log.json       parse/filter tallies
    pairs_train.jsonl     preference pairs, training split
    pairs_test.jsonl      preference pairs, held-out split
    policy.bin            preference-trained policy
    policy_sft.bin        cross-entropy baseline policy
    trace_dpo.csv         per-step training trace (preference)
    trace_sft.csv         per-step training trace (baseline)
    eval.json             weighted F1 of both policies on the test split
    calib.json            fitted softmax temperature
    sentiment.csv         per-article calibrated scores
    sentiment_lexicon.csv lexicon-baseline scores (only when a lexicon is given)
    pnl.csv               daily backtest PnL, one net column per cost level
    pnl.csv.meta.json     backtest convention (lag), config echo, skip log
    report.json           metric reports per cost level (+ optional benchmark)
    curves.csv            per-day additive cumulative return per cost level
    manifest.json         sha256 hash chain of everything above
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, replace
from datetime import date as Date
from pathlib import Path

from . import __version__
from .dpo import (DEFAULT_DIMENSION, DpoConfig, FeatureExtractor,
                  LogLinearPolicy, predict, train_dpo, train_sft)
from .fixture import read_lexicon
from .ingest import (DEFAULT_NER_THRESHOLD, build_returns_table, ner_filter,
                     parse_articles, parse_prices)
from .labels import LABELS
from .metrics import build_report, metric_report, weighted_f1
from .portfolio import BacktestConfig, BacktestResult, DailyPnl, run_backtest
from .prefdata import (DEFAULT_PROMPT_TEMPLATE, LabeledSample, PreferencePair,
                       build_preference_pairs, format_prompt, split_train_test,
                       write_pairs)
from .scoring import (TEMPERATURE_BRACKET, SentimentRecord, ClassProbs,
                      aggregate_daily, calibration_data_from_pairs,
                      fit_temperature, normalize_lexicon, score_articles)


class PipelineError(RuntimeError):
    """A stage failed; `stage` names it and the cause is chained."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunConfig:
    """Everything one reproducible run needs; the root seed feeds every
    stochastic component."""

    articles: Path
    prices: Path
    out_dir: Path
    lexicon: Path | None = None
    benchmark: Path | None = None
    template: str = DEFAULT_PROMPT_TEMPLATE
    seed: int = 0
    ner_threshold: float = DEFAULT_NER_THRESHOLD
    train_fraction: float = 0.8
    lag: int = 0
    dimension: int = DEFAULT_DIMENSION
    dpo: DpoConfig = field(default_factory=DpoConfig)
    backtest: BacktestConfig = field(default_factory=BacktestConfig)
    calibration_bracket: tuple[float, float] = TEMPERATURE_BRACKET
    risk_free: float = 0.0

    def __post_init__(self) -> None:
        self.articles = Path(self.articles)
        self.prices = Path(self.prices)
        self.out_dir = Path(self.out_dir)
        if self.lexicon is not None:
            self.lexicon = Path(self.lexicon)
        if self.benchmark is not None:
            self.benchmark = Path(self.benchmark)


@dataclass
class RunSummary:
    """Where the artifacts landed plus the per-stage object handles."""

    out_dir: Path
    artifacts: dict[str, Path]
    backtest: BacktestResult | None = None


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    """Incrementally written hash chain: artifact name -> sha256 + input hashes."""

    def __init__(self, out_dir: Path, seed: int):
        self.out_dir = out_dir
        self.data: dict = {
            "format": 1,
            "package_version": __version__,
            "seed": seed,
            "artifacts": {},
        }

    def record(self, name: str, stage: str, inputs: dict[str, str]) -> None:
        self.data["artifacts"][name] = {
            "stage": stage,
            "sha256": sha256_file(self.out_dir / name),
            "inputs": inputs,
        }
        self.flush()

    def input_hashes(self, *paths: str | Path) -> dict[str, str]:
        return {str(p): sha256_file(p) for p in paths}

    def artifact_hash(self, name: str) -> dict[str, str]:
        return {name: self.data["artifacts"][name]["sha256"]}

    def flush(self) -> None:
        write_json(self.out_dir / "manifest.json", self.data)


def write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def cost_column(k: float) -> str:
    return f"net_k{k:g}"


def write_returns_csv(path: Path, prices) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "ticker", "simple_return"])
        for rec in sorted(prices, key=lambda r: (r.date, r.ticker)):
            writer.writerow([rec.date.isoformat(), rec.ticker, repr(rec.simple_return)])


def write_sentiment_csv(path: Path, records: list[SentimentRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "ticker", "score", "p_pos", "p_neg", "p_neu"])
        for r in records:
            writer.writerow([r.date.isoformat(), r.ticker, repr(r.score),
                             repr(r.probs.positive), repr(r.probs.negative),
                             repr(r.probs.neutral)])


def read_sentiment_csv(path: str | Path) -> list[SentimentRecord]:
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["date", "ticker", "score", "p_pos", "p_neg", "p_neu"]:
            raise ValueError(f"{path}: unexpected sentiment header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                probs = ClassProbs(p=(float(row[3]), float(row[4]), float(row[5])))
                records.append(SentimentRecord(
                    date=Date.fromisoformat(row[0]), ticker=row[1],
                    score=float(row[2]), probs=probs))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return records


def write_pnl_csv(path: Path, days: list[DailyPnl], cost_levels) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "r_long", "r_short", "gross", "turnover"]
                        + [cost_column(k) for k in cost_levels])
        for d in days:
            writer.writerow(
                [d.date.isoformat(), repr(d.r_long), repr(d.r_short),
                 repr(d.gross_return), repr(d.turnover)]
                + [repr(d.net_return_by_cost[k]) for k in cost_levels])


def read_pnl_csv(path: str | Path) -> tuple[list[DailyPnl], list[float]]:
    """Rebuild DailyPnl rows and the cost levels encoded in the header."""
    days: list[DailyPnl] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        fixed = ["date", "r_long", "r_short", "gross", "turnover"]
        if header is None or header[: len(fixed)] != fixed:
            raise ValueError(f"{path}: unexpected pnl header {header}")
        levels = []
        for col in header[len(fixed):]:
            if not col.startswith("net_k"):
                raise ValueError(f"{path}: unexpected pnl column {col!r}")
            levels.append(float(col[len("net_k"):]))
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                nets = {k: float(v) for k, v in zip(levels, row[len(fixed):])}
                days.append(DailyPnl(
                    date=Date.fromisoformat(row[0]), r_long=float(row[1]),
                    r_short=float(row[2]), gross_return=float(row[3]),
                    turnover=float(row[4]), net_return_by_cost=nets))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return days, levels


def read_benchmark_csv(path: str | Path) -> dict[Date, float]:
    out: dict[Date, float] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["date", "simple_return"]:
            raise ValueError(f"{path}: expected header date,simple_return, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                out[Date.fromisoformat(row[0])] = float(row[1])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out


def write_curves_csv(path: Path, days: list[DailyPnl], cost_levels,
                     benchmark: dict[Date, float] | None = None) -> None:
    """Per-day additive cumulative return per cost level (plotting feed)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["date"] + [f"cum_{cost_column(k)[4:]}" for k in cost_levels]
        if benchmark is not None:
            header.append("cum_benchmark")
        writer.writerow(header)
        totals = {k: 0.0 for k in cost_levels}
        bench_total = 0.0
        for d in days:
            row = [d.date.isoformat()]
            for k in cost_levels:
                totals[k] += d.net_return_by_cost[k]
                row.append(repr(totals[k]))
            if benchmark is not None:
                bench_total += benchmark.get(d.date, 0.0)
                row.append(repr(bench_total))
            writer.writerow(row)


def build_report_json(
    days: list[DailyPnl], cost_levels, lag: int, risk_free: float = 0.0,
    benchmark: dict[Date, float] | None = None,
) -> dict:
    """Assemble the report payload: per-cost metrics, convention, benchmark row."""
    reports = build_report(days, cost_levels, risk_free)
    payload: dict = {
        "convention": {
            "lag": lag,
            "sentiment_timing": "same-day" if lag == 0 else f"lagged-{lag}",
            "cumulative_return": "additive",
        },
        "cost_levels_bps": [float(k) for k in cost_levels],
        "strategy": {cost_column(k)[4:]: reports[k].to_dict() for k in cost_levels},
    }
    if benchmark is not None:
        series = [benchmark[d.date] for d in days if d.date in benchmark]
        if len(series) >= 2:
            payload["benchmark"] = metric_report(series, risk_free).to_dict()
        else:
            payload["benchmark"] = {"error": "fewer than 2 benchmark days overlap the pnl"}
    return payload


def labeled_articles_to_samples(articles) -> list[LabeledSample]:
    return [LabeledSample(raw_text=a.text or "", truth=a.label)
            for a in articles if a.label is not None]


def evaluate_policies(
    policies: dict[str, LogLinearPolicy], pairs: list[PreferencePair]
) -> dict[str, dict]:
    """Weighted F1 of each policy on the same pair set (truth = preferred label)."""
    if not pairs:
        raise ValueError("evaluation pairs must be nonempty")
    truths = [p.preferred for p in pairs]
    out = {}
    for name, policy in policies.items():
        preds = [predict(policy, p.prompt)[0] for p in pairs]
        out[name] = weighted_f1(truths, preds).to_dict()
    return out


class _Stage:
    """Context manager that tags any failure with its stage name."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, exc) from exc
        return False


def run_pipeline(config: RunConfig) -> RunSummary:
    """Execute every stage in order; identical config + inputs give
    byte-identical artifacts. Any failure halts with the stage name."""
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)

    manifest = Manifest(out, config.seed)
    artifacts: dict[str, Path] = {}

    def emit(name: str, stage: str, inputs: dict[str, str]) -> None:
        artifacts[name] = out / name
        manifest.record(name, stage, inputs)

    dpo_cfg = replace(config.dpo, seed=config.seed)

    with _Stage("ingest"):
        for path in (config.articles, config.prices, config.lexicon,
                     config.benchmark):
            if path is not None and not Path(path).exists():
                raise FileNotFoundError(f"input file does not exist: {path}")
        parsed = parse_articles(config.articles)
        retained = ner_filter(parsed.records, config.ner_threshold)
        prices = parse_prices(config.prices)
        table = build_returns_table(prices)
        src_hashes = manifest.input_hashes(config.articles, config.prices)
        with open(out / "articles_clean.jsonl", "w", encoding="utf-8") as fh:
            for art in retained:
                fh.write(art.to_json() + "\n")
        emit("articles_clean.jsonl", "ingest", src_hashes)
        write_returns_csv(out / "returns.csv", prices)
        emit("returns.csv", "ingest", src_hashes)
        write_json(out / "ingest_log.json", {
            "article_lines_rejected": parsed.n_errors,
            "reject_detail": [[n, msg] for n, msg in parsed.errors],
            "articles_parsed": len(parsed.records),
            "articles_retained": len(retained),
            "ner_threshold": config.ner_threshold,
        })
        emit("ingest_log.json", "ingest", src_hashes)

    with _Stage("pairs"):
        samples = labeled_articles_to_samples(retained)
        if len(samples) < 2:
            raise ValueError(f"need at least 2 labeled articles, found {len(samples)}")
        extractor = FeatureExtractor(dimension=config.dimension)
        reference = LogLinearPolicy.zeros(extractor)
        ref_preds = [predict(reference, format_prompt(s, config.template))[0]
                     for s in samples]
        pairs = build_preference_pairs(samples, ref_preds, config.seed,
                                       config.template)
        train_pairs, test_pairs = split_train_test(pairs, config.train_fraction,
                                                   config.seed)
        if not train_pairs or not test_pairs:
            raise ValueError(
                f"split produced {len(train_pairs)} train / {len(test_pairs)} test pairs")
        clean_hash = manifest.artifact_hash("articles_clean.jsonl")
        write_pairs(train_pairs, out / "pairs_train.jsonl")
        emit("pairs_train.jsonl", "pairs", clean_hash)
        write_pairs(test_pairs, out / "pairs_test.jsonl")
        emit("pairs_test.jsonl", "pairs", clean_hash)

    with _Stage("train"):
        policy, trace = train_dpo(train_pairs, dpo_cfg, extractor)
        policy.save(out / "policy.bin")
        emit("policy.bin", "train", manifest.artifact_hash("pairs_train.jsonl"))
        trace.to_csv(out / "trace_dpo.csv")
        emit("trace_dpo.csv", "train", manifest.artifact_hash("pairs_train.jsonl"))

    with _Stage("train-sft"):
        policy_sft, trace_sft = train_sft(train_pairs, dpo_cfg, extractor)
        policy_sft.save(out / "policy_sft.bin")
        emit("policy_sft.bin", "train-sft", manifest.artifact_hash("pairs_train.jsonl"))
        trace_sft.to_csv(out / "trace_sft.csv")
        emit("trace_sft.csv", "train-sft", manifest.artifact_hash("pairs_train.jsonl"))

    with _Stage("evaluate"):
        scores = evaluate_policies({"dpo": policy, "sft": policy_sft}, test_pairs)
        write_json(out / "eval.json", scores)
        emit("eval.json", "evaluate", {
            **manifest.artifact_hash("policy.bin"),
            **manifest.artifact_hash("policy_sft.bin"),
            **manifest.artifact_hash("pairs_test.jsonl"),
        })

    with _Stage("calibrate"):
        logits, truths = calibration_data_from_pairs(policy, train_pairs)
        calib = fit_temperature(logits, truths, config.calibration_bracket)
        write_json(out / "calib.json", {
            "temperature": calib.temperature,
            "nll_before": calib.nll_before,
            "nll_after": calib.nll_after,
        })
        emit("calib.json", "calibrate", {
            **manifest.artifact_hash("policy.bin"),
            **manifest.artifact_hash("pairs_train.jsonl"),
        })

    with _Stage("score"):
        records, _skipped = score_articles(
            retained, policy=policy, temperature=calib.temperature,
            template=config.template)
        write_sentiment_csv(out / "sentiment.csv", records)
        emit("sentiment.csv", "score", {
            **manifest.artifact_hash("policy.bin"),
            **manifest.artifact_hash("calib.json"),
            **manifest.artifact_hash("articles_clean.jsonl"),
        })
        if config.lexicon is not None:
            lexicon = normalize_lexicon(read_lexicon(config.lexicon))
            lex_records, _ = score_articles(retained, lexicon=lexicon)
            write_sentiment_csv(out / "sentiment_lexicon.csv", lex_records)
            emit("sentiment_lexicon.csv", "score", {
                **manifest.input_hashes(config.lexicon),
                **manifest.artifact_hash("articles_clean.jsonl"),
            })

    with _Stage("backtest"):
        daily = aggregate_daily(records)
        result = run_backtest(daily, table, config.backtest, lag=config.lag)
        if len(result.days) < 2:
            raise ValueError(
                f"backtest produced {len(result.days)} traded days; need >= 2")
        write_pnl_csv(out / "pnl.csv", result.days, config.backtest.cost_bps_levels)
        emit("pnl.csv", "backtest", {
            **manifest.artifact_hash("sentiment.csv"),
            **manifest.artifact_hash("returns.csv"),
        })
        write_json(out / "pnl.csv.meta.json", {
            "lag": config.lag,
            "long_fraction": config.backtest.long_fraction,
            "short_fraction": config.backtest.short_fraction,
            "cost_levels_bps": list(config.backtest.cost_bps_levels),
            "skipped_days": [[s.date.isoformat(), s.reason] for s in result.skipped],
        })
        emit("pnl.csv.meta.json", "backtest", manifest.artifact_hash("pnl.csv"))

    with _Stage("report"):
        benchmark = (read_benchmark_csv(config.benchmark)
                     if config.benchmark is not None else None)
        payload = build_report_json(result.days, config.backtest.cost_bps_levels,
                                    config.lag, config.risk_free, benchmark)
        write_json(out / "report.json", payload)
        report_inputs = manifest.artifact_hash("pnl.csv")
        if config.benchmark is not None:
            report_inputs.update(manifest.input_hashes(config.benchmark))
        emit("report.json", "report", report_inputs)
        write_curves_csv(out / "curves.csv", result.days,
                         config.backtest.cost_bps_levels, benchmark)
        emit("curves.csv", "report", report_inputs)

    return RunSummary(out_dir=out, artifacts=artifacts, backtest=result)


def verify_run(out_dir: str | Path) -> list[str]:
    """Re-hash every artifact and input in the manifest; return found issues.

    Issues include missing or modified artifacts, modified external inputs,
    and files in the run directory the manifest does not account for (stale
    leftovers from a failed run).
    """
    out = Path(out_dir)
    manifest_path = out / "manifest.json"
    if not manifest_path.exists():
        return [f"{manifest_path}: missing manifest"]
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    artifacts: dict = manifest.get("artifacts", {})
    issues = []
    for name in sorted(artifacts):
        entry = artifacts[name]
        path = out / name
        if not path.exists():
            issues.append(f"{name}: artifact missing")
            continue
        if sha256_file(path) != entry["sha256"]:
            issues.append(f"{name}: artifact modified (hash mismatch)")
        for iname in sorted(entry.get("inputs", {})):
            ihash = entry["inputs"][iname]
            ipath = out / iname if iname in artifacts else Path(iname)
            if not ipath.exists():
                issues.append(f"{name}: input {iname} missing")
            elif sha256_file(ipath) != ihash:
                issues.append(f"{name}: input {iname} modified (hash mismatch)")
    for path in sorted(out.iterdir()):
        if path.is_file() and path.name not in artifacts and path.name != "manifest.json":
            issues.append(f"{path.name}: unrecorded file (stale?)")
    return issues
