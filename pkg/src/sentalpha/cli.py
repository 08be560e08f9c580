"""Command-line entry point.

Subcommands: ingest, build-pairs, train, train-sft, evaluate, calibrate,
score, backtest, report, gen-fixture, verify, and run (the full pipeline).
`run` accepts a flat `key = value` config file mirroring its flags; explicit
flags override file values. A fixed seed makes every command reproducible.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .dpo import (DEFAULT_DIMENSION, DpoConfig, FeatureExtractor,
                  LogLinearPolicy, predict, train_dpo, train_sft)
from .fixture import gen_fixture, read_lexicon
from .ingest import (DEFAULT_NER_THRESHOLD, build_returns_table, ner_filter,
                     parse_articles, parse_prices)
from .pipeline import (PipelineError, RunConfig, build_report_json,
                       evaluate_policies, read_benchmark_csv, read_pnl_csv,
                       read_sentiment_csv, run_pipeline, verify_run,
                       write_curves_csv, write_json, write_pnl_csv,
                       write_returns_csv, write_sentiment_csv)
from .portfolio import BacktestConfig, run_backtest
from .prefdata import (DEFAULT_PROMPT_TEMPLATE, build_preference_pairs,
                       format_prompt, read_pairs, read_samples,
                       split_train_test, write_pairs)
from .scoring import (aggregate_daily, calibration_data_from_pairs,
                      fit_temperature, normalize_lexicon, score_articles)

log = logging.getLogger("sentalpha")


def _read_template(path: str | None) -> str:
    if path is None:
        return DEFAULT_PROMPT_TEMPLATE
    return Path(path).read_text(encoding="utf-8").strip("\n")


def _parse_costs(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.split(",") if tok != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad cost list {text!r}") from None


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat `key = value` lines; `#` starts a comment; keys match flag names."""
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            values[key.strip().replace("_", "-")] = value.strip()
    return values


def cmd_ingest(args) -> int:
    parsed = parse_articles(args.articles)
    for lineno, message in parsed.errors:
        log.warning("articles line %d rejected: %s", lineno, message)
    retained = ner_filter(parsed.records, args.ner_threshold)
    prices = parse_prices(args.prices)
    build_returns_table(prices)  # validates duplicates and return bounds
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "articles_clean.jsonl", "w", encoding="utf-8") as fh:
        for art in retained:
            fh.write(art.to_json() + "\n")
    write_returns_csv(out / "returns.csv", prices)
    write_json(out / "ingest_log.json", {
        "article_lines_rejected": parsed.n_errors,
        "reject_detail": [[n, m] for n, m in parsed.errors],
        "articles_parsed": len(parsed.records),
        "articles_retained": len(retained),
        "ner_threshold": args.ner_threshold,
    })
    log.info("parsed %d articles (%d lines rejected); retained %d after NER "
             "filter at %.4g; %d price rows", len(parsed.records),
             parsed.n_errors, len(retained), args.ner_threshold, len(prices))
    return 0


def cmd_build_pairs(args) -> int:
    samples = read_samples(args.samples)
    template = _read_template(args.template_file)
    if args.ref_preds is not None:
        ref_preds = [ln.strip() for ln in
                     Path(args.ref_preds).read_text(encoding="utf-8").splitlines()
                     if ln.strip()]
    else:
        reference = LogLinearPolicy.zeros(FeatureExtractor(dimension=args.dimension))
        ref_preds = [predict(reference, format_prompt(s, template))[0]
                     for s in samples]
        log.info("no --ref-preds given; using uniform-reference predictions")
    pairs = build_preference_pairs(samples, ref_preds, args.seed, template)
    if args.test_out is not None:
        train_pairs, test_pairs = split_train_test(pairs, args.train_fraction,
                                                   args.seed)
        write_pairs(train_pairs, args.out)
        write_pairs(test_pairs, args.test_out)
        log.info("wrote %d train pairs to %s and %d test pairs to %s",
                 len(train_pairs), args.out, len(test_pairs), args.test_out)
    else:
        write_pairs(pairs, args.out)
        log.info("wrote %d pairs to %s", len(pairs), args.out)
    return 0


def _dpo_config(args) -> DpoConfig:
    return DpoConfig(
        beta=args.beta, learning_rate=args.learning_rate, epochs=args.epochs,
        batch_size=args.batch_size, weight_decay=args.weight_decay,
        warmup_ratio=args.warmup_ratio, seed=args.seed)


def cmd_train(args) -> int:
    pairs = read_pairs(args.pairs)
    trainer = train_sft if args.objective == "sft" else train_dpo
    policy, trace = trainer(pairs, _dpo_config(args),
                            FeatureExtractor(dimension=args.dimension))
    policy.save(args.out)
    if args.trace_out is not None:
        trace.to_csv(args.trace_out)
    log.info("%s training done: %d pairs, %d steps, final epoch loss %.6f",
             args.objective, len(pairs), len(trace.steps),
             trace.epoch_loss[-1] if trace.epoch_loss else float("nan"))
    return 0


def cmd_evaluate(args) -> int:
    pairs = read_pairs(args.pairs)
    policies = {"dpo": LogLinearPolicy.load(args.policy)}
    if args.sft_policy is not None:
        policies["sft"] = LogLinearPolicy.load(args.sft_policy)
    scores = evaluate_policies(policies, pairs)
    write_json(Path(args.out), scores)
    for name in scores:
        log.info("%s weighted F1 on %d pairs: %.4f", name, len(pairs),
                 scores[name]["weighted_f1"])
    return 0


def cmd_calibrate(args) -> int:
    policy = LogLinearPolicy.load(args.policy)
    pairs = read_pairs(args.eval)
    logits, truths = calibration_data_from_pairs(policy, pairs)
    calib = fit_temperature(logits, truths, (args.t_min, args.t_max))
    write_json(Path(args.out), {
        "temperature": calib.temperature,
        "nll_before": calib.nll_before,
        "nll_after": calib.nll_after,
    })
    log.info("fitted temperature %.6g (NLL %.6f -> %.6f, %d evaluations)",
             calib.temperature, calib.nll_before, calib.nll_after,
             calib.grid_evaluations)
    return 0


def cmd_score(args) -> int:
    parsed = parse_articles(args.articles)
    for lineno, message in parsed.errors:
        log.warning("articles line %d rejected: %s", lineno, message)
    policy = LogLinearPolicy.load(args.policy) if args.policy else None
    temperature = 1.0
    if args.calib is not None:
        with open(args.calib, encoding="utf-8") as fh:
            temperature = float(json.load(fh)["temperature"])
    lexicon = (normalize_lexicon(read_lexicon(args.lexicon))
               if args.lexicon else None)
    records, skipped = score_articles(
        parsed.records, policy=policy, temperature=temperature,
        template=_read_template(args.template_file), lexicon=lexicon)
    for art_id, reason in skipped:
        log.warning("article %s skipped: %s", art_id, reason)
    write_sentiment_csv(Path(args.out), records)
    log.info("scored %d articles (%d skipped) -> %s", len(records),
             len(skipped), args.out)
    return 0


def cmd_backtest(args) -> int:
    records = read_sentiment_csv(args.sentiment)
    daily = aggregate_daily(records)
    table = build_returns_table(parse_prices(args.prices))
    config = BacktestConfig(
        long_fraction=args.fraction, short_fraction=args.fraction,
        cost_bps_levels=args.costs, min_names_per_side=args.min_names)
    result = run_backtest(daily, table, config, lag=args.lag)
    write_pnl_csv(Path(args.out), result.days, config.cost_bps_levels)
    write_json(Path(str(args.out) + ".meta.json"), {
        "lag": args.lag,
        "long_fraction": config.long_fraction,
        "short_fraction": config.short_fraction,
        "cost_levels_bps": list(config.cost_bps_levels),
        "skipped_days": [[s.date.isoformat(), s.reason] for s in result.skipped],
    })
    log.info("backtest: %d traded days, %d skipped, lag %d -> %s",
             len(result.days), len(result.skipped), args.lag, args.out)
    return 0


def cmd_report(args) -> int:
    days, levels = read_pnl_csv(args.pnl)
    lag = args.lag
    meta_path = Path(str(args.pnl) + ".meta.json")
    if lag is None and meta_path.exists():
        with open(meta_path, encoding="utf-8") as fh:
            lag = int(json.load(fh)["lag"])
    if lag is None:
        lag = 0
    benchmark = read_benchmark_csv(args.benchmark) if args.benchmark else None
    payload = build_report_json(days, levels, lag, args.risk_free, benchmark)
    write_json(Path(args.out), payload)
    if args.curves is not None:
        write_curves_csv(Path(args.curves), days, levels, benchmark)
    for key, rep in payload["strategy"].items():
        log.info("%s: cumulative %.4f, sharpe %s", key, rep["cumulative_return"],
                 "degenerate" if rep["sharpe"] is None else f"{rep['sharpe']:.3f}")
    return 0


def cmd_gen_fixture(args) -> int:
    paths = gen_fixture(args.out, seed=args.seed, n_tickers=args.tickers,
                        n_days=args.days, n_articles=args.articles,
                        rho=args.rho, horizon=args.horizon)
    log.info("fixture written: %s, %s, %s, %s", paths.articles, paths.prices,
             paths.benchmark, paths.lexicon)
    return 0


def cmd_verify(args) -> int:
    issues = verify_run(args.out)
    if issues:
        for issue in issues:
            log.error("%s", issue)
        return 1
    log.info("manifest verified: all artifact and input hashes match")
    return 0


_RUN_KEYS = {
    # config-file key -> (RunConfig attribute, parser)
    "articles": ("articles", str),
    "prices": ("prices", str),
    "out": ("out_dir", str),
    "lexicon": ("lexicon", str),
    "benchmark": ("benchmark", str),
    "template-file": ("template_file", str),
    "seed": ("seed", int),
    "ner-threshold": ("ner_threshold", float),
    "train-fraction": ("train_fraction", float),
    "lag": ("lag", int),
    "dimension": ("dimension", int),
    "beta": ("beta", float),
    "learning-rate": ("learning_rate", float),
    "epochs": ("epochs", int),
    "batch-size": ("batch_size", int),
    "weight-decay": ("weight_decay", float),
    "warmup-ratio": ("warmup_ratio", float),
    "fraction": ("fraction", float),
    "costs": ("costs", _parse_costs),
    "min-names": ("min_names", int),
    "t-min": ("t_min", float),
    "t-max": ("t_max", float),
    "risk-free": ("risk_free", float),
}


def cmd_run(args) -> int:
    merged: dict = {}
    if args.config is not None:
        for key, raw in parse_config_file(args.config).items():
            if key not in _RUN_KEYS:
                raise SystemExit(f"{args.config}: unknown config key {key!r}")
            attr, parse = _RUN_KEYS[key]
            merged[attr] = parse(raw)
    for attr, _ in _RUN_KEYS.values():
        flag_value = getattr(args, attr, None)
        if flag_value is not None:
            merged[attr] = flag_value

    for required in ("articles", "prices", "out_dir"):
        if required not in merged:
            raise SystemExit(f"run needs {required!r} via flag or config file")

    seed = merged.get("seed", 0)
    dpo_cfg = DpoConfig(
        beta=merged.get("beta", 0.1),
        learning_rate=merged.get("learning_rate", 1e-3),
        epochs=merged.get("epochs", 5),
        batch_size=merged.get("batch_size", 32),
        weight_decay=merged.get("weight_decay", 0.01),
        warmup_ratio=merged.get("warmup_ratio", 0.1),
        seed=seed)
    fraction = merged.get("fraction", 0.35)
    backtest_cfg = BacktestConfig(
        long_fraction=fraction, short_fraction=fraction,
        cost_bps_levels=merged.get("costs", BacktestConfig().cost_bps_levels),
        min_names_per_side=merged.get("min_names", 1))
    config = RunConfig(
        articles=merged["articles"], prices=merged["prices"],
        out_dir=merged["out_dir"], lexicon=merged.get("lexicon"),
        benchmark=merged.get("benchmark"),
        template=_read_template(merged.get("template_file")),
        seed=seed, ner_threshold=merged.get("ner_threshold", DEFAULT_NER_THRESHOLD),
        train_fraction=merged.get("train_fraction", 0.8),
        lag=merged.get("lag", 0), dimension=merged.get("dimension", DEFAULT_DIMENSION),
        dpo=dpo_cfg, backtest=backtest_cfg,
        calibration_bracket=(merged.get("t_min", 0.05), merged.get("t_max", 20.0)),
        risk_free=merged.get("risk_free", 0.0))
    try:
        summary = run_pipeline(config)
    except PipelineError as exc:
        log.error("%s", exc)
        return 2
    log.info("pipeline complete: %d artifacts in %s", len(summary.artifacts),
             summary.out_dir)
    return 0


def _add_seed(p: argparse.ArgumentParser, default: int | None = 0) -> None:
    p.add_argument("--seed", type=int, default=default, help="root random seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sentalpha",
        description="Preference-optimized sentiment scoring and long-short backtesting")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse and filter articles and prices")
    p.add_argument("--articles", required=True)
    p.add_argument("--prices", required=True)
    p.add_argument("--ner-threshold", type=float, default=DEFAULT_NER_THRESHOLD)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-pairs", help="build preference pairs from labeled samples")
    p.add_argument("--samples", required=True, help="JSONL with text + label/raw_label")
    p.add_argument("--ref-preds", default=None,
                   help="one reference-predicted label per line (default: uniform reference)")
    _add_seed(p)
    p.add_argument("--template-file", default=None)
    p.add_argument("--dimension", type=int, default=DEFAULT_DIMENSION)
    p.add_argument("--out", required=True, help="pairs JSONL path")
    p.add_argument("--test-out", default=None,
                   help="when set, split and write the held-out pairs here")
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.set_defaults(func=cmd_build_pairs)

    for name, objective in (("train", "dpo"), ("train-sft", "sft")):
        p = sub.add_parser(name, help=f"{objective} training on preference pairs")
        p.add_argument("--pairs", required=True)
        p.add_argument("--beta", type=float, default=0.1)
        p.add_argument("--learning-rate", type=float, default=1e-3)
        p.add_argument("--epochs", type=int, default=5)
        p.add_argument("--batch-size", type=int, default=32)
        p.add_argument("--weight-decay", type=float, default=0.01)
        p.add_argument("--warmup-ratio", type=float, default=0.1)
        p.add_argument("--dimension", type=int, default=DEFAULT_DIMENSION)
        _add_seed(p)
        p.add_argument("--out", required=True, help="policy file path")
        p.add_argument("--trace-out", default=None, help="per-step trace CSV")
        p.set_defaults(func=cmd_train, objective=objective)

    p = sub.add_parser("evaluate", help="weighted F1 of trained policies on a pair set")
    p.add_argument("--policy", required=True)
    p.add_argument("--sft-policy", default=None)
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("calibrate", help="fit the softmax temperature by NLL")
    p.add_argument("--policy", required=True)
    p.add_argument("--eval", required=True, help="pairs JSONL used as labeled set")
    p.add_argument("--t-min", type=float, default=0.05)
    p.add_argument("--t-max", type=float, default=20.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("score", help="score articles into per-article sentiment")
    p.add_argument("--policy", default=None)
    p.add_argument("--calib", default=None)
    p.add_argument("--articles", required=True)
    p.add_argument("--template-file", default=None)
    p.add_argument("--lexicon", default=None, help="word,polarity CSV baseline")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("backtest", help="daily long-short backtest of sentiment")
    p.add_argument("--sentiment", required=True)
    p.add_argument("--prices", required=True)
    p.add_argument("--fraction", type=float, default=0.35)
    p.add_argument("--costs", type=_parse_costs, default=(0.0, 1.0, 2.0, 3.0, 4.0, 5.0))
    p.add_argument("--lag", type=int, default=0)
    p.add_argument("--min-names", type=int, default=1)
    p.add_argument("--out", required=True, help="pnl CSV path")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("report", help="metric report from a pnl CSV")
    p.add_argument("--pnl", required=True)
    p.add_argument("--benchmark", default=None, help="date,simple_return CSV")
    p.add_argument("--risk-free", type=float, default=0.0)
    p.add_argument("--lag", type=int, default=None,
                   help="override the convention recorded in the pnl sidecar")
    p.add_argument("--out", required=True)
    p.add_argument("--curves", default=None, help="cumulative-curve CSV path")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gen-fixture", help="write a synthetic article/price fixture")
    _add_seed(p, default=7)
    p.add_argument("--tickers", type=int, default=5)
    p.add_argument("--days", type=int, default=30)
    p.add_argument("--articles", type=int, default=50)
    p.add_argument("--rho", type=float, default=1.0,
                   help="label-return alignment strength in [0, 1]")
    p.add_argument("--horizon", type=int, default=0,
                   help="sessions between article date and the labeling day")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_fixture)

    p = sub.add_parser("verify", help="check a run directory's manifest hash chain")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("run", help="full pipeline: ingest through report")
    p.add_argument("--config", default=None, help="flat key = value file")
    p.add_argument("--articles", default=None)
    p.add_argument("--prices", default=None)
    p.add_argument("--out", dest="out_dir", default=None)
    p.add_argument("--lexicon", default=None)
    p.add_argument("--benchmark", default=None)
    p.add_argument("--template-file", dest="template_file", default=None)
    _add_seed(p, default=None)
    p.add_argument("--ner-threshold", dest="ner_threshold", type=float, default=None)
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=None)
    p.add_argument("--lag", type=int, default=None)
    p.add_argument("--dimension", type=int, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--weight-decay", dest="weight_decay", type=float, default=None)
    p.add_argument("--warmup-ratio", dest="warmup_ratio", type=float, default=None)
    p.add_argument("--fraction", type=float, default=None)
    p.add_argument("--costs", type=_parse_costs, default=None)
    p.add_argument("--min-names", dest="min_names", type=int, default=None)
    p.add_argument("--t-min", dest="t_min", type=float, default=None)
    p.add_argument("--t-max", dest="t_max", type=float, default=None)
    p.add_argument("--risk-free", dest="risk_free", type=float, default=None)
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
