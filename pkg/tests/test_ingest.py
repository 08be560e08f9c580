import math
from datetime import date

import pytest
from hypothesis import given, strategies as st

from sentalpha.ingest import (ArticleRecord, PriceRecord, build_returns_table,
                              ner_filter, parse_articles, parse_prices)


def write_lines(path, lines):
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return path


class TestParseArticles:
    def test_direct_field_mapping(self, tmp_path):
        path = write_lines(tmp_path / "a.jsonl", [
            '{"id": "x1", "date": "2017-03-02", "ticker": "AAPL", "ner_confidence": 0.99}'
        ])
        result = parse_articles(path)
        assert result.n_errors == 0
        (rec,) = result.records
        assert rec.id == "x1"
        assert rec.date == date(2017, 3, 2)
        assert rec.ticker == "AAPL"
        assert rec.ner_confidence == 0.99

    def test_confidence_out_of_range_rejected(self, tmp_path):
        path = write_lines(tmp_path / "a.jsonl", [
            '{"id": "x1", "date": "2017-03-02", "ticker": "AAPL", "ner_confidence": 1.2}'
        ])
        result = parse_articles(path)
        assert result.records == []
        assert result.n_errors == 1
        assert result.errors[0][0] == 1

    def test_empty_file(self, tmp_path):
        result = parse_articles(write_lines(tmp_path / "a.jsonl", []))
        assert result.records == []
        assert result.n_errors == 0

    @pytest.mark.parametrize("line", [
        '{"date": "2017-03-02", "ticker": "AAPL"}',          # missing id
        '{"id": "x", "date": "2017-13-02", "ticker": "A"}',  # invalid date
        '{"id": "x", "date": "2017-03-02", "ticker": ""}',   # empty ticker
        '{"id": "x", "date": "2017-03-02", "ticker": "A", "label": "bullish"}',
        '{"id": "x", "date": "2017-03-02", "ticker": "A", "logits": [1, 2]}',
        '{"id": "x", "date": "2017-03-02", "ticker": "A", "score": 1.5}',
        'not json at all',
    ])
    def test_malformed_lines_tallied_with_line_numbers(self, tmp_path, line):
        good = '{"id": "ok", "date": "2020-01-02", "ticker": "MSFT"}'
        result = parse_articles(write_lines(tmp_path / "a.jsonl", [good, line]))
        assert len(result.records) == 1
        assert result.n_errors == 1
        assert result.errors[0][0] == 2

    def test_roundtrip_identity(self, tmp_path):
        records = [
            ArticleRecord(id="a", date=date(2020, 1, 2), ticker="AAPL",
                          text="Shares fell.", label="negative",
                          ner_confidence=0.995, logits=(1.5, -0.25, 0.0),
                          score=-0.5),
            ArticleRecord(id="b", date=date(2021, 6, 30), ticker="MSFT"),
        ]
        path = write_lines(tmp_path / "a.jsonl", [r.to_json() for r in records])
        result = parse_articles(path)
        assert result.n_errors == 0
        assert result.records == records


class TestNerFilter:
    def art(self, conf):
        return ArticleRecord(id="x", date=date(2020, 1, 2), ticker="A",
                             ner_confidence=conf)

    def test_above_threshold_retained(self):
        assert len(ner_filter([self.art(0.99)], 0.98)) == 1

    def test_exactly_at_threshold_dropped(self):
        assert ner_filter([self.art(0.98)], 0.98) == []

    def test_three_case_enumeration(self):
        arts = [self.art(0.97), self.art(0.99), self.art(None)]
        assert len(ner_filter(arts, 0.98)) == 2

    def test_threshold_outside_unit_interval(self):
        with pytest.raises(ValueError):
            ner_filter([self.art(0.5)], 1.5)

    @given(st.lists(st.one_of(st.none(), st.floats(0, 1)), max_size=20),
           st.floats(0, 1))
    def test_idempotent(self, confs, threshold):
        arts = [self.art(c) for c in confs]
        once = ner_filter(arts, threshold)
        assert ner_filter(once, threshold) == once

    @given(st.lists(st.one_of(st.none(), st.floats(0, 1)), max_size=20),
           st.floats(0, 1), st.floats(0, 1))
    def test_monotone_in_threshold(self, confs, t1, t2):
        lo, hi = min(t1, t2), max(t1, t2)
        arts = [self.art(c) for c in confs]
        assert len(ner_filter(arts, hi)) <= len(ner_filter(arts, lo))


class TestReturnsTable:
    def test_zero_return_zero_log(self):
        table = build_returns_table([PriceRecord(date(2020, 1, 2), "A", 0.0)])
        assert table.log_returns[(date(2020, 1, 2), "A")] == 0.0

    def test_log_of_one_percent(self):
        table = build_returns_table([PriceRecord(date(2020, 1, 2), "A", 0.01)])
        assert table.log_returns[(date(2020, 1, 2), "A")] == pytest.approx(
            0.00995033, abs=1e-8)

    def test_duplicate_pair_is_hard_error(self):
        rows = [PriceRecord(date(2020, 1, 2), "MSFT", 0.01),
                PriceRecord(date(2020, 1, 2), "MSFT", 0.02)]
        with pytest.raises(ValueError, match="2020-01-02.*MSFT"):
            build_returns_table(rows)

    def test_return_at_minus_one_rejected(self):
        with pytest.raises(ValueError):
            PriceRecord(date(2020, 1, 2), "A", -1.0)

    def test_dates_sorted_tickers_collected(self):
        rows = [PriceRecord(date(2020, 1, 3), "B", 0.01),
                PriceRecord(date(2020, 1, 2), "A", -0.02)]
        table = build_returns_table(rows)
        assert table.dates == [date(2020, 1, 2), date(2020, 1, 3)]
        assert table.tickers == {"A", "B"}
        assert table.n_days == 2

    @given(st.lists(st.floats(-0.9, 10.0), min_size=1, max_size=50))
    def test_log_return_roundtrip(self, rets):
        rows = [PriceRecord(date(2020, 1, 2), f"T{i}", r)
                for i, r in enumerate(rets)]
        table = build_returns_table(rows)
        for key, r in table.returns.items():
            assert math.exp(table.log_returns[key]) - 1 == pytest.approx(r, abs=1e-12)

    def test_next_trading_date(self):
        table = build_returns_table([
            PriceRecord(date(2020, 1, 3), "A", 0.0),   # Friday
            PriceRecord(date(2020, 1, 6), "A", 0.0),   # Monday
        ])
        assert table.next_trading_date(date(2020, 1, 4)) == date(2020, 1, 6)
        assert table.next_trading_date(date(2020, 1, 3)) == date(2020, 1, 3)
        assert table.next_trading_date(date(2020, 1, 7)) is None
        assert table.shift_trading_date(date(2020, 1, 3), 1) == date(2020, 1, 6)


class TestParsePrices:
    def test_csv_roundtrip(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("date,ticker,simple_return\n2020-01-02,AAPL,0.013\n",
                        encoding="utf-8")
        (rec,) = parse_prices(path)
        assert rec == PriceRecord(date(2020, 1, 2), "AAPL", 0.013)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("ticker,date,ret\nAAPL,2020-01-02,0.01\n", encoding="utf-8")
        with pytest.raises(ValueError, match="header"):
            parse_prices(path)

    def test_malformed_row_is_hard_error(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("date,ticker,simple_return\n2020-01-02,AAPL,abc\n",
                        encoding="utf-8")
        with pytest.raises(ValueError, match=":2"):
            parse_prices(path)
