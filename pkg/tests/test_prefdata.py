import pytest
from hypothesis import given, settings, strategies as st

from sentalpha.labels import LABELS
from sentalpha.prefdata import (DEFAULT_PROMPT_TEMPLATE, LabeledSample,
                                PreferencePair, build_preference_pairs,
                                collapse_five_to_three, format_prompt,
                                read_pairs, split_train_test, write_pairs)


class TestCollapseFiveToThree:
    @pytest.mark.parametrize("raw,expected", [
        ("mildly_positive", "positive"),
        ("strongly_positive", "positive"),
        ("neutral", "neutral"),
        ("mildly_negative", "negative"),
        ("strongly_negative", "negative"),
    ])
    def test_mapping(self, raw, expected):
        assert collapse_five_to_three(raw) == expected

    def test_unknown_label_is_hard_error(self):
        with pytest.raises(ValueError, match="somewhat_positive"):
            collapse_five_to_three("somewhat_positive")


class TestFormatPrompt:
    def test_substitution(self):
        sample = LabeledSample(raw_text="Shares fell.", truth="negative")
        out = format_prompt(sample, "What is the sentiment? {text}")
        assert out == "What is the sentiment? Shares fell."

    def test_missing_placeholder(self):
        sample = LabeledSample(raw_text="x", truth="neutral")
        with pytest.raises(ValueError, match="placeholder"):
            format_prompt(sample, "no placeholder here")

    def test_empty_text_accepted(self):
        sample = LabeledSample(raw_text="", truth="neutral")
        assert format_prompt(sample, "Q: {text}") == "Q: "

    def test_default_template_has_placeholder(self):
        assert "{text}" in DEFAULT_PROMPT_TEMPLATE


class TestBuildPreferencePairs:
    def test_wrong_prediction_becomes_dispreferred(self):
        samples = [LabeledSample(raw_text="up", truth="positive")]
        (pair,) = build_preference_pairs(samples, ["negative"], seed=0)
        assert pair.preferred == "positive"
        assert pair.dispreferred == "negative"

    def test_correct_prediction_draws_uniformly_over_seeds(self):
        # Monte-Carlo over 10,000 seeds: each alternative near frequency 0.5.
        samples = [LabeledSample(raw_text="up", truth="positive")]
        counts = {"negative": 0, "neutral": 0}
        for seed in range(10_000):
            (pair,) = build_preference_pairs(samples, ["positive"], seed=seed)
            assert pair.dispreferred in counts
            counts[pair.dispreferred] += 1
        assert counts["negative"] / 10_000 == pytest.approx(0.5, abs=0.05)
        assert counts["neutral"] / 10_000 == pytest.approx(0.5, abs=0.05)

    def test_fixed_seed_is_deterministic(self):
        samples = [LabeledSample(raw_text="flat", truth="neutral")] * 5
        preds = ["neutral"] * 5
        first = build_preference_pairs(samples, preds, seed=123)
        second = build_preference_pairs(samples, preds, seed=123)
        assert first == second

    def test_length_mismatch_is_hard_error(self):
        with pytest.raises(ValueError, match="reference predictions"):
            build_preference_pairs(
                [LabeledSample(raw_text="x", truth="neutral")], [], seed=0)

    def test_prompt_uses_template(self):
        samples = [LabeledSample(raw_text="Stocks rose.", truth="positive")]
        (pair,) = build_preference_pairs(samples, ["negative"], seed=0,
                                         template="T: {text}")
        assert pair.prompt == "T: Stocks rose."

    @given(st.lists(st.tuples(st.sampled_from(LABELS), st.sampled_from(LABELS)),
                    max_size=30),
           st.integers(0, 2**32 - 1))
    @settings(max_examples=50)
    def test_dispreferred_never_equals_truth(self, truth_pred, seed):
        samples = [LabeledSample(raw_text=f"t{i}", truth=t)
                   for i, (t, _) in enumerate(truth_pred)]
        preds = [p for _, p in truth_pred]
        pairs = build_preference_pairs(samples, preds, seed=seed)
        assert len(pairs) == len(samples)
        for sample, pair in zip(samples, pairs):
            assert pair.preferred == sample.truth
            assert pair.dispreferred != sample.truth


class TestSplitTrainTest:
    def pairs(self, n):
        return [PreferencePair(prompt=f"p{i}", preferred="positive",
                               dispreferred="negative") for i in range(n)]

    def test_eighty_twenty(self):
        train, test = split_train_test(self.pairs(10), 0.8, seed=0)
        assert len(train) == 8
        assert len(test) == 2

    def test_floor_rule_single_element(self):
        train, test = split_train_test(self.pairs(1), 0.8, seed=0)
        assert train == []
        assert len(test) == 1

    def test_same_seed_same_partition(self):
        a = split_train_test(self.pairs(20), 0.8, seed=9)
        b = split_train_test(self.pairs(20), 0.8, seed=9)
        assert a == b

    def test_empty_input_gives_two_empty_lists(self):
        assert split_train_test([], 0.8, seed=0) == ([], [])

    def test_fraction_bounds(self):
        for bad in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                split_train_test(self.pairs(3), bad, seed=0)

    @given(st.integers(0, 60), st.floats(0.05, 0.95), st.integers(0, 2**32 - 1))
    @settings(max_examples=50)
    def test_partition_property(self, n, fraction, seed):
        items = list(range(n))
        train, test = split_train_test(items, fraction, seed)
        assert len(train) + len(test) == n
        assert sorted(train + test) == items


class TestPairValidationAndIo:
    def test_equal_labels_rejected(self):
        with pytest.raises(ValueError):
            PreferencePair(prompt="p", preferred="positive", dispreferred="positive")

    def test_jsonl_roundtrip(self, tmp_path):
        pairs = [PreferencePair(prompt="a b", preferred="positive",
                                dispreferred="neutral"),
                 PreferencePair(prompt="c", preferred="negative",
                                dispreferred="positive")]
        path = tmp_path / "pairs.jsonl"
        write_pairs(pairs, path)
        assert read_pairs(path) == pairs
