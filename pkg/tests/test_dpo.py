import math

import numpy as np
import pytest

from sentalpha.dpo import (DpoConfig, FeatureExtractor, LogLinearPolicy,
                           dpo_grad, dpo_loss, policy_logprob, predict,
                           sft_loss, train_dpo, train_sft)
from sentalpha.labels import LABELS
from sentalpha.prefdata import LabeledSample, PreferencePair

LN2 = math.log(2.0)


def single_token_policy(logits_vector, token="tok", dimension=16):
    """Policy whose logits on the one-token prompt equal `logits_vector`."""
    ext = FeatureExtractor(dimension=dimension)
    weights = np.zeros((3, dimension))
    weights[:, ext.bucket(token)] = logits_vector
    return LogLinearPolicy(weights=weights, extractor=ext)


def random_pairs(rng, n, vocab=20):
    pairs = []
    for _ in range(n):
        iw = int(rng.integers(3))
        il = (iw + 1 + int(rng.integers(2))) % 3
        prompt = " ".join(f"tok{int(rng.integers(vocab))}" for _ in range(3))
        pairs.append(PreferencePair(prompt=prompt, preferred=LABELS[iw],
                                    dispreferred=LABELS[il]))
    return pairs


class TestPolicyLogprob:
    def test_uniform_policy(self):
        policy = LogLinearPolicy.zeros(FeatureExtractor(dimension=8))
        for label in LABELS:
            assert policy_logprob(policy, "any prompt", label) == pytest.approx(
                math.log(1 / 3), abs=1e-12)

    def test_scalar_softmax_value(self):
        policy = single_token_policy([2.0, 0.0, 0.0])
        assert policy_logprob(policy, "tok", "positive") == pytest.approx(
            -math.log(1 + 2 * math.exp(-2)), abs=1e-9)
        assert policy_logprob(policy, "tok", "positive") == pytest.approx(
            -0.23954, abs=1e-5)

    def test_normalization(self):
        policy = single_token_policy([1.7, -0.3, 0.4])
        total = sum(math.exp(policy_logprob(policy, "tok", lab)) for lab in LABELS)
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_nonfinite_weights_rejected(self):
        policy = single_token_policy([1.0, 0.0, 0.0])
        policy.weights[0, 0] = np.inf
        with pytest.raises(ValueError, match="non-finite"):
            policy_logprob(policy, "tok", "positive")


class TestDpoLoss:
    def test_policy_equals_reference_gives_ln2(self):
        rng = np.random.default_rng(0)
        ext = FeatureExtractor(dimension=32)
        policy = LogLinearPolicy(weights=rng.normal(size=(3, 32)), extractor=ext)
        loss = dpo_loss(policy, policy.copy(), random_pairs(rng, 10), beta=0.7)
        assert loss == pytest.approx(LN2, abs=1e-12)

    def test_hand_derived_scalar_case(self):
        # log pi(yw) = -0.5, log ref(yw) = -1.0, log pi(yl) = -2.0,
        # log ref(yl) = -1.5 ==> z = 0.1, loss = softplus(-0.1).
        def from_logprobs(lp_w, lp_l):
            third = math.log(1 - math.exp(lp_w) - math.exp(lp_l))
            return single_token_policy([lp_w, lp_l, third])

        policy = from_logprobs(-0.5, -2.0)
        reference = from_logprobs(-1.0, -1.5)
        pair = PreferencePair(prompt="tok", preferred="positive",
                              dispreferred="negative")
        loss = dpo_loss(policy, reference, [pair], beta=0.1)
        assert loss == pytest.approx(0.644397, abs=1e-6)

    def test_saturation_as_margin_grows(self):
        policy = single_token_policy([40.0, -40.0, 0.0])
        reference = single_token_policy([0.0, 0.0, 0.0])
        pair = PreferencePair(prompt="tok", preferred="positive",
                              dispreferred="negative")
        loss = dpo_loss(policy, reference, [pair], beta=1.0)
        assert 0.0 < loss < 1e-12

    def test_empty_batch_rejected(self):
        policy = LogLinearPolicy.zeros(FeatureExtractor(dimension=4))
        with pytest.raises(ValueError, match="nonempty"):
            dpo_loss(policy, policy.copy(), [], beta=0.1)

    def test_strictly_decreasing_in_margin(self):
        reference = single_token_policy([0.0, 0.0, 0.0])
        pair = PreferencePair(prompt="tok", preferred="positive",
                              dispreferred="negative")
        losses = []
        for gap in (0.0, 0.5, 1.0, 2.0, 4.0):
            policy = single_token_policy([gap, -gap, 0.0])
            losses.append(dpo_loss(policy, reference, [pair], beta=0.5))
        assert all(b < a for a, b in zip(losses, losses[1:]))
        assert all(v > 0 for v in losses)

    def test_beta_monotone_at_fixed_positive_margin(self):
        reference = single_token_policy([0.0, 0.0, 0.0])
        policy = single_token_policy([1.0, -1.0, 0.0])
        pair = PreferencePair(prompt="tok", preferred="positive",
                              dispreferred="negative")
        hi = dpo_loss(policy, reference, [pair], beta=0.5)
        lo = dpo_loss(policy, reference, [pair], beta=0.1)
        assert hi < lo

    def test_per_prompt_constant_shift_cancels(self):
        rng = np.random.default_rng(1)
        ext = FeatureExtractor(dimension=16)
        policy = LogLinearPolicy(weights=rng.normal(size=(3, 16)), extractor=ext)
        reference = LogLinearPolicy(weights=rng.normal(size=(3, 16)), extractor=ext)
        pairs = random_pairs(rng, 6, vocab=8)
        base = dpo_loss(policy, reference, pairs, beta=0.3)
        shift = rng.normal(size=16)  # adds the same constant to all 3 logits
        shifted_policy = LogLinearPolicy(weights=policy.weights + shift, extractor=ext)
        shifted_ref = LogLinearPolicy(weights=reference.weights + shift, extractor=ext)
        assert dpo_loss(shifted_policy, shifted_ref, pairs, beta=0.3) == pytest.approx(
            base, abs=1e-9)


class TestDpoGrad:
    def finite_difference(self, policy, reference, batch, beta, h=1e-6):
        grad = np.zeros_like(policy.weights)
        for i in range(grad.shape[0]):
            for j in range(grad.shape[1]):
                up = policy.copy()
                up.weights[i, j] += h
                down = policy.copy()
                down.weights[i, j] -= h
                grad[i, j] = (dpo_loss(up, reference, batch, beta)
                              - dpo_loss(down, reference, batch, beta)) / (2 * h)
        return grad

    def test_matches_central_differences(self):
        ext = FeatureExtractor(dimension=8)
        for trial in range(20):
            rng = np.random.default_rng(trial)
            policy = LogLinearPolicy(weights=rng.normal(size=(3, 8)), extractor=ext)
            reference = LogLinearPolicy(weights=rng.normal(size=(3, 8)), extractor=ext)
            batch = random_pairs(rng, 4, vocab=12)
            beta = float(rng.uniform(0.05, 1.0))
            analytic = dpo_grad(policy, reference, batch, beta)
            numeric = self.finite_difference(policy, reference, batch, beta)
            scale = max(np.abs(numeric).max(), 1e-12)
            assert np.abs(analytic - numeric).max() / scale < 1e-5

    def test_zero_features_zero_gradient(self):
        policy = LogLinearPolicy.zeros(FeatureExtractor(dimension=8))
        pair = PreferencePair(prompt="", preferred="positive",
                              dispreferred="negative")  # empty prompt: phi = 0
        grad = dpo_grad(policy, policy.copy(), [pair], beta=0.1)
        assert np.all(grad == 0.0)

    def test_duplicated_batch_mean_invariance(self):
        rng = np.random.default_rng(5)
        ext = FeatureExtractor(dimension=8)
        policy = LogLinearPolicy(weights=rng.normal(size=(3, 8)), extractor=ext)
        reference = LogLinearPolicy(weights=rng.normal(size=(3, 8)), extractor=ext)
        pair = random_pairs(rng, 1)[0]
        one = dpo_grad(policy, reference, [pair], beta=0.2)
        many = dpo_grad(policy, reference, [pair] * 7, beta=0.2)
        assert np.allclose(one, many, atol=1e-12)


class TestTrainDpo:
    def separable_pairs(self, n=200, seed=42):
        pos_words = ["surge", "gain", "rally", "beat"]
        neg_words = ["plunge", "miss", "slump", "warning"]
        rng = np.random.default_rng(seed)
        pairs = []
        for i in range(n):
            words, pref, disp = ((pos_words, "positive", "negative") if i % 2 == 0
                                 else (neg_words, "negative", "positive"))
            prompt = " ".join(rng.choice(words, 3))
            pairs.append(PreferencePair(prompt=prompt, preferred=pref,
                                        dispreferred=disp))
        return pairs

    def config(self, **kw):
        base = dict(beta=0.1, learning_rate=0.2, epochs=5, batch_size=20, seed=1)
        base.update(kw)
        return DpoConfig(**base)

    def test_loss_drops_on_separable_set(self):
        policy, trace = train_dpo(self.separable_pairs(), self.config(),
                                  FeatureExtractor(dimension=256))
        assert trace.steps[0].loss == pytest.approx(LN2, abs=1e-9)
        assert trace.epoch_loss[-1] < 0.1
        assert trace.epoch_loss[-1] < trace.steps[0].loss

    def test_zero_epochs_returns_init_bit_for_bit(self):
        rng = np.random.default_rng(2)
        ext = FeatureExtractor(dimension=32)
        init = LogLinearPolicy(weights=rng.normal(size=(3, 32)), extractor=ext)
        policy, trace = train_dpo(self.separable_pairs(20), self.config(epochs=0),
                                  init_policy=init)
        assert policy.weights.tobytes() == init.weights.tobytes()
        assert trace.steps == []

    def test_same_seed_identical_weights(self):
        pairs = self.separable_pairs(60)
        a, _ = train_dpo(pairs, self.config(), FeatureExtractor(dimension=64))
        b, _ = train_dpo(pairs, self.config(), FeatureExtractor(dimension=64))
        assert a.weights.tobytes() == b.weights.tobytes()

    def test_reference_never_mutated(self):
        rng = np.random.default_rng(3)
        ext = FeatureExtractor(dimension=32)
        init = LogLinearPolicy(weights=rng.normal(size=(3, 32)), extractor=ext)
        before = init.weights.tobytes()
        train_dpo(self.separable_pairs(40), self.config(), init_policy=init)
        assert init.weights.tobytes() == before

    def test_margin_nondecreasing_per_epoch_on_separable_set(self):
        _, trace = train_dpo(self.separable_pairs(), self.config(),
                             FeatureExtractor(dimension=256))
        assert all(b >= a for a, b in
                   zip(trace.epoch_margin, trace.epoch_margin[1:]))

    def test_trace_values_finite(self):
        _, trace = train_dpo(self.separable_pairs(40), self.config(),
                             FeatureExtractor(dimension=64))
        for step in trace.steps:
            assert math.isfinite(step.loss)
            assert math.isfinite(step.margin)
            assert math.isfinite(step.grad_norm)


class TestSftLoss:
    def test_uniform_policy_gives_ln3(self):
        policy = LogLinearPolicy.zeros(FeatureExtractor(dimension=8))
        samples = [LabeledSample(raw_text="anything", truth="neutral")]
        assert sft_loss(policy, samples) == pytest.approx(math.log(3), abs=1e-12)

    def test_confident_correct_policy_near_zero(self):
        policy = single_token_policy([10.0, 0.0, 0.0])
        samples = [LabeledSample(raw_text="tok", truth="positive")]
        assert sft_loss(policy, samples) < 1e-4

    def test_duplicated_batch_identical(self):
        policy = single_token_policy([0.5, -0.5, 0.1])
        sample = LabeledSample(raw_text="tok", truth="negative")
        assert sft_loss(policy, [sample]) == pytest.approx(
            sft_loss(policy, [sample] * 5), abs=1e-12)

    def test_empty_rejected(self):
        policy = LogLinearPolicy.zeros(FeatureExtractor(dimension=4))
        with pytest.raises(ValueError):
            sft_loss(policy, [])


class TestTrainSft:
    def test_learns_separable_data(self):
        pairs = TestTrainDpo().separable_pairs(100)
        cfg = DpoConfig(learning_rate=0.2, epochs=5, batch_size=20, seed=1)
        policy, trace = train_sft(pairs, cfg, FeatureExtractor(dimension=256))
        assert trace.epoch_loss[-1] < 0.1
        correct = sum(predict(policy, p.prompt)[0] == p.preferred for p in pairs)
        assert correct / len(pairs) > 0.95

    def test_same_seed_identical(self):
        pairs = TestTrainDpo().separable_pairs(40)
        cfg = DpoConfig(learning_rate=0.1, epochs=2, batch_size=16, seed=4)
        a, _ = train_sft(pairs, cfg, FeatureExtractor(dimension=64))
        b, _ = train_sft(pairs, cfg, FeatureExtractor(dimension=64))
        assert a.weights.tobytes() == b.weights.tobytes()


class TestPredict:
    def test_argmax(self):
        policy = single_token_policy([1.0, 0.0, 0.0])
        label, logits = predict(policy, "tok")
        assert label == "positive"
        assert logits.shape == (3,)

    def test_tie_breaks_by_vocab_order(self):
        policy = LogLinearPolicy.zeros(FeatureExtractor(dimension=8))
        label, _ = predict(policy, "anything at all")
        assert label == "positive"

    def test_constant_shift_invariance(self):
        policy = single_token_policy([0.4, 1.3, -0.2])
        shifted = single_token_policy([0.4 + 5, 1.3 + 5, -0.2 + 5])
        assert predict(policy, "tok")[0] == predict(shifted, "tok")[0]


class TestPolicyIo:
    def test_save_load_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(11)
        policy = LogLinearPolicy(weights=rng.normal(size=(3, 48)),
                                 extractor=FeatureExtractor(dimension=48))
        path = tmp_path / "policy.bin"
        policy.save(path)
        loaded = LogLinearPolicy.load(path)
        assert loaded.extractor.dimension == 48
        assert loaded.weights.tobytes() == policy.weights.tobytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
        with pytest.raises(ValueError, match="magic"):
            LogLinearPolicy.load(path)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DpoConfig(beta=0.0)
        with pytest.raises(ValueError):
            DpoConfig(warmup_ratio=1.0)
        with pytest.raises(ValueError):
            DpoConfig(learning_rate=-1.0)
