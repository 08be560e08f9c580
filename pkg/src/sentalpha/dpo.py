"""Preference-optimization objective, analytic gradient, and training loops
over a desk-scale log-linear policy with a frozen reference.

The policy maps a hashed bag-of-words feature vector phi(x) to three label
logits via a 3 x D weight matrix; label log-probabilities are the log-softmax
of those logits. Because each label is a single "token", sequence
log-probabilities reduce to one softmax, so every term of the preference loss

    L = -log sigmoid(beta * ((log pi(yw|x) - log ref(yw|x))
                             - (log pi(yl|x) - log ref(yl|x))))

is preserved exactly while staying cheap enough to verify by finite
differences.
"""

from __future__ import annotations

import csv
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .labels import LABELS, LABEL_INDEX, check_label
from .prefdata import LabeledSample, PreferencePair
from .randomness import STREAM_TRAIN_DPO, STREAM_TRAIN_SFT, derive_rng
from .textproc import tokenize

DEFAULT_DIMENSION = 4096

_POLICY_MAGIC = b"SENTAPOL"
_POLICY_VERSION = 1


@dataclass(frozen=True)
class FeatureExtractor:
    """Deterministic hashed bag-of-words featurizer.

    Tokens are bucketed by CRC-32 modulo `dimension`, so the same prompt
    always yields the same non-negative integer count vector on any platform.
    """

    dimension: int = DEFAULT_DIMENSION

    def __post_init__(self) -> None:
        if self.dimension <= 0:
            raise ValueError(f"dimension must be positive, got {self.dimension}")

    def bucket(self, token: str) -> int:
        return zlib.crc32(token.encode("utf-8")) % self.dimension

    def vector(self, text: str) -> np.ndarray:
        """Count vector phi(text) of shape (dimension,)."""
        phi = np.zeros(self.dimension)
        for tok in tokenize(text):
            phi[self.bucket(tok)] += 1.0
        return phi

    def matrix(self, texts: list[str]) -> np.ndarray:
        """Stacked feature matrix of shape (len(texts), dimension)."""
        out = np.zeros((len(texts), self.dimension))
        for i, text in enumerate(texts):
            for tok in tokenize(text):
                out[i, self.bucket(tok)] += 1.0
        return out


@dataclass
class LogLinearPolicy:
    """Label-logit policy: logits(x) = weights @ phi(x), rows in label order."""

    weights: np.ndarray
    extractor: FeatureExtractor = field(default_factory=FeatureExtractor)

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (len(LABELS), self.extractor.dimension):
            raise ValueError(
                f"weights shape {self.weights.shape} != "
                f"(3, {self.extractor.dimension})"
            )

    @classmethod
    def zeros(cls, extractor: FeatureExtractor | None = None) -> "LogLinearPolicy":
        """Uniform policy (all-zero weights)."""
        ext = extractor or FeatureExtractor()
        return cls(weights=np.zeros((len(LABELS), ext.dimension)), extractor=ext)

    def copy(self) -> "LogLinearPolicy":
        return LogLinearPolicy(weights=self.weights.copy(), extractor=self.extractor)

    def logits_for(self, prompt: str) -> np.ndarray:
        return self.weights @ self.extractor.vector(prompt)

    def log_probs_for(self, prompt: str) -> np.ndarray:
        return _log_softmax(self.logits_for(prompt))

    def save(self, path: str | Path) -> None:
        """Write the little-endian binary policy file (magic, labels, D, weights)."""
        with open(path, "wb") as fh:
            fh.write(_POLICY_MAGIC)
            fh.write(struct.pack("<II", _POLICY_VERSION, len(LABELS)))
            for label in LABELS:
                raw = label.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
            fh.write(struct.pack("<Q", self.extractor.dimension))
            fh.write(np.ascontiguousarray(self.weights, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "LogLinearPolicy":
        with open(path, "rb") as fh:
            if fh.read(len(_POLICY_MAGIC)) != _POLICY_MAGIC:
                raise ValueError(f"{path}: not a policy file (bad magic)")
            version, n_labels = struct.unpack("<II", fh.read(8))
            if version != _POLICY_VERSION:
                raise ValueError(f"{path}: unsupported policy version {version}")
            labels = []
            for _ in range(n_labels):
                (ln,) = struct.unpack("<I", fh.read(4))
                labels.append(fh.read(ln).decode("utf-8"))
            if tuple(labels) != LABELS:
                raise ValueError(f"{path}: label order {labels} != {list(LABELS)}")
            (dim,) = struct.unpack("<Q", fh.read(8))
            raw = fh.read(n_labels * dim * 8)
            weights = np.frombuffer(raw, dtype="<f8").reshape(n_labels, dim).copy()
        return cls(weights=weights, extractor=FeatureExtractor(dimension=dim))


@dataclass
class DpoConfig:
    """Hyperparameters for the preference trainer.

    `beta` scales the policy/reference log-ratio margin; the optimizer is
    decoupled-weight-decay Adam with linear warm-up over `warmup_ratio` of the
    total step count.
    """

    beta: float = 0.1
    learning_rate: float = 1e-3
    epochs: int = 5
    batch_size: int = 32
    weight_decay: float = 0.01
    warmup_ratio: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")
        if self.batch_size <= 0:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if not (0.0 <= self.warmup_ratio < 1.0):
            raise ValueError(f"warmup_ratio must be in [0, 1), got {self.warmup_ratio}")


@dataclass(frozen=True)
class TraceStep:
    """One optimizer step: batch-mean loss, batch-mean margin, gradient norm."""

    step: int
    epoch: int
    loss: float
    margin: float
    grad_norm: float


@dataclass
class TrainTrace:
    """Per-step records plus full-dataset loss/margin evaluated at each epoch end."""

    steps: list[TraceStep] = field(default_factory=list)
    epoch_loss: list[float] = field(default_factory=list)
    epoch_margin: list[float] = field(default_factory=list)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step", "epoch", "loss", "margin", "grad_norm"])
            for s in self.steps:
                writer.writerow([s.step, s.epoch, repr(s.loss), repr(s.margin),
                                 repr(s.grad_norm)])


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax with max subtraction; works on (3,) or (n, 3)."""
    m = np.max(logits, axis=-1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # sigma(x) = exp(-softplus(-x)), stable for large |x|
    return np.exp(-np.logaddexp(0.0, -x))


def _check_finite(policy: LogLinearPolicy) -> None:
    if not np.isfinite(policy.weights).all():
        raise ValueError("policy weights contain non-finite values")


def policy_logprob(policy: LogLinearPolicy, prompt: str, label: str) -> float:
    """log pi(label | prompt) under the policy's log-softmax."""
    check_label(label)
    _check_finite(policy)
    return float(policy.log_probs_for(prompt)[LABEL_INDEX[label]])


def predict(policy: LogLinearPolicy, prompt: str) -> tuple[str, np.ndarray]:
    """Argmax label and raw logits; ties break toward the earlier vocab entry."""
    logits = policy.logits_for(prompt)
    return LABELS[int(np.argmax(logits))], logits


def _batch_arrays(
    extractor: FeatureExtractor, batch: list[PreferencePair]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    phi = extractor.matrix([p.prompt for p in batch])
    iw = np.array([LABEL_INDEX[p.preferred] for p in batch])
    il = np.array([LABEL_INDEX[p.dispreferred] for p in batch])
    return phi, iw, il


def _margins(
    policy_w: np.ndarray, reference_w: np.ndarray,
    phi: np.ndarray, iw: np.ndarray, il: np.ndarray, beta: float,
) -> np.ndarray:
    """beta * ((log pi(yw) - log ref(yw)) - (log pi(yl) - log ref(yl))) per pair."""
    rows = np.arange(len(iw))
    lp_pol = _log_softmax(phi @ policy_w.T)
    lp_ref = _log_softmax(phi @ reference_w.T)
    delta_w = lp_pol[rows, iw] - lp_ref[rows, iw]
    delta_l = lp_pol[rows, il] - lp_ref[rows, il]
    return beta * (delta_w - delta_l)


def _grad_from_margins(
    z: np.ndarray, phi: np.ndarray, iw: np.ndarray, il: np.ndarray,
    beta: float, n_features: int,
) -> np.ndarray:
    # d/dW log pi(y|x) = (onehot(y) - softmax) (x) phi; the softmax terms cancel
    # in the preferred-minus-dispreferred difference, leaving (e_w - e_l) (x) phi.
    coef = -beta * _sigmoid(-z) / len(z)
    grad = np.zeros((len(LABELS), n_features))
    np.add.at(grad, iw, coef[:, None] * phi)
    np.add.at(grad, il, -coef[:, None] * phi)
    return grad


def dpo_loss(
    policy: LogLinearPolicy, reference: LogLinearPolicy,
    batch: list[PreferencePair], beta: float,
) -> float:
    """Batch-mean preference loss, computed via the softplus form
    -log sigmoid(z) = softplus(-z)."""
    if not batch:
        raise ValueError("batch must be nonempty")
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    _check_finite(policy)
    _check_finite(reference)
    phi, iw, il = _batch_arrays(policy.extractor, batch)
    z = _margins(policy.weights, reference.weights, phi, iw, il, beta)
    return float(np.mean(_softplus(-z)))


def dpo_grad(
    policy: LogLinearPolicy, reference: LogLinearPolicy,
    batch: list[PreferencePair], beta: float,
) -> np.ndarray:
    """Analytic gradient of `dpo_loss` w.r.t. the policy weights, shape (3, D)."""
    if not batch:
        raise ValueError("batch must be nonempty")
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    _check_finite(policy)
    _check_finite(reference)
    phi, iw, il = _batch_arrays(policy.extractor, batch)
    z = _margins(policy.weights, reference.weights, phi, iw, il, beta)
    return _grad_from_margins(z, phi, iw, il, beta, policy.extractor.dimension)


def sft_loss(policy: LogLinearPolicy, samples: list[LabeledSample]) -> float:
    """Mean negative log-likelihood of the true label under the policy."""
    if not samples:
        raise ValueError("samples must be nonempty")
    _check_finite(policy)
    phi = policy.extractor.matrix([s.raw_text for s in samples])
    iy = np.array([LABEL_INDEX[s.truth] for s in samples])
    lp = _log_softmax(phi @ policy.weights.T)
    return float(-np.mean(lp[np.arange(len(samples)), iy]))


class _AdamW:
    """Decoupled-weight-decay Adam with linear warm-up over the first steps."""

    def __init__(self, shape: tuple[int, ...], config: DpoConfig, total_steps: int):
        self.cfg = config
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0
        self.warmup_steps = int(np.floor(config.warmup_ratio * total_steps))

    def step(self, weights: np.ndarray, grad: np.ndarray) -> None:
        cfg = self.cfg
        self.t += 1
        lr = cfg.learning_rate
        if self.t <= self.warmup_steps:
            lr *= self.t / self.warmup_steps
        self.m = cfg.adam_beta1 * self.m + (1 - cfg.adam_beta1) * grad
        self.v = cfg.adam_beta2 * self.v + (1 - cfg.adam_beta2) * grad * grad
        m_hat = self.m / (1 - cfg.adam_beta1 ** self.t)
        v_hat = self.v / (1 - cfg.adam_beta2 ** self.t)
        weights -= lr * (m_hat / (np.sqrt(v_hat) + cfg.adam_epsilon)
                         + cfg.weight_decay * weights)


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def train_dpo(
    pairs: list[PreferencePair],
    config: DpoConfig,
    extractor: FeatureExtractor | None = None,
    init_policy: LogLinearPolicy | None = None,
) -> tuple[LogLinearPolicy, TrainTrace]:
    """Optimize a policy against a frozen copy of its initialization.

    Deterministic given `config.seed`: epoch shuffles derive from
    (seed, stream, epoch) and batch reductions use fixed-order numpy sums.
    The initial policy defaults to zero weights (uniform distribution).
    """
    if not pairs:
        raise ValueError("pairs must be nonempty")
    if init_policy is not None:
        policy = init_policy.copy()
    else:
        policy = LogLinearPolicy.zeros(extractor)
    ext = policy.extractor
    reference_w = policy.weights.copy()

    phi, iw, il = _batch_arrays(ext, pairs)
    n = len(pairs)
    steps_per_epoch = int(np.ceil(n / config.batch_size))
    optimizer = _AdamW(policy.weights.shape, config, config.epochs * steps_per_epoch)
    trace = TrainTrace()

    step = 0
    for epoch in range(config.epochs):
        rng = derive_rng(config.seed, STREAM_TRAIN_DPO, epoch)
        for idx in _epoch_batches(n, config.batch_size, rng):
            z = _margins(policy.weights, reference_w, phi[idx], iw[idx], il[idx],
                         config.beta)
            loss = float(np.mean(_softplus(-z)))
            if not np.isfinite(loss):
                raise RuntimeError(f"non-finite loss at step {step}")
            grad = _grad_from_margins(z, phi[idx], iw[idx], il[idx], config.beta,
                                      ext.dimension)
            optimizer.step(policy.weights, grad)
            trace.steps.append(TraceStep(
                step=step, epoch=epoch, loss=loss, margin=float(np.mean(z)),
                grad_norm=float(np.linalg.norm(grad))))
            step += 1
        z_full = _margins(policy.weights, reference_w, phi, iw, il, config.beta)
        trace.epoch_loss.append(float(np.mean(_softplus(-z_full))))
        trace.epoch_margin.append(float(np.mean(z_full)))
    return policy, trace


def train_sft(
    pairs: list[PreferencePair],
    config: DpoConfig,
    extractor: FeatureExtractor | None = None,
    init_policy: LogLinearPolicy | None = None,
) -> tuple[LogLinearPolicy, TrainTrace]:
    """Cross-entropy baseline trainer on (prompt, preferred-label) supervision.

    Shares the data pathway and optimizer of `train_dpo` so the two runs stay
    directly comparable. Trace margins record the multiclass logit margin
    (true-label logit minus the best other logit).
    """
    if not pairs:
        raise ValueError("pairs must be nonempty")
    if init_policy is not None:
        policy = init_policy.copy()
    else:
        policy = LogLinearPolicy.zeros(extractor)
    ext = policy.extractor

    phi = ext.matrix([p.prompt for p in pairs])
    iy = np.array([LABEL_INDEX[p.preferred] for p in pairs])
    n = len(pairs)

    def ce_and_margin(w: np.ndarray, phi_b: np.ndarray, iy_b: np.ndarray):
        logits = phi_b @ w.T
        lp = _log_softmax(logits)
        r = np.arange(len(iy_b))
        loss = float(-np.mean(lp[r, iy_b]))
        masked = logits.copy()
        masked[r, iy_b] = -np.inf
        margin = float(np.mean(logits[r, iy_b] - np.max(masked, axis=1)))
        resid = np.exp(lp)
        resid[r, iy_b] -= 1.0
        grad = resid.T @ phi_b / len(iy_b)
        return loss, margin, grad

    steps_per_epoch = int(np.ceil(n / config.batch_size))
    optimizer = _AdamW(policy.weights.shape, config, config.epochs * steps_per_epoch)
    trace = TrainTrace()

    step = 0
    for epoch in range(config.epochs):
        rng = derive_rng(config.seed, STREAM_TRAIN_SFT, epoch)
        for idx in _epoch_batches(n, config.batch_size, rng):
            loss, margin, grad = ce_and_margin(policy.weights, phi[idx], iy[idx])
            if not np.isfinite(loss):
                raise RuntimeError(f"non-finite loss at step {step}")
            optimizer.step(policy.weights, grad)
            trace.steps.append(TraceStep(
                step=step, epoch=epoch, loss=loss, margin=margin,
                grad_norm=float(np.linalg.norm(grad))))
            step += 1
        loss_full, margin_full, _ = ce_and_margin(policy.weights, phi, iy)
        trace.epoch_loss.append(loss_full)
        trace.epoch_margin.append(margin_full)
    return policy, trace
