"""Seed derivation for every stochastic component.

All randomness in the package flows from one root seed. Each consumer derives
its generator from (root_seed, stream id, extra indices), so stages and
per-sample draws are reproducible in isolation and independent of execution
order.
"""

from __future__ import annotations

import numpy as np

# Stream ids, one per stochastic consumer. Values are arbitrary but frozen:
# changing them changes every downstream artifact byte.
STREAM_PAIRS = 1       # dispreferred-label draws, one substream per sample index
STREAM_SPLIT = 2       # train/test shuffle
STREAM_TRAIN_DPO = 3   # epoch shuffles in the preference trainer
STREAM_TRAIN_SFT = 4   # epoch shuffles in the cross-entropy trainer
STREAM_FIXTURE = 5     # synthetic fixture generation


def derive_rng(seed: int, stream: int, *extra: int) -> np.random.Generator:
    """Generator seeded from (seed, stream, *extra); deterministic across platforms."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, stream, *extra])
