"""Binary guidance boost applied inside a double softmax."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Collection

import numpy as np

from .term_trie import PushStrategy

DEFAULT_ALPHA = 0.1


@dataclass(frozen=True)
class GuidanceConfig:
    alpha: float = DEFAULT_ALPHA
    strategy: PushStrategy = PushStrategy.NONE

    def __post_init__(self) -> None:
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        object.__setattr__(self, "strategy", PushStrategy(self.strategy))

    @property
    def active(self) -> bool:
        """Decoders only transform scores when there is something to push.

        alpha == 0 is treated as "no guidance" so that sweeps' alpha=0 column
        is plain decoding on raw scores.
        """
        return self.strategy is not PushStrategy.NONE and self.alpha > 0


def _log_softmax(v: np.ndarray) -> np.ndarray:
    m = np.max(v)
    z = v - m
    return z - np.log(np.sum(np.exp(z)))


def apply_guidance(x: np.ndarray, guide: Collection[int], alpha: float) -> np.ndarray:
    """``log softmax(softmax(x) + alpha * 1[guide] / |guide|)``.

    ``x`` may contain ``-inf`` entries. Note the inner probabilities lie in
    [0, 1], so the outer softmax is much flatter than ``softmax(x)``.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    x = np.asarray(x, dtype=np.float64)
    probs = np.exp(_log_softmax(x))
    if guide:
        idx = np.fromiter(sorted(set(guide)), dtype=np.int64)
        if idx.min() < 0 or idx.max() >= len(x):
            raise ValueError("guide token outside vocabulary")
        probs[idx] += alpha / len(idx)
    return _log_softmax(probs)
