"""Autoregressive next-token scorers.

Every scorer maps ``(source, prefix)`` to a normalised log-probability vector
over the vocabulary. The toy scorers here stand in for a neural translation
model; they ignore ``source`` and never carry per-call state.
"""

from __future__ import annotations

import abc
import json
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

NEG_INF = -math.inf


class ScorerError(ValueError):
    pass


def _logsumexp(v: np.ndarray) -> float:
    m = np.max(v)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(v - m))))


class Scorer(abc.ABC):
    """Next-token scoring interface ``p(y_t | x, y_<t)``."""

    vocab_size: int
    pad: int | None = None

    @abc.abstractmethod
    def _scores(self, source: tuple[int, ...], prefix: tuple[int, ...]) -> np.ndarray:
        """Return the log-probability vector; inputs are already validated."""

    def log_probs(self, source: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        source, prefix = tuple(source), tuple(prefix)
        for where, seq in (("source", source), ("prefix", prefix)):
            for i, t in enumerate(seq):
                if not 0 <= t < self.vocab_size:
                    raise ScorerError(f"invalid token id {t} at {where} position {i}")
        if not prefix:
            raise ScorerError("prefix must start with BOS")
        out = self._scores(source, prefix)
        out = out.copy()
        out.flags.writeable = False
        return out


class UniformScorer(Scorer):
    def __init__(self, vocab_size: int, pad: int) -> None:
        if vocab_size < 2:
            raise ScorerError("uniform scorer needs at least two ids")
        self.vocab_size = vocab_size
        self.pad = pad
        v = np.full(vocab_size, -math.log(vocab_size - 1))
        v[pad] = NEG_INF
        self._v = v

    def _scores(self, source, prefix):
        return self._v


def normalise_probs(probs: Sequence[float], pad: int | None, tol: float = 1e-6) -> np.ndarray:
    """Validate a probability vector and return exactly normalised log-probs."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ScorerError("probabilities must be a finite non-negative vector")
    if pad is not None and p[pad] > 0:
        raise ScorerError(f"pad id {pad} must have zero probability")
    if abs(p.sum() - 1.0) > tol:
        raise ScorerError(f"probabilities sum to {p.sum():.9f}, expected 1")
    with np.errstate(divide="ignore"):
        lp = np.log(p)
    return lp - _logsumexp(lp)


class TableScorer(Scorer):
    """n-gram table scorer: the last ``order`` prefix ids select a stored vector.

    Prefixes shorter than ``order`` use the whole prefix as context. Contexts
    without an entry fall back to ``default``.
    """

    def __init__(
        self,
        order: int,
        table: Mapping[Sequence[int], Sequence[float]],
        default: Sequence[float],
        pad: int | None = None,
    ) -> None:
        if order < 1:
            raise ScorerError("order must be >= 1")
        self.order = order
        self.pad = pad
        self.default = normalise_probs(default, pad)
        self.vocab_size = len(self.default)
        self.table: dict[tuple[int, ...], np.ndarray] = {}
        for ctx, probs in table.items():
            ctx = tuple(int(c) for c in ctx)
            if not 1 <= len(ctx) <= order:
                raise ScorerError(f"context {ctx} longer than order {order} or empty")
            vec = normalise_probs(probs, pad)
            if len(vec) != self.vocab_size:
                raise ScorerError(f"context {ctx}: vector length {len(vec)} != {self.vocab_size}")
            self.table[ctx] = vec

    @classmethod
    def from_log_table(
        cls,
        order: int,
        table: Mapping[tuple[int, ...], np.ndarray],
        default: np.ndarray,
        pad: int | None = None,
    ) -> TableScorer:
        """Wrap already-normalised log vectors without a probability round trip."""
        obj = cls.__new__(cls)
        obj.order, obj.pad = order, pad
        obj.default = np.asarray(default, dtype=np.float64)
        obj.vocab_size = len(obj.default)
        obj.table = {tuple(k): np.asarray(v, dtype=np.float64) for k, v in table.items()}
        for ctx, vec in [((), obj.default), *obj.table.items()]:
            if abs(_logsumexp(vec)) > 1e-9:
                raise ScorerError(f"context {ctx}: log vector is not normalised")
        return obj

    def _scores(self, source, prefix):
        return self.table.get(prefix[-self.order:], self.default)

    def to_json(self) -> dict:
        def probs(v: np.ndarray) -> list[float]:
            return [float(x) for x in np.exp(v)]

        return {
            "order": self.order,
            "pad": self.pad,
            "entries": [{"context": list(k), "probs": probs(v)} for k, v in self.table.items()],
            "default": probs(self.default),
        }

    @classmethod
    def from_json(cls, data: Mapping) -> TableScorer:
        try:
            return cls(
                order=int(data["order"]),
                table={tuple(e["context"]): e["probs"] for e in data.get("entries", [])},
                default=data["default"],
                pad=data.get("pad"),
            )
        except (KeyError, TypeError) as exc:
            raise ScorerError(f"malformed toy model: {exc}") from exc


class PerTaskScorer(Scorer):
    """Selects a toy model by task id; used for synthetic corpora where each
    sentence has its own distribution. The active task is chosen with
    :meth:`for_task`, which returns the underlying scorer."""

    def __init__(self, models: Mapping[str, Scorer], fallback: Scorer | None = None) -> None:
        if not models and fallback is None:
            raise ScorerError("no models given")
        sizes = {m.vocab_size for m in models.values()} | (
            {fallback.vocab_size} if fallback else set()
        )
        if len(sizes) != 1:
            raise ScorerError(f"models disagree on vocabulary size: {sorted(sizes)}")
        self.models = dict(models)
        self.fallback = fallback
        self.vocab_size = sizes.pop()

    def for_task(self, task_id: str) -> Scorer:
        model = self.models.get(task_id, self.fallback)
        if model is None:
            raise ScorerError(f"no model for task {task_id!r}")
        return model

    def _scores(self, source, prefix):
        if self.fallback is None:
            raise ScorerError("per-task scorer used without selecting a task")
        return self.fallback._scores(source, prefix)


def load_scorer(path: str | Path) -> Scorer:
    """Load a toy model file: a single table model or ``{"tasks": {id: model}}``."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if "tasks" in data:
        models = {str(k): TableScorer.from_json(v) for k, v in data["tasks"].items()}
        fallback = TableScorer.from_json(data["default_model"]) if "default_model" in data else None
        return PerTaskScorer(models, fallback)
    return TableScorer.from_json(data)


def save_scorer(scorer: Scorer, path: str | Path) -> None:
    if isinstance(scorer, TableScorer):
        data = scorer.to_json()
    elif isinstance(scorer, PerTaskScorer):
        data = {"tasks": {k: m.to_json() for k, m in scorer.models.items()}}
        if scorer.fallback is not None:
            data["default_model"] = scorer.fallback.to_json()
    else:
        raise ScorerError(f"cannot serialise {type(scorer).__name__}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh)
