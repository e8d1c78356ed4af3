"""Beam search, grid beam search (plain and disjunctive) and cascaded beam search.

All four share one banked search loop. A decoder supplies the initial state,
the number of banks and a transition function that lists, for a hypothesis,
which tokens may follow and which bank each continuation lands in.

Ranking everywhere is: higher score, then shorter sequence, then the
lexicographically smaller token-id sequence.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .distributor import INITIAL_STATE, ConstraintState, Distributor, TraceFn
from .logit_mod import GuidanceConfig, apply_guidance
from .scorer import Scorer
from .term_trie import TermList, Trie, guide_tokens
from .vocab import Vocabulary, VocabError


class DecodeError(RuntimeError):
    pass


class InvariantViolation(AssertionError):
    pass


@dataclass(frozen=True)
class DecodeConfig:
    k: int = 5
    max_len: int = 64
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    length_normalization: bool = False
    ignore_case: bool = False
    # verify bank capacity and level residency after every step
    check_invariants: bool = False

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_len < 2:
            raise ValueError("max_len must be >= 2 (BOS plus one token)")


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[int, ...]
    score: float
    state: Any = INITIAL_STATE
    level: int = 0
    finished: bool = False
    # sum of unguided model log-probs along the sequence
    raw_score: float = 0.0

    @property
    def fulfilled(self) -> int:
        """Number of confirmed terminology constraints."""
        return len(getattr(self.state, "completed", ()))

    def final_score(self, length_normalization: bool = False) -> float:
        if not length_normalization:
            return self.score
        return self.score / max(1, len(self.tokens) - 1)


@dataclass
class DecodeStats:
    steps: int = 0
    max_live: int = 0
    capacity: int = 0
    occupancy: list[tuple[int, ...]] = field(default_factory=list)


@dataclass
class DecodeResult:
    output: Hypothesis
    finals: list[Hypothesis]
    stats: DecodeStats
    truncated: bool = False


def _rank_key(h: Hypothesis, length_normalization: bool = False):
    return (-h.final_score(length_normalization), len(h.tokens), h.tokens)


def finalize(
    finals: Sequence[Hypothesis],
    fallback: Hypothesis | None = None,
    length_normalization: bool = False,
) -> Hypothesis:
    """Pick the best final: most constraints (highest level) first, then score."""
    if finals:
        return min(finals, key=lambda h: (-h.level, *_rank_key(h, length_normalization)))
    if fallback is None:
        raise DecodeError("no final hypotheses and no fallback")
    return fallback


# A transition lists (token id, new state, bank level) for one hypothesis.
Transition = Callable[[Hypothesis, np.ndarray], Iterable[tuple[int, Any, int]]]
GuideFn = Callable[[Any], frozenset[int]]


def _banked_search(
    source: Sequence[int],
    scorer: Scorer,
    vocab: Vocabulary,
    config: DecodeConfig,
    num_levels: int,
    transition: Transition,
    init_state: Any = INITIAL_STATE,
    guide_for: GuideFn | None = None,
    state_level: Callable[[Any], int] | None = None,
) -> DecodeResult:
    k, top = config.k, num_levels - 1
    guidance = config.guidance if guide_for is not None else None
    guided = guidance is not None and guidance.active
    masked = [vocab.bos, vocab.pad]
    source = tuple(source)

    live = [Hypothesis((vocab.bos,), 0.0, init_state)]
    finals: list[Hypothesis] = []
    top_finals = 0
    stats = DecodeStats(capacity=k * num_levels)
    last_live: list[Hypothesis] = list(live)
    cut_short: list[Hypothesis] = []

    while live:
        new_len = len(live[0].tokens) + 1
        if new_len > config.max_len:
            break
        at_limit = new_len == config.max_len
        stats.steps += 1
        pools: dict[int, list[tuple]] = defaultdict(list)
        for hyp in live:
            raw = scorer.log_probs(source, hyp.tokens)
            scores = raw
            if guided:
                scores = apply_guidance(raw, guide_for(hyp.state), guidance.alpha)
            scores = np.array(scores, dtype=np.float64)
            scores[masked] = -math.inf
            for tid, new_state, level in transition(hyp, scores):
                s = scores[tid]
                if s == -math.inf:
                    continue
                total = hyp.score + float(s)
                pools[level].append((-total, hyp.tokens, tid, hyp, new_state, float(raw[tid])))

        next_live: list[Hypothesis] = []
        occupancy = [0] * num_levels
        for level in sorted(pools):
            pool = pools[level]
            pool.sort(key=lambda c: (c[0], c[1], c[2]))
            # at the length limit only EOS can finish, so EOS candidates compete
            # among themselves and the rest are kept apart as a fallback
            kept = ended = 0
            for neg, toks, tid, parent, new_state, raw_lp in pool:
                finished = tid == vocab.eos
                if kept >= k and (not at_limit or ended >= k):
                    break
                if (ended if at_limit and finished else kept) >= k:
                    continue
                cand = Hypothesis(
                    toks + (tid,), -neg, new_state, level, finished, parent.raw_score + raw_lp
                )
                if finished:
                    finals.append(cand)
                    top_finals += level == top
                    ended += 1
                elif at_limit:
                    cut_short.append(cand)
                    kept += 1
                else:
                    next_live.append(cand)
                    kept += 1
            occupancy[level] = kept if not at_limit else 0

        if config.check_invariants:
            _check_step(next_live, k, num_levels, state_level)
        stats.occupancy.append(tuple(occupancy))
        stats.max_live = max(stats.max_live, len(next_live))
        if next_live:
            last_live = next_live
        live = next_live

        if top_finals >= k:
            break
        if live and not config.length_normalization:
            # log-probs are <= 0, so no live hypothesis can overtake a top-level
            # final that already scores at least as well
            best_top = max((f.score for f in finals if f.level == top), default=-math.inf)
            if best_top >= max(h.score for h in live):
                break

    truncated = not finals
    fallback = None
    if truncated:
        pool = cut_short or last_live
        fallback = min(pool, key=lambda h: (-h.level, *_rank_key(h)))
    output = finalize(finals, fallback, config.length_normalization)
    return DecodeResult(output, finals, stats, truncated)


def _check_step(live, k, num_levels, state_level) -> None:
    if len(live) > k * num_levels:
        raise InvariantViolation(f"{len(live)} live hypotheses exceed k(c+1)={k * num_levels}")
    per_level: dict[int, int] = defaultdict(int)
    for h in live:
        per_level[h.level] += 1
        if state_level is not None and state_level(h.state) != h.level:
            raise InvariantViolation(
                f"hypothesis {h.tokens} in bank {h.level} has level {state_level(h.state)}"
            )
    for level, n in per_level.items():
        if n > k:
            raise InvariantViolation(f"bank {level} holds {n} > k={k} hypotheses")


def _all_tokens(vocab: Vocabulary) -> list[int]:
    return [t for t in range(len(vocab)) if t not in (vocab.bos, vocab.pad)]


def _make_guide_fn(trie: Trie, vocab: Vocabulary, guidance: GuidanceConfig) -> GuideFn:
    cache: dict[tuple, frozenset[int]] = {}
    all_terms = trie.term_indices

    def guide_for(state: ConstraintState) -> frozenset[int]:
        open_terms = all_terms - state.closed_terms()
        key = (state.cursor, open_terms)
        hit = cache.get(key)
        if hit is None:
            hit = guide_tokens(trie, vocab, state.cursor, open_terms, guidance.strategy)
            cache[key] = hit
        return hit

    return guide_for


# -- standard beam search ---------------------------------------------------


def beam_search(
    source: Sequence[int],
    scorer: Scorer,
    vocab: Vocabulary,
    config: DecodeConfig,
    terms: TermList | None = None,
) -> DecodeResult:
    """Plain beam search with a single bank of ``k`` hypotheses.

    With ``terms`` and an active guidance config this is "logit modification
    only" decoding: term progress is tracked to build guide sets, but it does
    not influence ranking or selection.
    """
    tokens = _all_tokens(vocab)
    guide_for = None
    if terms is not None and len(terms) and config.guidance.active:
        trie = Trie(terms, ignore_case=config.ignore_case)
        dist = Distributor(trie, vocab)
        guide_for = _make_guide_fn(trie, vocab, config.guidance)

        def transition(hyp, scores):
            first = len(hyp.tokens) == 1
            for tid in tokens:
                yield tid, dist(hyp.state, tid, first).new_state, 0

    else:

        def transition(hyp, scores):
            for tid in tokens:
                yield tid, hyp.state, 0

    return _banked_search(source, scorer, vocab, config, 1, transition, guide_for=guide_for)


# -- cascaded beam search -----------------------------------------------------


def cascaded_beam_search(
    source: Sequence[int],
    scorer: Scorer,
    vocab: Vocabulary,
    terms: TermList,
    config: DecodeConfig,
    trace: TraceFn | None = None,
) -> DecodeResult:
    """One bank per number of (complete or in-progress) terminologies.

    Matching is on characters, so any tokenization of a target counts.
    Total capacity is ``k * (c + 1)`` hypotheses.
    """
    c = len(terms)
    if c == 0:
        return beam_search(source, scorer, vocab, config)
    trie = Trie(terms, ignore_case=config.ignore_case)
    dist = Distributor(trie, vocab, trace=trace)
    tokens = _all_tokens(vocab)
    guide_for = _make_guide_fn(trie, vocab, config.guidance)

    def transition(hyp, scores):
        first = len(hyp.tokens) == 1
        for tid in tokens:
            if scores[tid] == -math.inf:
                continue
            new_state = dist(hyp.state, tid, first).new_state
            yield tid, new_state, new_state.level

    return _banked_search(
        source,
        scorer,
        vocab,
        config,
        c + 1,
        transition,
        guide_for=guide_for,
        state_level=lambda s: s.level,
    )


# -- grid beam search ---------------------------------------------------------


@dataclass(frozen=True)
class GridState:
    completed: frozenset[int] = frozenset()
    term: int | None = None
    # alternatives still consistent with the forced tokens so far
    alts: tuple[int, ...] = ()
    progress: int = 0


def grid_beam_search(
    source: Sequence[int],
    scorer: Scorer,
    vocab: Vocabulary,
    terms: TermList,
    config: DecodeConfig,
    disjunctive: bool = False,
) -> DecodeResult:
    """Grid beam search over fixed (canonical) constraint tokenizations.

    Banks count fulfilled constraint *tokens*. A hypothesis that has started
    a constraint must emit its next token; otherwise it may generate freely
    or start any unmet constraint. With ``disjunctive`` each term may be met
    by any of its alternatives; a completed term counts as its longest
    alternative's token length.
    """
    seqs: dict[int, list[tuple[int, ...]]] = {}
    for e in terms:
        targets = e.targets if disjunctive else e.targets[:1]
        try:
            seqs[e.index] = [tuple(vocab.canonical_tokenize(t)) for t in targets]
        except VocabError as exc:
            raise DecodeError(f"term {e.index} ({e.source!r}) cannot be tokenized: {exc}") from exc
    width = {i: max(len(s) for s in alts) for i, alts in seqs.items()}
    num_levels = sum(width.values()) + 1
    tokens = _all_tokens(vocab)

    def level_of(state: GridState) -> int:
        return sum(width[i] for i in state.completed) + state.progress

    def advance(completed, term, alts, progress, tid):
        hit = tuple(a for a in alts if seqs[term][a][progress] == tid)
        progress += 1
        if any(len(seqs[term][a]) == progress for a in hit):
            return GridState(completed | {term})
        return GridState(completed, term, hit, progress)

    def transition(hyp, scores):
        st: GridState = hyp.state
        if st.term is not None:
            forced = sorted({seqs[st.term][a][st.progress] for a in st.alts})
            for tid in forced:
                new = advance(st.completed, st.term, st.alts, st.progress, tid)
                yield tid, new, level_of(new)
            return
        base = level_of(st)
        for tid in tokens:
            yield tid, st, base
        for term in sorted(seqs):
            if term in st.completed:
                continue
            alts = tuple(range(len(seqs[term])))
            for tid in sorted({seqs[term][a][0] for a in alts}):
                new = advance(st.completed, term, alts, 0, tid)
                yield tid, new, level_of(new)

    return _banked_search(
        source,
        scorer,
        vocab,
        config,
        num_levels,
        transition,
        init_state=GridState(),
        state_level=level_of,
    )


DECODERS = ("beam", "gbs", "gbs+", "cascaded")


def decode(
    name: str,
    source: Sequence[int],
    scorer: Scorer,
    vocab: Vocabulary,
    terms: TermList,
    config: DecodeConfig,
    trace: TraceFn | None = None,
) -> DecodeResult:
    if name == "beam":
        return beam_search(source, scorer, vocab, config, terms)
    if name == "gbs":
        return grid_beam_search(source, scorer, vocab, terms, config, disjunctive=False)
    if name == "gbs+":
        return grid_beam_search(source, scorer, vocab, terms, config, disjunctive=True)
    if name == "cascaded":
        return cascaded_beam_search(source, scorer, vocab, terms, config, trace=trace)
    raise ValueError(f"unknown decoder {name!r}; choose from {DECODERS}")
