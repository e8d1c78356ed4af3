"""Cascade level distributor.

Decides, for a hypothesis and a candidate next token, whether the hypothesis
moves up a level, stays, or drops a level, and returns the updated
constraint-tracking state. The eight cases of the decision tree are:

    1  finished a term last step, token starts another term        -> up
    2  outside any term, token starts a term                       -> up
    3  outside any term, token starts nothing                      -> stay
    4  finished a term last step, token is a new word (or EOS)     -> stay
    5  inside a term, token continues it                           -> stay
    6  inside a term, token breaks it but starts another           -> stay
    7  finished a term last step, token glues onto the same word   -> down
    8  inside a term, token breaks it and starts nothing (or EOS)  -> down

A finished term is only confirmed once a word boundary follows it (case 4 or
1); until then it is *pending*, because case 7 can still invalidate it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Iterable

from .term_trie import MatchCursor, Trie, step
from .vocab import TokenInfo, Vocabulary


class Move(enum.IntEnum):
    DOWN = -1
    STAY = 0
    UP = 1


@dataclass(frozen=True)
class ConstraintState:
    completed: frozenset[int] = frozenset()
    # live partial matches; several may be tracked at once (alternatives,
    # or a restart at a later word while an earlier attempt is still alive)
    cursor: tuple[MatchCursor, ...] = ()
    pending: int | None = None
    # incomplete cursors that outlived the pending completion (longer alternatives)
    tail: tuple[MatchCursor, ...] = ()

    def __post_init__(self) -> None:
        if self.cursor and self.pending is not None:
            raise ValueError("cursor and pending cannot both be set")
        if self.tail and self.pending is None:
            raise ValueError("tail cursors only exist while a term is pending")

    @property
    def level(self) -> int:
        return len(self.completed) + (self.pending is not None) + bool(self.cursor)

    @property
    def in_term(self) -> bool:
        return bool(self.cursor) or self.pending is not None

    def closed_terms(self) -> frozenset[int]:
        if self.pending is None:
            return self.completed
        return self.completed | {self.pending}


INITIAL_STATE = ConstraintState()


@dataclass(frozen=True)
class LevelAction:
    move: Move
    new_state: ConstraintState
    case: int


def _settle(completed: frozenset[int], cursors: Iterable[MatchCursor]) -> ConstraintState:
    cursors = tuple(sorted(set(cursors)))
    done = [c for c in cursors if c.complete]
    if not done:
        return ConstraintState(completed, cursors)
    # simultaneous completions of different terms keep the lowest index
    pending = min(c.term_index for c in done)
    tail = tuple(c for c in cursors if not c.complete)
    return ConstraintState(completed, (), pending, tail)


def decide(
    state: ConstraintState,
    token: TokenInfo,
    trie: Trie,
    is_eos: bool = False,
    boundary: bool | None = None,
) -> LevelAction:
    """Route ``token`` appended to a hypothesis in ``state``.

    ``boundary`` overrides ``token.begins_word`` (the first generated token
    is always at a word boundary). EOS counts as a boundary.
    """
    at_boundary = is_eos or (token.begins_word if boundary is None else boundary)
    all_terms = trie.term_indices

    if state.pending is not None:
        if at_boundary:
            completed = state.completed | {state.pending}
            if is_eos:
                return LevelAction(Move.STAY, ConstraintState(completed), 4)
            open_terms = all_terms - completed
            live_tail = [c for c in state.tail if c.term_index in open_terms]
            cont = step(trie, live_tail, token, open_terms, boundary=True) if live_tail else None
            starts = step(trie, None, token, open_terms, boundary=True)
            found = (cont.cursors if cont else ()) + starts.cursors
            if found:
                return LevelAction(Move.UP, _settle(completed, found), 1)
            return LevelAction(Move.STAY, ConstraintState(completed), 4)
        if state.tail:
            cont = step(trie, state.tail, token, (), boundary=False)
            if cont.matched:
                # overrun continues a longer alternative: behaves like case 5
                return LevelAction(Move.STAY, _settle(state.completed, cont.cursors), 5)
        return LevelAction(Move.DOWN, ConstraintState(state.completed), 7)

    open_terms = all_terms - state.completed

    if state.cursor:
        if is_eos:
            return LevelAction(Move.DOWN, ConstraintState(state.completed), 8)
        cont = step(trie, state.cursor, token, open_terms, boundary=at_boundary)
        starts = step(trie, None, token, open_terms, boundary=at_boundary)
        if cont.matched:
            return LevelAction(
                Move.STAY, _settle(state.completed, cont.cursors + starts.cursors), 5
            )
        if starts.matched:
            return LevelAction(Move.STAY, _settle(state.completed, starts.cursors), 6)
        return LevelAction(Move.DOWN, ConstraintState(state.completed), 8)

    if not is_eos:
        starts = step(trie, None, token, open_terms, boundary=at_boundary)
        if starts.matched:
            return LevelAction(Move.UP, _settle(state.completed, starts.cursors), 2)
    return LevelAction(Move.STAY, state, 3)


TraceFn = Callable[[ConstraintState, TokenInfo, LevelAction], None]


class Distributor:
    """Memoising front end to :func:`decide` for one decode."""

    def __init__(self, trie: Trie, vocab: Vocabulary, trace: TraceFn | None = None) -> None:
        self.trie = trie
        self.vocab = vocab
        self.trace = trace
        self._cache: dict[tuple[ConstraintState, int, bool], LevelAction] = {}

    def __call__(self, state: ConstraintState, token_id: int, first: bool = False) -> LevelAction:
        key = (state, token_id, first)
        action = self._cache.get(key)
        if action is None:
            tok = self.vocab[token_id]
            is_eos = token_id == self.vocab.eos
            action = decide(
                state, tok, self.trie, is_eos=is_eos, boundary=True if first else None
            )
            self._cache[key] = action
        if self.trace is not None:
            self.trace(state, self.vocab[token_id], action)
        return action

    def replay(self, token_ids: Iterable[int]) -> ConstraintState:
        """Run the distributor along a generated sequence (BOS excluded)."""
        state = INITIAL_STATE
        for i, tid in enumerate(token_ids):
            state = self(state, tid, first=i == 0).new_state
        return state
