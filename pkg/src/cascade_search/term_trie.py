"""Character-level trie over terminology target strings.

Matching is done on characters rather than on a fixed tokenization, so any
segmentation of a target into vocabulary tokens is recognised. A word-initial
token consumes one space of a multi-word target before its own characters.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .vocab import TokenInfo, Vocabulary, VocabError


class TrieError(ValueError):
    pass


class PushStrategy(str, enum.Enum):
    NONE = "none"
    TOKENIZER = "tokenizer"
    LONGEST = "longest"  # strategy A
    ALL = "all"  # strategy B


class Outcome(enum.Enum):
    STARTS = "starts"
    CONTINUES = "continues"
    COMPLETES = "completes"
    NO_MATCH = "no_match"


@dataclass(frozen=True)
class TerminologyEntry:
    source: str
    targets: tuple[str, ...]
    index: int

    def __post_init__(self) -> None:
        if not self.targets:
            raise TrieError(f"term {self.index} ({self.source!r}) has no targets")
        if any(not t for t in self.targets):
            raise TrieError(f"term {self.index} ({self.source!r}) has an empty target")


@dataclass(frozen=True)
class TermList:
    entries: tuple[TerminologyEntry, ...] = ()

    def __post_init__(self) -> None:
        indices = [e.index for e in self.entries]
        if len(set(indices)) != len(indices):
            raise TrieError(f"duplicate term indices: {indices}")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, Sequence[str]]]) -> TermList:
        """``[(source, [target, ...]), ...]`` -> TermList indexed by position."""
        return cls(
            tuple(TerminologyEntry(src, tuple(tgts), i) for i, (src, tgts) in enumerate(pairs))
        )

    @classmethod
    def of(cls, *targets: str | Sequence[str]) -> TermList:
        """Shorthand for tests: each argument is one term (a string or a list of alternatives)."""
        pairs = [(t, [t]) if isinstance(t, str) else (t[0], list(t)) for t in targets]
        return cls.from_pairs(pairs)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i: int) -> TerminologyEntry:
        return self.entries[i]


@dataclass(frozen=True, order=True)
class MatchCursor:
    term_index: int
    target_alternative: int
    char_pos: int
    complete: bool = field(default=False, compare=False)


@dataclass(frozen=True)
class StepResult:
    outcome: Outcome
    cursors: tuple[MatchCursor, ...] = ()

    @property
    def matched(self) -> bool:
        return self.outcome is not Outcome.NO_MATCH

    @property
    def complete(self) -> tuple[MatchCursor, ...]:
        return tuple(c for c in self.cursors if c.complete)

    @property
    def incomplete(self) -> tuple[MatchCursor, ...]:
        return tuple(c for c in self.cursors if not c.complete)


class _Node:
    __slots__ = ("children", "through")

    def __init__(self) -> None:
        self.children: dict[str, _Node] = {}
        # (term, alternative) pairs whose target has this node's prefix
        self.through: set[tuple[int, int]] = set()


class Trie:
    """Read-only trie over every target alternative of a TermList."""

    def __init__(self, terms: TermList, ignore_case: bool = False) -> None:
        self.terms = terms
        self.ignore_case = ignore_case
        self._targets: dict[int, tuple[str, ...]] = {
            e.index: tuple(self._fold(t) for t in e.targets) for e in terms
        }
        self._raw = {e.index: e.targets for e in terms}
        self._root = _Node()
        for e in terms:
            for alt, target in enumerate(self._targets[e.index]):
                node = self._root
                for ch in target:
                    node = node.children.setdefault(ch, _Node())
                    node.through.add((e.index, alt))

    def _fold(self, s: str) -> str:
        return s.lower() if self.ignore_case else s

    @property
    def term_indices(self) -> frozenset[int]:
        return frozenset(self._targets)

    def target(self, term: int, alt: int) -> str:
        try:
            return self._targets[term][alt]
        except (KeyError, IndexError):
            raise TrieError(f"unknown term/alternative ({term}, {alt})") from None

    def raw_target(self, term: int, alt: int) -> str:
        """Target as written, without case folding."""
        self.target(term, alt)
        return self._raw[term][alt]

    def alternatives(self, term: int) -> tuple[str, ...]:
        try:
            return self._targets[term]
        except KeyError:
            raise TrieError(f"unknown term {term}") from None

    def accepts_prefix(self, s: str) -> bool:
        return self._walk(self._fold(s)) is not None

    def _walk(self, s: str) -> _Node | None:
        node = self._root
        for ch in s:
            node = node.children.get(ch)
            if node is None:
                return None
        return node

    def starts(self, text: str, open_terms: Iterable[int]) -> tuple[MatchCursor, ...]:
        """Cursors for every open (term, alternative) having ``text`` as a prefix."""
        if not text:
            return ()
        node = self._walk(self._fold(text))
        if node is None:
            return ()
        open_set = set(open_terms)
        n = len(text)
        return tuple(
            sorted(
                MatchCursor(term, alt, n, n == len(self._targets[term][alt]))
                for term, alt in node.through
                if term in open_set
            )
        )

    def advance(self, cursor: MatchCursor, piece: str) -> MatchCursor | None:
        target = self.target(cursor.term_index, cursor.target_alternative)
        if not piece or not target.startswith(self._fold(piece), cursor.char_pos):
            return None
        pos = cursor.char_pos + len(piece)
        return MatchCursor(cursor.term_index, cursor.target_alternative, pos, pos == len(target))


def build_trie(terms: TermList, ignore_case: bool = False) -> Trie:
    return Trie(terms, ignore_case=ignore_case)


def _as_cursors(cursor: MatchCursor | Sequence[MatchCursor] | None) -> tuple[MatchCursor, ...]:
    if cursor is None:
        return ()
    if isinstance(cursor, MatchCursor):
        return (cursor,)
    return tuple(cursor)


def step(
    trie: Trie,
    cursor: MatchCursor | Sequence[MatchCursor] | None,
    token: TokenInfo,
    open_terms: Iterable[int],
    boundary: bool | None = None,
) -> StepResult:
    """Classify ``token`` against the active cursors, or as a fresh start.

    ``boundary`` overrides ``token.begins_word``; decoders set it for the
    first generated token, which sits at a word boundary whatever its flag.
    """
    cursors = _as_cursors(cursor)
    at_boundary = token.begins_word if boundary is None else boundary
    if not cursors:
        if not at_boundary:
            return StepResult(Outcome.NO_MATCH)
        found = trie.starts(token.text, open_terms)
        if not found:
            return StepResult(Outcome.NO_MATCH)
        done = any(c.complete for c in found)
        return StepResult(Outcome.COMPLETES if done else Outcome.STARTS, found)

    piece = " " + token.text if at_boundary else token.text
    advanced = []
    for c in cursors:
        if c.complete:
            raise TrieError(f"cursor {c} is already complete")
        nxt = trie.advance(c, piece) if token.text else None
        if nxt is not None:
            advanced.append(nxt)
    if not advanced:
        return StepResult(Outcome.NO_MATCH)
    advanced.sort()
    done = any(c.complete for c in advanced)
    return StepResult(Outcome.COMPLETES if done else Outcome.CONTINUES, tuple(advanced))


def guide_tokens(
    trie: Trie,
    vocab: Vocabulary,
    cursor: MatchCursor | Sequence[MatchCursor] | None,
    open_terms: Iterable[int],
    strategy: PushStrategy | str,
) -> frozenset[int]:
    """Token ids to boost: those starting an open term, or continuing the active one."""
    strategy = PushStrategy(strategy)
    if strategy is PushStrategy.NONE:
        return frozenset()
    cursors = _as_cursors(cursor)
    open_terms = frozenset(open_terms)
    if not cursors and not open_terms:
        return frozenset()
    if strategy is PushStrategy.TOKENIZER:
        return _tokenizer_guides(trie, vocab, cursors, open_terms)

    best: dict[tuple[int, int], TokenInfo] = {}
    hits: set[int] = set()
    for tok in vocab.tokens:
        if vocab.is_special(tok.id):
            continue
        res = step(trie, cursors, tok, open_terms)
        if not res.matched:
            continue
        hits.add(tok.id)
        for c in res.cursors:
            key = (c.term_index, c.target_alternative)
            cur = best.get(key)
            if cur is None or len(tok.text) > len(cur.text):
                best[key] = tok
    if strategy is PushStrategy.ALL:
        return frozenset(hits)
    return frozenset(t.id for t in best.values())


def _tokenizer_guides(
    trie: Trie,
    vocab: Vocabulary,
    cursors: tuple[MatchCursor, ...],
    open_terms: frozenset[int],
) -> frozenset[int]:
    if cursors:
        positions = [(c.term_index, c.target_alternative, c.char_pos) for c in cursors]
    else:
        positions = [
            (term, alt, 0)
            for term in sorted(open_terms & trie.term_indices)
            for alt in range(len(trie.alternatives(term)))
        ]
    out: set[int] = set()
    for term, alt, pos in positions:
        rest = trie.raw_target(term, alt)[pos:]
        begins = pos == 0
        if rest.startswith(" "):
            rest, begins = rest[1:], True
        fragment = rest.split(" ", 1)[0]
        if not fragment:
            continue
        try:
            out.add(vocab.greedy_segment(fragment, begins)[0])
        except VocabError:
            continue
    return frozenset(out)
