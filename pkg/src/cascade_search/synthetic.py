"""Synthetic instances for tests, acceptance runs and sweep demos.

Two families:

* ``random_tiny_instance`` - a handful of tokens, a random n-gram table and
  up to two terms; small enough for exhaustive enumeration.
* ``toy_corpus`` - a translation-like corpus. Every sentence has its own
  bigram model that prefers a synonym over the required term, so plain
  decoding misses some terms and guidance or cascading recovers them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .metrics import matched_count
from .scorer import PerTaskScorer, TableScorer
from .term_trie import TermList
from .vocab import Vocabulary, VocabError


@dataclass
class TinyInstance:
    vocab: Vocabulary
    scorer: TableScorer
    terms: TermList
    max_len: int

    def prefix_count(self) -> int:
        """Number of distinct non-EOS prefixes a search can ever hold."""
        n = len(self.vocab) - 3
        return sum(n**i for i in range(self.max_len - 1))


def _random_probs(rng: np.random.Generator, vocab: Vocabulary) -> list[float]:
    p = rng.dirichlet(np.full(len(vocab), 0.8))
    p[[vocab.bos, vocab.pad]] = 0.0
    p = p / p.sum()
    return list(p)


def _suffix_clash(terms: TermList) -> bool:
    """True if an alternative of one term ends another term's alternative
    on a word boundary (both would complete on the same token)."""
    for a in terms:
        for b in terms:
            if a.index == b.index:
                continue
            for x in a.targets:
                for y in b.targets:
                    if x == y or x.endswith(" " + y):
                        return True
    return False


def random_tiny_instance(
    rng: np.random.Generator,
    n_tokens: int = 3,
    max_len: int = 6,
    n_terms: int = 2,
    order: int | None = None,
    max_tries: int = 200,
) -> TinyInstance:
    """Random vocabulary over the alphabet {a, b}, random table scorer, terms.

    Term targets are built from token surfaces so that most are feasible.
    """
    for _ in range(max_tries):
        entries: set[tuple[str, bool]] = set()
        while len(entries) < n_tokens:
            text = "".join(rng.choice(["a", "b"], size=rng.integers(1, 3)))
            entries.add((text, bool(rng.random() < 0.6)))
        entries_list = sorted(entries)
        if not any(w for _, w in entries_list):
            continue
        vocab = Vocabulary.from_entries(entries_list)
        ord_ = order or int(rng.integers(1, 3))
        table = {}
        regular = list(range(3, len(vocab)))
        contexts = [(vocab.bos,)] + [(t,) for t in regular]
        if ord_ == 2:
            contexts += [(a, b) for a in [vocab.bos, *regular] for b in regular]
        for ctx in contexts:
            table[ctx] = _random_probs(rng, vocab)
        scorer = TableScorer(ord_, table, _random_probs(rng, vocab), pad=vocab.pad)

        pairs = []
        for i in range(n_terms):
            alts = []
            for _ in range(int(rng.integers(1, 3))):
                n_words = 1 if rng.random() < 0.75 else 2
                words = []
                for _ in range(n_words):
                    pieces = rng.choice([t for t, _ in entries_list], size=rng.integers(1, 3))
                    words.append("".join(pieces))
                alts.append(" ".join(words))
            alts = list(dict.fromkeys(alts))
            pairs.append((f"src{i}", alts))
        terms = TermList.from_pairs(pairs)
        if _suffix_clash(terms):
            continue
        return TinyInstance(vocab, scorer, terms, max_len)
    raise RuntimeError("could not draw a valid tiny instance")


# -- toy translation corpus --------------------------------------------------

COMMON_WORDS = (
    "the", "a", "new", "case", "report", "was", "is", "in", "of", "and",
    "people", "said", "we", "it", "today", "health", "city", "all",
)
SYLLABLES = ("ra", "mo", "zi", "ta", "ne", "lu", "ko", "pe")


def toy_vocabulary() -> Vocabulary:
    entries: list[tuple[str, bool]] = [(w, True) for w in COMMON_WORDS]
    for s in SYLLABLES:
        entries += [(s, True), (s, False)]
    # some two-syllable pieces give terms several tokenizations
    for a, b in zip(SYLLABLES, SYLLABLES[1:] + SYLLABLES[:1]):
        entries += [(a + b, True), (a + b, False)]
    return Vocabulary.from_entries(entries)


@dataclass
class ToySentence:
    id: str
    reference: str
    source: str
    terms: TermList
    scorer: TableScorer
    witness: list[int]
    max_len: int


def _term_word(rng: np.random.Generator, used: set[str]) -> str:
    free = [s for s in SYLLABLES if s not in used]
    sylls = list(rng.choice(free, size=int(rng.integers(2, 4)), replace=False))
    used.update(sylls)
    return "".join(sylls)


def _segmentations(word: str, vocab: Vocabulary) -> list[list[int]]:
    """All segmentations of ``word`` into vocabulary tokens (first token word-initial)."""
    out: list[list[int]] = []

    def rec(pos: int, acc: list[int]) -> None:
        if pos == len(word):
            out.append(acc)
            return
        for tok in vocab.tokens:
            if vocab.is_special(tok.id) or tok.begins_word != (pos == 0):
                continue
            if word.startswith(tok.text, pos):
                rec(pos + len(tok.text), acc + [tok.id])

    rec(0, [])
    return out


def toy_sentence(
    rng: np.random.Generator,
    vocab: Vocabulary,
    sid: str,
    n_terms: int,
    length: int = 6,
    slack: int = 4,
) -> ToySentence:
    V = len(vocab)
    words = list(rng.choice(COMMON_WORDS, size=length + n_terms, replace=False))
    path_words, synonyms = words[:length], words[length:]
    slots = sorted(rng.choice(np.arange(1, length + 1), size=n_terms, replace=False))
    used: set[str] = set()
    targets = [_term_word(rng, used) for _ in range(n_terms)]

    # model path: synonyms inserted at the slots; reference: targets instead
    model_words: list[str] = []
    ref_words: list[str] = []
    for pos in range(length + 1):
        for t_i, slot in enumerate(slots):
            if slot == pos:
                model_words.append(synonyms[t_i])
                ref_words.append(targets[t_i])
        if pos < length:
            model_words.append(path_words[pos])
            ref_words.append(path_words[pos])
    model_ids = [vocab.lookup(w, True) for w in model_words]

    rows: dict[tuple[int, ...], np.ndarray] = {}

    def row(ctx: int) -> np.ndarray:
        return rows.setdefault((ctx,), np.zeros(V))

    starts = {i: {seg[0] for seg in _segmentations(t, vocab)} for i, t in enumerate(targets)}
    prev = [vocab.bos] + model_ids
    nxt = model_ids + [vocab.eos]
    for ctx, follow in zip(prev, nxt):
        r = row(ctx)
        r[follow] += rng.uniform(0.45, 0.75)
        for i in range(n_terms):
            lift = rng.uniform(0.1, 0.4) if follow == vocab.lookup(synonyms[i], True) else 0.01
            for s in sorted(starts[i]):
                r[s] += lift / len(starts[i])
    # inside a term, each piece leads on through the remaining characters
    for i, t in enumerate(targets):
        after = nxt[model_ids.index(vocab.lookup(synonyms[i], True))]
        for seg in _segmentations(t, vocab):
            for a, b in zip(seg, seg[1:] + [after]):
                row(a)[b] += rng.uniform(0.3, 0.6)
    default = np.full(V, 1.0)
    default[vocab.eos] = V / 3
    for ctx, r in list(rows.items()):
        r += rng.uniform(0.002, 0.02, size=V)
        rows[ctx] = r
    table = {}
    for ctx, r in rows.items():
        r[[vocab.bos, vocab.pad]] = 0.0
        table[ctx] = r / r.sum()
    default[[vocab.bos, vocab.pad]] = 0.0
    scorer = TableScorer(1, table, default / default.sum(), pad=vocab.pad)

    terms = TermList.from_pairs((f"S{t}", [t]) for t in targets)
    witness = [vocab.bos]
    for w in ref_words:
        witness += vocab.canonical_tokenize(w)
    witness.append(vocab.eos)
    return ToySentence(
        id=sid,
        reference=" ".join(ref_words),
        source=" ".join(w.upper() for w in ref_words),
        terms=terms,
        scorer=scorer,
        witness=witness,
        max_len=len(witness) + slack,
    )


def toy_corpus(
    n: int = 100,
    seed: int = 0,
    term_counts: Sequence[int] = (0, 1, 1, 1, 2, 2),
    length: int = 6,
) -> tuple[Vocabulary, list[ToySentence]]:
    rng = np.random.default_rng(seed)
    vocab = toy_vocabulary()
    sents = [
        toy_sentence(rng, vocab, f"s{i:03d}", int(rng.choice(term_counts)), length)
        for i in range(n)
    ]
    return vocab, sents


def certify_feasible(sent: ToySentence, vocab: Vocabulary) -> bool:
    """Check the witness sequence: fits max_len, has positive probability and
    contains every term at word boundaries."""
    w = sent.witness
    if len(w) > sent.max_len:
        return False
    for i in range(1, len(w)):
        if not np.isfinite(sent.scorer.log_probs((), w[:i])[w[i]]):
            return False
    try:
        text = vocab.detokenize(w)
    except VocabError:
        return False
    return matched_count(text, sent.terms) == len(sent.terms)


def toy_scorer(sents: Sequence[ToySentence]) -> PerTaskScorer:
    return PerTaskScorer({s.id: s.scorer for s in sents})
