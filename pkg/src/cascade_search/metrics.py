"""Terminology match accuracy (exact and lemmatized) and corpus BLEU."""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .term_trie import TermList


class MetricError(ValueError):
    pass


class Lemmatizer:
    """Word-by-word table lemmatizer; unknown words are their own lemma."""

    def __init__(self, table: Mapping[str, str] | None = None) -> None:
        table = dict(table or {})
        for w, lemma in table.items():
            if table.get(lemma, lemma) != lemma:
                raise MetricError(
                    f"lemma table is not idempotent: {w!r} -> {lemma!r} -> {table[lemma]!r}"
                )
        self.table = table

    def __call__(self, word: str) -> str:
        return self.table.get(word, word)


IDENTITY = Lemmatizer()


@dataclass(frozen=True)
class SentenceEval:
    matched: int
    total: int
    matched_lemma: int


def _words(text: str, ignore_case: bool, lemmatizer: Lemmatizer | None) -> list[str]:
    words = text.lower().split() if ignore_case else text.split()
    if lemmatizer is not None:
        words = [lemmatizer(w) for w in words]
    return words


def _contains(words: Sequence[str], needle: Sequence[str]) -> bool:
    n = len(needle)
    if n == 0:
        return False
    return any(list(words[i : i + n]) == list(needle) for i in range(len(words) - n + 1))


def term_matched(
    hypothesis: str,
    targets: Iterable[str],
    ignore_case: bool = False,
    lemmatizer: Lemmatizer | None = None,
) -> bool:
    """True iff some target occurs in the hypothesis as a run of whole words."""
    words = _words(hypothesis, ignore_case, lemmatizer)
    return any(_contains(words, _words(t, ignore_case, lemmatizer)) for t in targets)


def matched_count(
    hypothesis: str,
    terms: TermList,
    ignore_case: bool = False,
    lemmatizer: Lemmatizer | None = None,
) -> int:
    return sum(term_matched(hypothesis, e.targets, ignore_case, lemmatizer) for e in terms)


def evaluate_sentence(
    hypothesis: str,
    terms: TermList,
    lemmatizer: Lemmatizer = IDENTITY,
    ignore_case: bool = False,
) -> SentenceEval:
    return SentenceEval(
        matched_count(hypothesis, terms, ignore_case),
        len(terms),
        matched_count(hypothesis, terms, ignore_case, lemmatizer),
    )


def _ratio(matched: int, total: int) -> float:
    if total == 0:
        warnings.warn("corpus has no terminology entries; match accuracy is vacuously 1.0")
        return 1.0
    return matched / total


def ema(corpus: Iterable[tuple[str, TermList]], ignore_case: bool = False) -> float:
    """Corpus-level exact match accuracy (micro-averaged over term entries)."""
    matched = total = 0
    for hyp, terms in corpus:
        matched += matched_count(hyp, terms, ignore_case)
        total += len(terms)
    return _ratio(matched, total)


def lma(
    corpus: Iterable[tuple[str, TermList]],
    lemmatizer: Lemmatizer,
    ignore_case: bool = False,
) -> float:
    matched = total = 0
    for hyp, terms in corpus:
        matched += matched_count(hyp, terms, ignore_case, lemmatizer)
        total += len(terms)
    return _ratio(matched, total)


def _ngrams(words: Sequence[str], n: int) -> Counter:
    return Counter(tuple(words[i : i + n]) for i in range(len(words) - n + 1))


def bleu(
    hypotheses: Sequence[str],
    references: Sequence[str],
    max_order: int = 4,
    smooth: bool = False,
) -> float:
    """Corpus BLEU on whitespace tokens, in [0, 100].

    Without ``smooth`` any order with zero matches gives 0. With ``smooth``
    orders >= 2 use add-one counts.
    """
    if len(hypotheses) != len(references):
        raise MetricError(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise MetricError("empty corpus")
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h, r = hyp.split(), ref.split()
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, max_order + 1):
            hc, rc = _ngrams(h, n), _ngrams(r, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += max(len(h) - n + 1, 0)
    if hyp_len == 0:
        return 0.0
    log_p = 0.0
    for n in range(max_order):
        m, t = matches[n], totals[n]
        if smooth and n > 0:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            return 0.0
        log_p += math.log(m / t)
    bp = 1.0 if hyp_len > ref_len else math.exp(1 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_p / max_order)
