"""Vocabulary, token surface forms and detokenization.

A token carries its surface characters and a ``begins_word`` flag, which
plays the role of the leading-space marker of subword tokenizers. Text is
rebuilt by joining token surfaces and inserting one space before every
word-initial token.
"""

from __future__ import annotations

import json
import operator
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence


class VocabError(ValueError):
    """Raised for invalid vocabularies, unknown ids or untokenizable text."""


@dataclass(frozen=True)
class TokenInfo:
    id: int
    text: str
    begins_word: bool


class Vocabulary:
    """Immutable ordered token inventory with BOS/EOS/PAD specials."""

    def __init__(self, tokens: Iterable[TokenInfo], bos: int, eos: int, pad: int) -> None:
        self.tokens: tuple[TokenInfo, ...] = tuple(tokens)
        self.bos, self.eos, self.pad = bos, eos, pad
        n = len(self.tokens)
        for i, tok in enumerate(self.tokens):
            if tok.id != i:
                raise VocabError(f"token ids must be dense: position {i} has id {tok.id}")
        specials = (bos, eos, pad)
        if len(set(specials)) != 3:
            raise VocabError("bos, eos and pad must be distinct")
        for s in specials:
            if not 0 <= s < n:
                raise VocabError(f"special id {s} out of range for vocabulary of size {n}")
        seen: dict[tuple[str, bool], int] = {}
        for tok in self.tokens:
            if tok.id in specials:
                continue
            if not tok.text:
                raise VocabError(f"token {tok.id} has empty text")
            if any(ch.isspace() for ch in tok.text):
                raise VocabError(f"token {tok.id} text {tok.text!r} contains whitespace")
            key = (tok.text, tok.begins_word)
            if key in seen:
                raise VocabError(f"tokens {seen[key]} and {tok.id} share text and word flag {key}")
            seen[key] = tok.id
        self._index = seen
        # longest surface first, ids ascending, per word flag
        self._by_flag: dict[bool, list[TokenInfo]] = {
            flag: sorted(
                (t for t in self.tokens if t.id not in specials and t.begins_word == flag),
                key=lambda t: (-len(t.text), t.id),
            )
            for flag in (True, False)
        }

    @classmethod
    def from_entries(
        cls,
        entries: Sequence[tuple[str, bool]],
        specials: Sequence[str] = ("<s>", "</s>", "<pad>"),
    ) -> Vocabulary:
        """Build a vocabulary with the three specials first, then ``entries``."""
        tokens = [TokenInfo(i, "", False) for i in range(len(specials))]
        tokens += [TokenInfo(len(specials) + i, t, w) for i, (t, w) in enumerate(entries)]
        return cls(tokens, bos=0, eos=1, pad=2)

    def __len__(self) -> int:
        return len(self.tokens)

    def __getitem__(self, token_id: int) -> TokenInfo:
        return self.tokens[token_id]

    @property
    def specials(self) -> frozenset[int]:
        return frozenset((self.bos, self.eos, self.pad))

    def is_special(self, token_id: int) -> bool:
        return token_id in (self.bos, self.eos, self.pad)

    def lookup(self, text: str, begins_word: bool) -> int:
        try:
            return self._index[(text, begins_word)]
        except KeyError:
            raise VocabError(f"no token {text!r} with begins_word={begins_word}") from None

    def detokenize(self, token_ids: Sequence[int]) -> str:
        out: list[str] = []
        n = len(self.tokens)
        for pos, tid in enumerate(token_ids):
            try:
                tid = operator.index(tid)
            except TypeError:
                raise VocabError(f"non-integer token at position {pos}: {tid!r}") from None
            if not 0 <= tid < n:
                raise VocabError(f"unknown token id {tid} at position {pos}")
            if self.is_special(tid):
                continue
            tok = self.tokens[tid]
            if tok.begins_word and out:
                out.append(" ")
            out.append(tok.text)
        return "".join(out)

    def greedy_segment(self, text: str, begins_word: bool, offset: int = 0) -> list[int]:
        """Greedy longest-match segmentation of a single word fragment.

        The first piece uses word-initial tokens when ``begins_word`` is set;
        every later piece uses continuation tokens. ``offset`` only shifts
        the character positions reported in errors.
        """
        ids: list[int] = []
        pos = 0
        flag = begins_word
        while pos < len(text):
            for tok in self._by_flag[flag]:
                if text.startswith(tok.text, pos):
                    ids.append(tok.id)
                    pos += len(tok.text)
                    break
            else:
                raise VocabError(
                    f"cannot cover {text[pos:]!r} starting at character {offset + pos}"
                )
            flag = False
        return ids

    def canonical_tokenize(self, s: str) -> list[int]:
        if not s:
            raise VocabError("cannot tokenize an empty string")
        ids: list[int] = []
        pos = 0
        for word in s.split(" "):
            if not word:
                raise VocabError(f"empty word at character {pos} (repeated or edge space)")
            ids += self.greedy_segment(word, True, offset=pos)
            pos += len(word) + 1
        return ids

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "tokens": [{"text": t.text, "begins_word": t.begins_word} for t in self.tokens],
            "bos": self.bos,
            "eos": self.eos,
            "pad": self.pad,
        }

    @classmethod
    def from_json(cls, data: dict) -> Vocabulary:
        try:
            tokens = [
                TokenInfo(i, str(t["text"]), bool(t["begins_word"]))
                for i, t in enumerate(data["tokens"])
            ]
            return cls(tokens, bos=int(data["bos"]), eos=int(data["eos"]), pad=int(data["pad"]))
        except (KeyError, TypeError) as exc:
            raise VocabError(f"malformed vocabulary: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> Vocabulary:
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, ensure_ascii=False, indent=1)
