import pytest

from cascade_search.term_trie import TermList, Trie
from cascade_search.vocab import Vocabulary

COVID_ENTRIES = [
    ("the", True), ("is", True), ("but", True), ("coffee", True), ("cat", True),
    ("C", True), ("CO", True), ("COV", True), ("SAR", True), ("SARS", True),
    ("V", False), ("ID", False), ("VID", False), ("-", False), ("19", False),
    ("-19", False), ("90", False), ("ERT", False), ("S", False), ("-COV", False),
    ("-2", False), ("2", False), ("OV", False),
]


@pytest.fixture
def covid_vocab():
    return Vocabulary.from_entries(COVID_ENTRIES)


@pytest.fixture
def covid_terms():
    return TermList.of("COVID-19", "SARS-COV-2")


@pytest.fixture
def covid_trie(covid_terms):
    return Trie(covid_terms)


def ids(vocab, *spec):
    """Token ids from ``"text"`` (continuation) or ``" text"`` (word-initial)."""
    out = []
    for s in spec:
        if s.startswith(" "):
            out.append(vocab.lookup(s[1:], True))
        else:
            out.append(vocab.lookup(s, False))
    return out


def tok(vocab, s):
    return vocab[ids(vocab, s)[0]]


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
