"""Terminology-constrained decoding: cascaded beam search with logit guidance."""

from .decoders import (
    DecodeConfig,
    DecodeResult,
    Hypothesis,
    beam_search,
    cascaded_beam_search,
    decode,
    finalize,
    grid_beam_search,
)
from .distributor import ConstraintState, LevelAction, Move, decide
from .logit_mod import GuidanceConfig, apply_guidance
from .metrics import Lemmatizer, bleu, ema, lma
from .scorer import Scorer, TableScorer, UniformScorer
from .term_trie import (
    MatchCursor,
    Outcome,
    PushStrategy,
    TermList,
    TerminologyEntry,
    Trie,
    build_trie,
    guide_tokens,
    step,
)
from .vocab import TokenInfo, Vocabulary

__version__ = "0.1.0"

__all__ = [
    "ConstraintState",
    "DecodeConfig",
    "DecodeResult",
    "GuidanceConfig",
    "Hypothesis",
    "Lemmatizer",
    "LevelAction",
    "MatchCursor",
    "Move",
    "Outcome",
    "PushStrategy",
    "Scorer",
    "TableScorer",
    "TermList",
    "TerminologyEntry",
    "TokenInfo",
    "Trie",
    "UniformScorer",
    "Vocabulary",
    "apply_guidance",
    "beam_search",
    "bleu",
    "build_trie",
    "cascaded_beam_search",
    "decide",
    "decode",
    "ema",
    "finalize",
    "grid_beam_search",
    "guide_tokens",
    "lma",
    "step",
]
