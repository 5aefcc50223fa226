from .hypothesis import Hypothesis, Stack, TranslationOption, recombination_key
from .nbest import (Derivation, NBestError, NBestList, Segment, extract_nbest, format_nbest,
                    forced_scores, parse_nbest_line, rescore_nbest)
from .search import Decoder, DecodingError, SentenceStats, StackStats

__all__ = [
    "Decoder", "DecodingError", "Derivation", "Hypothesis", "NBestError", "NBestList", "Segment",
    "SentenceStats", "Stack", "StackStats", "TranslationOption", "extract_nbest", "forced_scores",
    "format_nbest", "parse_nbest_line", "recombination_key", "rescore_nbest",
]
