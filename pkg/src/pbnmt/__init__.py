"""Phrase-based decoding with batched neural sequence scorers."""

from .config import ConfigError, DecoderConfig, load_decoder
from .decoder import Decoder, DecodingError, NBestList
from .scorer import NeuralScorer, Vocab

__all__ = ["ConfigError", "Decoder", "DecoderConfig", "DecodingError", "NBestList",
           "NeuralScorer", "Vocab", "load_decoder"]

__version__ = "0.1.0"
