"""Light text handling: byte-pair-encoding segmentation and a truecasing toggle.

Subword tokens carry the ``@@`` suffix on every non-final piece of a word,
so ``lo@@ wer`` spells ``lower``.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

MARKER = "@@"


class BPEError(ValueError):
    pass


@dataclass(frozen=True)
class MergeTable:
    """Ordered merge rules; the rank of a rule is its index."""

    merges: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        ranks = {}
        for i, pair in enumerate(self.merges):
            if pair in ranks:
                raise BPEError(f"duplicate merge rule {pair[0]} {pair[1]}")
            ranks[pair] = i
        object.__setattr__(self, "_ranks", ranks)

    def __len__(self):
        return len(self.merges)

    def rank(self, pair: tuple[str, str]) -> int | None:
        return self._ranks.get(pair)

    def vocabulary(self, alphabet: Iterable[str]) -> set[str]:
        """Symbols reachable from ``alphabet`` through the merge rules."""
        vocab = set(alphabet)
        for left, right in self.merges:
            vocab.add(left + right)
        return vocab

    def save(self, path) -> None:
        Path(path).write_text("".join(f"{a} {b}\n" for a, b in self.merges), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "MergeTable":
        merges = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise BPEError(f"{path}:{lineno}: expected 'left right', got {line!r}")
            merges.append((parts[0], parts[1]))
        return cls(tuple(merges))


def _word_counts(corpus: Iterable[Sequence[str]]) -> collections.Counter:
    counts: collections.Counter = collections.Counter()
    for sentence in corpus:
        if isinstance(sentence, str):
            sentence = sentence.split()
        counts.update(sentence)
    return counts


def _merge_symbols(symbols: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    out = []
    i = 0
    n = len(symbols)
    while i < n:
        if i + 1 < n and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(symbols[i] + symbols[i + 1])
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def bpe_learn(corpus: Iterable[Sequence[str]], num_merges: int) -> MergeTable:
    """Learn ``num_merges`` merges from a corpus of whitespace-tokenized sentences.

    Pair frequencies are counted over word types weighted by word frequency;
    ties go to the lexicographically smallest pair. Learning stops early when
    no word has two symbols left.
    """
    if num_merges < 0:
        raise BPEError("num_merges must be >= 0")
    counts = _word_counts(corpus)
    if not counts:
        raise BPEError("empty corpus")

    vocab = {tuple(word): freq for word, freq in counts.items()}
    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        stats: collections.Counter = collections.Counter()
        for symbols, freq in vocab.items():
            for pair in zip(symbols, symbols[1:]):
                stats[pair] += freq
        if not stats:
            break
        best_freq = max(stats.values())
        best = min(pair for pair, f in stats.items() if f == best_freq)
        merges.append(best)
        merged: dict[tuple[str, ...], int] = {}
        for symbols, freq in vocab.items():
            new = _merge_symbols(symbols, best) if best[0] in symbols else symbols
            merged[new] = merged.get(new, 0) + freq
        vocab = merged
    return MergeTable(tuple(merges))


def segment_word(word: str, merges: MergeTable) -> list[str]:
    """Split ``word`` into characters and greedily apply the lowest-ranked merge."""
    symbols = tuple(word)
    while len(symbols) > 1:
        ranked = [(merges.rank(p), p) for p in zip(symbols, symbols[1:])]
        ranked = [(r, p) for r, p in ranked if r is not None]
        if not ranked:
            break
        _, pair = min(ranked)
        symbols = _merge_symbols(symbols, pair)
    return list(symbols)


def bpe_apply(sentence: Sequence[str], merges: MergeTable) -> list[str]:
    """Segment every word of ``sentence``; returns subword tokens with ``@@`` markers.

    Tokens that already end in the marker are treated as word fragments, so
    re-applying the same table to segmented output leaves it unchanged.
    """
    if isinstance(sentence, str):
        sentence = sentence.split()
    out: list[str] = []
    for token in sentence:
        continued = token.endswith(MARKER) and len(token) > len(MARKER)
        word = token[: -len(MARKER)] if continued else token
        pieces = segment_word(word, merges)
        out.extend(p + MARKER for p in pieces[:-1])
        out.append(pieces[-1] + MARKER if continued else pieces[-1])
    return out


def bpe_undo(subwords: Sequence[str], strict: bool = True) -> list[str]:
    """Join marked subwords back into words.

    With ``strict=False`` a dangling marker on the last token is dropped
    instead of raising; the decoder uses that when emitting output.
    """
    words: list[str] = []
    pending = ""
    for token in subwords:
        if token.endswith(MARKER):
            pending += token[: -len(MARKER)]
        else:
            words.append(pending + token)
            pending = ""
    if pending:
        if strict:
            raise BPEError("dangling continuation")
        words.append(pending)
    return words


def truecase(sentence: Sequence[str], proper: Iterable[str] = ()) -> list[str]:
    """Lowercase the sentence-initial token unless it is a known proper noun."""
    tokens = list(sentence)
    if tokens and tokens[0] not in set(proper):
        tokens[0] = tokens[0].lower()
    return tokens


def read_corpus(path) -> list[list[str]]:
    with open(path, encoding="utf-8") as f:
        return [line.split() for line in f]
