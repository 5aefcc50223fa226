"""Phrase-based feature functions and the log-linear model."""

from __future__ import annotations

import collections
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

LN10 = math.log(10.0)
# ARPA convention for log10(0)
ARPA_ZERO = -99.0

# Feature value of one source word copied through untranslated.
UNKNOWN_WORD_PENALTY = -10.0


class FeatureError(ValueError):
    pass


# ---------------------------------------------------------------------------
# phrase table


@dataclass(frozen=True)
class PhraseTableEntry:
    source: tuple[str, ...]
    target: tuple[str, ...]
    scores: tuple[float, ...]


class PhraseTable:
    """Phrase pairs indexed by their exact source token sequence."""

    def __init__(self, entries: Iterable[PhraseTableEntry] = ()):
        self._by_source: dict[tuple[str, ...], dict[tuple[str, ...], PhraseTableEntry]] = {}
        self.num_scores: int | None = None
        self.max_source_length = 0
        for entry in entries:
            self.add(entry)

    def add(self, entry: PhraseTableEntry) -> None:
        if not entry.source or not entry.target:
            raise FeatureError("phrase table entries need non-empty source and target")
        if self.num_scores is None:
            self.num_scores = len(entry.scores)
        elif len(entry.scores) != self.num_scores:
            raise FeatureError(
                f"inconsistent score arity: expected {self.num_scores}, got {len(entry.scores)}"
            )
        bucket = self._by_source.setdefault(entry.source, {})
        old = bucket.get(entry.target)
        if old is not None:
            logger.warning(
                "duplicate phrase pair %s ||| %s; keeping the higher-scoring one",
                " ".join(entry.source),
                " ".join(entry.target),
            )
            if sum(old.scores) >= sum(entry.scores):
                return
        bucket[entry.target] = entry
        self.max_source_length = max(self.max_source_length, len(entry.source))

    def lookup(self, source: Sequence[str]) -> list[PhraseTableEntry]:
        return list(self._by_source.get(tuple(source), {}).values())

    def __iter__(self):
        for bucket in self._by_source.values():
            yield from bucket.values()

    def __len__(self):
        return sum(len(b) for b in self._by_source.values())

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for e in sorted(self, key=lambda e: (e.source, e.target)):
                scores = " ".join(repr(s) for s in e.scores)
                f.write(f"{' '.join(e.source)} ||| {' '.join(e.target)} ||| {scores}\n")


def parse_phrase_line(line: str) -> PhraseTableEntry:
    fields = [f.strip() for f in line.split("|||")]
    if len(fields) < 3:
        raise FeatureError("expected 'src ||| tgt ||| scores'")
    source, target = tuple(fields[0].split()), tuple(fields[1].split())
    if not source or not target:
        raise FeatureError("empty source or target phrase")
    try:
        scores = tuple(float(s) for s in fields[2].split())
    except ValueError as exc:
        raise FeatureError(f"bad score field: {exc}") from None
    return PhraseTableEntry(source, target, scores)


def load_phrase_table(path) -> PhraseTable:
    """Read a Moses-style text phrase table; extra fields after the scores are ignored."""
    table = PhraseTable()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                table.add(parse_phrase_line(line))
            except FeatureError as exc:
                raise FeatureError(f"{path}:{lineno}: {exc}") from None
    return table


# ---------------------------------------------------------------------------
# n-gram language model


class NGramLM:
    """Back-off n-gram model over natural-log probabilities.

    Training uses add-k smoothing where the prior is the next-lower-order
    distribution::

        P(w | h) = (c(h, w) + k |V| P(w | h')) / (c(h) + k |V|)

    which is exactly representable in ARPA form: seen n-grams store the full
    value and each seen history stores the back-off weight
    ``k |V| / (c(h) + k |V|)``. Every conditional distribution sums to one.
    """

    def __init__(self, order: int, probs: dict, backoffs: dict):
        self.order = order
        self.probs = probs  # tuple(ngram) -> ln p
        self.backoffs = backoffs  # tuple(history) -> ln bow
        self.vocab = frozenset(g[0] for g in probs if len(g) == 1 and g[0] != BOS)
        if UNK not in self.vocab:
            raise FeatureError("language model has no <unk> unigram")

    @classmethod
    def train(cls, sentences: Iterable[Sequence[str]], order: int = 3, k: float = 0.1) -> "NGramLM":
        if order < 1:
            raise FeatureError("order must be >= 1")
        if k < 0:
            raise FeatureError("k must be >= 0")
        counts: list[collections.Counter] = [collections.Counter() for _ in range(order + 1)]
        vocab = {EOS, UNK}
        for sent in sentences:
            words = [BOS] + list(sent) + [EOS]
            vocab.update(sent)
            for i in range(1, len(words)):
                for m in range(1, order + 1):
                    if i - m + 1 < 0:
                        break
                    counts[m][tuple(words[i - m + 1 : i + 1])] += 1
        V = len(vocab)
        total = sum(counts[1].values())
        probs: dict = {}
        backoffs: dict = {}
        uni = {}
        for w in sorted(vocab):
            p = (counts[1][(w,)] + k) / (total + k * V)
            uni[w] = p
            probs[(w,)] = math.log(p) if p > 0 else ARPA_ZERO * LN10
        probs[(BOS,)] = ARPA_ZERO * LN10

        lower = {(w,): p for w, p in uni.items()}
        for m in range(2, order + 1):
            context_total: collections.Counter = collections.Counter()
            for gram, c in counts[m].items():
                context_total[gram[:-1]] += c
            current = {}
            for gram in sorted(counts[m]):
                h = gram[:-1]
                denom = context_total[h] + k * V
                # every suffix of a seen n-gram is itself a seen lower-order n-gram
                p = (counts[m][gram] + k * V * lower[gram[1:]]) / denom
                current[gram] = p
                probs[gram] = math.log(p)
            for h, c in context_total.items():
                bow = k * V / (c + k * V)
                backoffs[h] = math.log(bow) if bow > 0 else ARPA_ZERO * LN10
            lower.update(current)
        return cls(order, probs, backoffs)

    def _map(self, token: str) -> str:
        return token if token in self.vocab or token == BOS else UNK

    def score(self, history: Sequence[str], word: str) -> float:
        """ln P(word | history), backing off to shorter histories when unseen."""
        w = self._map(word)
        h = tuple(self._map(t) for t in self.state(history))
        penalty = 0.0
        for start in range(len(h) + 1):
            ctx = h[start:]
            p = self.probs.get(ctx + (w,))
            if p is not None:
                return penalty + p
            penalty += self.backoffs.get(ctx, 0.0)
        raise AssertionError("unigram table is missing a vocabulary word")

    def state(self, history: Sequence[str]) -> tuple[str, ...]:
        """The part of ``history`` that can influence future scores."""
        if self.order == 1:
            return ()
        return tuple(history[max(0, len(history) - (self.order - 1)) :])

    # ARPA text, log10 values written with full repr precision

    def save_arpa(self, path) -> None:
        by_order: dict[int, list] = collections.defaultdict(list)
        for gram in self.probs:
            by_order[len(gram)].append(gram)
        with open(path, "w", encoding="utf-8") as f:
            f.write("\\data\\\n")
            for m in range(1, self.order + 1):
                f.write(f"ngram {m}={len(by_order[m])}\n")
            for m in range(1, self.order + 1):
                f.write(f"\n\\{m}-grams:\n")
                for gram in sorted(by_order[m]):
                    line = f"{repr(self.probs[gram] / LN10)}\t{' '.join(gram)}"
                    if gram in self.backoffs:
                        line += f"\t{repr(self.backoffs[gram] / LN10)}"
                    f.write(line + "\n")
            f.write("\n\\end\\\n")

    @classmethod
    def load_arpa(cls, path) -> "NGramLM":
        probs: dict = {}
        backoffs: dict = {}
        order = 0
        section = None
        with open(path, encoding="utf-8") as f:
            for lineno, raw in enumerate(f, 1):
                line = raw.strip()
                if not line or line == "\\data\\" or line.startswith("ngram "):
                    continue
                if line == "\\end\\":
                    break
                if line.startswith("\\") and line.endswith("-grams:"):
                    section = int(line[1:].split("-")[0])
                    order = max(order, section)
                    continue
                if section is None:
                    raise FeatureError(f"{path}:{lineno}: n-gram line outside a section")
                parts = line.split("\t") if "\t" in line else line.split()
                if "\t" in line:
                    gram = tuple(parts[1].split())
                    bow = parts[2] if len(parts) > 2 else None
                else:
                    gram = tuple(parts[1 : 1 + section])
                    bow = parts[1 + section] if len(parts) > 1 + section else None
                if len(gram) != section:
                    raise FeatureError(f"{path}:{lineno}: expected a {section}-gram")
                probs[gram] = float(parts[0]) * LN10
                if bow is not None:
                    backoffs[gram] = float(bow) * LN10
        if not order:
            raise FeatureError(f"{path}: no n-gram sections")
        return cls(order, probs, backoffs)


def lm_score(history: Sequence[str], word: str, lm: NGramLM) -> float:
    return lm.score(history, word)


# ---------------------------------------------------------------------------
# distortion and the log-linear model


def distortion_cost(prev_span_end: int, next_span_start: int) -> float:
    """Linear jump cost; ``prev_span_end`` is the exclusive end of the previous span."""
    return -float(abs(next_span_start - prev_span_end))


def within_distortion_limit(prev_span_end: int, next_span_start: int, limit: int | None) -> bool:
    return limit is None or limit < 0 or abs(next_span_start - prev_span_end) <= limit


def feature_names(num_tm_scores: int, num_scorers: int) -> list[str]:
    """Canonical feature order used in hypothesis score vectors."""
    return (
        [f"tm{i}" for i in range(num_tm_scores)]
        + ["lm", "distortion", "word_penalty", "unk"]
        + [f"nmt{i}" for i in range(num_scorers)]
    )


class WeightVector(Mapping[str, float]):
    """Named log-linear weights, read from ``name=value`` lines."""

    def __init__(self, weights: Mapping[str, float]):
        self._w = {str(k): float(v) for k, v in weights.items()}

    def __getitem__(self, name):
        try:
            return self._w[name]
        except KeyError:
            raise FeatureError(f"missing weight for feature {name}") from None

    def __iter__(self):
        return iter(self._w)

    def __len__(self):
        return len(self._w)

    def __repr__(self):
        return f"WeightVector({self._w!r})"

    def vector(self, names: Sequence[str]) -> tuple[float, ...]:
        return tuple(self[n] for n in names)

    def replace(self, **updates: float) -> "WeightVector":
        return WeightVector({**self._w, **updates})

    def to_text(self) -> str:
        return "".join(f"{k}={v!r}\n" for k, v in self._w.items())

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_text(cls, text: str) -> "WeightVector":
        weights = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FeatureError(f"line {lineno}: expected name=value")
            name, value = (s.strip() for s in line.split("=", 1))
            if name in weights:
                raise FeatureError(f"line {lineno}: duplicate weight {name}")
            weights[name] = float(value)
        return cls(weights)

    @classmethod
    def load(cls, path) -> "WeightVector":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def dot(weights: Sequence[float], features: Sequence[float]) -> float:
    """Fixed left-to-right accumulation, so every caller gets identical bits."""
    total = 0.0
    for w, f in zip(weights, features):
        total += w * f
    return total


def total_score(features: Mapping[str, float] | Sequence[float], weights: WeightVector,
                names: Sequence[str] | None = None) -> float:
    """Weighted sum of a feature breakdown.

    ``features`` is either a name->value mapping or a sequence aligned with
    ``names``. Hypotheses and derivations can be passed directly.
    """
    if hasattr(features, "features") and names is None:
        names = features.feature_names
        features = features.features
    if isinstance(features, Mapping):
        names = list(features)
        values = [features[n] for n in names]
    else:
        if names is None:
            raise FeatureError("feature names required for a plain vector")
        values = list(features)
    return dot(weights.vector(names), values)
