"""Deterministic desk-scale fixtures: a synthetic language pair with every model
the decoder needs.

A random lexicon maps each source word to one or more target realizations
(one or two target words). Parallel sentences realize source words left to
right with occasional adjacent swaps, so the phrase table learns some
reordering. Phrase pairs are extracted from the word alignment and scored by
relative frequency in both directions.
"""

from __future__ import annotations

import collections
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import DecoderConfig
from .features import NGramLM, PhraseTable, PhraseTableEntry, WeightVector
from .scorer import ModelParams, NeuralScorer, Vocab, init_params, save_model, score_sequence

DEFAULT_WEIGHTS = {
    "tm0": 0.2,
    "tm1": 0.2,
    "lm": 0.5,
    "distortion": 1.0,
    "word_penalty": 0.0,
    "unk": 1.0,
}


@dataclass
class FixtureSizes:
    src_words: int = 24
    tgt_words: int = 48
    max_realizations: int = 3
    two_word_prob: float = 0.15
    swap_prob: float = 0.1
    n_train: int = 300
    n_test: int = 20
    min_len: int = 3
    max_len: int = 8
    max_phrase: int = 3
    lm_order: int = 3
    lm_k: float = 0.1
    emb_size: int = 16
    hidden_size: int = 32
    out_scale: float = 3.0
    num_scorers: int = 1


@dataclass
class Fixture:
    seed: int
    sizes: FixtureSizes
    source_vocab: Vocab
    target_vocab: Vocab
    lexicon: dict[str, list[tuple[str, ...]]]
    train: list[tuple[list[str], list[str], list[tuple[int, int]]]]
    test_sources: list[list[str]]
    test_targets: list[list[str]]
    phrase_table: PhraseTable
    lm: NGramLM
    params: list[ModelParams]
    weights: WeightVector

    def scorers(self) -> list[NeuralScorer]:
        return [NeuralScorer(p, self.source_vocab, self.target_vocab) for p in self.params]

    def weight_vector(self, nmt: float | Sequence[float] = 1.0) -> WeightVector:
        if isinstance(nmt, (int, float)):
            nmt = [float(nmt)] * len(self.params)
        w = dict(self.weights)
        w.update({f"nmt{i}": float(v) for i, v in enumerate(nmt)})
        return WeightVector(w)

    def decoder(self, config: DecoderConfig | None = None, nmt_weight: float | Sequence[float] = 1.0,
                scorers: bool = True):
        from .decoder import Decoder

        config = config or DecoderConfig()
        if not scorers:
            w = WeightVector(dict(self.weights))
            return Decoder(self.phrase_table, self.lm, w, [], config)
        return Decoder(self.phrase_table, self.lm, self.weight_vector(nmt_weight), self.scorers(),
                       config)

    def save(self, directory) -> Path:
        """Write every artifact plus a ready-to-use ``decoder.ini``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        _write_lines(d / "train.src", [s for s, _, _ in self.train])
        _write_lines(d / "train.tgt", [t for _, t, _ in self.train])
        (d / "train.align").write_text(
            "".join(" ".join(f"{i}-{j}" for i, j in a) + "\n" for _, _, a in self.train),
            encoding="utf-8")
        _write_lines(d / "test.src", self.test_sources)
        _write_lines(d / "test.ref", self.test_targets)
        self.phrase_table.save(d / "phrase-table.txt")
        self.lm.save_arpa(d / "lm.arpa")
        self.source_vocab.save(d / "source.vocab")
        self.target_vocab.save(d / "target.vocab")
        names = []
        for i, p in enumerate(self.params):
            name = f"scorer{i}.params"
            save_model(p, d / name)
            names.append(name)
        self.weight_vector().save(d / "weights.txt")
        cfg = DecoderConfig(
            phrase_table="phrase-table.txt", lm="lm.arpa", scorers=names,
            source_vocab="source.vocab", target_vocab="target.vocab", weights="weights.txt",
        )
        (d / "decoder.ini").write_text(cfg.to_text(), encoding="utf-8")
        lines = [f"seed = {self.seed}"] + [f"{k} = {v}" for k, v in asdict(self.sizes).items()]
        (d / "fixture.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        return d


def _write_lines(path, sentences) -> None:
    Path(path).write_text("".join(" ".join(s) + "\n" for s in sentences), encoding="utf-8")


def _zipf(n: int, rng) -> np.ndarray:
    p = 1.0 / np.arange(1, n + 1) ** 0.8
    p = p[rng.permutation(n)]
    return p / p.sum()


def _realize(source, lexicon, lex_probs, sizes, rng):
    blocks = []
    for i, w in enumerate(source):
        k = rng.choice(len(lexicon[w]), p=lex_probs[w])
        blocks.append((i, lexicon[w][k]))
    i = 0
    while i + 1 < len(blocks):
        if rng.random() < sizes.swap_prob:
            blocks[i], blocks[i + 1] = blocks[i + 1], blocks[i]
            i += 2
        else:
            i += 1
    target, align = [], []
    for src_pos, words in blocks:
        for w in words:
            align.append((src_pos, len(target)))
            target.append(w)
    align.sort()
    return target, align


def extract_phrases(source, target, align, max_len: int):
    """Consistent phrase pairs with at most ``max_len`` source words."""
    s2t = collections.defaultdict(set)
    t2s = collections.defaultdict(set)
    for i, j in align:
        s2t[i].add(j)
        t2s[j].add(i)
    pairs = []
    for i in range(len(source)):
        for e in range(i + 1, min(len(source), i + max_len) + 1):
            tpos = set().union(*(s2t[k] for k in range(i, e)))
            if not tpos:
                continue
            lo, hi = min(tpos), max(tpos)
            if all(t2s[j] and all(i <= s < e for s in t2s[j]) for j in range(lo, hi + 1)):
                pairs.append((tuple(source[i:e]), tuple(target[lo : hi + 1])))
    return pairs


def make_fixture(seed: int, sizes: FixtureSizes | None = None, **overrides) -> Fixture:
    sizes = sizes or FixtureSizes()
    if overrides:
        sizes = FixtureSizes(**{**asdict(sizes), **overrides})
    rng = np.random.default_rng(seed)
    src_words = [f"s{i}" for i in range(sizes.src_words)]
    tgt_words = [f"t{i}" for i in range(sizes.tgt_words)]

    lexicon: dict[str, list[tuple[str, ...]]] = {}
    lex_probs: dict[str, np.ndarray] = {}
    for w in src_words:
        k = int(rng.integers(1, sizes.max_realizations + 1))
        options: list[tuple[str, ...]] = []
        while len(options) < k:
            length = 2 if rng.random() < sizes.two_word_prob else 1
            r = tuple(tgt_words[int(j)] for j in rng.choice(len(tgt_words), size=length))
            if r not in options:
                options.append(r)
        lexicon[w] = options
        lex_probs[w] = rng.dirichlet(np.ones(k))
    unigram = _zipf(len(src_words), rng)

    def sample_source():
        n = int(rng.integers(sizes.min_len, sizes.max_len + 1))
        return [src_words[int(j)] for j in rng.choice(len(src_words), size=n, p=unigram)]

    train = []
    for _ in range(sizes.n_train):
        src = sample_source()
        tgt, align = _realize(src, lexicon, lex_probs, sizes, rng)
        train.append((src, tgt, align))

    pair_counts: collections.Counter = collections.Counter()
    for src, tgt, align in train:
        pair_counts.update(extract_phrases(src, tgt, align, sizes.max_phrase))
    src_counts: collections.Counter = collections.Counter()
    tgt_counts: collections.Counter = collections.Counter()
    for (s, t), c in pair_counts.items():
        src_counts[s] += c
        tgt_counts[t] += c
    table = PhraseTable(
        PhraseTableEntry(s, t, (math.log(c / src_counts[s]), math.log(c / tgt_counts[t])))
        for (s, t), c in sorted(pair_counts.items())
    )

    covered = {e.source[0] for e in table if len(e.source) == 1}
    test_sources, test_targets = [], []
    while len(test_sources) < sizes.n_test:
        src = sample_source()
        tgt, _ = _realize(src, lexicon, lex_probs, sizes, rng)
        if all(w in covered for w in src):
            test_sources.append(src)
            test_targets.append(tgt)

    lm = NGramLM.train([t for _, t, _ in train], order=sizes.lm_order, k=sizes.lm_k)
    source_vocab = Vocab(src_words)
    target_vocab = Vocab(tgt_words)
    params = [
        init_params(seed * 1000 + 17 + i, len(source_vocab), len(target_vocab),
                    emb_size=sizes.emb_size, hidden_size=sizes.hidden_size,
                    out_scale=sizes.out_scale)
        for i in range(sizes.num_scorers)
    ]
    weights = WeightVector(DEFAULT_WEIGHTS)
    return Fixture(seed, sizes, source_vocab, target_vocab, lexicon, train, test_sources,
                   test_targets, table, lm, params, weights)


def teacher_reference(fixture: Fixture, source: Sequence[str], scorer_index: int = 0) -> list[str]:
    """Monotone greedy translation by the neural scorer alone.

    Each source word is rendered by whichever of its single-word phrase-table
    translations the scorer finds most probable after the prefix so far, so
    the reference is always reachable by the decoder.
    """
    sc = fixture.scorers()[scorer_index]
    session = sc.session(source)
    state = None
    out: list[str] = []
    for w in source:
        best = None
        for entry in sorted(fixture.phrase_table.lookup((w,)), key=lambda e: e.target):
            logp, new_state = score_sequence(session, sc.target_vocab.ids(entry.target), state)
            if best is None or logp > best[0]:
                best = (logp, entry.target, new_state)
        out.extend(best[1])
        state = best[2]
    return out


def decodable(table: PhraseTable, source: Sequence[str]) -> bool:
    """Whether phrase-table spans alone (no unknown-word passthrough) can cover ``source``."""
    n = len(source)
    reach = [False] * (n + 1)
    reach[0] = True
    for i in range(n):
        if not reach[i]:
            continue
        for e in range(i + 1, min(n, i + table.max_source_length) + 1):
            if table.lookup(source[i:e]):
                reach[e] = True
    return reach[n]

