"""Batched scoring of hypothesis expansions through per-hypothesis prefix trees.

All target phrases that expand the same hypothesis are stored in one trie
rooted at that hypothesis' scorer state. Edges at equal depth across the whole
forest are scored in a single forward step, so a batch needs as many steps as
its longest phrase has words, regardless of how many pairs it contains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from . import scorer as _scorer

DEFAULT_ROW_CAP = 8192


class BatchError(ValueError):
    pass


class UnscoredExpansion(KeyError):
    """A lookup for a pair that was never gathered: Gather and Expand disagree."""

    def __str__(self):
        return f"unscored expansion {self.args[0]!r}" if self.args else "unscored expansion"


class HypothesisLike(Protocol):
    id: int
    states: tuple[int, ...] | None


@dataclass
class QueryMeter:
    step_calls: int = 0
    rows: list[int] = field(default_factory=list)

    def record(self, rows: int) -> None:
        self.step_calls += 1
        self.rows.append(rows)


class StateArena:
    """Append-only store of decoder states for one scorer and one sentence.

    Hypotheses refer to states by integer handle; handle 0 is the session's
    initial state. The arena also meters every forward step it runs.
    """

    def __init__(self, session: _scorer.ScorerSession):
        self.session = session
        self._states: list[np.ndarray] = [session.h0]
        self.meter = QueryMeter()

    ROOT = 0

    def __len__(self):
        return len(self._states)

    def get(self, handle: int) -> np.ndarray:
        return self._states[handle]

    def gather(self, handles: Sequence[int]) -> np.ndarray:
        return np.stack([self._states[h] for h in handles])

    def extend(self, H: np.ndarray) -> range:
        start = len(self._states)
        self._states.extend(H[i] for i in range(H.shape[0]))
        return range(start, len(self._states))

    def step(self, H: np.ndarray, E: np.ndarray):
        self.meter.record(H.shape[0])
        return _scorer.step(self.session, H, E)

    def embed(self, words: Sequence[int]) -> np.ndarray:
        return _scorer.embed(self.session.params, words)

    def score_sequence(self, handle: int, words: Sequence[int]) -> tuple[float, int]:
        """Sequential scoring from a stored state; stores only the final state."""
        logp, final = _scorer.score_sequence(self.session, words, self._states[handle])
        for _ in words:
            self.meter.record(1)
        return logp, self.extend(final[None, :])[0]


# ---------------------------------------------------------------------------
# the forest


class PrefixNode:
    __slots__ = ("word", "depth", "parent", "children", "logprobs", "states", "terminal", "tree")

    def __init__(self, word, depth, parent, tree):
        self.word = word
        self.depth = depth
        self.parent = parent
        self.children: dict[int, PrefixNode] = {}
        self.logprobs: list[float] = []
        self.states: list[int] = []
        self.terminal = False
        self.tree = tree

    def path(self) -> tuple[int, ...]:
        words = []
        node = self
        while node.parent is not None:
            words.append(node.word)
            node = node.parent
        return tuple(reversed(words))


@dataclass
class PrefixTree:
    hypothesis: HypothesisLike
    root: PrefixNode = None

    def __post_init__(self):
        self.root = PrefixNode(None, 0, None, self)


@dataclass
class ForestStats:
    edges_per_depth: list[int]
    max_depth: int
    edges: int
    words: int  # sum of phrase lengths, the naive query count
    branching_factor: int

    def line(self) -> str:
        return f"depths={self.edges_per_depth} max_depth={self.max_depth} edges={self.edges}"


class PrefixForest:
    """One trie per distinct hypothesis over the phrases that expand it.

    ``levels[d]`` lists the edges (child nodes) at depth ``d + 1`` in batch row
    order: trees by hypothesis id, then breadth-first with children by word id.
    """

    def __init__(self, trees: list[PrefixTree], pairs: list[tuple[int, tuple[int, ...]]]):
        self.trees = trees
        self.pairs = pairs
        self.levels: list[list[PrefixNode]] = []
        frontier = [t.root for t in trees]
        while True:
            level = [node.children[w] for node in frontier for w in sorted(node.children)]
            if not level:
                break
            self.levels.append(level)
            frontier = level
        self._terminals = {}
        for tree in trees:
            self._index(tree.root, tree.hypothesis.id)

    def _index(self, node: PrefixNode, hyp_id: int) -> None:
        if node.terminal:
            self._terminals[(hyp_id, node.path())] = node
        for child in node.children.values():
            self._index(child, hyp_id)

    def node(self, hyp_id: int, phrase: Sequence[int]) -> PrefixNode:
        return self._terminals[(hyp_id, tuple(phrase))]

    @property
    def max_depth(self) -> int:
        return len(self.levels)

    def stats(self) -> ForestStats:
        edges = [len(level) for level in self.levels]
        branching = 0
        for tree in self.trees:
            stack = [tree.root]
            while stack:
                n = stack.pop()
                branching = max(branching, len(n.children))
                stack.extend(n.children.values())
        return ForestStats(
            edges_per_depth=edges,
            max_depth=len(edges),
            edges=sum(edges),
            words=sum(len(p) for _, p in self.pairs),
            branching_factor=branching,
        )

    def dump(self, vocab: Sequence[str] | None = None) -> str:
        """Indented text rendering, one node per line, then the stats line."""
        lines = []

        def label(w):
            return vocab[w] if vocab is not None else str(w)

        def walk(node: PrefixNode, indent: int):
            for w in sorted(node.children):
                child = node.children[w]
                lp = ", ".join(f"{x:.6f}" for x in child.logprobs) if child.logprobs else "-"
                mark = " *" if child.terminal else ""
                lines.append(f"{'  ' * indent}{label(w)}: {lp}{mark}")
                walk(child, indent + 1)

        for tree in self.trees:
            lines.append(f"hyp {tree.hypothesis.id}")
            walk(tree.root, 1)
        lines.append(self.stats().line())
        return "\n".join(lines) + "\n"


def build_prefix_forest(pairs: Iterable[tuple[HypothesisLike, Sequence[int]]]) -> PrefixForest:
    trees: dict[int, PrefixTree] = {}
    seen = []
    for hyp, phrase in pairs:
        phrase = tuple(phrase)
        if not phrase:
            raise BatchError("empty expansion")
        tree = trees.get(hyp.id)
        if tree is None:
            tree = trees[hyp.id] = PrefixTree(hyp)
        node = tree.root
        for depth, w in enumerate(phrase, 1):
            child = node.children.get(w)
            if child is None:
                child = node.children[w] = PrefixNode(w, depth, node, tree)
            node = child
        if not node.terminal:
            node.terminal = True
            seen.append((hyp.id, phrase))
    ordered = [trees[k] for k in sorted(trees)]
    return PrefixForest(ordered, seen)


# ---------------------------------------------------------------------------
# scoring


@dataclass(frozen=True)
class CacheEntry:
    logprobs: tuple[float, ...]  # one per scorer
    states: tuple[int, ...]  # arena handles, one per scorer


@dataclass
class BatchStats:
    steps: int  # forward-step levels, the forest depth
    step_calls: int  # actual calls, more than steps only when the row cap splits a level
    rows: list[int]
    forest: ForestStats


class ScoreCache:
    """Maps (hypothesis id, phrase) to summed log-probabilities and final states."""

    def __init__(self, entries: dict | None = None, stats: BatchStats | None = None):
        self._entries: dict[tuple[int, tuple[int, ...]], CacheEntry] = entries or {}
        self.stats = stats

    def __len__(self):
        return len(self._entries)

    def __contains__(self, key):
        return key in self._entries

    def keys(self):
        return self._entries.keys()

    def insert(self, hyp_id: int, phrase: Sequence[int], entry: CacheEntry) -> None:
        self._entries[(hyp_id, tuple(phrase))] = entry

    def lookup(self, hyp: HypothesisLike | int, phrase: Sequence[int]) -> CacheEntry:
        hyp_id = hyp if isinstance(hyp, int) else hyp.id
        try:
            return self._entries[(hyp_id, tuple(phrase))]
        except KeyError:
            raise UnscoredExpansion((hyp_id, tuple(phrase))) from None


def cache_lookup(cache: ScoreCache, hypothesis, phrase) -> CacheEntry:
    return cache.lookup(hypothesis, phrase)


Recorder = Callable[[int, int, np.ndarray, np.ndarray], None]


def score_batch(pairs: Iterable[tuple[HypothesisLike, Sequence[int]]],
                arenas: StateArena | Sequence[StateArena],
                row_cap: int = DEFAULT_ROW_CAP,
                recorder: Recorder | None = None) -> ScoreCache:
    """Score every (hypothesis, phrase) pair with one forward step per tree depth.

    ``arenas`` holds one state arena per scorer instance; hypotheses carry one
    state handle per arena. ``recorder(depth, scorer_index, H, E)`` sees every
    matrix pair handed to the scorer.
    """
    if isinstance(arenas, StateArena):
        arenas = [arenas]
    if row_cap < 1:
        raise BatchError("row_cap must be positive")
    forest = build_prefix_forest(pairs)
    for tree in forest.trees:
        states = tree.hypothesis.states
        if states is None or len(states) != len(arenas):
            raise BatchError(f"hypothesis {tree.hypothesis.id} has no scorer state")
        tree.root.states = list(states)
        tree.root.logprobs = [0.0] * len(arenas)

    rows: list[int] = []
    calls = 0
    for depth, level in enumerate(forest.levels, 1):
        for node in level:
            node.logprobs = [0.0] * len(arenas)
            node.states = [0] * len(arenas)
        words = [node.word for node in level]
        for a, arena in enumerate(arenas):
            vocab = arena.session.params.tgt_vocab_size
            for lo in range(0, len(level), row_cap):
                chunk = level[lo : lo + row_cap]
                H = arena.gather([node.parent.states[a] for node in chunk])
                E = arena.embed(words[lo : lo + row_cap])
                if recorder is not None:
                    recorder(depth, a, H, E)
                H_next, P = arena.step(H, E)
                handles = arena.extend(H_next)
                for r, node in enumerate(chunk):
                    w = node.word if 0 <= node.word < vocab else _scorer.UNK_ID
                    node.logprobs[a] = node.parent.logprobs[a] + math.log(float(P[r, w]))
                    node.states[a] = handles[r]
                if a == 0:
                    rows.append(len(chunk))
                calls += 1

    cache = ScoreCache()
    for hyp_id, phrase in forest.pairs:
        node = forest.node(hyp_id, phrase)
        cache.insert(hyp_id, phrase, CacheEntry(tuple(node.logprobs), tuple(node.states)))
    cache.stats = BatchStats(
        steps=forest.max_depth,
        step_calls=calls // max(len(arenas), 1),
        rows=rows,
        forest=forest.stats(),
    )
    cache.forest = forest
    return cache
