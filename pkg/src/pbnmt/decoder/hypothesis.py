from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True, eq=False)
class TranslationOption:
    """A phrase pair applied to one concrete source span of one sentence."""

    start: int
    end: int  # exclusive
    target: tuple[str, ...]
    target_ids: tuple[int, ...]
    tm: tuple[float, ...]
    unk: float
    estimate: float  # weighted context-free score, for future costs and cube ordering

    @property
    def mask(self) -> int:
        return ((1 << (self.end - self.start)) - 1) << self.start

    def __repr__(self):
        return f"Option([{self.start},{self.end}) {' '.join(self.target)})"


class Hypothesis:
    """A partial translation.

    ``features`` is cumulative along the predecessor chain and ``score`` is
    always the weighted sum of it. ``states`` holds one scorer-state handle
    per neural feature, or None while the neural score of the last phrase is
    still pending (stack rescoring).
    """

    __slots__ = ("id", "coverage", "ncovered", "last_end", "lm_state", "features", "score",
                 "future", "parent", "option", "states", "arcs", "_target")

    def __init__(self, id, coverage, ncovered, last_end, lm_state, features, score, future,
                 parent=None, option=None, states=None):
        self.id = id
        self.coverage = coverage
        self.ncovered = ncovered
        self.last_end = last_end
        self.lm_state = lm_state
        self.features = features
        self.score = score
        self.future = future
        self.parent = parent
        self.option = option
        self.states = states
        self.arcs: list[Hypothesis] = []
        self._target = None

    @property
    def target(self) -> tuple[str, ...]:
        if self._target is None:
            if self.parent is None:
                self._target = ()
            else:
                self._target = self.parent.target + self.option.target
        return self._target

    @property
    def predecessor(self):
        """The (parent hypothesis, expansion option) pair that produced this one."""
        return self.parent, self.option

    def chain(self) -> list["Hypothesis"]:
        """Hypotheses from the first expansion to this one (the empty root excluded)."""
        out = []
        h = self
        while h.parent is not None:
            out.append(h)
            h = h.parent
        out.reverse()
        return out

    def rank_key(self):
        return (-(self.score + self.future), self.coverage, self.target, self.id)

    def __repr__(self):
        return (f"Hyp#{self.id}(cov={self.coverage:b}, score={self.score:.4f}, "
                f"target={' '.join(self.target)!r})")


def recombination_key(hyp: Hypothesis, mode: str):
    if mode == "none":
        return hyp.id
    key = (hyp.coverage, hyp.lm_state, hyp.last_end)
    if mode == "full":
        return key + (hyp.target,)
    return key


class Stack:
    """Hypotheses covering the same number of source words.

    At most one hypothesis survives per recombination key; the losers hang
    off the winner as ``arcs`` for n-best extraction.
    """

    def __init__(self, capacity: int, recombination: str = "features",
                 threshold: float | None = None):
        self.capacity = capacity
        self.recombination = recombination
        self.threshold = threshold
        self._hyps: dict = {}
        self.recombinations = 0
        self.pruned = 0

    def __len__(self):
        return len(self._hyps)

    def __iter__(self):
        return iter(self.ordered())

    def add(self, hyp: Hypothesis) -> Hypothesis:
        """Insert with recombination; returns the hypothesis kept for this key."""
        key = recombination_key(hyp, self.recombination)
        existing = self._hyps.get(key)
        if existing is None:
            self._hyps[key] = hyp
            kept = hyp
        else:
            self.recombinations += 1
            if (-hyp.score, hyp.rank_key()) < (-existing.score, existing.rank_key()):
                winner, loser = hyp, existing
                self._hyps[key] = hyp
            else:
                winner, loser = existing, hyp
            winner.arcs.append(loser)
            winner.arcs.extend(loser.arcs)
            loser.arcs = []
            kept = winner
        if len(self._hyps) > 2 * self.capacity:
            self.prune()
        return kept

    def ordered(self) -> list[Hypothesis]:
        return sorted(self._hyps.values(), key=Hypothesis.rank_key)

    def prune(self) -> int:
        """Capacity and optional threshold pruning on score plus future cost."""
        ranked = self.ordered()
        keep = ranked[: self.capacity]
        if self.threshold is not None and keep:
            best = keep[0].score + keep[0].future
            keep = [h for h in keep if h.score + h.future >= best - self.threshold]
        removed = len(ranked) - len(keep)
        if removed:
            survivors = {id(h) for h in keep}
            self._hyps = {k: h for k, h in self._hyps.items() if id(h) in survivors}
            self.pruned += removed
        return removed
