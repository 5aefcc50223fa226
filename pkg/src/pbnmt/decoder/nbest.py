"""N-best extraction over recombination arcs, forced rescoring, Moses n-best I/O."""

from __future__ import annotations

import heapq
import itertools
import re
from dataclasses import dataclass, field, replace
from typing import Sequence

from ..features import dot
from ..scorer import ScorerSession, score_sequence
from .hypothesis import Hypothesis


class NBestError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    start: int
    end: int
    target: tuple[str, ...]
    target_ids: tuple[int, ...]


@dataclass(frozen=True)
class Derivation:
    segments: tuple[Segment, ...]
    features: tuple[float, ...]
    score: float
    # True when the path goes through a recombined hypothesis, so neural
    # feature sums may be stale until rescored
    recombined: bool = False

    @property
    def target(self) -> tuple[str, ...]:
        return tuple(w for s in self.segments for w in s.target)

    @property
    def segmentation(self):
        return tuple((s.start, s.end, s.target) for s in self.segments)

    def sort_key(self):
        return (-self.score, self.target, self.segmentation)


@dataclass
class NBestList:
    entries: list[Derivation]
    feature_names: list[str]
    stats: object = None
    best_hypothesis: Hypothesis | None = field(default=None, repr=False)
    sessions: list | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __iter__(self):
        return iter(self.entries)

    @property
    def best(self) -> Derivation:
        return self.entries[0]

    def feature(self, i: int, name: str) -> float:
        return self.entries[i].features[self.feature_names.index(name)]


def _segments(nodes: Sequence[Hypothesis]) -> tuple[Segment, ...]:
    return tuple(Segment(h.option.start, h.option.end, h.option.target, h.option.target_ids)
                 for h in nodes)


def extract_nbest(final: Sequence[Hypothesis], n: int, weights: Sequence[float],
                  feature_names: Sequence[str]) -> NBestList:
    """Up to ``n`` distinct derivations, best first.

    Each surviving final hypothesis seeds one path; further paths swap a
    hypothesis on a path for one of its recombined rivals, which shares the
    same future and so can take over the remainder of the path. A path may
    only deviate before its own deviation point, so each derivation is
    generated once.
    """
    if n < 1:
        raise NBestError("n-best size must be >= 1")
    counter = itertools.count()
    heap = []

    def push(nodes, features, limit, recombined):
        score = dot(weights, features)
        d = Derivation(_segments(nodes), tuple(features), score, recombined)
        heapq.heappush(heap, (d.sort_key(), next(counter), d, nodes, limit))

    for h in final:
        nodes = h.chain()
        push(nodes, h.features, len(nodes), False)

    out: list[Derivation] = []
    seen = set()
    while heap and len(out) < n:
        _, _, d, nodes, limit = heapq.heappop(heap)
        if d.segmentation in seen:
            continue
        seen.add(d.segmentation)
        out.append(d)
        for i in range(limit):
            node = nodes[i]
            for arc in node.arcs:
                prefix = arc.chain()
                feats = [p - a + b for p, a, b in zip(d.features, node.features, arc.features)]
                push(prefix + list(nodes[i + 1 :]), feats, len(prefix) - 1, True)
    return NBestList(out, list(feature_names), best_hypothesis=final[0] if final else None)


def forced_scores(segments: Sequence[Segment], session: ScorerSession) -> float:
    """Neural feature of a derivation, accumulated phrase by phrase as in decoding."""
    total = 0.0
    state = None
    for seg in segments:
        logp, state = score_sequence(session, seg.target_ids, state)
        total += logp
    return total


def rescore_nbest(nbest: NBestList, sessions: Sequence[ScorerSession],
                  weights: Sequence[float]) -> NBestList:
    """Recompute every neural feature by forced scoring, then re-total and re-sort."""
    names = nbest.feature_names
    slots = [names.index(f"nmt{i}") for i in range(len(sessions))]
    entries = []
    for d in nbest.entries:
        feats = list(d.features)
        for slot, session in zip(slots, sessions):
            feats[slot] = forced_scores(d.segments, session)
        entries.append(replace(d, features=tuple(feats), score=dot(weights, feats)))
    entries.sort(key=Derivation.sort_key)
    return NBestList(entries, list(names), nbest.stats, nbest.best_hypothesis, nbest.sessions)


# ---------------------------------------------------------------------------
# Moses n-best text


def _group(names: Sequence[str], values: Sequence[float]) -> str:
    parts = []
    last = None
    for name, value in zip(names, values):
        base = re.sub(r"\d+$", "", name)
        if base != last:
            parts.append(f"{base}=")
            last = base
        parts.append(f"{value:.6f}")
    return " ".join(parts)


def format_nbest(sentence_id: int, nbest: NBestList) -> str:
    lines = []
    for d in nbest.entries:
        lines.append(f"{sentence_id} ||| {' '.join(d.target)} ||| "
                     f"{_group(nbest.feature_names, d.features)} ||| {d.score:.6f}")
    return "".join(line + "\n" for line in lines)


def parse_nbest_line(line: str):
    """``(id, target tokens, {group: [values]}, total)`` from one n-best line."""
    fields = [f.strip() for f in line.split("|||")]
    if len(fields) < 4:
        raise NBestError(f"malformed n-best line: {line!r}")
    groups: dict[str, list[float]] = {}
    current = None
    for tok in fields[2].split():
        if tok.endswith("="):
            current = groups.setdefault(tok[:-1], [])
        else:
            if current is None:
                raise NBestError(f"score before feature name: {line!r}")
            current.append(float(tok))
    return int(fields[0]), fields[1].split(), groups, float(fields[3])
