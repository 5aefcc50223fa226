"""Stack decoding with three ways of querying the neural features.

* naive: every expansion is scored on the spot, one word per forward step.
* two-pass: per stack, gather all (hypothesis, phrase) pairs, score them with
  one batch, then expand with look-ups into that batch.
* stack rescoring: expand with neural scores of zero; when a stack comes up
  for expansion, score the phrases that created its hypotheses in one batch
  and patch their scores before expanding them.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

from ..batching import StateArena, score_batch
from ..config import DecoderConfig
from ..features import (EOS, UNKNOWN_WORD_PENALTY, NGramLM, PhraseTable, WeightVector, dot,
                        distortion_cost, feature_names, within_distortion_limit)
from ..scorer import NeuralScorer, Vocab
from .hypothesis import Hypothesis, Stack, TranslationOption
from .nbest import NBestList, extract_nbest, rescore_nbest

Functor = Callable[[Hypothesis, TranslationOption], None]


class DecodingError(RuntimeError):
    pass


@dataclass
class StackStats:
    stack: int
    hypotheses: int = 0
    pairs: int = 0
    max_phrase_length: int = 0
    steps: int = 0
    step_calls: int = 0
    rows: list[int] = field(default_factory=list)
    recombinations: int = 0
    pruned: int = 0
    created: int = 0


@dataclass
class SentenceStats:
    algorithm: str
    source_length: int
    stacks: list[StackStats] = field(default_factory=list)

    @property
    def total_steps(self) -> int:
        return sum(s.steps for s in self.stacks)

    @property
    def total_step_calls(self) -> int:
        return sum(s.step_calls for s in self.stacks)

    def as_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "source_length": self.source_length,
            "queries": self.total_step_calls,
            "steps_per_stack": [s.steps for s in self.stacks],
            "queries_per_stack": [s.step_calls for s in self.stacks],
            "max_phrase_length_per_stack": [s.max_phrase_length for s in self.stacks],
            "rows_per_batch": [s.rows for s in self.stacks],
            "hypotheses_per_stack": [s.hypotheses for s in self.stacks],
            "recombinations": sum(s.recombinations for s in self.stacks),
            "pruned": sum(s.pruned for s in self.stacks),
        }


class _Sentence:
    """Per-sentence search state: options, future costs, scorer arenas, stacks."""

    def __init__(self, decoder: "Decoder", source: Sequence[str], algorithm: str):
        self.source = tuple(source)
        self.n = len(self.source)
        self.full = (1 << self.n) - 1
        self.algorithm = algorithm
        self.options = decoder._collect_options(self.source)
        self.max_span = max((e - s for s, e in self.options), default=1)
        self.future_table = decoder._future_table(self.n, self.options)
        self._future: dict[int, float] = {}
        self.sessions = [sc.session(self.source) for sc in decoder.scorers]
        self.arenas = [StateArena(s) for s in self.sessions]
        self.next_id = 0
        self.lm_cache: dict = {}
        self.stats = SentenceStats(algorithm, self.n)

    def future(self, coverage: int) -> float:
        cost = self._future.get(coverage)
        if cost is None:
            cost = 0.0
            i = 0
            while i < self.n:
                if coverage >> i & 1:
                    i += 1
                    continue
                j = i
                while j < self.n and not coverage >> j & 1:
                    j += 1
                cost += self.future_table[i][j]
                i = j
            self._future[coverage] = cost
        return cost

    def new_id(self) -> int:
        self.next_id += 1
        return self.next_id - 1

    def steps(self) -> int:
        return self.arenas[0].meter.step_calls if self.arenas else 0


class Decoder:
    """Phrase-based decoder with optional neural feature functions.

    Each scorer in ``scorers`` contributes one feature (``nmt0``, ``nmt1``,
    ...) with its own weight and its own per-sentence session; all of them
    are filled during the same prefix-forest traversal.
    """

    def __init__(self, phrase_table: PhraseTable, lm: NGramLM | None, weights: WeightVector,
                 scorers: Sequence[NeuralScorer] = (), config: DecoderConfig | None = None):
        self.table = phrase_table
        self.lm = lm
        self.scorers = list(scorers)
        self.config = config or DecoderConfig()
        self.num_tm = phrase_table.num_scores or 0
        self.feature_names = feature_names(self.num_tm, len(self.scorers))
        self.weights = weights
        self.wvec = weights.vector(self.feature_names)
        if self.scorers:
            vocab = self.scorers[0].target_vocab
            if any(s.target_vocab.tokens != vocab.tokens for s in self.scorers):
                raise ValueError("all neural scorers must share one target vocabulary")
            self.target_vocab: Vocab | None = vocab
        else:
            self.target_vocab = None
        self._lm_slot = self.num_tm
        self._nmt_slot = self.num_tm + 4

    # -- sentence preparation ---------------------------------------------

    def _option_estimate(self, tm, target, unk) -> float:
        w = self.wvec
        est = 0.0
        for i, s in enumerate(tm):
            est += w[i] * s
        if self.lm is not None:
            hist: tuple = ()
            lm_total = 0.0
            for word in target:
                lm_total += self.lm.score(hist, word)
                hist = self.lm.state(hist + (word,))
            est += w[self._lm_slot] * lm_total
        est += w[self.num_tm + 2] * -len(target)
        est += w[self.num_tm + 3] * unk
        return est

    def _collect_options(self, source) -> dict[tuple[int, int], list[TranslationOption]]:
        n = len(source)
        maxlen = max(self.table.max_source_length, 1)
        vocab = self.target_vocab
        options: dict[tuple[int, int], list[TranslationOption]] = {}
        for start in range(n):
            for end in range(start + 1, min(n, start + maxlen) + 1):
                entries = self.table.lookup(source[start:end])
                if not entries:
                    continue
                opts = []
                for e in entries:
                    ids = vocab.ids(e.target) if vocab is not None else ()
                    opts.append(TranslationOption(start, end, e.target, ids, e.scores, 0.0,
                                                  self._option_estimate(e.scores, e.target, 0.0)))
                opts.sort(key=lambda o: (-o.estimate, o.target))
                options[(start, end)] = opts[: self.config.table_limit]
            if (start, start + 1) not in options:
                word = (source[start],)
                ids = vocab.ids(word) if vocab is not None else ()
                tm = (0.0,) * self.num_tm
                options[(start, start + 1)] = [TranslationOption(
                    start, start + 1, word, ids, tm, UNKNOWN_WORD_PENALTY,
                    self._option_estimate(tm, word, UNKNOWN_WORD_PENALTY))]
        return options

    @staticmethod
    def _future_table(n, options) -> list[list[float]]:
        fc = [[-math.inf] * (n + 1) for _ in range(n + 1)]
        for (s, e), opts in options.items():
            fc[s][e] = max(o.estimate for o in opts)
        for length in range(2, n + 1):
            for s in range(0, n - length + 1):
                e = s + length
                best = fc[s][e]
                for k in range(s + 1, e):
                    best = max(best, fc[s][k] + fc[k][e])
                fc[s][e] = best
        return fc

    # -- hypotheses -------------------------------------------------------

    def _root(self, ctx: _Sentence) -> Hypothesis:
        feats = [0.0] * len(self.feature_names)
        states = tuple(StateArena.ROOT for _ in ctx.arenas)
        lm_state = ("<s>",) if self.lm is not None and self.lm.order > 1 else ()
        return Hypothesis(ctx.new_id(), 0, 0, 0, lm_state, feats, dot(self.wvec, feats),
                          ctx.future(0), states=states)

    def _lm_delta(self, ctx: _Sentence, history: tuple, target: tuple, complete: bool):
        if self.lm is None:
            return 0.0, ()
        key = (history, target, complete)
        hit = ctx.lm_cache.get(key)
        if hit is not None:
            return hit
        total = 0.0
        hist = history
        for w in target:
            total += self.lm.score(hist, w)
            hist = self.lm.state(hist + (w,))
        if complete:
            total += self.lm.score(hist, EOS)
        ctx.lm_cache[key] = (total, hist)
        return total, hist

    def _extend(self, ctx: _Sentence, h: Hypothesis, opt: TranslationOption,
                logprobs: Sequence[float] | None, states) -> Hypothesis:
        """New hypothesis from ``h`` and ``opt`` with the given neural increments."""
        coverage = h.coverage | opt.mask
        complete = coverage == ctx.full
        f = list(h.features)
        for i, s in enumerate(opt.tm):
            f[i] += s
        lm_total, lm_state = self._lm_delta(ctx, h.lm_state, opt.target, complete)
        t = self.num_tm
        f[t] += lm_total
        f[t + 1] += distortion_cost(h.last_end, opt.start)
        f[t + 2] += -len(opt.target)
        f[t + 3] += opt.unk
        if logprobs is not None:
            for a, lp in enumerate(logprobs):
                f[self._nmt_slot + a] += lp
        return Hypothesis(ctx.new_id(), coverage, h.ncovered + opt.end - opt.start, opt.end,
                          lm_state, f, dot(self.wvec, f), ctx.future(coverage), h, opt, states)

    # -- applicability and stack traversal --------------------------------

    def applicable(self, ctx: _Sentence, h: Hypothesis) -> Iterator[TranslationOption]:
        """Options that may expand ``h``: uncovered contiguous span, phrase-table
        match, distortion limit, and a first gap that stays reachable."""
        limit = self.config.distortion_limit
        cov = h.coverage
        for start in range(ctx.n):
            if cov >> start & 1:
                continue
            if not within_distortion_limit(h.last_end, start, limit):
                continue
            for end in range(start + 1, min(ctx.n, start + ctx.max_span) + 1):
                if cov >> (end - 1) & 1:
                    break
                opts = ctx.options.get((start, end))
                if not opts:
                    continue
                if limit is not None and limit >= 0:
                    new_cov = cov | ((1 << (end - start)) - 1) << start
                    if new_cov != ctx.full:
                        gap = _first_unset(new_cov)
                        if gap < start and end - gap > limit:
                            continue
                yield from opts

    def process_stack(self, ctx: _Sentence, hyps: Sequence[Hypothesis], functor: Functor) -> None:
        for h in hyps:
            for opt in self.applicable(ctx, h):
                functor(h, opt)

    def _place(self, ctx: _Sentence, stacks: list[Stack], hyp: Hypothesis) -> None:
        stacks[hyp.ncovered].add(hyp)

    def cube_prune_expand(self, ctx: _Sentence, hyps: Sequence[Hypothesis], stacks: list[Stack],
                          pop_limit: int, make: Callable[[Hypothesis, TranslationOption], Hypothesis]) -> int:
        """Lazy best-first expansion of one stack; returns the number of pops.

        Hypotheses sharing coverage and last span end form one group (same
        applicable spans, same distortion costs); every group × span is a cube
        whose rows are hypotheses by score and columns options by estimate.
        """
        groups: dict = {}
        for h in hyps:
            groups.setdefault((h.coverage, h.last_end), []).append(h)
        cubes = []
        for members in groups.values():
            members.sort(key=lambda h: (-h.score, h.rank_key()))
            by_span: dict = {}
            for opt in self.applicable(ctx, members[0]):
                by_span.setdefault((opt.start, opt.end), []).append(opt)
            for opts in by_span.values():
                cubes.append((members, opts))

        heap = []
        seen = set()

        def push(c, i, j):
            if (c, i, j) in seen:
                return
            members, opts = cubes[c]
            if i >= len(members) or j >= len(opts):
                return
            seen.add((c, i, j))
            cand = make(members[i], opts[j])
            heapq.heappush(heap, (cand.rank_key(), c, i, j, cand))

        for c in range(len(cubes)):
            push(c, 0, 0)
        pops = 0
        while heap and pops < pop_limit:
            _, c, i, j, cand = heapq.heappop(heap)
            self._place(ctx, stacks, cand)
            pops += 1
            push(c, i + 1, j)
            push(c, i, j + 1)
        return pops

    # -- search -----------------------------------------------------------

    def _check_source(self, source) -> tuple[str, ...]:
        source = tuple(source)
        if not source:
            raise DecodingError("empty source sentence")
        if len(source) > self.config.max_source_length:
            raise DecodingError(f"source length {len(source)} exceeds max_source_length "
                                f"{self.config.max_source_length}")
        return source

    def _search(self, source, algorithm: str, expansion: str | None = None,
                recombination: str | None = None, stack_size: int | None = None) -> NBestList:
        cfg = self.config
        expansion = expansion or cfg.expansion
        if algorithm == "two-pass" and expansion == "cube":
            raise DecodingError("two-pass decoding needs exhaustive expansion")
        source = self._check_source(source)
        ctx = _Sentence(self, source, algorithm)
        capacity = stack_size or cfg.stack_size
        mode = recombination or cfg.recombination
        stacks = [Stack(capacity, mode, cfg.beam_threshold) for _ in range(ctx.n + 1)]
        stacks[0].add(self._root(ctx))
        nscorers = len(ctx.arenas)
        zeros = (0.0,) * nscorers

        for k in range(ctx.n + 1):
            stack = stacks[k]
            stack.prune()
            st = StackStats(k, recombinations=stack.recombinations, pruned=stack.pruned)
            ctx.stats.stacks.append(st)
            steps_before = ctx.steps()
            ids_before = ctx.next_id

            if algorithm == "stack-rescore":
                self._rescore_stack(ctx, stack, st)
            hyps = stack.ordered()
            st.hypotheses = len(hyps)
            if k == ctx.n:
                break

            if algorithm == "naive":
                def make(h, opt):
                    lps, handles = [], []
                    for a, arena in enumerate(ctx.arenas):
                        lp, handle = arena.score_sequence(h.states[a], opt.target_ids)
                        lps.append(lp)
                        handles.append(handle)
                    return self._extend(ctx, h, opt, lps, tuple(handles))
                if nscorers:
                    lengths = [len(o.target) for h in hyps for o in self.applicable(ctx, h)]
                    st.max_phrase_length = max(lengths, default=0)
                    st.pairs = len(lengths)
                self._expand(ctx, hyps, stacks, expansion, make)
                st.step_calls = ctx.steps() - steps_before
                st.steps = st.step_calls

            elif algorithm == "two-pass":
                gathered: list = []
                self.process_stack(ctx, hyps, lambda h, opt: gathered.append((h, opt)))
                st.pairs = len(gathered)
                st.max_phrase_length = max((len(o.target) for _, o in gathered), default=0)
                if nscorers and gathered:
                    cache = score_batch([(h, o.target_ids) for h, o in gathered], ctx.arenas,
                                        cfg.row_cap)
                    st.steps = cache.stats.steps
                    st.step_calls = cache.stats.step_calls
                    st.rows = cache.stats.rows

                    def expand(h, opt):
                        entry = cache.lookup(h, opt.target_ids)
                        self._place(ctx, stacks, self._extend(ctx, h, opt, entry.logprobs,
                                                              entry.states))
                else:
                    def expand(h, opt):
                        self._place(ctx, stacks, self._extend(ctx, h, opt, None, ()))
                self.process_stack(ctx, hyps, expand)

            elif algorithm == "stack-rescore":
                def make(h, opt):
                    return self._extend(ctx, h, opt, zeros, None if nscorers else ())
                self._expand(ctx, hyps, stacks, expansion, make)
            else:
                raise DecodingError(f"unknown algorithm {algorithm!r}")
            st.created = ctx.next_id - ids_before

        final = stacks[ctx.n].ordered()
        if not final:
            raise DecodingError("no complete hypothesis")
        nbest = extract_nbest(final, cfg.nbest, self.wvec, self.feature_names)
        nbest.stats = ctx.stats
        nbest.sessions = ctx.sessions
        return nbest

    def _expand(self, ctx, hyps, stacks, expansion, make) -> None:
        if expansion == "cube":
            self.cube_prune_expand(ctx, hyps, stacks, self.config.pop_limit, make)
        else:
            self.process_stack(ctx, hyps, lambda h, opt: self._place(ctx, stacks, make(h, opt)))

    def _rescore_stack(self, ctx: _Sentence, stack: Stack, st: StackStats) -> None:
        """Replace zero placeholders with neural scores of each hypothesis' last phrase."""
        if not ctx.arenas:
            return
        pending = [h for h in stack.ordered() if h.states is None]
        if not pending:
            return
        pairs = [(h.parent, h.option.target_ids) for h in pending]
        cache = score_batch(pairs, ctx.arenas, self.config.row_cap)
        st.pairs = len(pairs)
        st.max_phrase_length = max(len(p) for _, p in pairs)
        st.steps = cache.stats.steps
        st.step_calls = cache.stats.step_calls
        st.rows = cache.stats.rows
        for h in pending:
            entry = cache.lookup(h.parent, h.option.target_ids)
            for a, lp in enumerate(entry.logprobs):
                slot = self._nmt_slot + a
                h.features[slot] = h.parent.features[slot] + lp
            h.states = entry.states
            h.score = dot(self.wvec, h.features)

    # -- public entry points ----------------------------------------------

    def stack_decode_naive(self, source, **overrides) -> NBestList:
        return self._search(source, "naive", **overrides)

    def two_pass_decode(self, source, **overrides) -> NBestList:
        return self._search(source, "two-pass", **overrides)

    def stack_rescore_decode(self, source, **overrides) -> NBestList:
        return self._search(source, "stack-rescore", **overrides)

    def decode(self, source, algorithm: str | None = None, **overrides) -> NBestList:
        return self._search(source, algorithm or self.config.algorithm, **overrides)

    def rescore(self, nbest: NBestList) -> NBestList:
        """Forced neural rescoring of a list this decoder produced."""
        if not self.scorers:
            return nbest
        return rescore_nbest(nbest, nbest.sessions, self.wvec)

    def translate(self, source, algorithm: str | None = None):
        """Decode and repair the n-best list; returns ``(1-best tokens, n-best, stats)``."""
        nbest = self.decode(source, algorithm)
        best = nbest.best.target
        repaired = self.rescore(nbest)
        return best, repaired, nbest.stats


def _first_unset(bits: int) -> int:
    return (~bits & (bits + 1)).bit_length() - 1
