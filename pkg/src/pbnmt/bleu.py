"""Corpus-level BLEU-4 against a single reference per sentence."""

from __future__ import annotations

import collections
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

MAX_ORDER = 4


class BleuError(ValueError):
    pass


@dataclass(frozen=True)
class BleuReport:
    bleu: float
    precisions: tuple[float, ...]
    brevity_penalty: float
    hyp_length: int
    ref_length: int
    matches: tuple[int, ...]
    totals: tuple[int, ...]

    def __str__(self):
        p = "/".join(f"{100 * x:.1f}" for x in self.precisions)
        return (f"BLEU = {100 * self.bleu:.2f}, {p} (BP={self.brevity_penalty:.3f}, "
                f"ratio={self.hyp_length / max(self.ref_length, 1):.3f}, "
                f"hyp_len={self.hyp_length}, ref_len={self.ref_length})")


def _ngrams(tokens: Sequence[str], n: int) -> collections.Counter:
    return collections.Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hypotheses: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
                smooth: bool = False) -> BleuReport:
    """BLEU with clipped n-gram counts pooled over the corpus.

    With ``smooth`` every order's match and total counts get +1 (for orders
    above one), so short corpora with a missing order don't collapse to 0.
    """
    if len(hypotheses) != len(references):
        raise BleuError(f"line count mismatch: {len(hypotheses)} hypotheses, "
                        f"{len(references)} references")
    matches = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, MAX_ORDER + 1):
            h = _ngrams(hyp, n)
            r = _ngrams(ref, n)
            matches[n - 1] += sum(min(c, r[g]) for g, c in h.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)

    precisions = []
    for n in range(MAX_ORDER):
        m, t = matches[n], totals[n]
        if smooth and n > 0:
            m, t = m + 1, t + 1
        precisions.append(m / t if t else 0.0)

    if hyp_len == 0:
        bp = 0.0
    elif hyp_len >= ref_len:
        bp = 1.0
    else:
        bp = math.exp(1 - ref_len / hyp_len)
    if min(precisions) <= 0:
        bleu = 0.0
    else:
        bleu = bp * math.exp(sum(math.log(p) for p in precisions) / MAX_ORDER)
    return BleuReport(bleu, tuple(precisions), bp, hyp_len, ref_len, tuple(matches), tuple(totals))


def bleu_files(hyp_path, ref_path, smooth: bool = False) -> BleuReport:
    hyps = Path(hyp_path).read_text(encoding="utf-8").splitlines()
    refs = Path(ref_path).read_text(encoding="utf-8").splitlines()
    if len(hyps) != len(refs):
        raise BleuError(f"line count mismatch: {hyp_path} has {len(hyps)} lines, "
                        f"{ref_path} has {len(refs)}")
    return corpus_bleu([h.split() for h in hyps], [r.split() for r in refs], smooth)
