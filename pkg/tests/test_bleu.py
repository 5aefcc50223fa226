import math

import pytest

from pbnmt.bleu import BleuError, bleu_files, corpus_bleu

HYPS = ["the cat sat on the mat".split(), "a dog".split()]
REFS = ["the cat is on the mat".split(), "a dog barks".split()]


class TestBleu:
    def test_identical(self):
        r = corpus_bleu(REFS, REFS)
        assert r.bleu == 1.0 and r.brevity_penalty == 1.0

    def test_no_overlap(self):
        r = corpus_bleu([["x", "y", "z", "w"]], [["a", "b", "c", "d"]])
        assert r.bleu == 0.0 and r.precisions[0] == 0.0

    def test_hand_counts(self):
        r = corpus_bleu(HYPS, REFS)
        # unigrams 5/6 + 2/2, bigrams 3/5 + 1/1, trigrams 1/4, 4-grams 0/3
        assert r.matches == (7, 4, 1, 0) and r.totals == (8, 6, 4, 3)
        assert (r.hyp_length, r.ref_length) == (8, 9)
        assert r.brevity_penalty == pytest.approx(math.exp(1 - 9 / 8))
        assert r.bleu == 0.0

    def test_hand_counts_smoothed(self):
        r = corpus_bleu(HYPS, REFS, smooth=True)
        assert r.precisions == pytest.approx((7 / 8, 5 / 7, 2 / 5, 1 / 4))
        # the smoothed precisions multiply to 1/16
        assert r.bleu == pytest.approx(math.exp(-0.125) * 0.5)

    def test_geometric_mean(self):
        r = corpus_bleu([list("abcde")], [list("abcdf")])
        assert r.precisions == pytest.approx((4 / 5, 3 / 4, 2 / 3, 1 / 2))
        assert r.bleu == pytest.approx(0.2 ** 0.25)

    def test_clipping(self):
        r = corpus_bleu([["the"] * 4], [["the", "cat"]])
        assert r.matches[0] == 1

    def test_empty_hypothesis(self):
        r = corpus_bleu([[]], [["a"]])
        assert r.bleu == 0.0 and r.brevity_penalty == 0.0

    def test_mismatch(self):
        with pytest.raises(BleuError, match="line count"):
            corpus_bleu(HYPS, REFS[:1])

    def test_files(self, tmp_path):
        (tmp_path / "h").write_text("\n".join(" ".join(h) for h in HYPS) + "\n")
        (tmp_path / "r").write_text("\n".join(" ".join(h) for h in REFS) + "\n")
        assert bleu_files(tmp_path / "h", tmp_path / "r", smooth=True) == corpus_bleu(HYPS, REFS, True)
        (tmp_path / "r").write_text("one line\n")
        with pytest.raises(BleuError, match="line count"):
            bleu_files(tmp_path / "h", tmp_path / "r")

    def test_report_text(self):
        assert str(corpus_bleu(REFS, REFS)).startswith("BLEU = 100.00, 100.0/100.0/100.0/100.0")
