import math

import pytest
from conftest import fixture_for

from pbnmt.fixture import decodable, extract_phrases, make_fixture, teacher_reference


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def _segmentable(table, words):
    """Exhaustive search over every segmentation of ``words``."""
    if not words:
        return True
    return any(table.lookup(words[:e]) and _segmentable(table, words[e:])
               for e in range(1, len(words) + 1))


def _contains(seq, sub):
    return any(tuple(seq[i : i + len(sub)]) == sub for i in range(len(seq) - len(sub) + 1))


class TestFixture:
    def test_same_seed_byte_identical(self, tmp_path):
        make_fixture(5, n_train=40, n_test=4).save(tmp_path / "a")
        make_fixture(5, n_train=40, n_test=4).save(tmp_path / "b")
        a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
        assert a == b and "decoder.ini" in a and "scorer0.params" in a

    def test_other_seed_differs(self, tmp_path):
        make_fixture(5, n_train=40, n_test=4).save(tmp_path / "a")
        make_fixture(6, n_train=40, n_test=4).save(tmp_path / "b")
        assert _files(tmp_path / "a")["test.src"] != _files(tmp_path / "b")["test.src"]

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_every_test_sentence_decodable(self, seed):
        fx = fixture_for(seed)
        for src in fx.test_sources:
            assert _segmentable(fx.phrase_table, list(src))
            assert decodable(fx.phrase_table, src)

    def test_decodable_oracle_agrees(self):
        fx = fixture_for(1)
        words = fx.source_vocab.tokens[2:]
        for i in range(len(words) - 2):
            sent = words[i : i + 3] + ["zzz"] * (i % 2)
            assert decodable(fx.phrase_table, sent) == _segmentable(fx.phrase_table, sent)

    def test_phrase_table_entries_in_corpus(self):
        fx = fixture_for(2)
        for entry in fx.phrase_table:
            assert any(_contains(s, entry.source) and _contains(t, entry.target)
                       for s, t, _ in fx.train), entry

    def test_translation_scores_are_relative_frequencies(self):
        fx = fixture_for(2)
        by_source = {}
        for entry in fx.phrase_table:
            by_source.setdefault(entry.source, []).append(entry.scores[0])
        for scores in by_source.values():
            assert sum(math.exp(s) for s in scores) == pytest.approx(1.0, abs=1e-9)

    def test_extract_phrases_consistency(self):
        # a b cross onto y x, c is unaligned and attaches to neighbouring spans
        pairs = extract_phrases(["a", "b", "c"], ["x", "y"], [(0, 1), (1, 0)], 3)
        assert pairs == [(("a",), ("y",)), (("a", "b"), ("x", "y")), (("a", "b", "c"), ("x", "y")),
                         (("b",), ("x",)), (("b", "c"), ("x",))]
        # b -> x and c -> x: the target x has a link outside [b], so b alone is inconsistent
        pairs = extract_phrases(["a", "b", "c"], ["x", "y"], [(0, 1), (1, 0), (2, 0)], 3)
        assert (("b",), ("x",)) not in pairs and (("b", "c"), ("x",)) in pairs

    def test_teacher_reference_reachable(self):
        fx = fixture_for(3)
        for src in fx.test_sources[:5]:
            ref = teacher_reference(fx, src)
            assert len(ref) >= len(src)
            assert ref == teacher_reference(fx, src)
