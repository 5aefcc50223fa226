import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbnmt.averaging import average_files, average_models, average_params, pairwise_average
from pbnmt.scorer import ModelError, ModelParams, init_params, load_model, save_model


def model(seed, **kw):
    return init_params(seed, 6, 7, emb_size=3, hidden_size=4, att_size=5, **kw)


def assert_same(a, b):
    assert a.names() == b.names()
    for k in a.names():
        assert np.array_equal(a[k], b[k]), k


class TestAverage:
    @pytest.mark.parametrize("copies", [1, 2, 4, 8])
    def test_copies_exact(self, copies):
        m = model(0)
        assert_same(average_params([m] * copies), m)

    def test_two_models_match_mean_oracle(self):
        a, b = model(1), model(2)
        avg = average_params([a, b])
        for k in a.names():
            for x, y, got in zip(a[k].ravel(), b[k].ravel(), avg[k].ravel()):
                lo, hi = sorted((float(x), float(y)))
                assert got == (lo + hi) / 2

    def test_ten_models_match_pairwise_tree(self):
        models = [model(s) for s in range(10)]
        avg, tree = average_params(models), pairwise_average(models)
        for k in avg.names():
            np.testing.assert_allclose(avg[k], tree[k], rtol=0, atol=1e-12)

    def test_permutation_invariant(self):
        models = [model(s) for s in range(5)]
        ref = average_params(models)
        for perm in itertools.islice(itertools.permutations(models), 0, 120, 7):
            got = average_params(list(perm))
            for k in ref.names():
                assert np.max(np.abs(got[k] - ref[k])) <= 1e-12

    @given(st.integers(1, 6), st.integers(0, 1000))
    @settings(max_examples=20, deadline=None)
    def test_linearity(self, k, seed):
        m, other = model(seed), model(seed + 1)
        got = average_params([m] * k + [other])
        for name in m.names():
            np.testing.assert_allclose(got[name], (k * m[name] + other[name]) / (k + 1),
                                       rtol=0, atol=1e-12)

    def test_empty(self):
        with pytest.raises(ModelError, match="at least one"):
            average_params([])

    def test_shape_mismatch_names_parameter_and_files(self, tmp_path):
        save_model(model(0), tmp_path / "a.params")
        save_model(init_params(0, 6, 7, emb_size=3, hidden_size=5, att_size=5), tmp_path / "b.params")
        with pytest.raises(ModelError) as err:
            average_models([tmp_path / "a.params", tmp_path / "b.params"])
        msg = str(err.value)
        assert "a.params" in msg and "b.params" in msg and "shape mismatch for parameter" in msg

    def test_missing_parameter_names_files(self, tmp_path):
        save_model(model(0), tmp_path / "bi.params")
        save_model(model(0, bidirectional=False), tmp_path / "uni.params")
        with pytest.raises(ModelError, match="enc_r_.* not present in both .*bi.params and .*uni.params"):
            average_models([tmp_path / "bi.params", tmp_path / "uni.params"])

    def test_files_roundtrip(self, tmp_path):
        paths = []
        for s in range(3):
            paths.append(tmp_path / f"m{s}.params")
            save_model(model(s), paths[-1])
        out = tmp_path / "avg.params"
        avg = average_files(paths, out)
        loaded = load_model(out)
        for k in avg.names():
            np.testing.assert_allclose(loaded[k], avg[k], rtol=1e-6, atol=1e-7)

    def test_disk_copies_exact(self, tmp_path):
        save_model(model(3), tmp_path / "m.params")
        m = load_model(tmp_path / "m.params")
        assert_same(average_models([tmp_path / "m.params"] * 2), m)
        average_files([tmp_path / "m.params"] * 2, tmp_path / "out.params")
        assert (tmp_path / "out.params").read_bytes() == (tmp_path / "m.params").read_bytes()
