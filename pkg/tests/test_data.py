import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from ltu import data as D
from ltu.diffnum import ModelSpec, init_params
from oracles import brute_nearest, brute_sqdist


class TestGenerators:
    def test_blobs_size_contract(self):
        ds = D.gen_blobs(10, 2, 2, 0.1, 0)
        assert len(ds) == 20 and set(ds.y.tolist()) == {0, 1} and ds.dim == 2

    def test_blobs_deterministic(self):
        a, b = D.gen_blobs(10, 3, 4, 0.2, 5), D.gen_blobs(10, 3, 4, 0.2, 5)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)

    def test_blobs_bad_size(self):
        with pytest.raises(ValueError):
            D.gen_blobs(0, 2, 2, 0.1, 0)

    def test_moons(self):
        ds = D.gen_moons(101, 0.1, 0)
        assert len(ds) == 101 and set(ds.y.tolist()) == {0, 1}
        assert np.array_equal(ds.X, D.gen_moons(101, 0.1, 0).X)

    def test_dataset_rejects_bad_labels(self):
        with pytest.raises(ValueError):
            D.Dataset(np.zeros((2, 1)), [0, 3], 3)


class TestCsv:
    def test_round_trip(self, tmp_path):
        ds = D.gen_blobs(7, 3, 4, 0.5, 1)
        for header in (False, True):
            path = tmp_path / f"d{header}.csv"
            D.save_csv(ds, path, header=header)
            back = D.load_csv(path, n_classes=3)
            assert np.array_equal(back.X, ds.X) and np.array_equal(back.y, ds.y)

    def test_header_autodetect(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("a,b,label\n1.0,2.0,1\n3.0,4.0,0\n")
        ds = D.load_csv(p)
        assert len(ds) == 2 and ds.n_classes == 2

    @pytest.mark.parametrize(
        "body,line",
        [
            ("1.0,2.0,1\n3.0,0\n", 2),
            ("1.0,2.0,1\n1.0,x,0\n", 2),
            ("1.0,2.0,1\n1.0,2.0,1.5\n", 2),
            ("1.0,2.0,-1\n", 1),
            ("7\n", 1),
        ],
    )
    def test_malformed_rows_report_line(self, tmp_path, body, line):
        p = tmp_path / "bad.csv"
        p.write_text(body)
        with pytest.raises(D.DataFormatError, match=f":{line}:"):
            D.load_csv(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("x,y\n")
        with pytest.raises(D.DataFormatError):
            D.load_csv(p)


class TestSplit:
    def test_sizes(self):
        ds = D.gen_blobs(30, 4, 2, 0.3, 0)
        sp = D.make_split(ds, 0.1, 0.3, 0, n_test=20)
        assert (len(sp.forget), len(sp.remain), len(sp.remain_subset), len(sp.test)) == (10, 90, 27, 20)

    def test_half_forget(self):
        ds = D.gen_blobs(30, 4, 2, 0.3, 0)
        sp = D.make_split(ds, 0.5, 0.3, 0, n_test=20)
        assert len(sp.forget) == len(sp.remain)

    def test_desk_sizes(self):
        ds = D.gen_blobs(313, 8, 2, 0.3, 0)
        sp = D.make_split(ds, 0.1, 0.3, 0, n_test=500, n_train=2000)
        assert (len(sp.forget), len(sp.remain), len(sp.test)) == (200, 1800, 500)

    @given(st.floats(0.05, 0.6), st.floats(0.1, 0.95), st.integers(0, 10_000))
    def test_identity_invariants(self, fr, rho, seed):
        ds = D.gen_blobs(15, 4, 2, 0.3, 0)
        sp = D.make_split(ds, fr, rho, seed, n_test=10)
        f, r, s, t = (set(x.ids.tolist()) for x in (sp.forget, sp.remain, sp.remain_subset, sp.test))
        # brute-force pairwise identity scan
        assert not any(a == b for a in sp.forget.ids for b in sp.remain.ids)
        assert s <= r and not (t & (f | r))
        assert len(f) + len(r) == len(ds) - 10
        assert len(s) == round(rho * len(r))
        assert np.array_equal(sp.forget.X, ds.X[sp.forget.ids])

    @pytest.mark.parametrize("fr,rho", [(0.0, 0.3), (1.0, 0.3), (0.1, 0.0), (0.1, 1.0), (0.001, 0.3)])
    def test_degenerate_ratios(self, fr, rho):
        with pytest.raises(ValueError):
            D.make_split(D.gen_blobs(10, 2, 2, 0.3, 0), fr, rho, 0, n_test=4)

    def test_deterministic(self):
        ds = D.gen_blobs(20, 3, 2, 0.3, 0)
        a, b = D.make_split(ds, 0.2, 0.3, 9), D.make_split(ds, 0.2, 0.3, 9)
        assert np.array_equal(a.forget.ids, b.forget.ids) and np.array_equal(a.remain_subset.ids, b.remain_subset.ids)


class TestSupport:
    def test_binary_flips(self):
        f = D.Dataset(np.zeros((50, 1)), np.arange(50) % 2, 2)
        s = D.build_support(f, 0)
        assert np.array_equal(s.assigned, 1 - f.y) and len(s) == 50

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            D.build_support(D.Dataset(np.zeros((3, 1)), [0, 0, 0], 1), 0)

    def test_never_keeps_label_and_uniform(self):
        C, n = 5, 10_000
        f = D.Dataset(np.zeros((n, 1)), np.full(n, 2), C)
        s = D.build_support(f, 3)
        assert np.all(s.assigned != 2) and np.array_equal(s.original, f.y)
        counts = np.bincount(s.assigned, minlength=C)[[0, 1, 3, 4]]
        assert stats.chisquare(counts).pvalue > 1e-3

    def test_ids_preserved(self, blob_split):
        s = D.build_support(blob_split.forget, 0)
        assert np.array_equal(s.ids, blob_split.forget.ids)
        assert s.as_dataset().n_classes == blob_split.n_classes


def _extractor(split):
    spec = ModelSpec((2, 6, split.n_classes))
    return D.FeatureExtractor(spec, init_params(spec, 0))


class TestSamplers:
    def test_z1_matches_brute_force(self, blob_split):
        ex = _extractor(blob_split)
        sub, forget = blob_split.remain_subset, blob_split.forget
        anchors, nn = D.sample_z1_indices(sub, forget, ex, len(sub), 0)
        ref = brute_nearest(ex(forget.X[anchors]), ex(sub.X))
        assert np.array_equal(nn, ref)

    def test_z1_zero_distance(self, blob_split):
        sub = blob_split.remain_subset
        forget = sub.take([3])
        out = D.sample_z1(sub, forget, _extractor(blob_split), 5, 0)
        assert np.all(out.ids == sub.ids[3])

    def test_z1_single_anchor_repeats(self, blob_split):
        sub = blob_split.remain_subset
        out = D.sample_z1(sub, blob_split.forget.take([0]), _extractor(blob_split), len(sub), 0)
        assert len(set(out.ids.tolist())) == 1 and len(out) == len(sub)

    def test_z1_empty_pool(self, blob_split):
        empty = blob_split.remain_subset.take([])
        with pytest.raises(ValueError):
            D.sample_z1(empty, blob_split.forget, _extractor(blob_split), 1, 0)

    def test_z2_same_class(self, blob_split):
        sub = blob_split.remain_subset
        anchor = D.Dataset(np.zeros((1, 2)), [int(sub.y[0])], sub.n_classes)
        out = D.sample_z2(sub, anchor, D.OneHotVectorizer(sub.n_classes), 10, 0)
        assert np.all(out.y == sub.y[0])

    def test_z2_optimal_distance(self, blob_split):
        vec = D.OneHotVectorizer(blob_split.n_classes)
        sub, forget = blob_split.remain_subset, blob_split.forget
        anchors, picks = D.sample_z2_indices(sub, forget, vec, 8, 1)
        dist = brute_sqdist(vec(forget.y[anchors]), vec(sub.y))
        assert np.all(dist[np.arange(8), picks] == dist.min(axis=1))

    def test_z2_no_shared_label_uniform_ties(self):
        C = 3
        sub = D.Dataset(np.zeros((6, 1)), [1] * 6, C)
        anchor = D.Dataset(np.zeros((1, 1)), [0], C)
        picks = [D.sample_z2_indices(sub, anchor, D.OneHotVectorizer(C), 1, s)[1][0] for s in range(6000)]
        counts = np.bincount(picks, minlength=6)
        assert stats.chisquare(counts).pvalue > 1e-3

    def test_z3_permutation_and_determinism(self, blob_split):
        sub = blob_split.remain_subset
        a = D.sample_z3(sub, len(sub), 4)
        assert sorted(a.ids.tolist()) == sorted(sub.ids.tolist())
        assert np.array_equal(a.ids, D.sample_z3(sub, len(sub), 4).ids)

    def test_z3_k_too_large(self, blob_split):
        with pytest.raises(ValueError):
            D.sample_z3(blob_split.remain_subset, len(blob_split.remain_subset) + 1, 0)

    def test_query_bundle(self, blob_split):
        k = 5
        b = D.build_query_bundle(blob_split, _extractor(blob_split), D.OneHotVectorizer(blob_split.n_classes), k, 0)
        assert len(b) == 3 and b.provenance == ["feature_nn", "label_nn", "random"]
        sub_ids = set(blob_split.remain_subset.ids.tolist())
        forget_ids = set(blob_split.forget.ids.tolist())
        for q in b.query_sets:
            assert len(q) == k
            assert set(q.ids.tolist()) <= sub_ids
            assert not set(q.ids.tolist()) & forget_ids
