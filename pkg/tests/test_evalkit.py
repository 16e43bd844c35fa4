"""Retrieval metrics: hand values, metric axioms, brute-force parity."""

import numpy as np
import numpy.testing as npt
import pytest

from assph import evalkit
from assph.errors import ConfigError, DataError
from oracles import naive_average_precision, naive_hamming, naive_rank


def random_codes(rng, rows, k):
    return np.where(rng.standard_normal((rows, k)) >= 0, 1, -1).astype(np.int8)


class TestHamming:
    def test_examples(self):
        assert evalkit.hamming([1, 1, 1], [1, 1, 1]) == 0
        assert evalkit.hamming([1, 1, 1], [-1, -1, -1]) == 3
        assert evalkit.hamming([1, -1, 1, -1], [1, 1, 1, 1]) == 2

    def test_matrix_matches_scalar(self):
        rng = np.random.default_rng(0)
        q = random_codes(rng, 7, 16)
        d = random_codes(rng, 9, 16)
        expected = [[naive_hamming(a, b) for b in d] for a in q]
        npt.assert_array_equal(evalkit.hamming_matrix(q, d), expected)

    def test_metric_axioms(self):
        rng = np.random.default_rng(1)
        k = 16
        for _ in range(10_000):
            a, b, c = random_codes(rng, 3, k)
            dab = evalkit.hamming(a, b)
            assert 0 <= dab <= k
            assert dab == evalkit.hamming(b, a)
            assert evalkit.hamming(a, a) == 0
            assert dab <= evalkit.hamming(a, c) + evalkit.hamming(c, b)
            assert dab == int((a != b).sum())

    def test_rejects_non_binary(self):
        with pytest.raises(DataError, match="-1 or \\+1"):
            evalkit.hamming_matrix(np.zeros((2, 4)), np.ones((2, 4)))

    def test_rejects_length_mismatch(self):
        with pytest.raises(DataError, match="mismatch"):
            evalkit.hamming(np.ones(4), np.ones(5))


class TestRank:
    def test_exact_match_first_ties_by_index(self):
        q = np.array([[1, 1]])
        db = np.array([[1, -1], [-1, 1], [1, 1]])
        out = evalkit.rank(q, db)
        npt.assert_array_equal(out[0].ordering, [2, 0, 1])
        npt.assert_array_equal(out[0].distances, [0, 1, 1])

    def test_matches_scalar_ranker(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            q = random_codes(rng, 4, 8)
            db = random_codes(rng, 15, 8)
            got = evalkit.rank(q, db)
            expected = naive_rank(q, db)
            for qi in range(4):
                npt.assert_array_equal(got[qi].ordering, expected[qi])

    def test_distances_non_decreasing(self):
        rng = np.random.default_rng(3)
        q = random_codes(rng, 5, 12)
        db = random_codes(rng, 40, 12)
        for r in evalkit.rank(q, db):
            assert (np.diff(r.distances) >= 0).all()


class TestAveragePrecision:
    def test_hand_values(self):
        assert evalkit.average_precision([1, 1, 0]) == pytest.approx(1.0)
        assert evalkit.average_precision([0, 1]) == pytest.approx(0.5)
        assert evalkit.average_precision([1, 0, 1]) == pytest.approx(
            (1.0 + 2.0 / 3.0) / 2.0)
        assert evalkit.average_precision([0, 0, 0]) == 0.0

    def test_cutoff_window(self):
        flags = [0, 1, 0, 1]
        # within the first two entries only the rank-2 hit counts
        assert evalkit.average_precision(flags, cutoff=2) == pytest.approx(0.5)
        assert evalkit.average_precision(flags, cutoff=1) == 0.0
        assert evalkit.average_precision(flags, cutoff=4) == pytest.approx(
            (0.5 + 0.5) / 2.0)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            flags = (rng.random(rng.integers(1, 30)) < 0.3).astype(int)
            cutoff = int(rng.integers(1, 35))
            assert evalkit.average_precision(flags) == pytest.approx(
                naive_average_precision(list(flags)))
            assert evalkit.average_precision(flags, cutoff) == pytest.approx(
                naive_average_precision(list(flags), cutoff))

    def test_rejects_bad_flags(self):
        with pytest.raises(DataError, match="0/1"):
            evalkit.average_precision([0, 2, 1])
        with pytest.raises(ConfigError, match="cutoff"):
            evalkit.average_precision([1], cutoff=0)


class TestRelevance:
    def test_any_shared_label(self):
        q = np.array([[1, 0, 1], [0, 1, 0]])
        d = np.array([[1, 0, 0], [0, 0, 1], [0, 1, 0]])
        npt.assert_array_equal(evalkit.relevance_matrix(q, d),
                               [[1, 1, 0], [0, 0, 1]])

    def test_shape_mismatch(self):
        with pytest.raises(DataError, match="incompatible"):
            evalkit.relevance_matrix(np.ones((2, 3)), np.ones((2, 4)))


class TestMapEval:
    def _hand_fixture(self):
        q = np.array([[1, 1, 1, 1]])
        db = np.array([[1, 1, 1, 1], [1, 1, 1, -1],
                       [1, -1, -1, -1], [-1, -1, -1, -1]])
        ql = np.array([[1, 0]])
        dl = np.array([[1, 0], [0, 1], [1, 0], [0, 1]])
        return q, db, ql, dl

    def test_hand_fixture(self):
        q, db, ql, dl = self._hand_fixture()
        # ranked relevance flags are [1, 0, 1, 0]
        assert evalkit.map_eval(q, db, ql, dl) == pytest.approx(
            (1.0 + 2.0 / 3.0) / 2.0)
        assert evalkit.map_eval(q, db, ql, dl, cutoff=2) == pytest.approx(1.0)

    def test_perfect_codes(self):
        rng = np.random.default_rng(5)
        db = random_codes(rng, 20, 16)
        labels = np.zeros((20, 4), dtype=int)
        labels[np.arange(20), np.arange(20) % 4] = 1
        # queries are exact copies of relevant-only neighborhoods: give every
        # class one unique code so distance 0 <=> same class
        class_codes = random_codes(rng, 4, 16)
        db = class_codes[np.arange(20) % 4]
        q = class_codes.copy()
        ql = np.eye(4, dtype=int)
        assert evalkit.map_eval(q, db, ql, labels) == pytest.approx(1.0)

    def test_random_codes_near_prior(self):
        rng = np.random.default_rng(6)
        q = random_codes(rng, 60, 8)
        db = random_codes(rng, 300, 8)
        ql = np.zeros((60, 2), dtype=int)
        ql[np.arange(60) % 2 == 0, 0] = 1
        ql[np.arange(60) % 2 == 1, 1] = 1
        dl = np.zeros((300, 2), dtype=int)
        dl[np.arange(300) % 2 == 0, 0] = 1
        dl[np.arange(300) % 2 == 1, 1] = 1
        score = evalkit.map_eval(q, db, ql, dl)
        assert 0.40 < score < 0.65

    def test_row_mismatch(self):
        q, db, ql, dl = self._hand_fixture()
        with pytest.raises(DataError, match="mismatch"):
            evalkit.map_eval(q, db, ql, dl[:3])


def naive_pr_curve(dist, rel):
    """Scalar mirror of the radius-parameterized PR protocol."""
    n_q, _ = dist.shape
    eligible = [qi for qi in range(n_q) if rel[qi].sum() > 0]
    raw = []
    for radius in range(int(dist.max()) + 1):
        precs, recs = [], []
        for qi in eligible:
            hit = [di for di in range(dist.shape[1]) if dist[qi, di] <= radius]
            got = sum(rel[qi, di] for di in hit)
            precs.append(got / len(hit) if hit else 0.0)
            recs.append(got / rel[qi].sum())
        raw.append((float(np.mean(recs)), float(np.mean(precs))))
    out, seen = [], set()
    for rec, prec in raw:
        if rec in seen:
            continue
        seen.add(rec)
        if 0.0 < rec < 1.0:
            out.append((rec, prec))
    return out


class TestCurves:
    def test_topk_hand_case(self):
        q = np.array([[1, 1, 1, 1]])
        db = np.array([[1, 1, 1, 1], [1, 1, 1, -1],
                       [1, -1, -1, -1], [-1, -1, -1, -1]])
        rel = np.array([[1, 0, 1, 0]])
        rankings = evalkit.rank(q, db)
        _, topk = evalkit.curves(rankings, rel, [2, 4])
        assert topk == [(2, 0.5), (4, 0.5)]

    def test_topk_denominator_is_k(self):
        # k beyond the database size still divides by k
        q = np.array([[1, 1]])
        db = np.array([[1, 1], [1, -1]])
        rel = np.array([[1, 1]])
        _, topk = evalkit.curves(evalkit.rank(q, db), rel, [4])
        assert topk == [(4, 0.5)]

    def test_pr_single_intermediate_point(self):
        # relevant at distances 0 and 2, an irrelevant item at distance 1
        q = np.array([[1, 1, 1, 1]])
        db = np.array([[1, 1, 1, 1], [1, 1, 1, -1], [1, 1, -1, -1]])
        rel = np.array([[1, 0, 1]])
        pr, _ = evalkit.curves(evalkit.rank(q, db), rel, [1])
        # radius 1 repeats recall 0.5 -> deduplicated; radius 2 reaches
        # recall 1 -> endpoint dropped; only radius 0 survives
        assert pr == [(0.5, 1.0)]

    def test_pr_matches_scalar_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            q = random_codes(rng, 6, 8)
            db = random_codes(rng, 25, 8)
            rel = (rng.random((6, 25)) < 0.3).astype(int)
            rankings = evalkit.rank(q, db)
            dist = evalkit.hamming_matrix(q, db)
            got, _ = evalkit.curves(rankings, rel, [5])
            npt.assert_allclose(got, naive_pr_curve(dist, rel), atol=1e-12)

    def test_no_relevant_queries(self):
        q = np.array([[1, 1]])
        db = np.array([[1, 1], [1, -1]])
        pr, topk = evalkit.curves(evalkit.rank(q, db), np.zeros((1, 2), int), [1])
        assert pr == []
        assert topk == [(1, 0.0)]

    def test_bad_k_grid(self):
        q = np.array([[1, 1]])
        db = np.array([[1, 1]])
        with pytest.raises(ConfigError, match="k_grid"):
            evalkit.curves(evalkit.rank(q, db), np.ones((1, 1), int), [5, 2])


class TestReport:
    def _report(self):
        rng = np.random.default_rng(8)
        q = random_codes(rng, 10, 8)
        db = random_codes(rng, 30, 8)
        ql = (rng.random((10, 3)) < 0.5).astype(int)
        ql[ql.sum(axis=1) == 0, 0] = 1
        dl = (rng.random((30, 3)) < 0.5).astype(int)
        dl[dl.sum(axis=1) == 0, 0] = 1
        return evalkit.evaluate_direction("i2t", q, db, ql, dl,
                                          map_cutoffs=[5, 50])

    def test_auto_k_grid_caps_at_db_size(self):
        report = self._report()
        ks = [k for k, _ in report.topk_curve]
        assert ks == sorted(ks)
        assert ks[-1] == 30
        assert all(k <= 30 for k in ks)

    def test_json_roundtrip(self, tmp_path):
        report = self._report()
        path = tmp_path / "report.json"
        report.save_json(str(path))
        back = evalkit.load_report(str(path))
        assert back.direction == "i2t"
        assert back.code_length == 8
        assert back.map_all == pytest.approx(report.map_all)
        assert back.map_at == {5: pytest.approx(report.map_at[5]),
                               50: pytest.approx(report.map_at[50])}
        npt.assert_allclose(back.pr_curve, report.pr_curve)
        npt.assert_allclose(back.topk_curve, report.topk_curve)

    def test_csv_layout(self, tmp_path):
        report = self._report()
        pr_path = tmp_path / "pr.csv"
        topk_path = tmp_path / "topk.csv"
        report.save_curves_csv(str(pr_path), str(topk_path))
        pr_lines = pr_path.read_text().splitlines()
        assert pr_lines[0] == "recall,precision"
        assert len(pr_lines) == 1 + len(report.pr_curve)
        topk_lines = topk_path.read_text().splitlines()
        assert topk_lines[0] == "k,precision"
        assert len(topk_lines) == 1 + len(report.topk_curve)
        first_k = int(topk_lines[1].split(",")[0])
        assert first_k == report.topk_curve[0][0]
