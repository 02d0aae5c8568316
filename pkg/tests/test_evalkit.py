import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bivgs.encoders import Checkpoint, Encoder
from bivgs.errors import ContractError
from bivgs.evalkit import (
    DIRECTIONS,
    RetrievalReport,
    evaluate,
    format_table,
    ground_truth_ranks,
    recall_at_k,
    similarity_matrix,
)
from oracles import full_sort_recall


class TestSimilarityMatrix:
    def test_orthonormal_identity(self):
        np.testing.assert_array_equal(similarity_matrix(np.eye(4), np.eye(4)).values, np.eye(4))

    def test_normalized_bounded(self):
        x = np.random.default_rng(0).standard_normal((20, 6))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        s = similarity_matrix(x, x[::-1]).values
        assert np.all(np.abs(s) <= 1 + 1e-12)

    def test_double_loop(self):
        rng = np.random.default_rng(1)
        q, g = rng.standard_normal((7, 5)), rng.standard_normal((9, 5))
        s = similarity_matrix(q, g).values
        for i in range(7):
            for j in range(9):
                assert abs(s[i, j] - sum(q[i, t] * g[j, t] for t in range(5))) < 1e-12

    def test_dim_mismatch(self):
        with pytest.raises(ContractError):
            similarity_matrix(np.ones((2, 3)), np.ones((2, 4)))


class TestRecall:
    def test_identity(self):
        assert recall_at_k(np.eye(10), 1) == 1.0

    def test_sixth_largest(self):
        n = 12
        m = np.zeros((n, n))
        for i in range(n):
            others = [j for j in range(n) if j != i]
            for r, j in enumerate(others):
                m[i, j] = 100.0 - r
            m[i, i] = 100.0 - 4.5  # five entries above it
        assert recall_at_k(m, 5) == 0.0
        assert recall_at_k(m, 6) == 1.0
        assert recall_at_k(m, 10) == 1.0

    def test_ties_broken_by_index(self):
        m = np.ones((3, 3))
        assert ground_truth_ranks(m).tolist() == [0, 1, 2]
        assert recall_at_k(m, 1) == pytest.approx(1 / 3)

    @pytest.mark.parametrize("k", [1, 5, 10])
    def test_fifty_by_fifty_oracle(self, k):
        m = np.random.default_rng(7).standard_normal((50, 50))
        assert recall_at_k(m, k) == full_sort_recall(m, k)

    def test_k_out_of_range(self):
        with pytest.raises(ContractError):
            recall_at_k(np.eye(4), 0)
        with pytest.raises(ContractError):
            recall_at_k(np.eye(4), 5)

    def test_non_square(self):
        with pytest.raises(ContractError):
            ground_truth_ranks(np.ones((3, 4)))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 40), st.integers(0, 10_000), st.booleans())
    def test_monotone_and_rank_invariant(self, n, seed, coarse):
        m = np.random.default_rng(seed).standard_normal((n, n))
        if coarse:
            m = np.round(m)  # plenty of exact ties
        r = [recall_at_k(m, k) for k in range(1, n + 1)]
        assert all(a <= b for a, b in zip(r, r[1:]))
        assert r[-1] == 1.0
        for f in (np.exp, lambda x: 3 * x - 7, np.arctan):
            assert [recall_at_k(f(m), k) for k in range(1, n + 1)] == r


class TestEvaluate:
    def test_untrained_near_chance(self, small_ds):
        val = small_ds.splits["validation"]
        enc = {r: Encoder.init(r, d, 16, (32,), seed=5) for r, d in
               (("image", val.images.shape[1]), ("hrl", val.cap1.shape[2]), ("lrl", val.cap2.shape[2]))}
        rep = evaluate(Checkpoint(enc, {}, 0, "init"), val)
        for d in DIRECTIONS:
            assert rep.get(d, 1) < 0.05

    def test_monolingual_has_no_hrl_directions(self, small_ds):
        val = small_ds.splits["validation"]
        enc = {"image": Encoder.init("image", val.images.shape[1], 8),
               "lrl": Encoder.init("lrl", val.cap2.shape[2], 8)}
        rep = evaluate(Checkpoint(enc, {}, 0, "Monolingual"), val)
        assert set(rep.recalls) == {"LRL->I", "I->LRL"}

    def test_deterministic(self, small_ds):
        val = small_ds.splits["validation"]
        enc = {r: Encoder.init(r, d, 8) for r, d in
               (("image", val.images.shape[1]), ("hrl", val.cap1.shape[2]), ("lrl", val.cap2.shape[2]))}
        ck = Checkpoint(enc, {"seed": 3}, 0, "x")
        a, b = evaluate(ck, val), evaluate(ck, val)
        assert a.to_csv() == b.to_csv()
        assert a.seed == 3


def test_report_csv_and_table():
    rep = RetrievalReport({"LRL->I": {1: 0.25, 5: 0.5, 10: 0.75}}, 200, "Ours", 1)
    assert rep.to_csv().splitlines() == [
        "variant,seed,direction,k,recall",
        "Ours,1,LRL->I,1,0.25",
        "Ours,1,LRL->I,5,0.5",
        "Ours,1,LRL->I,10,0.75",
    ]
    table = format_table([rep])
    assert "LRL->I" in table and "Ours (seed 1)" in table and "0.750" in table
