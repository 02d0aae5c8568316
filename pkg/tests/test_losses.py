import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bivgs import numcore as nc
from bivgs.errors import ContractError
from bivgs.losses import (
    FULL_MASK,
    MONOLINGUAL_MASK,
    base_loss,
    infonce,
    nn_loss,
    total_loss,
)
from oracles import loop_infonce


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


class TestInfoNCE:
    @pytest.mark.parametrize("n", [2, 4, 16])
    def test_identical_rows_give_log_n(self, n):
        z = np.tile([[0.6, 0.8, 0.0]], (n, 1))
        assert abs(infonce(z, z, 0.3).item() - math.log(n)) < 1e-9

    def test_single_row_is_zero(self):
        z = np.array([[0.3, -0.2]])
        assert infonce(z, z[::-1] * 5, 0.7).item() == 0.0

    def test_orthonormal_pair_closed_form(self):
        e = np.eye(2)
        assert abs(infonce(e, e, 1.0).item() - math.log1p(math.exp(-1))) < 1e-9
        assert abs(infonce(e, e, 1.0).item() - 0.3132616875182228) < 1e-12

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        z1, z2 = unit_rows(rng, 7, 5), unit_rows(rng, 7, 5)
        ref = loop_infonce(z1.tolist(), z2.tolist(), 0.3)
        assert abs(infonce(z1, z2, 0.3).item() - ref) < 1e-12

    def test_one_directional(self):
        rng = np.random.default_rng(0)
        z1, z2 = unit_rows(rng, 6, 4), unit_rows(rng, 6, 4)
        assert abs(infonce(z1, z2, 0.3).item() - infonce(z2, z1, 0.3).item()) > 1e-6

    def test_symmetric_is_average(self):
        rng = np.random.default_rng(1)
        z1, z2 = unit_rows(rng, 6, 4), unit_rows(rng, 6, 4)
        both = 0.5 * (loop_infonce(z1.tolist(), z2.tolist(), 0.5) + loop_infonce(z2.tolist(), z1.tolist(), 0.5))
        assert abs(infonce(z1, z2, 0.5, symmetric=True).item() - both) < 1e-12

    def test_contract_errors(self):
        with pytest.raises(ContractError):
            infonce(np.ones((3, 2)), np.ones((4, 2)), 0.3)
        with pytest.raises(ContractError):
            infonce(np.ones((3, 2)), np.ones((3, 5)), 0.3)
        with pytest.raises(ContractError):
            infonce(np.ones((3, 2)), np.ones((3, 2)), 0.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 12), st.floats(0.05, 5.0), st.integers(0, 10_000))
    def test_nonnegative_and_bounded(self, n, tau, seed):
        # unit rows: every logit lies in [-1/tau, 1/tau]
        rng = np.random.default_rng(seed)
        val = infonce(unit_rows(rng, n, 3), unit_rows(rng, n, 3), tau).item()
        assert val >= -1e-12
        assert val <= math.log(n) + 2.0 / tau + 1e-9


class TestBaseLoss:
    def test_identical_rows_full_mask(self):
        z = np.tile([[1.0, 0.0]], (3, 1))
        terms = base_loss(z, z, z, 0.3)
        assert set(terms) == FULL_MASK
        assert abs(sum(t.item() for t in terms.values()) - 3 * math.log(3)) < 1e-12

    def test_monolingual_mask_is_single_term(self):
        rng = np.random.default_rng(2)
        a2, v = unit_rows(rng, 5, 4), unit_rows(rng, 5, 4)
        terms = base_loss(None, a2, v, 0.3, MONOLINGUAL_MASK)
        assert list(terms) == ["av2"]
        assert terms["av2"].item() == infonce(a2, v, 0.3).item()

    @pytest.mark.parametrize("seed", range(5))
    def test_recomposition(self, seed):
        rng = np.random.default_rng(seed)
        a1, a2, v = (unit_rows(rng, 8, 6) for _ in range(3))
        got = sum(t.item() for t in base_loss(a1, a2, v, 0.3).values())
        ref = sum(loop_infonce(x.tolist(), y.tolist(), 0.3) for x, y in ((a1, v), (a2, v), (a1, a2)))
        assert abs(got - ref) < 1e-12

    def test_unknown_term(self):
        with pytest.raises(ContractError):
            base_loss(np.eye(2), np.eye(2), np.eye(2), 0.3, {"av3"})

    def test_missing_embedding(self):
        with pytest.raises(ContractError):
            base_loss(None, np.eye(2), np.eye(2), 0.3, FULL_MASK)


class TestNNLoss:
    def test_five_way_orthonormal(self):
        e = np.eye(5)
        ref = -math.log(math.e / (math.e + 4.0))
        assert abs(nn_loss(e, e, 1.0).item() - ref) < 1e-12
        assert abs(nn_loss(e, e, 1.0).item() - loop_infonce(e.tolist(), e.tolist(), 1.0)) < 1e-12

    def test_single_row(self):
        assert nn_loss([[0.0, 1.0]], [[1.0, 0.0]], 0.3).item() == 0.0

    def test_no_gradient_to_selected(self):
        rng = np.random.default_rng(3)
        sel = nc.parameter(unit_rows(rng, 4, 3))
        z2 = nc.parameter(unit_rows(rng, 4, 3))
        grads = nc.backward(nn_loss(sel, z2, 0.3))
        assert sel not in grads and sel.grad is None
        assert np.any(grads[z2] != 0)

    def test_row_count_mismatch(self):
        with pytest.raises(ContractError):
            nn_loss(np.eye(3), np.eye(4)[:2, :3], 0.3)


class TestTotalLoss:
    def test_without_nn_equals_base(self):
        rng = np.random.default_rng(4)
        a1, a2, v = (unit_rows(rng, 6, 3) for _ in range(3))
        node, rep = total_loss(base_loss(a1, a2, v, 0.3))
        assert rep.l_nn == 0.0
        assert rep.total == node.item()
        assert abs(rep.total - rep.l_base) < 1e-12

    def test_empty_is_zero(self):
        node, rep = total_loss({})
        assert node.item() == 0.0 and rep.total == 0.0
        assert rep.l_av1 is None and rep.l_av2 is None and rep.l_a1a2 is None

    @pytest.mark.parametrize("seed", range(5))
    def test_recomposition_with_nn(self, seed):
        rng = np.random.default_rng(seed)
        a1, a2, v, sel = (unit_rows(rng, 6, 4) for _ in range(4))
        _, rep = total_loss(base_loss(a1, a2, v, 0.3), [nn_loss(sel, a2, 0.3)])
        ref = sum(loop_infonce(x.tolist(), y.tolist(), 0.3) for x, y in ((a1, v), (a2, v), (a1, a2), (sel, a2)))
        assert abs(rep.total - ref) < 1e-12
        assert abs(rep.l_nn - loop_infonce(sel.tolist(), a2.tolist(), 0.3)) < 1e-12

    def test_csv_fields_leave_absent_terms_blank(self):
        z = np.eye(2)
        _, rep = total_loss(base_loss(None, z, z, 0.3, MONOLINGUAL_MASK))
        fields = rep.csv_fields()
        assert fields[0] == "" and fields[2] == ""
        assert float(fields[1]) == rep.l_av2
