import numpy as np
import pytest
from hypothesis import given, settings

from gapsi import (
    InventorySystem,
    ProductSpec,
    Side,
    UnsupportedModeError,
    apply_discard,
    censored_loss_jacobian,
    censored_transition_jacobian,
    compute_sales,
    loss_jacobian,
    policy_jacobians,
    transition_jacobian,
    ztilde_jacobian,
)
from gapsi.checks import check_point, check_policy_point
from gapsi.derivatives import relu_chain

from conftest import grid_point, random_system, seeds, simple_system

L, R = Side.LEFT, Side.RIGHT


class TestReluChain:
    def test_kink(self):
        assert relu_chain(0.0, 2.0, R) == 2.0
        assert relu_chain(0.0, 2.0, L) == 0.0
        assert relu_chain(0.0, -2.0, L) == -2.0
        assert relu_chain(0.0, -2.0, R) == 0.0

    @pytest.mark.parametrize("side", [L, R])
    def test_regions(self, side):
        assert relu_chain(-1.0, 5.0, side) == 0.0
        assert relu_chain(3.0, -0.5, side) == -0.5

    def test_vectorized(self):
        np.testing.assert_array_equal(relu_chain(0.0, np.array([-1.0, 0.0, 1.0]), R), [0.0, 0.0, 1.0])

    def test_side_coercion(self):
        assert Side.coerce("Left") is L
        with pytest.raises(ValueError):
            Side.coerce("middle")


class TestPolicyJacobians:
    sys_ = InventorySystem([ProductSpec(3)])

    def test_kink(self):
        x = np.array([2.0, 0.0])
        _, dr = policy_jacobians(x, np.array([1.0]), [np.array([2.0])], self.sys_, R)
        _, dl = policy_jacobians(x, np.array([1.0]), [np.array([2.0])], self.sys_, L)
        assert dr[0, 0] == 2.0 and dl[0, 0] == 0.0

    @pytest.mark.parametrize("side", [L, R])
    def test_interior(self, side):
        dx, dt = policy_jacobians(np.array([1.0, 2.0]), np.array([0.5]), [np.array([10.0])], self.sys_, side)
        np.testing.assert_array_equal(dt, [[10.0]])
        np.testing.assert_array_equal(dx, [[-1.0, -1.0]])

    @pytest.mark.parametrize("side", [L, R])
    def test_inactive(self, side):
        dx, dt = policy_jacobians(np.array([4.0, 2.0]), np.array([0.5]), [np.array([10.0])], self.sys_, side)
        assert not dx.any() and not dt.any()

    def test_block_structure(self):
        sys_ = InventorySystem([ProductSpec(2), ProductSpec(3, 1)])
        dx, dt = policy_jacobians(np.zeros(sys_.n), np.ones(3), [np.ones(1), np.ones(2)], sys_, R)
        assert not dx[0, sys_.state_slices[1]].any() and not dx[1, sys_.state_slices[0]].any()
        assert not dt[0, 1:].any() and not dt[1, :1].any()

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            policy_jacobians(np.zeros(2), np.ones(2), [np.ones(1)], self.sys_, R)


class TestZtildeJacobian:
    def test_unbounded_identity(self):
        sys_ = InventorySystem([ProductSpec(2), ProductSpec(3)])
        np.testing.assert_array_equal(ztilde_jacobian(np.ones(sys_.dim_z), sys_, 1), np.eye(sys_.dim_z))

    def test_discard_active(self):
        sys_ = InventorySystem([ProductSpec(2)], capacity=3.0)
        J = ztilde_jacobian(np.array([1.0, 3.0]), sys_, 1, L)
        assert J[1, 1] == 0.0 and J[1, 0] == -1.0

    @pytest.mark.parametrize("side", [L, R])
    def test_slack_identity(self, side):
        sys_ = InventorySystem([ProductSpec(2), ProductSpec(2)], capacity=10.0)
        np.testing.assert_array_equal(ztilde_jacobian(np.ones(4), sys_, 1, side), np.eye(4))

    def test_everything_discarded_kink(self):
        # alpha = 0 exactly: shrinking older stock frees room, so the left
        # derivative must see the arrival grow back (negative inner slope)
        sys_ = InventorySystem([ProductSpec(2)], capacity=1.0)
        z = np.array([1.0, 3.0])
        assert apply_discard(z, sys_, 1)[0][1] == 0.0
        assert ztilde_jacobian(z, sys_, 1, L)[1, 0] == -1.0
        assert ztilde_jacobian(z, sys_, 1, R)[1, 0] == 0.0
        assert not check_point(sys_, z, np.zeros(1))

    def test_zero_volume_rejected(self):
        sys_ = InventorySystem([ProductSpec(2, unit_volume=0.0)], capacity=1.0)
        with pytest.raises(ValueError):
            ztilde_jacobian(np.ones(2), sys_, 1)


def ztilde_row_by_indicators(z, system, t, k, side):
    """Row (k, m_k) of the post-discard Jacobian written out with indicator functions."""
    v = system.volumes_at(t)
    V = system.capacity_at(t)
    sgn = 1.0 if side is R else -1.0  # left derivatives test the sign of -slope

    def active(value, slope):
        return value > 0 or (value == 0 and sgn * slope > 0)

    total = sum(v[j] * z[s.start : s.start + p.lifetime].sum() for j, (s, p) in enumerate(zip(system.z_slices, system.products)))
    o = max(total - V, 0.0)
    arrived_before = sum(v[j] * z[system.received_index[j]] for j in range(k))
    beta = o - arrived_before
    jk = system.received_index[k]
    alpha = z[jk] - max(beta, 0.0) / v[k]
    row = np.zeros(system.dim_z)
    for col in range(system.dim_z):
        d_total = 0.0
        for j, (s, p) in enumerate(zip(system.z_slices, system.products)):
            if s.start <= col < s.start + p.lifetime:
                d_total = v[j]
        d_o = d_total if active(total - V, d_total) else 0.0
        d_before = sum(v[j] for j in range(k) if system.received_index[j] == col)
        d_beta = d_o - d_before
        d_beta_pos = d_beta if active(beta, d_beta) else 0.0
        d_alpha = (1.0 if col == jk else 0.0) - d_beta_pos / v[k]
        row[col] = d_alpha if active(alpha, d_alpha) else 0.0
    return row


@settings(max_examples=300, deadline=None)
@given(seeds)
def test_ztilde_matches_indicator_transcription(seed):
    rng = np.random.default_rng(seed)
    sys_ = random_system(rng, bounded=True)
    z, _ = grid_point(sys_, rng)
    for side in (L, R):
        J = ztilde_jacobian(z, sys_, 1, side)
        for k, j in enumerate(sys_.received_index):
            np.testing.assert_array_equal(J[j], ztilde_row_by_indicators(z, sys_, 1, k, side))


class TestLossJacobian:
    def test_shortage_interior(self):
        # z = (3, 2) with demand 6: stock 5 is short by one unit
        g = loss_jacobian(np.array([3.0, 2.0]), np.array([6.0]), simple_system(), 1, L)
        np.testing.assert_array_equal(g, [-10.0, -9.0])

    def test_surplus_region(self):
        # demand 4 < stock 5 and oldest slot 3 < 4: only holding and purchase act
        g = loss_jacobian(np.array([3.0, 2.0]), np.array([4.0]), simple_system(), 1, L)
        np.testing.assert_array_equal(g, [1.0, 2.0])

    def test_zero_costs(self):
        sys_ = InventorySystem([ProductSpec(2)])
        assert not loss_jacobian(np.array([3.0, 2.0]), np.array([4.0]), sys_, 1).any()

    def test_stock_equals_demand_kink(self):
        z, d = np.array([3.0, 2.0]), np.array([5.0])
        np.testing.assert_array_equal(loss_jacobian(z, d, simple_system(), 1, L), [-10.0, -9.0])
        np.testing.assert_array_equal(loss_jacobian(z, d, simple_system(), 1, R), [1.0, 2.0])

    def test_oldest_equals_demand_kink(self):
        z, d = np.array([3.0, 2.0]), np.array([3.0])
        np.testing.assert_array_equal(loss_jacobian(z, d, simple_system(), 1, L), [1.0, 2.0])
        np.testing.assert_array_equal(loss_jacobian(z, d, simple_system(), 1, R), [2.0, 2.0])


class TestTransitionJacobian:
    def test_interior(self):
        J = transition_jacobian(np.array([3.0, 2.0]), np.array([4.0]), simple_system(), 1, L)
        np.testing.assert_array_equal(J, [[1.0, 1.0]])

    def test_pipeline_rows_shift(self):
        sys_ = InventorySystem([ProductSpec(2, 2)])
        J = transition_jacobian(np.array([1.0, 2.0, 3.0, 4.0]), np.array([1.0]), sys_, 1, L)
        np.testing.assert_array_equal(J[1], [0, 0, 1, 0])
        np.testing.assert_array_equal(J[2], [0, 0, 0, 1])

    def test_zero_demand(self):
        sys_ = InventorySystem([ProductSpec(4)])
        z = np.array([1.0, 0.0, 2.0, 0.0])
        J = transition_jacobian(z, np.zeros(1), sys_, 1, L)
        for i in range(3):
            assert J[i, i + 1] == float(z[i + 1] > 0)

    def test_block_structure_unbounded(self):
        sys_ = InventorySystem([ProductSpec(2), ProductSpec(3, 1)])
        J = transition_jacobian(np.full(sys_.dim_z, 2.0), np.array([1.0, 3.0]), sys_, 1, L)
        assert not J[sys_.state_slices[0]][:, sys_.z_slices[1]].any()
        assert not J[sys_.state_slices[1]][:, sys_.z_slices[0]].any()

    def test_demand_exhausts_oldest_slot_kink(self):
        z, d = np.array([3.0, 2.0]), np.array([3.0])
        np.testing.assert_array_equal(transition_jacobian(z, d, simple_system(), 1, L), [[1.0, 1.0]])
        np.testing.assert_array_equal(transition_jacobian(z, d, simple_system(), 1, R), [[0.0, 1.0]])


@settings(max_examples=150, deadline=None)
@given(seeds)
def test_jacobians_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    sys_ = random_system(rng)
    z, d = grid_point(sys_, rng) if rng.random() < 0.5 else (rng.uniform(0, 4, sys_.dim_z), rng.uniform(0, 6, sys_.K))
    assert check_point(sys_, z, d) == []


@settings(max_examples=150, deadline=None)
@given(seeds)
def test_policy_jacobians_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    sys_ = random_system(rng)
    x = np.round(rng.uniform(0, 3, sys_.n) * 2) / 2
    features = [np.round(rng.uniform(0, 2, 2) * 2) / 2 for _ in range(sys_.K)]
    theta = np.round(rng.uniform(0, 4, 2 * sys_.K) * 2) / 2
    assert check_policy_point(sys_, x, theta, features) == []


class TestCensored:
    def test_requires_unbounded(self):
        sys_ = InventorySystem([ProductSpec(2)], capacity=3.0)
        with pytest.raises(UnsupportedModeError):
            censored_loss_jacobian(np.ones(2), [np.ones(2)], sys_, 1)
        with pytest.raises(UnsupportedModeError):
            censored_transition_jacobian(np.ones(2), [np.ones(2)], sys_, 1)

    def test_shortage_uses_penalty(self):
        sys_ = simple_system()
        z = np.array([3.0, 2.0])
        g = censored_loss_jacobian(z, compute_sales(z, np.array([6.0]), sys_), sys_, 1)
        np.testing.assert_array_equal(g, [-10.0, -9.0])

    def test_surplus_uses_holding(self):
        sys_ = simple_system()
        z = np.array([3.0, 2.0])
        g = censored_loss_jacobian(z, compute_sales(z, np.array([4.0]), sys_), sys_, 1)
        np.testing.assert_array_equal(g, [1.0, 2.0])

    def test_empty_stock_no_sales(self):
        sys_ = simple_system()
        z = np.zeros(2)
        g = censored_loss_jacobian(z, compute_sales(z, np.array([0.0]), sys_), sys_, 1)
        np.testing.assert_array_equal(g, [-10.0, -9.0])

    @settings(max_examples=200, deadline=None)
    @given(seeds)
    def test_equivalence_with_full_information(self, seed):
        rng = np.random.default_rng(seed)
        sys_ = random_system(rng, bounded=False)
        z, d = grid_point(sys_, rng)
        s = compute_sales(z, d, sys_)
        np.testing.assert_array_equal(censored_loss_jacobian(z, s, sys_, 1), loss_jacobian(z, d, sys_, 1, L))
        np.testing.assert_array_equal(
            censored_transition_jacobian(z, s, sys_, 1), transition_jacobian(z, d, sys_, 1, L)
        )
