import numpy as np
import pytest

from gapsi import InventorySystem, ProductSpec, simulate_episode
from gapsi.metrics import EpisodeTotals, lost_sales_pct, outdating_pct, ratio_of_losses

from conftest import simple_system


def scripted(orders):
    return lambda t, x: np.atleast_1d(np.asarray(orders[t - 1], dtype=float))


def test_hand_built_trace():
    sys_ = InventorySystem([ProductSpec(2, holding=1)])
    trace = simulate_episode(scripted([3.0, 0.0, 0.0]), np.array([[5.0], [0.0], [0.0]]), sys_)
    assert lost_sales_pct(trace).value == pytest.approx(40.0)
    assert outdating_pct(trace).value == 0.0
    trace = simulate_episode(scripted([3.0, 0.0, 0.0]), np.array([[2.0], [0.0], [0.0]]), sys_)
    # one unit left over expires at the start of period 2
    assert lost_sales_pct(trace).value == 0.0
    assert outdating_pct(trace).value == pytest.approx(100 / 3)


def test_zero_ordering():
    sys_ = simple_system()
    trace = simulate_episode(scripted([0.0] * 4), np.ones((4, 1)), sys_)
    assert lost_sales_pct(trace).value == 100.0
    o = outdating_pct(trace)
    assert o.value == 0.0 and not o.defined


def test_long_lifetime_growing_demand_never_outdates():
    sys_ = InventorySystem([ProductSpec(6)])
    d = np.arange(1.0, 31.0)[:, None]
    trace = simulate_episode(lambda t, x: d[t - 1] - 0.5 * (t % 2), d, sys_)
    assert outdating_pct(trace).value == 0.0


def test_zero_demand_lost_sales_undefined():
    m = lost_sales_pct(simulate_episode(scripted([1.0]), np.zeros((1, 1)), simple_system()))
    assert m.value == 0.0 and not m.defined


def test_totals_match_trace(rng):
    sys_ = InventorySystem([ProductSpec(2, holding=1, penalty=3), ProductSpec(3)])
    d = rng.poisson(2, (30, 2)).astype(float)
    trace = simulate_episode(lambda t, x: np.full(2, 2.0), d, sys_)
    totals = EpisodeTotals.from_trace(trace)
    assert totals.periods == 30
    assert totals.demand == d.sum()
    assert totals.loss == pytest.approx(trace.cumulative_loss)


class TestRatio:
    def test_same_policy(self):
        sys_ = simple_system()
        d = np.ones((5, 1))
        a = simulate_episode(scripted([2.0] * 5), d, sys_)
        assert ratio_of_losses(a, a).value == 1.0

    def test_values(self):
        assert ratio_of_losses(3.0, 4.0).value == 0.75
        assert not ratio_of_losses(0.0, 0.0).defined
        assert ratio_of_losses(1.0, 0.0).value == float("inf")
