import numpy as np
import pytest
from hypothesis import strategies as st

from gapsi import InventorySystem, ProductSpec


def simple_system(**costs) -> InventorySystem:
    """One product, lifetime 2, no lead time, unbounded warehouse."""
    base = dict(purchase=1.0, holding=1.0, penalty=10.0, outdating=1.0)
    base.update(costs)
    return InventorySystem([ProductSpec(2, **base)])


def random_system(rng: np.random.Generator, max_products=3, bounded=None, integer_costs=False) -> InventorySystem:
    K = int(rng.integers(1, max_products + 1))
    products = []
    for _ in range(K):
        m = int(rng.integers(1, 4))
        L = int(rng.integers(0, 3))
        if m + L < 2:
            L = 1
        draw = (lambda: float(rng.integers(0, 6))) if integer_costs else (lambda: float(rng.uniform(0, 5)))
        products.append(
            ProductSpec(
                m,
                L,
                unit_volume=float(rng.choice([0.5, 1.0, 2.0])),
                purchase=draw(),
                holding=draw(),
                penalty=draw() + 1,
                outdating=draw(),
                overflow=draw(),
            )
        )
    if bounded is None:
        bounded = bool(rng.integers(0, 2))
    capacity = float(rng.integers(2, 12)) if bounded else np.inf
    return InventorySystem(products, capacity=capacity)


def grid_point(system: InventorySystem, rng: np.random.Generator, step=0.5, scale=4.0):
    """State-control and demand on a coarse grid, which lands exactly on kinks often."""
    z = np.round(rng.uniform(0, scale, system.dim_z) / step) * step
    d = np.round(rng.uniform(0, 1.5 * scale, system.K) / step) * step
    return z, d


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
