"""Multi-product perishable inventory dynamics.

State layout
------------
Each product ``k`` has lifetime ``m`` and lead time ``L`` and carries a state
block of length ``n = m + L - 1``.  Slots ``0 .. m-2`` hold on-hand units by
remaining life (slot 0 expires at the end of the current period), slots
``m-1 .. n-1`` hold on-order units.  Appending the order gives the
state-control block of length ``n + 1``; its slot ``m-1`` is the quantity
received this period.

All per-period functions accept arrays with arbitrary leading batch
dimensions, the last axis being the flat state (or state-control) vector.
Periods are 1-based.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

COST_NAMES = ("penalty", "holding", "purchase", "outdating", "overflow")


def _as_schedule(value) -> float | np.ndarray:
    if np.ndim(value) == 0:
        return float(value)
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("time-varying values must be non-empty 1-D sequences")
    return arr


def _at(value, t: int) -> float:
    if isinstance(value, float):
        return value
    if t < 1 or t > value.size:
        raise IndexError(f"period {t} outside schedule of length {value.size}")
    return float(value[t - 1])


@dataclass(frozen=True)
class ProductSpec:
    """Structural parameters and unit costs of one product.

    Volumes and costs are either constants or sequences indexed by period
    (``seq[t-1]`` is used at period ``t``).
    """

    lifetime: int
    lead_time: int = 0
    unit_volume: float | Sequence[float] = 1.0
    purchase: float | Sequence[float] = 0.0
    holding: float | Sequence[float] = 0.0
    penalty: float | Sequence[float] = 0.0
    outdating: float | Sequence[float] = 0.0
    overflow: float | Sequence[float] = 0.0
    name: str = ""

    def __post_init__(self):
        if int(self.lifetime) != self.lifetime or self.lifetime < 1:
            raise ValueError(f"lifetime must be an integer >= 1, got {self.lifetime}")
        if int(self.lead_time) != self.lead_time or self.lead_time < 0:
            raise ValueError(f"lead_time must be an integer >= 0, got {self.lead_time}")
        if self.lifetime + self.lead_time < 2:
            raise ValueError("lifetime + lead_time must be >= 2 (empty state otherwise)")
        object.__setattr__(self, "lifetime", int(self.lifetime))
        object.__setattr__(self, "lead_time", int(self.lead_time))
        for attr in ("unit_volume",) + COST_NAMES:
            value = _as_schedule(getattr(self, attr))
            if np.any(np.asarray(value) < 0):
                raise ValueError(f"{attr} must be nonnegative")
            object.__setattr__(self, attr, value)

    @property
    def state_dim(self) -> int:
        return self.lifetime + self.lead_time - 1

    def volume_at(self, t: int) -> float:
        return _at(self.unit_volume, t)

    def cost_at(self, name: str, t: int) -> float:
        if name not in COST_NAMES:
            raise KeyError(name)
        return _at(getattr(self, name), t)


class InventorySystem:
    """A set of products sharing a warehouse of (possibly infinite) volume.

    Product order matters: when the warehouse overflows, units that just
    arrived are discarded starting from the first product.
    """

    def __init__(self, products: Sequence[ProductSpec], capacity=math.inf):
        if len(products) == 0:
            raise ValueError("at least one product is required")
        self.products = tuple(products)
        self.capacity = _as_schedule(capacity)
        if np.any(np.asarray(self.capacity) < 0):
            raise ValueError("capacity must be nonnegative")

        self.K = len(self.products)
        self.state_slices: list[slice] = []
        self.z_slices: list[slice] = []
        x_cols, u_cols = [], []
        xo = zo = 0
        for p in self.products:
            n_k = p.state_dim
            self.state_slices.append(slice(xo, xo + n_k))
            self.z_slices.append(slice(zo, zo + n_k + 1))
            x_cols.extend(range(zo, zo + n_k))
            u_cols.append(zo + n_k)
            xo += n_k
            zo += n_k + 1
        self.n = xo
        self.dim_z = zo
        self.x_columns = np.array(x_cols, dtype=int)
        self.u_columns = np.array(u_cols, dtype=int)
        # flat z index of the quantity received this period
        self.received_index = np.array(
            [s.start + p.lifetime - 1 for s, p in zip(self.z_slices, self.products)], dtype=int
        )

    def __repr__(self):
        return f"InventorySystem(K={self.K}, n={self.n}, capacity={self.capacity!r})"

    @property
    def lifetimes(self) -> np.ndarray:
        return np.array([p.lifetime for p in self.products])

    @property
    def bounded(self) -> bool:
        return not (isinstance(self.capacity, float) and math.isinf(self.capacity))

    def capacity_at(self, t: int) -> float:
        return _at(self.capacity, t)

    def volumes_at(self, t: int) -> np.ndarray:
        return np.array([p.volume_at(t) for p in self.products])

    def costs_at(self, t: int) -> dict[str, np.ndarray]:
        return {c: np.array([p.cost_at(c, t) for p in self.products]) for c in COST_NAMES}

    def zero_state(self) -> np.ndarray:
        return np.zeros(self.n)

    def join(self, x, u) -> np.ndarray:
        """Build the state-control vector from state ``x`` and orders ``u``."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if x.shape[-1] != self.n or u.shape[-1] != self.K:
            raise ValueError(f"expected state dim {self.n} and {self.K} orders")
        batch = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
        z = np.empty(batch + (self.dim_z,))
        z[..., self.x_columns] = x
        z[..., self.u_columns] = u
        return z

    def split(self, z) -> tuple[np.ndarray, np.ndarray]:
        z = self.check_z(z)
        return z[..., self.x_columns], z[..., self.u_columns]

    def check_z(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim_z:
            raise ValueError(f"state-control has dimension {z.shape[-1]}, expected {self.dim_z}")
        return z

    def inventory_position(self, x) -> np.ndarray:
        """Per-product on-hand plus on-order units, shape ``(..., K)``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"state has dimension {x.shape[-1]}, expected {self.n}")
        return np.stack([x[..., s].sum(axis=-1) for s in self.state_slices], axis=-1)


def _check_volumes(system: InventorySystem, t: int) -> np.ndarray:
    v = system.volumes_at(t)
    if np.any(v == 0):
        raise ValueError("unit volume must be positive when the warehouse is bounded")
    return v


def _onhand_volume(z: np.ndarray, system: InventorySystem, v: np.ndarray) -> np.ndarray:
    total = np.zeros(z.shape[:-1])
    for k, (s, p) in enumerate(zip(system.z_slices, system.products)):
        total = total + v[k] * z[..., s.start : s.start + p.lifetime].sum(axis=-1)
    return total


def apply_discard(z, system: InventorySystem, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Remove just-arrived units that do not fit in the warehouse.

    Returns the post-discard state-control and the removed volume per
    product, shape ``(..., K)``.
    """
    z = system.check_z(z)
    r = np.zeros(z.shape[:-1] + (system.K,))
    V = system.capacity_at(t)
    if math.isinf(V):
        return z.copy(), r
    v = _check_volumes(system, t)
    overflow = np.maximum(_onhand_volume(z, system, v) - V, 0.0)
    zt = z.copy()
    arrived_before = np.zeros(z.shape[:-1])
    for k, j in enumerate(system.received_index):
        excess = np.maximum(overflow - arrived_before, 0.0)
        zt[..., j] = np.maximum(z[..., j] - excess / v[k], 0.0)
        r[..., k] = v[k] * (z[..., j] - zt[..., j])
        arrived_before = arrived_before + v[k] * z[..., j]
    return zt, r


def discard_by_recursion(z, system: InventorySystem, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Same operator as :func:`apply_discard`, via the removed-volume recursion.

    Each product in turn gives up as much of its arrival volume as the
    remaining overflow requires.  Kept as an independent cross-check.
    """
    z = system.check_z(z)
    r = np.zeros(z.shape[:-1] + (system.K,))
    V = system.capacity_at(t)
    if math.isinf(V):
        return z.copy(), r
    v = _check_volumes(system, t)
    overflow = np.maximum(_onhand_volume(z, system, v) - V, 0.0)
    zt = z.copy()
    removed = np.zeros(z.shape[:-1])
    for k, j in enumerate(system.received_index):
        r[..., k] = np.minimum(v[k] * z[..., j], np.maximum(overflow - removed, 0.0))
        removed = removed + r[..., k]
        zt[..., j] = z[..., j] - r[..., k] / v[k]
    return zt, r


def overflow_volume(z, system: InventorySystem, t: int) -> np.ndarray:
    z = system.check_z(z)
    V = system.capacity_at(t)
    if math.isinf(V):
        return np.zeros(z.shape[:-1])
    v = system.volumes_at(t)
    return np.maximum(_onhand_volume(z, system, v) - V, 0.0)


def _check_demand(d, system: InventorySystem) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if d.shape[-1:] != (system.K,):
        raise ValueError(f"demand must have trailing dimension {system.K}")
    if np.any(d < 0):
        raise ValueError("demand must be nonnegative")
    return d


def compute_sales(zt, d, system: InventorySystem) -> list[np.ndarray]:
    """FIFO sales per product and on-hand slot, from the post-discard vector.

    Returns one array of shape ``(..., m_k)`` per product.
    """
    zt = system.check_z(zt)
    d = _check_demand(d, system)
    sales = []
    for k, (s, p) in enumerate(zip(system.z_slices, system.products)):
        onhand = zt[..., s.start : s.start + p.lifetime]
        cum = np.cumsum(onhand, axis=-1)
        before = np.concatenate([np.zeros_like(cum[..., :1]), cum[..., :-1]], axis=-1)
        remaining = np.maximum(d[..., k : k + 1] - before, 0.0)
        sales.append(np.minimum(onhand, remaining))
    return sales


@dataclass
class StepOutcome:
    """Everything that happens in one period.

    ``breakdown`` has trailing axis ordered as :data:`COST_NAMES`.
    """

    z: np.ndarray
    z_tilde: np.ndarray
    next_state: np.ndarray
    sales: list
    lost_sales: np.ndarray
    outdated: np.ndarray
    discarded: np.ndarray  # units, not volume
    removed_volume: np.ndarray
    loss_total: np.ndarray
    breakdown: np.ndarray


def step(z, d, system: InventorySystem, t: int) -> StepOutcome:
    """Discard, sell, age and charge one period starting from ``z``."""
    z = system.check_z(z)
    d = _check_demand(d, system)
    zt, r = apply_discard(z, system, t)
    costs = system.costs_at(t)

    x_next = np.empty(np.broadcast_shapes(z.shape[:-1], d.shape[:-1]) + (system.n,))
    batch = x_next.shape[:-1]
    lost = np.empty(batch + (system.K,))
    outdated = np.empty(batch + (system.K,))
    holding = np.empty(batch + (system.K,))
    discarded = np.empty(z.shape[:-1] + (system.K,))
    for k, (zs, xs, p) in enumerate(zip(system.z_slices, system.state_slices, system.products)):
        m = p.lifetime
        blk = zt[..., zs]
        dk = d[..., k : k + 1]
        cum = np.cumsum(blk[..., :m], axis=-1)
        # on-hand aging: slot i keeps what survives of slot i+1
        x_next[..., xs.start : xs.start + m - 1] = np.maximum(
            blk[..., 1:m] - np.maximum(dk - cum[..., : m - 1], 0.0), 0.0
        )
        x_next[..., xs.start + m - 1 : xs.stop] = blk[..., m:]
        stock = cum[..., -1]
        lost[..., k] = np.maximum(d[..., k] - stock, 0.0)
        holding[..., k] = np.maximum(stock - d[..., k], 0.0)
        outdated[..., k] = np.maximum(blk[..., 0] - d[..., k], 0.0)
        j = system.received_index[k]
        discarded[..., k] = z[..., j] - zt[..., j]

    u = z[..., system.u_columns]
    breakdown = np.stack(
        [
            (costs["penalty"] * lost).sum(axis=-1),
            (costs["holding"] * holding).sum(axis=-1),
            (costs["purchase"] * u).sum(axis=-1) * np.ones(batch),
            (costs["outdating"] * outdated).sum(axis=-1),
            (costs["overflow"] * discarded).sum(axis=-1) * np.ones(batch),
        ],
        axis=-1,
    )
    return StepOutcome(
        z=z,
        z_tilde=zt,
        next_state=x_next,
        sales=compute_sales(zt, d, system),
        lost_sales=lost,
        outdated=outdated,
        discarded=discarded,
        removed_volume=r,
        loss_total=breakdown.sum(axis=-1),
        breakdown=breakdown,
    )


def transition(z, d, system: InventorySystem, t: int) -> np.ndarray:
    """Next state ``x_{t+1}``."""
    return step(z, d, system, t).next_state


def loss(z, d, system: InventorySystem, t: int) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Period loss and its five components."""
    out = step(z, d, system, t)
    return out.loss_total, dict(zip(COST_NAMES, np.moveaxis(out.breakdown, -1, 0)))


@dataclass
class Trace:
    """Per-period record of a simulated episode (rows are periods)."""

    states: np.ndarray  # (T, n) state observed before ordering
    orders: np.ndarray  # (T, K)
    demands: np.ndarray  # (T, K)
    outcomes: list[StepOutcome]
    clamped: list[int] = field(default_factory=list)

    @property
    def T(self) -> int:
        return len(self.outcomes)

    @property
    def losses(self) -> np.ndarray:
        return np.array([float(o.loss_total) for o in self.outcomes])

    @property
    def breakdowns(self) -> np.ndarray:
        return np.array([o.breakdown for o in self.outcomes])

    @property
    def cumulative_loss(self) -> float:
        return float(self.losses.sum())

    def stacked(self, name: str) -> np.ndarray:
        return np.array([getattr(o, name) for o in self.outcomes])


Policy = Callable[[int, np.ndarray], np.ndarray]


def simulate_episode(
    policy: Policy,
    demands,
    system: InventorySystem,
    x1=None,
    on_step: Callable[[int, StepOutcome], None] | None = None,
) -> Trace:
    """Run ``policy(t, x_t) -> u_t`` against a ``T x K`` demand matrix.

    Negative orders are clamped to zero and logged.  ``on_step`` is called
    after each period, which lets adaptive policies observe feedback.
    """
    demands = np.asarray(demands, dtype=float)
    if demands.ndim != 2 or demands.shape[1] != system.K or demands.shape[0] < 1:
        raise ValueError(f"demands must be a T x {system.K} matrix with T >= 1")
    if np.any(demands < 0):
        raise ValueError("demands must be nonnegative")
    T = demands.shape[0]
    x = system.zero_state() if x1 is None else np.asarray(x1, dtype=float).copy()
    states = np.empty((T, system.n))
    orders = np.empty((T, system.K))
    outcomes = []
    clamped = []
    for t in range(1, T + 1):
        states[t - 1] = x
        u = np.asarray(policy(t, x), dtype=float).reshape(system.K)
        if np.any(u < 0):
            logger.warning("period %d: negative order %s clamped to 0", t, u)
            clamped.append(t)
            u = np.maximum(u, 0.0)
        orders[t - 1] = u
        out = step(system.join(x, u), demands[t - 1], system, t)
        outcomes.append(out)
        if on_step is not None:
            on_step(t, out)
        x = out.next_state
    return Trace(states=states, orders=orders, demands=demands, outcomes=outcomes, clamped=clamped)
