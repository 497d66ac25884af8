"""One-sided partial derivatives of the policy, losses and transitions.

Every function here is a composition of affine maps and positive parts, so
each partial derivative is obtained by pushing a one-sided inner derivative
through :func:`relu_chain`.  Indicator tests compare the very quantities the
forward pass computes, with no tolerance: at a kink the selected side decides
the value, and a tolerance would silently change the selected subgradient.

Jacobians are dense, rows indexed by outputs and columns by the flat
state-control vector ``z`` (see :class:`gapsi.inventory.InventorySystem`).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .inventory import InventorySystem, apply_discard


class Side(enum.Enum):
    LEFT = "left"
    RIGHT = "right"

    @classmethod
    def coerce(cls, value) -> "Side":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


class UnsupportedModeError(ValueError):
    """Censored-demand derivatives requested with a bounded warehouse."""


def relu_chain(f_value, f_deriv, side: Side):
    """One-sided derivative of ``[f]^+`` given ``f`` and its same-side derivative.

    Vectorized over ``f_deriv`` (and ``f_value`` if it is an array).
    """
    f_value = np.asarray(f_value, dtype=float)
    f_deriv = np.asarray(f_deriv, dtype=float)
    if side is Side.RIGHT:
        active = (f_value > 0) | ((f_deriv > 0) & (f_value == 0))
    else:
        active = (f_value > 0) | ((f_deriv < 0) & (f_value == 0))
    out = np.where(active, f_deriv, 0.0)
    return float(out) if out.ndim == 0 else out


def param_slices(features: Sequence[np.ndarray]) -> list[slice]:
    out, start = [], 0
    for w in features:
        out.append(slice(start, start + len(w)))
        start += len(w)
    return out


def policy_jacobians(
    x, theta, features: Sequence[np.ndarray], system: InventorySystem, side: Side = Side.RIGHT
) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of the feature-enhanced base-stock orders.

    Returns ``(d_order/d_state, d_order/d_theta)`` with shapes ``(K, n)`` and
    ``(K, P)``.
    """
    side = Side.coerce(side)
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    slices = param_slices(features)
    P = slices[-1].stop
    if theta.shape != (P,) or len(features) != system.K:
        raise ValueError("theta / features do not match the system")
    d_x = np.zeros((system.K, system.n))
    d_theta = np.zeros((system.K, P))
    position = system.inventory_position(x)
    for k in range(system.K):
        w = np.asarray(features[k], dtype=float)
        gap = float(w @ theta[slices[k]]) - position[k]
        d_x[k, system.state_slices[k]] = relu_chain(gap, -1.0, side)
        d_theta[k, slices[k]] = relu_chain(gap, w, side)
    return d_x, d_theta


def ztilde_jacobian(z, system: InventorySystem, t: int, side: Side = Side.LEFT) -> np.ndarray:
    """Jacobian of the post-discard state-control with respect to ``z``."""
    side = Side.coerce(side)
    z = system.check_z(z)
    J = np.eye(system.dim_z)
    V = system.capacity_at(t)
    if math.isinf(V):
        return J
    v = system.volumes_at(t)
    if np.any(v == 0):
        raise ValueError("unit volume must be positive when the warehouse is bounded")

    # derivative of the total on-hand volume and of each product's arrival volume
    d_volume = np.zeros(system.dim_z)
    d_arrival = np.zeros((system.K, system.dim_z))
    total = 0.0
    for k, (s, p) in enumerate(zip(system.z_slices, system.products)):
        d_volume[s.start : s.start + p.lifetime] = v[k]
        total += v[k] * z[s.start : s.start + p.lifetime].sum()
        d_arrival[k, system.received_index[k]] = v[k]

    excess = total - V
    d_overflow = relu_chain(excess, d_volume, side)
    overflow = max(excess, 0.0)
    arrived_before = 0.0
    d_arrived_before = np.zeros(system.dim_z)
    for k, j in enumerate(system.received_index):
        beta = overflow - arrived_before
        d_beta = d_overflow - d_arrived_before
        alpha = z[j] - max(beta, 0.0) / v[k]
        d_alpha = -relu_chain(beta, d_beta, side) / v[k]
        d_alpha[j] += 1.0
        J[j] = relu_chain(alpha, d_alpha, side)
        arrived_before += v[k] * z[j]
        d_arrived_before = d_arrived_before + d_arrival[k]
    return J


def loss_jacobian(z, d, system: InventorySystem, t: int, side: Side = Side.LEFT) -> np.ndarray:
    """Row vector of one-sided partial derivatives of the period loss."""
    side = Side.coerce(side)
    z = system.check_z(z)
    d = np.asarray(d, dtype=float)
    zt, _ = apply_discard(z, system, t)
    dZ = ztilde_jacobian(z, system, t, side)
    costs = system.costs_at(t)
    grad = np.zeros(system.dim_z)
    for k, (s, p) in enumerate(zip(system.z_slices, system.products)):
        onhand = slice(s.start, s.start + p.lifetime)
        surplus = zt[onhand].sum() - d[k]
        d_surplus = dZ[onhand].sum(axis=0)
        grad += costs["holding"][k] * relu_chain(surplus, d_surplus, side)
        grad += costs["penalty"][k] * relu_chain(-surplus, -d_surplus, side)
        grad += costs["outdating"][k] * relu_chain(zt[s.start] - d[k], dZ[s.start], side)
        j = system.received_index[k]
        grad[system.u_columns[k]] += costs["purchase"][k]
        d_discarded = -dZ[j]
        d_discarded[j] += 1.0
        grad += costs["overflow"][k] * d_discarded
    return grad


def transition_jacobian(z, d, system: InventorySystem, t: int, side: Side = Side.LEFT) -> np.ndarray:
    """One-sided Jacobian of the next state, shape ``(n, n + K)``."""
    side = Side.coerce(side)
    z = system.check_z(z)
    d = np.asarray(d, dtype=float)
    zt, _ = apply_discard(z, system, t)
    dZ = ztilde_jacobian(z, system, t, side)
    J = np.zeros((system.n, system.dim_z))
    for k, (zs, xs, p) in enumerate(zip(system.z_slices, system.state_slices, system.products)):
        m = p.lifetime
        served = 0.0
        d_served = np.zeros(system.dim_z)
        for i in range(p.state_dim):
            src = zs.start + i + 1
            if i < m - 1:
                served += zt[zs.start + i]
                d_served = d_served + dZ[zs.start + i]
                unmet = d[k] - served
                d_unmet_pos = relu_chain(unmet, -d_served, side)
                arg = zt[src] - max(unmet, 0.0)
                J[xs.start + i] = relu_chain(arg, dZ[src] - d_unmet_pos, side)
            else:
                J[xs.start + i] = dZ[src]
    return J


def _require_unbounded(system: InventorySystem, t: int):
    if not math.isinf(system.capacity_at(t)):
        raise UnsupportedModeError("censored-demand derivatives require an unbounded warehouse")


def censored_loss_jacobian(z, sales: Sequence[np.ndarray], system: InventorySystem, t: int) -> np.ndarray:
    """Left partial derivatives of the loss computed from sales only."""
    _require_unbounded(system, t)
    z = system.check_z(z)
    costs = system.costs_at(t)
    grad = np.zeros(system.dim_z)
    for k, (s, p) in enumerate(zip(system.z_slices, system.products)):
        sk = np.asarray(sales[k], dtype=float)
        stock = z[s.start : s.start + p.lifetime].sum()
        sold = sk.sum()
        grad[system.u_columns[k]] += costs["purchase"][k]
        onhand = slice(s.start, s.start + p.lifetime)
        if stock > sold:
            grad[onhand] += costs["holding"][k]
        if stock == sold:
            grad[onhand] -= costs["penalty"][k]
        if z[s.start] > sk[0]:
            grad[s.start] += costs["outdating"][k]
    return grad


def censored_transition_jacobian(
    z, sales: Sequence[np.ndarray], system: InventorySystem, t: int
) -> np.ndarray:
    """Left Jacobian of the next state computed from sales only."""
    _require_unbounded(system, t)
    z = system.check_z(z)
    J = np.zeros((system.n, system.dim_z))
    for k, (zs, xs, p) in enumerate(zip(system.z_slices, system.state_slices, system.products)):
        m = p.lifetime
        sk = np.asarray(sales[k], dtype=float)
        zc = np.cumsum(z[zs.start : zs.start + m])
        sc = np.cumsum(sk)
        for i in range(p.state_dim):
            row = xs.start + i
            if i >= m - 1:
                J[row, zs.start + i + 1] = 1.0
                continue
            # next on-hand slot i is what remains of slot i+1 after sales
            if z[zs.start + i + 1] - sk[i + 1] > 0:
                J[row, zs.start + i + 1] = 1.0
            if zc[i + 1] > sc[i + 1] and zc[i] == sc[i]:
                J[row, zs.start : zs.start + i + 1] = 1.0
    return J


@dataclass
class JacobianSet:
    """Jacobians of one period, split into state and order columns."""

    dpi_dx: np.ndarray  # (K, n)
    dpi_dtheta: np.ndarray  # (K, P)
    dl_dx: np.ndarray  # (n,)
    dl_du: np.ndarray  # (K,)
    df_dx: np.ndarray  # (n, n)
    df_du: np.ndarray  # (n, K)

    @classmethod
    def from_z_jacobians(cls, system: InventorySystem, dpi_dx, dpi_dtheta, dl_dz, df_dz) -> "JacobianSet":
        return cls(
            dpi_dx=dpi_dx,
            dpi_dtheta=dpi_dtheta,
            dl_dx=dl_dz[system.x_columns],
            dl_du=dl_dz[system.u_columns],
            df_dx=df_dz[:, system.x_columns],
            df_du=df_dz[:, system.u_columns],
        )
