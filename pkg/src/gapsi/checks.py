"""Finite-difference verification of the one-sided Jacobians."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import derivatives as D
from .derivatives import Side
from .inventory import InventorySystem, step

DEFAULT_STEPS = (1e-4, 1e-5, 1e-6, 1e-7)


@dataclass
class FDEstimate:
    value: np.ndarray
    converged: bool


def fd_oracle(
    func: Callable[[np.ndarray], np.ndarray],
    point,
    direction,
    side: Side = Side.RIGHT,
    steps: Sequence[float] = DEFAULT_STEPS,
    rtol: float = 1e-6,
) -> FDEstimate:
    """One-sided directional derivative ``lim_{h->0+-} (g(x + h e) - g(x)) / h``.

    Difference quotients over the decreasing ``steps`` are combined by
    first-order Richardson extrapolation; the estimate is flagged as not
    converged when the last two extrapolants disagree.
    """
    side = Side.coerce(side)
    if any(b >= a for a, b in zip(steps, steps[1:])):
        raise ValueError("steps must be strictly decreasing")
    x = np.asarray(point, dtype=float)
    e = np.asarray(direction, dtype=float)
    sign = 1.0 if side is Side.RIGHT else -1.0
    g0 = np.asarray(func(x), dtype=float)
    quotients = [(np.asarray(func(x + sign * h * e), dtype=float) - g0) / (sign * h) for h in steps]
    extrap = [
        (h0 * q1 - h1 * q0) / (h0 - h1)
        for (h0, q0), (h1, q1) in zip(zip(steps, quotients), zip(steps[1:], quotients[1:]))
    ]
    best = extrap[-1] if extrap else quotients[-1]
    # piecewise-linear maps give exact quotients once h is below the kink distance
    tail = quotients[-2:] if len(quotients) > 1 else quotients
    scale = 1.0 + np.max(np.abs(best))
    converged = bool(np.max(np.abs(tail[0] - tail[-1])) <= rtol * scale)
    value = tail[-1] if converged else best
    return FDEstimate(value=value, converged=converged)


def _loss_fn(system, d, t):
    return lambda z: float(step(z, d, system, t).loss_total)


def _transition_fn(system, d, t):
    return lambda z: step(z, d, system, t).next_state


def fd_jacobian(func, z, side: Side, steps=DEFAULT_STEPS) -> tuple[np.ndarray, np.ndarray]:
    """Column-by-column one-sided partial derivatives; also returns the converged mask."""
    z = np.asarray(z, dtype=float)
    cols, ok = [], []
    for j in range(z.size):
        e = np.zeros(z.size)
        e[j] = 1.0
        est = fd_oracle(func, z, e, side, steps)
        cols.append(np.atleast_1d(est.value))
        ok.append(est.converged)
    return np.stack(cols, axis=-1), np.array(ok)


@dataclass
class DerivativeMismatch:
    function: str
    side: Side
    z: np.ndarray
    max_error: float


def check_point(system: InventorySystem, z, d, t: int = 1, tol: float = 1e-6) -> list[DerivativeMismatch]:
    """Compare loss, transition and discard Jacobians with finite differences at one point."""
    z = np.asarray(z, dtype=float)
    bad = []
    for side in (Side.LEFT, Side.RIGHT):
        pairs = [
            ("loss", D.loss_jacobian(z, d, system, t, side)[None, :], _loss_fn(system, d, t)),
            ("transition", D.transition_jacobian(z, d, system, t, side), _transition_fn(system, d, t)),
        ]
        if system.bounded:
            from .inventory import apply_discard

            pairs.append(("discard", D.ztilde_jacobian(z, system, t, side), lambda q: apply_discard(q, system, t)[0]))
        for name, analytic, fn in pairs:
            approx, ok = fd_jacobian(fn, z, side)
            approx = approx.reshape(analytic.shape)
            bad.extend(_compare(name, side, z, analytic, approx, ok, tol))
    return bad


def _compare(name, side, point, analytic, approx, ok, tol) -> list[DerivativeMismatch]:
    # a column whose difference quotients never settled counts as a failure
    if not ok.all():
        return [DerivativeMismatch(f"{name} (no finite-difference convergence)", side, point.copy(), float("nan"))]
    err = np.abs(approx - analytic)
    if err.size and err.max() > tol:
        return [DerivativeMismatch(name, side, point.copy(), float(err.max()))]
    return []


def check_policy_point(system: InventorySystem, x, theta, features, tol: float = 1e-6) -> list[DerivativeMismatch]:
    from .controller import policy_order as base_stock_orders

    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    bad = []
    for side in (Side.LEFT, Side.RIGHT):
        d_x, d_theta = D.policy_jacobians(x, theta, features, system, side)
        fx, okx = fd_jacobian(lambda q: base_stock_orders(q, theta, features, system), x, side)
        ft, okt = fd_jacobian(lambda q: base_stock_orders(x, q, features, system), theta, side)
        for name, a, f, ok in (("policy/x", d_x, fx, okx), ("policy/theta", d_theta, ft, okt)):
            bad.extend(_compare(name, side, x, a, f, ok, tol))
    return bad


def random_point(system: InventorySystem, rng: np.random.Generator, grid: float | None = 0.5, scale: float = 4.0):
    """Random state-control and demand; ``grid`` snaps values so that kinks are hit often."""
    z = rng.uniform(0, scale, system.dim_z)
    d = rng.uniform(0, scale * 1.5, system.K)
    if grid:
        z = np.round(z / grid) * grid
        d = np.round(d / grid) * grid
    return z, d
