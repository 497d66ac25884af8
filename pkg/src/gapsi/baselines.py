"""Comparator policies: hindsight base-stock oracles, forecast levels and MPC."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .inventory import COST_NAMES, InventorySystem, step

logger = logging.getLogger(__name__)


@dataclass
class LevelRollout:
    """Batched outcome of following base-stock levels; arrays are ``(..., T)``."""

    losses: np.ndarray
    breakdown: np.ndarray  # (..., T, 5)
    lost_sales: np.ndarray  # (..., T, K)
    outdated: np.ndarray  # (..., T, K)
    orders: np.ndarray  # (..., T, K)

    @property
    def cumulative(self) -> np.ndarray:
        return self.losses.sum(axis=-1)


def rollout_levels(levels, demands, system: InventorySystem, t0: int = 1) -> LevelRollout:
    """Follow order-up-to ``levels`` against ``demands`` from an empty system.

    ``levels`` and ``demands`` broadcast to ``(..., T, K)``; every leading index
    is an independent episode, so candidate levels and demand replicates can
    be evaluated in one pass.
    """
    levels = np.asarray(levels, dtype=float)
    demands = np.asarray(demands, dtype=float)
    shape = np.broadcast_shapes(levels.shape, demands.shape)
    if shape[-1] != system.K:
        raise ValueError(f"trailing dimension must be {system.K}")
    levels = np.broadcast_to(levels, shape)
    demands = np.broadcast_to(demands, shape)
    batch, T = shape[:-2], shape[-2]
    x = np.zeros(batch + (system.n,))
    losses = np.empty(batch + (T,))
    breakdown = np.empty(batch + (T, len(COST_NAMES)))
    lost = np.empty(shape)
    outdated = np.empty(shape)
    orders = np.empty(shape)
    for i in range(T):
        u = np.maximum(levels[..., i, :] - system.inventory_position(x), 0.0)
        out = step(system.join(x, u), demands[..., i, :], system, t0 + i)
        losses[..., i] = out.loss_total
        breakdown[..., i, :] = out.breakdown
        lost[..., i, :] = out.lost_sales
        outdated[..., i, :] = out.outdated
        orders[..., i, :] = u
        x = out.next_state
    return LevelRollout(losses, breakdown, lost, outdated, orders)


# -- piecewise-linear line search ----------------------------------------------
#
# Every loss along a base-stock or planned trajectory is piecewise linear in
# any single level or control.  Propagating right tangents through the
# positive parts gives the exact slope of the current piece, and the first
# positive-part argument to change sign marks where the piece ends.


class _Walk:
    """Right tangents through positive parts, tracking the distance to the next kink."""

    def __init__(self, shape):
        self.horizon = np.full(shape, np.inf)

    def relu(self, a, da):
        a = np.asarray(a, dtype=float)
        da = np.asarray(da, dtype=float)
        # only sign changes ahead of us end the piece: a and da of opposite sign
        ahead = a * da < 0
        if ahead.any():
            dist = np.full(ahead.shape, np.inf)
            np.divide(-a, da, out=dist, where=ahead)
            # arguments may carry extra trailing axes (one per product)
            while dist.ndim > self.horizon.ndim:
                dist = dist.min(axis=-1)
            np.minimum(self.horizon, dist, out=self.horizon)
        # right derivative of the positive part
        active = (a > 0) | ((a == 0) & (da > 0))
        return np.maximum(a, 0.0), np.where(active, da, 0.0)


def _tangent_step(walk: _Walk, x, dx, u, du, d, system: InventorySystem, t: int):
    """One period of the dynamics carrying right tangents; returns ``(x', dx', loss, dloss)``."""
    costs = system.costs_at(t)
    V = system.capacity_at(t)
    z, dz = [], []
    for k, xs in enumerate(system.state_slices):
        z.append(np.concatenate([x[..., xs], u[..., k : k + 1]], axis=-1))
        dz.append(np.concatenate([dx[..., xs], du[..., k : k + 1]], axis=-1))
    zt = [a.copy() for a in z]
    dzt = [a.copy() for a in dz]
    if not math.isinf(V):
        v = system.volumes_at(t)
        if np.any(v <= 0):
            raise ValueError("unit volume must be positive when the warehouse is bounded")
        vol = sum(v[k] * z[k][..., : p.lifetime].sum(-1) for k, p in enumerate(system.products))
        dvol = sum(v[k] * dz[k][..., : p.lifetime].sum(-1) for k, p in enumerate(system.products))
        over, dover = walk.relu(vol - V, dvol)
        before = dbefore = 0.0
        for k, p in enumerate(system.products):
            j = p.lifetime - 1
            pb, dpb = walk.relu(over - before, dover - dbefore)
            zt[k][..., j], dzt[k][..., j] = walk.relu(z[k][..., j] - pb / v[k], dz[k][..., j] - dpb / v[k])
            before = before + v[k] * z[k][..., j]
            dbefore = dbefore + v[k] * dz[k][..., j]
    nx, ndx = [], []
    total = dtotal = 0.0
    for k, p in enumerate(system.products):
        m = p.lifetime
        dk = d[..., k]
        cum = dcum = 0.0
        for i in range(m - 1):
            cum = cum + zt[k][..., i]
            dcum = dcum + dzt[k][..., i]
            unmet, dunmet = walk.relu(dk - cum, -dcum)
            val, dval = walk.relu(zt[k][..., i + 1] - unmet, dzt[k][..., i + 1] - dunmet)
            nx.append(val)
            ndx.append(dval)
        for i in range(m, p.state_dim + 1):
            nx.append(zt[k][..., i])
            ndx.append(dzt[k][..., i])
        cum = cum + zt[k][..., m - 1]
        dcum = dcum + dzt[k][..., m - 1]
        hold, dhold = walk.relu(cum - dk, dcum)
        pen, dpen = walk.relu(dk - cum, -dcum)
        outd, doutd = walk.relu(zt[k][..., 0] - dk, dzt[k][..., 0])
        j = m - 1
        terms = (
            ("penalty", pen, dpen),
            ("holding", hold, dhold),
            ("purchase", z[k][..., -1], dz[k][..., -1]),
            ("outdating", outd, doutd),
            ("overflow", z[k][..., j] - zt[k][..., j], dz[k][..., j] - dzt[k][..., j]),
        )
        for name, val, dval in terms:
            total = total + costs[name][k] * val
            dtotal = dtotal + costs[name][k] * dval
    shape = np.shape(total)
    if not nx:
        return np.zeros(shape + (0,)), np.zeros(shape + (0,)), total, dtotal
    return np.stack(nx, axis=-1), np.stack(ndx, axis=-1), total, dtotal


def _level_tangent_rollout(levels, dlevels, demands, system: InventorySystem):
    """Cumulative loss of base-stock ``levels`` ``(B, T, K)`` with its slope along ``dlevels``."""
    B, T = levels.shape[:2]
    walk = _Walk((B,))
    x = np.zeros((B, system.n))
    dx = np.zeros_like(x)
    total = np.zeros(B)
    dtotal = np.zeros(B)
    for i in range(T):
        u, du = walk.relu(
            levels[:, i] - system.inventory_position(x), dlevels[:, i] - system.inventory_position(dx)
        )
        x, dx, loss, dloss = _tangent_step(walk, x, dx, u, du, demands[i], system, i + 1)
        total += loss
        dtotal += dloss
    return total, dtotal, walk.horizon


def _pick(points: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """Smallest point among the (numerically) minimal values."""
    order = np.argsort(points, kind="stable")
    i = order[_first_min(values[order])]
    return float(points[i]), float(values[i])


def _walk_intervals(evaluate, grid: np.ndarray, intervals=None, max_rounds: int = 100_000):
    """Exact minimum of a piecewise-linear function over intervals of ``grid``.

    Interval ``i`` is ``[grid[i], grid[i+1]]``; all of them by default.  One
    walker per interval moves from breakpoint to breakpoint, and
    ``evaluate(points) -> (values, horizons)`` is batched over walkers.
    Returns ``(argmin, min)``.
    """
    if grid.size == 1:
        values, _ = evaluate(grid)
        return float(grid[0]), float(values[0])
    intervals = np.arange(grid.size - 1) if intervals is None else np.asarray(intervals, dtype=int)
    pos = grid[intervals].copy()
    ends = grid[intervals + 1]
    active = np.ones(pos.size, dtype=bool)
    seen_pts, seen_vals = [], []
    for _ in range(max_rounds):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        values, horizon = evaluate(pos[idx])
        seen_pts.append(pos[idx].copy())
        seen_vals.append(values)
        done = pos[idx] >= ends[idx]
        floor = 1e-12 * np.maximum(1.0, np.abs(ends[idx]))
        pos[idx] = np.minimum(pos[idx] + np.maximum(horizon, floor), ends[idx])
        active[idx[done]] = False
    else:
        logger.warning("breakpoint walk stopped after %d rounds", max_rounds)
    return _pick(np.concatenate(seen_pts), np.concatenate(seen_vals))


# -- hindsight base-stock oracles ---------------------------------------------


def _window_sums(d: np.ndarray, max_window: int, starts=None) -> np.ndarray:
    c = np.concatenate([[0.0], np.cumsum(d)])
    out = []
    for w in range(1, min(max_window, d.size) + 1):
        sums = c[w:] - c[:-w]  # sums[i] covers periods i .. i+w-1
        out.append(sums if starts is None else sums[starts[starts < sums.size]])
    return np.concatenate(out)


def candidate_levels(demand, lifetime: int, lead_time: int, grid_points: int = 200, starts=None) -> np.ndarray:
    """Candidate base-stock levels for one product, sorted ascending.

    Union of a uniform grid of ``grid_points`` over ``[0, (L+1) max d]`` and
    the sums of demands over consecutive windows of length 1 to ``m + L``
    (only windows beginning at the 0-based indices ``starts``, if given).
    """
    demand = np.asarray(demand, dtype=float)
    top = (lead_time + 1) * float(demand.max(initial=0.0))
    grid = np.linspace(0.0, top, max(grid_points, 1))
    sums = _window_sums(demand, lifetime + lead_time, None if starts is None else np.asarray(starts))
    return np.unique(np.concatenate([[0.0], grid, sums]))


def _first_min(values: np.ndarray) -> int:
    best = values.min()
    tol = 1e-12 * max(1.0, abs(best))
    return int(np.flatnonzero(values <= best + tol)[0])


def _check_demands(demands, system) -> np.ndarray:
    demands = np.asarray(demands, dtype=float)
    if demands.ndim != 2 or demands.shape[1] != system.K:
        raise ValueError(f"demands must be a T x {system.K} matrix")
    if demands.shape[0] == 0:
        raise ValueError("empty demand sequence")
    if np.any(demands < 0):
        raise ValueError("demands must be nonnegative")
    return demands


def _best_along(levels, direction, steps, demands, system, schedule, refine):
    """Minimize the cumulative loss of ``levels + s * direction`` over ``s``.

    ``steps`` are sorted candidate values of ``s``, all evaluated.  The
    intervals next to the ``refine`` best candidates are then searched
    exactly by walking breakpoints.  Returns ``(s, loss)``.
    """

    def trial(points):
        return (levels[None] + points[:, None, None] * direction[None])[:, schedule]

    losses = rollout_levels(trial(steps), demands, system).cumulative
    if refine <= 0 or steps.size == 1:
        return _pick(steps, losses)

    def evaluate(points):
        dl = np.broadcast_to(direction[schedule], (points.size,) + demands.shape)
        values, _, horizon = _level_tangent_rollout(trial(points), dl, demands, system)
        return values, horizon

    best = np.argsort(losses, kind="stable")[:refine]
    intervals = np.unique(np.concatenate([best - 1, best]))
    intervals = intervals[(intervals >= 0) & (intervals < steps.size - 1)]
    s, value = _walk_intervals(evaluate, steps, intervals)
    return _pick(np.append(steps, s), np.append(losses, value))


def _exchange_moves(levels, system: InventorySystem, grid_points: int):
    """Volume-preserving moves shifting stock between two products of the same row."""
    v = system.volumes_at(1)
    for p in range(levels.shape[0]):
        for k1 in range(system.K):
            for k2 in range(k1 + 1, system.K):
                direction = np.zeros_like(levels)
                direction[p, k1] = 1.0
                direction[p, k2] = -v[k1] / v[k2]
                lo, hi = -levels[p, k1], levels[p, k2] * v[k2] / v[k1]
                steps = np.unique(np.concatenate([np.linspace(lo, hi, grid_points), [0.0]]))
                yield direction, steps


def _coordinate_search(levels, coords, candidates, demands, system, schedule, refine, grid_points=200, max_sweeps=100):
    """Cyclic search, one level at a time, until no coordinate improves.

    With a bounded warehouse each sweep also tries shifting volume between
    pairs of products.  ``levels`` has shape ``(P, K)``; ``schedule[t]`` maps
    period to row of ``levels``.  Returns the improved levels and their
    cumulative loss.
    """
    levels = levels.copy()
    current = float(rollout_levels(levels[schedule], demands, system).cumulative)

    def accept(direction, s):
        nonlocal levels, current
        trial = np.maximum(levels + s * direction, 0.0)
        loss = float(rollout_levels(trial[schedule], demands, system).cumulative)
        if loss < current - 1e-12 * max(1.0, abs(current)):
            levels, current = trial, loss
            return True
        return False

    polishing = False
    for _ in range(max_sweeps):
        # cheap candidate-only sweeps until they stall, then one refining sweep
        depth = refine if polishing else 0
        improved = False
        for p, k in coords:
            direction = np.zeros_like(levels)
            direction[p, k] = 1.0
            s, _ = _best_along(levels, direction, candidates[p, k] - levels[p, k], demands, system, schedule, depth)
            improved |= accept(direction, s)
        if system.bounded:
            for direction, steps in _exchange_moves(levels, system, grid_points):
                s, _ = _best_along(levels, direction, steps, demands, system, schedule, depth)
                improved |= accept(direction, s)
        if not improved:
            if polishing or refine <= 0:
                break
            polishing = True
        else:
            polishing = False
    return levels, current


def _candidates(demands, system, grid_points, schedule=None, rows: int = 1) -> dict:
    """Candidate levels per ``(row, product)``; a row of a periodic schedule only
    draws window sums from the periods it governs."""
    out = {}
    for p in range(rows):
        starts = None if schedule is None else np.flatnonzero(schedule == p)
        for k, spec in enumerate(system.products):
            out[p, k] = candidate_levels(demands[:, k], spec.lifetime, spec.lead_time, grid_points, starts)
    return out


def best_stationary_level(
    demands, system: InventorySystem, grid_points: int = 200, refine: int = 4
) -> tuple[np.ndarray, float]:
    """Best constant base-stock level per product in hindsight, and its cumulative loss.

    Every candidate level is evaluated; the piecewise-linear loss is then
    minimized exactly between the candidates adjacent to the ``refine`` best
    ones.  Ties go to the smaller level.
    """
    demands = _check_demands(demands, system)
    cands = _candidates(demands, system, grid_points)
    schedule = np.zeros(demands.shape[0], dtype=int)
    levels = np.zeros((1, system.K))
    # products only interact through the warehouse: search each one alone first
    for k, p in enumerate(system.products):
        sub = InventorySystem([p])
        levels[0, k], _ = _best_along(
            np.zeros((1, 1)), np.ones((1, 1)), cands[0, k], demands[:, k : k + 1], sub, schedule, refine
        )
    loss = float(rollout_levels(levels[schedule], demands, system).cumulative)
    if system.bounded:
        # the warehouse couples products and coordinate search can stall,
        # so restart it from several points and keep the best
        coords = [(0, k) for k in range(system.K)]
        best = (loss, levels)
        for start in _bounded_starts(levels[0], system):
            lv, ls = _coordinate_search(start[None, :], coords, cands, demands, system, schedule, refine, grid_points)
            if ls < best[0] - 1e-12 * max(1.0, abs(best[0])):
                best = (ls, lv)
        loss, levels = best
    return levels[0], loss


def _bounded_starts(free_levels: np.ndarray, system: InventorySystem) -> list[np.ndarray]:
    starts = [free_levels.copy(), np.zeros_like(free_levels)]
    v = system.volumes_at(1)
    V = system.capacity_at(1)
    used = float(v @ free_levels)
    if used > V > 0:
        starts.append(free_levels * (V / used))
    return starts


def best_cyclic_level(
    demands, system: InventorySystem, period: int = 7, grid_points: int = 200, refine: int = 4, offset: int = 0
) -> tuple[np.ndarray, float]:
    """Best periodic base-stock levels, one row per phase, shape ``(period, K)``.

    Period ``t`` uses row ``(t - 1 + offset) mod period``.  The search starts
    from the stationary optimum, so its loss is never larger.
    """
    if period < 1:
        raise ValueError("period must be >= 1")
    demands = _check_demands(demands, system)
    stationary, _ = best_stationary_level(demands, system, grid_points, refine)
    schedule = (np.arange(demands.shape[0]) + offset) % period
    cands = _candidates(demands, system, grid_points, schedule, period)
    coords = [(p, k) for p in range(period) for k in range(system.K)]
    start = np.repeat(stationary[None, :], period, axis=0)
    return _coordinate_search(start, coords, cands, demands, system, schedule, refine, grid_points)


class ForecastLevelPolicy:
    """Order up to the forecast of the current period: ``[f_t - position]^+``."""

    def __init__(self, forecasts, system: InventorySystem):
        self.forecasts = np.asarray(forecasts, dtype=float)
        if np.any(self.forecasts < 0):
            raise ValueError("forecasts must be nonnegative")
        self.system = system

    def __call__(self, t: int, x) -> np.ndarray:
        return np.maximum(self.forecasts[t - 1] - self.system.inventory_position(x), 0.0)


class LevelPolicy:
    """Order up to a fixed or periodic level schedule, indexed by period."""

    def __init__(self, levels, system: InventorySystem, offset: int = 0):
        self.levels = np.atleast_2d(np.asarray(levels, dtype=float))
        self.system = system
        self.offset = offset

    def __call__(self, t: int, x) -> np.ndarray:
        row = self.levels[(t - 1 + self.offset) % len(self.levels)]
        return np.maximum(row - self.system.inventory_position(x), 0.0)


# -- model predictive control -------------------------------------------------


def _period(system: InventorySystem, t: int) -> int:
    # plans may run past the end of time-varying schedules; reuse the last period
    while t > 1:
        try:
            system.capacity_at(t)
            system.costs_at(t)
            system.volumes_at(t)
            return t
        except IndexError:
            t -= 1
    return t


def _planned_rollout(x, U, dU, forecasts, system: InventorySystem, t0: int):
    """Planned cost of controls ``U`` ``(B, H, K)``, its slope along ``dU`` and the kink distance."""
    B, H = U.shape[:2]
    walk = _Walk((B,))
    x = np.broadcast_to(np.asarray(x, dtype=float), (B, system.n))
    dx = np.zeros_like(x)
    total = np.zeros(B)
    dtotal = np.zeros(B)
    for h in range(H):
        x, dx, loss, dloss = _tangent_step(
            walk, x, dx, U[:, h], dU[:, h], forecasts[h], system, _period(system, t0 + h)
        )
        total += loss
        dtotal += dloss
    return total, dtotal, walk.horizon


@dataclass
class MpcPlan:
    horizon: int
    controls: np.ndarray  # (H, K); row 0 is executed
    forecasts: np.ndarray
    objective: float
    sweeps: int
    history: list  # objective after initialization and after each sweep


def mpc_plan(
    x, forecasts, system: InventorySystem, t: int = 1, max_sweeps: int = 100, tol: float = 1e-9
) -> MpcPlan:
    """Plan the controls minimizing the predicted loss over the forecast horizon.

    Cyclic coordinate descent over the ``H x K`` planned controls.  Each
    coordinate is minimized exactly over ``[0, remaining forecast demand]``
    by walking the breakpoints of the piecewise-linear objective.  Starts
    from ordering up to the forecast.
    """
    forecasts = np.asarray(forecasts, dtype=float)
    if forecasts.ndim == 1:
        forecasts = forecasts[None, :]
    H = forecasts.shape[0]
    if H < 1:
        raise ValueError("planning horizon must be >= 1")
    if forecasts.shape[1] != system.K or np.any(forecasts < 0):
        raise ValueError(f"forecasts must be a nonnegative H x {system.K} matrix")
    x = np.asarray(x, dtype=float)

    U = np.zeros((H, system.K))
    xp = x
    for h in range(H):
        U[h] = np.maximum(forecasts[h] - system.inventory_position(xp), 0.0)
        xp = step(system.join(xp, U[h]), forecasts[h], system, _period(system, t + h)).next_state
    zero = np.zeros((1, H, system.K))

    def objective(controls):
        return float(_planned_rollout(x, controls[None], zero, forecasts, system, t)[0][0])

    current = objective(U)
    history = [current]
    # ordering beyond the remaining planned demand can only add cost
    remaining = np.cumsum(forecasts[::-1], axis=0)[::-1]
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        start = current
        for h in range(H):
            for k in range(system.K):
                direction = np.zeros((H, system.K))
                direction[h, k] = 1.0

                def evaluate(points):
                    trial = np.repeat(U[None], points.size, axis=0)
                    trial[:, h, k] = points
                    dU = np.broadcast_to(direction, trial.shape)
                    values, _, horizon = _planned_rollout(x, trial, dU, forecasts, system, t)
                    return values, horizon

                u, val = _walk_intervals(evaluate, np.array([0.0, remaining[h, k]]))
                if val < current - 1e-12 * max(1.0, abs(current)):
                    U[h, k] = u
                    current = val
        assert current <= start, "planned objective increased during a sweep"
        history.append(current)
        if start - current < tol:
            break
    return MpcPlan(H, U, forecasts, current, sweeps, history)


class MpcPolicy:
    """Receding-horizon controller over a forecast matrix (rows are periods)."""

    def __init__(self, forecasts, system: InventorySystem, horizon: int = 7):
        if horizon < 1:
            raise ValueError("planning horizon must be >= 1")
        self.forecasts = np.asarray(forecasts, dtype=float)
        self.system = system
        self.horizon = horizon

    def __call__(self, t: int, x) -> np.ndarray:
        window = self.forecasts[t - 1 : t - 1 + self.horizon]
        return mpc_plan(x, window, self.system, t).controls[0]
