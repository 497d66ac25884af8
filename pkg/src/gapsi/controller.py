"""Online learning of feature-enhanced base-stock levels.

The controller orders up to ``w_k . theta_k`` for each product, then updates
``theta`` by projected AdaGrad on a truncated approximation of the gradient
of the loss with respect to the parameter history (a buffer of at most
``B - 1`` state sensitivities, propagated through the one-sided Jacobians).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import derivatives as D
from .derivatives import JacobianSet, Side, UnsupportedModeError
from .inventory import InventorySystem

logger = logging.getLogger(__name__)


@dataclass
class ParameterBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape:
            raise ValueError("box bounds must have the same shape")
        if np.any(self.lower > self.upper):
            raise ValueError("box requires lower <= upper")

    @classmethod
    def uniform(cls, lower: float, upper: float, dim: int) -> "ParameterBox":
        return cls(np.full(dim, float(lower)), np.full(dim, float(upper)))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def midpoint(self) -> np.ndarray:
        return (self.lower + self.upper) / 2

    def project(self, theta) -> np.ndarray:
        return np.clip(theta, self.lower, self.upper)

    def contains(self, theta) -> bool:
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))


def policy_order(x, theta, features: Sequence[np.ndarray], system: InventorySystem) -> np.ndarray:
    """Order up to the level ``w_k . theta_k``, or nothing if already above it."""
    theta = np.asarray(theta, dtype=float)
    slices = D.param_slices(features)
    if theta.shape[-1] != slices[-1].stop or len(features) != system.K:
        raise ValueError("theta / features do not match the system")
    position = system.inventory_position(x)
    levels = np.stack(
        [theta[..., s] @ np.asarray(w, dtype=float) for s, w in zip(slices, features)], axis=-1
    )
    return np.maximum(levels - position, 0.0)


def base_stock_levels(theta, features: Sequence[np.ndarray]) -> np.ndarray:
    slices = D.param_slices(features)
    return np.array([float(np.asarray(w) @ theta[s]) for s, w in zip(slices, features)])


@dataclass
class GapsiState:
    theta: np.ndarray
    buffer_size: int
    grad_sq_sum: np.ndarray = None
    buffer: list = field(default_factory=list)  # d x_t / d theta_{t-b}, oldest first
    t: int = 1

    def __post_init__(self):
        if self.buffer_size < 1:
            raise ValueError("buffer size must be >= 1")
        self.theta = np.asarray(self.theta, dtype=float).copy()
        if self.grad_sq_sum is None:
            self.grad_sq_sum = np.zeros_like(self.theta)


def gaps_gradient(state: GapsiState, jac: JacobianSet) -> np.ndarray:
    """Truncated gradient estimate; advances the sensitivity buffer in place."""
    P = state.theta.size
    if jac.dpi_dtheta.shape[1] != P:
        raise ValueError(f"policy Jacobian has {jac.dpi_dtheta.shape[1]} parameters, expected {P}")
    g = jac.dl_du @ jac.dpi_dtheta
    if state.buffer:
        g = g + (jac.dl_dx + jac.dl_du @ jac.dpi_dx) @ np.sum(state.buffer, axis=0)

    if state.buffer_size > 1:
        closed_loop = jac.df_dx + jac.df_du @ jac.dpi_dx
        state.buffer = [closed_loop @ e for e in state.buffer]
        state.buffer.append(jac.df_du @ jac.dpi_dtheta)
        del state.buffer[: max(0, len(state.buffer) - (state.buffer_size - 1))]
    return g


def adagrad_update(state: GapsiState, g, eta: float, box: ParameterBox) -> np.ndarray:
    """Projected step with per-coordinate rates ``eta (b - a) / sqrt(sum g^2)``."""
    g = np.asarray(g, dtype=float)
    state.grad_sq_sum = state.grad_sq_sum + g**2
    seen = state.grad_sq_sum > 0
    rates = np.zeros_like(state.theta)
    rates[seen] = eta * box.width[seen] / np.sqrt(state.grad_sq_sum[seen])
    state.theta = box.project(state.theta - rates * g)
    state.t += 1
    return state.theta


@dataclass
class Feedback:
    """What the environment reveals after an order: demand, or only sales."""

    demand: np.ndarray | None = None
    sales: list | None = None


class Gapsi:
    """GAPSI controller for one episode.

    Call :meth:`order` with the observed state and features, then
    :meth:`update` with the environment feedback for the same period.
    """

    def __init__(
        self,
        system: InventorySystem,
        box: ParameterBox,
        eta: float = 0.1,
        buffer_size: int = 10,
        theta0=None,
        policy_side: Side = Side.RIGHT,
        model_side: Side = Side.LEFT,
        censored: bool = False,
    ):
        if eta <= 0:
            raise ValueError("eta must be positive")
        if censored and system.bounded:
            raise UnsupportedModeError("censored demand is only supported with an unbounded warehouse")
        self.system = system
        self.box = box
        self.eta = float(eta)
        self.policy_side = Side.coerce(policy_side)
        self.model_side = Side.coerce(model_side)
        self.censored = censored
        theta0 = box.midpoint if theta0 is None else np.broadcast_to(np.asarray(theta0, float), (box.dim,))
        if not box.contains(theta0):
            raise ValueError("initial parameter outside the box")
        self.state = GapsiState(theta=theta0, buffer_size=buffer_size)
        self._pending = None

    @property
    def theta(self) -> np.ndarray:
        return self.state.theta

    def order(self, x, features: Sequence[np.ndarray], t: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        features = [np.asarray(w, dtype=float) for w in features]
        if any(np.any(w < 0) for w in features):
            raise ValueError("features must be nonnegative")
        u = policy_order(x, self.state.theta, features, self.system)
        self._pending = (t, x, features, u)
        return u

    def jacobians(self, feedback: Feedback) -> JacobianSet:
        t, x, features, u = self._pending
        sys = self.system
        z = sys.join(x, u)
        dpi_dx, dpi_dtheta = D.policy_jacobians(x, self.state.theta, features, sys, self.policy_side)
        if self.censored:
            if feedback.sales is None or feedback.demand is not None:
                raise UnsupportedModeError("censored mode expects sales-only feedback")
            dl = D.censored_loss_jacobian(z, feedback.sales, sys, t)
            df = D.censored_transition_jacobian(z, feedback.sales, sys, t)
        else:
            if feedback.demand is None:
                raise UnsupportedModeError("full-information mode expects demand feedback")
            dl = D.loss_jacobian(z, feedback.demand, sys, t, self.model_side)
            df = D.transition_jacobian(z, feedback.demand, sys, t, self.model_side)
        return JacobianSet.from_z_jacobians(sys, dpi_dx, dpi_dtheta, dl, df)

    def update(self, feedback: Feedback, frozen: bool = False) -> np.ndarray:
        """Compute the gradient estimate for the pending period and take a step.

        With ``frozen=True`` the buffer advances but ``theta`` is left unchanged.
        """
        if self._pending is None:
            raise RuntimeError("update() called before order()")
        g = gaps_gradient(self.state, self.jacobians(feedback))
        if not frozen:
            adagrad_update(self.state, g, self.eta, self.box)
            assert self.box.contains(self.state.theta)
        self._pending = None
        return g

    def step(self, x, features, t: int, respond) -> tuple[np.ndarray, np.ndarray]:
        """Order, obtain ``respond(u) -> Feedback``, update; returns ``(u, g)``."""
        u = self.order(x, features, t)
        g = self.update(respond(u))
        return u, g
