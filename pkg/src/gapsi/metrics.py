"""Episode-level performance metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .inventory import StepOutcome, Trace


@dataclass
class Metric:
    """A ratio-based metric; ``defined`` is False when its denominator was zero."""

    value: float
    defined: bool = True


@dataclass
class EpisodeTotals:
    """Running sums over an episode, so metrics never need the full trace."""

    demand: float = 0.0
    lost_sales: float = 0.0
    outdated: float = 0.0
    ordered: float = 0.0
    loss: float = 0.0
    periods: int = 0

    def add(self, outcome: StepOutcome, order, demand) -> None:
        self.demand += float(np.sum(demand))
        self.lost_sales += float(np.sum(outcome.lost_sales))
        self.outdated += float(np.sum(outcome.outdated))
        self.ordered += float(np.sum(order))
        self.loss += float(outcome.loss_total)
        self.periods += 1

    @classmethod
    def from_trace(cls, trace: Trace) -> "EpisodeTotals":
        totals = cls()
        for out, u, d in zip(trace.outcomes, trace.orders, trace.demands):
            totals.add(out, u, d)
        return totals


def _totals(source) -> EpisodeTotals:
    return source if isinstance(source, EpisodeTotals) else EpisodeTotals.from_trace(source)


def _percent(num: float, den: float) -> Metric:
    if den == 0:
        return Metric(0.0, defined=False)
    return Metric(100.0 * num / den)


def lost_sales_pct(source: Trace | EpisodeTotals) -> Metric:
    """Unmet demand as a percentage of total demand."""
    t = _totals(source)
    return _percent(t.lost_sales, t.demand)


def outdating_pct(source: Trace | EpisodeTotals) -> Metric:
    """Expired units as a percentage of units ordered."""
    t = _totals(source)
    return _percent(t.outdated, t.ordered)


def ratio_of_losses(loss, reference_loss) -> Metric:
    """Cumulative loss relative to a reference (below 1 beats the reference)."""
    loss = loss.cumulative_loss if isinstance(loss, Trace) else float(loss)
    ref = reference_loss.cumulative_loss if isinstance(reference_loss, Trace) else float(reference_loss)
    if ref == 0:
        return Metric(0.0 if loss == 0 else float("inf"), defined=False)
    return Metric(loss / ref)
