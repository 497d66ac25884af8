"""Config-driven episodes, reports, benchmarks and the Poisson reproduction."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import baselines as B
from .checks import check_point, check_policy_point, random_point
from .config import ExperimentConfig
from .controller import Feedback, Gapsi, ParameterBox
from .demand import (
    FEATURE_DIM,
    DemandSeries,
    calendar_features,
    cyclic_demand,
    load_demand_csv,
    poisson_demand,
    weekly_forecast,
)
from .inventory import COST_NAMES, InventorySystem, ProductSpec, step
from .metrics import EpisodeTotals, lost_sales_pct, outdating_pct, ratio_of_losses

logger = logging.getLogger(__name__)


def parallel_map(fn, items, jobs: int = 1) -> list:
    """``map`` over worker processes; results keep the input order."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint32)]


def build_demand(config: ExperimentConfig, system: InventorySystem) -> DemandSeries:
    cfg = config.demand
    demand_seed = _seeds(config.seed, 2)[0]
    if cfg.source == "csv":
        series = load_demand_csv(cfg.path, cfg.layout)
        if cfg.periods is not None:
            series = DemandSeries(series.values[: cfg.periods], series.products, series.first_day, series.missing)
    elif cfg.source == "poisson":
        series = poisson_demand(cfg.periods, system.K, cfg.mean, demand_seed)
    else:
        series = cyclic_demand(cfg.periods, cfg.pattern, cfg.noise, demand_seed, cfg.trend)
    if series.K != system.K:
        raise ValueError(f"demand has {series.K} products, configuration has {system.K}")
    series.first_day = cfg.first_day
    return series


# -- controllers ----------------------------------------------------------------


class _PolicyController:
    """Wraps a fixed policy ``(t, x) -> u``."""

    def __init__(self, policy, details: dict | None = None):
        self.policy = policy
        self._details = details or {}

    def order(self, t, x):
        return self.policy(t, x)

    def observe(self, outcome, demand):
        pass

    def snapshot(self) -> np.ndarray:
        return np.zeros(0)

    def details(self) -> dict:
        return self._details


class _GapsiController:
    def __init__(self, config: ExperimentConfig, system: InventorySystem, demand: DemandSeries):
        cfg = config.algorithm
        self.features_mode = cfg.features
        self.demand = demand
        dims = 1 if cfg.features == "constant" else FEATURE_DIM
        if cfg.feature_scale is not None:
            self.scale = np.full(system.K, cfg.feature_scale)
        elif cfg.features == "constant":
            self.scale = np.ones(system.K)
        else:
            # offline default: the largest demand of the horizon bounds each product
            peak = demand.values.max(axis=0)
            self.scale = np.where(peak > 0, peak, 1.0)
        box = ParameterBox.uniform(cfg.box[0], cfg.box[1], dims * system.K)
        self.learner = Gapsi(
            system,
            box,
            eta=cfg.eta,
            buffer_size=cfg.buffer_size,
            theta0=cfg.theta0,
            policy_side=cfg.policy_side,
            model_side=cfg.model_side,
            censored=cfg.censored,
        )
        self.K = system.K

    def features(self, t: int) -> list[np.ndarray]:
        if self.features_mode == "constant":
            return [self.scale[k : k + 1] for k in range(self.K)]
        past = self.demand.values[: t - 1]
        return [calendar_features(t, past[:, k], self.scale[k], self.demand.first_day) for k in range(self.K)]

    def order(self, t, x):
        return self.learner.order(x, self.features(t), t)

    def observe(self, outcome, demand):
        if self.learner.censored:
            self.learner.update(Feedback(sales=outcome.sales))
        else:
            self.learner.update(Feedback(demand=demand))

    def snapshot(self) -> np.ndarray:
        return self.learner.theta.copy()

    def details(self) -> dict:
        return {"theta": self.learner.theta.tolist()}


def make_controller(config: ExperimentConfig, system: InventorySystem, demand: DemandSeries, oracle=None):
    """Controller for ``config.algorithm``; ``oracle`` may carry precomputed stationary levels."""
    cfg = config.algorithm
    name = cfg.name
    if name == "gapsi":
        return _GapsiController(config, system, demand)
    if name == "zero":
        return _PolicyController(lambda t, x: np.zeros(system.K))
    if name == "stationary-oracle":
        levels, _ = oracle or B.best_stationary_level(demand.values, system, cfg.grid_points, cfg.oracle_refine)
        return _PolicyController(B.LevelPolicy(levels, system), {"levels": np.asarray(levels).tolist()})
    if name == "cyclic-oracle":
        levels, _ = B.best_cyclic_level(demand.values, system, cfg.period, cfg.grid_points, cfg.oracle_refine)
        return _PolicyController(B.LevelPolicy(levels, system), {"levels": np.asarray(levels).tolist()})
    forecasts = weekly_forecast(demand.values, cfg.sigma, _seeds(config.seed, 2)[1]).values
    if name == "forecast-level":
        return _PolicyController(B.ForecastLevelPolicy(forecasts, system))
    if name == "mpc":
        return _PolicyController(B.MpcPolicy(forecasts, system, cfg.horizon))
    raise ValueError(f"unknown algorithm {name!r}")


# -- episodes and reports ------------------------------------------------------


class TraceWriter:
    """Streams one CSV row per period."""

    def __init__(self, path, system: InventorySystem, n_params: int):
        self.system = system
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._csv = csv.writer(self._fh)
        names = [p.name or f"p{k + 1}" for k, p in enumerate(system.products)]
        header = ["t"]
        for name, p in zip(names, system.products):
            header += [f"x_{name}_{i + 1}" for i in range(p.state_dim)]
        for col in ("order", "demand", "sales", "lost", "outdated", "discarded"):
            header += [f"{col}_{name}" for name in names]
        header += [f"loss_{c}" for c in COST_NAMES] + ["loss"]
        header += [f"theta_{j + 1}" for j in range(n_params)]
        self._csv.writerow(header)

    def write(self, t, x, u, d, outcome, theta):
        sales = [float(s.sum()) for s in outcome.sales]
        row = [t, *x, *u, *d, *sales, *outcome.lost_sales, *outcome.outdated, *outcome.discarded]
        row += [*outcome.breakdown, float(outcome.loss_total), *theta]
        self._csv.writerow([repr(float(v)) if not isinstance(v, int) else v for v in row])

    def close(self):
        self._fh.close()


@dataclass
class EpisodeResult:
    totals: EpisodeTotals
    breakdown: np.ndarray


def run_episode(controller, demand: DemandSeries, system: InventorySystem, writer: TraceWriter | None = None):
    totals = EpisodeTotals()
    breakdown = np.zeros(len(COST_NAMES))
    x = system.zero_state()
    for t in range(1, demand.T + 1):
        d = demand.values[t - 1]
        theta = controller.snapshot()
        u = np.maximum(np.asarray(controller.order(t, x), dtype=float), 0.0)
        out = step(system.join(x, u), d, system, t)
        controller.observe(out, d)
        totals.add(out, u, d)
        breakdown += out.breakdown
        if writer is not None:
            writer.write(t, x, u, d, out, theta)
        x = out.next_state
    return EpisodeResult(totals, breakdown)


@dataclass
class RunReport:
    algorithm: str
    periods: int
    products: int
    cumulative_loss: float
    loss_breakdown: dict
    lost_sales_pct: float
    outdating_pct: float
    outdating_defined: bool
    ratio_to_oracle: float | None
    oracle_loss: float | None
    trace_path: str | None
    config_hash: str
    seed: int
    details: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def to_dict(self, timing: bool = False) -> dict:
        data = asdict(self)
        if not timing:
            data.pop("wall_clock")
        return data


def run(
    config: ExperimentConfig,
    out_dir=None,
    trace: bool | None = None,
    oracle: tuple | None = None,
    tag: str | None = None,
) -> RunReport:
    """Simulate one episode of ``config.algorithm``; writes ``report.json`` and
    ``trace.csv`` under ``out_dir`` when given.

    The JSON report omits the wall-clock time (kept in ``timing.json``) so that
    equal configs give byte-identical reports.
    """
    started = time.perf_counter()
    system = config.system()
    demand = build_demand(config, system)
    cfg = config.algorithm
    want_trace = config.output.trace if trace is None else trace
    if config.output.compare_oracle and oracle is None:
        oracle = B.best_stationary_level(demand.values, system, cfg.grid_points, cfg.oracle_refine)

    controller = make_controller(config, system, demand, oracle)
    writer = trace_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if want_trace:
            trace_path = out_dir / f"{tag or cfg.name}_trace.csv"
            writer = TraceWriter(trace_path, system, controller.snapshot().size)
    try:
        result = run_episode(controller, demand, system, writer)
    finally:
        if writer is not None:
            writer.close()

    outd = outdating_pct(result.totals)
    report = RunReport(
        algorithm=cfg.name,
        periods=demand.T,
        products=system.K,
        cumulative_loss=result.totals.loss,
        loss_breakdown=dict(zip(COST_NAMES, result.breakdown.tolist())),
        lost_sales_pct=lost_sales_pct(result.totals).value,
        outdating_pct=outd.value,
        outdating_defined=outd.defined,
        ratio_to_oracle=None if oracle is None else ratio_of_losses(result.totals.loss, oracle[1]).value,
        oracle_loss=None if oracle is None else float(oracle[1]),
        # relative to the report, so identical runs in different directories match
        trace_path=None if trace_path is None else trace_path.name,
        config_hash=config.digest(),
        seed=config.seed,
        details=controller.details(),
        wall_clock=time.perf_counter() - started,
    )
    if out_dir is not None:
        name = tag or cfg.name
        (out_dir / f"{name}_report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
        (out_dir / f"{name}_timing.json").write_text(json.dumps({"wall_clock": report.wall_clock}))
    return report


def _bench_one(args):
    config, out_dir, trace, oracle = args
    return run(config, out_dir, trace, oracle)


def bench(config: ExperimentConfig, out_dir=None, trace: bool | None = None, jobs: int = 1) -> list[RunReport]:
    """Run every algorithm of ``config.bench`` on the same demand."""
    system = config.system()
    demand = build_demand(config, system)
    cfg = config.algorithm
    oracle = None
    if config.output.compare_oracle:
        levels, loss = B.best_stationary_level(demand.values, system, cfg.grid_points, cfg.oracle_refine)
        oracle = (levels, loss)
    tasks = [
        (config.with_overrides(**{"algorithm.name": name}), out_dir, trace, oracle)
        for name in config.bench.algorithms
    ]
    return parallel_map(_bench_one, tasks, jobs)


@dataclass
class OracleReport:
    stationary_levels: list
    stationary_loss: float
    cyclic_levels: list
    cyclic_loss: float
    config_hash: str


def compute_oracles(config: ExperimentConfig) -> OracleReport:
    system = config.system()
    demand = build_demand(config, system)
    cfg = config.algorithm
    s_levels, s_loss = B.best_stationary_level(demand.values, system, cfg.grid_points, cfg.oracle_refine)
    c_levels, c_loss = B.best_cyclic_level(demand.values, system, cfg.period, cfg.grid_points, cfg.oracle_refine)
    return OracleReport(s_levels.tolist(), s_loss, c_levels.tolist(), c_loss, config.digest())


# -- derivative verification ---------------------------------------------------


def default_check_systems() -> list[InventorySystem]:
    return [
        InventorySystem([ProductSpec(2, purchase=1, holding=1, penalty=10, outdating=1)]),
        InventorySystem(
            [
                ProductSpec(3, 1, purchase=1, holding=1, penalty=8, outdating=3),
                ProductSpec(2, 2, purchase=2, holding=1, penalty=5, outdating=1),
            ]
        ),
        InventorySystem(
            [
                ProductSpec(2, unit_volume=1.0, holding=1, penalty=6, outdating=2, overflow=3),
                ProductSpec(3, 1, unit_volume=0.5, purchase=1, holding=1, penalty=9, outdating=1, overflow=1),
                ProductSpec(1, 1, unit_volume=2.0, holding=2, penalty=7, overflow=2),
            ],
            capacity=6.0,
        ),
    ]


@dataclass
class DerivativeCheckReport:
    points: int
    functions_checked: int
    mismatches: list

    @property
    def ok(self) -> bool:
        return not self.mismatches


def check_derivatives(systems, points: int = 200, seed: int = 0, tol: float = 1e-6) -> DerivativeCheckReport:
    """Finite-difference check of every one-sided Jacobian at random points."""
    rng = np.random.default_rng(seed)
    mismatches, checked = [], 0
    for system in systems:
        for _ in range(points):
            grid = 0.5 if rng.random() < 0.5 else None
            z, d = random_point(system, rng, grid=grid)
            bad = check_point(system, z, d, tol=tol)
            x = z[system.x_columns]
            features = [np.round(rng.uniform(0, 2, 2), 1) for _ in range(system.K)]
            theta = np.round(rng.uniform(0, 5, 2 * system.K), 1)
            bad += check_policy_point(system, x, theta, features, tol=tol)
            checked += 2 * (3 if system.bounded else 2) + 4
            mismatches += [
                {"system": repr(system), "function": m.function, "side": m.side.value, "z": m.z.tolist(), "error": m.max_error}
                for m in bad
            ]
    return DerivativeCheckReport(points * len(systems), checked, mismatches)


# -- Poisson reproduction ----------------------------------------------------------

# (purchase, penalty, outdating) rows with the reference learned-policy and
# optimal long-run average losses at T = 10000
POISSON_ROWS = (
    ((0.0, 8.0, 3.0), 4.19, 4.16),
    ((0.0, 8.0, 8.0), 4.31, 4.28),
    ((5.0, 8.0, 3.0), 27.99, 28.01),
)


@dataclass
class PoissonRow:
    costs: tuple
    train_periods: int
    average_level: float
    final_level: float
    test_loss: float
    test_stderr: float
    reference: float
    optimal: float
    within_reference: bool
    within_optimal: bool

    @property
    def ok(self) -> bool:
        return self.within_reference and self.within_optimal


def _poisson_row(args) -> PoissonRow:
    (costs, reference, optimal), T, n_test, seed = args
    purchase, penalty, outdating = costs
    system = InventorySystem(
        [ProductSpec(3, purchase=purchase, penalty=penalty, outdating=outdating, holding=1.0)]
    )
    train_seed, test_seed = _seeds(seed, 2)
    demand = poisson_demand(T, 1, 5.0, train_seed).values
    learner = Gapsi(system, ParameterBox.uniform(0.0, 20.0, 1), eta=0.1, buffer_size=10, theta0=10.0)
    features = [np.ones(1)]
    x = system.zero_state()
    level_sum = 0.0
    for t in range(1, T + 1):
        level_sum += float(learner.theta[0])
        u = learner.order(x, features, t)
        x = step(system.join(x, u), demand[t - 1], system, t).next_state
        learner.update(Feedback(demand=demand[t - 1]))
    average = level_sum / T
    tests = np.random.default_rng(test_seed).poisson(5.0, size=(n_test, T, 1)).astype(float)
    per_sequence = B.rollout_levels(np.array([[average]]), tests, system).losses.mean(axis=-1)
    test_loss = float(per_sequence.mean())
    stderr = float(per_sequence.std(ddof=1) / np.sqrt(n_test)) if n_test > 1 else 0.0
    return PoissonRow(
        costs=costs,
        train_periods=T,
        average_level=average,
        final_level=float(learner.theta[0]),
        test_loss=test_loss,
        test_stderr=stderr,
        reference=reference,
        optimal=optimal,
        within_reference=abs(test_loss - reference) <= 0.15,
        within_optimal=abs(test_loss - optimal) <= 0.03 * optimal,
    )


def reproduce_poisson_table(T: int = 10_000, n_test: int = 100, seed: int = 0, jobs: int = 1, rows=POISSON_ROWS):
    """Learn a constant base-stock level on Poisson(5) demand for a product with a
    three-period lifetime, average the iterates, and evaluate that level on
    fresh test sequences starting from an empty system."""
    return parallel_map(_poisson_row, [(row, T, n_test, seed) for row in rows], jobs)
