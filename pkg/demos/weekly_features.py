"""Calendar features against hindsight baselines on weekly demand.

Two products follow a weekly pattern with noise.  A single base-stock level
cannot follow the week, a day-of-week schedule can, and the learner with
calendar features (a constant, a weekday indicator and last week's demands)
builds its own schedule online, without seeing the future.

Run:  python demos/weekly_features.py     (about half a minute)
"""

from pathlib import Path

from gapsi.config import load_config
from gapsi.runner import run

config = load_config(Path(__file__).resolve().parents[1] / "configs" / "weekly_cyclic.toml")
variants = {
    "zero": {"algorithm.name": "zero"},
    "stationary oracle": {"algorithm.name": "stationary-oracle"},
    "cyclic oracle": {"algorithm.name": "cyclic-oracle"},
    "forecast levels": {"algorithm.name": "forecast-level"},
    "learner, constant feature": {"algorithm.features": "constant", "algorithm.box": (0.0, 20.0), "algorithm.theta0": 10.0},
    "learner, calendar features": {},
}

print(f"{'policy':28s} {'loss':>10s} {'vs stationary':>14s} {'lost %':>8s} {'outdated %':>11s}")
for label, changes in variants.items():
    r = run(config.with_overrides(**changes))
    print(f"{label:28s} {r.cumulative_loss:10.1f} {r.ratio_to_oracle:14.3f} {r.lost_sales_pct:8.2f} {r.outdating_pct:11.2f}")
