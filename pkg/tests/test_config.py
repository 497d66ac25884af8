import math
from pathlib import Path

import pytest

from gapsi.config import ALGORITHMS, ConfigError, load_config, validate_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def minimal(**overrides):
    data = {
        "products": [{"lifetime": 2, "penalty": 4.0}],
        "demand": {"source": "poisson", "periods": 10},
        "algorithm": {"name": "gapsi"},
    }
    data.update(overrides)
    return data


def test_defaults():
    cfg = validate_config(minimal())
    assert cfg.seed == 0
    assert math.isinf(cfg.capacity)
    assert cfg.algorithm.buffer_size == 10 and cfg.algorithm.policy_side == "right"
    assert cfg.system().K == 1


def test_unknown_key_reports_path():
    data = minimal()
    data["algorithm"]["learning_rate"] = 0.1
    with pytest.raises(ConfigError, match="algorithm.learning_rate"):
        validate_config(data)


def test_bad_value_reports_path():
    data = minimal(products=[{"lifetime": 0}])
    with pytest.raises(ConfigError, match="products.0.lifetime"):
        validate_config(data)


@pytest.mark.parametrize(
    "demand",
    [{"source": "csv"}, {"source": "poisson"}, {"source": "synthetic-cyclic", "periods": 5}, {"source": "m5"}],
)
def test_demand_source_requirements(demand):
    with pytest.raises(ConfigError):
        validate_config(minimal(demand=demand))


def test_empty_state_rejected():
    with pytest.raises(ConfigError, match="lifetime \\+ lead_time"):
        validate_config(minimal(products=[{"lifetime": 1}]))


def test_box_order():
    with pytest.raises(ConfigError, match="box"):
        validate_config(minimal(algorithm={"name": "gapsi", "box": [3.0, 1.0]}))


def test_overrides_and_digest():
    cfg = validate_config(minimal())
    other = cfg.with_overrides(seed=5, **{"algorithm.name": "mpc"})
    assert other.seed == 5 and other.algorithm.name == "mpc"
    assert cfg.with_overrides(seed=None) == cfg
    assert cfg.digest() == validate_config(minimal()).digest()
    assert cfg.digest() != other.digest()
    with pytest.raises(ConfigError):
        cfg.with_overrides(**{"algorithm.name": "magic"})


def test_all_algorithms_listed():
    assert set(ALGORITHMS) == {"gapsi", "stationary-oracle", "cyclic-oracle", "forecast-level", "mpc", "zero"}


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.toml")))
def test_shipped_configs_load(name):
    cfg = load_config(CONFIGS / name)
    assert cfg.system().K == len(cfg.products)


def test_relative_csv_path(tmp_path):
    (tmp_path / "d.csv").write_text("item,d_1\na,1\n")
    (tmp_path / "c.toml").write_text(
        '[[products]]\nlifetime = 2\n[demand]\nsource = "csv"\npath = "d.csv"\n[algorithm]\nname = "zero"\n'
    )
    assert Path(load_config(tmp_path / "c.toml").demand.path) == tmp_path / "d.csv"


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="no such file"):
        load_config(tmp_path / "none.toml")
    (tmp_path / "bad.toml").write_text("seed = = 3")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.toml")


def test_time_varying_schedules():
    cfg = validate_config(minimal(capacity=[5.0, 6.0], products=[{"lifetime": 2, "penalty": [1.0, 2.0]}]))
    assert cfg.system().capacity_at(2) == 6.0
