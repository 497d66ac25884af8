"""Online learning of base-stock policies for perishable multi-product inventories."""

from .baselines import (
    ForecastLevelPolicy,
    LevelPolicy,
    MpcPlan,
    MpcPolicy,
    best_cyclic_level,
    best_stationary_level,
    candidate_levels,
    mpc_plan,
    rollout_levels,
)
from .checks import check_point, fd_jacobian, fd_oracle
from .config import ConfigError, ExperimentConfig, load_config
from .controller import Feedback, Gapsi, GapsiState, ParameterBox, adagrad_update, gaps_gradient, policy_order
from .demand import (
    DemandSeries,
    ForecastSeries,
    calendar_features,
    load_demand_csv,
    normalized_std,
    poisson_demand,
    weekly_forecast,
    write_demand_csv,
)
from .derivatives import (
    JacobianSet,
    Side,
    UnsupportedModeError,
    censored_loss_jacobian,
    censored_transition_jacobian,
    loss_jacobian,
    policy_jacobians,
    transition_jacobian,
    ztilde_jacobian,
)
from .inventory import (
    COST_NAMES,
    InventorySystem,
    ProductSpec,
    StepOutcome,
    Trace,
    apply_discard,
    compute_sales,
    discard_by_recursion,
    loss,
    simulate_episode,
    step,
    transition,
)
from .metrics import EpisodeTotals, lost_sales_pct, outdating_pct, ratio_of_losses

__version__ = "0.1.0"
