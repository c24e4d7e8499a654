"""Autoscaling of serverless functions on edge clusters.

Builds the scaling decision problem as a semi-Markov decision process,
solves it by uniformized value iteration into an O(1) lookup policy, and
evaluates that policy against monitoring-based and random heuristics in a
seeded discrete-event simulation of the cluster.
"""

from .config import (
    ConfigError,
    EventMode,
    ScalingConfig,
    large_network,
    load_config,
    load_preset,
    small_network,
)
from .model import (
    Action,
    Event,
    ModelError,
    SizeFormula,
    StateSpaceTooLarge,
    SystemState,
    Transition,
    apply_action,
    enumerate_states,
    event_rate,
    feasible_actions,
    holding_cost,
    reward,
    state_space_size,
    transitions,
)
from .oracle import brute_force_optimal, erlang_c_delay, monte_carlo_value
from .reporting import ScalerSpec, SweepRow, SweepSpec, aggregate, emit, run_sweep
from .scalers import (
    DecisionContext,
    LoadEstimator,
    MonitoringScaler,
    PinnedScaler,
    RandomScaler,
    Scaler,
    SmdpScaler,
    estimate_load,
    make_scaler,
    monitoring_decide,
    random_decide,
    smdp_decide,
)
from .simulator import (
    Cluster,
    RunMetrics,
    SimConfig,
    allocate_first_fit,
    allocate_random_fit,
    remove_replica,
    rng_streams,
    run,
    snapshot_state,
)
from .solver import (
    Policy,
    PolicyTable,
    UniformizedModel,
    complexity_bounds,
    expected_metrics,
    load_policy,
    save_policy,
    solve,
    stationary_distribution,
    uniformize,
    value_iteration,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "Cluster",
    "ConfigError",
    "DecisionContext",
    "Event",
    "EventMode",
    "LoadEstimator",
    "ModelError",
    "MonitoringScaler",
    "PinnedScaler",
    "Policy",
    "PolicyTable",
    "RandomScaler",
    "RunMetrics",
    "Scaler",
    "ScalerSpec",
    "ScalingConfig",
    "SimConfig",
    "SizeFormula",
    "SmdpScaler",
    "StateSpaceTooLarge",
    "SweepRow",
    "SweepSpec",
    "SystemState",
    "Transition",
    "UniformizedModel",
    "aggregate",
    "allocate_first_fit",
    "allocate_random_fit",
    "apply_action",
    "brute_force_optimal",
    "complexity_bounds",
    "emit",
    "enumerate_states",
    "erlang_c_delay",
    "estimate_load",
    "event_rate",
    "expected_metrics",
    "feasible_actions",
    "holding_cost",
    "large_network",
    "load_config",
    "load_policy",
    "load_preset",
    "make_scaler",
    "monitoring_decide",
    "monte_carlo_value",
    "random_decide",
    "remove_replica",
    "reward",
    "rng_streams",
    "run",
    "run_sweep",
    "save_policy",
    "small_network",
    "smdp_decide",
    "snapshot_state",
    "solve",
    "state_space_size",
    "stationary_distribution",
    "transitions",
    "uniformize",
    "value_iteration",
]
