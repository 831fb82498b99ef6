"""Distributed MPC flock navigation: followers track a leader through
obstructed scenes using only neighbor-local information."""

from .comms import (
    AlignedPrediction,
    NeighborPacket,
    VirtualNeighborhoods,
    align_horizon,
    closest_k,
    detect_neighbors,
    virtual_neighborhoods,
)
from .geometry import (
    CircleObstacle,
    CompositeEnvironment,
    RectangleObstacle,
    avoidance_residual,
    contains,
    obstacle_h,
    residual_gradient,
)
from .mpc import (
    AgentState,
    ConstraintResiduals,
    MpcConfig,
    MpcInstance,
    constraint_residuals,
    cost_gradient,
    dynamics_step,
    pack_instance,
    predicted_sq_distance,
    rollout,
    total_cost,
)
from .rules import (
    ReferenceOutputs,
    TradeoffWeight,
    alignment_weights,
    classify_ahead,
    cohesion_weights,
    reference_outputs,
    tradeoff_weight,
    update_hierarchy,
)
from .scenario import ValidationError, config_digest, parse_scenario
from .sim import (
    AgentSpec,
    LeaderPath,
    RuleParams,
    ScenarioConfig,
    StepRecord,
    World,
    apply_ablation,
    leader_outputs,
    metrics,
    run,
    step,
)
from .solver import (
    SolveOutcome,
    SolverError,
    SolverSettings,
    inner_solve,
    project_box,
    solve,
)

__version__ = "0.1.0"
