"""Deterministic multi-agent navigation with harmonic and circulating potential fields."""

from .controller import AgentController, goal_term, on_tick_sense, self_control
from .engine import (
    MetricsReport,
    SimConfig,
    TrajectoryLog,
    collision_audit,
    curvature_profile,
    detect_deadlock,
    lyapunov_trace,
    run,
    step,
)
from .harmonic import (
    FieldStats,
    ScalarGridField,
    field_stats,
    gradient_at,
    resolve_incremental,
    solve_dirichlet,
    value_at,
)
from .interaction import (
    InteractionParams,
    ObstacleRepulsionParams,
    WeightProfile,
    circulation_bound_check,
    obstacle_repulsion,
    pair_force,
    radial_direction,
    tangential_direction,
    weight,
)
from .scenarios import BUILTIN_NAMES, ScenarioSpec, builtin, load, save
from .world import (
    AgentBody,
    Ball,
    Box,
    ConfigError,
    KnowledgeMap,
    Workspace,
    neighbors,
    passage_width_audit,
    sense_obstacles,
    update_knowledge,
    validate_scenario,
)

__version__ = "0.1.0"
