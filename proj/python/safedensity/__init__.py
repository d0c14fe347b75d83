"""Safe density control of robot teams on a grid."""

from ._safedensity import (
    Boundary,
    ConfigError,
    ConvexProgram,
    DimensionError,
    Grid,
    InfeasibleError,
    ModelError,
    RobotConstraint,
    RunLog,
    ScenarioConfig,
    Solution,
    SolveStatus,
    default_epsilon,
    run_batch,
    run_episode,
    solve,
    team_density,
)

__all__ = [
    "Boundary",
    "ConfigError",
    "ConvexProgram",
    "DimensionError",
    "Grid",
    "InfeasibleError",
    "ModelError",
    "RobotConstraint",
    "RunLog",
    "ScenarioConfig",
    "Solution",
    "SolveStatus",
    "default_epsilon",
    "run_batch",
    "run_episode",
    "solve",
    "team_density",
]
