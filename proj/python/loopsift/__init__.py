"""Loop sifting: pick the loop closures that make a dense reconstruction most self-consistent."""

from ._loopsift import (
    FalseLoopModel,
    IoError,
    NumericError,
    ParseError,
    Pose,
    Scenario,
    ScenarioConfig,
    export_scenario,
    generate,
    precision_recall,
    run_cli,
    se3_exp,
    se3_log,
    sift_scenario,
    trajectory_rmse,
)

__all__ = [
    "FalseLoopModel",
    "IoError",
    "NumericError",
    "ParseError",
    "Pose",
    "Scenario",
    "ScenarioConfig",
    "export_scenario",
    "generate",
    "precision_recall",
    "run_cli",
    "se3_exp",
    "se3_log",
    "sift_scenario",
    "trajectory_rmse",
]
