"""Crowd simulation and stampede-probability estimation under GPS position noise."""
from .assess import AssessmentConfig, DetectionReport, Method
from .core import AgentState, SpatialIndex, VenueMap, Vec2
from .kalman import KalmanConfig
from .mc import ProbabilityEstimate, TrialSpec, estimate, run_grid, run_kf_experiment, run_trial
from .pedmodel import PedModelConfig, World
from .scenario import ConfigurationError, Scenario, ScenarioError, load_scenario, spawn_grid

__version__ = "0.1.0"

__all__ = [
    "AgentState", "AssessmentConfig", "ConfigurationError", "DetectionReport", "KalmanConfig", "Method",
    "PedModelConfig", "ProbabilityEstimate", "Scenario", "ScenarioError", "SpatialIndex", "TrialSpec",
    "VenueMap", "Vec2", "World", "estimate", "load_scenario", "run_grid", "run_kf_experiment", "run_trial",
    "spawn_grid",
]
