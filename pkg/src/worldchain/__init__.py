"""Simulation of measurement chains, world distributions and retrodiction."""

from .errors import (
    ChainError,
    InvalidInputError,
    PVMRequiredError,
    RecursionBlockedError,
    ZeroStateError,
)
from .measurement import Branch, Chain, MeasurementFamily, compose_chain
from .probability import FiniteProbabilitySpace, MLTestFinite, world_distribution
from .scenarios import NAMES, ScenarioSpec, build_scenario, expected_report, run_scenario
from .spaces import ChainLayout, apparatus, system
from .typicality import WorldPrefix, sample_worlds

__version__ = "0.1.0"

__all__ = [
    "Branch",
    "Chain",
    "ChainError",
    "ChainLayout",
    "FiniteProbabilitySpace",
    "InvalidInputError",
    "MLTestFinite",
    "MeasurementFamily",
    "NAMES",
    "PVMRequiredError",
    "RecursionBlockedError",
    "ScenarioSpec",
    "WorldPrefix",
    "ZeroStateError",
    "apparatus",
    "build_scenario",
    "compose_chain",
    "expected_report",
    "run_scenario",
    "sample_worlds",
    "system",
    "world_distribution",
]
