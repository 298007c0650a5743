"""Model-free actor-critic trajectory tracking on a simulated arm."""

from .core import (
    ActorWeights,
    AugmentedState,
    CostWeights,
    CriticWeights,
    ErrorWindow,
    LearningRates,
    NumericalDivergenceError,
    SingularBlockError,
)
from .loop import ControllerState, JointSetup, NoiseWindow, StepRecord, run_episode, run_lockstep
from .plant import ArmPlant, JointParams, PayloadSchedule, PlantState, ScalarLinearPlant

__all__ = [
    "ActorWeights",
    "ArmPlant",
    "AugmentedState",
    "ControllerState",
    "CostWeights",
    "CriticWeights",
    "ErrorWindow",
    "JointParams",
    "JointSetup",
    "LearningRates",
    "NoiseWindow",
    "NumericalDivergenceError",
    "PayloadSchedule",
    "PlantState",
    "ScalarLinearPlant",
    "SingularBlockError",
    "StepRecord",
    "run_episode",
    "run_lockstep",
]

__version__ = "0.1.0"
