"""Sequential decision policies: dynamic treatment regimes offline and
contextual bandits online, with simulators that know the ground truth."""

__version__ = "0.1.0"

from .core import (MISSING, Dataset, Schema, StageRecord, Trajectory, discounted_return,
                   policy_action_probs)
from .numerics import RngStream

__all__ = ["MISSING", "Dataset", "Schema", "StageRecord", "Trajectory", "RngStream", "discounted_return",
           "policy_action_probs", "__version__"]
