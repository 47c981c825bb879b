"""Exception types raised across the package."""

from __future__ import annotations

import numpy as np


class SchemaError(ValueError):
    """Data or features do not conform to the declared schema."""


class MissingRewardError(ValueError):
    """A MISSING reward was hit where a complete outcome is required."""


class FactorizationError(np.linalg.LinAlgError):
    """Cholesky factorization failed (matrix not positive definite)."""


class ConsistencyError(ArithmeticError):
    """A quantity that is positive in exact arithmetic came out non-positive."""


class ParameterError(ValueError):
    """A numeric argument is outside its admissible range."""


class PositivityError(ValueError):
    """A propensity needed as a denominator is zero or out of (0, 1]."""


class DegenerateOverlapError(ValueError):
    """No observed trajectory is consistent with the target policy."""


class SampleDepletionError(ValueError):
    """Backward filtering left no trajectories to fit a stage.

    ``retained`` maps stage index to the number of trajectories kept.
    """

    def __init__(self, message: str, retained: dict[int, int]):
        super().__init__(f"{message} (retained per stage: {retained})")
        self.retained = dict(retained)


class ConfigError(ValueError):
    """Configuration failed validation; ``violations`` lists every problem."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))


class ConfigParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"cannot parse config{where}: {message}")
