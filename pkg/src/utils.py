import math
from typing import Sequence

import numpy as np
import pandas as pd


class TiltShieldError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(TiltShieldError, ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ContractError(TiltShieldError, ValueError):
    pass


class DomainError(TiltShieldError, ValueError):
    pass


class NumericError(TiltShieldError, ArithmeticError):
    """Raised when training produces a non-finite loss or gradient."""


class FormatError(TiltShieldError, ValueError):
    pass


class AlignmentError(TiltShieldError, ValueError):
    pass


class DatasetIOError(TiltShieldError, OSError):
    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{path}: {message}")


def validate_unit_interval(name, value):
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise DomainError(f"{name} must lie in [0, 1], got {value}")


def validate_positive(name, value):
    if not value > 0:
        raise ConfigError(name, f"must be positive, got {value}")


def validate_probability_vector(name, values: Sequence[float]):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ConfigError(name, "must be a non-empty vector")
    if np.any(arr < 0) or abs(arr.sum() - 1.0) > 1e-9:
        raise ConfigError(name, f"must be non-negative and sum to 1, got {list(values)}")


def running_average(values, window):
    """Trailing running mean; the first window-1 points average what is available."""
    series = pd.Series(np.asarray(values, dtype=float))
    return series.rolling(window=max(1, int(window)), min_periods=1).mean().to_numpy()
