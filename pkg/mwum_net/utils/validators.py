import math
from typing import List, Optional, Sequence

import numpy as np


def validate_positive(value: float, name: str) -> float:
    """Return value if it is a finite positive number, else raise ValueError."""
    if not isinstance(value, (int, float, np.integer, np.floating)) or isinstance(value, bool):
        raise ValueError(f"{name} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be positive and finite, got {value}")
    return value


def validate_alpha(alpha: float) -> float:
    """Fairness exponent must be positive and finite."""
    return validate_positive(alpha, "alpha")


def validate_scales(scales: Sequence[float], minimum_count: int = 1) -> List[float]:
    """Scaling factors r must be >= 1; at least minimum_count of them."""
    values = [float(r) for r in scales]
    if len(values) < minimum_count:
        raise ValueError(f"need at least {minimum_count} scale values, got {len(values)}")
    for r in values:
        if not math.isfinite(r) or r < 1:
            raise ValueError(f"scale values must be >= 1, got {r}")
    return values


def validate_seeds(seeds: Sequence[int]) -> List[int]:
    """Seeds must be nonnegative integers without duplicates."""
    values = [int(s) for s in seeds]
    if any(s < 0 for s in values):
        raise ValueError("seeds must be nonnegative integers")
    if len(set(values)) != len(values):
        raise ValueError("seeds must be distinct")
    return values


def validate_state_vector(values: Optional[Sequence[float]], size: int, name: str,
                          integral: bool = False) -> np.ndarray:
    """Broadcast a scalar, check length, finiteness and sign."""
    if values is None:
        return np.zeros(size, dtype=np.int64 if integral else float)
    array = np.asarray(values, dtype=float).reshape(-1)
    if array.size == 1 and size != 1:
        array = np.full(size, float(array[0]))
    if array.size != size:
        raise ValueError(f"{name} must have {size} entries, got {array.size}")
    if not np.all(np.isfinite(array)) or np.any(array < 0):
        raise ValueError(f"{name} must be finite and nonnegative")
    if integral:
        if np.any(array != np.floor(array)):
            raise ValueError(f"{name} must be integral")
        return array.astype(np.int64)
    return array
