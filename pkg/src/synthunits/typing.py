"""Contains constants/variables/etc. used for type hinting."""
from typing import Protocol, TypeVar

import numpy as np
import numpy.typing as npt


# Type aliases defined here.

T = TypeVar('T')
F = TypeVar('F', bound=float)
CT = TypeVar('CT', covariant=True)

FloatArray = npt.NDArray[np.float64]
Float32Array = npt.NDArray[np.float32]
IntArray = npt.NDArray[np.int64]
BoolArray = npt.NDArray[np.bool_]


# Protocols defined here.

class DurationPenalty(Protocol):
    """Is a segment penalty functional for duration-penalized DP.

    Called with a segment length in frames; returns the penalty added
    to that segment's cost.
    """

    def __call__(self, length: int) -> float:
        ...
