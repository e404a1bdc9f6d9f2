"""Contains math utility functions shared across synthunits modules."""
import hashlib
import math
from typing import Optional, Union

import numpy as np
import numpy.typing as npt

from synthunits.typing import F


def poisson(x: int, mu: float = 1) -> float:
    """Returns the Poisson probability mass at `x`.

    Used as a prior over segment lengths: `x` is a length in frames and
    `mu` the expected length.

    Args:
        x: A non-negative int.
        mu: (Optional.) The distribution mean, > 0. Defaults to 1.

    Returns:
        P(X = x) for X ~ Poisson(mu), as a float.
    """
    # Log space keeps long segments (x in the hundreds) from overflowing.
    return math.exp(x * math.log(mu) - mu - math.lgamma(x + 1))


def clamp(number: F, mn: Optional[F] = None, mx: Optional[F] = None) -> F:
    """Returns `number` limited to the range [mn, mx].

    Either bound may be None, meaning unbounded on that side. E.g.:
        >>> clamp(450.0, mn=60.0, mx=400.0)
        400.0
        >>> clamp(35, mx=20)
        20
    """
    if mn is not None and number < mn:
        return mn
    if mx is not None and number > mx:
        return mx
    return number


def round_half_up(number: float) -> int:
    """Rounds to the nearest integer, with .5 going up.

    Python's built-in `round` rounds half to even, which would map
    2.5 to 2; here 2.5 maps to 3.
    """
    return math.floor(number + 0.5)


def mean_power(samples: npt.ArrayLike) -> float:
    """Returns the mean squared amplitude of a sample array."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size == 0:
        return 0.0
    return float(np.mean(arr * arr))


def power_db(numerator: float, denominator: float) -> float:
    """Returns 10 * log10(numerator / denominator)."""
    return 10.0 * math.log10(numerator / denominator)


def db_to_power_ratio(db: float) -> float:
    """Converts decibels to a linear power ratio."""
    return float(10.0 ** (db / 10.0))


def derive_seed(*parts: Union[int, str]) -> int:
    """Derives a stable 64-bit seed from a sequence of ints / strings.

    Python's built-in `hash` is salted per process for strings, so it
    can't be used for seeds that must agree across runs and machines.
    This hashes the parts with BLAKE2b instead.

    Args:
        *parts: Seed components, e.g. a global seed and an utterance
            id. Order matters.

    Returns:
        A non-negative int below 2**64.
    """
    hasher = hashlib.blake2b(digest_size=8)
    for part in parts:
        tag = b'i' if isinstance(part, int) else b's'
        hasher.update(tag + str(part).encode('utf-8') + b'\x00')
    return int.from_bytes(hasher.digest(), 'little')
