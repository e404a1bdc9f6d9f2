"""Contains mixin classes shared by samplers."""
import random
from typing import Any, Generic, Sequence

from synthunits.mathtools import derive_seed
from synthunits.typing import T


class RandomMixin:
    """Gives a class its own seeded random.Random instance.

    Subclasses draw from `self.rng`, never from the `random` module.
    The RNG is seeded with `derive_seed(rng_seed, stream)`, so objects
    sharing a seed but keyed by different streams (one per epoch, say)
    draw independent values, whatever order they were built in.

    Attributes:
        rng: The random.Random instance.
        rng_seed: The int seed; required, since there is no fallback
            to wall-clock seeding.
        stream: An int or str key selecting a stream under `rng_seed`.
            Default is 0.
    """

    def __init__(self, *args: Any, **kwargs: Any) -> None:
        """Inits an object using RandomMixin.

        Args:
            *args: Passed through to the next class' __init__.
            **kwargs: Passed through to the next class' __init__,
                minus 'rng_seed' (required) and 'stream' (optional),
                which are consumed here.
        """
        if kwargs.get('rng_seed') is None:
            raise ValueError(
                "An explicit 'rng_seed' is required; wall-clock seeding "
                "is not supported."
            )
        self.rng_seed: int = kwargs.pop('rng_seed')
        self.stream: Any = kwargs.pop('stream', 0)
        super().__init__(*args, **kwargs)
        self.reset()

    def reset(self) -> None:
        """Reseeds `rng` so that draws start over."""
        self.rng = random.Random(derive_seed(self.rng_seed, self.stream))
        supr = super()
        if hasattr(supr, 'reset'):
            supr.reset()


class ItemsMixin(Generic[T]):
    """Holds the fixed pool a sampler draws from.

    Attributes:
        items: (Read-only.) The pool of values. Empty by default.
    """

    def __init__(self, *args: Any, **kwargs: Any) -> None:
        """Inits an object using ItemsMixin.

        Args:
            *args: Passed through to the next class' __init__.
            **kwargs: Passed through to the next class' __init__,
                minus 'items', which is consumed here.
        """
        self._items: Sequence[T] = tuple(kwargs.pop('items', ()))
        super().__init__(*args, **kwargs)

    @property
    def items(self) -> Sequence[T]:
        """See the `items` attribute."""
        return self._items
