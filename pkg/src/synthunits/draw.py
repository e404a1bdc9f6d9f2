"""Contains the base Sampler class, for drawing random values."""
from abc import ABC, abstractmethod
from typing import Generic, List, Optional, overload, Union

from synthunits.typing import CT


class Sampler(Generic[CT], ABC):
    """Abstract base class for samplers.

    A sampler draws values (utterance ids, for instance) from some
    source. Concrete samplers implement `draw` and `draw_many`; calling
    the sampler object dispatches to one or the other.
    """

    def reset(self) -> None:
        """Returns the sampler to its initial state.

        Samplers that hold an RNG or other state restore it here, so
        that the same draws repeat after a reset. No-op by default.
        """

    @overload
    def __call__(self, number: None = None) -> CT:
        ...

    @overload
    def __call__(self, number: int) -> List[CT]:
        ...

    def __call__(self, number: Optional[int] = None) -> Union[CT, List[CT]]:
        """Draws one value, or a list of `number` values.

        E.g.:
            >>> epoch_sampler()
            'u1'
            >>> epoch_sampler(2)
            ['u3', 'u1']

        Args:
            number: (Optional.) How many values to draw. None (the
                default) returns a bare value instead of a list.

        Returns:
            One value if `number` is None, otherwise a list.
        """
        if number is None:
            return self.draw()
        if number < 0:
            raise ValueError(f'Cannot draw a negative number ({number}).')
        if number == 1:
            return [self.draw()]
        return self.draw_many(number)

    @abstractmethod
    def draw(self) -> CT:
        """Return one drawn value."""

    @abstractmethod
    def draw_many(self, number: int) -> List[CT]:
        """Return `number` drawn values, as a list."""
