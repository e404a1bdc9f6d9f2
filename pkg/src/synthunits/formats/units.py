"""Contains UnitSequence and the tab-separated unit file format.

Each line of a unit file is "id<TAB>u1 u2 ...<TAB>d1 d2 ...": the
utterance id, unit ids, and per-unit durations in frames.
"""
from dataclasses import dataclass, field
import os
from pathlib import Path
from typing import (
    Dict, Iterable, Iterator, List, Mapping, Optional, Tuple, Union
)

from synthunits.errors import LengthMismatchError


PathLike = Union[str, 'os.PathLike[str]']


@dataclass(frozen=True)
class UnitSequence:
    """A unit sequence with per-unit durations.

    Attributes:
        units: A tuple of unit ids.
        durations: A tuple of positive frame counts, one per unit.
            Their sum is the utterance's frame count T.
        frame_rate_hz: Frames per second.
        dedup: True if no two consecutive units are equal, i.e. runs
            have been merged into durations.
    """

    units: Tuple[int, ...]
    durations: Tuple[int, ...] = field(default=())
    frame_rate_hz: float = 50.0
    dedup: bool = False

    def __post_init__(self) -> None:
        units = tuple(int(u) for u in self.units)
        durations = tuple(int(d) for d in self.durations) \
            if self.durations else (1,) * len(units)
        if len(units) != len(durations):
            raise LengthMismatchError(
                f"UnitSequence has {len(units)} units but {len(durations)} "
                f"durations."
            )
        if any(d < 1 for d in durations):
            raise ValueError("UnitSequence durations must all be >= 1.")
        if any(u < 0 for u in units):
            raise ValueError("Unit ids must be >= 0.")
        if self.dedup and has_repeats(units):
            raise ValueError(
                "A deduplicated UnitSequence cannot have consecutive "
                "repeated units."
            )
        object.__setattr__(self, 'units', units)
        object.__setattr__(self, 'durations', durations)

    def __len__(self) -> int:
        return len(self.units)

    @property
    def num_frames(self) -> int:
        """T, the total number of frames (sum of durations)."""
        return sum(self.durations)

    @classmethod
    def framewise(cls, units: Iterable[int],
                  frame_rate_hz: float = 50.0) -> 'UnitSequence':
        """Builds a non-deduplicated sequence with all durations 1."""
        unit_tuple = tuple(int(u) for u in units)
        return cls(unit_tuple, (1,) * len(unit_tuple), frame_rate_hz, False)


def has_repeats(units: Iterable[int]) -> bool:
    """True if any two consecutive units are equal."""
    seq = list(units)
    return any(a == b for a, b in zip(seq, seq[1:]))


def format_unit_line(utterance_id: str, seq: UnitSequence) -> str:
    """Formats one unit-file line (no newline)."""
    units = ' '.join(str(u) for u in seq.units)
    durations = ' '.join(str(d) for d in seq.durations)
    return f'{utterance_id}\t{units}\t{durations}'


def parse_unit_lines(lines: Iterable[str], frame_rate_hz: float = 50.0,
                     name: str = 'units', dedup: Optional[bool] = None
                     ) -> Iterator[Tuple[str, UnitSequence]]:
    """Parses unit-file lines, yielding (utterance id, UnitSequence).

    Args:
        lines: The file's lines.
        frame_rate_hz: (Optional.) The unit frame rate. Default is 50.
        name: (Optional.) The source name used in error messages.
        dedup: (Optional.) True for a deduplicated file, where repeats
            are an error; False for a framewise one. If None, a line
            is deduplicated when it has no consecutive repeats and some
            duration above 1.
    """
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip('\n')
        if not line.strip():
            continue
        parts = line.split('\t')
        if len(parts) != 3:
            raise ValueError(
                f"{name}, line {lineno}: expected 3 tab-separated fields, "
                f"got {len(parts)}."
            )
        try:
            units = tuple(int(u) for u in parts[1].split())
            durations = tuple(int(d) for d in parts[2].split())
        except ValueError as exc:
            raise ValueError(
                f"{name}, line {lineno}: units and durations must be "
                f"integers."
            ) from exc
        if len(units) != len(durations):
            raise LengthMismatchError(
                f"{name}, line {lineno}: {len(units)} units vs "
                f"{len(durations)} durations."
            )
        if dedup and has_repeats(units):
            raise ValueError(
                f"{name}, line {lineno}: consecutive repeated units in a "
                f"deduplicated unit file; run dedup first."
            )
        is_dedup = dedup if dedup is not None else \
            not has_repeats(units) and any(d > 1 for d in durations)
        yield parts[0], UnitSequence(units, durations, frame_rate_hz,
                                     is_dedup)


def read_units(path: PathLike, frame_rate_hz: float = 50.0,
               dedup: Optional[bool] = None) -> Dict[str, UnitSequence]:
    """Reads a unit file into an insertion-ordered dict by utterance id.

    See `parse_unit_lines` for `dedup`.
    """
    result: Dict[str, UnitSequence] = {}
    with Path(path).open('r', encoding='utf-8') as fh:
        for utt_id, seq in parse_unit_lines(fh, frame_rate_hz, str(path),
                                            dedup):
            if utt_id in result:
                raise ValueError(f"{path}: duplicate utterance id {utt_id!r}.")
            result[utt_id] = seq
    return result


def write_units(sequences: Mapping[str, UnitSequence],
                path: PathLike) -> None:
    """Writes sequences to a unit file, in mapping order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', encoding='utf-8', newline='\n') as fh:
        for utt_id, seq in sequences.items():
            fh.write(format_unit_line(utt_id, seq))
            fh.write('\n')


def expand(seq: UnitSequence) -> List[int]:
    """Expands a sequence to framewise unit ids."""
    frames: List[int] = []
    for unit, duration in zip(seq.units, seq.durations):
        frames.extend([unit] * duration)
    return frames
