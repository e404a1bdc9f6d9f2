"""Contains frame-indexed phone alignments and their text format.

Each line is "start end phone", with `start` and `end` inclusive frame
indices at the feature frame rate. Intervals must cover [0, T) with no
gaps or overlaps.
"""
from dataclasses import dataclass
import os
from pathlib import Path
from typing import Iterable, List, NamedTuple, Tuple, Union

from synthunits.errors import AlignmentError


PathLike = Union[str, 'os.PathLike[str]']


class Interval(NamedTuple):
    """One aligned phone: inclusive frame range plus label."""

    start_frame: int
    end_frame: int
    phone: str

    @property
    def num_frames(self) -> int:
        """The interval length in frames."""
        return self.end_frame - self.start_frame + 1


@dataclass(frozen=True)
class PhoneAlignment:
    """A sorted, contiguous, non-overlapping phone alignment.

    Attributes:
        intervals: A tuple of Interval objects covering frames 0..T-1.
    """

    intervals: Tuple[Interval, ...] = ()

    @property
    def num_frames(self) -> int:
        """T, the number of frames covered."""
        return self.intervals[-1].end_frame + 1 if self.intervals else 0

    @property
    def phones(self) -> List[str]:
        """The phone label of each interval, in order."""
        return [interval.phone for interval in self.intervals]

    def framewise(self) -> List[str]:
        """Expands the alignment to one phone label per frame."""
        labels: List[str] = []
        for interval in self.intervals:
            labels.extend([interval.phone] * interval.num_frames)
        return labels


def validate_intervals(intervals: Iterable[Interval],
                       num_frames: int) -> PhoneAlignment:
    """Checks that intervals cover exactly [0, num_frames).

    Raises:
        AlignmentError: Naming the frame index where a gap, overlap or
            bad extent is found.
    """
    checked = tuple(intervals)
    expected = 0
    for interval in checked:
        if interval.end_frame < interval.start_frame:
            raise AlignmentError(
                f"Interval {interval} ends before it starts (frame "
                f"{interval.start_frame}).", interval.start_frame
            )
        if interval.start_frame > expected:
            raise AlignmentError(
                f"Gap in alignment at frame {expected}.", expected
            )
        if interval.start_frame < expected:
            raise AlignmentError(
                f"Overlap in alignment at frame {interval.start_frame}.",
                interval.start_frame
            )
        expected = interval.end_frame + 1
    if expected < num_frames:
        raise AlignmentError(
            f"Alignment stops at frame {expected}; {num_frames} frames "
            f"expected.", expected
        )
    if expected > num_frames:
        raise AlignmentError(
            f"Alignment extends past the last frame ({num_frames - 1}) to "
            f"frame {expected - 1}.", num_frames
        )
    return PhoneAlignment(checked)


def parse_alignment(lines: Iterable[str], num_frames: int,
                    name: str = 'alignment') -> PhoneAlignment:
    """Parses "start end phone" lines and validates coverage."""
    intervals = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(
                f"{name}, line {lineno}: expected 'start end phone', got "
                f"{line.rstrip()!r}."
            )
        try:
            start, end = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise ValueError(
                f"{name}, line {lineno}: frame indices must be integers."
            ) from exc
        intervals.append(Interval(start, end, parts[2]))
    return validate_intervals(intervals, num_frames)


def read_alignment(path: PathLike, num_frames: int) -> PhoneAlignment:
    """Reads an alignment file, validating coverage of [0, num_frames)."""
    with Path(path).open('r', encoding='utf-8') as fh:
        return parse_alignment(fh, num_frames, str(path))


def write_alignment(alignment: PhoneAlignment, path: PathLike) -> None:
    """Writes an alignment in "start end phone" lines."""
    with Path(path).open('w', encoding='utf-8', newline='\n') as fh:
        for interval in alignment.intervals:
            fh.write(f'{interval.start_frame} {interval.end_frame} '
                     f'{interval.phone}\n')


def alignment_from_labels(labels: Iterable[str]) -> PhoneAlignment:
    """Builds an alignment from framewise phone labels."""
    intervals: List[Interval] = []
    for frame, label in enumerate(labels):
        if intervals and intervals[-1].phone == label:
            last = intervals[-1]
            intervals[-1] = Interval(last.start_frame, frame, label)
        else:
            intervals.append(Interval(frame, frame, label))
    return PhoneAlignment(tuple(intervals))
