"""Contains duration-penalized DP segmentation, deduplication, and
unit-to-phoneme length ratios.

`dpdp_segment` smooths a frame sequence against a fixed codebook: it
finds the segmentation and per-segment unit labels minimizing

    sum over segments of [ sum_{t in seg} |x_t - c_u(seg)|^2 + penalty ]

via the recurrence

    D[t] = min over a in (t - max_len, t] of
           D[a - 1] + min_u cost(a, t, u) + penalty(t - a + 1)

in O(T * max_len * k). The default penalty is a per-segment constant
lambda; any `DurationPenalty` callable can be plugged in.
"""
from dataclasses import dataclass, field
import logging
import math
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from synthunits.errors import LengthMismatchError
from synthunits.formats.fmat import FeatureMatrix
from synthunits.formats.units import expand, UnitSequence
from synthunits.kmeans import (
    check_dims, Codebook, kmeans_assign, squared_distances
)
from synthunits.mathtools import poisson
from synthunits.typing import DurationPenalty, FloatArray


logger = logging.getLogger(__name__)

DEFAULT_LAMBDA = 1.0
DEFAULT_MAX_SEGMENT_FRAMES = 50


class ConstantPenalty:
    """Adds the same penalty to every segment, whatever its length."""

    def __init__(self, lam: float) -> None:
        if not lam >= 0:
            raise ValueError(f"The duration penalty must be >= 0, got {lam}.")
        self.lam = lam

    def __call__(self, length: int) -> float:
        return self.lam

    def __repr__(self) -> str:
        return f'ConstantPenalty({self.lam!r})'


class PoissonPenalty:
    """Penalizes segments by -lam * log Poisson(length; mu).

    An alternative to the constant penalty that prefers segments near
    `mu` frames long and penalizes very short ones most.
    """

    def __init__(self, lam: float, mu: float = 5.0) -> None:
        if not lam >= 0:
            raise ValueError(f"The duration penalty must be >= 0, got {lam}.")
        if not mu > 0:
            raise ValueError(f"mu must be > 0, got {mu}.")
        self.lam = lam
        self.mu = mu

    def __call__(self, length: int) -> float:
        prob = poisson(length, self.mu)
        if prob <= 0:
            return math.inf
        return -self.lam * math.log(prob)

    def __repr__(self) -> str:
        return f'PoissonPenalty({self.lam!r}, mu={self.mu!r})'


@dataclass(frozen=True)
class DpdpParams:
    """Parameters for `dpdp_segment`.

    Attributes:
        lam: The duration penalty lambda (>= 0). Default is 1.0.
        max_segment_frames: The longest allowed segment (>= 1).
            Default is 50, about one second at 50 Hz.
        penalty: (Optional.) A DurationPenalty callable. If None, a
            ConstantPenalty(lam) is used.
    """

    lam: float = DEFAULT_LAMBDA
    max_segment_frames: int = DEFAULT_MAX_SEGMENT_FRAMES
    penalty: Optional[DurationPenalty] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.lam >= 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}.")
        if self.max_segment_frames < 1:
            raise ValueError(
                f"max_segment_frames must be >= 1, got "
                f"{self.max_segment_frames}."
            )

    @property
    def penalty_function(self) -> DurationPenalty:
        """The penalty callable in effect."""
        return self.penalty if self.penalty is not None \
            else ConstantPenalty(self.lam)


class Segmentation(NamedTuple):
    """The optimum found by `dpdp_search`.

    Attributes:
        boundaries: Segment start frames, ascending, starting at 0.
        labels: The unit id of each segment.
        lengths: The length in frames of each segment.
        cost: The total distortion plus penalty.
    """

    boundaries: Tuple[int, ...]
    labels: Tuple[int, ...]
    lengths: Tuple[int, ...]
    cost: float


def dpdp_search(distances: FloatArray, params: DpdpParams) -> Segmentation:
    """Runs the DP over a precomputed T x k squared-distance matrix.

    Ties prefer the later segment start, then the lower unit id.
    """
    num_frames, _ = distances.shape
    if num_frames == 0:
        raise ValueError("Cannot segment an empty frame sequence (T = 0).")
    max_len = params.max_segment_frames
    penalty = params.penalty_function
    penalties = np.array([penalty(n) for n in range(1, max_len + 1)],
                         dtype=np.float64)
    best = np.full(num_frames + 1, np.inf)
    best[0] = 0.0
    back_start = np.zeros(num_frames + 1, dtype=np.int64)
    back_label = np.zeros(num_frames + 1, dtype=np.int64)
    for end in range(1, num_frames + 1):
        lo = max(0, end - max_len)
        # Row j holds costs of the segment (end-1-j)..end-1, built by
        # adding one frame at a time walking backwards from `end`.
        seg = np.cumsum(distances[lo:end][::-1], axis=0)
        labels = np.argmin(seg, axis=1)
        seg_best = seg[np.arange(seg.shape[0]), labels]
        lengths = np.arange(1, seg.shape[0] + 1)
        starts = end - lengths
        totals = best[starts] + seg_best + penalties[lengths - 1]
        # lengths ascend, so the first minimum is the latest start.
        pick = int(np.argmin(totals))
        best[end] = totals[pick]
        back_start[end] = starts[pick]
        back_label[end] = labels[pick]

    boundaries: List[int] = []
    seg_labels: List[int] = []
    end = num_frames
    while end > 0:
        start = int(back_start[end])
        boundaries.append(start)
        seg_labels.append(int(back_label[end]))
        end = start
    boundaries.reverse()
    seg_labels.reverse()
    ends = boundaries[1:] + [num_frames]
    lengths_out = tuple(e - s for s, e in zip(boundaries, ends))
    return Segmentation(tuple(boundaries), tuple(seg_labels), lengths_out,
                        float(best[num_frames]))


def dpdp_segment(features: FeatureMatrix, codebook: Codebook,
                 params: DpdpParams = DpdpParams()) -> UnitSequence:
    """Segments features into unit-labeled runs of minimal penalized cost.

    Returns:
        A framewise UnitSequence (dedup False, every duration 1) in
        which each segment's unit is repeated once per frame.

    Raises:
        DimensionMismatchError: If feature and codebook dims differ.
    """
    check_dims(features.dim, codebook)
    distances = squared_distances(features.frames.astype(np.float64),
                                  codebook.centroids.astype(np.float64))
    found = dpdp_search(distances, params)
    frames: List[int] = []
    for label, length in zip(found.labels, found.lengths):
        frames.extend([label] * length)
    logger.debug('DPDP: %d frames -> %d segments, cost %.6g', len(frames),
                 len(found.labels), found.cost)
    return UnitSequence.framewise(frames, features.frame_rate_hz)


def dpdp_cost(features: FeatureMatrix, codebook: Codebook,
              params: DpdpParams = DpdpParams()) -> float:
    """Returns the optimal total cost `dpdp_segment` achieves."""
    check_dims(features.dim, codebook)
    distances = squared_distances(features.frames.astype(np.float64),
                                  codebook.centroids.astype(np.float64))
    return dpdp_search(distances, params).cost


def dedup_runs(seq: UnitSequence) -> UnitSequence:
    """Merges consecutive equal units, summing their durations."""
    units: List[int] = []
    durations: List[int] = []
    for unit, duration in zip(seq.units, seq.durations):
        if units and units[-1] == unit:
            durations[-1] += duration
        else:
            units.append(unit)
            durations.append(duration)
    return UnitSequence(tuple(units), tuple(durations), seq.frame_rate_hz,
                        True)


def expand_to_frames(seq: UnitSequence) -> UnitSequence:
    """Returns the framewise (all durations 1) form of a sequence."""
    return UnitSequence.framewise(expand(seq), seq.frame_rate_hz)


def length_ratio(unit_lengths: Sequence[int],
                 phoneme_lengths: Sequence[int],
                 utterance_ids: Optional[Sequence[str]] = None) -> float:
    """Returns the mean over utterances of unit length / phoneme length.

    Args:
        unit_lengths: Per-utterance unit counts.
        phoneme_lengths: Per-utterance phoneme counts, all > 0.
        utterance_ids: (Optional.) Names used in error messages;
            defaults to positional indices.

    Raises:
        LengthMismatchError: If the lists differ in length.
        ValueError: If a phoneme length is 0 (naming the utterance),
            or there are no utterances.
    """
    if len(unit_lengths) != len(phoneme_lengths):
        raise LengthMismatchError(
            f"Got {len(unit_lengths)} unit lengths but "
            f"{len(phoneme_lengths)} phoneme lengths."
        )
    if not unit_lengths:
        raise ValueError("No utterances to compute a length ratio over.")
    names = list(utterance_ids) if utterance_ids is not None \
        else [str(i) for i in range(len(unit_lengths))]
    ratios = []
    for name, units, phonemes in zip(names, unit_lengths, phoneme_lengths):
        if phonemes <= 0:
            raise ValueError(
                f"Utterance {name!r} has phoneme length {phonemes}; it must "
                f"be > 0."
            )
        ratios.append(units / phonemes)
    return math.fsum(ratios) / len(ratios)


class LengthRatios(NamedTuple):
    """Mean unit/phoneme length ratios for three post-processing levels."""

    raw: float
    dedup: float
    dpdp_dedup: float


def compare_length_ratios(features: Iterable[FeatureMatrix],
                          phoneme_lengths: Sequence[int],
                          codebook: Codebook,
                          params: DpdpParams = DpdpParams()
                          ) -> LengthRatios:
    """Computes raw / dedup-only / DPDP+dedup ratios over a corpus."""
    raw, dedup, smoothed = [], [], []
    for matrix in features:
        framewise = UnitSequence.framewise(
            kmeans_assign(matrix, codebook).tolist(), matrix.frame_rate_hz
        )
        raw.append(len(framewise))
        dedup.append(len(dedup_runs(framewise)))
        smoothed.append(len(dedup_runs(dpdp_segment(matrix, codebook,
                                                    params))))
    return LengthRatios(length_ratio(raw, phoneme_lengths),
                        length_ratio(dedup, phoneme_lengths),
                        length_ratio(smoothed, phoneme_lengths))
