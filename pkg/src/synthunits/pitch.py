"""Contains frame-level F0 extraction and log-F0 target construction.

The estimator is a normalized-autocorrelation peak picker over 40 ms
windows hopped at the feature frame rate. Unvoiced frames carry log-F0
0.0 (i.e. ln 1 Hz), which never occurs for a voiced frame in the
search band and is easy to mask.
"""
from dataclasses import dataclass
import logging
import math
import os
from typing import List, Tuple, Union

import numpy as np
from scipy import signal

from synthunits.errors import LengthMismatchError
from synthunits.formats.fmat import read_matrix, write_matrix
from synthunits.formats.units import expand, UnitSequence
from synthunits.formats.wav import Waveform
from synthunits.mathtools import clamp
from synthunits.typing import BoolArray, FloatArray


logger = logging.getLogger(__name__)

DEFAULT_F_MIN = 60.0
DEFAULT_F_MAX = 400.0
DEFAULT_VOICING_THRESHOLD = 0.3
WINDOW_SEC = 0.04
UNVOICED_LOG_F0 = 0.0
# A later peak must beat the first qualifying one by this factor to win.
SUBHARMONIC_RATIO = 0.95
PathLike = Union[str, 'os.PathLike[str]']


@dataclass(frozen=True)
class PitchTrack:
    """A per-frame log-F0 track with voicing decisions.

    Attributes:
        log_f0: Per-frame natural log of F0 in Hz; 0.0 when unvoiced.
        voiced: Per-frame booleans.
        frame_rate_hz: Frames per second.
    """

    log_f0: FloatArray
    voiced: BoolArray
    frame_rate_hz: float

    def __post_init__(self) -> None:
        log_f0 = np.asarray(self.log_f0, dtype=np.float64).reshape(-1)
        voiced = np.asarray(self.voiced, dtype=bool).reshape(-1)
        if log_f0.shape != voiced.shape:
            raise LengthMismatchError(
                f"log_f0 has {log_f0.size} frames but voiced has "
                f"{voiced.size}."
            )
        if np.any(log_f0[~voiced] != UNVOICED_LOG_F0):
            raise ValueError("Unvoiced frames must carry log_f0 = 0.0.")
        object.__setattr__(self, 'log_f0', log_f0)
        object.__setattr__(self, 'voiced', voiced)

    def __len__(self) -> int:
        return int(self.log_f0.shape[0])

    @property
    def f0_hz(self) -> FloatArray:
        """F0 in Hz per frame, 0.0 where unvoiced."""
        return np.where(self.voiced, np.exp(self.log_f0), 0.0)


def _normalized_acf(frame: FloatArray, lag_min: int,
                    lag_max: int) -> FloatArray:
    size = frame.shape[0]
    acf = signal.correlate(frame, frame, mode='full', method='fft')[size - 1:]
    energy = np.concatenate(([0.0], np.cumsum(frame * frame)))
    lags = np.arange(lag_min, lag_max + 1)
    head = energy[size - lags]
    tail = energy[size] - energy[lags]
    denom = np.sqrt(head * tail)
    with np.errstate(divide='ignore', invalid='ignore'):
        out = np.where(denom > 0, acf[lags] / denom, 0.0)
    return out


def _pick_peak(nacf: FloatArray, threshold: float) -> Tuple[int, float]:
    """Returns (index, value) of the chosen peak, or (-1, max)."""
    peak = float(np.max(nacf))
    if peak < threshold:
        return -1, peak
    # First local maximum within SUBHARMONIC_RATIO of the global peak;
    # later ones are period multiples.
    floor = peak * SUBHARMONIC_RATIO
    for i, value in enumerate(nacf):
        left = nacf[i - 1] if i > 0 else -np.inf
        right = nacf[i + 1] if i + 1 < len(nacf) else -np.inf
        if value >= floor and value >= left and value >= right:
            return i, float(value)
    return int(np.argmax(nacf)), peak


def _refine(nacf: FloatArray, index: int) -> float:
    # Parabolic interpolation through the peak and its neighbors.
    if index <= 0 or index + 1 >= len(nacf):
        return float(index)
    a, b, c = nacf[index - 1], nacf[index], nacf[index + 1]
    denom = a - 2 * b + c
    if denom >= 0:
        return float(index)
    return index + 0.5 * (a - c) / denom


def frame_starts(num_samples: int, sample_rate_hz: int,
                 frame_rate_hz: float) -> List[int]:
    """Start samples of each analysis window."""
    window = int(round(WINDOW_SEC * sample_rate_hz))
    hop = sample_rate_hz / frame_rate_hz
    count = 1 + int(math.floor((num_samples - window) / hop))
    return [int(round(i * hop)) for i in range(count)]


def extract_f0(waveform: Waveform,
               frame_rate_hz: float = 50.0,
               f_min: float = DEFAULT_F_MIN,
               f_max: float = DEFAULT_F_MAX,
               voicing_threshold: float = DEFAULT_VOICING_THRESHOLD
               ) -> PitchTrack:
    """Estimates a per-frame log-F0 track.

    Each 40 ms window (hopped at 1 / frame_rate_hz) is mean-removed
    and its normalized autocorrelation searched over lags for
    f_max..f_min. A frame is voiced iff the peak reaches
    `voicing_threshold`; its F0 comes from the parabolically refined
    peak lag, clamped to [f_min, f_max].

    Raises:
        ValueError: If the waveform is empty or shorter than one
            window, the sample rate is below 2 * f_max, or the band
            is invalid.
    """
    if len(waveform) == 0:
        raise ValueError("Cannot extract F0 from an empty waveform.")
    if not 0 < f_min < f_max:
        raise ValueError(f"Need 0 < f_min < f_max; got {f_min}, {f_max}.")
    rate = waveform.sample_rate_hz
    if rate < 2 * f_max:
        raise ValueError(
            f"Sample rate {rate} Hz is below 2 * f_max ({2 * f_max} Hz)."
        )
    window = int(round(WINDOW_SEC * rate))
    if len(waveform) < window:
        raise ValueError(
            f"Waveform has {len(waveform)} samples; one analysis window "
            f"needs {window}."
        )
    lag_min = max(1, int(math.floor(rate / f_max)))
    lag_max = min(window - 1, int(math.ceil(rate / f_min)))

    starts = frame_starts(len(waveform), rate, frame_rate_hz)
    log_f0 = np.zeros(len(starts), dtype=np.float64)
    voiced = np.zeros(len(starts), dtype=bool)
    for i, start in enumerate(starts):
        frame = waveform.samples[start:start + window]
        frame = frame - np.mean(frame)
        if not np.any(frame):
            continue
        nacf = _normalized_acf(frame, lag_min, lag_max)
        index, _ = _pick_peak(nacf, voicing_threshold)
        if index < 0:
            continue
        lag = lag_min + _refine(nacf, index)
        f0 = clamp(rate / lag, mn=f_min, mx=f_max)
        log_f0[i] = math.log(f0)
        voiced[i] = True
    logger.debug('F0: %d frames, %d voiced', len(starts), int(voiced.sum()))
    return PitchTrack(log_f0, voiced, frame_rate_hz)


def write_pitch(track: PitchTrack, path: PathLike) -> None:
    """Writes a pitch track as a two-row FMAT (log_f0, voiced 0/1).

    FMAT payloads are float32, so log_f0 reloads to about 1e-7
    relative precision.
    """
    rows = np.stack([track.log_f0, track.voiced.astype(np.float64)])
    write_matrix(path, rows, track.frame_rate_hz)


def read_pitch(path: PathLike) -> PitchTrack:
    """Reads a two-row FMAT pitch file; log_f0 has float32 precision."""
    matrix, rate, _ = read_matrix(path)
    if matrix.shape[0] != 2:
        raise ValueError(
            f"{path}: pitch files have exactly 2 rows, got {matrix.shape[0]}."
        )
    voiced = matrix[1] > 0.5
    log_f0 = np.where(voiced, matrix[0].astype(np.float64), UNVOICED_LOG_F0)
    return PitchTrack(log_f0, voiced, rate)


def expand_units_to_frames(seq: UnitSequence) -> List[int]:
    """Repeats each unit of a deduplicated sequence by its duration.

    Raises:
        ValueError: If the sequence isn't marked deduplicated.
    """
    if not seq.dedup:
        raise ValueError("expand_units_to_frames needs a deduplicated "
                         "UnitSequence.")
    return expand(seq)
