"""Contains the Waveform type and 16-bit PCM mono WAV reading/writing."""
from dataclasses import dataclass
import logging
import os
from typing import Tuple, Union

import numpy as np
import numpy.typing as npt
from scipy.io import wavfile

from synthunits.errors import NonFiniteError, UnsupportedFormatError
from synthunits.typing import FloatArray


logger = logging.getLogger(__name__)

CANONICAL_SAMPLE_RATE = 16000
PCM_SCALE = 32768.0
PathLike = Union[str, 'os.PathLike[str]']


@dataclass(frozen=True)
class Waveform:
    """A mono waveform.

    Attributes:
        samples: A 1-D float64 array. Values read from 16-bit PCM lie in
            [-1, 32767/32768]; in-memory values may exceed 1 until they
            are clipped on write.
        sample_rate_hz: The sample rate, canonically 16000.
    """

    samples: FloatArray
    sample_rate_hz: int = CANONICAL_SAMPLE_RATE

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise UnsupportedFormatError(
                f"Waveform samples must be 1-D (mono); got shape "
                f"{samples.shape}."
            )
        if not np.all(np.isfinite(samples)):
            raise NonFiniteError("Waveform samples must all be finite.")
        if self.sample_rate_hz <= 0:
            raise ValueError(
                f"sample_rate_hz must be positive, got {self.sample_rate_hz}."
            )
        object.__setattr__(self, 'samples', samples)

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration_sec(self) -> float:
        """The duration of the waveform in seconds."""
        return len(self) / self.sample_rate_hz


def clip_samples(samples: npt.ArrayLike) -> Tuple[FloatArray, int]:
    """Hard-clips samples to [-1, 1].

    Returns:
        A tuple: the clipped float64 array, and the number of samples
        whose magnitude exceeded 1.
    """
    arr = np.asarray(samples, dtype=np.float64)
    over = int(np.count_nonzero(np.abs(arr) > 1.0))
    return np.clip(arr, -1.0, 1.0), over


def read_wav(path: PathLike) -> Waveform:
    """Reads a 16-bit PCM mono WAV file.

    Samples are scaled by 1/32768, so reading is exact and writing
    the result back reproduces the original PCM values.

    Raises:
        UnsupportedFormatError: If the file isn't 16-bit PCM mono, or
            is a compressed or otherwise unreadable format.
    """
    try:
        rate, data = wavfile.read(os.fspath(path))
    except ValueError as exc:
        raise UnsupportedFormatError(
            f"{path}: unsupported or unreadable WAV data ({exc})."
        ) from exc
    if data.dtype != np.int16:
        raise UnsupportedFormatError(
            f"{path}: expected 16-bit PCM samples, got {data.dtype}."
        )
    if data.ndim != 1:
        raise UnsupportedFormatError(
            f"{path}: expected mono audio, got {data.shape[1]} channels."
        )
    return Waveform(data.astype(np.float64) / PCM_SCALE, int(rate))


def to_pcm16(samples: npt.ArrayLike) -> Tuple[npt.NDArray[np.int16], int]:
    """Converts float samples to int16 PCM, applying the clip policy.

    Returns:
        A tuple: the int16 array and the number of clipped samples.
    """
    clipped, over = clip_samples(samples)
    scaled = np.rint(clipped * PCM_SCALE)
    # +1.0 maps to 32768, one past the int16 range.
    pcm = np.clip(scaled, -32768, 32767).astype(np.int16)
    return pcm, over


def write_wav(waveform: Waveform, path: PathLike) -> int:
    """Writes a waveform as a 16-bit PCM mono WAV file.

    Samples are hard-clipped to [-1, 1] first.

    Returns:
        The number of samples that had to be clipped.
    """
    pcm, over = to_pcm16(waveform.samples)
    if over:
        logger.warning('Clipped %d of %d samples writing %s', over, len(pcm),
                       path)
    wavfile.write(os.fspath(path), waveform.sample_rate_hz, pcm)
    return over
