"""Contains corpus augmentation: duration stretching and additive noise.

Both augmentations are drawn per utterance from an `AugmentPolicy`.
Every draw is a pure function of (policy seed, utterance id), so a
corpus augments identically no matter the processing order or the
number of workers.
"""
from dataclasses import dataclass, replace
import logging
import math
import os
from pathlib import Path
from typing import (
    Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union
)

import numpy as np

from synthunits.errors import UndefinedMetricError
from synthunits.formats.units import UnitSequence
from synthunits.formats.wav import clip_samples, read_wav, Waveform, write_wav
from synthunits.kmeans import map_ordered
from synthunits.manifest import Manifest, UtteranceRecord
from synthunits.mathtools import (
    db_to_power_ratio, derive_seed, mean_power, power_db, round_half_up
)
from synthunits.typing import FloatArray


logger = logging.getLogger(__name__)

DEFAULT_STRETCH = (1.0, 1.5)
DEFAULT_SNR_DB = (0.0, 15.0)
AUGMENTED_TAG = 'augmented'
AUGMENTED_ID_SUFFIX = '-aug'
PathLike = Union[str, 'os.PathLike[str]']


@dataclass(frozen=True)
class AugmentPolicy:
    """Sampling ranges for per-utterance augmentation.

    Attributes:
        stretch_low: The lowest duration scalar; must be >= 1.0.
        stretch_high: The highest duration scalar.
        snr_low_db: The lowest SNR in dB.
        snr_high_db: The highest SNR in dB.
        seed: The policy seed. Required.
    """

    stretch_low: float = DEFAULT_STRETCH[0]
    stretch_high: float = DEFAULT_STRETCH[1]
    snr_low_db: float = DEFAULT_SNR_DB[0]
    snr_high_db: float = DEFAULT_SNR_DB[1]
    seed: int = 0

    def __post_init__(self) -> None:
        if not 1.0 <= self.stretch_low <= self.stretch_high:
            raise ValueError(
                f"Need 1.0 <= stretch_low <= stretch_high; got "
                f"{self.stretch_low}, {self.stretch_high}."
            )
        if not self.snr_low_db <= self.snr_high_db:
            raise ValueError(
                f"Need snr_low_db <= snr_high_db; got {self.snr_low_db}, "
                f"{self.snr_high_db}."
            )
        for value in (self.stretch_high, self.snr_low_db, self.snr_high_db):
            if not math.isfinite(value):
                raise ValueError(f"Policy ranges must be finite, got {value}.")


class PolicyDraw(NamedTuple):
    """One utterance's augmentation draw.

    Attributes:
        scalar: The duration stretch scalar.
        snr_db: The target SNR.
        noise_offset: A raw start offset; reduced modulo the noise
            length when mixing.
        noise_choice: A uniform value in [0, 1) selecting a noise clip.
    """

    scalar: float
    snr_db: float
    noise_offset: int
    noise_choice: float


@dataclass(frozen=True)
class Mixture:
    """The result of `mix_noise_at_snr`.

    Attributes:
        waveform: The mixed (and, by default, clipped) waveform.
        noise: The scaled noise component actually added.
        gain: The gain applied to the noise.
        clip_count: How many mixed samples exceeded magnitude 1.
        snr_db: The requested SNR.
    """

    waveform: Waveform
    noise: FloatArray
    gain: float
    clip_count: int
    snr_db: float


def stretch_durations(counts: Sequence[int], scalar: float) -> List[int]:
    """Scales repetition counts by `scalar`, rounding half up, floor 1.

    Raises:
        ValueError: If scalar < 1 or any count < 1.
    """
    if not scalar >= 1.0:
        raise ValueError(
            f"Stretch scalar must be >= 1 (no compression); got {scalar}."
        )
    for i, count in enumerate(counts):
        if count < 1:
            raise ValueError(
                f"Count at position {i} is {count}; counts must be >= 1."
            )
    return [max(1, round_half_up(count * scalar)) for count in counts]


def stretch_units(seq: UnitSequence, scalar: float) -> UnitSequence:
    """Stretches a unit sequence's durations; unit ids are unchanged."""
    return UnitSequence(seq.units,
                        tuple(stretch_durations(seq.durations, scalar)),
                        seq.frame_rate_hz, seq.dedup)


def fit_noise(noise: FloatArray, length: int, offset: int) -> FloatArray:
    """Crops or loops noise to `length` samples, starting near `offset`.

    Longer noise is cropped at `offset` modulo the number of valid
    starts; shorter noise is looped from `offset` modulo its length.
    """
    size = noise.shape[0]
    if size >= length:
        start = offset % (size - length + 1)
        return noise[start:start + length]
    idx = (offset % size + np.arange(length)) % size
    return noise[idx]


def mix_noise_at_snr(signal: Waveform,
                     noise: Waveform,
                     snr_db: float,
                     seed: int,
                     clip: bool = True,
                     offset: Optional[int] = None) -> Mixture:
    """Adds noise to a signal at the requested SNR.

    The noise is fitted to the signal length (see `fit_noise`) and
    scaled by g = sqrt(P_s / (P_n * 10^(snr_db / 10))), with powers
    measured over the whole utterance.

    Args:
        signal: The clean waveform.
        noise: The noise waveform, at the same sample rate.
        snr_db: The target SNR in dB.
        seed: Seeds the noise start offset when `offset` is None.
        clip: (Optional.) Hard-clip the mixture to [-1, 1]. Default
            True. The clip count is reported either way.
        offset: (Optional.) An explicit raw start offset.

    Raises:
        ValueError: If sample rates differ or either input is empty.
        UndefinedMetricError: If the signal or fitted noise is silent.
    """
    if signal.sample_rate_hz != noise.sample_rate_hz:
        raise ValueError(
            f"Sample rates differ: signal {signal.sample_rate_hz} Hz vs "
            f"noise {noise.sample_rate_hz} Hz."
        )
    if len(signal) == 0 or len(noise) == 0:
        raise ValueError("Cannot mix empty waveforms.")
    if not math.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite, got {snr_db}.")
    if offset is None:
        offset = int(np.random.default_rng(seed).integers(len(noise)))
    segment = fit_noise(noise.samples, len(signal), offset)
    p_signal = mean_power(signal.samples)
    p_noise = mean_power(segment)
    if p_signal <= 0:
        raise UndefinedMetricError("SNR is undefined for a silent signal.")
    if p_noise <= 0:
        raise UndefinedMetricError("SNR is undefined for silent noise.")
    gain = math.sqrt(p_signal / (p_noise * db_to_power_ratio(snr_db)))
    scaled = gain * segment
    mixed = signal.samples + scaled
    clipped, over = clip_samples(mixed)
    if over:
        logger.warning('%d of %d mixed samples exceed magnitude 1%s', over,
                       mixed.size, ' and were clipped' if clip else '')
    out = clipped if clip else mixed
    return Mixture(Waveform(out, signal.sample_rate_hz), scaled, gain, over,
                   snr_db)


def measured_snr_db(signal: Waveform, mixture: Mixture) -> float:
    """Returns 10 log10(P_signal / P_noise component) for a mixture."""
    return power_db(mean_power(signal.samples), mean_power(mixture.noise))


def sample_policy(policy: AugmentPolicy, utterance_id: str) -> PolicyDraw:
    """Draws one utterance's augmentation parameters.

    The draw depends only on (policy.seed, utterance_id).
    """
    rng = np.random.default_rng(derive_seed(policy.seed, 'augment',
                                            utterance_id))
    scalar = float(rng.uniform(policy.stretch_low, policy.stretch_high))
    snr_db = float(rng.uniform(policy.snr_low_db, policy.snr_high_db))
    offset = int(rng.integers(0, 2 ** 31))
    choice = float(rng.random())
    return PolicyDraw(scalar, snr_db, offset, choice)


def _is_file_stem(name: str) -> bool:
    # Ids become `<id>.wav` directly under the output directory.
    return name not in ('.', '..') and not {'/', '\\'} & set(name)


@dataclass(frozen=True)
class AugmentResult:
    """What `augment_corpus` produced.

    Attributes:
        manifest: The augmented records, rooted at the output dir.
        units: Stretched unit sequences by utterance id.
        draws: The policy draw used for each utterance.
        clip_count: Total clipped samples across the corpus.
    """

    manifest: Manifest
    units: Dict[str, UnitSequence]
    draws: Dict[str, PolicyDraw]
    clip_count: int


_Outcome = Tuple[UtteranceRecord, Optional[UnitSequence], PolicyDraw, int]


def augment_corpus(manifest: Manifest,
                   policy: AugmentPolicy,
                   noise: Optional[Manifest],
                   out_dir: PathLike,
                   units: Optional[Mapping[str, UnitSequence]] = None,
                   threads: int = 1) -> AugmentResult:
    """Augments every utterance in a manifest.

    Each utterance gets a `sample_policy` draw. With a noise manifest,
    its audio is mixed with the chosen noise clip at the drawn SNR and
    written to `out_dir/<id>.wav`; without one, audio paths are kept
    but made relative to `out_dir`.
    With `units`, each utterance's durations are stretched by the
    drawn scalar.

    Raises:
        ValueError: If `units` lacks an utterance, or the noise
            manifest is empty.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    noise_clips: List[Waveform] = []
    if noise is not None:
        if not len(noise):
            raise ValueError("The noise manifest has no records.")
        unsafe = [r.id for r in manifest if not _is_file_stem(r.id)]
        if unsafe:
            raise ValueError(f"Utterance id {unsafe[0]!r} cannot name an "
                             f"output file in {out_dir}.")
        noise_clips = [read_wav(noise.resolve(r)) for r in noise]
    if units is not None:
        missing = [r.id for r in manifest if r.id not in units]
        if missing:
            raise ValueError(f"No unit sequence for utterance "
                             f"{missing[0]!r}.")
    records = manifest.records

    def run(i: int) -> _Outcome:
        record = records[i]
        draw = sample_policy(policy, record.id)
        stretched = stretch_units(units[record.id], draw.scalar) \
            if units is not None else None
        if not noise_clips:
            path = os.path.relpath(manifest.resolve(record), out_dir)
            return replace(record, audio_path=Path(path).as_posix()), \
                stretched, draw, 0
        clip = noise_clips[int(draw.noise_choice * len(noise_clips))]
        mixed = mix_noise_at_snr(read_wav(manifest.resolve(record)), clip,
                                 draw.snr_db, policy.seed,
                                 offset=draw.noise_offset)
        name = f'{record.id}.wav'
        write_wav(mixed.waveform, out_dir / name)
        out = replace(record, audio_path=name,
                      tags=record.tags | {AUGMENTED_TAG})
        return out, stretched, draw, mixed.clip_count

    results = map_ordered(run, len(records), threads)
    out_records: List[UtteranceRecord] = [r[0] for r in results]
    result = AugmentResult(
        manifest=Manifest(tuple(out_records), manifest.frame_rate_hz,
                          out_dir),
        units={rec.id: r[1] for rec, r in zip(records, results)
               if r[1] is not None},
        draws={rec.id: r[2] for rec, r in zip(records, results)},
        clip_count=sum(r[3] for r in results),
    )
    logger.info('Augmented %d utterances (%d clipped samples).',
                len(records), result.clip_count)
    return result


def as_synthetic_copies(manifest: Manifest,
                        suffix: str = AUGMENTED_ID_SUFFIX) -> Manifest:
    """Returns an augmented manifest relabeled for corpus composition.

    Each id gets `suffix` appended and each kind becomes 'synthetic',
    so the augmented copies can be merged with the records they were
    made from.
    """
    if not suffix:
        raise ValueError("The id suffix must not be empty.")
    records = tuple(replace(r, id=f'{r.id}{suffix}', kind='synthetic')
                    for r in manifest)
    return replace(manifest, records=records)
