"""Contains training-target preparation for text-to-unit and predictor
models.

Text-to-unit targets append EOS to both sequences and group output
units in pairs (two units predicted per decoder step). The stop
target is explicit: an odd-length unit sequence ends with a (unit, EOS)
pair, and an even-length one gets a trailing (EOS, EOS) pair.

Predictor targets are the deduplicated units, their repetition counts,
and the framewise log-F0 track, cross-checked to cover the same frames.
"""
from dataclasses import dataclass
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from synthunits.errors import LengthMismatchError
from synthunits.formats.fmat import SessionEmbedding
from synthunits.formats.units import expand, has_repeats, UnitSequence
from synthunits.pitch import PitchTrack
from synthunits.typing import BoolArray


logger = logging.getLogger(__name__)

REDUCTION_FACTOR = 2
PathLike = Union[str, 'os.PathLike[str]']


@dataclass(frozen=True)
class T2uTarget:
    """A text-to-unit training pair.

    Attributes:
        utterance_id: The utterance id.
        input_phonemes: Phoneme ids ending with the phoneme EOS id.
        output_groups: Unit-id pairs; the last pair contains EOS.
        unit_eos: The unit EOS id (codebook size k).
        phoneme_eos: The phoneme EOS id (inventory size).
    """

    utterance_id: str
    input_phonemes: Tuple[int, ...]
    output_groups: Tuple[Tuple[int, int], ...]
    unit_eos: int
    phoneme_eos: int

    def to_dict(self) -> Dict[str, Any]:
        """Returns the id, phonemes, and groups as JSON-ready data."""
        return {
            'id': self.utterance_id,
            'phonemes': list(self.input_phonemes),
            'groups': [list(group) for group in self.output_groups],
        }


@dataclass(frozen=True)
class PredictorTargets:
    """Duration- and pitch-predictor targets for one utterance.

    Attributes:
        dedup_units: Deduplicated unit ids.
        repetition_counts: Frames per unit; sums to T.
        framewise_log_f0: Per-frame log-F0 (length T).
        voiced: Per-frame voicing mask (length T).
        session_embedding_ref: The utterance id whose session embedding
            conditions this utterance.
    """

    dedup_units: Tuple[int, ...]
    repetition_counts: Tuple[int, ...]
    framewise_log_f0: Tuple[float, ...]
    voiced: Tuple[bool, ...]
    session_embedding_ref: str

    @property
    def num_frames(self) -> int:
        """T, the number of frames."""
        return len(self.framewise_log_f0)


def group_units(units: Sequence[int], eos: int,
                factor: int = REDUCTION_FACTOR) -> Tuple[Tuple[int, ...], ...]:
    """Appends EOS and chunks units into groups of `factor`.

    The last group is padded with EOS, so the grouped length is
    ceil((len(units) + 1) / factor).
    """
    seq = list(units) + [eos]
    while len(seq) % factor:
        seq.append(eos)
    return tuple(tuple(seq[i:i + factor]) for i in range(0, len(seq), factor))


def ungroup_units(groups: Sequence[Sequence[int]], eos: int) -> List[int]:
    """Flattens groups and drops everything from the first EOS on."""
    flat = [unit for group in groups for unit in group]
    return flat[:flat.index(eos)] if eos in flat else flat


def prepare_t2u_target(phonemes: Sequence[int],
                       units: UnitSequence,
                       num_units: int,
                       num_phonemes: int,
                       utterance_id: str = '') -> T2uTarget:
    """Builds a text-to-unit target from phonemes and dedup units.

    Args:
        phonemes: Phoneme ids, each in [0, num_phonemes).
        units: A deduplicated UnitSequence (no consecutive repeats).
        num_units: The codebook size k; unit EOS is k.
        num_phonemes: The phoneme inventory size; phoneme EOS is it.
        utterance_id: (Optional.) The utterance id.

    Raises:
        ValueError: If either sequence is empty, units repeat, or ids
            are out of range.
    """
    if not units.units:
        raise ValueError(f"Utterance {utterance_id!r}: empty unit sequence.")
    if not phonemes:
        raise ValueError(f"Utterance {utterance_id!r}: empty phoneme "
                         f"sequence.")
    if has_repeats(units.units):
        raise ValueError(
            f"Utterance {utterance_id!r}: unit targets must be deduplicated; "
            f"got consecutive repeats in {list(units.units)}."
        )
    if max(units.units) >= num_units:
        raise ValueError(
            f"Utterance {utterance_id!r}: unit id {max(units.units)} is out "
            f"of range for k = {num_units}."
        )
    bad = [p for p in phonemes if not 0 <= p < num_phonemes]
    if bad:
        raise ValueError(
            f"Utterance {utterance_id!r}: phoneme id {bad[0]} is out of "
            f"range for an inventory of {num_phonemes}."
        )
    groups = group_units(units.units, num_units)
    return T2uTarget(utterance_id, tuple(phonemes) + (num_phonemes,),
                     tuple((g[0], g[1]) for g in groups), num_units,
                     num_phonemes)


def prepare_predictor_targets(units: UnitSequence,
                              pitch: PitchTrack,
                              embedding: SessionEmbedding) -> PredictorTargets:
    """Builds duration/pitch predictor targets for one utterance.

    Raises:
        ValueError: If units aren't deduplicated.
        LengthMismatchError: If sum(durations) != pitch length, naming
            both totals (e.g. "5 vs 4").
    """
    if not units.dedup:
        raise ValueError("Predictor targets need a deduplicated "
                         "UnitSequence.")
    if units.num_frames != len(pitch):
        raise LengthMismatchError(
            f"Utterance {embedding.utterance_id!r}: unit durations cover "
            f"{units.num_frames} vs {len(pitch)} pitch frames."
        )
    return PredictorTargets(
        dedup_units=units.units,
        repetition_counts=units.durations,
        framewise_log_f0=tuple(pitch.log_f0.tolist()),
        voiced=tuple(pitch.voiced.tolist()),
        session_embedding_ref=embedding.utterance_id,
    )


def restore_durations(dedup_units: Sequence[int],
                      predicted_counts: Sequence[int]) -> List[int]:
    """Repeats each unit by its predicted count, giving framewise ids.

    Raises:
        LengthMismatchError: If the lists differ in length.
        ValueError: If any count is < 1.
    """
    if len(dedup_units) != len(predicted_counts):
        raise LengthMismatchError(
            f"Got {len(dedup_units)} units but {len(predicted_counts)} "
            f"counts."
        )
    for i, count in enumerate(predicted_counts):
        if count < 1:
            raise ValueError(
                f"Repetition count at position {i} is {count}; counts must "
                f"be >= 1."
            )
    return expand(UnitSequence(tuple(dedup_units), tuple(predicted_counts)))


def load_phoneme_inventory(path: PathLike) -> Dict[str, int]:
    """Reads a phoneme inventory: one phoneme per line, id = line order."""
    inventory: Dict[str, int] = {}
    with Path(path).open('r', encoding='utf-8') as fh:
        for line in fh:
            phone = line.strip()
            if not phone:
                continue
            if phone in inventory:
                raise ValueError(f"{path}: duplicate phoneme {phone!r}.")
            inventory[phone] = len(inventory)
    return inventory


def phoneme_ids(text: str, inventory: Mapping[str, int],
                utterance_id: str = '') -> List[int]:
    """Maps a space-separated phoneme string to ids."""
    ids = []
    for phone in text.split():
        if phone not in inventory:
            raise ValueError(
                f"Utterance {utterance_id!r}: phoneme {phone!r} is not in "
                f"the inventory."
            )
        ids.append(inventory[phone])
    return ids


def target_record(utterance_id: str,
                  predictor: PredictorTargets,
                  t2u: Optional[T2uTarget],
                  pitch_path: str,
                  embedding_path: str) -> Dict[str, Any]:
    """Builds one line-delimited target record."""
    return {
        'id': utterance_id,
        'phonemes': list(t2u.input_phonemes) if t2u else None,
        'groups': [list(g) for g in t2u.output_groups] if t2u else None,
        'units': list(predictor.dedup_units),
        'counts': list(predictor.repetition_counts),
        'pitch_path': pitch_path,
        'embedding_path': embedding_path,
    }


def write_target_records(records: Sequence[Mapping[str, Any]],
                         path: PathLike) -> None:
    """Writes target records as JSON lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', encoding='utf-8', newline='\n') as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False))
            fh.write('\n')
    logger.info('Wrote %d target records to %s', len(records), path)


def voiced_mask(targets: PredictorTargets) -> BoolArray:
    """Returns the voicing mask as a boolean array, for MAE masking."""
    return np.asarray(targets.voiced, dtype=bool)
