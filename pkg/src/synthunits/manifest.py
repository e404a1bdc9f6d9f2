"""Contains the corpus data model, manifest I/O, and split building.

A manifest is a UTF-8 text file with one JSON object per line, each
object holding exactly the fields of an `UtteranceRecord`. Audio paths
are stored relative to the manifest file's directory.
"""
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
import json
import logging
import math
import os
from pathlib import Path
import random
from typing import (
    Any, Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional,
    Sequence, Tuple, Union
)

from synthunits.errors import InfeasibleSplitError, ManifestError
from synthunits.mathtools import derive_seed


logger = logging.getLogger(__name__)

DEFAULT_FRAME_RATE = 50.0
SPLIT_TOLERANCE = 0.02
GENDERS = ('male', 'female', 'unknown')
KINDS = ('natural', 'synthetic')
REQUIRED_KEYS = ('id', 'audio_path', 'duration_sec', 'speaker_id', 'gender',
                 'kind')
OPTIONAL_KEYS = ('text', 'tags', 'weight')
PathLike = Union[str, 'os.PathLike[str]']


@dataclass(frozen=True)
class UtteranceRecord:
    """One utterance in a corpus manifest.

    Attributes:
        id: A string unique within its manifest.
        audio_path: The audio file path, relative to the manifest.
        duration_sec: The utterance duration in seconds, >= 0.
        speaker_id: The speaker's id string.
        gender: One of 'male', 'female', 'unknown'.
        kind: 'natural' for real recordings; 'synthetic' for generated
            speech.
        text: (Optional.) A transcription; for paired data this is the
            space-separated phoneme string. Default is None.
        tags: (Optional.) A frozenset of free-form tags, e.g. recording
            condition ('clean', 'other') or augmentation markers.
        weight: (Optional.) The relative sampling weight used when the
            manifest is a composed pre-training corpus. Default is 1.0.
    """

    id: str
    audio_path: str
    duration_sec: float
    speaker_id: str
    gender: str = 'unknown'
    kind: str = 'natural'
    text: Optional[str] = None
    tags: FrozenSet[str] = field(default_factory=frozenset)
    weight: float = 1.0

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise ManifestError(f"Record id must be a non-empty string, "
                                f"got {self.id!r}.")
        if not isinstance(self.duration_sec, (int, float)) \
                or isinstance(self.duration_sec, bool) \
                or not math.isfinite(self.duration_sec) \
                or self.duration_sec < 0:
            raise ManifestError(f"Record {self.id!r}: duration_sec must be a "
                                f"finite number >= 0, got "
                                f"{self.duration_sec!r}.")
        if self.gender not in GENDERS:
            raise ManifestError(f"Record {self.id!r}: gender must be one of "
                                f"{GENDERS}, got {self.gender!r}.")
        if self.kind not in KINDS:
            raise ManifestError(f"Record {self.id!r}: kind must be one of "
                                f"{KINDS}, got {self.kind!r}.")
        if not math.isfinite(self.weight) or self.weight < 0:
            raise ManifestError(f"Record {self.id!r}: weight must be a "
                                f"finite number >= 0, got {self.weight!r}.")
        if not isinstance(self.tags, frozenset):
            object.__setattr__(self, 'tags', frozenset(self.tags))

    def to_dict(self) -> Dict[str, Any]:
        """Returns the record as a flat, JSON-serializable dict."""
        return {
            'id': self.id,
            'audio_path': self.audio_path,
            'duration_sec': self.duration_sec,
            'speaker_id': self.speaker_id,
            'gender': self.gender,
            'kind': self.kind,
            'text': self.text,
            'tags': sorted(self.tags),
            'weight': self.weight,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'UtteranceRecord':
        """Builds a record from a flat dict, rejecting unknown keys.

        Raises:
            ManifestError: If keys are unknown or missing, or values
                are invalid.
        """
        unknown = sorted(set(data) - set(REQUIRED_KEYS) - set(OPTIONAL_KEYS))
        if unknown:
            raise ManifestError(f"Unknown record key(s): {unknown}.")
        missing = [key for key in REQUIRED_KEYS if key not in data]
        if missing:
            raise ManifestError(f"Missing record key(s): {missing}.")
        try:
            return cls(
                id=data['id'],
                audio_path=str(data['audio_path']),
                duration_sec=data['duration_sec'],
                speaker_id=str(data['speaker_id']),
                gender=data['gender'],
                kind=data['kind'],
                text=data.get('text'),
                tags=frozenset(data.get('tags') or ()),
                weight=float(data.get('weight', 1.0)),
            )
        except TypeError as exc:
            raise ManifestError(f"Invalid record value: {exc}") from exc


@dataclass(frozen=True)
class Manifest:
    """An ordered, immutable collection of utterance records.

    Attributes:
        records: A tuple of UtteranceRecord objects, in file order.
        frame_rate_hz: The feature frame rate for this corpus. This
            is carried as data rather than assumed; default 50.
        root: (Optional.) The directory relative audio paths resolve
            against. `load_manifest` sets it to the file's directory.
    """

    records: Tuple[UtteranceRecord, ...] = ()
    frame_rate_hz: float = DEFAULT_FRAME_RATE
    root: Optional[Path] = None

    def __post_init__(self) -> None:
        if not isinstance(self.records, tuple):
            object.__setattr__(self, 'records', tuple(self.records))
        seen = set()
        for record in self.records:
            if record.id in seen:
                raise ManifestError(f"Duplicate record id {record.id!r}.")
            seen.add(record.id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[UtteranceRecord]:
        return iter(self.records)

    @property
    def total_duration(self) -> float:
        """The summed duration of all records, in seconds."""
        return math.fsum(record.duration_sec for record in self.records)

    @property
    def ids(self) -> List[str]:
        """Record ids, in manifest order."""
        return [record.id for record in self.records]

    def by_id(self) -> Dict[str, UtteranceRecord]:
        """Returns a dict mapping record ids to records."""
        return {record.id: record for record in self.records}

    def resolve(self, record: UtteranceRecord) -> Path:
        """Returns the audio path of `record` resolved against `root`."""
        path = Path(record.audio_path)
        if self.root is None or path.is_absolute():
            return path
        return self.root / path

    def filter(self, kind: Optional[str] = None,
               tag: Optional[str] = None) -> 'Manifest':
        """Returns a manifest with records matching kind and/or tag."""
        records = tuple(
            r for r in self.records
            if (kind is None or r.kind == kind)
            and (tag is None or tag in r.tags)
        )
        return replace(self, records=records)

    def is_subset_of(self, other: 'Manifest') -> bool:
        """True if every record here also appears, unchanged, in other."""
        others = other.by_id()
        return all(others.get(r.id) == r for r in self.records)


@dataclass(frozen=True)
class ManifestStats:
    """Summary counts for a manifest.

    Attributes:
        total_hours: Summed duration in hours.
        num_utterances: Number of records.
        num_speakers: Number of distinct speaker ids.
        gender_counts: Speaker counts per gender (speakers, not
            utterances).
        kind_counts: Utterance counts per kind.
        kind_hours: Hours per kind.
    """

    total_hours: float
    num_utterances: int
    num_speakers: int
    gender_counts: Dict[str, int]
    kind_counts: Dict[str, int]
    kind_hours: Dict[str, float]

    def to_dict(self) -> Dict[str, Any]:
        """Returns the stats as a JSON-serializable dict."""
        return {
            'total_hours': self.total_hours,
            'num_utterances': self.num_utterances,
            'num_speakers': self.num_speakers,
            'gender_counts': dict(self.gender_counts),
            'kind_counts': dict(self.kind_counts),
            'kind_hours': dict(self.kind_hours),
        }


def iter_records(lines: Iterable[str]
                 ) -> Iterator[Tuple[int, UtteranceRecord]]:
    """Parses manifest lines, yielding (line number, record) pairs.

    Blank lines are skipped. Errors carry the 1-based line number.
    """
    seen: Dict[str, int] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"Malformed record: {exc.msg}.",
                                line=lineno) from exc
        if not isinstance(data, dict):
            raise ManifestError("Record must be a JSON object.", line=lineno)
        try:
            record = UtteranceRecord.from_dict(data)
        except ManifestError as exc:
            raise ManifestError(str(exc), line=lineno) from exc
        if record.id in seen:
            raise ManifestError(
                f"Duplicate id {record.id!r} (first seen on line "
                f"{seen[record.id]}).", line=lineno
            )
        seen[record.id] = lineno
        yield lineno, record


def load_manifest(path: PathLike,
                  frame_rate_hz: float = DEFAULT_FRAME_RATE) -> Manifest:
    """Loads and validates a line-delimited manifest file.

    Args:
        path: The manifest file path.
        frame_rate_hz: (Optional.) Feature frame rate for the corpus.

    Returns:
        A Manifest with records in file order, whose `root` is the
        manifest file's directory.

    Raises:
        ManifestError: For malformed lines, invalid values, unknown
            keys, or duplicate ids. The error names the line number.
    """
    path = Path(path)
    with path.open('r', encoding='utf-8') as fh:
        records = tuple(record for _, record in iter_records(fh))
    logger.debug('Loaded %d records from %s', len(records), path)
    return Manifest(records, frame_rate_hz, path.parent)


def dumps_record(record: UtteranceRecord) -> str:
    """Serializes one record as a single manifest line (no newline)."""
    return json.dumps(record.to_dict(), ensure_ascii=False,
                      separators=(', ', ': '))


def save_manifest(manifest: Manifest, path: PathLike) -> None:
    """Writes a manifest as UTF-8 line-delimited records.

    Output is byte-for-byte deterministic for a given manifest.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', encoding='utf-8', newline='\n') as fh:
        for record in manifest.records:
            fh.write(dumps_record(record))
            fh.write('\n')


def manifest_stats(manifest: Manifest) -> ManifestStats:
    """Summarizes a manifest.

    Returns:
        A ManifestStats. Hours are the summed durations / 3600; gender
        counts are per speaker (a speaker's gender is taken from its
        first record).
    """
    speaker_gender: Dict[str, str] = {}
    kind_counts: Counter[str] = Counter()
    kind_secs: Dict[str, List[float]] = defaultdict(list)
    for record in manifest.records:
        speaker_gender.setdefault(record.speaker_id, record.gender)
        kind_counts[record.kind] += 1
        kind_secs[record.kind].append(record.duration_sec)
    return ManifestStats(
        total_hours=manifest.total_duration / 3600.0,
        num_utterances=len(manifest.records),
        num_speakers=len(speaker_gender),
        gender_counts=dict(Counter(speaker_gender.values())),
        kind_counts=dict(kind_counts),
        kind_hours={k: math.fsum(v) / 3600.0 for k, v in kind_secs.items()},
    )


def _speakers_by_gender(records: Sequence[UtteranceRecord]
                        ) -> Dict[str, List[str]]:
    genders: Dict[str, str] = {}
    for record in records:
        genders.setdefault(record.speaker_id, record.gender)
    grouped: Dict[str, List[str]] = defaultdict(list)
    for speaker in sorted(genders):
        grouped[genders[speaker]].append(speaker)
    return grouped


def _is_balanced(speakers: Iterable[str], genders: Mapping[str, str]) -> bool:
    counts = Counter(genders[s] for s in speakers)
    return counts['unknown'] == 0 \
        and abs(counts['male'] - counts['female']) <= 1


def _pick_speakers(grouped: Mapping[str, List[str]],
                   budget: int,
                   gender_balance: bool,
                   rng: random.Random,
                   required: Sequence[str]) -> List[str]:
    pools = {g: [s for s in grouped.get(g, []) if s not in required]
             for g in GENDERS}
    for pool in pools.values():
        rng.shuffle(pool)
    chosen = list(required)
    if not gender_balance:
        rest = pools['male'] + pools['female'] + pools['unknown']
        rng.shuffle(rest)
        return chosen + rest[:max(0, budget - len(chosen))]

    counts = Counter({'male': 0, 'female': 0})
    lookup = {s: g for g, members in grouped.items() for s in members}
    for speaker in chosen:
        counts[lookup[speaker]] += 1
    # Alternate genders, always filling whichever is behind.
    while len(chosen) < budget:
        behind = 'male' if counts['male'] <= counts['female'] else 'female'
        ahead = 'female' if behind == 'male' else 'male'
        if pools[behind]:
            gender = behind
        elif pools[ahead] and counts[ahead] + 1 - counts[behind] <= 1:
            gender = ahead
        else:
            break
        chosen.append(pools[gender].pop())
        counts[gender] += 1
    return chosen


def _fill(queues: Mapping[str, List[UtteranceRecord]],
          picked: Dict[str, List[UtteranceRecord]],
          used: float, target_sec: float, ceiling: float) -> float:
    """Draws utterances round-robin across speakers until the target.

    Utterances that would push the total past `ceiling` are skipped.
    Returns the new total in seconds.
    """
    while used < target_sec and any(queues.values()):
        for speaker, queue in queues.items():
            if used >= target_sec:
                break
            while queue:
                record = queue.pop()
                if used + record.duration_sec <= ceiling:
                    picked[speaker].append(record)
                    used += record.duration_sec
                    break
    return used


def _contributors(speakers: Sequence[str],
                  picked: Mapping[str, List[UtteranceRecord]],
                  required: Sequence[str]) -> List[str]:
    return [s for s in speakers if picked[s] or s in required]


def _drop_surplus_speakers(speakers: Sequence[str],
                           picked: Dict[str, List[UtteranceRecord]],
                           genders: Mapping[str, str],
                           required: Sequence[str],
                           used: float) -> float:
    """Unselects late speakers of the surplus gender until balanced.

    Only speakers that actually contribute an utterance count toward
    the balance. Required speakers are never dropped. Returns the new
    total in seconds.
    """
    counts = Counter(genders[s] for s in
                     _contributors(speakers, picked, required))
    for speaker in reversed(speakers):
        if abs(counts['male'] - counts['female']) <= 1:
            break
        surplus = 'male' if counts['male'] > counts['female'] else 'female'
        if genders[speaker] != surplus or speaker in required \
                or not picked[speaker]:
            continue
        used -= math.fsum(r.duration_sec for r in picked[speaker])
        picked[speaker] = []
        counts[surplus] -= 1
    return used


def build_split(manifest: Manifest,
                target_hours: float,
                speaker_budget: int,
                gender_balance: bool = False,
                seed: int = 0,
                include: Optional[Manifest] = None) -> Manifest:
    """Selects a duration- and speaker-limited subset of a manifest.

    Speakers are picked first: the pool of each gender is shuffled with
    the seeded RNG, then speakers are taken alternating genders until
    the speaker budget is filled (or, with balance on, until one gender
    runs out). Utterances are then drawn round-robin across the chosen
    speakers, each speaker's utterances in seeded random order, until
    the hour target is met. Utterances that would overshoot the target
    by more than the 2% tolerance are skipped.

    If the whole eligible manifest already fits the target (within
    tolerance) and the speaker constraints, it is returned unchanged,
    which makes the split idempotent on its own output.

    Args:
        manifest: The source manifest.
        target_hours: The target split size in hours (> 0).
        speaker_budget: The maximum number of distinct speakers.
        gender_balance: (Optional.) If True, male and female speaker
            counts differ by at most one and speakers of unknown
            gender are excluded. Default is False.
        seed: (Optional.) The RNG seed. Default is 0.
        include: (Optional.) A manifest of records that must be part
            of the split (e.g., a paired subset that must be contained
            in the pre-training split). Their speakers count against
            the budget.

    Returns:
        A Manifest whose records are a subset of `manifest`'s, in the
        source order.

    Raises:
        InfeasibleSplitError: If the target or budget are not
            positive, the manifest has no eligible records, or the
            required records cannot satisfy the speaker constraints.
    """
    if not target_hours > 0:
        raise InfeasibleSplitError(
            f"target_hours must be > 0, got {target_hours}."
        )
    if speaker_budget < 1:
        raise InfeasibleSplitError(
            f"speaker_budget must be >= 1, got {speaker_budget}."
        )
    eligible = [r for r in manifest.records if r.duration_sec > 0]
    if gender_balance:
        eligible = [r for r in eligible if r.gender != 'unknown']
    if not eligible:
        raise InfeasibleSplitError(
            "No eligible records to build a split from."
        )

    target_sec = target_hours * 3600.0
    ceiling = target_sec * (1 + SPLIT_TOLERANCE)
    genders = {r.speaker_id: r.gender for r in eligible}
    grouped = _speakers_by_gender(eligible)
    eligible_ids = {r.id for r in eligible}

    required_records = list(include.records) if include else []
    for record in required_records:
        if record.id not in eligible_ids:
            raise InfeasibleSplitError(
                f"Included record {record.id!r} is not an eligible record of "
                f"the source manifest."
            )
    required_speakers = sorted({r.speaker_id for r in required_records})
    if len(required_speakers) > speaker_budget:
        raise InfeasibleSplitError(
            f"Included records span {len(required_speakers)} speakers, over "
            f"the budget of {speaker_budget}."
        )

    total = math.fsum(r.duration_sec for r in eligible)
    if total <= ceiling and len(genders) <= speaker_budget \
            and (not gender_balance or _is_balanced(genders, genders)):
        logger.info('Split target covers all %.2f h of eligible data.',
                    total / 3600)
        return replace(manifest, records=tuple(eligible))

    rng = random.Random(derive_seed(seed, 'split'))
    speakers = _pick_speakers(grouped, speaker_budget, gender_balance, rng,
                              required_speakers)
    if gender_balance and not _is_balanced(speakers, genders):
        raise InfeasibleSplitError(
            "Included records make a gender-balanced speaker set impossible."
        )

    by_speaker: Dict[str, List[UtteranceRecord]] = defaultdict(list)
    required_ids = {r.id for r in required_records}
    for record in eligible:
        if record.id not in required_ids:
            by_speaker[record.speaker_id].append(record)
    queues: Dict[str, List[UtteranceRecord]] = {}
    for speaker in speakers:
        utts = by_speaker.get(speaker, [])
        rng.shuffle(utts)
        queues[speaker] = utts

    picked: Dict[str, List[UtteranceRecord]] = {s: [] for s in speakers}
    used = _fill(queues, picked, math.fsum(r.duration_sec
                                           for r in required_records),
                 target_sec, ceiling)
    if gender_balance:
        used = _drop_surplus_speakers(speakers, picked, genders,
                                      required_speakers, used)
        contributing = _contributors(speakers, picked, required_speakers)
        used = _fill({s: queues[s] for s in contributing}, picked, used,
                     target_sec, ceiling)
        if not _is_balanced(_contributors(speakers, picked,
                                          required_speakers), genders):
            raise InfeasibleSplitError(
                "No gender-balanced set of speakers can contribute "
                "utterances within the hour target."
            )

    selected = set(required_ids)
    selected.update(r.id for utts in picked.values() for r in utts)
    records = tuple(r for r in manifest.records if r.id in selected)
    result = replace(manifest, records=records)
    stats = manifest_stats(result)
    logger.info('Built split: %.3f h, %d utterances, %d speakers %s',
                stats.total_hours, stats.num_utterances, stats.num_speakers,
                stats.gender_counts)
    return result
