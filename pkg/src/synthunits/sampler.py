"""Contains oversampled corpus composition for pre-training.

Natural utterances get weight r and synthetic ones weight 1, so each
natural utterance is drawn r times as often. Schedules are drawn with
replacement, one independent random stream per (seed, epoch).
"""
from dataclasses import dataclass, replace
import itertools
import logging
import math
import os
from pathlib import Path
import random
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Union

from synthunits.draw import Sampler
from synthunits.manifest import Manifest, UtteranceRecord
from synthunits.mathtools import derive_seed
from synthunits.mixins import ItemsMixin, RandomMixin


logger = logging.getLogger(__name__)

WEIGHT_MODES = ('count', 'duration')
PathLike = Union[str, 'os.PathLike[str]']


class EpochSampler(RandomMixin, ItemsMixin[str], Sampler[str]):
    """Draws utterance ids with replacement, by relative weight.

    Attributes:
        rng: Random Number Generator, inherited from superclass.
        items: (Read-only.) The utterance ids to choose from.
        weights: (Read-only.) A tuple of weights, one per item.
        cum_weights: (Read-only.) The cumulative weights.
        rng_seed: The seed, inherited from superclass.
        stream: The random stream key, e.g. an epoch index.
    """

    def __init__(self,
                 items: Sequence[str],
                 weights: Sequence[float],
                 rng_seed: int,
                 stream: Any = 0) -> None:
        """Inits an EpochSampler.

        Args:
            items: See `items` attribute.
            weights: See `weights` attribute. Must match `items` in
                length and have a positive finite total.
            rng_seed: See `rng_seed` attribute.
            stream: (Optional.) See `stream` attribute.
        """
        if not items:
            raise ValueError("Cannot sample from an empty pool.")
        if len(items) != len(weights):
            raise ValueError(
                f"Mismatched number of items ({len(items)}) to weights "
                f"({len(weights)}). These amounts must match."
            )
        if any(w < 0 for w in weights):
            raise ValueError("Sampling weights must be >= 0.")
        self._weights = tuple(float(w) for w in weights)
        self._cum_weights = tuple(itertools.accumulate(self._weights))
        if not 0 < self._cum_weights[-1] < math.inf:
            raise ValueError(
                f"Total sampling weight must be positive and finite; got "
                f"{self._cum_weights[-1]}."
            )
        super().__init__(items=items, rng_seed=rng_seed, stream=stream)

    @property
    def weights(self) -> Sequence[float]:
        """See the `weights` attribute."""
        return self._weights

    @property
    def cum_weights(self) -> Sequence[float]:
        """See the `cum_weights` attribute."""
        return self._cum_weights

    def draw(self) -> str:
        """Returns one weighted draw."""
        return self.rng.choices(self.items, cum_weights=self._cum_weights)[0]

    def draw_many(self, number: int) -> List[str]:
        """Returns `number` weighted draws, with replacement."""
        return self.rng.choices(self.items, cum_weights=self._cum_weights,
                                k=number)


@dataclass(frozen=True)
class MixSpec:
    """How to mix natural and synthetic corpora for pre-training.

    Attributes:
        natural: The natural-speech manifest.
        synthetic: The synthetic-speech manifest.
        oversampling_rate: r >= 1; math.inf means natural data only.
        epoch_size: Draws per epoch (>= 1).
        seed: The schedule seed.
        weight_by: 'count' (default) weights each utterance equally
            within its class; 'duration' scales each by its length.
    """

    natural: Manifest
    synthetic: Manifest
    oversampling_rate: float = 1.0
    epoch_size: int = 1
    seed: int = 0
    weight_by: str = 'count'

    def __post_init__(self) -> None:
        if not self.oversampling_rate >= 1.0:
            raise ValueError(
                f"oversampling_rate must be >= 1, got "
                f"{self.oversampling_rate}."
            )
        if self.epoch_size < 1:
            raise ValueError(f"epoch_size must be >= 1, got "
                             f"{self.epoch_size}.")
        if self.weight_by not in WEIGHT_MODES:
            raise ValueError(f"weight_by must be one of {WEIGHT_MODES}, got "
                             f"{self.weight_by!r}.")
        if not len(self.natural):
            raise ValueError("The natural manifest is empty.")
        if self.natural_only:
            return
        if not len(self.synthetic):
            raise ValueError("The synthetic manifest is empty.")

    @property
    def natural_only(self) -> bool:
        """True if r is infinite."""
        return math.isinf(self.oversampling_rate)

    def expected_natural_fraction(self) -> float:
        """r * N_nat / (r * N_nat + N_syn), for count weighting."""
        if self.natural_only:
            return 1.0
        nat = self.oversampling_rate * len(self.natural)
        return nat / (nat + len(self.synthetic))


def _rebase(manifest: Manifest, record: UtteranceRecord,
            root: Optional[Path]) -> UtteranceRecord:
    path = manifest.resolve(record)
    if root is not None:
        path = Path(os.path.relpath(path, root))
    return replace(record, audio_path=path.as_posix())


def compose_corpus(spec: MixSpec,
                   root: Optional[PathLike] = None) -> Manifest:
    """Merges the natural and synthetic manifests with sampling weights.

    Natural records get weight r and synthetic records weight 1. With
    r infinite, only natural records are kept, at weight 1. Audio paths
    are resolved against each source manifest and, if `root` is given,
    made relative to it.

    Raises:
        ValueError: On an id present in both manifests (naming it).
    """
    root_path = Path(root) if root is not None else None
    natural_ids = set(spec.natural.ids)
    for record in spec.synthetic:
        if record.id in natural_ids:
            raise ValueError(
                f"Utterance id {record.id!r} appears in both the natural "
                f"and synthetic manifests."
            )
    nat_weight = 1.0 if spec.natural_only else float(spec.oversampling_rate)
    records = [replace(_rebase(spec.natural, r, root_path), weight=nat_weight)
               for r in spec.natural]
    if not spec.natural_only:
        records.extend(replace(_rebase(spec.synthetic, r, root_path),
                               weight=1.0) for r in spec.synthetic)
    logger.info('Composed %d natural + %d synthetic records (r = %g).',
                len(spec.natural),
                0 if spec.natural_only else len(spec.synthetic),
                spec.oversampling_rate)
    return Manifest(tuple(records), spec.natural.frame_rate_hz, root_path)


def record_weights(manifest: Manifest, weight_by: str = 'count'
                   ) -> List[float]:
    """Per-record sampling weights for a composed manifest."""
    if weight_by not in WEIGHT_MODES:
        raise ValueError(f"weight_by must be one of {WEIGHT_MODES}, got "
                         f"{weight_by!r}.")
    if weight_by == 'duration':
        return [r.weight * r.duration_sec for r in manifest]
    return [r.weight for r in manifest]


def schedule_from_manifest(manifest: Manifest,
                           epoch_size: int,
                           seed: int,
                           epoch: int = 0,
                           weight_by: str = 'count') -> List[str]:
    """Draws one epoch's schedule from a composed manifest's weights.

    Raises:
        ValueError: If the manifest is empty or epoch_size < 1.
    """
    if epoch_size < 1:
        raise ValueError(f"epoch_size must be >= 1, got {epoch_size}.")
    sampler = EpochSampler(manifest.ids, record_weights(manifest, weight_by),
                           rng_seed=seed, stream=epoch)
    return sampler(epoch_size)


def epoch_schedule(spec: MixSpec, epoch: int = 0) -> List[str]:
    """Returns `spec.epoch_size` utterance ids drawn for one epoch.

    A pure function of (spec, epoch): epochs can be generated in any
    order, or in parallel.
    """
    return schedule_from_manifest(compose_corpus(spec), spec.epoch_size,
                                  spec.seed, epoch, spec.weight_by)


class SynthesisJob(NamedTuple):
    """One utterance to synthesize: a text rendered in one voice."""

    utterance_id: str
    text_id: str
    speaker_ref: str


def plan_synthesis(texts: Manifest,
                   speakers: Sequence[str],
                   per_utterance: int,
                   seed: int) -> List[SynthesisJob]:
    """Assigns each text `per_utterance` distinct speaker embeddings.

    Speakers for a text depend only on (seed, text id). Job ids are
    "<text id>-<speaker ref>".

    Raises:
        ValueError: If per_utterance is < 1 or exceeds the pool size.
    """
    pool = list(dict.fromkeys(speakers))
    if not 1 <= per_utterance <= len(pool):
        raise ValueError(
            f"Cannot pick {per_utterance} distinct speakers per utterance "
            f"from a pool of {len(pool)}."
        )
    jobs = []
    for record in texts:
        rng = random.Random(derive_seed(seed, 'synthesis', record.id))
        for speaker in rng.sample(pool, per_utterance):
            jobs.append(SynthesisJob(f'{record.id}-{speaker}', record.id,
                                     speaker))
    return jobs


def natural_fraction(schedule: Sequence[str], natural_ids: Sequence[str]
                     ) -> float:
    """The share of schedule entries that are natural utterances."""
    if not schedule:
        raise ValueError("Empty schedule.")
    natural = set(natural_ids)
    return sum(1 for uid in schedule if uid in natural) / len(schedule)


def schedule_counts(schedule: Sequence[str]) -> Dict[str, int]:
    """Counts draws per utterance id, in first-drawn order."""
    counts: Dict[str, int] = {}
    for uid in schedule:
        counts[uid] = counts.get(uid, 0) + 1
    return counts
