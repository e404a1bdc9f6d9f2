"""Contains unit-quality metrics: phone purity, cluster purity, and MAE.

Purities are computed from a unit x phone contingency table of frame
counts. Tables from separate utterances merge by elementwise addition,
so per-utterance accumulation can happen in any order.
"""
from collections import Counter
from dataclasses import dataclass, field
import math
from typing import (
    Any, Container, Dict, Hashable, Iterable, Mapping, Optional, Sequence,
    Tuple
)

import numpy as np
import numpy.typing as npt

from synthunits.errors import LengthMismatchError, UndefinedMetricError
from synthunits.formats.alignment import PhoneAlignment
from synthunits.typing import IntArray


def _label_key(label: Hashable) -> Tuple[bool, str, Any]:
    # Ints sort numerically ahead of strings; each kind sorts naturally.
    if isinstance(label, (int, np.integer)):
        return (False, '', int(label))
    return (True, str(label), 0)


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    """Joint frame counts of units (rows) and phones (columns).

    Attributes:
        counts: A sparse mapping of (unit, phone) to a frame count.
            Zero counts are never stored.
    """

    counts: Mapping[Tuple[Hashable, Hashable], int] = field(
        default_factory=dict
    )

    def __post_init__(self) -> None:
        cleaned = {}
        for key, value in self.counts.items():
            if value < 0:
                raise ValueError(f"Negative count {value} for {key}.")
            if value:
                cleaned[key] = int(value)
        object.__setattr__(self, 'counts', cleaned)

    @classmethod
    def from_matrix(cls, matrix: npt.ArrayLike) -> 'ContingencyTable':
        """Builds a table from a k x P count matrix (ids are indices)."""
        arr = np.asarray(matrix)
        return cls({(int(u), int(p)): int(arr[u, p])
                    for u, p in zip(*np.nonzero(arr))})

    @property
    def total(self) -> int:
        """The sum of all counts."""
        return sum(self.counts.values())

    @property
    def units(self) -> Tuple[Hashable, ...]:
        """Distinct unit ids with nonzero counts, sorted."""
        return tuple(sorted({u for u, _ in self.counts}, key=_label_key))

    @property
    def phones(self) -> Tuple[Hashable, ...]:
        """Distinct phones with nonzero counts, sorted."""
        return tuple(sorted({p for _, p in self.counts}, key=_label_key))

    @property
    def k_effective(self) -> int:
        """The number of units that occur at least once."""
        return len({u for u, _ in self.counts})

    def matrix(self) -> IntArray:
        """Returns the dense k x P count matrix (rows: `units`)."""
        units = {u: i for i, u in enumerate(self.units)}
        phones = {p: j for j, p in enumerate(self.phones)}
        out = np.zeros((len(units), len(phones)), dtype=np.int64)
        for (unit, phone), count in self.counts.items():
            out[units[unit], phones[phone]] = count
        return out

    def transpose(self) -> 'ContingencyTable':
        """Swaps the roles of units and phones."""
        return ContingencyTable(
            {(p, u): c for (u, p), c in self.counts.items()}
        )

    def __add__(self, other: 'ContingencyTable') -> 'ContingencyTable':
        merged: Counter[Tuple[Hashable, Hashable]] = Counter(self.counts)
        merged.update(other.counts)
        return ContingencyTable(dict(merged))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ContingencyTable):
            return NotImplemented
        return dict(self.counts) == dict(other.counts)

    def __hash__(self) -> int:
        return hash(frozenset(self.counts.items()))


def accumulate_counts(units: Sequence[int],
                      alignment: PhoneAlignment,
                      masked_phones: Container[str] = ()) -> ContingencyTable:
    """Counts co-occurring (unit, phone) frames for one utterance.

    Args:
        units: Framewise unit ids.
        alignment: A PhoneAlignment covering exactly len(units) frames.
        masked_phones: (Optional.) Phones to leave out, e.g. silence.
            Nothing is masked by default.

    Raises:
        LengthMismatchError: If the lengths differ (names both).
    """
    phones = alignment.framewise()
    if len(units) != len(phones):
        raise LengthMismatchError(
            f"Unit sequence has {len(units)} frames but the alignment "
            f"covers {len(phones)}."
        )
    counts: Counter[Tuple[Hashable, Hashable]] = Counter(
        (int(u), p) for u, p in zip(units, phones) if p not in masked_phones
    )
    return ContingencyTable(dict(counts))


def merge_tables(tables: Iterable[ContingencyTable]) -> ContingencyTable:
    """Sums any number of tables."""
    merged: Counter[Tuple[Hashable, Hashable]] = Counter()
    for table in tables:
        merged.update(table.counts)
    return ContingencyTable(dict(merged))


def _majority_sum(counts: Mapping[Tuple[Hashable, Hashable], int],
                  axis: int) -> int:
    best: Dict[Hashable, int] = {}
    for key, count in counts.items():
        group = key[axis]
        if count > best.get(group, 0):
            best[group] = count
    return sum(best.values())


def phone_purity(table: ContingencyTable) -> float:
    """Frame-weighted share of frames whose phone is its unit's majority.

    Raises:
        UndefinedMetricError: If the table is empty.
    """
    total = table.total
    if total == 0:
        raise UndefinedMetricError(
            "Phone purity is undefined for 0 frames."
        )
    return _majority_sum(table.counts, 0) / total


def cluster_purity(table: ContingencyTable) -> float:
    """Frame-weighted share of frames whose unit is its phone's majority.

    Raises:
        UndefinedMetricError: If the table is empty.
    """
    total = table.total
    if total == 0:
        raise UndefinedMetricError(
            "Cluster purity is undefined for 0 frames."
        )
    return _majority_sum(table.counts, 1) / total


def purity_report(table: ContingencyTable) -> Dict[str, Any]:
    """Returns phone/cluster purity, k_effective, and total frames."""
    return {
        'phone_purity': phone_purity(table),
        'cluster_purity': cluster_purity(table),
        'k_effective': table.k_effective,
        'total_frames': table.total,
    }


def mean_absolute_error(pred: npt.ArrayLike, target: npt.ArrayLike,
                        mask: Optional[npt.ArrayLike] = None) -> float:
    """Returns mean |pred - target| over positions where mask is True.

    Raises:
        LengthMismatchError: If the sequences' lengths differ.
        UndefinedMetricError: If no position is selected.
    """
    pred_arr = np.asarray(pred, dtype=np.float64).reshape(-1)
    target_arr = np.asarray(target, dtype=np.float64).reshape(-1)
    if pred_arr.shape != target_arr.shape:
        raise LengthMismatchError(
            f"pred has {pred_arr.size} values but target has "
            f"{target_arr.size}."
        )
    if mask is None:
        selected = np.ones(pred_arr.shape, dtype=bool)
    else:
        selected = np.asarray(mask, dtype=bool).reshape(-1)
        if selected.shape != pred_arr.shape:
            raise LengthMismatchError(
                f"mask has {selected.size} values but pred has "
                f"{pred_arr.size}."
            )
    if not np.any(selected):
        raise UndefinedMetricError("MAE is undefined with no unmasked "
                                   "positions.")
    errors = np.abs(pred_arr[selected] - target_arr[selected])
    return math.fsum(errors.tolist()) / int(errors.size)
