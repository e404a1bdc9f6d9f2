"""Contains codebook learning (k-means) and frame-to-unit assignment.

Fitting runs Lloyd iterations from a k-means++ initialization. The
++ sampler draws from per-point random keys derived from a hash of the
seed and each point's values rather than from point indices, so the
initialization (and hence the fit) doesn't depend on frame order.

Distances are squared Euclidean, computed in float64 from explicit
differences. Reductions are done in fixed-size frame chunks summed in
chunk order, so results are identical for any worker count.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import math
import os
from pathlib import Path
import struct
from typing import (
    Callable, Iterable, List, Optional, Sequence, Tuple, TypeVar, Union
)

import numpy as np
import numpy.typing as npt

from synthunits.errors import (
    DimensionMismatchError, MagicMismatchError, TruncatedPayloadError
)
from synthunits.formats.fmat import check_finite, FeatureMatrix, PAYLOAD_DTYPE
from synthunits.mathtools import derive_seed
from synthunits.typing import Float32Array, FloatArray, IntArray


logger = logging.getLogger(__name__)

DEFAULT_K = 500
DEFAULT_MAX_ITERS = 100
DEFAULT_TOL = 1e-4
KMCB_MAGIC = b'KMCB'
KMCB_VERSION = 1
KMCB_HEADER = struct.Struct('<4sIIIQ')
# Max float64 elements in one frames x centroids x dims difference block.
ASSIGN_BLOCK_ELEMENTS = 1 << 22
REDUCE_CHUNK_FRAMES = 4096

PathLike = Union[str, 'os.PathLike[str]']
FeatureData = Union[FeatureMatrix, npt.ArrayLike, Iterable[FeatureMatrix]]
R = TypeVar('R')

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@dataclass(frozen=True)
class TrainingMeta:
    """How a codebook was trained.

    Attributes:
        iterations: The number of Lloyd iterations run.
        inertia: The final sum of squared distances.
        seed: The seed used for initialization.
        inertia_history: Inertia before the first update and after
            each iteration; non-increasing.
    """

    iterations: int = 0
    inertia: Optional[float] = None
    seed: int = 0
    inertia_history: Tuple[float, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class Codebook:
    """A set of k centroids of dimension D.

    Attributes:
        centroids: A k x D float32 array.
        training_meta: A TrainingMeta.
    """

    centroids: Float32Array
    training_meta: TrainingMeta = TrainingMeta()

    def __post_init__(self) -> None:
        centroids = np.asarray(self.centroids, dtype=np.float32)
        if centroids.ndim != 2 or centroids.shape[0] < 1 \
                or centroids.shape[1] < 1:
            raise ValueError(
                f"A codebook needs at least one centroid of dimension >= 1; "
                f"got shape {centroids.shape}."
            )
        check_finite(centroids, 'Codebook')
        object.__setattr__(self, 'centroids', centroids)

    @property
    def k(self) -> int:
        """The number of centroids."""
        return int(self.centroids.shape[0])

    @property
    def dim(self) -> int:
        """D, the centroid dimension."""
        return int(self.centroids.shape[1])

    @property
    def eos_id(self) -> int:
        """The reserved end-of-sequence unit id, one past the last unit."""
        return self.k


def _mix64(z: npt.NDArray[np.uint64]) -> npt.NDArray[np.uint64]:
    # SplitMix64 finalizer; uint64 array arithmetic wraps modulo 2**64.
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def value_hashes(frames: npt.ArrayLike, seed: int) -> npt.NDArray[np.uint64]:
    """Hashes each row's float32 bit pattern together with a seed.

    Equal rows always get equal hashes, wherever they appear.
    """
    bits = np.ascontiguousarray(frames, dtype=np.float32).view(np.uint32)
    state = np.full(bits.shape[0], np.uint64(derive_seed(seed, 'rows')),
                    dtype=np.uint64)
    with np.errstate(over='ignore'):
        for col in range(bits.shape[1]):
            state = _mix64(state ^ bits[:, col].astype(np.uint64))
    return state


def hash_uniforms(hashes: npt.NDArray[np.uint64],
                  salt: int) -> FloatArray:
    """Maps row hashes plus a salt to uniforms in the open (0, 1)."""
    with np.errstate(over='ignore'):
        mixed = _mix64(hashes ^ np.uint64(derive_seed(salt, 'salt')))
    return ((mixed >> np.uint64(11)).astype(np.float64) + 0.5) / 2.0 ** 53


def pool_frames(data: FeatureData) -> FloatArray:
    """Stacks feature data into one float64 frames x D array.

    Accepts a FeatureMatrix, an iterable of them, or a 2-D array.

    Raises:
        DimensionMismatchError: If matrices have different dims.
        NonFiniteError: If any entry is NaN or infinite.
    """
    if isinstance(data, FeatureMatrix):
        blocks: List[npt.NDArray[np.floating]] = [data.frames]
    elif isinstance(data, np.ndarray):
        blocks = [data]
    else:
        items = list(data)  # type: ignore[arg-type]
        if not items:
            return np.zeros((0, 0))
        if all(isinstance(m, FeatureMatrix) for m in items):
            blocks = [m.frames for m in items]
        else:
            blocks = [np.asarray(items, dtype=np.float64)]
    dims = {b.shape[1] if b.ndim == 2 else -1 for b in blocks}
    if len(dims) != 1 or -1 in dims:
        raise DimensionMismatchError(
            f"Feature matrices must all be 2-D with one dimension; got "
            f"dims {sorted(dims)}."
        )
    pooled = np.concatenate(blocks, axis=0).astype(np.float32)
    check_finite(pooled, 'Feature data')
    return pooled.astype(np.float64)


def map_ordered(func: Callable[[int], R], count: int,
                threads: int) -> List[R]:
    """Applies func to 0..count-1 on up to `threads` workers, in order."""
    if threads <= 1 or count <= 1:
        return [func(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, range(count)))


def squared_distances(frames: FloatArray,
                      centroids: FloatArray) -> FloatArray:
    """Returns the T x k matrix of squared Euclidean distances."""
    k, dim = centroids.shape
    step = max(1, ASSIGN_BLOCK_ELEMENTS // max(1, k * dim))
    out = np.empty((frames.shape[0], k), dtype=np.float64)
    for start in range(0, frames.shape[0], step):
        diff = frames[start:start + step, None, :] - centroids[None, :, :]
        out[start:start + step] = np.einsum('tkd,tkd->tk', diff, diff)
    return out


def _assign(frames: FloatArray, centroids: FloatArray,
            threads: int = 1) -> Tuple[IntArray, FloatArray]:
    nchunks = max(1, math.ceil(frames.shape[0] / REDUCE_CHUNK_FRAMES))

    def run(i: int) -> Tuple[IntArray, FloatArray]:
        block = frames[i * REDUCE_CHUNK_FRAMES:(i + 1) * REDUCE_CHUNK_FRAMES]
        dist = squared_distances(block, centroids)
        # argmin returns the first minimum: ties go to the lowest id.
        labels = np.argmin(dist, axis=1)
        return labels, dist[np.arange(len(labels)), labels]

    parts = map_ordered(run, nchunks, threads)
    labels = np.concatenate([p[0] for p in parts]).astype(np.int64)
    dists = np.concatenate([p[1] for p in parts])
    return labels, dists


def _chunked_sum(values: FloatArray) -> float:
    partial = [float(np.sum(values[i:i + REDUCE_CHUNK_FRAMES]))
               for i in range(0, len(values), REDUCE_CHUNK_FRAMES)]
    return math.fsum(partial)


def _update(frames: FloatArray, labels: IntArray, k: int,
            threads: int = 1) -> Tuple[FloatArray, IntArray]:
    nchunks = max(1, math.ceil(frames.shape[0] / REDUCE_CHUNK_FRAMES))

    def run(i: int) -> Tuple[FloatArray, IntArray]:
        sl = slice(i * REDUCE_CHUNK_FRAMES, (i + 1) * REDUCE_CHUNK_FRAMES)
        sums = np.zeros((k, frames.shape[1]), dtype=np.float64)
        np.add.at(sums, labels[sl], frames[sl])
        return sums, np.bincount(labels[sl], minlength=k).astype(np.int64)

    parts = map_ordered(run, nchunks, threads)
    sums = np.zeros((k, frames.shape[1]), dtype=np.float64)
    counts = np.zeros(k, dtype=np.int64)
    for part_sums, part_counts in parts:
        sums += part_sums
        counts += part_counts
    return sums, counts


def kmeans_plusplus(frames: FloatArray, k: int, seed: int) -> FloatArray:
    """Picks k initial centroids with k-means++ weighting.

    Each step picks the point maximizing log(u) / w, where w is the
    point's squared distance to the nearest chosen centroid and u is a
    uniform derived from the point's value hash and the step. That is
    a draw with probability proportional to w, independent of order.
    """
    hashes = value_hashes(frames, seed)
    centroids = np.empty((k, frames.shape[1]), dtype=np.float64)
    weights = np.ones(frames.shape[0], dtype=np.float64)
    nearest = np.full(frames.shape[0], np.inf)
    for step in range(k):
        keys = np.log(hash_uniforms(hashes, step))
        positive = weights > 0
        if np.any(positive):
            scores = np.full_like(keys, -np.inf)
            scores[positive] = keys[positive] / weights[positive]
        else:
            # Fewer distinct points than k: duplicates are unavoidable.
            scores = keys
        centroids[step] = frames[int(np.argmax(scores))]
        diff = frames - centroids[step]
        nearest = np.minimum(nearest, np.einsum('td,td->t', diff, diff))
        weights = nearest
    return centroids


def _reseed_empty(frames: FloatArray, centroids: FloatArray,
                  counts: IntArray, dists: FloatArray) -> int:
    empty = np.flatnonzero(counts == 0)
    if not empty.size:
        return 0
    dists = dists.copy()
    for cluster in empty:
        far = int(np.argmax(dists))
        centroids[cluster] = frames[far]
        dists[far] = -1.0
    logger.warning('Re-seeded %d empty cluster(s) at the farthest points.',
                   empty.size)
    return int(empty.size)


def kmeans_fit(data: FeatureData,
               k: int = DEFAULT_K,
               max_iters: int = DEFAULT_MAX_ITERS,
               tol: float = DEFAULT_TOL,
               seed: int = 0,
               sample_fraction: float = 1.0,
               threads: int = 1) -> Codebook:
    """Learns a k-centroid codebook from pooled feature frames.

    Lloyd iterations run from k-means++ initialization until the
    relative inertia improvement falls below `tol` or `max_iters` is
    reached. Empty clusters are re-seeded at the point farthest from
    its centroid.

    Args:
        data: A FeatureMatrix, iterable of FeatureMatrix objects, or a
            2-D array; all frames are pooled.
        k: (Optional.) The number of centroids. Default is 500.
        max_iters: (Optional.) The iteration cap. Default is 100.
        tol: (Optional.) Relative inertia improvement threshold.
            Default is 1e-4.
        seed: (Optional.) The initialization seed. Default is 0.
        sample_fraction: (Optional.) The fraction of frames to fit on,
            selected by value hash (so the subset doesn't depend on
            frame order). Default is 1.0, all frames.
        threads: (Optional.) Worker count for chunked assignment and
            accumulation. Results don't depend on it. Default is 1.

    Returns:
        A Codebook with float32 centroids and TrainingMeta.

    Raises:
        ValueError: If k < 1 or there are fewer frames than k.
        NonFiniteError: If the data has NaN or infinite entries.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}.")
    if not 0.0 < sample_fraction <= 1.0:
        raise ValueError(
            f"sample_fraction must be in (0, 1], got {sample_fraction}."
        )
    frames = pool_frames(data)
    if sample_fraction < 1.0 and frames.shape[0]:
        keep = hash_uniforms(value_hashes(frames, seed), -1) < sample_fraction
        frames = frames[keep]
        logger.info('Subsampled %d frames (fraction %.3f) for fitting.',
                    frames.shape[0], sample_fraction)
    if frames.shape[0] < k:
        raise ValueError(
            f"Cannot fit {k} centroids to {frames.shape[0]} frames: need at "
            f"least as many frames as centroids."
        )

    centroids = kmeans_plusplus(frames, k, seed)
    labels, dists = _assign(frames, centroids, threads)
    inertia = _chunked_sum(dists)
    history = [inertia]
    iterations = 0
    for iterations in range(1, max_iters + 1):
        sums, counts = _update(frames, labels, k, threads)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        _reseed_empty(frames, centroids, counts, dists)
        labels, dists = _assign(frames, centroids, threads)
        new_inertia = _chunked_sum(dists)
        history.append(new_inertia)
        improvement = (inertia - new_inertia) / inertia if inertia > 0 else 0.0
        logger.debug('k-means iteration %d: inertia %.6g', iterations,
                     new_inertia)
        inertia = new_inertia
        if improvement < tol:
            break
    logger.info('Fit k=%d on %d frames: %d iterations, inertia %.6g', k,
                frames.shape[0], iterations, inertia)
    meta = TrainingMeta(iterations, inertia, seed, tuple(history))
    return Codebook(centroids.astype(np.float32), meta)


def check_dims(data_dim: int, codebook: Codebook) -> None:
    """Raises DimensionMismatchError unless dims match."""
    if data_dim != codebook.dim:
        raise DimensionMismatchError(
            f"Feature dimension {data_dim} does not match codebook "
            f"dimension {codebook.dim}."
        )


def kmeans_assign(data: Union[FeatureMatrix, npt.ArrayLike],
                  codebook: Codebook, threads: int = 1) -> IntArray:
    """Maps each frame to its nearest centroid's unit id.

    Ties are broken toward the lowest unit id.

    Returns:
        A length-T int64 array of unit ids.

    Raises:
        DimensionMismatchError: If dims differ (message has both).
    """
    frames = data.frames if isinstance(data, FeatureMatrix) \
        else np.asarray(data)
    if frames.ndim != 2:
        raise DimensionMismatchError(
            f"Expected a 2-D frames array; got shape {frames.shape}."
        )
    check_dims(frames.shape[1], codebook)
    labels, _ = _assign(frames.astype(np.float64),
                        codebook.centroids.astype(np.float64), threads)
    return labels


def inertia(data: Union[FeatureMatrix, npt.ArrayLike],
            codebook: Codebook) -> float:
    """Returns the sum of squared distances to the nearest centroids."""
    frames = data.frames if isinstance(data, FeatureMatrix) \
        else np.asarray(data)
    check_dims(frames.shape[1], codebook)
    _, dists = _assign(frames.astype(np.float64),
                       codebook.centroids.astype(np.float64))
    return _chunked_sum(dists)


def save_codebook(codebook: Codebook, path: PathLike) -> None:
    """Writes a codebook in the KMCB binary format."""
    header = KMCB_HEADER.pack(KMCB_MAGIC, KMCB_VERSION, codebook.k,
                              codebook.dim, codebook.training_meta.seed)
    payload = np.ascontiguousarray(codebook.centroids, dtype=PAYLOAD_DTYPE)
    Path(path).write_bytes(header + payload.tobytes(order='C'))


def load_codebook(path: PathLike) -> Codebook:
    """Reads a KMCB codebook file.

    Raises:
        MagicMismatchError, TruncatedPayloadError, NonFiniteError
    """
    data = Path(path).read_bytes()
    if len(data) < KMCB_HEADER.size:
        raise TruncatedPayloadError(f'{path}: truncated header',
                                    KMCB_HEADER.size, len(data))
    magic, version, k, dim, seed = KMCB_HEADER.unpack_from(data)
    if magic != KMCB_MAGIC:
        raise MagicMismatchError(
            f"{path}: bad magic {magic!r}, expected {KMCB_MAGIC!r}."
        )
    if version != KMCB_VERSION:
        raise ValueError(f"{path}: unsupported KMCB version {version}.")
    expected = KMCB_HEADER.size + k * dim * PAYLOAD_DTYPE.itemsize
    if len(data) != expected:
        raise TruncatedPayloadError(f'{path}: bad payload size', expected,
                                    len(data))
    centroids = np.frombuffer(data, dtype=PAYLOAD_DTYPE, count=k * dim,
                              offset=KMCB_HEADER.size).reshape(k, dim)
    return Codebook(centroids.astype(np.float32), TrainingMeta(seed=seed))


def assign_all(matrices: Sequence[FeatureMatrix], codebook: Codebook,
               threads: int = 1) -> List[IntArray]:
    """Assigns several utterances, preserving order."""
    return map_ordered(lambda i: kmeans_assign(matrices[i], codebook),
                        len(matrices), threads)
