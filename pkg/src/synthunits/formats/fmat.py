"""Contains FeatureMatrix and the FMAT binary matrix format.

FMAT layout (little-endian):

    magic        4 bytes  b'FMAT'
    version      u32      1
    rows         u32
    cols         u32
    frame_rate   f32
    source_layer u32
    payload      rows * cols f32, row-major

Session embeddings are FMAT files with one row; pitch tracks are FMAT
files with two rows (log-F0, voicing as 0/1).
"""
from dataclasses import dataclass
import os
from pathlib import Path
import struct
from typing import Tuple, Union

import numpy as np
import numpy.typing as npt

from synthunits.errors import (
    MagicMismatchError, NonFiniteError, TruncatedPayloadError
)
from synthunits.typing import Float32Array


FMAT_MAGIC = b'FMAT'
FMAT_VERSION = 1
FMAT_HEADER = struct.Struct('<4sIIIfI')
PAYLOAD_DTYPE = np.dtype('<f4')
PathLike = Union[str, 'os.PathLike[str]']


@dataclass(frozen=True)
class FeatureMatrix:
    """A T x D matrix of frame features.

    Attributes:
        frames: A 2-D float32 array, one row per frame.
        frame_rate_hz: Frames per second.
        source_layer: The model layer the features came from
            (metadata only).
    """

    frames: Float32Array
    frame_rate_hz: float = 50.0
    source_layer: int = 0

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.float32)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
            raise ValueError(
                f"FeatureMatrix needs at least a 1 x 1 matrix; got shape "
                f"{frames.shape}."
            )
        check_finite(frames, 'FeatureMatrix')
        object.__setattr__(self, 'frames', frames)

    @property
    def num_frames(self) -> int:
        """T, the number of frames."""
        return int(self.frames.shape[0])

    @property
    def dim(self) -> int:
        """D, the feature dimension."""
        return int(self.frames.shape[1])


@dataclass(frozen=True)
class SessionEmbedding:
    """An utterance-level session embedding, consumed as opaque data.

    Attributes:
        vector: A 1-D float32 array.
        utterance_id: The utterance this embedding belongs to.
    """

    vector: Float32Array
    utterance_id: str

    def __post_init__(self) -> None:
        vector = np.asarray(self.vector, dtype=np.float32).reshape(-1)
        check_finite(vector, f'Embedding {self.utterance_id!r}')
        object.__setattr__(self, 'vector', vector)


def check_finite(values: npt.NDArray[np.floating], what: str) -> None:
    """Raises NonFiniteError naming the first non-finite position."""
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        raise NonFiniteError(
            f"{what} has a non-finite entry at index {tuple(bad[0].tolist())}."
        )


def pack_matrix(frames: npt.ArrayLike, frame_rate_hz: float = 0.0,
                source_layer: int = 0) -> bytes:
    """Serializes a 2-D matrix to FMAT bytes."""
    arr = np.ascontiguousarray(frames, dtype=PAYLOAD_DTYPE)
    if arr.ndim != 2:
        raise ValueError(f"FMAT payload must be 2-D; got shape {arr.shape}.")
    check_finite(arr, 'FMAT payload')
    rows, cols = arr.shape
    header = FMAT_HEADER.pack(FMAT_MAGIC, FMAT_VERSION, rows, cols,
                              frame_rate_hz, source_layer)
    return header + arr.tobytes(order='C')


def unpack_matrix(data: bytes, name: str = 'FMAT data'
                  ) -> Tuple[Float32Array, float, int]:
    """Parses FMAT bytes.

    Returns:
        A tuple (matrix, frame_rate_hz, source_layer).

    Raises:
        MagicMismatchError: If the magic bytes are wrong.
        TruncatedPayloadError: If the header or payload is short.
        NonFiniteError: If the payload has NaN or infinite entries.
        ValueError: For an unsupported version.
    """
    if len(data) < FMAT_HEADER.size:
        raise TruncatedPayloadError(f'{name}: truncated header',
                                    FMAT_HEADER.size, len(data))
    magic, version, rows, cols, rate, layer = FMAT_HEADER.unpack_from(data)
    if magic != FMAT_MAGIC:
        raise MagicMismatchError(
            f"{name}: bad magic {magic!r}, expected {FMAT_MAGIC!r}."
        )
    if version != FMAT_VERSION:
        raise ValueError(f"{name}: unsupported FMAT version {version}.")
    expected = FMAT_HEADER.size + rows * cols * PAYLOAD_DTYPE.itemsize
    if len(data) < expected:
        raise TruncatedPayloadError(f'{name}: truncated payload', expected,
                                    len(data))
    if len(data) > expected:
        raise ValueError(
            f"{name}: {len(data) - expected} trailing bytes after payload."
        )
    matrix = np.frombuffer(data, dtype=PAYLOAD_DTYPE, count=rows * cols,
                           offset=FMAT_HEADER.size).reshape(rows, cols)
    check_finite(matrix, name)
    return matrix.astype(np.float32), float(rate), int(layer)


def read_matrix(path: PathLike) -> Tuple[Float32Array, float, int]:
    """Reads any FMAT file as (matrix, frame_rate_hz, source_layer)."""
    return unpack_matrix(Path(path).read_bytes(), str(path))


def write_matrix(path: PathLike, frames: npt.ArrayLike,
                 frame_rate_hz: float = 0.0, source_layer: int = 0) -> None:
    """Writes any 2-D matrix as an FMAT file."""
    Path(path).write_bytes(pack_matrix(frames, frame_rate_hz, source_layer))


def read_features(path: PathLike) -> FeatureMatrix:
    """Reads an FMAT file as a FeatureMatrix."""
    matrix, rate, layer = read_matrix(path)
    return FeatureMatrix(matrix, rate, layer)


def write_features(matrix: FeatureMatrix, path: PathLike) -> None:
    """Writes a FeatureMatrix as an FMAT file (bit-exact)."""
    write_matrix(path, matrix.frames, matrix.frame_rate_hz,
                 matrix.source_layer)


def read_embedding(path: PathLike, utterance_id: str) -> SessionEmbedding:
    """Reads a one-row FMAT file as a SessionEmbedding."""
    matrix, _, _ = read_matrix(path)
    if matrix.shape[0] != 1:
        raise ValueError(
            f"{path}: embedding files have exactly 1 row, got "
            f"{matrix.shape[0]}."
        )
    return SessionEmbedding(matrix[0], utterance_id)


def write_embedding(embedding: SessionEmbedding, path: PathLike) -> None:
    """Writes a SessionEmbedding as a one-row FMAT file."""
    write_matrix(path, embedding.vector.reshape(1, -1))
