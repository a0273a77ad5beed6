"""
Matrix type and the FQTA binary tensor archive

Layout (all integers little-endian):
    magic "FQTA" | u32 version=1 | u32 tensor count
    per tensor: u32 name length | UTF-8 name | u8 dtype tag | u32 ndim (=2)
                | u64 dim0 | u64 dim1 | raw row-major data

dtype tags: 0 = float64, 1 = int32.
"""

import struct
from collections.abc import Iterator, Mapping
from pathlib import Path
from typing import Dict, Iterable, Tuple, Union

import numpy as np
import numpy.typing as npt

from flattenquant.core.errors import (
    BadMagicError,
    DuplicateTensorError,
    NonFiniteTensorError,
    ShapeMismatchError,
    TruncatedArchiveError,
    UnsupportedFormatError,
)
from flattenquant.core.logging import get_logger

logger = get_logger(__name__)

Matrix = npt.NDArray[np.float64]
IntMatrix = npt.NDArray[np.int32]

MAGIC = b"FQTA"
VERSION = 1
DTYPE_FLOAT64 = 0
DTYPE_INT32 = 1

_DTYPES: Dict[int, np.dtype] = {
    DTYPE_FLOAT64: np.dtype("<f8"),
    DTYPE_INT32: np.dtype("<i4"),
}


def as_matrix(values: npt.ArrayLike, name: str = "matrix") -> Matrix:
    """
    Validate and freeze a dense 2-D float64 matrix

    Args:
        values: Anything numpy can turn into a 2-D array
        name: Used in error messages

    Returns:
        Matrix: Read-only float64 array

    Raises:
        ShapeMismatchError: If the array is not 2-D or has an empty dimension
        NonFiniteTensorError: If any value is NaN or infinite
    """
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeMismatchError(f"{name} must be a non-empty 2-D matrix", {"shape": list(arr.shape)})
    if not np.all(np.isfinite(arr)):
        raise NonFiniteTensorError(f"{name} contains non-finite values", {"name": name})
    arr.setflags(write=False)
    return arr


def as_int_matrix(values: npt.ArrayLike, name: str = "matrix") -> IntMatrix:
    arr = np.array(values, dtype=np.int32)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeMismatchError(f"{name} must be a non-empty 2-D matrix", {"shape": list(arr.shape)})
    arr.setflags(write=False)
    return arr


class TensorArchive(Mapping):
    """Ordered, name-unique collection of matrices"""

    def __init__(self, entries: Iterable[Tuple[str, np.ndarray]] = ()) -> None:
        self._entries: Dict[str, np.ndarray] = {}
        for name, matrix in entries:
            self.add(name, matrix)

    def add(self, name: str, matrix: np.ndarray) -> None:
        if name in self._entries:
            raise DuplicateTensorError(f"duplicate tensor name '{name}'", {"name": name})
        if np.issubdtype(np.asarray(matrix).dtype, np.integer):
            self._entries[name] = as_int_matrix(matrix, name)
        else:
            self._entries[name] = as_matrix(matrix, name)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._entries[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __repr__(self) -> str:
        shapes = ", ".join(f"{k}: {v.shape}" for k, v in self._entries.items())
        return f"TensorArchive({shapes})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TensorArchive):
            return NotImplemented
        if list(self) != list(other):
            return False
        return all(
            self[k].dtype == other[k].dtype and np.array_equal(self[k], other[k]) for k in self
        )


def encode_archive(archive: TensorArchive) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(archive))]
    for name, matrix in archive.items():
        raw_name = name.encode("utf-8")
        tag = DTYPE_INT32 if np.issubdtype(matrix.dtype, np.integer) else DTYPE_FLOAT64
        rows, cols = matrix.shape
        parts.append(struct.pack("<I", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BIQQ", tag, 2, rows, cols))
        parts.append(np.ascontiguousarray(matrix, dtype=_DTYPES[tag]).tobytes())
    return b"".join(parts)


class _Reader:
    """Bounds-checked cursor over an archive payload"""

    def __init__(self, payload: bytes) -> None:
        self.payload = payload
        self.offset = 0

    def take(self, count: int) -> bytes:
        end = self.offset + count
        if end > len(self.payload):
            raise TruncatedArchiveError(
                "truncated payload",
                {"offset": self.offset, "wanted": count, "size": len(self.payload)},
            )
        chunk = self.payload[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_archive(payload: bytes) -> TensorArchive:
    reader = _Reader(payload)
    if len(payload) < len(MAGIC) or reader.take(len(MAGIC)) != MAGIC:
        raise BadMagicError("bad magic")
    version, count = reader.unpack("<II")
    if version != VERSION:
        raise UnsupportedFormatError(f"unsupported archive version {version}", {"version": version})

    archive = TensorArchive()
    for _ in range(count):
        (name_len,) = reader.unpack("<I")
        try:
            name = reader.take(name_len).decode("utf-8")
        except UnicodeDecodeError as e:
            raise UnsupportedFormatError("tensor name is not valid UTF-8") from e
        tag, ndim = reader.unpack("<BI")
        if tag not in _DTYPES:
            raise UnsupportedFormatError(f"unknown dtype tag {tag}", {"name": name, "tag": tag})
        if ndim != 2:
            raise UnsupportedFormatError(f"tensor '{name}' has ndim {ndim}, expected 2", {"name": name})
        rows, cols = reader.unpack("<QQ")
        if rows == 0 or cols == 0:
            raise UnsupportedFormatError(
                f"tensor '{name}' has an empty dimension", {"name": name, "shape": [rows, cols]}
            )
        dtype = _DTYPES[tag]
        data = np.frombuffer(reader.take(rows * cols * dtype.itemsize), dtype=dtype).reshape(rows, cols)
        if tag == DTYPE_FLOAT64 and not np.all(np.isfinite(data)):
            raise NonFiniteTensorError(f"tensor '{name}' contains non-finite values", {"name": name})
        if name in archive:
            raise DuplicateTensorError(f"duplicate tensor name '{name}'", {"name": name})
        archive.add(name, data.astype(np.int32) if tag == DTYPE_INT32 else data.astype(np.float64))

    if reader.offset != len(payload):
        raise UnsupportedFormatError(
            "trailing bytes after last tensor", {"offset": reader.offset, "size": len(payload)}
        )
    return archive


def read_archive(path: Union[str, Path]) -> TensorArchive:
    """
    Read an FQTA archive from disk

    Raises:
        BadMagicError, TruncatedArchiveError, DuplicateTensorError,
        NonFiniteTensorError, UnsupportedFormatError
    """
    payload = Path(path).read_bytes()
    archive = decode_archive(payload)
    logger.debug("Archive read", path=str(path), tensors=len(archive), size=len(payload))
    return archive


def write_archive(archive: TensorArchive, path: Union[str, Path]) -> None:
    """Write an FQTA archive; the byte stream is a pure function of the archive"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    payload = encode_archive(archive)
    target.write_bytes(payload)
    logger.debug("Archive written", path=str(target), tensors=len(archive), size=len(payload))
