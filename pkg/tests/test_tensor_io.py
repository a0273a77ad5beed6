import math
import struct

import numpy as np
import pytest

from flattenquant.core.errors import (
    BadMagicError,
    DuplicateTensorError,
    NonFiniteTensorError,
    ShapeMismatchError,
    TruncatedArchiveError,
    UnsupportedFormatError,
)
from flattenquant.quant.tensor_io import (
    MAGIC,
    TensorArchive,
    as_matrix,
    decode_archive,
    encode_archive,
    read_archive,
    write_archive,
)


def _entry(name: str, tag: int, rows: int, cols: int, data: bytes) -> bytes:
    raw = name.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw + struct.pack("<BIQQ", tag, 2, rows, cols) + data


def test_identity_archive_round_trip(tmp_path):
    archive = TensorArchive([("w", np.eye(2))])
    path = tmp_path / "a.fqta"
    write_archive(archive, path)

    loaded = read_archive(path)
    assert list(loaded) == ["w"]
    np.testing.assert_array_equal(loaded["w"], np.eye(2))
    assert encode_archive(loaded) == path.read_bytes()


def test_random_matrix_round_trip_is_byte_exact(tmp_path, rng):
    archive = TensorArchive([("x", rng.standard_normal((3, 5)))])
    path = tmp_path / "x.fqta"
    write_archive(archive, path)
    first = path.read_bytes()

    loaded = read_archive(path)
    assert loaded == archive
    write_archive(loaded, path)
    assert path.read_bytes() == first


def test_layout_matches_format():
    payload = encode_archive(TensorArchive([("ab", np.array([[1.5]]))]))
    expected = MAGIC + struct.pack("<II", 1, 1) + _entry("ab", 0, 1, 1, struct.pack("<d", 1.5))
    assert payload == expected


def test_int32_tensors_keep_their_dtype():
    archive = TensorArchive([("q", np.array([[-7, 0, 7]], dtype=np.int32))])
    loaded = decode_archive(encode_archive(archive))
    assert loaded["q"].dtype == np.int32
    np.testing.assert_array_equal(loaded["q"], [[-7, 0, 7]])


def test_entries_keep_insertion_order():
    archive = TensorArchive([("b", np.ones((1, 1))), ("a", np.zeros((1, 1)))])
    assert list(decode_archive(encode_archive(archive))) == ["b", "a"]


def test_wrong_magic_is_rejected():
    payload = b"NOPE" + encode_archive(TensorArchive([("w", np.eye(2))]))[4:]
    with pytest.raises(BadMagicError, match="bad magic"):
        decode_archive(payload)


def test_truncated_payload_is_rejected():
    payload = encode_archive(TensorArchive([("w", np.eye(2))]))
    with pytest.raises(TruncatedArchiveError, match="truncated payload"):
        decode_archive(payload[:-1])


def test_duplicate_names_are_rejected():
    entry = _entry("w", 0, 1, 1, struct.pack("<d", 1.0))
    payload = MAGIC + struct.pack("<II", 1, 2) + entry + entry
    with pytest.raises(DuplicateTensorError):
        decode_archive(payload)


def test_non_finite_values_are_rejected():
    payload = MAGIC + struct.pack("<II", 1, 1) + _entry("w", 0, 1, 1, struct.pack("<d", math.nan))
    with pytest.raises(NonFiniteTensorError):
        decode_archive(payload)


@pytest.mark.parametrize(
    "payload",
    [
        MAGIC + struct.pack("<II", 2, 0),
        MAGIC + struct.pack("<II", 1, 1) + _entry("w", 9, 1, 1, b"\x00" * 8),
        MAGIC + struct.pack("<II", 1, 0) + b"\x00",
        MAGIC + struct.pack("<II", 1, 1) + _entry("w", 0, 0, 3, b""),
        MAGIC + struct.pack("<II", 1, 1) + _entry("w", 1, 2, 0, b""),
    ],
    ids=["version", "dtype-tag", "trailing-bytes", "zero-rows", "zero-cols"],
)
def test_unsupported_layouts_are_rejected(payload):
    with pytest.raises(UnsupportedFormatError):
        decode_archive(payload)


def test_archive_refuses_duplicate_add():
    archive = TensorArchive([("w", np.eye(2))])
    with pytest.raises(DuplicateTensorError):
        archive.add("w", np.eye(2))


def test_as_matrix_validates_input():
    with pytest.raises(ShapeMismatchError):
        as_matrix([1.0, 2.0])
    with pytest.raises(NonFiniteTensorError):
        as_matrix([[1.0, math.inf]])
    m = as_matrix([[1, 2]])
    assert m.dtype == np.float64
    assert not m.flags.writeable
