"""Binary image/vector files and shared checksum helpers.

Image file layout (all little-endian)::

    magic   4 bytes   b"BCDI"
    version uint32    1
    n_x     uint32
    n_y     uint32
    dtype   uint32    1 = float64
    payload n_x * n_y float64, row-major (n_y rows of n_x values)
    check   8 bytes   BLAKE2b-64 digest of every preceding byte

Sinograms and count vectors use the same layout with ``n_x = n_bins`` and
``n_y = n_angles``; masks are stored as 0.0 / 1.0 images.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

IMAGE_MAGIC = b"BCDI"
IMAGE_VERSION = 1
_HEADER = struct.Struct("<4sIIII")
DTYPE_F64 = 1


class FormatError(ValueError):
    """Malformed or unsupported artifact file."""


class ChecksumError(FormatError):
    pass


def checksum64(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=8).digest()


def encode_array(arr) -> bytes:
    arr = np.asarray(arr, dtype="<f8")
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError("only 1-D or 2-D arrays can be stored")
    n_y, n_x = arr.shape
    body = _HEADER.pack(IMAGE_MAGIC, IMAGE_VERSION, n_x, n_y, DTYPE_F64) + arr.tobytes(order="C")
    return body + checksum64(body)


def decode_array(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size + 8:
        raise FormatError("file truncated before end of header")
    magic, version, n_x, n_y, dtype = _HEADER.unpack_from(buf)
    if magic != IMAGE_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != IMAGE_VERSION:
        raise FormatError(f"unsupported image format version {version}")
    if dtype != DTYPE_F64:
        raise FormatError(f"unsupported value type code {dtype}")
    expected = _HEADER.size + 8 * n_x * n_y + 8
    if len(buf) != expected:
        raise FormatError(f"expected {expected} bytes, found {len(buf)}")
    body, check = buf[:-8], buf[-8:]
    if checksum64(body) != check:
        raise ChecksumError("image checksum mismatch")
    return np.frombuffer(body, dtype="<f8", offset=_HEADER.size).reshape(n_y, n_x).astype(float)


def write_array(path, arr) -> Path:
    path = Path(path)
    path.write_bytes(encode_array(arr))
    return path


def read_array(path) -> np.ndarray:
    return decode_array(Path(path).read_bytes())


def verify_file(path) -> bool:
    """True when ``path`` parses as an image or model file with a valid checksum."""
    buf = Path(path).read_bytes()
    if len(buf) < 8:
        return False
    return checksum64(buf[:-8]) == buf[-8:]
