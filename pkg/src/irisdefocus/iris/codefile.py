"""Bit-exact iris code files.

Layout (little-endian)::

    0   4  magic b"IRIS"
    4   1  version (1)
    5   2  H, radial rows
    7   2  W, angular columns
    9   1  shift policy: max_shift used when matching
    10  6  reserved, zero
    16  .  code bits, then mask bits

Bits are taken row-major over (row, column, [real, imaginary]) and packed
eight per byte, least significant bit first; each section is padded to a
whole byte.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .encode import IrisCode

MAGIC = b"IRIS"
VERSION = 1
_HEADER = struct.Struct("<4sBHHB6x")


def dumps(code: IrisCode, max_shift: int = 0) -> bytes:
    h, w = code.shape
    if not 0 <= max_shift <= 255:
        raise ValueError("shift policy must fit in one byte")
    return (_HEADER.pack(MAGIC, VERSION, h, w, max_shift)
            + code.packed_bits().tobytes() + code.packed_mask().tobytes())


def loads(data: bytes) -> tuple[IrisCode, int]:
    """Parse a code file; returns the code and its shift policy."""
    if len(data) < _HEADER.size:
        raise ValueError("truncated iris code header")
    magic, version, h, w, shift = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError("not an iris code file")
    if version != VERSION:
        raise ValueError(f"unsupported iris code version {version}")
    n_bits = 2 * h * w
    n_bytes = (n_bits + 7) // 8
    body = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
    if body.size != 2 * n_bytes:
        raise ValueError("iris code payload has the wrong length")
    bits = np.unpackbits(body[:n_bytes], count=n_bits, bitorder="little")
    mask = np.unpackbits(body[n_bytes:], count=n_bits, bitorder="little")
    return IrisCode(bits.reshape(h, w, 2), mask.reshape(h, w, 2)), shift


def write_code(path: str | Path, code: IrisCode, max_shift: int = 0) -> None:
    Path(path).write_bytes(dumps(code, max_shift))


def read_code(path: str | Path) -> tuple[IrisCode, int]:
    return loads(Path(path).read_bytes())
