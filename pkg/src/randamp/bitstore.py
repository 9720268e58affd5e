"""Packed bit strings, trial records, and their on-disk formats.

Bit ``j`` of a :class:`BitString` lives in octet ``j // 8`` at position
``j % 8``, least-significant bit first. Indices are 0-based; the 1-based
vector index ``i`` used in matrix notation is ``j + 1``.

File formats (all integers little-endian)::

    RABITS01 | u64 bit length   | payload octets
    RATRIAL1 | u64 trial count  | two trials per octet, low nibble first

A trial cell packs bit0=x, bit1=y, bit2=a, bit3=b.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Union

import numpy as np

BITS_MAGIC = b"RABITS01"
TRIALS_MAGIC = b"RATRIAL1"
_HEADER = struct.Struct("<8sQ")

PathOrFile = Union[str, os.PathLike, BinaryIO]


class FormatError(ValueError):
    """Base class for malformed RABITS01 / RATRIAL1 input."""


class BadMagicError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class TrailingDataError(FormatError):
    pass


def _as_bit_array(bits: Iterable[int] | np.ndarray) -> np.ndarray:
    arr = np.asarray(bits if isinstance(bits, np.ndarray) else list(bits))
    if arr.ndim != 1:
        raise ValueError("bits must be one-dimensional")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError("bits must be 0 or 1")
    return arr.astype(np.uint8, copy=False)


@dataclass(frozen=True, eq=True)
class BitString:
    """Immutable packed bit sequence (LSB-first within each octet)."""

    length: int
    payload: bytes

    def __post_init__(self) -> None:
        if self.length < 0:
            raise ValueError("length must be non-negative")
        if len(self.payload) != (self.length + 7) // 8:
            raise ValueError(
                f"payload has {len(self.payload)} octets, expected {(self.length + 7) // 8}"
            )
        tail = self.length % 8
        if tail and self.payload[-1] >> tail:
            raise ValueError("unused trailing bits must be zero")

    @classmethod
    def from_bits(cls, bits: Iterable[int] | np.ndarray) -> "BitString":
        arr = _as_bit_array(bits)
        return cls(int(arr.size), np.packbits(arr, bitorder="little").tobytes())

    @classmethod
    def from_string(cls, text: str) -> "BitString":
        """Parse ``"1011"``; the first character is bit 0."""
        return cls.from_bits([int(c) for c in text if c in "01"])

    @classmethod
    def from_packed(cls, packed: np.ndarray | bytes, length: int) -> "BitString":
        """Wrap already-packed octets, clearing any bits beyond ``length``."""
        buf = np.frombuffer(bytes(packed), dtype=np.uint8)[: (length + 7) // 8].copy()
        if buf.size != (length + 7) // 8:
            raise ValueError("not enough octets for requested length")
        tail = length % 8
        if tail:
            buf[-1] &= (1 << tail) - 1
        return cls(length, buf.tobytes())

    @classmethod
    def zeros(cls, length: int) -> "BitString":
        return cls(length, bytes((length + 7) // 8))

    def to_array(self) -> np.ndarray:
        """Unpacked uint8 array of 0/1 values."""
        packed = np.frombuffer(self.payload, dtype=np.uint8)
        return np.unpackbits(packed, count=self.length, bitorder="little")

    def packed(self) -> np.ndarray:
        return np.frombuffer(self.payload, dtype=np.uint8)

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, j: int) -> int:
        if j < 0:
            j += self.length
        if not 0 <= j < self.length:
            raise IndexError(j)
        return (self.payload[j >> 3] >> (j & 7)) & 1

    def slice(self, start: int, stop: int) -> "BitString":
        return BitString.from_bits(self.to_array()[start:stop])

    def count_ones(self) -> int:
        return int(np.bitwise_count(self.packed()).sum())

    def __str__(self) -> str:
        if self.length > 64:
            return f"BitString(length={self.length})"
        return "".join(str(b) for b in self.to_array())


def interleave(a: BitString, b: BitString) -> BitString:
    """``a_1 b_1 a_2 b_2 ...``; both inputs must have equal length."""
    if a.length != b.length:
        raise ValueError("interleave requires equal lengths")
    out = np.empty(2 * a.length, dtype=np.uint8)
    out[0::2] = a.to_array()
    out[1::2] = b.to_array()
    return BitString.from_bits(out)


def deinterleave(ab: BitString) -> tuple[BitString, BitString]:
    if ab.length % 2:
        raise ValueError("interleaved string must have even length")
    arr = ab.to_array()
    return BitString.from_bits(arr[0::2]), BitString.from_bits(arr[1::2])


def xor_pad(data: BitString, pad: BitString) -> BitString:
    """One-time pad: XOR ``data`` with the first ``data.length`` bits of ``pad``."""
    if pad.length < data.length:
        raise ValueError(f"pad has {pad.length} bits, data needs {data.length}")
    nbytes = len(data.payload)
    out = np.bitwise_xor(data.packed(), pad.packed()[:nbytes])
    return BitString.from_packed(out, data.length)


@dataclass(frozen=True, eq=False)
class TrialRecordSet:
    """Per-trial cells ``x | y<<1 | a<<2 | b<<3`` as a uint8 array."""

    cells: np.ndarray

    def __post_init__(self) -> None:
        cells = np.ascontiguousarray(self.cells, dtype=np.uint8)
        if cells.ndim != 1:
            raise ValueError("cells must be one-dimensional")
        if cells.size and cells.max() > 15:
            raise ValueError("cell values must lie in [0, 15]")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def from_columns(cls, x, y, a, b) -> "TrialRecordSet":
        x, y, a, b = (np.asarray(v, dtype=np.uint8) for v in (x, y, a, b))
        return cls(x | (y << 1) | (a << 2) | (b << 3))

    @property
    def n(self) -> int:
        return int(self.cells.size)

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TrialRecordSet):
            return NotImplemented
        return np.array_equal(self.cells, other.cells)

    @property
    def x(self) -> np.ndarray:
        return self.cells & 1

    @property
    def y(self) -> np.ndarray:
        return (self.cells >> 1) & 1

    @property
    def a(self) -> np.ndarray:
        return (self.cells >> 2) & 1

    @property
    def b(self) -> np.ndarray:
        return (self.cells >> 3) & 1

    def __getitem__(self, idx) -> "TrialRecordSet":
        if isinstance(idx, slice):
            return TrialRecordSet(self.cells[idx])
        raise TypeError("TrialRecordSet supports slicing only")


@dataclass(frozen=True, eq=False)
class CountTable16:
    """Joint tally of (a, b, x, y); ``counts[a, b, x, y]``."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.array(self.counts, dtype=np.int64).reshape(2, 2, 2, 2)
        if (counts < 0).any():
            raise ValueError("counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "CountTable16") -> "CountTable16":
        return CountTable16(self.counts + other.counts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CountTable16):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)

    def probabilities(self) -> np.ndarray:
        return self.counts / self.total


# -- file formats -----------------------------------------------------------


def _open_sink(dest: PathOrFile):
    if hasattr(dest, "write"):
        return dest, False
    return open(dest, "wb"), True


def _open_source(src: PathOrFile):
    if hasattr(src, "read"):
        return src, False
    return open(src, "rb"), True


def _read_header(fh: BinaryIO, magic: bytes) -> int:
    head = fh.read(_HEADER.size)
    if len(head) < 8 or head[:8] != magic:
        raise BadMagicError(f"expected magic {magic!r}, found {head[:8]!r}")
    if len(head) < _HEADER.size:
        raise TruncatedError("header truncated")
    return _HEADER.unpack(head)[1]


def _read_exact(fh: BinaryIO, nbytes: int) -> bytes:
    body = fh.read(nbytes)
    if len(body) < nbytes:
        raise TruncatedError(f"payload truncated: expected {nbytes} octets, got {len(body)}")
    if fh.read(1):
        raise TrailingDataError("unexpected data after payload")
    return body


def write_bits(bits: BitString, dest: PathOrFile) -> int:
    """Write a RABITS01 file; returns the number of octets written."""
    fh, close = _open_sink(dest)
    try:
        fh.write(_HEADER.pack(BITS_MAGIC, bits.length))
        fh.write(bits.payload)
    finally:
        if close:
            fh.close()
    return _HEADER.size + len(bits.payload)


def read_bits(src: PathOrFile) -> BitString:
    fh, close = _open_source(src)
    try:
        length = _read_header(fh, BITS_MAGIC)
        body = _read_exact(fh, (length + 7) // 8)
    finally:
        if close:
            fh.close()
    try:
        return BitString(length, body)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def _pack_trials(cells: np.ndarray) -> bytes:
    if cells.size % 2:
        cells = np.append(cells, np.uint8(0))
    return (cells[0::2] | (cells[1::2] << 4)).astype(np.uint8).tobytes()


def write_trials(trials: TrialRecordSet, dest: PathOrFile) -> int:
    """Write a RATRIAL1 file; returns the number of octets written."""
    fh, close = _open_sink(dest)
    try:
        payload = _pack_trials(trials.cells)
        fh.write(_HEADER.pack(TRIALS_MAGIC, trials.n))
        fh.write(payload)
    finally:
        if close:
            fh.close()
    return _HEADER.size + len(payload)


def read_trials(src: PathOrFile) -> TrialRecordSet:
    fh, close = _open_source(src)
    try:
        n = _read_header(fh, TRIALS_MAGIC)
        body = np.frombuffer(_read_exact(fh, (n + 1) // 2), dtype=np.uint8)
    finally:
        if close:
            fh.close()
    cells = np.empty(2 * body.size, dtype=np.uint8)
    cells[0::2] = body & 0x0F
    cells[1::2] = body >> 4
    if n % 2 and cells[-1]:
        raise FormatError("padding nibble must be zero")
    return TrialRecordSet(cells[:n])


class TrialWriter:
    """Streams a RATRIAL1 file whose trial count is known up front.

    Appended chunks must have even length except the final one.
    """

    def __init__(self, path: str | os.PathLike, n: int):
        self._fh = open(path, "wb")
        self._fh.write(_HEADER.pack(TRIALS_MAGIC, n))
        self._expected = n
        self._written = 0
        self._odd_seen = False

    def append(self, cells: np.ndarray) -> None:
        if self._odd_seen:
            raise ValueError("an odd-length chunk must be the last one")
        self._fh.write(_pack_trials(np.asarray(cells, dtype=np.uint8)))
        self._written += len(cells)
        self._odd_seen = len(cells) % 2 == 1

    def close(self) -> None:
        self._fh.close()
        if self._written != self._expected:
            raise ValueError(f"wrote {self._written} trials, header declares {self._expected}")

    def __enter__(self) -> "TrialWriter":
        return self

    def __exit__(self, *exc) -> None:
        if exc[0] is None:
            self.close()
        else:
            self._fh.close()

