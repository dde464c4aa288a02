"""MSB-first bit writer/reader, radix-M integer packing and the on-disk
container used by the CLI.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

from app.errors import BitstreamError, TruncatedBitstream

MAGIC = b"UMTC"
VERSION = 1
_HEADER = struct.Struct(">4sBQQ")  # magic, version, n, bit length


@dataclass(frozen=True)
class Bitstream:
    """A bit vector of exactly `bit_length` bits, zero-padded to whole bytes."""

    data: bytes
    bit_length: int

    def __post_init__(self):
        if len(self.data) != (self.bit_length + 7) // 8:
            raise BitstreamError("byte length does not match bit length")

    def to_bits(self) -> str:
        if self.bit_length == 0:
            return ""
        value = int.from_bytes(self.data, "big") >> (-self.bit_length % 8)
        return format(value, f"0{self.bit_length}b")

    @classmethod
    def from_bits(cls, bits: str) -> Bitstream:
        writer = BitWriter()
        if bits:
            writer.write_bits(int(bits, 2), len(bits))
        return writer.getvalue()

    def truncated(self, bit_length: int) -> Bitstream:
        return Bitstream.from_bits(self.to_bits()[:bit_length])


class BitWriter:
    __slots__ = ("_value", "_bitcnt")

    def __init__(self) -> None:
        self._value = 0
        self._bitcnt = 0

    def write_bits(self, value: int, nbits: int) -> None:
        if nbits < 0:
            raise ValueError("nbits must be >= 0")
        if value < 0 or value >> nbits:
            raise ValueError(f"value {value} does not fit in {nbits} bits")
        self._value = (self._value << nbits) | value
        self._bitcnt += nbits

    def num_written_bits(self) -> int:
        return self._bitcnt

    def getvalue(self) -> Bitstream:
        pad = -self._bitcnt % 8
        size = (self._bitcnt + pad) // 8
        return Bitstream(data=(self._value << pad).to_bytes(size, "big"), bit_length=self._bitcnt)


class BitReader:
    __slots__ = ("_value", "_length", "_pos")

    def __init__(self, stream: Bitstream) -> None:
        self._value = int.from_bytes(stream.data, "big") >> (-stream.bit_length % 8)
        self._length = stream.bit_length
        self._pos = 0

    def read_bits(self, nbits: int) -> int:
        if nbits < 0:
            raise ValueError("nbits must be >= 0")
        if self._pos + nbits > self._length:
            raise TruncatedBitstream(
                f"need {nbits} bits at position {self._pos}, stream has {self._length}"
            )
        self._pos += nbits
        return (self._value >> (self._length - self._pos)) & ((1 << nbits) - 1)

    def remaining(self) -> int:
        return self._length - self._pos


def radix_width(M: int, count: int) -> int:
    """ceil(count * log2 M), computed exactly; 0 when M == 1."""
    return (M**count - 1).bit_length()


def radix_pack(digits, M: int) -> int:
    """First digit most significant."""
    value = 0
    for digit in digits:
        value = value * M + int(digit)
    return value


def radix_unpack(value: int, M: int, count: int) -> list[int]:
    if M == 1:
        return [0] * count
    digits = [0] * count
    for i in range(count - 1, -1, -1):
        value, digits[i] = divmod(value, M)
    if value:
        raise BitstreamError("payload exceeds M**count")
    return digits


def write_container(path: str | Path, stream: Bitstream, n: int) -> None:
    Path(path).write_bytes(_HEADER.pack(MAGIC, VERSION, n, stream.bit_length) + stream.data)


def read_container(path: str | Path) -> tuple[Bitstream, int]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedBitstream(f"{path} is shorter than the container header")
    magic, version, n, bit_length = _HEADER.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise BitstreamError(f"{path} is not a version {VERSION} bitstream container")
    data = raw[_HEADER.size :]
    if len(data) < (bit_length + 7) // 8:
        raise TruncatedBitstream(f"{path} holds fewer than {bit_length} bits")
    return Bitstream(data=data[: (bit_length + 7) // 8], bit_length=bit_length), n
