"""MSB-first bit packing used by the binary container formats."""

from __future__ import annotations


class BitWriter:
    """Accumulates values MSB-first into a byte string."""

    def __init__(self):
        self._bytes = bytearray()
        self._acc = 0
        self._nbits = 0

    def write(self, value: int, nbits: int) -> None:
        if nbits == 0:
            return
        if value < 0 or value >> nbits:
            raise ValueError(f"value {value} does not fit in {nbits} bits")
        self._acc = (self._acc << nbits) | value
        self._nbits += nbits
        while self._nbits >= 8:
            self._nbits -= 8
            self._bytes.append((self._acc >> self._nbits) & 0xFF)
        self._acc &= (1 << self._nbits) - 1

    def pad_to_byte(self) -> None:
        if self._nbits:
            self._bytes.append((self._acc << (8 - self._nbits)) & 0xFF)
            self._acc = 0
            self._nbits = 0

    def getvalue(self) -> bytes:
        self.pad_to_byte()
        return bytes(self._bytes)


class BitReader:
    """Reads values MSB-first from a byte string."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0      # byte position
        self._bit = 0      # bits already consumed in current byte

    def read(self, nbits: int) -> int:
        value = 0
        remaining = nbits
        while remaining:
            if self._pos >= len(self._data):
                raise ValueError("truncated bitstream")
            avail = 8 - self._bit
            take = min(avail, remaining)
            byte = self._data[self._pos]
            chunk = (byte >> (avail - take)) & ((1 << take) - 1)
            value = (value << take) | chunk
            self._bit += take
            remaining -= take
            if self._bit == 8:
                self._bit = 0
                self._pos += 1
        return value

    def align_to_byte(self) -> None:
        if self._bit:
            self._bit = 0
            self._pos += 1

    def bytes_consumed(self) -> int:
        return self._pos + (1 if self._bit else 0)
