"""Shared binary container helpers.

All project files share one envelope: 4-byte ASCII magic, u32 version,
payload, trailing CRC32 over everything before the checksum. Little-endian
throughout.
"""

from __future__ import annotations

import struct
import zlib

from .errors import FormatError


class Writer:
    def __init__(self, magic, version=1):
        self._buf = bytearray()
        self._buf += magic.encode("ascii")
        self.u32(version)

    def raw(self, b):
        self._buf += b

    def u8(self, v):
        self._buf += struct.pack("<B", v)

    def u32(self, v):
        self._buf += struct.pack("<I", v)

    def u64(self, v):
        self._buf += struct.pack("<Q", v)

    def f64(self, v):
        self._buf += struct.pack("<d", v)

    def array(self, arr):
        """numpy array as little-endian bytes."""
        import numpy as np

        a = np.ascontiguousarray(arr)
        if a.dtype.byteorder == ">":
            a = a.astype(a.dtype.newbyteorder("<"))
        self._buf += a.tobytes()

    def finish(self):
        crc = zlib.crc32(bytes(self._buf)) & 0xFFFFFFFF
        return bytes(self._buf) + struct.pack("<I", crc)

    def write(self, path):
        data = self.finish()
        with open(path, "wb") as fh:
            fh.write(data)
        return data


class Reader:
    def __init__(self, data, magic, path="<bytes>"):
        self.data = data
        self.pos = 0
        self.path = path
        if len(data) < 12:
            raise FormatError(f"{path}: truncated file ({len(data)} bytes)")
        stored = struct.unpack("<I", data[-4:])[0]
        actual = zlib.crc32(data[:-4]) & 0xFFFFFFFF
        if stored != actual:
            raise FormatError(
                f"{path}: CRC32 mismatch at byte offset {len(data) - 4} "
                f"(stored {stored:#010x}, computed {actual:#010x})"
            )
        self.end = len(data) - 4
        got = self._take(4).decode("ascii", errors="replace")
        if got != magic:
            raise FormatError(f"{path}: bad magic {got!r} at byte offset 0, expected {magic!r}")
        self.version = self.u32()

    @classmethod
    def open(cls, path, magic):
        with open(path, "rb") as fh:
            return cls(fh.read(), magic, path=str(path))

    def _take(self, n):
        if self.pos + n > self.end:
            raise FormatError(
                f"{self.path}: truncated payload at byte offset {self.pos} (need {n} bytes)"
            )
        b = self.data[self.pos : self.pos + n]
        self.pos += n
        return b

    def u8(self):
        return struct.unpack("<B", self._take(1))[0]

    def u32(self):
        return struct.unpack("<I", self._take(4))[0]

    def u64(self):
        return struct.unpack("<Q", self._take(8))[0]

    def f64(self):
        return struct.unpack("<d", self._take(8))[0]

    def array(self, dtype, shape):
        import numpy as np

        dt = np.dtype(dtype).newbyteorder("<")
        n = int(np.prod(shape)) if len(shape) else 1
        b = self._take(n * dt.itemsize)
        return np.frombuffer(b, dtype=dt).reshape(shape).astype(np.dtype(dtype))

    def expect_exhausted(self):
        if self.pos != self.end:
            raise FormatError(
                f"{self.path}: {self.end - self.pos} unexpected trailing bytes "
                f"at byte offset {self.pos}"
            )
