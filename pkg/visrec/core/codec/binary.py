import io
import json
import struct
from typing import Any

import numpy as np

U32 = struct.Struct("<I")


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


class TruncatedError(Exception):
    pass


class BinaryWriter:
    """Little-endian container writer: magic, length-prefixed JSON, raw numeric blobs."""

    def __init__(self) -> None:
        self._buf = io.BytesIO()

    def magic(self, magic: bytes) -> "BinaryWriter":
        self._buf.write(magic)
        return self

    def u32(self, value: int) -> "BinaryWriter":
        self._buf.write(U32.pack(value))
        return self

    def json(self, obj: Any) -> "BinaryWriter":
        payload = canonical_json(obj)
        self.u32(len(payload))
        self._buf.write(payload)
        return self

    def f32(self, array: np.ndarray) -> "BinaryWriter":
        self._buf.write(np.ascontiguousarray(array, dtype="<f4").tobytes())
        return self

    def f64(self, array: np.ndarray) -> "BinaryWriter":
        self._buf.write(np.ascontiguousarray(array, dtype="<f8").tobytes())
        return self

    def u32_array(self, array: np.ndarray) -> "BinaryWriter":
        self._buf.write(np.ascontiguousarray(array, dtype="<u4").tobytes())
        return self

    def raw(self, payload: bytes) -> "BinaryWriter":
        self._buf.write(payload)
        return self

    def getvalue(self) -> bytes:
        return self._buf.getvalue()


class BinaryReader:
    def __init__(self, payload: bytes, offset: int = 0) -> None:
        self._payload = payload
        self.offset = offset

    def _take(self, n: int) -> bytes:
        if self.offset + n > len(self._payload):
            raise TruncatedError(f"need {n} bytes at offset {self.offset}, have {len(self._payload) - self.offset}")
        chunk = self._payload[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def expect_magic(self, magic: bytes) -> None:
        found = self._take(len(magic))
        if found != magic:
            raise ValueError(f"bad magic {found!r}, expected {magic!r}")

    def u32(self) -> int:
        return U32.unpack(self._take(U32.size))[0]

    def json(self) -> Any:
        n = self.u32()
        return json.loads(self._take(n).decode("utf-8"))

    def f32(self, count: int) -> np.ndarray:
        return np.frombuffer(self._take(4 * count), dtype="<f4").astype(np.float32)

    def f64(self, count: int) -> np.ndarray:
        return np.frombuffer(self._take(8 * count), dtype="<f8").astype(np.float64)

    def u32_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self._take(4 * count), dtype="<u4").astype(np.int64)

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def at_end(self) -> bool:
        return self.offset == len(self._payload)

    def remaining(self) -> int:
        return len(self._payload) - self.offset
