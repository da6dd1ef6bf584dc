from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import status

from visrec.core.exception.base import BaseCustomException

PPM_MAGIC = b"P6"
PPM_MAXVAL = 255


class ImageFormatError(BaseCustomException):
    def __init__(self, reason: str):
        super().__init__(status_code=status.HTTP_400_BAD_REQUEST, code="IMG_FORMAT", detail=f"Malformed PPM: {reason}")


class UnreadableImageError(BaseCustomException):
    def __init__(self, path: str, reason: str):
        super().__init__(
            status_code=status.HTTP_400_BAD_REQUEST, code="IMG_UNREADABLE", detail=f"Cannot read {path}: {reason}"
        )


@dataclass(frozen=True)
class Image:
    """RGB raster, row-major u8 samples."""

    width: int
    height: int
    data: bytes

    def __post_init__(self) -> None:
        if len(self.data) != self.width * self.height * 3:
            raise ImageFormatError(f"expected {self.width * self.height * 3} samples, got {len(self.data)}")

    def to_array(self) -> np.ndarray:
        return np.frombuffer(self.data, dtype=np.uint8).reshape(self.height, self.width, 3)

    @classmethod
    def from_array(cls, pixels: np.ndarray) -> "Image":
        pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ImageFormatError(f"expected an (H, W, 3) array, got shape {pixels.shape}")
        return cls(width=pixels.shape[1], height=pixels.shape[0], data=pixels.tobytes())


def _read_header_tokens(payload: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    n = len(payload)
    while len(tokens) < count:
        while pos < n and payload[pos : pos + 1].isspace():
            pos += 1
        if pos < n and payload[pos : pos + 1] == b"#":
            while pos < n and payload[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not payload[pos : pos + 1].isspace() and payload[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated header")
        tokens.append(payload[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    if pos >= n or not payload[pos : pos + 1].isspace():
        raise ImageFormatError("missing whitespace after header")
    return tokens, pos + 1


def decode_ppm(payload: bytes) -> Image:
    if not payload.startswith(PPM_MAGIC):
        raise ImageFormatError("not a binary PPM (P6)")
    tokens, offset = _read_header_tokens(payload, 4)
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise ImageFormatError("non-numeric header field")
    if width <= 0 or height <= 0:
        raise ImageFormatError(f"invalid size {width}x{height}")
    if maxval != PPM_MAXVAL:
        raise ImageFormatError(f"maxval must be {PPM_MAXVAL}, got {maxval}")

    raster = payload[offset:]
    if len(raster) != width * height * 3:
        raise ImageFormatError(f"expected {width * height * 3} raster bytes, got {len(raster)}")
    return Image(width=width, height=height, data=bytes(raster))


def encode_ppm(image: Image) -> bytes:
    return b"P6\n%d %d\n%d\n" % (image.width, image.height, PPM_MAXVAL) + image.data


def read_ppm(path: str | Path) -> Image:
    try:
        payload = Path(path).read_bytes()
    except OSError as e:
        raise UnreadableImageError(str(path), str(e))
    try:
        return decode_ppm(payload)
    except ImageFormatError as e:
        raise UnreadableImageError(str(path), e.detail)


def write_ppm(path: str | Path, image: Image) -> None:
    Path(path).write_bytes(encode_ppm(image))
