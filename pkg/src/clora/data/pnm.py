"""Binary PPM (P6) / PGM (P5) reading and writing, 8-bit only."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import HeaderError, MagicError, PairingError, TruncatedError

IGNORE = 255


@dataclass
class SegmentationSample:
    image: np.ndarray   # [H, W, 3] uint8
    labels: np.ndarray  # [H, W] uint8, 255 = ignore


def _header(buf: bytes, path) -> tuple[bytes, int, int, int, int]:
    """Parse magic, width, height, maxval; return them and the payload offset."""
    tokens = []
    pos = 0
    n = len(buf)
    while len(tokens) < 4:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise TruncatedError(f"{path}: header ends after {len(tokens)} fields")
        tokens.append(buf[start:pos])
        if len(tokens) == 1 and tokens[0] not in (b"P5", b"P6"):
            raise MagicError(f"{path}: unsupported magic {tokens[0][:8]!r}")
    if pos >= n or not buf[pos:pos + 1].isspace():
        raise TruncatedError(f"{path}: missing whitespace after header")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise HeaderError(f"{path}: non-integer header field in {tokens[1:]}") from None
    if width <= 0 or height <= 0:
        raise HeaderError(f"{path}: bad dimensions {width}x{height}")
    return tokens[0], width, height, maxval, pos + 1


def read_pnm(path, expect: bytes) -> np.ndarray:
    buf = Path(path).read_bytes()
    magic, width, height, maxval, off = _header(buf, path)
    if magic != expect:
        raise MagicError(f"{path}: expected {expect.decode()}, found {magic.decode()}")
    if maxval != 255:
        raise HeaderError(f"{path}: maxval must be 255, got {maxval}")
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    payload = buf[off:off + need]
    if len(payload) < need:
        raise TruncatedError(f"{path}: payload has {len(payload)} of {need} bytes")
    arr = np.frombuffer(payload, dtype=np.uint8)
    return arr.reshape(height, width, 3) if channels == 3 else arr.reshape(height, width)


def read_ppm(path) -> np.ndarray:
    return read_pnm(path, b"P6")


def read_pgm(path) -> np.ndarray:
    return read_pnm(path, b"P5")


def write_ppm(path, image: np.ndarray) -> None:
    image = np.ascontiguousarray(image, dtype=np.uint8)
    h, w, c = image.shape
    if c != 3:
        raise ValueError(f"PPM needs 3 channels, got {c}")
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + image.tobytes())


def write_pgm(path, labels: np.ndarray) -> None:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    h, w = labels.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + labels.tobytes())


def load_sample(image_path, label_path) -> SegmentationSample:
    image = read_ppm(image_path)
    labels = read_pgm(label_path)
    if image.shape[:2] != labels.shape:
        raise PairingError(f"image {image_path} is {image.shape[:2]} but labels {label_path} are {labels.shape}")
    return SegmentationSample(image, labels)
