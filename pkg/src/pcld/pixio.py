"""Binary PGM I/O and causal neighbor contexts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import PGMError

_WHITESPACE = b" \t\r\n\v\f"


@dataclass(frozen=True, eq=False)
class Image:
    """8-bit grayscale raster.

    ``pixels`` is a ``(height, width)`` uint8 array; ``width``/``height`` are
    derived from it so the two can never disagree.
    """

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image raster must be a non-empty 2-D array, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("pixel values must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def from_list(cls, width: int, height: int, values) -> "Image":
        values = list(values)
        if width < 1 or height < 1:
            raise ValueError("width and height must be positive")
        if len(values) != width * height:
            raise ValueError(f"expected {width * height} pixels, got {len(values)}")
        return cls(np.array(values, dtype=np.int64).reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def flat(self) -> list[int]:
        return self.pixels.ravel().tolist()

    def __getitem__(self, xy: tuple[int, int]) -> int:
        x, y = xy
        return int(self.pixels[y, x])

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __repr__(self):
        return f"Image({self.width}x{self.height})"


class Ctx4(NamedTuple):
    """Left, up, up-left and up-right neighbors normalized to [0, 1]."""

    A: float
    B: float
    C: float
    D: float


def _skip_ws_and_comments(data: bytes, pos: int) -> int:
    n = len(data)
    while pos < n:
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch in _WHITESPACE:
            pos += 1
        else:
            break
    return pos


def _read_int(data: bytes, pos: int, what: str) -> tuple[int, int]:
    pos = _skip_ws_and_comments(data, pos)
    start = pos
    while pos < len(data) and data[pos : pos + 1].isdigit():
        pos += 1
    if pos == start:
        if start >= len(data):
            raise PGMError(f"truncated header: expected {what}", start)
        raise PGMError(f"expected {what}", start)
    return int(data[start:pos]), pos


def read_pgm(data: bytes) -> Image:
    data = bytes(data)
    if data[:2] != b"P5":
        raise PGMError("bad magic, expected binary PGM 'P5'", 0)
    pos = 2
    if pos < len(data) and data[pos : pos + 1] not in _WHITESPACE and data[pos : pos + 1] != b"#":
        raise PGMError("missing whitespace after magic", pos)
    width, pos = _read_int(data, pos, "width")
    height, pos = _read_int(data, pos, "height")
    maxval_at = _skip_ws_and_comments(data, pos)
    maxval, pos = _read_int(data, pos, "maxval")
    if width < 1 or height < 1:
        raise PGMError("width and height must be positive", maxval_at)
    if maxval != 255:
        raise PGMError(f"unsupported maxval {maxval}", maxval_at)
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or data[pos : pos + 1] not in _WHITESPACE:
        raise PGMError("missing whitespace before raster", pos)
    pos += 1
    need = width * height
    raster = data[pos : pos + need]
    if len(raster) < need:
        raise PGMError(f"truncated raster: need {need} bytes, got {len(raster)}", pos + len(raster))
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return Image(pixels.copy())


def write_pgm(img: Image) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


def load_pgm(path) -> Image:
    with open(path, "rb") as fh:
        return read_pgm(fh.read())


def save_pgm(img: Image, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_pgm(img))


def neighbors(pix, x: int, y: int, width: int) -> tuple[float, float, float, float]:
    """Raw (A, B, C, D) neighbor values in pixel units with the border rule applied.

    ``pix`` is indexable as ``pix[y][x]``. At the image origin every neighbor
    is 127.5, the midpoint of the pixel range.
    """
    if y == 0:
        if x == 0:
            return 127.5, 127.5, 127.5, 127.5
        a = pix[0][x - 1]
        return a, a, a, a
    up = pix[y - 1]
    b = up[x]
    if x == 0:
        a = c = b
    else:
        a = pix[y][x - 1]
        c = up[x - 1]
    d = up[x + 1] if x + 1 < width else b
    return a, b, c, d


def context_at(img: Image, x: int, y: int) -> Ctx4:
    if not (0 <= x < img.width and 0 <= y < img.height):
        raise IndexError(f"position ({x}, {y}) outside {img.width}x{img.height} image")
    a, b, c, d = neighbors(img.pixels, x, y, img.width)
    return Ctx4(float(a) / 255.0, float(b) / 255.0, float(c) / 255.0, float(d) / 255.0)


def neighbor_planes(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized :func:`neighbors` for a whole raster, as float64 planes."""
    p = np.asarray(pixels, dtype=np.float64)
    h, w = p.shape
    A = np.empty_like(p)
    B = np.empty_like(p)
    C = np.empty_like(p)
    D = np.empty_like(p)
    if h > 1:
        up = p[:-1]
        B[1:] = up
        A[1:, 1:] = p[1:, :-1]
        A[1:, 0] = up[:, 0]
        C[1:, 1:] = up[:, :-1]
        C[1:, 0] = up[:, 0]
        D[1:, :-1] = up[:, 1:]
        D[1:, -1] = up[:, -1]
    row0 = np.empty(w)
    row0[0] = 127.5
    row0[1:] = p[0, :-1]
    for plane in (A, B, C, D):
        plane[0] = row0
    return A, B, C, D


def contexts(img: Image) -> np.ndarray:
    """All pixel contexts as an ``(n, 4)`` array of normalized (A, B, C, D)."""
    A, B, C, D = neighbor_planes(img.pixels)
    return np.stack([A.ravel(), B.ravel(), C.ravel(), D.ravel()], axis=1) / 255.0
