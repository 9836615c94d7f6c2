"""Frame ingestion (Y4M, raw RGB24 pipe, image directory) and color conversions."""
from __future__ import annotations

import io
import os
import sys
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np

from .errors import (
    DimensionMismatch,
    MalformedFrameMarker,
    MalformedHeader,
    ThumbforgeError,
    TruncatedFrame,
    UnsupportedColorspace,
)

Y4M_MAGIC = b"YUV4MPEG2"
LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])
IMAGE_EXTENSIONS = (".ppm", ".pnm", ".png")


class Colorspace(str, Enum):
    C420 = "C420"
    C422 = "C422"
    C444 = "C444"
    RGB24 = "RGB24"


class SourceKind(str, Enum):
    Y4M = "y4m"
    RAW = "raw"
    IMAGEDIR = "imagedir"


@dataclass(frozen=True)
class StreamInfo:
    width: int
    height: int
    fps_num: int
    fps_den: int
    colorspace: Colorspace
    source: SourceKind

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise MalformedHeader(f"non-positive frame size {self.width}x{self.height}")
        if self.fps_num <= 0 or self.fps_den <= 0:
            raise MalformedHeader(f"non-positive frame rate {self.fps_num}:{self.fps_den}")
        object.__setattr__(self, "colorspace", Colorspace(self.colorspace))
        object.__setattr__(self, "source", SourceKind(self.source))

    @property
    def fps(self) -> float:
        return self.fps_num / self.fps_den

    def timestamp(self, index: int) -> float:
        return index * self.fps_den / self.fps_num


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Frame:
    """One decoded frame; ``rgb`` is an immutable H x W x 3 float array in [0, 1]."""

    index: int
    timestamp: float
    rgb: np.ndarray

    def __post_init__(self):
        rgb = np.asarray(self.rgb)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise DimensionMismatch(f"expected HxWx3 array, got shape {rgb.shape}")
        object.__setattr__(self, "rgb", _frozen(rgb))

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def width(self) -> int:
        return self.rgb.shape[1]


@dataclass(frozen=True, eq=False)
class GrayFrame:
    index: int
    gray: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gray", _frozen(self.gray))

    @property
    def shape(self) -> tuple[int, int]:
        return self.gray.shape


@dataclass(frozen=True, eq=False)
class HsvFrame:
    index: int
    h: np.ndarray
    s: np.ndarray
    v: np.ndarray


def make_frame(rgb, index: int = 0, fps: float = 30.0) -> Frame:
    """Convenience constructor for in-memory frames."""
    return Frame(index=index, timestamp=index / fps, rgb=rgb)


def frames_from_arrays(arrays, fps: float = 30.0) -> list[Frame]:
    return [make_frame(a, i, fps) for i, a in enumerate(arrays)]


# ---------------------------------------------------------------- color


def to_gray(frame: Frame) -> GrayFrame:
    return GrayFrame(frame.index, frame.rgb @ LUMA_WEIGHTS)


def rgb_to_hsv(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    safe_v = np.where(v > 0, v, 1.0)
    s = np.where(v > 0, c / safe_v, 0.0)
    safe_c = np.where(c > 0, c, 1.0)
    rc = (v - r) / safe_c
    gc = (v - g) / safe_c
    bc = (v - b) / safe_c
    h = np.where(v == r, bc - gc, np.where(v == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(c > 0, (h / 6.0) % 1.0, 0.0)
    # (x / 6) % 1 can round up to exactly 1.0 for tiny negative x
    h = np.where(h >= 1.0, 0.0, h)
    return h, s, v


def hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    h6 = (np.asarray(h) % 1.0) * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    choices_r = [v, q, p, p, t, v]
    choices_g = [t, v, v, q, p, p]
    choices_b = [p, p, t, v, v, q]
    r = np.choose(i, choices_r)
    g = np.choose(i, choices_g)
    b = np.choose(i, choices_b)
    return np.stack([r, g, b], axis=-1)


def to_hsv(frame: Frame) -> HsvFrame:
    h, s, v = rgb_to_hsv(frame.rgb)
    return HsvFrame(frame.index, h, s, v)


# ---------------------------------------------------------------- Y4M


def _colorspace_from_token(value: str) -> Colorspace:
    if value in ("420", "420jpeg", "420paldv", "420mpeg2"):
        return Colorspace.C420
    if value == "422":
        return Colorspace.C422
    if value == "444":
        return Colorspace.C444
    raise UnsupportedColorspace(f"unsupported Y4M colorspace C{value}")


def parse_y4m_header(stream: BinaryIO) -> StreamInfo:
    line = stream.readline(4096)
    if not line.startswith(Y4M_MAGIC):
        raise MalformedHeader("missing YUV4MPEG2 signature")
    if not line.endswith(b"\n"):
        raise MalformedHeader("unterminated Y4M header")
    tokens = line[len(Y4M_MAGIC):].split()
    width = height = None
    fps = None
    colorspace = Colorspace.C420  # Y4M default when C is absent
    for tok in tokens:
        key, value = chr(tok[0]), tok[1:].decode("ascii", "replace")
        try:
            if key == "W":
                width = int(value)
            elif key == "H":
                height = int(value)
            elif key == "F":
                num, den = value.split(":")
                fps = (int(num), int(den))
            elif key == "C":
                colorspace = _colorspace_from_token(value)
        except ValueError as exc:
            raise MalformedHeader(f"bad header token {tok!r}") from exc
    if width is None or height is None or fps is None:
        missing = [k for k, v in (("W", width), ("H", height), ("F", fps)) if v is None]
        raise MalformedHeader(f"missing header token(s): {', '.join(missing)}")
    return StreamInfo(width, height, fps[0], fps[1], colorspace, SourceKind.Y4M)


def _chroma_shape(info: StreamInfo) -> tuple[int, int]:
    if info.colorspace == Colorspace.C420:
        return (info.height + 1) // 2, (info.width + 1) // 2
    if info.colorspace == Colorspace.C422:
        return info.height, (info.width + 1) // 2
    return info.height, info.width


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    data = stream.read(n)
    if data is None or len(data) < n:
        got = 0 if data is None else len(data)
        raise TruncatedFrame(f"expected {n} bytes, got {got}")
    return data


def yuv_to_rgb(y: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """BT.601 full-range; all planes already on the 0..255 scale."""
    cb = u - 128.0
    cr = v - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return np.clip(np.stack([r, g, b], axis=-1) / 255.0, 0.0, 1.0)


def rgb_to_yuv(rgb: np.ndarray) -> np.ndarray:
    """Inverse of :func:`yuv_to_rgb`; returns uint8 Y, U, V planes stacked last."""
    x = np.asarray(rgb, dtype=np.float64) * 255.0
    r, g, b = x[..., 0], x[..., 1], x[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    u = 128.0 + (b - y) / 1.772
    v = 128.0 + (r - y) / 1.402
    return np.clip(np.rint(np.stack([y, u, v], axis=-1)), 0, 255).astype(np.uint8)


def _upsample(plane: np.ndarray, height: int, width: int) -> np.ndarray:
    fy = -(-height // plane.shape[0])
    fx = -(-width // plane.shape[1])
    return np.repeat(np.repeat(plane, fy, axis=0), fx, axis=1)[:height, :width]


def next_frame(stream: BinaryIO, info: StreamInfo, index: int) -> Frame | None:
    """Decode the next Y4M frame, or return None at a clean end of stream."""
    marker = stream.readline(4096)
    if not marker:
        return None
    if not marker.startswith(b"FRAME") or not marker.endswith(b"\n"):
        raise MalformedFrameMarker(f"bad frame marker {marker[:16]!r}")
    w, h = info.width, info.height
    ch, cw = _chroma_shape(info)
    y = np.frombuffer(_read_exact(stream, w * h), np.uint8).reshape(h, w)
    u = np.frombuffer(_read_exact(stream, ch * cw), np.uint8).reshape(ch, cw)
    v = np.frombuffer(_read_exact(stream, ch * cw), np.uint8).reshape(ch, cw)
    u = _upsample(u, h, w)
    v = _upsample(v, h, w)
    rgb = yuv_to_rgb(y.astype(np.float64), u.astype(np.float64), v.astype(np.float64))
    return Frame(index, info.timestamp(index), rgb)


def iter_y4m(stream: BinaryIO, info: StreamInfo) -> Iterator[Frame]:
    index = 0
    while True:
        frame = next_frame(stream, info, index)
        if frame is None:
            return
        yield frame
        index += 1


def write_y4m(stream: BinaryIO, frames, fps: tuple[int, int] = (30, 1)) -> None:
    """Write frames as a C444 Y4M stream (used for fixtures and round-trips)."""
    frames = list(frames)
    if not frames:
        raise ThumbforgeError("cannot write an empty Y4M stream")
    first = frames[0].rgb if isinstance(frames[0], Frame) else np.asarray(frames[0])
    h, w = first.shape[:2]
    stream.write(f"YUV4MPEG2 W{w} H{h} F{fps[0]}:{fps[1]} Ip A1:1 C444\n".encode("ascii"))
    for f in frames:
        rgb = f.rgb if isinstance(f, Frame) else np.asarray(f)
        if rgb.shape[:2] != (h, w):
            raise DimensionMismatch("all frames in a stream must share one size")
        yuv = rgb_to_yuv(rgb)
        stream.write(b"FRAME\n")
        for c in range(3):
            stream.write(np.ascontiguousarray(yuv[..., c]).tobytes())


# ---------------------------------------------------------------- raw / images


def iter_raw(stream: BinaryIO, info: StreamInfo) -> Iterator[Frame]:
    size = info.width * info.height * 3
    index = 0
    while True:
        data = stream.read(size)
        if not data:
            return
        if len(data) < size:
            raise TruncatedFrame(f"expected {size} bytes, got {len(data)}")
        rgb = np.frombuffer(data, np.uint8).reshape(info.height, info.width, 3) / 255.0
        yield Frame(index, info.timestamp(index), rgb)
        index += 1


def _ppm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    tokens: list[int] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ThumbforgeError("truncated PPM header")
        tokens.append(int(data[start:pos]))
    return tokens, pos + 1


def read_ppm(path: str | os.PathLike) -> np.ndarray:
    """Read a binary P6 (or P5 grayscale) image as an H x W x 3 float array."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P6", b"P5"):
        raise ThumbforgeError(f"{path}: not a binary PPM/PGM file")
    try:
        (w, h, maxval), offset = _ppm_tokens(data[2:], 3)
    except ValueError as exc:
        raise ThumbforgeError(f"{path}: malformed PPM header") from exc
    offset += 2
    if not 0 < maxval < 256:
        raise ThumbforgeError(f"{path}: only 8-bit PPM is supported")
    channels = 3 if magic == b"P6" else 1
    n = w * h * channels
    if len(data) - offset < n:
        raise TruncatedFrame(f"{path}: pixel data truncated")
    px = np.frombuffer(data, np.uint8, count=n, offset=offset).reshape(h, w, channels)
    if channels == 1:
        px = np.repeat(px, 3, axis=2)
    return px / float(maxval)


def to_uint8(rgb: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(rgb) * 255.0), 0, 255).astype(np.uint8)


def write_ppm(path: str | os.PathLike, rgb: np.ndarray) -> None:
    px = to_uint8(rgb)
    h, w = px.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(px.tobytes())


def write_image(path: str | os.PathLike, rgb: np.ndarray) -> None:
    if str(path).lower().endswith(".png"):
        try:
            from PIL import Image
        except ImportError as exc:  # pragma: no cover - Pillow is optional
            raise ThumbforgeError("PNG output requires Pillow") from exc
        Image.fromarray(to_uint8(rgb), "RGB").save(path)
    else:
        write_ppm(path, rgb)


def read_image(path: str | os.PathLike) -> np.ndarray:
    if str(path).lower().endswith(".png"):
        try:
            from PIL import Image
        except ImportError as exc:  # pragma: no cover - Pillow is optional
            raise ThumbforgeError("PNG input requires Pillow") from exc
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return read_ppm(path)


def list_image_dir(path: str | os.PathLike) -> list[Path]:
    return sorted(
        (p for p in Path(path).iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS),
        key=lambda p: p.name,
    )


def iter_image_dir(files: list[Path], info: StreamInfo) -> Iterator[Frame]:
    for index, p in enumerate(files):
        rgb = read_image(p)
        if rgb.shape[:2] != (info.height, info.width):
            raise DimensionMismatch(f"{p.name}: size {rgb.shape[1]}x{rgb.shape[0]} differs from first image")
        yield Frame(index, info.timestamp(index), rgb)


# ---------------------------------------------------------------- opening sources


def _parse_fps(fps) -> tuple[int, int]:
    if isinstance(fps, tuple):
        return int(fps[0]), int(fps[1])
    if isinstance(fps, str) and ":" in fps:
        num, den = fps.split(":")
        return int(num), int(den)
    frac = Fraction(str(fps)).limit_denominator(1001)
    return frac.numerator, frac.denominator


def guess_kind(path: str | os.PathLike) -> SourceKind:
    p = Path(path)
    if p.is_dir():
        return SourceKind.IMAGEDIR
    if p.suffix.lower() == ".y4m":
        return SourceKind.Y4M
    return SourceKind.RAW


class VideoSource:
    """Sequential single-reader access to one video.

    ``kind`` defaults to a guess from the path; raw sources need width, height and fps.
    """

    def __init__(self, path, kind=None, width=None, height=None, fps=None):
        self.path = Path(path) if path != "-" else path
        self.kind = SourceKind(kind) if kind else guess_kind(path)
        self._width, self._height, self._fps = width, height, fps
        self.info = self._probe()

    def _probe(self) -> StreamInfo:
        if self.kind == SourceKind.Y4M:
            if self.path == "-":
                raise ThumbforgeError("Y4M input from a pipe is not supported; pass a file path")
            with open(self.path, "rb") as fh:
                return parse_y4m_header(fh)
        if self.kind == SourceKind.RAW:
            if not (self._width and self._height and self._fps):
                raise ThumbforgeError("raw RGB input requires --width, --height and --fps")
            num, den = _parse_fps(self._fps)
            return StreamInfo(int(self._width), int(self._height), num, den, Colorspace.RGB24, SourceKind.RAW)
        files = list_image_dir(self.path)
        if not files:
            raise ThumbforgeError(f"{self.path}: no PPM/PNG images found")
        h, w = read_image(files[0]).shape[:2]
        num, den = _parse_fps(self._fps or 30)
        self._files = files
        return StreamInfo(w, h, num, den, Colorspace.RGB24, SourceKind.IMAGEDIR)

    def __iter__(self) -> Iterator[Frame]:
        if self.kind == SourceKind.IMAGEDIR:
            yield from iter_image_dir(self._files, self.info)
            return
        if self.path == "-":
            stream = sys.stdin.buffer
            if self.kind == SourceKind.Y4M:
                yield from iter_y4m(stream, parse_y4m_header(stream))
            else:
                yield from iter_raw(stream, self.info)
            return
        with open(self.path, "rb") as fh:
            if self.kind == SourceKind.Y4M:
                info = parse_y4m_header(fh)
                yield from iter_y4m(fh, info)
            else:
                yield from iter_raw(fh, self.info)


def read_y4m_bytes(data: bytes) -> tuple[StreamInfo, list[Frame]]:
    stream = io.BytesIO(data)
    info = parse_y4m_header(stream)
    return info, list(iter_y4m(stream, info))


def load_video(path, kind=None, width=None, height=None, fps=None) -> tuple[StreamInfo, list[Frame]]:
    src = VideoSource(path, kind, width, height, fps)
    return src.info, list(src)
