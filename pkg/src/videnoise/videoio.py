"""Video ingestion and emission, noise synthesis, and quality metrics.

Frames are grayscale, held as float64 on the 0-255 pixel scale. Values may
leave [0, 255] internally (e.g. after noise addition); they are clamped and
rounded only when written to an 8-bit container.

Supported containers:

* YUV4MPEG2 (``.y4m``): mono and 4:2:0 colorspaces; only the luminance
  plane is read, and files are written as ``Cmono``.
* PGM sequences: binary ``P5`` with maxval 255, one file per frame, path
  given as a printf-style pattern such as ``frames/%04d.pgm`` (index from 0).
* Raw grayscale: headerless 8-bit frames back to back; dimensions must be
  supplied by the caller.
"""

import os
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, VideoFormatError

PEAK = 255.0


@dataclass
class Video:
    """A grayscale clip: (T, h, w) float64 frames plus source metadata."""

    frames: np.ndarray
    source_format: str = "memory"
    fps: tuple = (25, 1)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3:
            raise ShapeError(f"video frames must be (T, h, w), got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("video contains non-finite pixel values")

    @property
    def frame_count(self):
        return self.frames.shape[0]

    @property
    def height(self):
        return self.frames.shape[1]

    @property
    def width(self):
        return self.frames.shape[2]


def _quantize(frames):
    """Clamp to [0, 255] and round half away from zero to uint8."""
    return np.floor(np.clip(frames, 0.0, PEAK) + 0.5).astype(np.uint8)


def detect_format(path):
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".y4m":
        return "y4m"
    if ext == ".pgm":
        return "pgm"
    return "raw"


# ---------------------------------------------------------------------------
# YUV4MPEG2

_Y4M_MAGIC = b"YUV4MPEG2"


def _y4m_frame_bytes(width, height, colorspace):
    if colorspace == "mono":
        return width * height
    if colorspace.startswith("420"):
        if width % 2 or height % 2:
            raise VideoFormatError(
                f"4:2:0 stream with odd dimensions {width}x{height}"
            )
        return width * height + 2 * (width // 2) * (height // 2)
    raise VideoFormatError(f"unsupported colorspace C{colorspace} (mono/420 only)")


def _read_y4m(path):
    with open(path, "rb") as fh:
        data = fh.read()
    newline = data.find(b"\n")
    if newline < 0 or not data.startswith(_Y4M_MAGIC):
        raise VideoFormatError(f"{path}: not a YUV4MPEG2 stream (byte 0)")
    header = data[:newline].decode("ascii", errors="replace")
    width = height = None
    fps = (25, 1)
    colorspace = "420"
    for token in header.split(" ")[1:]:
        if not token:
            continue
        tag, rest = token[0], token[1:]
        if tag == "W":
            width = int(rest)
        elif tag == "H":
            height = int(rest)
        elif tag == "F":
            num, den = rest.split(":")
            fps = (int(num), int(den))
        elif tag == "C":
            colorspace = rest
    if not width or not height:
        raise VideoFormatError(f"{path}: missing W/H tags in header")
    per_frame = _y4m_frame_bytes(width, height, colorspace)
    ysize = width * height
    frames = []
    offset = newline + 1
    while offset < len(data):
        line_end = data.find(b"\n", offset)
        if line_end < 0 or not data[offset:line_end].startswith(b"FRAME"):
            raise VideoFormatError(f"{path}: expected FRAME marker at byte {offset}")
        start = line_end + 1
        end = start + per_frame
        if end > len(data):
            raise VideoFormatError(
                f"{path}: truncated frame payload at byte {start} "
                f"(need {per_frame} bytes, have {len(data) - start})"
            )
        plane = np.frombuffer(data[start : start + ysize], dtype=np.uint8)
        frames.append(plane.reshape(height, width).astype(np.float64))
        offset = end
    if not frames:
        raise VideoFormatError(f"{path}: stream contains no frames")
    return Video(np.stack(frames), source_format="y4m", fps=fps)


def _write_y4m(video, path):
    fps = video.fps if video.fps[1] else (25, 1)
    header = f"YUV4MPEG2 W{video.width} H{video.height} F{fps[0]}:{fps[1]} Ip A1:1 Cmono\n"
    quantized = _quantize(video.frames)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for frame in quantized:
            fh.write(b"FRAME\n")
            fh.write(frame.tobytes())


# ---------------------------------------------------------------------------
# PGM sequences

_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def _read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0
    tokens = []
    while len(tokens) < 4:
        match = _PGM_TOKEN.match(data, pos)
        if not match:
            raise VideoFormatError(f"{path}: malformed PGM header at byte {pos}")
        tokens.append(match.group(1))
        pos = match.end()
    if tokens[0] != b"P5":
        raise VideoFormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise VideoFormatError(f"{path}: unsupported maxval {maxval} (need 255)")
    start = pos + 1  # single whitespace byte after maxval
    need = width * height
    if len(data) - start < need:
        raise VideoFormatError(f"{path}: truncated pixel payload at byte {start}")
    plane = np.frombuffer(data[start : start + need], dtype=np.uint8)
    return plane.reshape(height, width).astype(np.float64)


def _write_pgm(frame, path):
    quantized = _quantize(frame)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{frame.shape[1]} {frame.shape[0]}\n255\n".encode("ascii"))
        fh.write(quantized.tobytes())


def _read_pgm_sequence(pattern):
    if "%" not in pattern:
        raise VideoFormatError(
            f"{pattern}: PGM sequences need a printf-style pattern (e.g. frame_%04d.pgm)"
        )
    frames = []
    index = 0
    while True:
        candidate = pattern % index
        if not os.path.exists(candidate):
            break
        frames.append(_read_pgm(candidate))
        index += 1
    if not frames:
        raise VideoFormatError(f"{pattern}: no frames found (looked for {pattern % 0})")
    return Video(np.stack(frames), source_format="pgm")


def _write_pgm_sequence(video, pattern):
    if "%" not in pattern:
        raise VideoFormatError(
            f"{pattern}: PGM sequences need a printf-style pattern (e.g. frame_%04d.pgm)"
        )
    directory = os.path.dirname(pattern)
    if directory:
        os.makedirs(directory, exist_ok=True)
    for index, frame in enumerate(video.frames):
        _write_pgm(frame, pattern % index)


# ---------------------------------------------------------------------------
# Raw grayscale

def _read_raw(path, width, height):
    if not width or not height:
        raise VideoFormatError("raw input needs explicit frame dimensions")
    with open(path, "rb") as fh:
        data = fh.read()
    per_frame = width * height
    if not data or len(data) % per_frame:
        raise VideoFormatError(
            f"{path}: size {len(data)} is not a multiple of {width}x{height}"
        )
    count = len(data) // per_frame
    plane = np.frombuffer(data, dtype=np.uint8)
    return Video(
        plane.reshape(count, height, width).astype(np.float64), source_format="raw"
    )


def _write_raw(video, path):
    with open(path, "wb") as fh:
        fh.write(_quantize(video.frames).tobytes())


# ---------------------------------------------------------------------------
# Public API

def read_video(path, fmt=None, width=None, height=None):
    """Load a video; ``fmt`` is inferred from the extension when omitted."""
    fmt = fmt or detect_format(path)
    if fmt == "y4m":
        return _read_y4m(path)
    if fmt == "pgm":
        return _read_pgm_sequence(str(path))
    if fmt == "raw":
        return _read_raw(path, width, height)
    raise VideoFormatError(f"unknown format {fmt!r}")


def write_video(video, path, fmt=None):
    """Write a video with 8-bit clamp and round-half-away-from-zero."""
    fmt = fmt or detect_format(path)
    if fmt == "y4m":
        _write_y4m(video, path)
    elif fmt == "pgm":
        _write_pgm_sequence(video, str(path))
    elif fmt == "raw":
        _write_raw(video, path)
    else:
        raise VideoFormatError(f"unknown format {fmt!r}")


def add_gaussian_noise(video, sigma, seed):
    """Add i.i.d. zero-mean Gaussian noise with standard deviation ``sigma``.

    The generator is fixed (PCG64 with numpy's ziggurat normal sampler) so a
    seed reproduces the same noise field on any build of this package.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    rng = np.random.Generator(np.random.PCG64(seed))
    noisy = video.frames + rng.normal(0.0, sigma, size=video.frames.shape)
    return Video(noisy, source_format=video.source_format, fps=video.fps)


def psnr(reference, test):
    """Peak signal-to-noise ratio in dB against a 255 peak.

    Returns ``(video_db, frame_db_list)``; identical inputs give ``inf``.
    """
    ref = reference.frames if isinstance(reference, Video) else np.asarray(reference)
    tst = test.frames if isinstance(test, Video) else np.asarray(test)
    if ref.shape != tst.shape:
        raise ShapeError(f"shape mismatch {ref.shape} vs {tst.shape}")
    diff = ref - tst
    per_frame_mse = np.mean(diff * diff, axis=(1, 2))
    frame_db = [
        float(np.inf) if mse == 0.0 else float(20.0 * np.log10(PEAK / np.sqrt(mse)))
        for mse in per_frame_mse
    ]
    total_mse = float(np.mean(per_frame_mse))
    video_db = np.inf if total_mse == 0.0 else float(20.0 * np.log10(PEAK / np.sqrt(total_mse)))
    return video_db, frame_db


def _format_db(value):
    return "inf" if np.isinf(value) else f"{value:.6f}"


def write_psnr_csv(path, frame_db, video_db):
    """CSV with one row per frame and a final ``all`` row."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("frame,psnr_db\n")
        for index, value in enumerate(frame_db):
            fh.write(f"{index},{_format_db(value)}\n")
        fh.write(f"all,{_format_db(video_db)}\n")
