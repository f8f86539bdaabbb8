"""Deterministic analytic test clips: static, translating, rotating.

Frames are sampled from a closed-form texture, so clips are bit-identical
across runs and motion is exact (the translating clip moves one pixel per
frame horizontally, with fresh content entering at the edge rather than
wrapping).
"""

import numpy as np

from .videoio import Video

KINDS = ("static", "translate", "rotate")

TRANSLATE_PX_PER_FRAME = 1.0
ROTATE_RADIANS_PER_FRAME = np.pi / 360.0


def _texture(y, x):
    """Smooth multi-orientation pattern with a few hard edges, within [0, 255]."""
    v = (
        60.0 * np.sin(2.0 * np.pi * x / 17.0) * np.cos(2.0 * np.pi * y / 11.0)
        + 45.0 * np.cos(2.0 * np.pi * (0.6 * x + 0.8 * y) / 13.0)
        + 30.0 * np.sign(np.sin(2.0 * np.pi * (0.8 * x - 0.6 * y) / 29.0))
    )
    return 127.5 + (118.0 / 135.0) * v


def synthesize_clip(kind, width, height, frame_count):
    """Generate a deterministic grayscale clip of the requested kind."""
    if kind not in KINDS:
        raise ValueError(f"unknown clip kind {kind!r} (choose from {KINDS})")
    yy, xx = np.meshgrid(
        np.arange(height, dtype=np.float64),
        np.arange(width, dtype=np.float64),
        indexing="ij",
    )
    frames = np.empty((frame_count, height, width), dtype=np.float64)
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    for t in range(frame_count):
        if kind == "static":
            frames[t] = _texture(yy, xx) if t == 0 else frames[0]
        elif kind == "translate":
            frames[t] = _texture(yy, xx - TRANSLATE_PX_PER_FRAME * t)
        else:
            angle = ROTATE_RADIANS_PER_FRAME * t
            cos_a, sin_a = np.cos(angle), np.sin(angle)
            ry = cy + (yy - cy) * cos_a - (xx - cx) * sin_a
            rx = cx + (yy - cy) * sin_a + (xx - cx) * cos_a
            frames[t] = _texture(ry, rx)
    return Video(frames, source_format="synth")
