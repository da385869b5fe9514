"""Frame and clip containers, colour conversion, resampling and PNG I/O.

Planes are 2-D ``float32`` arrays (H, W); frames are 3-D ``float32`` arrays
(H, W, 3) holding RGB values in [0, 1].  Stored sRGB values are used as-is,
no gamma linearisation is applied anywhere.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import cv2
import numpy as np

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class ImageError(ValueError):
    """Raised for unreadable, unwritable or malformed images."""


def as_plane(data) -> np.ndarray:
    plane = np.asarray(data, dtype=np.float32)
    if plane.ndim != 2:
        raise ImageError(f"expected a 2-D plane, got shape {plane.shape}")
    if not np.all(np.isfinite(plane)):
        raise ImageError("plane contains non-finite values")
    return plane


def as_frame(data) -> np.ndarray:
    frame = np.asarray(data, dtype=np.float32)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ImageError(f"expected an (H, W, 3) frame, got shape {frame.shape}")
    if not np.all(np.isfinite(frame)):
        raise ImageError("frame contains non-finite values")
    return frame


def clamp01(frame: np.ndarray) -> np.ndarray:
    return np.clip(frame, 0.0, 1.0).astype(np.float32, copy=False)


@dataclass(frozen=True)
class Clip:
    """Three consecutive frames (t-1, t, t+1); the reference is index 1."""

    prev: np.ndarray
    ref: np.ndarray
    next: np.ndarray

    def __post_init__(self):
        shapes = {f.shape for f in self.frames}
        if len(shapes) != 1:
            raise ImageError(f"clip frames differ in size: {sorted(shapes)}")

    @property
    def frames(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.prev, self.ref, self.next)

    @property
    def shape(self) -> tuple[int, int]:
        return self.ref.shape[:2]


def load_image(path) -> np.ndarray:
    """Read an 8- or 16-bit RGB (or grayscale) PNG as a frame in [0, 1]."""
    path = os.fspath(path)
    data = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if data is None:
        raise ImageError(f"cannot read image: {path}")
    if data.dtype == np.uint8:
        peak = 255.0
    elif data.dtype == np.uint16:
        peak = 65535.0
    else:
        raise ImageError(f"unsupported sample type {data.dtype} in {path}")
    if data.ndim == 2:
        data = np.repeat(data[:, :, None], 3, axis=2)
    elif data.ndim == 3 and data.shape[2] == 3:
        data = data[:, :, ::-1]  # BGR -> RGB
    else:
        raise ImageError(f"unsupported colour type ({data.shape[2]} channels) in {path}")
    return (data.astype(np.float64) / peak).astype(np.float32)


def quantize(frame: np.ndarray) -> np.ndarray:
    """8-bit codes for a frame: round half up of clamp(v, 0, 1) * 255."""
    scaled = np.clip(np.asarray(frame, dtype=np.float64), 0.0, 1.0) * 255.0
    return np.floor(scaled + 0.5).astype(np.uint8)


def save_image(frame: np.ndarray, path) -> None:
    """Write a frame as an 8-bit RGB PNG."""
    frame = as_frame(frame)
    path = os.fspath(path)
    codes = quantize(frame)
    try:
        ok = cv2.imwrite(path, np.ascontiguousarray(codes[:, :, ::-1]))
    except cv2.error as exc:
        raise ImageError(f"cannot write image {path}: {exc}") from exc
    if not ok:
        raise ImageError(f"cannot write image: {path}")


def to_luma(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float32)
    r, g, b = LUMA_WEIGHTS
    luma = r * frame[..., 0] + g * frame[..., 1] + b * frame[..., 2]
    return np.clip(luma, 0.0, 1.0).astype(np.float32)


def _resize_axis(data: np.ndarray, out_len: int, axis: int) -> np.ndarray:
    in_len = data.shape[axis]
    if in_len == out_len:
        return data
    # half-pixel centres: output sample i sits at input coordinate (i + .5) * in/out - .5
    pos = (np.arange(out_len, dtype=np.float64) + 0.5) * (in_len / out_len) - 0.5
    pos = np.clip(pos, 0.0, in_len - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, in_len - 1)
    frac = pos - lo
    shape = [1] * data.ndim
    shape[axis] = out_len
    frac = frac.reshape(shape)
    a = np.take(data, lo, axis=axis)
    b = np.take(data, hi, axis=axis)
    return a * (1.0 - frac) + b * frac


def resize_bilinear(frame: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize with half-pixel centres and replicated borders.

    Works on planes and frames alike.
    """
    if out_w < 1 or out_h < 1:
        raise ImageError(f"target size must be positive, got {out_w}x{out_h}")
    src = np.asarray(frame, dtype=np.float32)
    if src.shape[0] == out_h and src.shape[1] == out_w:
        return src.copy()
    data = src.astype(np.float64)
    data = _resize_axis(data, out_h, 0)
    data = _resize_axis(data, out_w, 1)
    return data.astype(np.float32)


def pad_to_block_multiple(plane: np.ndarray, block: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Edge-replicate pad (right/bottom) to a multiple of ``block``.

    Returns the padded plane and the original ``(height, width)``.
    """
    if block < 1:
        raise ValueError(f"block must be >= 1, got {block}")
    plane = np.asarray(plane)
    h, w = plane.shape[:2]
    ph = -h % block
    pw = -w % block
    if ph == 0 and pw == 0:
        return plane, (h, w)
    pad = [(0, ph), (0, pw)] + [(0, 0)] * (plane.ndim - 2)
    return np.pad(plane, pad, mode="edge"), (h, w)


def crop(plane: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    h, w = size
    return plane[:h, :w]
