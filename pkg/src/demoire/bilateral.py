"""Bilateral grid of per-cell affine colour transforms.

The grid spans (x, y, guidance intensity).  Every cell stores a per-channel
scale and bias; slicing a guidance map looks up each pixel's cell, and the
fused scale/bias of the three temporal slices is applied to the
intermediate frame.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .image import as_frame, clamp01, to_luma

MAGIC = b"BGRD"
DEFAULT_DIMS = (16, 16, 16)
DEFAULT_RIDGE = 1e-3
ALLOWED_DIMS = (8, 16, 32)


class GridFileError(ValueError):
    pass


@dataclass(frozen=True)
class BilateralGrid:
    """cells has shape (gx, gy, gz, 6): scale R, G, B then bias R, G, B."""

    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.float32)
        if cells.ndim != 4 or cells.shape[3] != 6:
            raise ValueError(f"grid cells must be (gx, gy, gz, 6), got {cells.shape}")
        for d in cells.shape[:3]:
            if d not in ALLOWED_DIMS:
                raise ValueError(f"grid dims must be powers of two in [8, 32], got {cells.shape[:3]}")
        if not np.all(np.isfinite(cells)):
            raise ValueError("grid contains non-finite entries")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.cells.shape[:3])

    @property
    def scale(self) -> np.ndarray:
        return self.cells[..., :3]

    @property
    def bias(self) -> np.ndarray:
        return self.cells[..., 3:]

    @classmethod
    def identity(cls, dims=DEFAULT_DIMS) -> "BilateralGrid":
        return cls.constant(1.0, 0.0, dims)

    @classmethod
    def constant(cls, scale, bias, dims=DEFAULT_DIMS) -> "BilateralGrid":
        cells = np.empty(tuple(dims) + (6,), dtype=np.float32)
        cells[..., :3] = scale
        cells[..., 3:] = bias
        return cls(cells)

    def to_bytes(self) -> bytes:
        header = MAGIC + struct.pack("<3I", *self.dims)
        return header + np.ascontiguousarray(self.cells, dtype="<f4").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "BilateralGrid":
        if len(data) < 16 or data[:4] != MAGIC:
            raise GridFileError("not a bilateral grid file (bad magic)")
        dims = struct.unpack("<3I", data[4:16])
        expected = 16 + int(np.prod(dims)) * 6 * 4
        if len(data) != expected:
            raise GridFileError(f"grid file has {len(data)} bytes, expected {expected} for dims {dims}")
        cells = np.frombuffer(data, dtype="<f4", offset=16).reshape(tuple(dims) + (6,))
        return cls(cells.astype(np.float32))

    def save(self, path) -> None:
        with open(os.fspath(path), "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "BilateralGrid":
        with open(os.fspath(path), "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass(frozen=True)
class SlicedAffine:
    scale: np.ndarray  # (H, W, 3)
    bias: np.ndarray  # (H, W, 3)


def guidance_map(frame) -> np.ndarray:
    return np.clip(to_luma(as_frame(frame)), 0.0, 1.0)


def cell_indices(shape, guidance, dims) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nearest-cell indices (ix, iy, iz) per pixel: floor of the normalised coordinate, clamped."""
    h, w = shape
    gx, gy, gz = dims
    g = np.asarray(guidance, dtype=np.float64)
    ix = np.clip(np.floor(np.arange(w, dtype=np.float64) / w * gx), 0, gx - 1).astype(np.intp)
    iy = np.clip(np.floor(np.arange(h, dtype=np.float64) / h * gy), 0, gy - 1).astype(np.intp)
    iz = np.clip(np.floor(g * gz), 0, gz - 1).astype(np.intp)
    ix, iy = np.broadcast_to(ix[None, :], (h, w)), np.broadcast_to(iy[:, None], (h, w))
    return ix, iy, iz


def _lerp_axis(coord: np.ndarray, n: int):
    # cell i is centred at (i + 0.5) / n; clamp beyond the outer centres
    u = np.clip(coord * n - 0.5, 0.0, n - 1)
    lo = np.floor(u).astype(np.intp)
    hi = np.minimum(lo + 1, n - 1)
    return lo, hi, u - lo


def slice_grid(grid: BilateralGrid, guidance, interpolation: str = "nearest") -> SlicedAffine:
    guidance = np.asarray(guidance, dtype=np.float64)
    h, w = guidance.shape
    if interpolation == "nearest":
        ix, iy, iz = cell_indices((h, w), guidance, grid.dims)
        cells = grid.cells[ix, iy, iz].astype(np.float64)
    elif interpolation == "trilinear":
        gx, gy, gz = grid.dims
        x0, x1, fx = _lerp_axis((np.arange(w) + 0.5) / w, gx)
        y0, y1, fy = _lerp_axis((np.arange(h) + 0.5) / h, gy)
        z0, z1, fz = _lerp_axis(guidance, gz)
        x0, x1, fx = (np.broadcast_to(a[None, :], (h, w)) for a in (x0, x1, fx))
        y0, y1, fy = (np.broadcast_to(a[:, None], (h, w)) for a in (y0, y1, fy))
        c = grid.cells.astype(np.float64)
        cells = np.zeros((h, w, 6))
        for xi, wx in ((x0, 1 - fx), (x1, fx)):
            for yi, wy in ((y0, 1 - fy), (y1, fy)):
                for zi, wz in ((z0, 1 - fz), (z1, fz)):
                    cells += (wx * wy * wz)[..., None] * c[xi, yi, zi]
    else:
        raise ValueError(f"unknown interpolation {interpolation!r}")
    return SlicedAffine(cells[..., :3], cells[..., 3:])


def fit_grid(source, target, guidance, ridge: float = DEFAULT_RIDGE, dims=DEFAULT_DIMS) -> BilateralGrid:
    """Per-cell ridge-regularised least squares of target ~ scale * source + bias.

    The penalty ``ridge * ((scale - 1)^2 + bias^2)`` pulls sparse cells to
    identity; cells without pixels are exactly (1, 0).
    """
    src = np.asarray(source, dtype=np.float64)
    tgt = np.asarray(target, dtype=np.float64)
    g = np.asarray(guidance, dtype=np.float64)
    if src.shape != tgt.shape or src.shape[:2] != g.shape or src.ndim != 3:
        raise ValueError(f"source {src.shape}, target {tgt.shape} and guidance {g.shape} must agree")
    if ridge < 0:
        raise ValueError(f"ridge must be >= 0, got {ridge}")
    if not (np.all(np.isfinite(src)) and np.all(np.isfinite(tgt)) and np.all(np.isfinite(g))):
        raise ValueError("fit_grid inputs must be finite")
    dims = tuple(dims)
    ix, iy, iz = cell_indices(g.shape, g, dims)
    flat = np.ravel_multi_index((ix.ravel(), iy.ravel(), iz.ravel()), dims)
    ncell = int(np.prod(dims))

    n = np.bincount(flat, minlength=ncell).astype(np.float64)
    cells = np.empty((ncell, 6))
    for c in range(3):
        s, t = src[..., c].ravel(), tgt[..., c].ravel()
        ss = np.bincount(flat, s * s, ncell)
        st = np.bincount(flat, s * t, ncell)
        s1 = np.bincount(flat, s, ncell)
        t1 = np.bincount(flat, t, ncell)
        # normal equations [[ss+r, s1], [s1, n+r]] [w, b] = [st+r, t1]
        a, b, d = ss + ridge, s1, n + ridge
        ra, rb = st + ridge, t1
        det = a * d - b * b
        ok = np.abs(det) > 1e-12 * np.maximum(a * d, 1e-300)
        w = np.ones(ncell)
        bias = np.zeros(ncell)
        w[ok] = (ra[ok] * d[ok] - b[ok] * rb[ok]) / det[ok]
        bias[ok] = (a[ok] * rb[ok] - b[ok] * ra[ok]) / det[ok]
        # singular systems only occur at ridge 0: minimum-norm solution
        for k in np.flatnonzero(~ok & (n > 0)):
            sol = np.linalg.pinv(np.array([[a[k], b[k]], [b[k], d[k]]])) @ np.array([ra[k], rb[k]])
            w[k], bias[k] = sol
        empty = n == 0
        w[empty], bias[empty] = 1.0, 0.0
        cells[:, c] = w
        cells[:, 3 + c] = bias
    return BilateralGrid(cells.reshape(dims + (6,)))


def apply_affine(intermediate, sliced) -> np.ndarray:
    """clamp(mean(W) * I + mean(B), 0, 1) over the temporal slices."""
    frame = as_frame(intermediate).astype(np.float64)
    sliced = list(sliced)
    if not sliced:
        raise ValueError("apply_affine needs at least one slice")
    for s in sliced:
        if s.scale.shape != frame.shape or s.bias.shape != frame.shape:
            raise ValueError(f"slice {s.scale.shape} does not match frame {frame.shape}")
    w = np.mean([s.scale for s in sliced], axis=0)
    b = np.mean([s.bias for s in sliced], axis=0)
    return clamp01((w * frame + b).astype(np.float32))


def tdr(aligned, grid: BilateralGrid | None, interpolation: str = "nearest", intermediate=None) -> np.ndarray:
    """Tone and detail refinement of the reference frame of an aligned clip.

    ``intermediate`` defaults to the per-pixel mean of the aligned frames.
    Guidance maps come from each aligned frame.
    """
    if grid is None:
        raise ValueError("tdr needs a bilateral grid (fit or loaded)")
    frames = [as_frame(f) for f in aligned.frames]
    if intermediate is None:
        intermediate = np.mean([f.astype(np.float64) for f in frames], axis=0).astype(np.float32)
    sliced = [slice_grid(grid, guidance_map(f), interpolation) for f in frames]
    return apply_affine(intermediate, sliced)
