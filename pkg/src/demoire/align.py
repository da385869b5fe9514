"""Coarse-to-fine translational alignment by phase correlation.

Shifts are displacements of the moving frame relative to the reference:
``mov(x) ~ ref(x - d)``.  ``warp(mov, field)`` samples ``mov(x + d)`` and
therefore brings the moving frame back onto the reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .image import to_luma

MIN_CORRELATION_SIZE = 16
CONFIDENCE_THRESHOLD = 0.1
DEFAULT_LEVELS = 3
DEFAULT_TILE_SIZE = 64
DEFAULT_SEARCH_RADIUS = 8
DEFAULT_BAND = 0.2
ALIGN_BORDER = 8


class PyramidTooDeep(ValueError):
    pass


@dataclass(frozen=True)
class Shift:
    dx: float
    dy: float
    confidence: float = 1.0
    low_confidence: bool = False


def _parabolic_offset(cm: float, c0: float, cp: float) -> float:
    denom = cm - 2.0 * c0 + cp
    if denom >= 0.0:
        return 0.0
    off = 0.5 * (cm - cp) / denom
    # below the correlation noise floor: keep exact integer peaks exact
    if abs(off) < 1e-6:
        return 0.0
    return float(np.clip(off, -0.5, 0.5))


def _signed(index: int, n: int) -> int:
    return index - n if index > n // 2 else index


def _band_mask(shape, band: float | None) -> np.ndarray | None:
    if band is None:
        return None
    fy = np.fft.fftfreq(shape[0])[:, None]
    fx = np.fft.fftfreq(shape[1])[None, :]
    return (fx * fx + fy * fy) <= band * band


def correlation_surface(ref, mov, window: bool = False, band: float | None = None) -> np.ndarray | None:
    """Normalised cross-power correlation; the peak sits at the displacement of mov.

    ``band`` keeps only radial frequencies up to that many cycles/pixel; the
    surface is rescaled so a perfect match still peaks at 1.
    """
    a = np.asarray(ref, dtype=np.float64)
    b = np.asarray(mov, dtype=np.float64)
    if a.std() < 1e-9 or b.std() < 1e-9:
        return None
    if window:
        win = np.outer(np.hanning(a.shape[0] + 2)[1:-1], np.hanning(a.shape[1] + 2)[1:-1])
        a = (a - a.mean()) * win
        b = (b - b.mean()) * win
    cross = np.fft.fft2(b) * np.conj(np.fft.fft2(a))
    mag = np.abs(cross)
    floor = 1e-12 * mag.max()
    cross = np.where(mag > floor, cross / np.maximum(mag, floor), 0.0)
    keep = _band_mask(a.shape, band)
    if keep is None:
        return np.fft.ifft2(cross).real
    return np.fft.ifft2(np.where(keep, cross, 0.0)).real * (keep.size / keep.sum())


def _peak(surface: np.ndarray, center=None, radius: float | None = None) -> Shift:
    h, w = surface.shape
    if center is None or radius is None:
        iy, ix = np.unravel_index(int(np.argmax(surface)), surface.shape)
    else:
        cx, cy = int(round(center[0])), int(round(center[1]))
        r = int(math.ceil(radius))
        best, iy, ix = -np.inf, 0, 0
        for sy in range(cy - r, cy + r + 1):
            for sx in range(cx - r, cx + r + 1):
                v = surface[sy % h, sx % w]
                if v > best:
                    best, iy, ix = v, sy % h, sx % w
    c0 = surface[iy, ix]
    ox = _parabolic_offset(surface[iy, (ix - 1) % w], c0, surface[iy, (ix + 1) % w])
    oy = _parabolic_offset(surface[(iy - 1) % h, ix], c0, surface[(iy + 1) % h, ix])
    dx = _signed(ix, w) + ox
    dy = _signed(iy, h) + oy
    if center is not None:
        # unwrap to the copy of the peak nearest the search centre
        dx += w * round((center[0] - dx) / w)
        dy += h * round((center[1] - dy) / h)
    conf = float(c0)
    return Shift(float(dx), float(dy), conf, conf < CONFIDENCE_THRESHOLD)


def phase_correlate(ref, mov, window: bool = False, center=None, radius=None, band=None) -> Shift:
    """Global translation of ``mov`` relative to ``ref`` with parabolic subpixel refinement.

    ``center``/``radius`` restrict the peak search to a square around a
    predicted (dx, dy); ``band`` low-passes the cross-power spectrum, which
    keeps frame-fixed high-frequency structure (block seams, residual
    moiré) from voting for a zero shift.  Constant inputs give a zero shift flagged as low
    confidence.
    """
    ref = np.asarray(ref)
    mov = np.asarray(mov)
    if ref.shape != mov.shape:
        raise ValueError(f"planes differ in size: {ref.shape} vs {mov.shape}")
    if min(ref.shape) < MIN_CORRELATION_SIZE:
        raise ValueError(f"phase correlation needs at least {MIN_CORRELATION_SIZE}x{MIN_CORRELATION_SIZE}, got {ref.shape}")
    surface = correlation_surface(ref, mov, window, band)
    if surface is None:
        return Shift(0.0, 0.0, 0.0, True)
    return _peak(surface, center, radius)


@dataclass(frozen=True)
class AlignmentField:
    tile_size: int
    shape: tuple[int, int]  # frame (height, width)
    shifts: np.ndarray  # (tiles_y, tiles_x, 2) holding (dx, dy)
    confidence: np.ndarray | None = None
    global_shift: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        gy, gx = self.grid_shape(self.shape, self.tile_size)
        shifts = np.asarray(self.shifts, dtype=np.float64)
        if shifts.shape != (gy, gx, 2):
            raise ValueError(f"shift grid {shifts.shape} does not match {(gy, gx, 2)}")
        if not np.all(np.isfinite(shifts)):
            raise ValueError("alignment shifts must be finite")
        object.__setattr__(self, "shifts", shifts)
        conf = np.ones((gy, gx)) if self.confidence is None else np.asarray(self.confidence, dtype=np.float64)
        object.__setattr__(self, "confidence", conf)

    @staticmethod
    def grid_shape(shape, tile_size: int) -> tuple[int, int]:
        return (-(-shape[0] // tile_size), -(-shape[1] // tile_size))

    @classmethod
    def constant(cls, shape, dx: float = 0.0, dy: float = 0.0, tile_size: int = DEFAULT_TILE_SIZE):
        shape = tuple(shape[:2])
        gy, gx = cls.grid_shape(shape, tile_size)
        shifts = np.empty((gy, gx, 2))
        shifts[..., 0] = dx
        shifts[..., 1] = dy
        return cls(tile_size, shape, shifts, global_shift=(dx, dy))

    @classmethod
    def zeros(cls, shape, tile_size: int = DEFAULT_TILE_SIZE):
        return cls.constant(shape, 0.0, 0.0, tile_size)

    def dump(self) -> str:
        rows = ["tile_x tile_y dx dy confidence"]
        gy, gx = self.shifts.shape[:2]
        for ty in range(gy):
            for tx in range(gx):
                dx, dy = self.shifts[ty, tx]
                rows.append(f"{tx} {ty} {dx:.6f} {dy:.6f} {self.confidence[ty, tx]:.6f}")
        return "\n".join(rows) + "\n"

    def _tile_centres(self, axis: int) -> np.ndarray:
        n, t = self.shape[axis], self.tile_size
        starts = np.arange(0, n, t)
        ends = np.minimum(starts + t, n)
        return (starts + ends - 1) / 2.0

    def per_pixel(self) -> tuple[np.ndarray, np.ndarray]:
        """Bilinear interpolation of the tile shifts anchored at tile centres."""
        h, w = self.shape
        cy, cx = self._tile_centres(0), self._tile_centres(1)
        ys, xs = np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64)
        out = []
        for k in range(2):
            grid = self.shifts[..., k]
            cols = np.stack([np.interp(ys, cy, grid[:, j]) for j in range(grid.shape[1])], axis=1)
            out.append(np.stack([np.interp(xs, cx, cols[i]) for i in range(h)], axis=0))
        return out[0], out[1]


def _sample(plane: np.ndarray, yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
    return ndimage.map_coordinates(plane, [yy, xx], order=1, mode="nearest")


def warp(frame, field: AlignmentField) -> np.ndarray:
    """Resample ``frame`` at ``x + d(x)``: bilinear, border replicate."""
    data = np.asarray(frame, dtype=np.float64)
    if tuple(data.shape[:2]) != tuple(field.shape):
        raise ValueError(f"field is for {field.shape}, frame is {data.shape[:2]}")
    if not np.any(field.shifts):
        return np.asarray(frame, dtype=np.float32).copy()
    h, w = field.shape
    dx, dy = field.per_pixel()
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    yy, xx = yy + dy, xx + dx
    if data.ndim == 2:
        return _sample(data, yy, xx).astype(np.float32)
    return np.stack([_sample(data[..., c], yy, xx) for c in range(data.shape[2])], axis=-1).astype(np.float32)


def downsample2(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape[0] // 2 * 2, plane.shape[1] // 2 * 2
    p = plane[:h, :w]
    return 0.25 * (p[0::2, 0::2] + p[1::2, 0::2] + p[0::2, 1::2] + p[1::2, 1::2])


def luma_pyramid(frame, levels: int) -> list[np.ndarray]:
    plane = np.asarray(frame, dtype=np.float64)
    if plane.ndim == 3:
        plane = to_luma(plane).astype(np.float64)
    pyr = [plane]
    for _ in range(levels - 1):
        pyr.append(downsample2(pyr[-1]))
    return pyr


def _tile_residual(ref_tile: np.ndarray, mov: np.ndarray, ys: slice, xs: slice, dx: float, dy: float) -> float:
    yy, xx = np.mgrid[ys, xs].astype(np.float64)
    return float(np.mean(np.abs(_sample(mov, yy + dy, xx + dx) - ref_tile)))


def pyramid_align(ref, mov, levels: int = DEFAULT_LEVELS, tile_size: int = DEFAULT_TILE_SIZE,
                  search_radius: float = DEFAULT_SEARCH_RADIUS, band: float | None = DEFAULT_BAND) -> AlignmentField:
    """Global shift from a luma pyramid, then per-tile refinement at full resolution.

    Tiles whose correlation is weak, whose estimate would leave the search
    window, or whose own shift matches worse than the global one keep the
    global shift.
    """
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    if tile_size < MIN_CORRELATION_SIZE:
        raise ValueError(f"tile_size must be >= {MIN_CORRELATION_SIZE}, got {tile_size}")
    ref_pyr = luma_pyramid(ref, levels)
    mov_pyr = luma_pyramid(mov, levels)
    if tuple(ref_pyr[0].shape) != tuple(mov_pyr[0].shape):
        raise ValueError(f"frames differ in size: {ref_pyr[0].shape} vs {mov_pyr[0].shape}")
    if min(ref_pyr[-1].shape) < MIN_CORRELATION_SIZE:
        raise PyramidTooDeep(
            f"pyramid too deep: level {levels - 1} is {ref_pyr[-1].shape}, "
            f"below the {MIN_CORRELATION_SIZE}px correlation minimum"
        )

    est = phase_correlate(ref_pyr[-1], mov_pyr[-1], band=band)
    gx, gy = est.dx, est.dy
    for lvl in range(levels - 2, -1, -1):
        pred = (2.0 * gx, 2.0 * gy)
        refined = phase_correlate(ref_pyr[lvl], mov_pyr[lvl], center=pred, radius=2, band=band)
        if not refined.low_confidence:
            gx, gy = refined.dx, refined.dy
        else:
            gx, gy = pred

    h, w = ref_pyr[0].shape
    ix, iy = int(round(gx)), int(round(gy))
    # integer pre-shift is lossless, so tiles matched under the global shift correlate exactly
    mov_g = np.roll(mov_pyr[0], (-iy, -ix), axis=(0, 1))
    ty_n, tx_n = AlignmentField.grid_shape((h, w), tile_size)
    shifts = np.empty((ty_n, tx_n, 2))
    conf = np.zeros((ty_n, tx_n))
    for ty in range(ty_n):
        for tx in range(tx_n):
            ys = slice(ty * tile_size, min((ty + 1) * tile_size, h))
            xs = slice(tx * tile_size, min((tx + 1) * tile_size, w))
            a, b = ref_pyr[0][ys, xs], mov_g[ys, xs]
            shifts[ty, tx] = (gx, gy)
            if min(a.shape) < MIN_CORRELATION_SIZE:
                continue
            s = phase_correlate(a, b, window=True, center=(gx - ix, gy - iy), radius=search_radius, band=band)
            conf[ty, tx] = s.confidence
            if s.low_confidence:
                continue
            if abs(s.dx - (gx - ix)) > search_radius or abs(s.dy - (gy - iy)) > search_radius:
                continue
            local = (ix + s.dx, iy + s.dy)
            if _tile_residual(a, mov_pyr[0], ys, xs, *local) < _tile_residual(a, mov_pyr[0], ys, xs, gx, gy):
                shifts[ty, tx] = local
    fine = AlignmentField(tile_size, (h, w), shifts, conf, (gx, gy))
    coarse = AlignmentField.constant((h, w), gx, gy, tile_size)
    # blending between tile centres can undo per-tile gains; never end up worse than coarse-only
    if interior_error(ref_pyr[0], mov_pyr[0], fine) > interior_error(ref_pyr[0], mov_pyr[0], coarse):
        return AlignmentField(tile_size, (h, w), coarse.shifts, conf, (gx, gy))
    return fine


def interior_error(ref, mov, field: AlignmentField, border: int = ALIGN_BORDER) -> float:
    """Mean |warp(mov, field) - ref| over pixels at least ``border`` from the frame edge."""
    diff = np.abs(warp(mov, field).astype(np.float64) - np.asarray(ref, dtype=np.float64))
    inner = diff[border:-border or None, border:-border or None]
    return float(np.mean(inner)) if inner.size else float(np.mean(diff))
