"""Directional two-stage block DCT.

Each directional mode partitions an N x N block into oriented pixel lines.
Stage one runs an orthonormal DCT-II along every line; stage two gathers the
j-th coefficient of every line long enough to have one (in line order) and
runs a second orthonormal DCT-II across that group.  Both stages are
orthonormal, so the whole transform is an orthogonal N^2 x N^2 map: the
inverse is its transpose and energy is preserved.

Lines of a diagonal mode differ in length, so the first-stage DC values of
a constant block scale with sqrt(length).  The second stage for group 0
therefore uses a DC-adapted orthonormal basis whose first vector is
proportional to sqrt(length): constants land in the single DC-most
coefficient for every mode.  With equal line lengths (V, H) that basis is
the plain DCT-II.

Mode tags follow the H.264 intra-prediction numbering with the DC mode (2)
left out.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .image import crop, pad_to_block_multiple

BLOCK_SIZES = (4, 8, 16)


class Mode(enum.IntEnum):
    V = 0
    H = 1
    DDL = 3
    DDR = 4
    VR = 5
    HD = 6
    VL = 7
    HU = 8

    @classmethod
    def parse(cls, tag) -> "Mode":
        """Accept a Mode, its integer tag or its name (case-insensitive)."""
        if isinstance(tag, Mode):
            return tag
        if isinstance(tag, str):
            text = tag.strip()
            if text.lstrip("-").isdigit():
                return cls(int(text))
            try:
                return cls[text.upper()]
            except KeyError:
                raise ValueError(f"unknown directional mode {tag!r}") from None
        return cls(int(tag))


ALL_MODES = tuple(Mode)
AXIS_MODES = (Mode.V, Mode.H)


def _line_index(mode: Mode, r: int, c: int, n: int) -> int:
    if mode is Mode.V:
        return c
    if mode is Mode.H:
        return r
    if mode is Mode.DDL:
        return r + c
    if mode is Mode.DDR:
        return r - c + (n - 1)
    if mode is Mode.VR:
        return 2 * c - r + (n - 1)
    if mode is Mode.VL:
        return 2 * c + r
    if mode is Mode.HD:
        return 2 * r - c + (n - 1)
    if mode is Mode.HU:
        return 2 * r + c
    raise ValueError(mode)


@dataclass(frozen=True)
class LinePartition:
    block_size: int
    lines: tuple[tuple[tuple[int, int], ...], ...]

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(len(line) for line in self.lines)


@lru_cache(maxsize=None)
def line_partition(mode, block_size: int) -> LinePartition:
    """Split a block into the oriented lines of ``mode``.

    Lines come in ascending line-index order; pixels inside a line are
    ordered by row, then column.
    """
    mode = Mode.parse(mode)
    if block_size < 2:
        raise ValueError(f"block_size must be >= 2, got {block_size}")
    buckets: dict[int, list[tuple[int, int]]] = {}
    for r in range(block_size):
        for c in range(block_size):
            buckets.setdefault(_line_index(mode, r, c, block_size), []).append((r, c))
    lines = tuple(tuple(sorted(buckets[k])) for k in sorted(buckets))
    return LinePartition(block_size, lines)


@lru_cache(maxsize=None)
def dct_matrix(length: int) -> np.ndarray:
    """Orthonormal DCT-II matrix; row k is the k-th cosine basis vector."""
    n = np.arange(length)
    k = n[:, None]
    mat = np.cos(np.pi * (n[None, :] + 0.5) * k / length)
    mat *= np.sqrt(2.0 / length)
    mat[0] *= np.sqrt(0.5)
    mat.setflags(write=False)
    return mat


@lru_cache(maxsize=None)
def dc_adapted_matrix(lengths: tuple[int, ...]) -> np.ndarray:
    """Orthonormal basis for the group of first-stage DC coefficients.

    Row 0 is sqrt(lengths) normalised; the remaining rows are the DCT-II rows
    1..K-1 orthonormalised against it, keeping their orientation.
    """
    k = len(lengths)
    if len(set(lengths)) == 1:
        return dct_matrix(k)
    basis = dct_matrix(k).T.copy()
    basis[:, 0] = np.sqrt(np.asarray(lengths, dtype=np.float64))
    q, r = np.linalg.qr(basis)
    q *= np.sign(np.diag(r))
    mat = q.T
    mat.setflags(write=False)
    return mat


def _stage2_matrix(part: LinePartition, j: int) -> np.ndarray:
    if j == 0:
        return dc_adapted_matrix(part.lengths)
    return dct_matrix(sum(1 for n in part.lengths if n > j))


@lru_cache(maxsize=None)
def group_lengths(mode, block_size: int) -> tuple[int, ...]:
    """Number of second-stage coefficients for each first-stage index j."""
    lengths = line_partition(Mode.parse(mode), block_size).lengths
    return tuple(sum(1 for n in lengths if n > j) for j in range(max(lengths)))


@lru_cache(maxsize=None)
def spectral_positions(mode, block_size: int) -> tuple[tuple[int, int], ...]:
    """(group j, position p) for every entry of the flattened spectrum."""
    return tuple(
        (j, p) for j, glen in enumerate(group_lengths(mode, block_size)) for p in range(glen)
    )


@dataclass(frozen=True)
class BlockSpectrum:
    mode: Mode
    block_size: int
    groups: tuple[np.ndarray, ...]

    def flat(self) -> np.ndarray:
        return np.concatenate(self.groups)

    @classmethod
    def from_flat(cls, mode, block_size: int, values) -> "BlockSpectrum":
        mode = Mode.parse(mode)
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (block_size * block_size,):
            raise ValueError(f"expected {block_size ** 2} coefficients, got {values.shape}")
        splits = np.cumsum(group_lengths(mode, block_size))[:-1]
        return cls(mode, block_size, tuple(np.split(values, splits)))


@lru_cache(maxsize=None)
def stage_matrices(mode, block_size: int) -> tuple[np.ndarray, np.ndarray]:
    """The two stages as matrices.

    Stage one maps a row-major flattened block to the per-line DCT
    coefficients, lines concatenated in line order.  Stage two regroups
    those by frequency index j and applies the second-stage transform of
    each group, producing the flattened spectrum (groups in order).
    """
    mode = Mode.parse(mode)
    n = block_size
    part = line_partition(mode, n)
    size = n * n

    stage1 = np.zeros((size, size))
    offsets = np.cumsum((0,) + part.lengths)
    for i, line in enumerate(part.lines):
        cols = [r * n + c for r, c in line]
        stage1[offsets[i]:offsets[i + 1], cols] = dct_matrix(len(line))

    stage2 = np.zeros((size, size))
    row = 0
    for j in range(max(part.lengths)):
        members = [offsets[i] + j for i, line in enumerate(part.lines) if len(line) > j]
        mat = _stage2_matrix(part, j)
        stage2[row:row + len(members), members] = mat
        row += len(members)
    for m in (stage1, stage2):
        m.setflags(write=False)
    return stage1, stage2


def forward_ddct(block, mode) -> BlockSpectrum:
    mode = Mode.parse(mode)
    block = np.asarray(block, dtype=np.float64)
    if block.ndim != 2 or block.shape[0] != block.shape[1]:
        raise ValueError(f"expected a square block, got shape {block.shape}")
    n = block.shape[0]
    stage1, stage2 = stage_matrices(mode, n)
    return BlockSpectrum.from_flat(mode, n, stage2 @ (stage1 @ block.ravel()))


def inverse_ddct(spectrum: BlockSpectrum) -> np.ndarray:
    """Inverse second-stage transforms and scatter, then inverse per-line transforms."""
    mode = Mode.parse(spectrum.mode)
    n = spectrum.block_size
    expected = group_lengths(mode, n)
    got = tuple(len(g) for g in spectrum.groups)
    if got != expected:
        raise ValueError(f"malformed spectrum for mode {mode.name}: group lengths {got}, expected {expected}")
    stage1, stage2 = stage_matrices(mode, n)
    return (stage1.T @ (stage2.T @ spectrum.flat())).reshape(n, n)


@lru_cache(maxsize=None)
def transform_matrix(mode, block_size: int) -> np.ndarray:
    """The directional transform as a matrix acting on row-major flattened blocks."""
    stage1, stage2 = stage_matrices(Mode.parse(mode), block_size)
    mat = stage2 @ stage1
    mat.setflags(write=False)
    return mat


def _to_tiles(plane: np.ndarray, block_size: int) -> tuple[np.ndarray, tuple[int, int], tuple[int, int]]:
    padded, size = pad_to_block_multiple(np.asarray(plane, dtype=np.float64), block_size)
    ty, tx = padded.shape[0] // block_size, padded.shape[1] // block_size
    tiles = padded.reshape(ty, block_size, tx, block_size).swapaxes(1, 2)
    return tiles.reshape(ty * tx, block_size * block_size), (ty, tx), size


def _from_tiles(tiles: np.ndarray, grid: tuple[int, int], block_size: int) -> np.ndarray:
    ty, tx = grid
    data = tiles.reshape(ty, tx, block_size, block_size).swapaxes(1, 2)
    return data.reshape(ty * block_size, tx * block_size)


def tile_spectra(plane, mode, block_size: int = 8) -> np.ndarray:
    """Flattened spectra of every tile, shape (n_tiles, block_size**2)."""
    tiles, _, _ = _to_tiles(plane, block_size)
    return tiles @ transform_matrix(Mode.parse(mode), block_size).T


def block_apply(plane, mode, block_size: int = 8, mask=None) -> np.ndarray:
    """Filter every block_size tile of a plane in the directional DCT domain.

    ``mask`` is a FilterMask (or anything with ``mode``, ``block_size`` and
    ``flat()``) whose gains multiply the coefficients; ``None`` is identity.
    """
    mode = Mode.parse(mode)
    if mask is not None and (Mode.parse(mask.mode) is not mode or mask.block_size != block_size):
        raise ValueError(
            f"mask is for mode {Mode.parse(mask.mode).name}/{mask.block_size}, "
            f"not {mode.name}/{block_size}"
        )
    tiles, grid, size = _to_tiles(plane, block_size)
    mat = transform_matrix(mode, block_size)
    coeffs = tiles @ mat.T
    if mask is not None:
        coeffs *= mask.flat()
    out = _from_tiles(coeffs @ mat, grid, block_size)
    return crop(out, size).astype(np.float32)
