"""Band-reject masks in the directional DCT domain and direction-aware fusion.

A :class:`FilterMask` holds one gain per spectral position of a mode.  A
:class:`FilterBank` carries one mask per directional mode; ``demoire_frame``
filters every channel with every mode and blends the eight results with
per-pixel weights that favour the modes which removed the least energy.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .dct import (
    ALL_MODES,
    Mode,
    block_apply,
    group_lengths,
    spectral_positions,
    tile_spectra,
)
from .image import as_frame, clamp01, pad_to_block_multiple

DEFAULT_TEMPERATURE = 0.05
DEFAULT_WIDTH = 0.8
DEFAULT_DEPTH = 1.0
DEFAULT_TOP_K = 2


def radial_index(mode, block_size: int) -> np.ndarray:
    """Normalised radial index rho(j, p) = j + p * block_size / len(group j), flattened."""
    lengths = group_lengths(Mode.parse(mode), block_size)
    return np.array(
        [j + p * (block_size / lengths[j]) for j, p in spectral_positions(mode, block_size)]
    )


@dataclass(frozen=True)
class FilterMask:
    mode: Mode
    block_size: int
    gains: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        expected = group_lengths(self.mode, self.block_size)
        got = tuple(len(g) for g in self.gains)
        if got != expected:
            raise ValueError(f"gain layout {got} does not match mode {self.mode.name} ({expected})")
        gains = tuple(np.asarray(g, dtype=np.float32) for g in self.gains)
        flat = np.concatenate(gains)
        if not np.all((flat >= 0.0) & (flat <= 1.0)):
            raise ValueError("filter gains must lie in [0, 1]")
        if flat[0] != 1.0:
            raise ValueError("DC gain must be exactly 1")
        object.__setattr__(self, "gains", gains)

    def flat(self) -> np.ndarray:
        return np.concatenate(self.gains)

    @classmethod
    def from_flat(cls, mode, block_size: int, flat) -> "FilterMask":
        mode = Mode.parse(mode)
        flat = np.asarray(flat, dtype=np.float32)
        splits = np.cumsum(group_lengths(mode, block_size))[:-1]
        return cls(mode, block_size, tuple(np.split(flat, splits)))

    @classmethod
    def identity(cls, mode, block_size: int = 8) -> "FilterMask":
        return cls.from_flat(mode, block_size, np.ones(block_size * block_size))


def _notch_gains(rho: np.ndarray, center: float, width: float, depth: float) -> np.ndarray:
    return 1.0 - depth * np.exp(-((rho - center) ** 2) / (2.0 * width * width))


def analytic_notch(mode, block_size: int = 8, center: float = 4.0, width: float = DEFAULT_WIDTH,
                   depth: float = DEFAULT_DEPTH) -> FilterMask:
    """Gaussian notch over the radial index, centred on ``center``."""
    if center < 0:
        raise ValueError(f"center must be >= 0, got {center}")
    if width <= 0:
        raise ValueError(f"width must be > 0, got {width}")
    if not 0.0 <= depth <= 1.0:
        raise ValueError(f"depth must be in [0, 1], got {depth}")
    gains = _notch_gains(radial_index(mode, block_size), center, width, depth)
    gains[0] = 1.0
    return FilterMask.from_flat(mode, block_size, np.clip(gains, 0.0, 1.0))


def median_spectrum(planes, mode, block_size: int = 8) -> np.ndarray:
    """Median |coefficient| per spectral position over every tile of every plane."""
    spectra = [np.abs(tile_spectra(p, mode, block_size)) for p in planes]
    return np.median(np.concatenate(spectra, axis=0), axis=0)


def estimate_notch(planes, mode, block_size: int = 8, top_k: int = DEFAULT_TOP_K,
                   width: float = DEFAULT_WIDTH, depth: float = DEFAULT_DEPTH) -> FilterMask:
    """Notch the ``top_k`` strongest non-DC spectral peaks shared by the tiles.

    Positions with rho <= 1 are never selected, nor are positions whose median
    magnitude is zero (up to transform round-off).  Notches combine multiplicatively.
    """
    planes = [np.asarray(p, dtype=np.float32) for p in planes]
    if not planes:
        raise ValueError("estimate_notch needs at least one plane")
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    for p in planes:
        if p.shape[0] < block_size or p.shape[1] < block_size:
            raise ValueError(f"plane {p.shape} is smaller than one {block_size}x{block_size} block")
    mode = Mode.parse(mode)
    rho = radial_index(mode, block_size)
    peaks = median_spectrum(planes, mode, block_size)

    # transform round-off on flat tiles is not a peak
    floor = 1e-9 * max(float(peaks[0]), 1.0)
    eligible = (rho > 1.0) & (peaks > floor)
    eligible[0] = False
    candidates = np.flatnonzero(eligible)
    # stable sort keeps ties in flat-index order
    order = candidates[np.argsort(-peaks[candidates], kind="stable")]

    gains = np.ones_like(rho)
    for idx in order[:top_k]:
        gains *= _notch_gains(rho, rho[idx], width, depth)
    gains[0] = 1.0
    return FilterMask.from_flat(mode, block_size, np.clip(gains, 0.0, 1.0))


@dataclass(frozen=True)
class FilterBank:
    block_size: int
    masks: dict

    def __post_init__(self):
        masks = {Mode.parse(m): mask for m, mask in self.masks.items()}
        missing = [m.name for m in ALL_MODES if m not in masks]
        if missing:
            raise ValueError(f"filter bank is missing modes {missing}")
        for m, mask in masks.items():
            if mask.mode is not m or mask.block_size != self.block_size:
                raise ValueError(f"mask for {m.name} has mode {mask.mode.name}/{mask.block_size}")
        object.__setattr__(self, "masks", masks)

    def __getitem__(self, mode) -> FilterMask:
        return self.masks[Mode.parse(mode)]

    @classmethod
    def identity(cls, block_size: int = 8) -> "FilterBank":
        return cls(block_size, {m: FilterMask.identity(m, block_size) for m in ALL_MODES})

    @classmethod
    def estimate(cls, planes, block_size: int = 8, top_k: int = DEFAULT_TOP_K,
                 width: float = DEFAULT_WIDTH, depth: float = DEFAULT_DEPTH) -> "FilterBank":
        planes = list(planes)
        return cls(block_size, {
            m: estimate_notch(planes, m, block_size, top_k, width, depth) for m in ALL_MODES
        })

    def to_json(self) -> str:
        doc = {
            "block_size": self.block_size,
            "modes": [
                {
                    "mode": int(m),
                    "gains": [[float(format(float(g), ".9g")) for g in group] for group in self.masks[m].gains],
                }
                for m in ALL_MODES
            ],
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FilterBank":
        doc = json.loads(text)
        block_size = int(doc["block_size"])
        masks = {}
        for entry in doc["modes"]:
            mode = Mode.parse(entry["mode"])
            masks[mode] = FilterMask(mode, block_size, tuple(np.asarray(g, dtype=np.float32) for g in entry["gains"]))
        return cls(block_size, masks)

    def save(self, path) -> None:
        with open(os.fspath(path), "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "FilterBank":
        with open(os.fspath(path), encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def direction_weights(residual_energy, temperature: float = DEFAULT_TEMPERATURE) -> np.ndarray:
    """Per-pixel softmax of -energy/temperature across modes, shape (H, W, n_modes)."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    energy = [np.asarray(e, dtype=np.float64) for e in residual_energy]
    if len({e.shape for e in energy}) != 1:
        raise ValueError("residual energy planes differ in size")
    logits = -np.stack(energy, axis=-1) / temperature
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=-1, keepdims=True)


def block_mean(plane: np.ndarray, block_size: int) -> np.ndarray:
    """Replace every pixel by the mean of its (padded) tile."""
    padded, (h, w) = pad_to_block_multiple(np.asarray(plane, dtype=np.float64), block_size)
    ty, tx = padded.shape[0] // block_size, padded.shape[1] // block_size
    means = padded.reshape(ty, block_size, tx, block_size).mean(axis=(1, 3))
    return np.repeat(np.repeat(means, block_size, axis=0), block_size, axis=1)[:h, :w]


def demoire_plane(plane: np.ndarray, bank: FilterBank, temperature: float = DEFAULT_TEMPERATURE,
                  modes=ALL_MODES) -> np.ndarray:
    n = bank.block_size
    plane = np.asarray(plane, dtype=np.float32)
    filtered, energy = [], []
    for m in modes:
        d = block_apply(plane, m, n, bank[m])
        filtered.append(d.astype(np.float64))
        energy.append(block_mean((plane.astype(np.float64) - d) ** 2, n))
    w = direction_weights(energy, temperature)
    return np.sum(w * np.stack(filtered, axis=-1), axis=-1)


def demoire_frame(frame, bank: FilterBank, temperature: float = DEFAULT_TEMPERATURE,
                  modes=ALL_MODES) -> np.ndarray:
    """Directional band-reject filtering of every channel, fused and clamped.

    ``modes`` restricts the branches used; the default is all eight.
    """
    frame = as_frame(frame)
    modes = tuple(Mode.parse(m) for m in modes)
    out = np.stack([demoire_plane(frame[..., c], bank, temperature, modes) for c in range(3)], axis=-1)
    return clamp01(out)
