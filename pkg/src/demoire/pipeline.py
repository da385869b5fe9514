"""The full demoiréing pipeline and the dataset evaluation harness.

Per clip: directional band-reject filtering of all three frames, alignment
of the neighbours onto the reference, then bilateral-grid tone refinement
of the fused intermediate.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import align as align_mod
from .bilateral import DEFAULT_RIDGE, BilateralGrid, fit_grid, guidance_map, tdr
from .dct import ALL_MODES, AXIS_MODES
from .filters import (
    DEFAULT_DEPTH,
    DEFAULT_TEMPERATURE,
    DEFAULT_TOP_K,
    DEFAULT_WIDTH,
    FilterBank,
    demoire_frame,
)
from .image import Clip, load_image, resize_bilinear
from .metrics import l1, psnr, ssim, temporal_consistency
from .synth import params_from_text, parse_key_values, tone_distort

log = logging.getLogger(__name__)

FIT_SIZE = 256
CLIP_FILES = ("m_prev.png", "m_ref.png", "m_next.png", "gt.png", "params.txt")

BANK_SOURCES = ("auto", "identity", "file")
GRID_SOURCES = ("fit", "load", "identity")
INTERPOLATIONS = ("nearest", "trilinear")


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    block_size: int = 8
    bank: str = "auto"
    bank_path: str = ""
    temperature: float = DEFAULT_TEMPERATURE
    top_k: int = DEFAULT_TOP_K
    notch_width: float = DEFAULT_WIDTH
    notch_depth: float = DEFAULT_DEPTH
    directional: bool = True
    align: bool = True
    levels: int = align_mod.DEFAULT_LEVELS
    tile_size: int = align_mod.DEFAULT_TILE_SIZE
    search_radius: float = align_mod.DEFAULT_SEARCH_RADIUS
    tdr: bool = True
    grid: str = "fit"
    grid_path: str = ""
    interpolation: str = "nearest"
    ridge: float = DEFAULT_RIDGE

    def validate(self) -> "PipelineConfig":
        if self.block_size not in (4, 8, 16):
            raise ConfigError(f"block_size must be 4, 8 or 16, got {self.block_size}")
        if self.bank not in BANK_SOURCES:
            raise ConfigError(f"bank must be one of {BANK_SOURCES}, got {self.bank!r}")
        if self.bank == "file" and not self.bank_path:
            raise ConfigError("bank=file needs a bank path (--bank)")
        if self.grid not in GRID_SOURCES:
            raise ConfigError(f"grid must be one of {GRID_SOURCES}, got {self.grid!r}")
        if self.grid == "load" and not self.grid_path:
            raise ConfigError("grid=load needs a grid path (--grid)")
        if self.interpolation not in INTERPOLATIONS:
            raise ConfigError(f"interpolation must be one of {INTERPOLATIONS}")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.levels < 1 or self.tile_size < 16 or self.search_radius <= 0:
            raise ConfigError("alignment needs levels >= 1, tile_size >= 16, search_radius > 0")
        if self.ridge < 0:
            raise ConfigError("ridge must be >= 0")
        return self

    @classmethod
    def identity(cls) -> "PipelineConfig":
        return cls(bank="identity", align=False, grid="identity")

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: "PipelineConfig | None" = None) -> "PipelineConfig":
        cfg = dataclasses.replace(base) if base is not None else cls()
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for key, raw in parse_key_values(text).items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            setattr(cfg, key, _coerce(getattr(cls(), key), raw, key))
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(os.fspath(path), encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def _coerce(default, raw: str, key: str):
    try:
        if isinstance(default, bool):
            lowered = raw.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return lowered in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def calibration_chart(size: int = FIT_SIZE, seed: int = 0) -> np.ndarray:
    """Colour chart covering every (x, y, luma) cell of the fitting grid.

    Each pixel is a random grey level with independent per-channel jitter,
    so every spatial cell sees the full intensity range.
    """
    rng = np.random.default_rng(seed)
    level = rng.uniform(0.0, 1.0, size=(size, size, 1))
    jitter = rng.uniform(-0.15, 0.15, size=(size, size, 3))
    return np.clip(level + jitter, 0.0, 1.0).astype(np.float32)


def calibration_pair(params, size: int = FIT_SIZE):
    """(tone-distorted chart, chart) for a clip's recorded tone distortion."""
    chart = calibration_chart(size)
    distorted = np.clip(tone_distort(chart, params), 0.0, 1.0).astype(np.float32)
    return distorted, chart


def fit_from_pair(source, target, ridge: float = DEFAULT_RIDGE) -> BilateralGrid:
    src = resize_bilinear(source, FIT_SIZE, FIT_SIZE)
    tgt = resize_bilinear(target, FIT_SIZE, FIT_SIZE)
    return fit_grid(src, tgt, guidance_map(src), ridge)


@dataclass
class ClipResult:
    output: np.ndarray
    demoired: tuple
    aligned: Clip
    fields: tuple
    bank: FilterBank
    grid: BilateralGrid | None = None
    extras: dict = field(default_factory=dict)


def resolve_bank(clip: Clip, config: PipelineConfig) -> FilterBank:
    if config.bank == "identity":
        return FilterBank.identity(config.block_size)
    if config.bank == "file":
        bank = FilterBank.load(config.bank_path)
        if bank.block_size != config.block_size:
            raise ConfigError(f"bank block size {bank.block_size} != configured {config.block_size}")
        return bank
    # pool every channel of every frame for the median statistic
    planes = [f[..., c] for f in clip.frames for c in range(3)]
    return FilterBank.estimate(planes, config.block_size, config.top_k, config.notch_width, config.notch_depth)


def resolve_grid(config: PipelineConfig, fit_pair=None) -> BilateralGrid:
    if config.grid == "identity":
        return BilateralGrid.identity()
    if config.grid == "load":
        return BilateralGrid.load(config.grid_path)
    if fit_pair is None:
        raise ConfigError("grid=fit needs a paired example (--fit-source/--fit-target or --calib)")
    return fit_from_pair(fit_pair[0], fit_pair[1], config.ridge)


def process_clip(clip: Clip, config: PipelineConfig, fit_pair=None) -> ClipResult:
    config.validate()
    bank = resolve_bank(clip, config)
    modes = ALL_MODES if config.directional else AXIS_MODES
    demoired = tuple(demoire_frame(f, bank, config.temperature, modes) for f in clip.frames)
    shape = clip.shape

    if config.align:
        ref = demoired[1]
        fields = (
            align_mod.pyramid_align(ref, demoired[0], config.levels, config.tile_size, config.search_radius),
            align_mod.AlignmentField.zeros(shape, config.tile_size),
            align_mod.pyramid_align(ref, demoired[2], config.levels, config.tile_size, config.search_radius),
        )
        aligned = Clip(*(align_mod.warp(d, f) for d, f in zip(demoired, fields)))
        intermediate = None  # mean of the aligned frames
    else:
        fields = tuple(align_mod.AlignmentField.zeros(shape, config.tile_size) for _ in range(3))
        aligned = Clip(*demoired)
        # unregistered neighbours only feed guidance, never pixels
        intermediate = demoired[1]

    grid = None
    if config.tdr:
        grid = resolve_grid(config, fit_pair)
        output = tdr(aligned, grid, config.interpolation, intermediate)
    elif intermediate is None:
        output = np.mean([f.astype(np.float64) for f in aligned.frames], axis=0).astype(np.float32)
    else:
        output = intermediate
    return ClipResult(output, demoired, aligned, fields, bank, grid)


def load_clip(paths) -> Clip:
    frames = [load_image(p) for p in paths]
    return Clip(*frames)


# --- evaluation ---------------------------------------------------------------

def list_clips(dataset_dir) -> list[Path]:
    root = Path(dataset_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {root}")
    clips = sorted(p for p in root.iterdir() if p.is_dir())
    for c in clips:
        missing = [f for f in CLIP_FILES if not (c / f).is_file()]
        if missing:
            raise ValueError(f"malformed dataset: {c.name} lacks {missing}")
    return clips


def _stats(values) -> dict:
    if not values:
        return {"mean": None, "std": None}
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": round(float(arr.mean()), 6), "std": round(float(arr.std()), 6)}


def evaluate_clip(clip_dir: Path, config: PipelineConfig) -> dict:
    clip = load_clip([clip_dir / n for n in CLIP_FILES[:3]])
    gt = load_image(clip_dir / "gt.png")
    with open(clip_dir / "params.txt", encoding="utf-8") as fh:
        params = params_from_text(fh.read())
    fit_pair = calibration_pair(params) if (config.tdr and config.grid == "fit") else None
    res = process_clip(clip, config, fit_pair)

    d_prev, d_ref, d_next = res.demoired
    temporal = 0.5 * (
        temporal_consistency([d_prev, d_ref], [res.fields[0]])
        + temporal_consistency([d_next, d_ref], [res.fields[2]])
    )
    r6 = lambda v: round(float(v), 6)  # noqa: E731
    return {
        "clip": clip_dir.name,
        "input": {"psnr": r6(psnr(clip.ref, gt)), "ssim": r6(ssim(clip.ref, gt)), "l1": r6(l1(clip.ref, gt))},
        "output": {"psnr": r6(psnr(res.output, gt)), "ssim": r6(ssim(res.output, gt)), "l1": r6(l1(res.output, gt))},
        "temporal": r6(temporal),
    }


def evaluate(dataset_dir, config: PipelineConfig) -> dict:
    config.validate()
    rows = []
    for clip_dir in list_clips(dataset_dir):
        log.info("evaluating %s", clip_dir.name)
        rows.append(evaluate_clip(clip_dir, config))
    agg = {"count": len(rows)}
    for side in ("input", "output"):
        for metric in ("psnr", "ssim", "l1"):
            agg[f"{side}_{metric}"] = _stats([r[side][metric] for r in rows])
    agg["temporal"] = _stats([r["temporal"] for r in rows])
    gains = [r["output"]["psnr"] - r["input"]["psnr"] for r in rows]
    agg["psnr_gain"] = _stats(gains)
    return {"config": parse_key_values(config.to_text()), "clips": rows, "aggregate": agg}


def report_to_text(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"
