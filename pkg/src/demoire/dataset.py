"""Synthetic benchmark datasets in the clipNNN/ directory layout."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .image import save_image
from .metrics import psnr
from .synth import SynthRanges, draw_params, params_to_text, render_scene, synth_clip

log = logging.getLogger(__name__)

DEFAULT_SIZE = 256
MAX_REDRAWS = 50


def make_clip(seed: int, index: int, size: int = DEFAULT_SIZE, ranges: SynthRanges = SynthRanges()):
    """Deterministically build clip ``index`` of the suite seeded by ``seed``.

    Parameters are redrawn until the reference frame is degraded to at most
    ``ranges.max_input_psnr`` dB, so every clip leaves room for restoration.
    """
    rng = np.random.default_rng([seed, index])
    clean = render_scene(size, size, rng)
    for _ in range(MAX_REDRAWS):
        params = draw_params(rng, ranges, seed)
        clip, gt = synth_clip(clean, params)
        if psnr(clip.ref, gt) <= ranges.max_input_psnr:
            return clip, gt, params
    raise RuntimeError(f"clip {index}: no parameter draw reached {ranges.max_input_psnr} dB input PSNR")


def write_dataset(out_dir, count: int, seed: int = 0, size: int = DEFAULT_SIZE,
                  ranges: SynthRanges = SynthRanges()) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(count):
        clip, gt, params = make_clip(seed, i, size, ranges)
        d = out / f"clip{i:03d}"
        d.mkdir(exist_ok=True)
        for name, frame in zip(("m_prev.png", "m_ref.png", "m_next.png"), clip.frames):
            save_image(frame, d / name)
        save_image(gt, d / "gt.png")
        extra = {"clip": i, "size": size}
        (d / "params.txt").write_text(params_to_text(params, extra), encoding="utf-8")
        log.info("wrote %s", d)
        written.append(d)
    return written
