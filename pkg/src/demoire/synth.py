"""Synthetic moiré: two-grating beat patterns over tone-distorted content.

The pattern added to each channel is the product of two cosine gratings;
the product contains the difference-frequency beat that is the visible
moiré plus a high-frequency sum component.  Content is tone-distorted by a
3x3 colour matrix and bias before the pattern is added, then clamped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .image import Clip, as_frame, clamp01

MAX_JITTER = 16


@dataclass(frozen=True)
class GratingParams:
    frequency: float  # cycles / pixel
    angle: float  # radians
    phase: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.frequency <= 0.5:
            raise ValueError(f"grating frequency {self.frequency} outside [0, 0.5] (Nyquist)")
        if self.amplitude < 0:
            raise ValueError(f"grating amplitude must be >= 0, got {self.amplitude}")


@dataclass(frozen=True)
class MoireParams:
    gratings: tuple[GratingParams, GratingParams]
    channel_phase_shift: tuple[float, float, float] = (0.0, 0.0, 0.0)
    color_gain: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    # (dx, dy) per timestamp t-1, t, t+1; content moves by +dx, +dy
    jitter: tuple = ((0, 0), (0, 0), (0, 0))
    # phase advance per frame for grating 1 and grating 2
    phase_step: tuple[float, float] = (0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        gain = np.asarray(self.color_gain, dtype=np.float64)
        if gain.shape != (3, 3):
            raise ValueError(f"color_gain must be 3x3, got {gain.shape}")
        if abs(np.linalg.det(gain)) < 1e-3:
            raise ValueError("color_gain matrix is (nearly) singular")
        if len(self.gratings) != 2:
            raise ValueError("exactly two gratings are required")


def grating(width: int, height: int, params: GratingParams) -> np.ndarray:
    """amplitude * cos(2 pi f (x cos a + y sin a) + phase) sampled on the pixel grid."""
    if not 0.0 <= params.frequency <= 0.5:
        raise ValueError(f"grating frequency {params.frequency} above Nyquist")
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    arg = 2.0 * math.pi * params.frequency * (x * math.cos(params.angle) + y * math.sin(params.angle))
    return (params.amplitude * np.cos(arg + params.phase)).astype(np.float32)


def moire_pattern(width: int, height: int, params: MoireParams, frame_offset: int = 0) -> np.ndarray:
    """The additive pattern M, shape (H, W, 3), for a frame ``frame_offset`` steps from t."""
    g1, g2 = params.gratings
    g1 = replace(g1, phase=g1.phase + frame_offset * params.phase_step[0])
    g2 = replace(g2, phase=g2.phase + frame_offset * params.phase_step[1])
    base = grating(width, height, g1).astype(np.float64)
    planes = [
        base * grating(width, height, replace(g2, phase=g2.phase + shift)).astype(np.float64)
        for shift in params.channel_phase_shift
    ]
    return np.stack(planes, axis=-1)


def tone_distort(clean, params: MoireParams) -> np.ndarray:
    """color_gain @ rgb + bias per pixel, unclamped, float64."""
    gain = np.asarray(params.color_gain, dtype=np.float64)
    return np.asarray(clean, dtype=np.float64) @ gain.T + np.asarray(params.bias, dtype=np.float64)


def synth_moire(clean, params: MoireParams, frame_offset: int = 0) -> np.ndarray:
    clean = as_frame(clean)
    h, w = clean.shape[:2]
    out = tone_distort(clean, params) + moire_pattern(w, h, params, frame_offset)
    return clamp01(out.astype(np.float32))


def circular_shift(frame, dx: int, dy: int) -> np.ndarray:
    """Move content by (+dx, +dy) with wrap-around."""
    return np.roll(frame, (int(dy), int(dx)), axis=(0, 1))


def synth_clip(clean, params: MoireParams):
    """Three moiré frames (t-1, t, t+1) and the clean ground truth at t."""
    clean = as_frame(clean)
    frames = []
    for offset, (dx, dy) in zip((-1, 0, 1), params.jitter):
        if abs(dx) >= MAX_JITTER or abs(dy) >= MAX_JITTER:
            raise ValueError(f"jitter ({dx}, {dy}) exceeds {MAX_JITTER - 1} px")
        if dx != int(dx) or dy != int(dy):
            raise ValueError(f"jitter must be integral, got ({dx}, {dy})")
        frames.append(synth_moire(circular_shift(clean, dx, dy), params, offset))
    return Clip(*frames), clean.copy()


# --- procedural clean content -------------------------------------------------

def _smoothstep(edge: np.ndarray, softness: float) -> np.ndarray:
    t = np.clip(0.5 + edge / (2.0 * softness), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def render_scene(width: int, height: int, rng: np.random.Generator, shapes: int = 10) -> np.ndarray:
    """Piecewise-smooth RGB content: a graded background plus soft-edged shapes."""
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    u, v = x / max(width - 1, 1), y / max(height - 1, 1)
    corners = rng.uniform(0.15, 0.8, size=(4, 3))
    img = (
        corners[0] * ((1 - u) * (1 - v))[..., None]
        + corners[1] * (u * (1 - v))[..., None]
        + corners[2] * ((1 - u) * v)[..., None]
        + corners[3] * (u * v)[..., None]
    )
    for _ in range(shapes):
        colour = rng.uniform(0.1, 0.85, size=3)
        cx, cy = rng.uniform(0, width), rng.uniform(0, height)
        if rng.random() < 0.5:
            rx, ry = rng.uniform(0.05, 0.25) * width, rng.uniform(0.05, 0.25) * height
            inside = 1.0 - np.hypot((x - cx) / rx, (y - cy) / ry)
            inside *= min(rx, ry)
        else:
            hw, hh = rng.uniform(0.05, 0.2) * width, rng.uniform(0.05, 0.2) * height
            inside = np.minimum(hw - np.abs(x - cx), hh - np.abs(y - cy))
        alpha = _smoothstep(inside, softness=1.5)[..., None]
        img = img * (1.0 - alpha) + colour * alpha
    # gentle shading keeps regions from being perfectly flat
    fx, fy = rng.uniform(0.005, 0.02, size=2)
    shade = 0.03 * np.sin(2 * math.pi * (fx * x + fy * y) + rng.uniform(0, 2 * math.pi))
    return np.clip(img + shade[..., None], 0.0, 1.0).astype(np.float32)


@dataclass(frozen=True)
class SynthRanges:
    """Ranges the benchmark generator draws per-clip parameters from."""

    frequency: tuple[float, float] = (0.18, 0.45)
    frequency_gap: tuple[float, float] = (0.01, 0.05)
    angle_gap: tuple[float, float] = (-0.1, 0.1)
    amplitude: tuple[float, float] = (0.08, 0.2)
    jitter: int = 6
    tone_gain: tuple[float, float] = (0.7, 1.1)
    tone_bias: tuple[float, float] = (-0.03, 0.03)
    fringe: tuple[float, float] = (0.3, 1.2)
    phase_step: tuple[float, float] = (math.pi, 5.0 * math.pi / 3.0)
    max_input_psnr: float = 25.0


def draw_params(rng: np.random.Generator, ranges: SynthRanges = SynthRanges(), seed: int = 0) -> MoireParams:
    """Draw one clip's MoireParams.

    Grating 1 is a unit-amplitude carrier; grating 2 carries the drawn
    amplitude, so the amplitude range is the amplitude of the moiré itself.
    """
    f1 = rng.uniform(*ranges.frequency)
    gap = rng.uniform(*ranges.frequency_gap)
    f2 = f1 + gap if f1 + gap <= 0.5 else f1 - gap
    a1 = rng.uniform(0.0, math.pi)
    a2 = a1 + rng.uniform(*ranges.angle_gap)
    g1 = GratingParams(f1, a1, rng.uniform(0, 2 * math.pi), 1.0)
    g2 = GratingParams(f2, a2, rng.uniform(0, 2 * math.pi), rng.uniform(*ranges.amplitude))
    fringe = rng.uniform(*ranges.fringe)
    gains = rng.uniform(*ranges.tone_gain, size=3)
    bias = rng.uniform(*ranges.tone_bias, size=3)
    j = ranges.jitter
    jitter = (
        tuple(int(v) for v in rng.integers(-j, j + 1, size=2)),
        (0, 0),
        tuple(int(v) for v in rng.integers(-j, j + 1, size=2)),
    )
    return MoireParams(
        gratings=(g1, g2),
        channel_phase_shift=(0.0, fringe, 2.0 * fringe),
        color_gain=tuple(tuple(float(v) for v in row) for row in np.diag(gains)),
        bias=tuple(float(b) for b in bias),
        jitter=jitter,
        phase_step=tuple(ranges.phase_step),
        seed=seed,
    )


def params_to_text(params: MoireParams, extra: dict | None = None) -> str:
    """key=value lines; floats written with repr so they read back exactly."""
    lines = []
    for k, v in (extra or {}).items():
        lines.append(f"{k}={v}")
    for i, g in enumerate(params.gratings, start=1):
        lines += [
            f"grating{i}.frequency={g.frequency!r}",
            f"grating{i}.angle={g.angle!r}",
            f"grating{i}.phase={g.phase!r}",
            f"grating{i}.amplitude={g.amplitude!r}",
        ]
    lines.append("channel_phase_shift=" + ",".join(repr(float(v)) for v in params.channel_phase_shift))
    lines.append("color_gain=" + ",".join(repr(float(v)) for row in params.color_gain for v in row))
    lines.append("bias=" + ",".join(repr(float(v)) for v in params.bias))
    lines.append("jitter=" + ";".join(f"{dx},{dy}" for dx, dy in params.jitter))
    lines.append("phase_step=" + ",".join(repr(float(v)) for v in params.phase_step))
    lines.append(f"seed={params.seed}")
    return "\n".join(lines) + "\n"


def parse_key_values(text: str) -> dict[str, str]:
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed line (expected key=value): {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def params_from_text(text: str) -> MoireParams:
    kv = parse_key_values(text)

    def floats(key):
        return tuple(float(v) for v in kv[key].split(","))

    gratings = tuple(
        GratingParams(
            float(kv[f"grating{i}.frequency"]),
            float(kv[f"grating{i}.angle"]),
            float(kv[f"grating{i}.phase"]),
            float(kv[f"grating{i}.amplitude"]),
        )
        for i in (1, 2)
    )
    gain = floats("color_gain")
    jitter = tuple(tuple(int(v) for v in pair.split(",")) for pair in kv["jitter"].split(";"))
    return MoireParams(
        gratings=gratings,
        channel_phase_shift=floats("channel_phase_shift"),
        color_gain=(gain[0:3], gain[3:6], gain[6:9]),
        bias=floats("bias"),
        jitter=jitter,
        phase_step=floats("phase_step"),
        seed=int(kv.get("seed", 0)),
    )
