"""Reproduce the synthetic benchmark and check it against a committed manifest.

The manifest is a key=value file holding the suite seed, clip count, frame
size, the synthesis parameter ranges and the frozen metric bounds.
"""

from __future__ import annotations

import dataclasses
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import write_dataset
from .pipeline import PipelineConfig, evaluate
from .synth import SynthRanges, parse_key_values

ABLATIONS = {
    "no_directional": {"directional": False},
    "no_align": {"align": False},
    "no_tdr": {"tdr": False},
}

_RANGE_KEYS = ("frequency", "frequency_gap", "angle_gap", "amplitude", "tone_gain", "tone_bias", "fringe", "phase_step")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Manifest:
    seed: int
    count: int
    size: int
    ranges: SynthRanges
    min_psnr_gain: float
    min_output_psnr: float
    max_eval_seconds: float


def parse_manifest(text: str) -> Manifest:
    kv = parse_key_values(text)
    try:
        ranges = {}
        for key in _RANGE_KEYS:
            if key in kv:
                lo, hi = (float(v) for v in kv[key].split(","))
                ranges[key] = (lo, hi)
        if "jitter" in kv:
            ranges["jitter"] = int(kv["jitter"])
        if "max_input_psnr" in kv:
            ranges["max_input_psnr"] = float(kv["max_input_psnr"])
        return Manifest(
            seed=int(kv["seed"]),
            count=int(kv["count"]),
            size=int(kv["size"]),
            ranges=dataclasses.replace(SynthRanges(), **ranges),
            min_psnr_gain=float(kv["min_psnr_gain"]),
            min_output_psnr=float(kv["min_output_psnr"]),
            max_eval_seconds=float(kv["max_eval_seconds"]),
        )
    except KeyError as exc:
        raise ManifestError(f"manifest lacks {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ManifestError(f"bad manifest value: {exc}") from None


def load_manifest(path) -> Manifest:
    return parse_manifest(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class Check:
    metric: str
    value: float
    bound: float
    op: str  # ">=" or "<="

    @property
    def passed(self) -> bool:
        return self.value >= self.bound if self.op == ">=" else self.value <= self.bound


@dataclass
class BenchmarkResult:
    checks: list[Check]
    reports: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[str]:
        return [c.metric for c in self.checks if not c.passed]

    def table(self) -> str:
        rows = [f"{'metric':<32} {'value':>10}    {'bound':>10}  result"]
        for c in self.checks:
            rows.append(f"{c.metric:<32} {c.value:>10.3f} {c.op} {c.bound:>10.3f}  {'PASS' if c.passed else 'FAIL'}")
        rows.append("benchmark " + ("PASS" if self.passed else "FAIL: " + ", ".join(self.failures)))
        return "\n".join(rows) + "\n"


def _run(manifest: Manifest, dataset: Path) -> BenchmarkResult:
    write_dataset(dataset, manifest.count, manifest.seed, manifest.size, manifest.ranges)

    start = time.perf_counter()
    full = evaluate(dataset, PipelineConfig())
    elapsed = time.perf_counter() - start
    agg = full["aggregate"]
    reports = {"full": full}
    out_psnr = agg["output_psnr"]["mean"]
    checks = [
        Check("psnr_gain", agg["psnr_gain"]["mean"], manifest.min_psnr_gain, ">="),
        Check("output_psnr", out_psnr, manifest.min_output_psnr, ">="),
        Check("eval_seconds", elapsed, manifest.max_eval_seconds, "<="),
    ]
    for name, change in ABLATIONS.items():
        report = evaluate(dataset, dataclasses.replace(PipelineConfig(), **change))
        reports[name] = report
        # the full pipeline must not lose to any single ablation
        checks.append(Check(f"full_minus_{name}_psnr", out_psnr - report["aggregate"]["output_psnr"]["mean"], 0.0, ">="))
    return BenchmarkResult(checks, reports)


def reproduce(manifest: Manifest, work_dir=None) -> BenchmarkResult:
    """Regenerate the suite from the manifest seed and check every bound."""
    if work_dir is not None:
        return _run(manifest, Path(work_dir) / "dataset")
    with tempfile.TemporaryDirectory(prefix="demoire-bench-") as tmp:
        return _run(manifest, Path(tmp) / "dataset")
