import json

import numpy as np
import pytest

from demoire.bilateral import BilateralGrid
from demoire.dataset import make_clip, write_dataset
from demoire.image import Clip, quantize, save_image
from demoire.metrics import psnr
from demoire.pipeline import (
    ConfigError,
    PipelineConfig,
    calibration_pair,
    evaluate,
    list_clips,
    process_clip,
    report_to_text,
)
from demoire.synth import GratingParams, MoireParams, params_to_text


def test_config_text_roundtrip_and_validation():
    cfg = PipelineConfig(block_size=16, directional=False, ridge=0.01, interpolation="trilinear")
    assert PipelineConfig.from_text(cfg.to_text()) == cfg
    with pytest.raises(ConfigError):
        PipelineConfig.from_text("unknown_key=1")
    with pytest.raises(ConfigError):
        PipelineConfig.from_text("align=maybe")
    with pytest.raises(ConfigError):
        PipelineConfig(block_size=5).validate()
    with pytest.raises(ConfigError):
        PipelineConfig(bank="file").validate()
    with pytest.raises(ConfigError):
        PipelineConfig(grid="load").validate()
    with pytest.raises(ConfigError):
        PipelineConfig(temperature=0).validate()


def test_identity_config_reproduces_reference():
    clip, _, _ = make_clip(2, 0, size=64)
    out = process_clip(clip, PipelineConfig.identity()).output
    assert np.array_equal(quantize(out), quantize(clip.ref))


def test_fit_grid_needs_a_pair():
    clip, _, _ = make_clip(2, 1, size=64)
    with pytest.raises(ConfigError):
        process_clip(clip, PipelineConfig())


def test_default_pipeline_improves_a_synthetic_clip():
    clip, gt, params = make_clip(4, 0, size=128)
    res = process_clip(clip, PipelineConfig(), calibration_pair(params))
    assert psnr(res.output, gt) > psnr(clip.ref, gt)
    assert res.output.shape == gt.shape and res.output.min() >= 0 and res.output.max() <= 1


def test_tdr_with_fitted_grid_beats_the_intermediate():
    clip, gt, params = make_clip(4, 1, size=128)
    with_tdr = process_clip(clip, PipelineConfig(), calibration_pair(params))
    without = process_clip(clip, PipelineConfig(tdr=False))
    assert psnr(with_tdr.output, gt) > psnr(without.output, gt)


def test_loaded_grid_is_used(tmp_path):
    clip, _, _ = make_clip(4, 2, size=64)
    BilateralGrid.constant(0.0, 0.25).save(tmp_path / "g.bgrd")
    cfg = PipelineConfig(grid="load", grid_path=str(tmp_path / "g.bgrd"))
    np.testing.assert_allclose(process_clip(clip, cfg).output, 0.25, atol=1e-6)


def _write_clean_dataset(root, n=2, size=64):
    params = MoireParams(gratings=(GratingParams(0.3, 0.1, 0.0, 0.0), GratingParams(0.32, 0.1, 0.0, 0.0)))
    for i in range(n):
        clip_dir = root / f"clip{i:03d}"
        clip_dir.mkdir(parents=True)
        gt = np.random.default_rng(i).random((size, size, 3)).astype(np.float32)
        for name in ("m_prev.png", "m_ref.png", "m_next.png", "gt.png"):
            save_image(gt, clip_dir / name)
        (clip_dir / "params.txt").write_text(params_to_text(params))


def test_eval_on_moire_free_dataset(tmp_path):
    _write_clean_dataset(tmp_path / "ds")
    report = evaluate(tmp_path / "ds", PipelineConfig.identity())
    assert report["aggregate"]["count"] == 2
    assert all(r["output"]["psnr"] >= 50.0 for r in report["clips"])


def test_eval_empty_and_malformed(tmp_path):
    (tmp_path / "empty").mkdir()
    report = evaluate(tmp_path / "empty", PipelineConfig())
    assert report["aggregate"]["count"] == 0 and report["clips"] == []
    json.loads(report_to_text(report))

    _write_clean_dataset(tmp_path / "bad", n=1)
    (tmp_path / "bad" / "clip000" / "gt.png").unlink()
    with pytest.raises(ValueError, match="malformed"):
        list_clips(tmp_path / "bad")
    with pytest.raises(FileNotFoundError):
        list_clips(tmp_path / "nowhere")


def test_report_structure(tmp_path):
    write_dataset(tmp_path / "ds", 2, seed=3, size=64)
    report = evaluate(tmp_path / "ds", PipelineConfig(tdr=False))
    row = report["clips"][0]
    assert set(row) == {"clip", "input", "output", "temporal"}
    assert set(row["output"]) == {"psnr", "ssim", "l1"}
    agg = report["aggregate"]
    assert agg["psnr_gain"]["mean"] == pytest.approx(agg["output_psnr"]["mean"] - agg["input_psnr"]["mean"], abs=1e-5)
    assert report["config"]["tdr"] == "false"


def test_clip_result_exposes_stages():
    clip, _, params = make_clip(4, 3, size=64)
    res = process_clip(clip, PipelineConfig(), calibration_pair(params))
    assert len(res.demoired) == 3 and len(res.fields) == 3
    assert isinstance(res.aligned, Clip)
    assert np.all(res.fields[1].shifts == 0)
