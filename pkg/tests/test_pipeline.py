from __future__ import annotations

import json

import numpy as np
import pytest

from gifrestore import gif, imageio, metrics, pipeline, quant
from gifrestore.dequant import DequantConfig
from gifrestore.errors import ConfigError
from helpers import motion_clips


def write_clip(root, name, frames):
    return imageio.write_frames(root / name, [imageio.to_uint8(f) for f in frames])


def ramp_clip(n=10, h=24, w=40, speed=2.0):
    xs = np.arange(w)[None, :]
    ys = np.arange(h)[:, None]
    out = []
    for k in range(n):
        v = 40 + 3.0 * (xs + k * speed) + 1.5 * ys
        out.append(np.repeat(np.clip(v, 0, 255)[..., None], 3, axis=2))
    return out


def fast_config(**kw):
    cfg = pipeline.PipelineConfig(**kw)
    cfg.flow.iterations = 30
    return cfg


@pytest.fixture
def dataset(tmp_path):
    src = tmp_path / "clips"
    for name, frames, _ in motion_clips(n_clips=2, n_frames=9, size=32):
        write_clip(src, name, frames)
    out = tmp_path / "ds"
    manifest = pipeline.synth_pairs(src, out, fast_config())
    return out, manifest


def test_synth_ramp_clip(tmp_path):
    write_clip(tmp_path / "in", "ramp", ramp_clip())
    out = tmp_path / "out"
    manifest = pipeline.synth_pairs(tmp_path / "in", out, pipeline.PipelineConfig(palette_size=32))
    pal = np.array(manifest["clips"][0]["palette"], np.uint8)
    assert len(pal) <= 32
    for name in ("nodither.gif", "dither.gif"):
        doc = gif.decode_gif((out / "ramp" / name).read_bytes())
        frames = gif.composite_frames(doc)
        assert len(frames) == 10
        for f in frames:
            quant.palette_indices(f, pal)  # raises if any pixel is off-palette
    assert len(imageio.list_frames(out / "ramp" / "gt")) == 10


def test_synth_single_clip_directory(tmp_path):
    write_clip(tmp_path, "only", ramp_clip(n=3))
    manifest = pipeline.synth_pairs(tmp_path / "only", tmp_path / "out")
    assert [c["id"] for c in manifest["clips"]] == ["only"]


def test_synth_binary_clip_is_lossless(tmp_path):
    rng = np.random.default_rng(0)
    frames = [(rng.integers(0, 2, (12, 12))[..., None] * np.array([[[250, 10, 10]]])).astype(np.uint8)
              for _ in range(4)]
    frames[0][0, 0] = [250, 10, 10]
    frames[0][0, 1] = [0, 0, 0]
    write_clip(tmp_path / "in", "bin", frames)
    out = tmp_path / "out"
    pipeline.synth_pairs(tmp_path / "in", out, pipeline.PipelineConfig(palette_size=2, palette_stride=1))
    for name in ("nodither.gif", "dither.gif"):
        got = gif.composite_frames(gif.decode_gif((out / "bin" / name).read_bytes()))
        assert all(np.array_equal(a, b) for a, b in zip(got, frames))


def test_dithered_and_plain_differ(dataset):
    out, manifest = dataset
    clip = manifest["clips"][0]["id"]
    a = (out / clip / "nodither.gif").read_bytes()
    b = (out / clip / "dither.gif").read_bytes()
    fa = gif.composite_frames(gif.decode_gif(a))
    fb = gif.composite_frames(gif.decode_gif(b))
    assert any(not np.array_equal(x, y) for x, y in zip(fa, fb))


def test_manifest_lists_every_file_with_hash(dataset):
    out, _ = dataset
    manifest = json.loads((out / pipeline.MANIFEST).read_text())
    listed = {e["path"]: e["sha256"] for e in manifest["files"]}
    on_disk = {str(p.relative_to(out)) for p in out.rglob("*") if p.is_file() and p.name != pipeline.MANIFEST}
    assert set(listed) == on_disk
    for path, digest in listed.items():
        assert pipeline.sha256_file(out / path) == digest


def test_synth_is_deterministic(tmp_path):
    src = tmp_path / "clips"
    for name, frames, _ in motion_clips(n_clips=2, n_frames=5, size=24, seed=3):
        write_clip(src, name, frames)
    pipeline.synth_pairs(src, tmp_path / "a", pipeline.PipelineConfig(workers=2))
    pipeline.synth_pairs(src, tmp_path / "b", pipeline.PipelineConfig(workers=1))
    assert (tmp_path / "a" / pipeline.MANIFEST).read_bytes() == (tmp_path / "b" / pipeline.MANIFEST).read_bytes()


def test_synth_empty_clip_rejected(tmp_path):
    (tmp_path / "in" / "empty").mkdir(parents=True)
    with pytest.raises(ValueError):
        pipeline.synth_pairs(tmp_path / "in", tmp_path / "out")


def test_gif_to_video_constraint_and_count(dataset, tmp_path):
    out, manifest = dataset
    clip = manifest["clips"][0]["id"]
    gif_path = out / clip / "nodither.gif"
    doc = gif.decode_gif(gif_path.read_bytes())
    res = pipeline.gif_to_video(gif_path, tmp_path / "v1", fast_config())
    assert len(res.frames) == len(doc.frames)
    written = [imageio.read_image(p) for p in imageio.list_frames(tmp_path / "v1")]
    for restored, fr in zip(written, doc.frames):
        assert np.array_equal(quant.quantize_indices(restored, doc.global_palette), fr.indices)


def test_gif_to_video_factor_two_on_five_frames(tmp_path):
    frames = [imageio.to_uint8(f) for f in motion_clips(1, 5, 24)[0][1]]
    pal = pipeline.clip_palette(frames, 32)
    path = tmp_path / "in.gif"
    path.write_bytes(gif.encode_gif(pipeline.make_gif(frames, pal, dithered=False)))
    res = pipeline.gif_to_video(path, tmp_path / "out", fast_config(interp_factor=2, dump_flow=True))
    assert len(res.frames) == 9
    assert len(imageio.list_frames(tmp_path / "out")) == 9
    assert len(list((tmp_path / "out").glob("*.flo"))) == 8
    fl = imageio.read_flo(next((tmp_path / "out").glob("*.flo")))
    assert fl.shape == (24, 24, 2)


def test_restore_uses_gif_frames_for_flow(monkeypatch):
    frames = [imageio.to_uint8(f) for f in motion_clips(1, 3, 24)[0][1]]
    pal = pipeline.clip_palette(frames, 32)
    doc = pipeline.make_gif(frames, pal, dithered=False)
    seen = []
    real = pipeline.flow.pair_flows

    def spy(fr, cfg=None):
        seen.append([f.copy() for f in fr])
        return real(fr, cfg)

    monkeypatch.setattr(pipeline.flow, "pair_flows", spy)
    res = pipeline.restore_document(doc, fast_config(interp_factor=2))
    gif_frames = gif.composite_frames(doc)
    assert len(seen) == 1
    assert all(np.array_equal(a, b) for a, b in zip(seen[0], gif_frames))
    # and the restored frames are not what flow saw
    assert not np.array_equal(res.frames[0], gif_frames[0])


def test_translating_ramp_restoration_beats_gif(tmp_path):
    gt = ramp_clip(n=5, h=32, w=48, speed=1.0)
    gt8 = [imageio.to_uint8(f) for f in gt]
    pal = pipeline.clip_palette(gt8, 8)
    doc = pipeline.make_gif(gt8, pal, dithered=False)
    res = pipeline.restore_document(doc, pipeline.PipelineConfig())
    gif_psnr = np.mean([metrics.psnr(g, t) for g, t in zip(gif.composite_frames(doc), gt)])
    out_psnr = np.mean([metrics.psnr(o, t) for o, t in zip(res.frames, gt)])
    assert out_psnr > gif_psnr


def test_restore_is_deterministic(tmp_path):
    frames = [imageio.to_uint8(f) for f in motion_clips(1, 3, 24)[0][1]]
    path = tmp_path / "in.gif"
    path.write_bytes(gif.encode_gif(pipeline.make_gif(frames, pipeline.clip_palette(frames, 16), False)))
    cfg = fast_config(interp_factor=2)
    pipeline.gif_to_video(path, tmp_path / "a", cfg)
    pipeline.gif_to_video(path, tmp_path / "b", cfg)
    assert (tmp_path / "a" / pipeline.MANIFEST).read_bytes() == (tmp_path / "b" / pipeline.MANIFEST).read_bytes()


def test_auto_routing_requires_model(tmp_path):
    with pytest.raises(ConfigError):
        pipeline.PipelineConfig(dither="auto").validate()
    cfg = pipeline.PipelineConfig(dither="auto", model_path=str(tmp_path / "missing.json"))
    doc = pipeline.make_gif([np.zeros((8, 8, 3), np.uint8)], np.zeros((1, 3), np.uint8), False)
    with pytest.raises(ConfigError):
        pipeline.restore_document(doc, cfg)


def test_auto_routing_with_fitted_model(dataset, tmp_path):
    out, manifest = dataset
    model_path = tmp_path / "router.json"
    pipeline.fit_router(out).save(model_path)
    cfg = fast_config(dither="auto", model_path=str(model_path))
    clip = manifest["clips"][0]["id"]
    for name, expected in (("nodither.gif", "non-dithered"), ("dither.gif", "dithered")):
        doc = gif.decode_gif((out / clip / name).read_bytes())
        assert pipeline.restore_document(doc, cfg).mode == expected


def test_config_round_trip(tmp_path):
    cfg = pipeline.PipelineConfig(palette_size=16, interp_factor=4,
                                  dequant=DequantConfig(unfold_steps=3))
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    back = pipeline.PipelineConfig.load(path)
    assert back.to_dict() == cfg.to_dict()
    with pytest.raises(ConfigError):
        pipeline.PipelineConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        pipeline.PipelineConfig.from_dict({"dequant": {"unfold_steps": 0}})
    with pytest.raises(ConfigError):
        pipeline.PipelineConfig(palette_size=300).validate()


def test_eval_empty_factor_list(dataset):
    out, _ = dataset
    assert pipeline.eval_sweep(out, fast_config(), []) == []


def test_eval_rejects_short_clips():
    clips = motion_clips(1, 4, 24)
    with pytest.raises(ValueError):
        pipeline.eval_sweep(clips, fast_config(), [4])


def test_eval_records(dataset):
    out, manifest = dataset
    records = pipeline.eval_sweep(out, fast_config(), [1, 2])
    assert [(r.clip_id, r.factor) for r in records] == [
        (c["id"], f) for f in (1, 2) for c in manifest["clips"]]
    for r in records:
        assert len(r.gif_reports) == len(r.restored_reports) == 9
        assert r.gif_mean["psnr"] == pytest.approx(np.mean([x.psnr for x in r.gif_reports]))
        assert r.restored_mean["psnr"] >= r.gif_mean["psnr"]
    csv_text = pipeline.records_to_csv(records)
    assert len(csv_text.strip().splitlines()) == 1 + len(records)
    json.dumps([r.to_dict() for r in records])


def test_eval_sweep_trend():
    clips = motion_clips(n_clips=2, n_frames=17, size=32)
    summary = pipeline.summarize(pipeline.eval_sweep(clips, fast_config(), [1, 2, 4, 8]))
    gif_psnr = [row["gif_psnr"] for row in summary]
    assert all(a > b for a, b in zip(gif_psnr, gif_psnr[1:]))
    assert all(row["restored_psnr"] >= row["gif_psnr"] for row in summary)


def test_eval_is_deterministic():
    clips = motion_clips(n_clips=1, n_frames=5, size=24)
    a = pipeline.eval_sweep(clips, fast_config(workers=2), [1, 2])
    b = pipeline.eval_sweep(clips, fast_config(), [1, 2])
    assert pipeline.records_to_csv(a) == pipeline.records_to_csv(b)
