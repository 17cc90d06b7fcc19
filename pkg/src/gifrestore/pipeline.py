"""End-to-end orchestration: dataset synthesis, GIF restoration and the temporal sweep."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import ditherdetect, flow, gif, imageio, metrics, quant
from .dequant import DITHERED, NON_DITHERED, DequantConfig, dequantize, feasible_uint8
from .errors import ConfigError

log = logging.getLogger(__name__)

DITHER_CHOICES = ("on", "off", "auto")
FORMATS = ("png", "ppm")
MANIFEST = "manifest.json"


@dataclass
class PipelineConfig:
    palette_size: int = 32
    dither: str = "off"
    model_path: str | None = None
    dequant: DequantConfig = field(default_factory=DequantConfig)
    flow: flow.FlowConfig = field(default_factory=flow.FlowConfig)
    interp_factor: int = 1
    output_format: str = "png"
    palette_stride: int = 4
    delay: int = 4
    workers: int = 1
    seed: int = 0
    dump_flow: bool = False

    def validate(self) -> None:
        if not 1 <= self.palette_size <= 256:
            raise ConfigError(f"palette_size must be in [1, 256], got {self.palette_size}")
        if self.dither not in DITHER_CHOICES:
            raise ConfigError(f"dither must be one of {DITHER_CHOICES}, got {self.dither!r}")
        if self.dither == "auto" and not self.model_path:
            raise ConfigError("dither='auto' needs a fitted classifier (model_path)")
        if self.interp_factor < 1:
            raise ConfigError("interp_factor must be >= 1")
        if self.output_format not in FORMATS:
            raise ConfigError(f"output_format must be one of {FORMATS}")
        if self.palette_stride < 1 or self.workers < 1:
            raise ConfigError("palette_stride and workers must be >= 1")
        self.dequant.validate()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "dequant" in d:
                d["dequant"] = DequantConfig(**d["dequant"])
            if "flow" in d:
                d["flow"] = flow.FlowConfig(**d["flow"])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(root: Path, files: list[Path], extra: dict | None = None) -> Path:
    entries = [{"path": str(p.relative_to(root)), "sha256": sha256_file(p)} for p in sorted(files)]
    doc = dict(extra or {})
    doc["files"] = entries
    path = root / MANIFEST
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


# ---- GIF creation ---------------------------------------------------------

def clip_palette(frames: list[np.ndarray], n: int, stride: int = 4) -> np.ndarray:
    """Median-cut palette over every ``stride``-th frame of a clip."""
    sample = np.concatenate([np.asarray(f).reshape(-1, 3) for f in frames[::stride]])
    return quant.median_cut_palette(sample.reshape(-1, 1, 3), n)


def make_gif(frames: list[np.ndarray], palette: np.ndarray, dithered: bool,
             delay: int = 4, loop_count: int = 0) -> gif.GifDocument:
    """Quantize (or dither) frames onto one shared palette."""
    if not frames:
        raise ValueError("cannot build a GIF from zero frames")
    h, w = np.asarray(frames[0]).shape[:2]
    to_indices = quant.dither_indices if dithered else quant.quantize_indices
    out = []
    for fr in frames:
        if np.asarray(fr).shape[:2] != (h, w):
            raise ValueError("all frames of a clip must have the same size")
        out.append(gif.IndexedFrame(to_indices(fr, palette).astype(np.uint8), delay=delay))
    return gif.GifDocument(w, h, np.asarray(palette, np.uint8), out, loop_count=loop_count)


def _clip_dirs(frames_dir: Path) -> list[tuple[str, Path]]:
    subdirs = sorted(p for p in frames_dir.iterdir() if p.is_dir())
    if subdirs:
        return [(p.name, p) for p in subdirs]
    return [(frames_dir.name, frames_dir)]


def synth_pairs(frames_dir: str | Path, out_dir: str | Path, cfg: PipelineConfig | None = None) -> dict:
    """Build dithered and non-dithered GIFs plus ground-truth copies for each clip.

    ``frames_dir`` holds one sub-directory of frames per clip (or is itself a
    single clip). Writes ``<clip>/gt/*.png``, ``<clip>/nodither.gif``,
    ``<clip>/dither.gif`` and a manifest with content hashes.
    """
    cfg = cfg or PipelineConfig()
    cfg.validate()
    frames_dir, out_dir = Path(frames_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    clips = _clip_dirs(frames_dir)

    def one(item):
        clip_id, path = item
        files = imageio.list_frames(path)
        if not files:
            raise ValueError(f"clip {clip_id!r} has no frames")
        frames = [imageio.read_image(p) for p in files]
        palette = clip_palette(frames, cfg.palette_size, cfg.palette_stride)
        clip_out = out_dir / clip_id
        written = imageio.write_frames(clip_out / "gt", frames)
        for name, dithered in (("nodither.gif", False), ("dither.gif", True)):
            p = clip_out / name
            p.write_bytes(gif.encode_gif(make_gif(frames, palette, dithered, cfg.delay)))
            written.append(p)
        log.info("synthesized clip %s (%d frames, %d colors)", clip_id, len(frames), len(palette))
        return {"id": clip_id, "n_frames": len(frames), "palette": palette.tolist()}, written

    with ThreadPoolExecutor(cfg.workers) as pool:
        results = list(pool.map(one, clips))
    all_files = [p for _, ws in results for p in ws]
    manifest = {"palette_size": cfg.palette_size, "clips": [r for r, _ in results]}
    write_manifest(out_dir, all_files, manifest)
    return manifest


# ---- restoration ------------------------------------------------------------

@dataclass
class Restoration:
    frames: list[np.ndarray]       # uint8 output sequence
    mode: str
    gif_frames: list[np.ndarray]   # composited input frames
    flows: list[tuple[np.ndarray, np.ndarray]]


def _frame_palette(doc: gif.GifDocument, frame: gif.IndexedFrame, canvas: np.ndarray) -> np.ndarray:
    """The frame's color table, deduplicated, plus any other colors on the canvas.

    Canvas pixels kept from earlier frames may use colors outside this frame's table.
    """
    pal = doc.palette_for(frame)
    _, first = np.unique(pal, axis=0, return_index=True)
    pal = pal[np.sort(first)]
    known = {tuple(c) for c in pal.tolist()}
    extra = [c for c in np.unique(canvas.reshape(-1, 3), axis=0).tolist() if tuple(c) not in known]
    if extra:
        pal = np.concatenate([pal, np.array(extra, dtype=np.uint8)])
    return pal


def route(gif_frames: list[np.ndarray], cfg: PipelineConfig,
          model: ditherdetect.LinearClassifier | None = None) -> str:
    if cfg.dither == "on":
        return DITHERED
    if cfg.dither == "off":
        return NON_DITHERED
    if model is None:
        if not cfg.model_path or not Path(cfg.model_path).is_file():
            raise ConfigError(f"classifier model not found: {cfg.model_path}")
        model = ditherdetect.LinearClassifier.load(cfg.model_path)
    return ditherdetect.classify_clip(gif_frames, model)


def _mode_config(base: DequantConfig, mode: str) -> DequantConfig:
    d = base.to_dict()
    d["mode"] = mode
    if mode == DITHERED:
        d["constraint"] = "off"
        d["operator"] = "smoothing"
    return DequantConfig(**d)


def restore_document(doc: gif.GifDocument, cfg: PipelineConfig | None = None,
                     model: ditherdetect.LinearClassifier | None = None) -> Restoration:
    """Dequantize every frame, estimate flow on the GIF frames, interpolate."""
    cfg = cfg or PipelineConfig()
    cfg.validate()
    canvases = gif.composite_frames(doc)
    if not canvases:
        raise ValueError("GIF has no frames")
    mode = route(canvases, cfg, model)
    dcfg = _mode_config(cfg.dequant, mode)

    def restore(i):
        g = canvases[i]
        pal = _frame_palette(doc, doc.frames[i], g)
        est = dequantize(g, pal, dcfg)
        if dcfg.constraint == "hard":
            return feasible_uint8(est, pal, quant.palette_indices(g, pal))
        return imageio.to_uint8(est)

    gif_float = [c.astype(np.float64) for c in canvases]
    with ThreadPoolExecutor(cfg.workers) as pool:
        # dequantization and flow only share the GIF frames, so they run side by side
        restored_future = [pool.submit(restore, i) for i in range(len(canvases))]
        flows = []
        if cfg.interp_factor > 1 and len(canvases) > 1:
            flows = flow.pair_flows(gif_float, cfg.flow)
        restored = [f.result() for f in restored_future]

    if cfg.interp_factor > 1 and len(restored) > 1:
        seq = flow.interpolate_sequence([r.astype(np.float64) for r in restored], cfg.interp_factor,
                                        cfg=cfg.flow, flows=flows)
        frames = [imageio.to_uint8(f) for f in seq]
    else:
        frames = restored
    return Restoration(frames=frames, mode=mode, gif_frames=canvases, flows=flows)


def gif_to_video(gif_path: str | Path, out_dir: str | Path, cfg: PipelineConfig | None = None,
                 model: ditherdetect.LinearClassifier | None = None) -> Restoration:
    """Decode a GIF, restore it and write the frame sequence plus a manifest."""
    cfg = cfg or PipelineConfig()
    doc = gif.decode_gif(Path(gif_path).read_bytes())
    result = restore_document(doc, cfg, model)
    out_dir = Path(out_dir)
    written = imageio.write_frames(out_dir, result.frames, suffix="." + cfg.output_format)
    if cfg.dump_flow:
        for k, (f01, f10) in enumerate(result.flows):
            for name, fl in ((f"flow_{k:05d}_fwd.flo", f01), (f"flow_{k:05d}_bwd.flo", f10)):
                imageio.write_flo(out_dir / name, fl)
                written.append(out_dir / name)
    write_manifest(out_dir, written, {"mode": result.mode, "config": cfg.to_dict(),
                                      "source": Path(gif_path).name})
    return result


# ---- evaluation -------------------------------------------------------------

@dataclass
class EvalRecord:
    clip_id: str
    factor: int
    gif_reports: list[metrics.QualityReport]
    restored_reports: list[metrics.QualityReport]

    @property
    def gif_mean(self) -> dict:
        return metrics.mean_report(self.gif_reports)

    @property
    def restored_mean(self) -> dict:
        return metrics.mean_report(self.restored_reports)

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "factor": self.factor,
            "gif_mean": self.gif_mean,
            "restored_mean": self.restored_mean,
            "gif_frames": [r.to_dict() for r in self.gif_reports],
            "restored_frames": [r.to_dict() for r in self.restored_reports],
        }


def evaluate_clip(clip_id: str, gt: list[np.ndarray], palette: np.ndarray, factor: int,
                  cfg: PipelineConfig, model=None) -> EvalRecord:
    """Subsample ``gt`` by ``factor``, make a GIF, restore it at full rate and score.

    The GIF baseline holds each sampled frame until the next one arrives.
    """
    sampled = gt[::factor]
    if len(sampled) < 2:
        raise ValueError(f"clip {clip_id!r} has fewer than 2 frames after subsampling by {factor}")
    n_used = (len(sampled) - 1) * factor + 1
    doc = make_gif(sampled, palette, dithered=cfg.dither == "on", delay=cfg.delay * factor)
    doc = gif.decode_gif(gif.encode_gif(doc))
    run_cfg = PipelineConfig.from_dict({**cfg.to_dict(), "interp_factor": factor})
    result = restore_document(doc, run_cfg, model)
    gif_reports, restored_reports = [], []
    for t in range(n_used):
        gif_reports.append(metrics.quality_report(result.gif_frames[t // factor], gt[t]))
        restored_reports.append(metrics.quality_report(result.frames[t], gt[t]))
    return EvalRecord(clip_id, factor, gif_reports, restored_reports)


def load_dataset(dataset_dir: str | Path) -> list[tuple[str, list[np.ndarray], np.ndarray]]:
    dataset_dir = Path(dataset_dir)
    manifest = json.loads((dataset_dir / MANIFEST).read_text())
    clips = []
    for clip in manifest["clips"]:
        gt = imageio.read_frames(dataset_dir / clip["id"] / "gt")
        clips.append((clip["id"], gt, np.array(clip["palette"], dtype=np.uint8)))
    return clips


def eval_sweep(dataset, cfg: PipelineConfig | None = None, factors=(1, 2, 4, 8),
               model=None) -> list[EvalRecord]:
    """Score GIF and restored sequences against full-rate ground truth per factor.

    ``dataset`` is a directory produced by :func:`synth_pairs` or a list of
    ``(clip_id, frames, palette)`` tuples.
    """
    cfg = cfg or PipelineConfig()
    cfg.validate()
    clips = load_dataset(dataset) if isinstance(dataset, (str, Path)) else list(dataset)
    jobs = [(clip_id, gt, pal, f) for f in factors for clip_id, gt, pal in clips]
    with ThreadPoolExecutor(cfg.workers) as pool:
        return list(pool.map(lambda j: evaluate_clip(*j, cfg=cfg, model=model), jobs))


def summarize(records: list[EvalRecord]) -> list[dict]:
    """Per-factor means across videos (each video already averaged over its frames)."""
    out = []
    for f in sorted({r.factor for r in records}):
        rs = [r for r in records if r.factor == f]
        out.append({
            "factor": f,
            "videos": len(rs),
            "gif_psnr": float(np.mean([r.gif_mean["psnr"] for r in rs])),
            "gif_ssim": float(np.mean([r.gif_mean["ssim"] for r in rs])),
            "restored_psnr": float(np.mean([r.restored_mean["psnr"] for r in rs])),
            "restored_ssim": float(np.mean([r.restored_mean["ssim"] for r in rs])),
        })
    return out


def records_to_csv(records: list[EvalRecord]) -> str:
    lines = ["clip_id,factor,frames,gif_psnr,gif_ssim,restored_psnr,restored_ssim"]
    for r in records:
        g, s = r.gif_mean, r.restored_mean
        lines.append(f"{r.clip_id},{r.factor},{len(r.gif_reports)},{g['psnr']:.4f},{g['ssim']:.4f},"
                     f"{s['psnr']:.4f},{s['ssim']:.4f}")
    return "\n".join(lines) + "\n"


def fit_router(dataset_dir: str | Path, seed: int = 0) -> ditherdetect.LinearClassifier:
    """Train the dither classifier on the GIF pairs of a synthesized dataset."""
    dataset_dir = Path(dataset_dir)
    manifest = json.loads((dataset_dir / MANIFEST).read_text())
    pairs = []
    for clip in manifest["clips"]:
        for name, label in (("nodither.gif", NON_DITHERED), ("dither.gif", DITHERED)):
            doc = gif.decode_gif((dataset_dir / clip["id"] / name).read_bytes())
            pairs += [(ditherdetect.extract_features(c), label) for c in gif.composite_frames(doc)]
    return ditherdetect.fit(pairs, seed=seed)
