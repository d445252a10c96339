"""Benchmarking against ground-truth HR renders and the ablation sweep."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .. import gass, ltfi, rasterizer
from ..errors import ConfigurationError
from ..metrics import MetricReport
from ..scene.camera import CameraPath, load_camera_path
from ..scene.ply import load_ply
from .checkpoint import ModelCheckpoint, build_model
from .config import ABLATIONS, RunConfig
from .data import eval_seed, mid_times, orbit_path, sample_times, synthetic_scene
from .pipeline import PipelineFlags, native_hr_sequence, render_sequence
from .train import TrainConfig, train_gass, train_ltfi

logger = logging.getLogger(__name__)


def scene_from_config(cfg: RunConfig):
    if cfg.scene:
        return load_ply(cfg.scene)
    return synthetic_scene(eval_seed(cfg.seed), cfg.gaussians, cfg.extent, cfg.sh_degree)


def path_from_config(cfg: RunConfig) -> CameraPath:
    W, H = cfg.hr_res
    if cfg.path is None:
        return orbit_path(eval_seed(cfg.seed), cfg.frames, W, H)
    path = load_camera_path(cfg.path)
    k0 = path.keyframes[0]
    if (k0.width, k0.height) == (W, H):
        return path
    f = W / k0.width
    if round(k0.height * f) != H:
        raise ConfigurationError(f"camera path aspect {k0.width}×{k0.height} does not match {W}×{H}")
    return CameraPath(tuple(k.scaled(f, W, H) for k in path.keyframes), path.rate)


def load_models(cfg: RunConfig):
    """Models from the checkpoints named in the config, fresh ones otherwise.

    A fresh GASS model is the closed-form Hermite interpolator; a fresh LTFI
    model is untrained.
    """
    gm = lm = None
    for p in cfg.checkpoints:
        ck = ModelCheckpoint.load(p)
        model = build_model(ck)
        if ck.kind == "gass":
            gm = model
        else:
            lm = model
    if gm is None:
        logger.warning("no GASS checkpoint given; using the Hermite initialization")
        gm = gass.GassModel(cfg.scale)
    if lm is None:
        logger.warning("no LTFI checkpoint given; using an untrained interpolator")
        lm = ltfi.LtfiModel(cfg.scale)
    if gm.scale != cfg.scale or lm.scale != cfg.scale:
        raise ConfigurationError(f"checkpoint scale differs from --scale {cfg.scale}")
    return gm, lm


def frame_times(n: int) -> list[float]:
    """Presentation-order output times for n keyframes."""
    ts = sample_times(n)
    ms = mid_times(n)
    out = []
    for k, t in enumerate(ts):
        if k:
            out.append(ms[k - 1])
        out.append(t)
    return out


def bench(cfg: RunConfig, gass_model=None, ltfi_model=None, mode: str = "pipeline",
          scene=None, path=None, measure_native: bool = True) -> MetricReport:
    """Run the sequence, then compare every output frame with a native HR
    render at the same time. Ground-truth renders are outside the timed run."""
    scene = scene if scene is not None else scene_from_config(cfg)
    path = path if path is not None else path_from_config(cfg)
    times = frame_times(cfg.frames)
    report = MetricReport()
    if mode == "native":
        frames, seconds = native_hr_sequence(scene, path, times, cfg.workers)
        kinds = ["native"] * len(times)
        report.fps = len(frames) / seconds
        report.timing_ms = {"render_hr": seconds * 1000.0}
        gt = frames
    else:
        if gass_model is None or ltfi_model is None:
            gm, lm = load_models(cfg)
            gass_model = gass_model or gm
            ltfi_model = ltfi_model or lm
        res = render_sequence(scene, path, cfg.frames, cfg.scale, gass_model, ltfi_model,
                              PipelineFlags.from_names(cfg.ablate), cfg.serial, cfg.workers)
        frames = [f.image for f in res.frames]
        kinds = [f.kind for f in res.frames]
        report.fps = res.ledger.fps
        report.timing_ms = res.ledger.stage_ms()
        report.timing_ms["total"] = res.ledger.total_seconds * 1000.0
        report.extra.update(hr_renders=res.ledger.hr_renders, lr_renders=res.ledger.lr_renders,
                            frames_output=res.ledger.frames_output,
                            counted_frames=res.ledger.counted_frames)
        gt = None
    if gt is None or measure_native:
        t0 = time.perf_counter()
        gt_frames = [rasterizer.render(scene, path.at(t), workers=cfg.workers).color for t in times]
        native_s = time.perf_counter() - t0
        report.extra["native_hr_fps"] = len(times) / native_s
        gt = gt if gt is not None else gt_frames
    for i, (t, k, img, ref) in enumerate(zip(times, kinds, frames, gt)):
        report.add(i, t, k, img, ref)
    return report


@dataclass
class AblationRow:
    name: str
    report: MetricReport


VARIANTS = ("full",) + ABLATIONS


def train_variants(tc: TrainConfig) -> dict:
    """Variant name → (GASS, LTFI) models, retraining only what each ablation
    changes: GASS without GTRR, LTFI without gradients, LTFI without TRU."""
    g_full, _, _ = train_gass(tc)
    g_plain, _, _ = train_gass(_replace(tc, no_gtrr=True))
    l_full, _, _ = train_ltfi(tc)
    l_no_gi, _, _ = train_ltfi(_replace(tc, no_gi=True))
    l_no_tru, _, _ = train_ltfi(_replace(tc, no_tru=True))
    return {"full": (g_full, l_full), "no_gai": (g_full, l_full),
            "no_gtrr": (g_plain, l_full), "no_gi": (g_full, l_no_gi),
            "no_tru": (g_full, l_no_tru)}


def ablate(cfg: RunConfig, gass_model=None, ltfi_model=None, train_cfg: TrainConfig | None = None,
           scene=None, path=None, models: dict | None = None) -> list[AblationRow]:
    """FULL plus the four single-component ablations on one evaluation run.

    ``models`` maps each variant to its (GASS, LTFI) pair. Without it,
    ``train_cfg`` retrains the affected variants from scratch on the same
    data; otherwise the toggles act on the given models.
    """
    scene = scene if scene is not None else scene_from_config(cfg)
    path = path if path is not None else path_from_config(cfg)
    if models is None and train_cfg is not None:
        models = train_variants(train_cfg)
    elif models is None:
        if gass_model is None or ltfi_model is None:
            gass_model, ltfi_model = load_models(cfg)
        models = {v: (gass_model, ltfi_model) for v in VARIANTS}
    rows = []
    for v in VARIANTS:
        vcfg = cfg.replace(ablate=() if v == "full" else (v,))
        gm, lm = models[v]
        rows.append(AblationRow(v, bench(vcfg, gm, lm, scene=scene, path=path,
                                         measure_native=False)))
    return rows


def _replace(tc: TrainConfig, **kw) -> TrainConfig:
    import dataclasses

    return dataclasses.replace(tc, **kw)


def ablation_table(rows: list[AblationRow]) -> str:
    full = rows[0].report.psnr
    lines = [f"{'variant':<10} {'psnr':>9} {'ssim':>9} {'delta':>8}"]
    for r in rows:
        lines.append(f"{r.name:<10} {r.report.psnr:9.4f} {r.report.ssim:9.6f} {r.report.psnr - full:8.4f}")
    return "\n".join(lines) + "\n"


def ablation_csv(rows: list[AblationRow]) -> str:
    out = ["variant,psnr,ssim,fps"]
    out += [f"{r.name},{r.report.psnr:.6f},{r.report.ssim:.6f},{r.report.fps:.6f}" for r in rows]
    return "\n".join(out) + "\n"
