"""Command-line entry point: ``splatss <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .. import gass, rasterizer
from ..errors import SplatError
from ..scene.camera import save_camera_path
from ..scene.ply import save_ply
from ..tensor import ft32
from .bench import (ablate, ablation_csv, ablation_table, bench, frame_times, load_models,
                    path_from_config, scene_from_config)
from .config import ABLATIONS, RunConfig, parse_resolution, read_config_file
from .data import synthetic_scene
from .pipeline import PipelineFlags, render_sequence
from .train import TrainConfig, train_gass, train_ltfi

logger = logging.getLogger("splatss")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--scene", help="binary PLY scene; synthetic when omitted")
    p.add_argument("--path", help="camera path file")
    p.add_argument("--lr-res", default=None, metavar="WxH", help="low-resolution size")
    p.add_argument("--scale", type=int, choices=(2, 4), default=None)
    p.add_argument("--frames", type=int, default=None, metavar="N", help="keyframes to render")
    p.add_argument("--seed", type=int, default=None, metavar="K")
    p.add_argument("--ablate", action="append", choices=ABLATIONS, default=None)
    p.add_argument("--serial", action="store_true", default=None, help="disable stage overlap")
    p.add_argument("--out", default=None, metavar="DIR")
    p.add_argument("--checkpoint", action="append", default=None, metavar="FILE")
    p.add_argument("--config", metavar="FILE", help="INI file whose values override flags")
    p.add_argument("--gaussians", type=int, default=None, help="synthetic scene size")
    p.add_argument("--workers", type=int, default=None, help="rasterizer tile threads")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="splatss", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-scene", help="write a synthetic scene as PLY")
    _common(p)
    p.add_argument("--sh-degree", type=int, default=0)
    p.add_argument("--write-path", action="store_true", help="also write a camera path file")

    for name, text in (("render", "rasterize LR (and HR) frames with G-buffers"),
                       ("upsample", "super-sample LR renders"),
                       ("interpolate", "full pipeline: upsample and interpolate"),
                       ("bench", "pipeline metrics against native HR renders")):
        p = sub.add_parser(name, help=text)
        _common(p)
        if name == "render":
            p.add_argument("--hr", action="store_true", help="render at HR instead of LR")
        if name == "bench":
            p.add_argument("--native", action="store_true", help="time native HR rendering instead")

    for name in ("train-gass", "train-ltfi"):
        p = sub.add_parser(name, help=f"train and write a {name[6:].upper()} checkpoint")
        _common(p)
        p.add_argument("--steps", type=int, default=200)
        p.add_argument("--sequences", type=int, default=6)

    p = sub.add_parser("ablate", help="FULL plus the four single-component ablations")
    _common(p)
    p.add_argument("--train-steps", type=int, default=0,
                   help="retrain affected variants for this many steps (0: toggle only)")
    return ap


def config_from_args(args) -> RunConfig:
    values = {}
    if args.scene is not None:
        values["scene"] = args.scene
    if args.path is not None:
        values["path"] = args.path
    if args.lr_res is not None:
        values["lr_res"] = parse_resolution(args.lr_res)
    for key in ("scale", "frames", "seed", "out", "gaussians", "workers"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    if args.serial:
        values["serial"] = True
    if args.ablate:
        values["ablate"] = tuple(args.ablate)
    if args.checkpoint:
        values["checkpoints"] = tuple(args.checkpoint)
    if args.config:
        values.update(read_config_file(args.config))
    return RunConfig(**values)


def _write_frames(out: Path, frames, stem="frame"):
    out.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(frames):
        rasterizer.write_ppm(out / f"{stem}_{i:04d}.ppm", img)
        ft32.save(out / f"{stem}_{i:04d}.ft32", img)


def cmd_synth_scene(args, cfg: RunConfig):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    scene = synthetic_scene(cfg.seed, cfg.gaussians, cfg.extent, args.sh_degree)
    save_ply(scene, out / "scene.ply")
    print(f"wrote {out / 'scene.ply'} ({scene.count} Gaussians)")
    if args.write_path:
        save_camera_path(path_from_config(cfg), out / "path.txt")
        print(f"wrote {out / 'path.txt'}")


def cmd_render(args, cfg: RunConfig):
    scene, path = scene_from_config(cfg), path_from_config(cfg)
    out = Path(cfg.out)
    for i, t in enumerate(frame_times(cfg.frames)[::2]):
        cam = path.at(t) if args.hr else path.at(t).scaled(1.0 / cfg.scale)
        bundle = rasterizer.render(scene, cam, workers=cfg.workers)
        bundle.dump(out, f"frame_{i:04d}")
    print(f"rendered {cfg.frames} frames to {out}")


def cmd_upsample(args, cfg: RunConfig):
    scene, path = scene_from_config(cfg), path_from_config(cfg)
    gm, _ = load_models(cfg)
    bundles = [rasterizer.render(scene, path.at(t).scaled(1.0 / cfg.scale), workers=cfg.workers)
               for t in frame_times(cfg.frames)[::2]]
    flags = PipelineFlags.from_names(cfg.ablate).gass()
    _write_frames(Path(cfg.out), gass.upsample_sequence(gm, bundles, flags))
    print(f"upsampled {len(bundles)} frames to {cfg.out}")


def cmd_interpolate(args, cfg: RunConfig):
    scene, path = scene_from_config(cfg), path_from_config(cfg)
    gm, lm = load_models(cfg)
    res = render_sequence(scene, path, cfg.frames, cfg.scale, gm, lm,
                          PipelineFlags.from_names(cfg.ablate), cfg.serial, cfg.workers)
    _write_frames(Path(cfg.out), [f.image for f in res.frames])
    for k, v in res.ledger.summary().items():
        print(f"{k}: {v}")


def cmd_bench(args, cfg: RunConfig):
    report = bench(cfg, mode="native" if args.native else "pipeline")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(report.to_csv())
    (out / "report.txt").write_text(report.to_text())
    sys.stdout.write(report.to_csv())
    sys.stdout.write(report.to_text())


def _train(args, cfg: RunConfig, which: str):
    tc = TrainConfig(steps=args.steps, seed=cfg.seed, scale=cfg.scale, lr_res=cfg.lr_res,
                     n_sequences=args.sequences, gaussians=cfg.gaussians,
                     no_gtrr="no_gtrr" in cfg.ablate, no_gi="no_gi" in cfg.ablate,
                     no_tru="no_tru" in cfg.ablate)
    fn = train_gass if which == "gass" else train_ltfi
    _, ckpt, log = fn(tc)
    target = Path(cfg.checkpoints[0]) if cfg.checkpoints else Path(cfg.out) / f"{which}.ckpt"
    target.parent.mkdir(parents=True, exist_ok=True)
    ckpt.save(target)
    print(f"initial_loss: {log.initial_loss:.6f}")
    print(f"final_loss: {log.final_loss:.6f}")
    print(f"checkpoint: {target}")


def cmd_ablate(args, cfg: RunConfig):
    tc = None
    if args.train_steps:
        tc = TrainConfig(steps=args.train_steps, seed=cfg.seed, scale=cfg.scale)
    rows = ablate(cfg, train_cfg=tc)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.csv").write_text(ablation_csv(rows))
    sys.stdout.write(ablation_table(rows))


COMMANDS = {
    "synth-scene": cmd_synth_scene, "render": cmd_render, "upsample": cmd_upsample,
    "interpolate": cmd_interpolate, "bench": cmd_bench,
    "train-gass": lambda a, c: _train(a, c, "gass"), "train-ltfi": lambda a, c: _train(a, c, "ltfi"),
    "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        COMMANDS[args.command](args, cfg)
    except SplatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
