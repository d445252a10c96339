"""Training loops for both networks on rendered synthetic sequences."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import gass, ltfi, losses, rasterizer, warp
from .. import tensor as T
from ..tensor import Adam, backward, no_grad
from .checkpoint import ModelCheckpoint
from .data import orbit_path, sample_times, synthetic_scene, train_seed

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    steps: int = 200
    seed: int = 0
    scale: int = 2
    lr_res: tuple = (32, 32)
    gaussians: int = 3000
    n_sequences: int = 6
    unroll: int = 4          # GASS frames per sequence, LTFI keyframes per sequence
    lr: float = 1e-3
    no_gtrr: bool = False
    no_gi: bool = False
    no_tru: bool = False
    loss: losses.LossConfig = field(default_factory=losses.LossConfig)

    def snapshot(self) -> dict:
        d = asdict(self)
        d["lr_res"] = list(self.lr_res)
        return d


@dataclass
class TrainLog:
    losses: list = field(default_factory=list)
    initial_loss: float = float("nan")
    final_loss: float = float("nan")
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# data


@dataclass
class GassSequence:
    bundles: list     # LR FrameBundles
    targets: list     # HR ground-truth colour


def _sequence_setup(cfg: TrainConfig, k: int, n_keys: int):
    seed = train_seed(cfg.seed * 1000 + k)
    scene = synthetic_scene(seed, cfg.gaussians)
    W, H = cfg.lr_res
    path = orbit_path(seed, n_keys, W * cfg.scale, H * cfg.scale)
    return scene, path


def gass_dataset(cfg: TrainConfig) -> list[GassSequence]:
    seqs = []
    for k in range(cfg.n_sequences):
        scene, path = _sequence_setup(cfg, k, cfg.unroll)
        bundles, targets = [], []
        for t in sample_times(cfg.unroll):
            cam = path.at(t)
            bundles.append(rasterizer.render(scene, cam.scaled(1.0 / cfg.scale)))
            targets.append(rasterizer.render(scene, cam).color)
        seqs.append(GassSequence(bundles, targets))
    return seqs


def gass_sequence_loss(model: gass.GassModel, seq: GassSequence, flags: gass.GassFlags,
                       cfg: TrainConfig):
    state = gass.HistoryState.fresh()
    total = None
    for b, y in zip(seq.bundles, seq.targets):
        out, state = gass.gass_forward(model, b, state, flags=flags, clamp=False)
        term = losses.gass_total(out, y, cfg.loss)
        total = term if total is None else T.add(total, term)
    return T.div(total, float(len(seq.bundles)))


def evaluate_gass_loss(model, data, flags, cfg) -> float:
    with no_grad():
        return float(np.mean([gass_sequence_loss(model, s, flags, cfg).data for s in data]))


def train_gass(cfg: TrainConfig, data: list[GassSequence] | None = None,
               model: gass.GassModel | None = None):
    """Adam on the super-sampling objective, unrolled over whole sequences.

    Returns (model, checkpoint, log). With ``no_gtrr`` only the
    interpolation weights are optimized; the GRU and head stay untouched.
    """
    data = data if data is not None else gass_dataset(cfg)
    model = model or gass.GassModel(cfg.scale, seed=cfg.seed)
    flags = gass.GassFlags(no_gtrr=cfg.no_gtrr)
    params = model.interpolation_parameters() if cfg.no_gtrr else model.parameters()
    opt = Adam(params, lr=cfg.lr)
    log = TrainLog()
    log.initial_loss = evaluate_gass_loss(model, data, flags, cfg)
    for step in range(cfg.steps):
        seq = data[step % len(data)]
        loss = gass_sequence_loss(model, seq, flags, cfg)
        backward(loss)
        opt.step()
        log.losses.append(float(loss.data))
    log.final_loss = evaluate_gass_loss(model, data, flags, cfg)
    ckpt = ModelCheckpoint.from_model("gass", model, seed=cfg.seed, train=cfg.snapshot())
    return model, ckpt, log


# ---------------------------------------------------------------------------
# interpolation


@dataclass
class LtfiGap:
    prep: ltfi.Prepared
    target: np.ndarray
    frame0: np.ndarray
    frame1: np.ndarray
    field_to0: warp.MotionField
    field_to1: warp.MotionField


def ltfi_dataset(cfg: TrainConfig, no_gi: bool = False) -> list[list[LtfiGap]]:
    """Sequences of consecutive gaps. Frame 0 is a native HR render, frame 1
    an LR render, the target an HR render at the midpoint pose."""
    seqs = []
    for k in range(cfg.n_sequences):
        scene, path = _sequence_setup(cfg, k, cfg.unroll)
        times = sample_times(cfg.unroll)
        hr = [rasterizer.render(scene, path.at(t)) for t in times]
        lr = [rasterizer.render(scene, path.at(t).scaled(1.0 / cfg.scale)) for t in times]
        gaps = []
        for g in range(len(times) - 1):
            cam0, cam1 = path.at(times[g]), path.at(times[g + 1])
            cam_mid = path.at(0.5 * (times[g] + times[g + 1]))
            mid = rasterizer.render(scene, cam_mid)
            f0 = ltfi.HRFrame(hr[g].color, hr[g].depth, hr[g].normal, cam0)
            prep = ltfi.prepare_inputs(f0, lr[g + 1], cam1, cam_mid, cfg.scale, no_gi=no_gi)
            gaps.append(LtfiGap(prep, mid.color, hr[g].color, hr[g + 1].color,
                                warp.motion_field(cam_mid, cam0, mid.depth),
                                warp.motion_field(cam_mid, cam1, mid.depth)))
        seqs.append(gaps)
    return seqs


def ltfi_sequence_loss(model: ltfi.LtfiModel, gaps: list[LtfiGap], flags: ltfi.LtfiFlags,
                       cfg: TrainConfig):
    state = ltfi.TemporalState.fresh()
    total = None
    alphas = []
    for gap in gaps:
        img, state, out = ltfi.ltfi_step(model, gap.prep, state, flags, clamp=False)
        occ = losses.occlusion_loss(img, gap.field_to0, gap.field_to1, gap.frame0, gap.frame1)
        term = losses.ltfi_total(img, gap.target, out.alpha, occ, cfg.loss)
        total = term if total is None else T.add(total, term)
        alphas.append(float(out.alpha.data.mean()))
    return T.div(total, float(len(gaps))), float(np.mean(alphas))


def evaluate_ltfi_loss(model, data, flags, cfg) -> tuple[float, float]:
    with no_grad():
        vals = [ltfi_sequence_loss(model, s, flags, cfg) for s in data]
    return float(np.mean([v[0].data for v in vals])), float(np.mean([v[1] for v in vals]))


def train_ltfi(cfg: TrainConfig, data: list[list[LtfiGap]] | None = None,
               model: ltfi.LtfiModel | None = None):
    data = data if data is not None else ltfi_dataset(cfg, no_gi=cfg.no_gi)
    model = model or ltfi.LtfiModel(cfg.scale, seed=cfg.seed)
    flags = ltfi.LtfiFlags(no_gi=cfg.no_gi, no_tru=cfg.no_tru)
    opt = Adam(model.parameters(), lr=cfg.lr)
    log = TrainLog()
    log.initial_loss, log.extra["initial_alpha"] = evaluate_ltfi_loss(model, data, flags, cfg)
    for step in range(cfg.steps):
        loss, _ = ltfi_sequence_loss(model, data[step % len(data)], flags, cfg)
        backward(loss)
        opt.step()
        log.losses.append(float(loss.data))
    log.final_loss, log.extra["final_alpha"] = evaluate_ltfi_loss(model, data, flags, cfg)
    ckpt = ModelCheckpoint.from_model("ltfi", model, seed=cfg.seed, train=cfg.snapshot())
    return model, ckpt, log
