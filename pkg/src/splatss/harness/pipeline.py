"""Sequence rendering: LR render → GASS → LTFI, serial or as a 3-stage pipeline."""

from __future__ import annotations

import logging
import queue
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .. import gass, ltfi, rasterizer
from ..errors import ContractError
from ..scene.camera import Camera, CameraPath
from ..scene.gaussians import GaussianScene
from ..tensor import no_grad
from .data import mid_times, sample_times

logger = logging.getLogger(__name__)


class RenderAccounting:
    """Counts rasterizer calls by resolution so HR renders can be audited."""

    def __init__(self, hr_res: tuple[int, int] | None = None):
        self.hr_res = hr_res
        self.calls: list[tuple[int, int]] = []
        self._lock = threading.Lock()

    def render(self, scene: GaussianScene, cam: Camera, workers: int = 1):
        with self._lock:
            self.calls.append((cam.width, cam.height))
        return rasterizer.render(scene, cam, workers=workers)

    @property
    def hr_renders(self) -> int:
        return sum(1 for c in self.calls if c == self.hr_res)

    @property
    def lr_renders(self) -> int:
        return sum(1 for c in self.calls if c != self.hr_res)


@dataclass
class TimingLedger:
    stages: dict = field(default_factory=lambda: {"render_lr": [], "gass": [], "ltfi": [], "warp": []})
    hr_renders: int = 0
    lr_renders: int = 0
    frames_output: int = 0
    total_seconds: float = 0.0
    n_keyframes: int = 0

    def add(self, stage: str, seconds: float):
        self.stages.setdefault(stage, []).append(seconds * 1000.0)

    @property
    def counted_frames(self) -> int:
        """Output cadence used for FPS: one upscaled and one interpolated
        frame per gap."""
        return 2 * (self.n_keyframes - 1)

    @property
    def fps(self) -> float:
        return self.counted_frames / self.total_seconds if self.total_seconds > 0 else 0.0

    def stage_ms(self) -> dict:
        return {k: float(np.sum(v)) for k, v in self.stages.items()}

    def summary(self) -> dict:
        out = {f"{k}_ms": v for k, v in self.stage_ms().items()}
        out.update(hr_renders=self.hr_renders, lr_renders=self.lr_renders,
                   frames_output=self.frames_output, counted_frames=self.counted_frames,
                   total_ms=self.total_seconds * 1000.0, fps=self.fps)
        return out


@dataclass
class OutputFrame:
    time: float
    kind: str          # "upscaled" or "interpolated"
    image: np.ndarray


@dataclass
class SequenceResult:
    frames: list
    ledger: TimingLedger


@dataclass
class PipelineFlags:
    no_gai: bool = False
    no_gtrr: bool = False
    no_gi: bool = False
    no_tru: bool = False

    @classmethod
    def from_names(cls, names) -> "PipelineFlags":
        return cls(**{n: True for n in names})

    def gass(self) -> gass.GassFlags:
        return gass.GassFlags(no_gtrr=self.no_gtrr or self.no_gai, no_gai=self.no_gai)

    def ltfi(self) -> ltfi.LtfiFlags:
        return ltfi.LtfiFlags(no_gi=self.no_gi, no_tru=self.no_tru)


class _Stages:
    """The three stage bodies, shared by serial and pipelined execution."""

    def __init__(self, scene, path_hr: CameraPath, scale: int, gass_model, ltfi_model,
                 flags: PipelineFlags, accounting: RenderAccounting, ledger: TimingLedger,
                 workers: int):
        self.scene = scene
        self.path = path_hr
        self.scale = scale
        self.gm = gass_model
        self.lm = ltfi_model
        self.flags = flags
        self.acct = accounting
        self.ledger = ledger
        self.workers = workers
        self.gstate = gass.HistoryState.fresh()
        self.lstate = ltfi.TemporalState.fresh()

    def render_lr(self, t: float):
        t0 = time.perf_counter()
        cam_hr = self.path.at(t)
        b = self.acct.render(self.scene, cam_hr.scaled(1.0 / self.scale), self.workers)
        self.ledger.add("render_lr", time.perf_counter() - t0)
        return cam_hr, b

    def upscale(self, cam_hr: Camera, bundle):
        t0 = time.perf_counter()
        with no_grad():
            out, self.gstate = gass.gass_forward(self.gm, bundle, self.gstate, flags=self.flags.gass())
        self.ledger.add("gass", time.perf_counter() - t0)
        D, N = ltfi.upsample_geometry(bundle, self.scale)
        return ltfi.HRFrame(out.data, D, N, cam_hr)

    def interpolate(self, frame0: ltfi.HRFrame, cam1_hr: Camera, bundle1, t_mid: float):
        t0 = time.perf_counter()
        cam_mid = self.path.at(t_mid)
        prep = ltfi.prepare_inputs(frame0, bundle1, cam1_hr, cam_mid, self.scale,
                                   no_gi=self.flags.no_gi)
        t1 = time.perf_counter()
        with no_grad():
            img, self.lstate, _ = ltfi.ltfi_step(self.lm, prep, self.lstate, self.flags.ltfi())
        t2 = time.perf_counter()
        self.ledger.add("warp", t1 - t0)
        self.ledger.add("ltfi", t2 - t1)
        return img.data


def render_sequence(scene: GaussianScene, path_hr: CameraPath, n_frames: int, scale: int,
                    gass_model: gass.GassModel, ltfi_model: ltfi.LtfiModel,
                    flags: PipelineFlags | None = None, serial: bool = False,
                    workers: int = 1) -> SequenceResult:
    """Produce 2n-1 frames in presentation order from n LR renders.

    ``path_hr`` carries HR cameras; LR cameras are derived by scaling the
    intrinsics. No HR rasterization happens here, which is asserted.
    """
    if n_frames < 2:
        raise ContractError("a sequence needs at least 2 frames")
    if gass_model.scale != scale or ltfi_model.scale != scale:
        raise ContractError("model scale does not match the requested scale")
    flags = flags or PipelineFlags()
    hr = (path_hr.keyframes[0].width, path_hr.keyframes[0].height)
    acct = RenderAccounting(hr)
    ledger = TimingLedger(n_keyframes=n_frames)
    st = _Stages(scene, path_hr, scale, gass_model, ltfi_model, flags, acct, ledger, workers)
    times, mids = sample_times(n_frames), mid_times(n_frames)

    t_start = time.perf_counter()
    frames = _run_serial(st, times, mids) if serial else _run_pipelined(st, times, mids)
    ledger.total_seconds = time.perf_counter() - t_start
    ledger.hr_renders = acct.hr_renders
    ledger.lr_renders = acct.lr_renders
    ledger.frames_output = len(frames)
    assert ledger.hr_renders == 0, "HR rasterization inside the inference path"
    return SequenceResult(frames, ledger)


def _run_serial(st: _Stages, times, mids) -> list[OutputFrame]:
    frames = []
    prev = None
    for k, t in enumerate(times):
        cam, b = st.render_lr(t)
        hr = st.upscale(cam, b)
        if prev is not None:
            frames.append(OutputFrame(mids[k - 1], "interpolated", st.interpolate(prev, cam, b, mids[k - 1])))
        frames.append(OutputFrame(t, "upscaled", hr.color))
        prev = hr
    return frames


_DONE = object()


def _run_pipelined(st: _Stages, times, mids) -> list[OutputFrame]:
    """Render, GASS and LTFI on separate threads joined by depth-1 queues.

    Each stage processes its items in order and owns its own state, so the
    outputs equal the serial run bit for bit.
    """
    q_render: queue.Queue = queue.Queue(maxsize=1)
    q_gass: queue.Queue = queue.Queue(maxsize=1)
    errors = []

    def render_stage():
        try:
            for t in times:
                q_render.put((t,) + st.render_lr(t))
        except BaseException as exc:  # surfaced in the consumer
            errors.append(exc)
        finally:
            q_render.put(_DONE)

    def gass_stage():
        try:
            while (item := q_render.get()) is not _DONE:
                t, cam, b = item
                q_gass.put((t, cam, b, st.upscale(cam, b)))
        except BaseException as exc:
            errors.append(exc)
        finally:
            q_gass.put(_DONE)

    threads = [threading.Thread(target=render_stage, daemon=True),
               threading.Thread(target=gass_stage, daemon=True)]
    for th in threads:
        th.start()
    frames = []
    prev = None
    k = 0
    while (item := q_gass.get()) is not _DONE:
        t, cam, b, hr = item
        if prev is not None:
            frames.append(OutputFrame(mids[k - 1], "interpolated", st.interpolate(prev, cam, b, mids[k - 1])))
        frames.append(OutputFrame(t, "upscaled", hr.color))
        prev = hr
        k += 1
    for th in threads:
        th.join()
    if errors:
        raise errors[0]
    return frames


def native_hr_sequence(scene: GaussianScene, path_hr: CameraPath, times, workers: int = 1):
    """Rasterize every requested time at HR; returns (images, seconds)."""
    t0 = time.perf_counter()
    imgs = [rasterizer.render(scene, path_hr.at(t), workers=workers).color for t in times]
    return imgs, time.perf_counter() - t0
