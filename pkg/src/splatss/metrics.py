"""Image fidelity metrics and the report they are collected into."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03


def _pair(X, Y):
    X = np.asarray(X, np.float64)
    Y = np.asarray(Y, np.float64)
    if X.shape != Y.shape:
        raise DimensionError(f"images differ in shape: {X.shape} vs {Y.shape}")
    return X, Y


def psnr(X, Y, peak: float = 1.0) -> float:
    X, Y = _pair(X, Y)
    mse = float(np.mean((X - Y) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(peak * peak / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = len(g)
    rows = sliding_window_view(img, k, axis=-2) @ g
    return sliding_window_view(rows, k, axis=-1) @ g


def ssim(X, Y, peak: float = 1.0) -> float:
    """Single-scale SSIM with an 11×11 Gaussian window, valid positions only,
    averaged over channels."""
    X, Y = _pair(X, Y)
    if X.ndim == 2:
        X, Y = X[None], Y[None]
    if min(X.shape[-2:]) < SSIM_WINDOW:
        raise DimensionError(f"SSIM needs at least {SSIM_WINDOW}×{SSIM_WINDOW} pixels")
    g = gaussian_window()
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    mx, my = _filter_valid(X, g), _filter_valid(Y, g)
    sxx = _filter_valid(X * X, g) - mx * mx
    syy = _filter_valid(Y * Y, g) - my * my
    sxy = _filter_valid(X * Y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(np.mean(num / den, axis=(-2, -1))))


@dataclass
class FrameMetric:
    index: int
    time: float
    kind: str
    psnr: float
    ssim: float


@dataclass
class MetricReport:
    frames: list = field(default_factory=list)
    timing_ms: dict = field(default_factory=dict)
    fps: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def psnr(self) -> float:
        return float(np.mean([f.psnr for f in self.frames])) if self.frames else float("nan")

    @property
    def ssim(self) -> float:
        return float(np.mean([f.ssim for f in self.frames])) if self.frames else float("nan")

    @property
    def psnr_per_frame(self) -> list:
        return [f.psnr for f in self.frames]

    @property
    def ssim_per_frame(self) -> list:
        return [f.ssim for f in self.frames]

    def add(self, index: int, time: float, kind: str, pred, target):
        self.frames.append(FrameMetric(index, time, kind, psnr(pred, target), ssim(pred, target)))

    def to_text(self) -> str:
        lines = [f"psnr: {self.psnr:.4f}", f"ssim: {self.ssim:.6f}", f"frames: {len(self.frames)}",
                 f"fps: {self.fps:.4f}"]
        lines += [f"{k}_ms: {v:.3f}" for k, v in self.timing_ms.items()]
        lines += [f"{k}: {v}" for k, v in self.extra.items()]
        return "\n".join(lines) + "\n"

    def rows(self, timing: bool = False) -> list[list]:
        return [[f.index, f"{f.time:.6f}", f.kind, f"{f.psnr:.6f}", f"{f.ssim:.6f}"] for f in self.frames]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame", "time", "kind", "psnr", "ssim"])
        w.writerows(self.rows())
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> dict:
        out = {}
        for line in text.splitlines():
            if ":" in line:
                k, v = line.split(":", 1)
                out[k.strip()] = v.strip()
        return out
