"""Lightweight temporal frame interpolation at t = 0.5.

Frame 0 arrives at high resolution, frame 1 only as a low-resolution
G-buffer. Both are forward-warped to the midpoint pose, encoded, fused by a
three-level U-Net with spatial-attention skips, and blended with the warped
frame 0. A convolutional GRU at half resolution carries state between gaps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import tensor as T
from . import warp
from .errors import ContractError, DimensionError
from .rasterizer import FrameBundle
from .scene.camera import Camera
from .tensor import Conv, ConvGRU, DTensor, Module

C_E = 16
C_H = 16
HR_INPUT = 8    # I, 1/D, N, hole
LR_INPUT = 14   # I, 1/D, N, G (6), hole


class FfnOutput(NamedTuple):
    alpha: DTensor
    color: DTensor
    fused: DTensor
    hidden: DTensor


@dataclass
class TemporalState:
    h: DTensor | None = None
    camera: Camera | None = None   # half-resolution camera at the state's time
    depth: np.ndarray | None = None
    frame_index: int = 0

    @classmethod
    def fresh(cls) -> "TemporalState":
        return cls()


@dataclass
class LtfiFlags:
    no_gi: bool = False
    no_tru: bool = False


@dataclass
class HRFrame:
    """High-resolution frame-0 products: colour, camera depth, normals."""

    color: np.ndarray
    depth: np.ndarray
    normal: np.ndarray
    camera: Camera


class SpatialAttention(Module):
    def __init__(self, rng, k: int = 7):
        self.conv = Conv(rng, 2, 1, k)

    def __call__(self, skip):
        pooled = T.concat_channels([T.channel_mean(skip), T.channel_max(skip)])
        return T.mul(T.sigmoid(self.conv(pooled)), skip)


def sab(block: SpatialAttention, skip) -> DTensor:
    return block(skip)


class LtfiModel(Module):
    def __init__(self, scale: int = 2, c_e: int = C_E, c_h: int = C_H, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.enc0 = Conv(rng, HR_INPUT, c_e)
        self.enc1 = Conv(rng, LR_INPUT, c_e * scale * scale)
        self.e1 = Conv(rng, 2 * c_e, c_e)
        self.e2 = Conv(rng, c_e, 2 * c_e)
        self.e3 = Conv(rng, 2 * c_e, 2 * c_e)
        self.up2 = Conv(rng, 2 * c_e, 4 * c_h)
        self.sab2 = SpatialAttention(rng)
        self.d2 = Conv(rng, c_h + 2 * c_e, c_h)
        self.tru = ConvGRU(rng, c_h, c_h)
        self.up1 = Conv(rng, c_h, 4 * c_e)
        self.sab1 = SpatialAttention(rng)
        self.d1 = Conv(rng, 2 * c_e, c_e)
        self.head_alpha = Conv(rng, c_e, 1, 1)
        self.head_color = Conv(rng, c_e, 3, 1)
        # the colour head starts as the identity on its base estimate
        self.head_color.weight.data[...] = 0
        self.scale = scale
        self.c_e = c_e
        self.c_h = c_h
        self.assign_names()

    def config(self) -> dict:
        return {"scale": self.scale, "c_e": self.c_e, "c_h": self.c_h}


def encode(model: LtfiModel, hr_input, lr_input) -> tuple[DTensor, DTensor]:
    f0 = T.relu(model.enc0(T.as_tensor(hr_input)))
    f1 = T.pixel_shuffle(T.relu(model.enc1(T.as_tensor(lr_input))), model.scale)
    return f0, f1


def ffn_forward(model: LtfiModel, f0, f1, h_prev=None, base=None) -> FfnOutput:
    """U-Net fusion. The half-resolution decoder feature F₀.₅ updates the
    recurrent state, and the full-resolution decoder continues from that
    updated state, so the TRU shapes the prediction.

    With ``base`` (a hole-filled warp), the colour head predicts a logit
    offset from it rather than the colour itself.
    """
    f0, f1 = T.as_tensor(f0), T.as_tensor(f1)
    if f0.shape[-2:] != f1.shape[-2:]:
        raise DimensionError(f"feature grids differ: {f0.shape[-2:]} vs {f1.shape[-2:]}")
    H, W = f0.shape[-2:]
    if H % 4 or W % 4:
        raise DimensionError(f"HR extents must be divisible by 4, got {H}×{W}")
    x = T.concat_channels([f0, f1])
    s1 = T.relu(model.e1(x))
    s2 = T.relu(model.e2(T.max_pool2(s1)))
    bott = T.relu(model.e3(T.max_pool2(s2)))
    u2 = T.pixel_shuffle(model.up2(bott), 2)
    fused = T.relu(model.d2(T.concat_channels([u2, model.sab2(s2)])))
    if h_prev is None:
        h_prev = np.zeros((model.c_h, H // 2, W // 2), np.float32)
    hidden = tru_update(model, h_prev, fused)
    u1 = T.pixel_shuffle(model.up1(hidden), 2)
    d1 = T.relu(model.d1(T.concat_channels([u1, model.sab1(s1)])))
    logits = model.head_color(d1)
    if base is not None:
        b = np.clip(np.asarray(base, np.float32), 1e-3, 1 - 1e-3)
        logits = T.add(logits, np.log(b) - np.log1p(-b))
    return FfnOutput(T.sigmoid(model.head_alpha(d1)), T.sigmoid(logits), fused, hidden)


def tru_update(model: LtfiModel, h_warped, fused) -> DTensor:
    return model.tru(T.as_tensor(fused), T.as_tensor(h_warped))


def blend(alpha, color, warped, hole_mask) -> DTensor:
    """α·Î + (1-α)·I_warp, with α forced to 1 on holes of the warp."""
    alpha = T.as_tensor(alpha)
    hole = np.asarray(hole_mask, bool).reshape(1, *alpha.shape[-2:])
    if hole.any():
        alpha = T.add(T.mul(alpha, (~hole).astype(np.float32)), hole.astype(np.float32))
    return T.add(T.mul(alpha, color), T.mul(T.sub(1.0, alpha), warped))


def _inv_depth(d: np.ndarray) -> np.ndarray:
    return (1.0 / np.maximum(d, 1e-6)).astype(np.float32)


def _half_depth(zbuf: np.ndarray, far: float) -> np.ndarray:
    z = np.where(np.isfinite(zbuf[0]), zbuf[0], far)
    H, W = z.shape
    return z.reshape(H // 2, 2, W // 2, 2).min(axis=(1, 3))[None]


@dataclass
class Prepared:
    """Warped inputs of one gap, independent of the learned weights."""

    hr_input: np.ndarray
    lr_input: np.ndarray
    warped0: np.ndarray
    hole0: np.ndarray
    filled0: np.ndarray
    mid_depth: np.ndarray
    mid_camera: Camera


def prepare_inputs(frame0: HRFrame, frame1: FrameBundle, cam1: Camera, cam_mid: Camera,
                   scale: int, no_gi: bool = False) -> Prepared:
    """Warp frame 0 (HR) and frame 1 (LR) to the midpoint pose."""
    if frame0.depth is None or frame1.depth is None:
        raise ContractError("both frames need depth to be warped")
    H, W = frame0.color.shape[-2:]
    h, w = frame1.resolution
    if (H, W) != (h * scale, w * scale):
        raise ContractError(f"HR frame {H}×{W} is not {scale}× the LR frame {h}×{w}")
    f0 = warp.motion_field(frame0.camera, cam_mid, frame0.depth)
    r0 = warp.forward_warp(np.concatenate([frame0.color, frame0.depth, frame0.normal]), None, f0)
    hole0 = r0.hole_mask
    i0, d0, n0 = r0.payload[:3], r0.payload[3:4], r0.payload[4:7]
    d0 = np.where(hole0, cam_mid.far, d0)
    hr_input = np.concatenate([i0, _inv_depth(d0), n0, hole0.astype(np.float32)])

    f1 = warp.motion_field(cam1, cam_mid, frame1.depth, scale=scale)
    r1 = warp.forward_warp(np.concatenate([frame1.color, frame1.depth, frame1.normal]), None, f1)
    g1 = warp.warp_gradients(frame1.gradients(), None, f1)
    d1 = np.where(r1.hole_mask, cam_mid.far, r1.payload[3:4])
    G = np.zeros_like(g1.payload) if no_gi else g1.payload
    lr_input = np.concatenate([r1.payload[:3], _inv_depth(d1), r1.payload[4:7], G,
                               r1.hole_mask.astype(np.float32)])
    mid_depth = np.where(hole0, np.inf, r0.zbuf)
    return Prepared(hr_input.astype(np.float32), lr_input.astype(np.float32),
                    i0.astype(np.float32), hole0, warp.fill_holes(i0, hole0), mid_depth, cam_mid)


def ltfi_step(model: LtfiModel, prep: Prepared, state: TemporalState | None = None,
              flags: LtfiFlags | None = None, clamp: bool = True):
    """Network half of the interpolation on prepared inputs."""
    flags = flags or LtfiFlags()
    state = state or TemporalState.fresh()
    H, W = prep.warped0.shape[-2:]
    half_cam = prep.mid_camera.scaled(0.5)
    h_prev = None
    if not flags.no_tru and state.h is not None and state.camera is not None:
        f = warp.motion_field(state.camera, half_cam, state.depth)
        res = warp.forward_warp(np.zeros((1, H // 2, W // 2), np.float32), None, f)
        h_prev = res.apply(state.h)
    f0, f1 = encode(model, prep.hr_input, prep.lr_input)
    out = ffn_forward(model, f0, f1, h_prev, base=prep.filled0)
    img = blend(out.alpha, out.color, prep.warped0, prep.hole0)
    if clamp:
        img = T.clip(img, 0.0, 1.0)
    if flags.no_tru:
        new_state = TemporalState(None, half_cam, None, state.frame_index + 1)
    else:
        new_state = TemporalState(out.hidden, half_cam,
                                  _half_depth(prep.mid_depth, prep.mid_camera.far),
                                  state.frame_index + 1)
    return img, new_state, out


def ltfi_forward(model: LtfiModel, frame0: HRFrame, frame1: FrameBundle, cam1: Camera,
                 cam_mid: Camera, state: TemporalState | None = None,
                 flags: LtfiFlags | None = None):
    """Interpolate the HR frame at the midpoint pose; returns (image, state)."""
    flags = flags or LtfiFlags()
    prep = prepare_inputs(frame0, frame1, cam1, cam_mid, model.scale, no_gi=flags.no_gi)
    img, new_state, _ = ltfi_step(model, prep, state, flags)
    return img, new_state


def upsample_geometry(bundle: FrameBundle, scale: int) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-neighbour HR depth and normals from an LR bundle."""
    rep = lambda a: np.repeat(np.repeat(a, scale, axis=-2), scale, axis=-1)  # noqa: E731
    return rep(bundle.depth), rep(bundle.normal)
