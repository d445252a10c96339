"""Gradient-aware super sampling.

The interpolation path is a linear Conv→TConv pair whose composite block
map reproduces a bicubic Hermite interpolant built from the rendered image
and its analytic x/y derivatives. A convolutional GRU over geometry buffers
adds a learned residual in feature space, carried across frames.

Colour channels are processed independently with shared weights: the three
channels ride along a batch axis, so one 3×3×3 neighbourhood of (I, Gx, Gy)
feeds each S×S output block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from . import warp
from .errors import ContractError, DimensionError
from .rasterizer import FrameBundle
from .scene.camera import Camera
from .tensor import Conv, ConvGRU, DTensor, Module, Parameter

C_F = 32
C_H = 16
GRU_INPUT = 8  # gx rgb, gy rgb, inverse depth, nv


# ---------------------------------------------------------------------------
# closed-form references


def _hermite_basis(u: np.ndarray):
    u2, u3 = u * u, u * u * u
    h0 = 2 * u3 - 3 * u2 + 1
    h1 = -2 * u3 + 3 * u2
    k0 = u3 - 2 * u2 + u
    k1 = u3 - u2
    return (h0, h1), (k0, k1)


def _sample_positions(n: int, S: int):
    """LR coordinate of every HR pixel centre, split into cell index and offset."""
    x = (np.arange(n * S) + 0.5) / S - 0.5
    cell = np.floor(x).astype(np.int64)
    return cell, x - cell


def cross_derivative(Gx: np.ndarray, Gy: np.ndarray) -> np.ndarray:
    """Per-cell mixed derivative from the four corner gradients.

    Cell (i, j) spans nodes i..i+1, j..j+1 of the (already padded) maps;
    the result has one row and column fewer than the inputs.
    """
    dgx = Gx[..., 1:, :] - Gx[..., :-1, :]
    dgy = Gy[..., :, 1:] - Gy[..., :, :-1]
    return 0.25 * (dgx[..., :, :-1] + dgx[..., :, 1:] + dgy[..., :-1, :] + dgy[..., 1:, :])


def hermite_oracle_upsample(I: np.ndarray, Gx: np.ndarray, Gy: np.ndarray, S: int) -> np.ndarray:
    """Bicubic Hermite surface through the LR samples, evaluated on the HR grid.

    Values come from ``I``, first derivatives from ``Gx``/``Gy`` (intensity per
    LR pixel). The mixed derivative of each cell is estimated from its corner
    gradients so that every quadratic, including xy, is reproduced exactly.
    Borders replicate the outermost samples.
    """
    I, Gx, Gy = (np.pad(np.asarray(a, np.float64), ((0, 0), (1, 1), (1, 1)), mode="edge")
                 for a in (I, Gx, Gy))
    C, Hp, Wp = I.shape
    H, W = Hp - 2, Wp - 2
    Fxy = cross_derivative(Gx, Gy)
    ci, v = _sample_positions(H, S)
    cj, u = _sample_positions(W, S)
    ci, cj = ci + 1, cj + 1
    (hu0, hu1), (ku0, ku1) = _hermite_basis(u)
    (hv0, hv1), (kv0, kv1) = _hermite_basis(v)
    r0, r1 = ci[:, None], ci[:, None] + 1
    c0, c1 = cj[None, :], cj[None, :] + 1
    out = np.zeros((C, H * S, W * S))
    for (r, hv, kv) in ((r0, hv0, kv0), (r1, hv1, kv1)):
        for (c, hu, ku) in ((c0, hu0, ku0), (c1, hu1, ku1)):
            hv_, kv_ = hv[:, None], kv[:, None]
            hu_, ku_ = hu[None, :], ku[None, :]
            out += (I[:, r, c] * hv_ * hu_ + Gx[:, r, c] * hv_ * ku_
                    + Gy[:, r, c] * kv_ * hu_ + Fxy[:, ci[:, None], cj[None, :]] * kv_ * ku_)
    return out.astype(np.float32)


def _keys(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    t = np.abs(t)
    return np.where(t <= 1, (a + 2) * t ** 3 - (a + 3) * t ** 2 + 1,
                    np.where(t < 2, a * t ** 3 - 5 * a * t ** 2 + 8 * a * t - 4 * a, 0.0))


def _bicubic_axis(n: int, S: int):
    x = (np.arange(n * S) + 0.5) / S - 0.5
    base = np.floor(x).astype(np.int64)
    taps = base[:, None] + np.arange(-1, 3)[None, :]
    w = _keys(x[:, None] - taps)
    return np.clip(taps, 0, n - 1), w


def bicubic_upsample(I: np.ndarray, S: int) -> np.ndarray:
    """Separable Keys cubic (a = -0.5) upsampling with clamped borders."""
    I = np.asarray(I, np.float64)
    H, W = I.shape[-2:]
    ti, wi = _bicubic_axis(H, S)
    tj, wj = _bicubic_axis(W, S)
    rows = np.einsum("...rkw,rk->...rw", I[..., ti, :], wi)
    out = np.einsum("...rck,ck->...rc", rows[..., :, tj], wj)
    return out.astype(np.float32)


# ---------------------------------------------------------------------------
# composite map and its factorization


def composite_block_map(S: int) -> np.ndarray:
    """The S²×27 matrix taking a 3×3 (I, Gx, Gy) patch to one HR block.

    Column order matches a conv weight flattened as (channel, ky, kx); row
    order is (sy, sx) inside the block. Built by probing the oracle with unit
    patches on a 5×5 canvas and reading the centre block.
    """
    M = np.zeros((S * S, 27))
    for col in range(27):
        ch, ky, kx = np.unravel_index(col, (3, 3, 3))
        planes = np.zeros((3, 1, 5, 5))
        planes[ch, 0, 1 + ky, 1 + kx] = 1.0
        out = hermite_oracle_upsample(planes[0], planes[1], planes[2], S).astype(np.float64)
        M[:, col] = out[0, 2 * S:3 * S, 2 * S:3 * S].ravel()
    return M


def solve_M_init(S: int, c_f: int = C_F, rng: np.random.Generator | None = None):
    """Factor the Hermite block map into conv_in (c_f×3×3×3) and tconv (c_f×1×S×S).

    The conv rows are the right singular vectors of M (the remaining ones and
    then random rows pad it out to ``c_f``), the tconv columns carry U·Σ and
    zeros for the padding rows, so T·C equals M to rounding.
    """
    r = min(S * S, 27)
    if c_f <= r:
        raise ContractError(f"C_F = {c_f} must exceed min(S², 27) = {r}")
    rng = rng if rng is not None else np.random.default_rng(0)
    M = composite_block_map(S)
    U, sig, Vt = np.linalg.svd(M, full_matrices=True)
    rank = int(np.sum(sig > sig[0] * 1e-10))
    assert rank == r, f"composite Hermite map has rank {rank}, expected {r}"
    C = np.zeros((c_f, 27))
    n_v = min(c_f, 27)
    C[:n_v] = Vt[:n_v]
    if c_f > 27:
        C[27:] = rng.uniform(-1, 1, size=(c_f - 27, 27)) / np.sqrt(27)
    Tm = np.zeros((S * S, c_f))
    Tm[:, :r] = U[:, :r] * sig[:r]
    conv_in = C.reshape(c_f, 3, 3, 3).astype(np.float32)
    tconv = Tm.T.reshape(c_f, 1, S, S).astype(np.float32)
    return conv_in, tconv


def network_block_map(conv_in: np.ndarray, tconv: np.ndarray) -> np.ndarray:
    c_f, _, S, _ = tconv.shape
    return tconv.reshape(c_f, S * S).T.astype(np.float64) @ conv_in.reshape(c_f, 27).astype(np.float64)


# ---------------------------------------------------------------------------
# model


@dataclass
class HistoryState:
    h: DTensor | None = None
    frame_index: int = 0
    camera: Camera | None = None   # LR camera of the frame that produced h
    depth: np.ndarray | None = None

    @classmethod
    def fresh(cls) -> "HistoryState":
        return cls()


@dataclass
class GassFlags:
    no_gtrr: bool = False
    no_gai: bool = False


class GassModel(Module):
    def __init__(self, scale: int = 2, c_f: int = C_F, c_h: int = C_H, seed: int = 0):
        if scale < 2:
            raise ContractError("GASS scale must be at least 2")
        rng = np.random.default_rng(seed)
        w_in, w_t = solve_M_init(scale, c_f, rng)
        self.conv_in = Parameter(w_in, name="conv_in")
        self.tconv_out = Parameter(w_t, name="tconv_out")
        self.gru = ConvGRU(rng, GRU_INPUT, c_h)
        self.head = Conv(rng, c_h, 3 * c_f, 3)
        self.head.weight.data[...] = 0
        self.scale = scale
        self.c_f = c_f
        self.c_h = c_h
        self.assign_names()

    def config(self) -> dict:
        return {"scale": self.scale, "c_f": self.c_f, "c_h": self.c_h}

    def interpolation_parameters(self) -> list[Parameter]:
        return [self.conv_in, self.tconv_out]

    def refinement_parameters(self) -> list[Parameter]:
        return self.gru.parameters() + self.head.parameters()

    def features(self, I, Gx, Gy) -> DTensor:
        """F = Conv(I, Gx, Gy) per colour, shape 3×C_F×H×W."""
        x = T.concat([T.reshape(T.as_tensor(a), (3, 1) + tuple(np.shape(a)[-2:])) for a in (I, Gx, Gy)],
                     axis=1)
        return T.conv2d(T.pad_replicate(x, 1), self.conv_in)

    def decode(self, F: DTensor) -> DTensor:
        out = T.transposed_conv2d(F, self.tconv_out, self.scale)
        return T.reshape(out, (3,) + out.shape[-2:])


def geometry_input(bundle: FrameBundle) -> np.ndarray:
    inv_depth = 1.0 / np.maximum(bundle.depth, 1e-6)
    return np.concatenate([bundle.grad_x, bundle.grad_y, inv_depth, bundle.nv]).astype(np.float32)


def refine(model: GassModel, Gx, Gy, D, Nv, h_tilde) -> tuple[DTensor, DTensor]:
    """One GRU step over (Gx, Gy, 1/D, Nv) and the residual feature it implies.

    ``D`` is passed as camera depth; the network sees its reciprocal so that
    background (far) maps to a small bounded value.
    """
    inv_d = 1.0 / np.maximum(np.asarray(D, np.float32), 1e-6)
    x = T.concat_channels([T.as_tensor(Gx), T.as_tensor(Gy), T.as_tensor(inv_d), T.as_tensor(Nv)])
    if h_tilde is None:
        h_tilde = np.zeros((model.c_h,) + x.shape[-2:], np.float32)
    h = model.gru(x, T.as_tensor(h_tilde))
    dF = model.head(h)
    return h, T.reshape(dF, (3, model.c_f) + dF.shape[-2:])


def warp_history(state: HistoryState, cam: Camera, shape) -> DTensor | None:
    """Carry the previous hidden state into the current view.

    The scatter needs per-source depth, so the previous frame's LR depth
    (stored with the state) drives the motion field.
    """
    if state.h is None or state.camera is None:
        return None
    f = warp.motion_field(state.camera, cam, state.depth)
    res = warp.forward_warp(np.zeros((1,) + tuple(shape), np.float32), None, f)
    return res.apply(state.h)


def gass_forward(model: GassModel, bundle: FrameBundle, state: HistoryState | None = None,
                 dst_cam: Camera | None = None, flags: GassFlags | None = None,
                 out_hw: tuple[int, int] | None = None, clamp: bool = True):
    """Upsample one LR frame; returns (HR image DTensor, new HistoryState).

    ``dst_cam`` is the LR camera of the current frame (defaults to the
    bundle's own camera).
    """
    flags = flags or GassFlags()
    state = state or HistoryState.fresh()
    H, W = bundle.resolution
    S = model.scale
    if out_hw is not None and tuple(out_hw) != (H * S, W * S):
        raise ContractError(f"model scale {S} cannot produce {out_hw} from {H}×{W}")
    cam = dst_cam if dst_cam is not None else bundle.camera

    if flags.no_gai:
        out = T.as_tensor(bicubic_upsample(bundle.color, S))
        new_state = HistoryState(None, state.frame_index + 1, cam, bundle.depth)
    else:
        F = model.features(bundle.color, bundle.grad_x, bundle.grad_y)
        if flags.no_gtrr:
            new_state = HistoryState(None, state.frame_index + 1, cam, bundle.depth)
        else:
            h_tilde = warp_history(state, cam, (H, W)) if cam is not None else None
            h, dF = refine(model, bundle.grad_x, bundle.grad_y, bundle.depth, bundle.nv, h_tilde)
            F = T.add(F, dF)
            new_state = HistoryState(h, state.frame_index + 1, cam, bundle.depth)
        out = model.decode(F)
    if clamp:
        out = T.clip(out, 0.0, 1.0)
    return out, new_state


def upsample_sequence(model: GassModel, bundles, flags: GassFlags | None = None) -> list[np.ndarray]:
    state = HistoryState.fresh()
    frames = []
    with T.no_grad():
        for b in bundles:
            out, state = gass_forward(model, b, state, flags=flags)
            frames.append(out.data)
    return frames


def check_channels(x, expected: int, what: str):
    if np.shape(x)[-3] != expected:
        raise DimensionError(f"{what} has {np.shape(x)[-3]} channels, expected {expected}")
