"""Pose-driven motion fields and z-tested forward warping.

Motion vectors come from unprojecting each source pixel with its depth and
reprojecting it through the destination camera. Warping scatters source
pixels to the nearest destination pixel; conflicts go to the smaller
destination depth, then to the lower source index.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError
from .scene.camera import Camera
from .tensor import DTensor, gather_pixels
from .tensor import ft32

DET_MIN = 1e-3


@dataclass
class MotionField:
    vectors: np.ndarray       # 2×H×W, pixels
    valid: np.ndarray         # 1×H×W bool
    target_depth: np.ndarray  # 1×H×W camera z in the destination view, inf if invalid

    @property
    def shape(self) -> tuple[int, int]:
        return self.vectors.shape[1], self.vectors.shape[2]

    def dump(self, path) -> None:
        ft32.save(Path(path), np.concatenate([self.vectors, self.valid.astype(np.float32)]))


@dataclass
class WarpResult:
    payload: np.ndarray     # C×H'×W'
    hole_mask: np.ndarray   # 1×H'×W' bool
    zbuf: np.ndarray        # 1×H'×W', +inf on holes
    src_index: np.ndarray   # flat source pixel of every filled destination
    dst_index: np.ndarray   # flat destination pixel, same order

    @property
    def out_hw(self) -> tuple[int, int]:
        return self.hole_mask.shape[1], self.hole_mask.shape[2]

    def apply(self, x: DTensor) -> DTensor:
        """Re-run the same scatter on a differentiable tensor."""
        return gather_pixels(x, self.src_index, self.dst_index, self.out_hw)


def _pixel_grid(h: int, w: int):
    yy, xx = np.mgrid[0:h, 0:w]
    return xx.astype(np.float64), yy.astype(np.float64)


def _check_cameras(src_cam: Camera, dst_cam: Camera, depth_hw, scale):
    if scale is not None and scale != 1:
        src_cam = src_cam.scaled(1.0 / scale)
        dst_cam = dst_cam.scaled(1.0 / scale)
    if src_cam.resolution != tuple(depth_hw):
        raise ContractError(f"depth is {depth_hw[0]}×{depth_hw[1]} but the source camera is "
                            f"{src_cam.height}×{src_cam.width}; pass scale= for scaled intrinsics")
    if dst_cam.resolution != src_cam.resolution:
        raise ContractError("source and destination cameras differ in resolution")
    return src_cam, dst_cam


def motion_field(src_cam: Camera, dst_cam: Camera, src_depth: np.ndarray,
                 scale: float | None = None) -> MotionField:
    """V[x] = Proj(UnProj(x, src), dst) - x for every source pixel.

    With ``scale`` set, both cameras are HR cameras and the depth map is the
    LR buffer at 1/scale; intrinsics are scaled down to match.
    """
    depth = np.asarray(src_depth, dtype=np.float64).reshape(-1, *np.shape(src_depth)[-2:])[0]
    src_cam, dst_cam = _check_cameras(src_cam, dst_cam, depth.shape, scale)
    h, w = depth.shape
    xx, yy = _pixel_grid(h, w)
    pc = np.stack([(xx - src_cam.cx) / src_cam.fx * depth,
                   (yy - src_cam.cy) / src_cam.fy * depth, depth], axis=-1)
    world = (pc - src_cam.t) @ src_cam.R
    q = world @ dst_cam.R.T + dst_cam.t
    z = q[..., 2]
    valid = (depth < src_cam.far) & (z > dst_cam.near)
    zs = np.where(valid, z, 1.0)
    u = dst_cam.fx * q[..., 0] / zs + dst_cam.cx
    v = dst_cam.fy * q[..., 1] / zs + dst_cam.cy
    # pixel j owns [j - 0.5, j + 0.5)
    valid &= (u >= -0.5) & (u < w - 0.5) & (v >= -0.5) & (v < h - 0.5)
    V = np.stack([np.where(valid, u - xx, 0.0), np.where(valid, v - yy, 0.0)])
    return MotionField(vectors=V.astype(np.float32), valid=valid[None],
                       target_depth=np.where(valid, z, np.inf)[None].astype(np.float32))


def identity_field(h: int, w: int, depth: np.ndarray | None = None) -> MotionField:
    valid = np.ones((1, h, w), bool) if depth is None else np.isfinite(depth).reshape(1, h, w)
    tz = np.zeros((1, h, w), np.float32) if depth is None else np.asarray(depth, np.float32).reshape(1, h, w)
    return MotionField(np.zeros((2, h, w), np.float32), valid, tz)


def _scatter_plan(depth, field: MotionField, out_hw):
    h, w = field.shape
    ho, wo = out_hw if out_hw is not None else (h, w)
    valid = field.valid[0].ravel()
    src = np.nonzero(valid)[0]
    xx, yy = src % w, src // w
    dx = np.floor(xx + field.vectors[0].ravel()[src].astype(np.float64) + 0.5).astype(np.int64)
    dy = np.floor(yy + field.vectors[1].ravel()[src].astype(np.float64) + 0.5).astype(np.int64)
    inside = (dx >= 0) & (dx < wo) & (dy >= 0) & (dy < ho)
    src, dx, dy = src[inside], dx[inside], dy[inside]
    dst = dy * wo + dx
    if depth is None:
        z = field.target_depth[0].ravel()[src]
    else:
        z = np.asarray(depth, dtype=np.float32).reshape(-1)[src]
    order = np.lexsort((src, z, dst))
    dst_s = dst[order]
    first = np.ones(len(order), bool)
    first[1:] = dst_s[1:] != dst_s[:-1]
    win = order[first]
    return src[win], dst[win], z[win], (ho, wo)


def forward_warp(payload: np.ndarray, depth: np.ndarray | None, field: MotionField,
                 out_size: tuple[int, int] | None = None) -> WarpResult:
    """Nearest-pixel scatter of ``payload`` along ``field``.

    Conflicts are resolved on the destination-view depth carried by the
    field; passing ``depth`` overrides it with explicit per-source z values.
    """
    payload = np.asarray(payload)
    if payload.ndim == 2:
        payload = payload[None]
    C = payload.shape[0]
    src, dst, z, (ho, wo) = _scatter_plan(depth, field, out_size)
    out = np.zeros((C, ho * wo), dtype=payload.dtype)
    out[:, dst] = payload.reshape(C, -1)[:, src]
    zbuf = np.full(ho * wo, np.inf, np.float32)
    zbuf[dst] = z
    hole = np.ones(ho * wo, bool)
    hole[dst] = False
    return WarpResult(out.reshape(C, ho, wo), hole.reshape(1, ho, wo),
                      zbuf.reshape(1, ho, wo), src, dst)


def field_jacobian(field: MotionField) -> np.ndarray:
    """Jacobian of x ↦ x + V by central differences, 2×2×H×W.

    Near invalid pixels the difference falls back to one side; with no valid
    neighbour on either side the derivative is taken as 0.
    """
    V = field.vectors.astype(np.float64)
    ok = field.valid[0]
    J = np.zeros((2, 2, *field.shape))

    def diff(axis):
        n = V.shape[1 + axis]
        fwd = np.zeros_like(V)
        bwd = np.zeros_like(V)
        okf = np.zeros_like(ok)
        okb = np.zeros_like(ok)
        sl = lambda a, b: tuple([slice(None)] + [slice(a, b) if k == axis else slice(None) for k in range(2)])  # noqa: E731
        sm = lambda a, b: tuple(slice(a, b) if k == axis else slice(None) for k in range(2))  # noqa: E731
        fwd[sl(0, n - 1)] = V[sl(1, n)] - V[sl(0, n - 1)]
        okf[sm(0, n - 1)] = ok[sm(1, n)] & ok[sm(0, n - 1)]
        bwd[sl(1, n)] = V[sl(1, n)] - V[sl(0, n - 1)]
        okb[sm(1, n)] = ok[sm(1, n)] & ok[sm(0, n - 1)]
        both = okf & okb
        return np.where(both, 0.5 * (fwd + bwd), np.where(okf, fwd, np.where(okb, bwd, 0.0)))

    dVdx = diff(1)
    dVdy = diff(0)
    J[0, 0] = 1 + dVdx[0]
    J[1, 0] = dVdx[1]
    J[0, 1] = dVdy[0]
    J[1, 1] = 1 + dVdy[1]
    return J


def warp_gradients(G: np.ndarray, depth: np.ndarray | None, field: MotionField,
                   out_size: tuple[int, int] | None = None) -> WarpResult:
    """Warp a 6×H×W (gx rgb, gy rgb) map and re-express it in destination
    pixel coordinates via the inverse-transpose field Jacobian.

    Foldover pixels (|det J| < 1e-3) get zero gradient and are added to the
    hole mask.
    """
    G = np.asarray(G, dtype=np.float64)
    J = field_jacobian(field)
    a, b, c, d = J[0, 0], J[0, 1], J[1, 0], J[1, 1]
    det = a * d - b * c
    fold = np.abs(det) < DET_MIN
    sdet = np.where(fold, 1.0, det)
    gx, gy = G[:3], G[3:]
    # J^-T = [[d, -c], [-b, a]] / det
    nx = (d * gx - c * gy) / sdet
    ny = (-b * gx + a * gy) / sdet
    mapped = np.concatenate([np.where(fold, 0, nx), np.where(fold, 0, ny)]).astype(np.float32)
    res = forward_warp(mapped, depth, field, out_size)
    folded = forward_warp(fold[None].astype(np.float32), depth, field, out_size).payload[0] > 0
    res.hole_mask = res.hole_mask | folded[None]
    res.payload[:, res.hole_mask[0]] = 0
    return res


def fill_holes(img: np.ndarray, hole_mask: np.ndarray) -> np.ndarray:
    """Push-pull fill: holes take the mask-weighted average of ever coarser
    2×2 pyramids until some valid sample covers them."""
    img = np.asarray(img, np.float64)
    valid = ~np.asarray(hole_mask, bool).reshape(img.shape[-2:])
    if valid.all() or not valid.any():
        return img.astype(np.float32)
    levels = [(img * valid, valid.astype(np.float64))]
    while levels[-1][1].shape[0] > 1 or levels[-1][1].shape[1] > 1:
        v, w = levels[-1]
        H, W = w.shape
        ph, pw = H % 2, W % 2
        v = np.pad(v, ((0, 0), (0, ph), (0, pw)))
        w = np.pad(w, ((0, ph), (0, pw)))
        v = v.reshape(v.shape[0], (H + ph) // 2, 2, (W + pw) // 2, 2).sum(axis=(2, 4))
        w = w.reshape((H + ph) // 2, 2, (W + pw) // 2, 2).sum(axis=(1, 3))
        levels.append((v, w))
    v, w = levels[-1]
    est = v / np.maximum(w, 1e-12)
    for v, w in reversed(levels[:-1]):
        H, W = w.shape
        up = np.repeat(np.repeat(est, 2, axis=1), 2, axis=2)[:, :H, :W]
        est = np.where(w > 0, v / np.maximum(w, 1e-12), up)
    return est.astype(np.float32)
