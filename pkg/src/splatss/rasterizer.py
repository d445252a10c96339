"""Tile-based forward splatting with analytic image-space gradients.

Besides the alpha-blended colour, the renderer returns dI/dx and dI/dy per
channel, blended expected depth, blended minor-axis normals and the
normal·view map. Everything is a pure function of (scene, camera).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .scene.camera import Camera
from .scene.gaussians import GaussianScene
from .scene.sh import eval_sh
from .tensor import ft32

logger = logging.getLogger(__name__)

TILE = 16
LOW_PASS = 0.3
ALPHA_MAX = 0.99
ALPHA_MIN = 1.0 / 255.0
T_MIN = 1e-4
CHUNK = 64


@dataclass
class ProjectedGaussian:
    mean2d: np.ndarray
    cov2d: np.ndarray
    inv_cov2d: np.ndarray
    depth: float
    color: np.ndarray
    opacity: float
    radius: float
    normal_world: np.ndarray
    source_index: int


@dataclass
class Projection:
    """Depth-sorted projected Gaussians, one array per attribute."""

    mean2d: np.ndarray      # (K, 2)
    cov2d: np.ndarray       # (K, 2, 2)
    inv_cov2d: np.ndarray   # (K, 2, 2)
    depth: np.ndarray       # (K,)
    color: np.ndarray       # (K, 3)
    opacity: np.ndarray     # (K,)
    radius: np.ndarray      # (K,)
    normal: np.ndarray      # (K, 3)
    source_index: np.ndarray
    n_degenerate: int = 0

    def __len__(self):
        return len(self.depth)

    def __getitem__(self, i) -> ProjectedGaussian:
        return ProjectedGaussian(self.mean2d[i], self.cov2d[i], self.inv_cov2d[i],
                                 float(self.depth[i]), self.color[i], float(self.opacity[i]),
                                 float(self.radius[i]), self.normal[i], int(self.source_index[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))


@dataclass
class FrameBundle:
    """G-buffer set of one rendered frame, all float32, channels first."""

    color: np.ndarray      # 3×H×W
    grad_x: np.ndarray     # 3×H×W, intensity per pixel
    grad_y: np.ndarray     # 3×H×W
    depth: np.ndarray      # 1×H×W camera z, far on background
    normal: np.ndarray     # 3×H×W unit or zero
    nv: np.ndarray         # 1×H×W
    alpha_acc: np.ndarray  # 1×H×W
    camera: Camera | None = None

    @property
    def resolution(self) -> tuple[int, int]:
        return self.color.shape[1], self.color.shape[2]

    def gradients(self) -> np.ndarray:
        """(dI/dx, dI/dy) stacked as a 6×H×W map."""
        return np.concatenate([self.grad_x, self.grad_y], axis=0)

    def buffers(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "camera"}

    def dump(self, directory, prefix: str = "frame") -> list[Path]:
        """Write every buffer as FT32 plus the colour as an 8-bit PPM."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        for name, arr in self.buffers().items():
            p = directory / f"{prefix}_{name}.ft32"
            ft32.save(p, arr)
            written.append(p)
        p = directory / f"{prefix}.ppm"
        write_ppm(p, self.color)
        written.append(p)
        return written


def write_ppm(path, rgb: np.ndarray) -> None:
    """P6 binary PPM, maxval 255, clamp to [0, 1] then scale."""
    img = np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 1.0)
    img = np.round(img * 255.0).astype(np.uint8).transpose(1, 2, 0)
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode("ascii"))
    pos += 1
    w, h = int(tokens[1]), int(tokens[2])
    img = np.frombuffer(raw, dtype=np.uint8, count=w * h * 3, offset=pos).reshape(h, w, 3)
    return img.transpose(2, 0, 1).astype(np.float32) / 255.0


# ---------------------------------------------------------------------------


def project(scene: GaussianScene, camera: Camera) -> Projection:
    """EWA projection of every Gaussian, culled and stably sorted by depth."""
    centers = scene.centers.astype(np.float64)
    pc = camera.world_to_camera(centers)
    z = pc[:, 2]
    keep = (z > camera.near) & (z < camera.far)
    idx = np.nonzero(keep)[0]
    pc, z = pc[idx], z[idx]

    fx, fy = camera.fx, camera.fy
    u = fx * pc[:, 0] / z + camera.cx
    v = fy * pc[:, 1] / z + camera.cy
    # clamp the Jacobian's lateral terms well outside the frustum
    lo_x, hi_x = (-0.15 * camera.width - camera.cx) / fx, (1.15 * camera.width - camera.cx) / fx
    lo_y, hi_y = (-0.15 * camera.height - camera.cy) / fy, (1.15 * camera.height - camera.cy) / fy
    txz = np.clip(pc[:, 0] / z, lo_x, hi_x)
    tyz = np.clip(pc[:, 1] / z, lo_y, hi_y)
    J = np.zeros((len(idx), 2, 3))
    J[:, 0, 0] = fx / z
    J[:, 0, 2] = -fx * txz / z
    J[:, 1, 1] = fy / z
    J[:, 1, 2] = -fy * tyz / z
    T = J @ camera.R
    sigma = scene.covariances()[idx]
    cov = T @ sigma @ np.swapaxes(T, 1, 2)
    cov[:, 0, 0] += LOW_PASS
    cov[:, 1, 1] += LOW_PASS
    a, b, c = cov[:, 0, 0], cov[:, 0, 1], cov[:, 1, 1]
    det = a * c - b * b
    good = (det > 0) & (a > 0)
    n_degenerate = int(np.count_nonzero(~good))
    if n_degenerate:
        logger.debug("skipping %d Gaussians with degenerate 2-D covariance", n_degenerate)
    mid = 0.5 * (a + c)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    radius = 3.0 * np.sqrt(np.maximum(lam_max, 0.0))
    inside = ((u + radius >= 0) & (u - radius <= camera.width - 1)
              & (v + radius >= 0) & (v - radius <= camera.height - 1))
    sel = good & inside

    idx, u, v, z, cov, det, radius = idx[sel], u[sel], v[sel], z[sel], cov[sel], det[sel], radius[sel]
    inv = np.empty_like(cov)
    inv[:, 0, 0] = cov[:, 1, 1] / det
    inv[:, 1, 1] = cov[:, 0, 0] / det
    inv[:, 0, 1] = inv[:, 1, 0] = -cov[:, 0, 1] / det

    cam_center = camera.center
    world = centers[idx]
    dirs = world - cam_center
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    color = np.clip(eval_sh(scene.sh_coeffs[idx], dirs), 0.0, 1.0)

    R = scene.rotation_matrices()[idx]
    minor = np.argmin(scene.log_scales[idx], axis=1)
    normal = np.take_along_axis(R, minor[:, None, None], axis=2)[:, :, 0]
    facing = np.einsum("ij,ij->i", normal, cam_center - world)
    normal[facing < 0] *= -1

    order = np.argsort(z, kind="stable")
    return Projection(
        mean2d=np.stack([u, v], axis=1)[order], cov2d=cov[order], inv_cov2d=inv[order],
        depth=z[order], color=color[order], opacity=scene.opacities[idx][order],
        radius=radius[order], normal=normal[order], source_index=idx[order],
        n_degenerate=n_degenerate)


def _tile_lists(proj: Projection, width: int, height: int):
    ntx = (width + TILE - 1) // TILE
    nty = (height + TILE - 1) // TILE
    u, v = proj.mean2d[:, 0], proj.mean2d[:, 1]
    r = proj.radius
    tx0 = np.clip(np.floor((u - r) / TILE), 0, ntx - 1).astype(np.int64)
    tx1 = np.clip(np.floor((u + r) / TILE), 0, ntx - 1).astype(np.int64)
    ty0 = np.clip(np.floor((v - r) / TILE), 0, nty - 1).astype(np.int64)
    ty1 = np.clip(np.floor((v + r) / TILE), 0, nty - 1).astype(np.int64)
    nx = tx1 - tx0 + 1
    cnt = nx * (ty1 - ty0 + 1)
    total = int(cnt.sum())
    gid = np.repeat(np.arange(len(u)), cnt)
    starts = np.cumsum(cnt) - cnt
    local = np.arange(total) - np.repeat(starts, cnt)
    tile = (ty0[gid] + local // nx[gid]) * ntx + tx0[gid] + local % nx[gid]
    order = np.argsort(tile, kind="stable")
    tile, gid = tile[order], gid[order]
    bounds = np.searchsorted(tile, np.arange(ntx * nty + 1))
    return ntx, nty, gid, bounds


class _Shader:
    """Front-to-back compositing of one pixel block against a Gaussian list."""

    def __init__(self, proj: Projection):
        f = np.float32
        self.mx = proj.mean2d[:, 0].astype(f)
        self.my = proj.mean2d[:, 1].astype(f)
        self.qa = proj.inv_cov2d[:, 0, 0].astype(f)
        self.qb = proj.inv_cov2d[:, 0, 1].astype(f)
        self.qc = proj.inv_cov2d[:, 1, 1].astype(f)
        self.op = proj.opacity.astype(f)
        self.color = proj.color.astype(f)
        self.depth = proj.depth.astype(f)
        self.normal = proj.normal.astype(f)

    def shade(self, xs: np.ndarray, ys: np.ndarray, gids: np.ndarray, alpha_cap: bool = True):
        P = xs.size
        f = np.float32
        T = np.ones(P, f)
        dTx = np.zeros(P, f)
        dTy = np.zeros(P, f)
        col = np.zeros((3, P), f)
        gx = np.zeros((3, P), f)
        gy = np.zeros((3, P), f)
        dep = np.zeros(P, f)
        nrm = np.zeros((3, P), f)
        for s in range(0, len(gids), CHUNK):
            if not np.any(T >= T_MIN):
                break
            g = gids[s:s + CHUNK]
            dx = xs[None, :] - self.mx[g, None]
            dy = ys[None, :] - self.my[g, None]
            qa, qb, qc = self.qa[g, None], self.qb[g, None], self.qc[g, None]
            qdx = qa * dx + qb * dy
            qdy = qb * dx + qc * dy
            raw = self.op[g, None] * np.exp(-0.5 * (dx * qdx + dy * qdy))
            alpha = np.minimum(raw, f(ALPHA_MAX)) if alpha_cap else raw
            slope = np.where(raw > ALPHA_MAX, f(0), alpha) if alpha_cap else alpha
            skip = alpha < ALPHA_MIN
            alpha = np.where(skip, f(0), alpha)
            slope = np.where(skip, f(0), slope)
            dax = -slope * qdx
            day = -slope * qdy
            keep = 1 - alpha
            incl = np.cumprod(keep, axis=0)
            excl = np.concatenate([np.ones((1, P), f), incl[:-1]], axis=0)
            Ti = T[None, :] * excl
            live = Ti >= T_MIN
            # dT_i = d(T_in · excl_i) with d(excl_i) = excl_i · Σ_{j<i} -dα_j / (1-α_j)
            # α = 1 (only without the cap) zeroes every later Tᵢ, so any
            # finite stand-in for 1/(1-α) leaves the live terms exact
            inv_keep = 1 / np.where(keep > 0, keep, f(1))
            sx = np.cumsum(-dax * inv_keep, axis=0) - (-dax * inv_keep)
            sy = np.cumsum(-day * inv_keep, axis=0) - (-day * inv_keep)
            dTix = dTx[None, :] * excl + Ti * sx
            dTiy = dTy[None, :] * excl + Ti * sy
            w = np.where(live, alpha * Ti, f(0))
            wx = np.where(live, dTix * alpha + Ti * dax, f(0))
            wy = np.where(live, dTiy * alpha + Ti * day, f(0))
            cg = self.color[g].T
            col += cg @ w
            gx += cg @ wx
            gy += cg @ wy
            dep += self.depth[g] @ w
            nrm += self.normal[g].T @ w
            n_live = live.sum(axis=0)
            any_live = n_live > 0
            last = np.maximum(n_live - 1, 0)[None, :]
            pick = lambda a: np.take_along_axis(a, last, axis=0)[0]  # noqa: E731
            Tl, al = pick(Ti), pick(alpha)
            T_next = Tl * (1 - al)
            dTx_next = pick(dTix) * (1 - al) - Tl * pick(dax)
            dTy_next = pick(dTiy) * (1 - al) - Tl * pick(day)
            T = np.where(any_live, T_next, T)
            dTx = np.where(any_live, dTx_next, dTx)
            dTy = np.where(any_live, dTy_next, dTy)
        return col, gx, gy, dep, nrm, T


def render(scene: GaussianScene, camera: Camera, workers: int = 1,
           projection: Projection | None = None, alpha_cap: bool = True) -> FrameBundle:
    """Render the full G-buffer set for one view.

    ``workers > 1`` shades tiles on a thread pool; tiles write disjoint
    output blocks, so the result is bit-identical to the serial path.
    ``alpha_cap=False`` disables the 0.99 opacity clamp (used by tests).
    """
    W, H = camera.width, camera.height
    proj = projection if projection is not None else project(scene, camera)
    ntx, nty, gid, bounds = _tile_lists(proj, W, H)
    shader = _Shader(proj)

    color = np.zeros((3, H, W), np.float32)
    gx = np.zeros((3, H, W), np.float32)
    gy = np.zeros((3, H, W), np.float32)
    depth_acc = np.zeros((H, W), np.float32)
    nrm = np.zeros((3, H, W), np.float32)
    trans = np.ones((H, W), np.float32)

    def run(tile_id):
        ty, tx = divmod(tile_id, ntx)
        y0, x0 = ty * TILE, tx * TILE
        y1, x1 = min(y0 + TILE, H), min(x0 + TILE, W)
        g = gid[bounds[tile_id]:bounds[tile_id + 1]]
        if len(g) == 0:
            return
        yy, xx = np.mgrid[y0:y1, x0:x1]
        c, ax, ay, d, n, T = shader.shade(xx.ravel().astype(np.float32),
                                          yy.ravel().astype(np.float32), g, alpha_cap)
        shp = (y1 - y0, x1 - x0)
        color[:, y0:y1, x0:x1] = c.reshape(3, *shp)
        gx[:, y0:y1, x0:x1] = ax.reshape(3, *shp)
        gy[:, y0:y1, x0:x1] = ay.reshape(3, *shp)
        depth_acc[y0:y1, x0:x1] = d.reshape(shp)
        nrm[:, y0:y1, x0:x1] = n.reshape(3, *shp)
        trans[y0:y1, x0:x1] = T.reshape(shp)

    tiles = range(ntx * nty)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, tiles))
    else:
        for t in tiles:
            run(t)

    alpha_acc = (1 - trans)[None]
    depth = (depth_acc + trans * np.float32(camera.far))[None]
    norm = np.sqrt(np.sum(nrm.astype(np.float64) ** 2, axis=0))
    normal = np.where(norm > 1e-12, nrm / np.where(norm > 1e-12, norm, 1), 0).astype(np.float32)
    view = view_directions(camera)
    nv = np.clip(np.sum(normal * view, axis=0), -1, 1)[None].astype(np.float32)
    bundle = FrameBundle(color=color, grad_x=gx, grad_y=gy, depth=depth.astype(np.float32),
                         normal=normal, nv=nv, alpha_acc=alpha_acc.astype(np.float32),
                         camera=camera)
    if __debug__:
        for name, arr in bundle.buffers().items():
            assert np.all(np.isfinite(arr)), f"non-finite values in {name}"
    return bundle


def view_directions(camera: Camera) -> np.ndarray:
    """Unit vectors from each pixel's surface point back toward the camera, 3×H×W."""
    yy, xx = np.mgrid[0:camera.height, 0:camera.width].astype(np.float64)
    d = np.stack([(xx - camera.cx) / camera.fx, (yy - camera.cy) / camera.fy, np.ones_like(xx)])
    d /= np.linalg.norm(d, axis=0, keepdims=True)
    world = np.einsum("ji,jhw->ihw", camera.R, d)
    return (-world).astype(np.float32)
