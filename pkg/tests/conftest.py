"""Shared builders for small scenes, cameras and G-buffers."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from splatss.scene.camera import Camera, look_at, pinhole
from splatss.scene.gaussians import GaussianScene, generate_synthetic_scene, logit
from splatss.scene.sh import SH_C0

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SEEDS = range(20)


def axis_camera(width: int = 17, height: int = 17, f: float = 20.0, **kw) -> Camera:
    """Identity pose: camera at the origin looking down +z."""
    return Camera(fx=f, fy=f, cx=(width - 1) / 2, cy=(height - 1) / 2, width=width,
                  height=height, **kw)


def orbit_camera(width: int = 48, height: int = 48, eye=(0.0, 0.4, -3.2), fov: float = 50.0) -> Camera:
    R, t = look_at(eye, (0.0, 0.0, 0.0))
    return pinhole(width, height, fov_x_deg=fov).with_pose(R, t)


def dc_for(rgb) -> np.ndarray:
    """DC coefficients whose degree-0 colour is ``rgb``."""
    return (np.asarray(rgb, np.float64) - 0.5) / SH_C0


def splat_scene(centers, scales, opacities, colors) -> GaussianScene:
    """Axis-aligned Gaussians with isotropic or per-axis world scales."""
    centers = np.atleast_2d(np.asarray(centers, np.float64))
    n = len(centers)
    scales = np.asarray(scales, np.float64)
    scales = np.broadcast_to(scales if scales.ndim == 2 else scales.reshape(-1, 1), (n, 3))
    rot = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    op = logit(np.broadcast_to(np.asarray(opacities, np.float64), (n,)))[:, None]
    sh = dc_for(np.asarray(colors, np.float64).reshape(n, 3))[:, :, None]
    return GaussianScene(centers, rot, np.log(scales), op, sh)


def random_scene(seed: int, n: int = 20, extent: float = 2.0, sh_degree: int = 0) -> GaussianScene:
    return generate_synthetic_scene(seed, n, extent=extent, sh_degree=sh_degree)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
