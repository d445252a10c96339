"""Synthetic scenes and camera paths with disjoint train/eval seed ranges."""

from __future__ import annotations

import numpy as np

from ..errors import ContractError
from ..scene.camera import CameraPath, look_at, pinhole
from ..scene.gaussians import GaussianScene, generate_synthetic_scene

TRAIN_SEEDS = range(0, 100_000)
EVAL_SEEDS = range(1_000_000, 1_100_000)


def train_seed(k: int) -> int:
    return TRAIN_SEEDS[k % len(TRAIN_SEEDS)]


def eval_seed(k: int) -> int:
    return EVAL_SEEDS[k % len(EVAL_SEEDS)]


def check_split(train: list[int], evaluation: list[int]) -> None:
    """Refuse to run when training and evaluation draw from the same seeds."""
    bad = set(train) & set(evaluation)
    if bad:
        raise ContractError(f"seeds {sorted(bad)[:5]} used for both training and evaluation")
    if any(s not in TRAIN_SEEDS for s in train):
        raise ContractError("training seed outside the training range")
    if any(s not in EVAL_SEEDS for s in evaluation):
        raise ContractError("evaluation seed outside the evaluation range")


def synthetic_scene(seed: int, n: int, extent: float = 2.0, sh_degree: int = 0) -> GaussianScene:
    return generate_synthetic_scene(seed, n, extent=extent, sh_degree=sh_degree)


def orbit_path(seed: int, n_keys: int, width: int, height: int, radius: float = 3.2,
               step_deg: float = 2.5, fov_x_deg: float = 50.0, rate: float = 30.0) -> CameraPath:
    """Keyframes on a slow orbit around the origin, looking at a jittered target."""
    rng = np.random.default_rng(seed + 7919)
    theta0 = rng.uniform(0, 2 * np.pi)
    direction = rng.choice([-1.0, 1.0])
    elev = rng.uniform(-0.25, 0.35)
    step = np.radians(step_deg) * rng.uniform(0.7, 1.3)
    target = rng.uniform(-0.1, 0.1, size=3)
    base = pinhole(width, height, fov_x_deg=fov_x_deg, near=0.1, far=100.0)
    keys = []
    for k in range(n_keys):
        th = theta0 + direction * step * k
        eye = np.array([radius * np.sin(th), radius * elev, -radius * np.cos(th)])
        R, t = look_at(eye, target)
        keys.append(base.with_pose(R, t))
    return CameraPath(tuple(keys), rate)


def sample_times(n_frames: int) -> list[float]:
    return [k / (n_frames - 1) for k in range(n_frames)]


def mid_times(n_frames: int) -> list[float]:
    return [(k + 0.5) / (n_frames - 1) for k in range(n_frames - 1)]
