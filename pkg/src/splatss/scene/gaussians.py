from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError
from .camera import quat_to_rotmat
from .sh import degree_for_basis

_FIELDS = ("centers", "rotations", "log_scales", "opacity_logits", "sh_coeffs")


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def logit(p):
    return np.log(p) - np.log1p(-p)


@dataclass(frozen=True, eq=False)
class GaussianScene:
    """Explicit splat scene, stored exactly as it appears on disk.

    ``rotations`` are (w, x, y, z) quaternions, ``log_scales`` hold log of
    the per-axis standard deviation, ``opacity_logits`` pass through a
    sigmoid, and ``sh_coeffs`` is (N, 3, B) with B = (degree + 1)².
    """

    centers: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    sh_coeffs: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.centers).shape[0] if np.ndim(self.centers) else 0
        shapes = {"centers": (n, 3), "rotations": (n, 4), "log_scales": (n, 3),
                  "opacity_logits": (n, 1)}
        for name in _FIELDS:
            arr = np.array(getattr(self, name), dtype=np.float32)
            if name == "opacity_logits" and arr.ndim == 1:
                arr = arr[:, None]
            want = shapes.get(name)
            if want is not None and arr.shape != want:
                raise DimensionError(f"{name} has shape {arr.shape}, expected {want}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        sh = self.sh_coeffs
        if sh.ndim != 3 or sh.shape[:2] != (n, 3):
            raise DimensionError(f"sh_coeffs has shape {sh.shape}, expected ({n}, 3, B)")
        degree_for_basis(sh.shape[2])

    @property
    def count(self) -> int:
        return self.centers.shape[0]

    def __len__(self):
        return self.count

    @property
    def sh_degree(self) -> int:
        return degree_for_basis(self.sh_coeffs.shape[2])

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales.astype(np.float64))

    @property
    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits[:, 0].astype(np.float64))

    def rotation_matrices(self) -> np.ndarray:
        return quat_to_rotmat(self.rotations)

    def covariances(self) -> np.ndarray:
        """World covariance R S Sᵀ Rᵀ per Gaussian, (N, 3, 3) float64."""
        R = self.rotation_matrices()
        M = R * self.scales[:, None, :]
        return M @ np.swapaxes(M, 1, 2)

    def permuted(self, order) -> "GaussianScene":
        order = np.asarray(order)
        return GaussianScene(*(getattr(self, f)[order] for f in _FIELDS))

    def equals(self, other: "GaussianScene") -> bool:
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in _FIELDS)


def random_quaternions(rng: np.random.Generator, n: int) -> np.ndarray:
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    q[q[:, 0] < 0] *= -1
    return q


def generate_synthetic_scene(seed: int, n: int, extent: float = 2.0, sh_degree: int = 0,
                             scale_range=(0.01, 0.2)) -> GaussianScene:
    """Random scene in the cube [-extent/2, extent/2]³.

    Scales are log-uniform in ``scale_range``·extent, opacities uniform in
    (0.3, 0.95), DC colour coefficients uniform in [-0.5, 0.5].
    """
    if n < 1:
        raise ValueError("synthetic scene needs at least one Gaussian")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-extent / 2, extent / 2, size=(n, 3))
    lo, hi = scale_range
    log_scales = rng.uniform(np.log(lo * extent), np.log(hi * extent), size=(n, 3))
    opac = rng.uniform(0.3, 0.95, size=n)
    # stay strictly inside the open interval after float32 rounding
    opac = np.clip(opac, 0.3 + 1e-6, 0.95 - 1e-6)
    B = (sh_degree + 1) ** 2
    sh = np.zeros((n, 3, B))
    sh[:, :, 0] = rng.uniform(-0.5, 0.5, size=(n, 3))
    if B > 1:
        sh[:, :, 1:] = rng.uniform(-0.1, 0.1, size=(n, 3, B - 1))
    return GaussianScene(centers, random_quaternions(rng, n), log_scales,
                         logit(opac)[:, None], sh)
