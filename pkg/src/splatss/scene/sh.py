"""Real spherical harmonics up to degree 3, in the sign convention used by
Gaussian-splat PLY exports."""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, DimensionError

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
         -1.0925484305920792, 0.5462742152960396)
SH_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
         0.3731763325901154, -0.4570457994644658, 1.445305721320277,
         -0.5900435899266435)

VALID_BASIS = (1, 4, 9, 16)


def degree_for_basis(n_basis: int) -> int:
    if n_basis not in VALID_BASIS:
        raise DimensionError(f"SH basis size must be one of {VALID_BASIS}, got {n_basis}")
    return VALID_BASIS.index(n_basis)


def sh_basis(dirs: np.ndarray, n_basis: int) -> np.ndarray:
    """Evaluate the first ``n_basis`` basis functions at unit directions (N, 3)."""
    degree_for_basis(n_basis)
    dirs = np.asarray(dirs, dtype=np.float64)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    out = np.empty(dirs.shape[:-1] + (n_basis,), dtype=np.float64)
    out[..., 0] = SH_C0
    if n_basis > 1:
        out[..., 1] = -SH_C1 * y
        out[..., 2] = SH_C1 * z
        out[..., 3] = -SH_C1 * x
    if n_basis > 4:
        xx, yy, zz = x * x, y * y, z * z
        out[..., 4] = SH_C2[0] * x * y
        out[..., 5] = SH_C2[1] * y * z
        out[..., 6] = SH_C2[2] * (2 * zz - xx - yy)
        out[..., 7] = SH_C2[3] * x * z
        out[..., 8] = SH_C2[4] * (xx - yy)
    if n_basis > 9:
        out[..., 9] = SH_C3[0] * y * (3 * xx - yy)
        out[..., 10] = SH_C3[1] * x * y * z
        out[..., 11] = SH_C3[2] * y * (4 * zz - xx - yy)
        out[..., 12] = SH_C3[3] * z * (2 * zz - 3 * xx - 3 * yy)
        out[..., 13] = SH_C3[4] * x * (4 * zz - xx - yy)
        out[..., 14] = SH_C3[5] * z * (xx - yy)
        out[..., 15] = SH_C3[6] * x * (xx - 3 * yy)
    return out


def eval_sh(coeffs: np.ndarray, view_dir: np.ndarray) -> np.ndarray:
    """RGB = 0.5 + sum_b coeffs[:, b] * Y_b(view_dir), unclamped.

    ``coeffs`` is (3, B) for one Gaussian or (N, 3, B) for many; ``view_dir``
    is (3,) or (N, 3) and must be unit length.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    view_dir = np.asarray(view_dir, dtype=np.float64)
    norms = np.linalg.norm(view_dir, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-4):
        raise ContractError("eval_sh: view direction must be unit length")
    basis = sh_basis(view_dir, coeffs.shape[-1])
    return 0.5 + np.einsum("...cb,...b->...c", coeffs, basis)
