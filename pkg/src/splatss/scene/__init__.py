from .camera import (
    Camera,
    CameraPath,
    camera_at,
    load_camera_path,
    look_at,
    pinhole,
    quat_to_rotmat,
    rotmat_to_quat,
    save_camera_path,
    slerp,
)
from .gaussians import GaussianScene, generate_synthetic_scene
from .ply import UnsupportedFormatError, load_ply, save_ply
from .sh import SH_C0, eval_sh, sh_basis

__all__ = [
    "Camera", "CameraPath", "GaussianScene", "SH_C0", "UnsupportedFormatError",
    "camera_at", "eval_sh", "generate_synthetic_scene", "load_camera_path", "load_ply",
    "look_at", "pinhole", "quat_to_rotmat", "rotmat_to_quat", "save_camera_path",
    "save_ply", "sh_basis", "slerp",
]
