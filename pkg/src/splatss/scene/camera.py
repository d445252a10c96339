"""Pinhole cameras, quaternion helpers and keyframed camera paths.

Conventions: world-to-camera ``x_cam = R @ x_world + t``; camera looks down
+z, image x to the right, image y down; pixel (row i, column j) has its
centre at image coordinates (x=j, y=i).
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ContractError, FormatError, RangeError


# ---------------------------------------------------------------------------
# quaternions, (w, x, y, z)


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def rotmat_to_quat(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def slerp(q0: np.ndarray, q1: np.ndarray, t: float) -> np.ndarray:
    """Shortest-arc spherical linear interpolation of unit quaternions."""
    q0 = np.asarray(q0, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    dot = float(np.dot(q0, q1))
    if dot < 0:
        q1, dot = -q1, -dot
    if dot > 1 - 1e-12:
        q = q0 + t * (q1 - q0)
        return q / np.linalg.norm(q)
    theta = np.arccos(min(dot, 1.0))
    s = np.sin(theta)
    q = (np.sin((1 - t) * theta) * q0 + np.sin(t * theta) * q1) / s
    return q / np.linalg.norm(q)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    near: float = 0.1
    far: float = 100.0

    def __post_init__(self):
        R = np.array(self.R, dtype=np.float64).reshape(3, 3)
        t = np.array(self.t, dtype=np.float64).reshape(3)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        if np.max(np.abs(R.T @ R - np.eye(3))) >= 1e-6:
            raise ContractError("camera rotation is not orthonormal")
        if not 0 < self.near < self.far:
            raise ContractError(f"need 0 < near < far, got near={self.near}, far={self.far}")
        if self.width < 8 or self.height < 8:
            raise ContractError(f"camera resolution must be at least 8×8, got {self.width}×{self.height}")

    def __eq__(self, other):
        if not isinstance(other, Camera):
            return NotImplemented
        return (self.intrinsics() == other.intrinsics() and np.array_equal(self.R, other.R)
                and np.array_equal(self.t, other.t))

    __hash__ = None

    def intrinsics(self) -> tuple:
        return (self.fx, self.fy, self.cx, self.cy, self.width, self.height, self.near, self.far)

    @property
    def center(self) -> np.ndarray:
        return -self.R.T @ self.t

    @property
    def resolution(self) -> tuple[int, int]:
        return self.height, self.width

    def world_to_camera(self, pts: np.ndarray) -> np.ndarray:
        return pts @ self.R.T + self.t

    def scaled(self, factor: float, width: int | None = None, height: int | None = None) -> "Camera":
        """Intrinsics for an image ``factor`` times the size, keeping pixel
        centres aligned (pixel k of the small image covers the block starting
        at k / factor of the large one)."""
        w = width if width is not None else int(round(self.width * factor))
        h = height if height is not None else int(round(self.height * factor))
        return dataclasses.replace(
            self, fx=self.fx * factor, fy=self.fy * factor,
            cx=(self.cx + 0.5) * factor - 0.5, cy=(self.cy + 0.5) * factor - 0.5,
            width=w, height=h)

    def with_pose(self, R, t) -> "Camera":
        return dataclasses.replace(self, R=R, t=t)

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.R
        M[:3, 3] = self.t
        return M


def look_at(eye, target, up=(0.0, 1.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera (R, t) for a camera at ``eye`` looking at ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=np.float64))
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    return R, -R @ eye


def pinhole(width: int, height: int, fov_x_deg: float = 60.0, near: float = 0.1,
            far: float = 100.0) -> Camera:
    fx = 0.5 * width / np.tan(np.radians(fov_x_deg) / 2)
    return Camera(fx=fx, fy=fx, cx=(width - 1) / 2, cy=(height - 1) / 2,
                  width=width, height=height, near=near, far=far)


@dataclass(frozen=True)
class CameraPath:
    """Keyframes spaced uniformly over t in [0, 1]."""

    keyframes: tuple
    rate: float = 30.0

    def __post_init__(self):
        keys = tuple(self.keyframes)
        object.__setattr__(self, "keyframes", keys)
        if len(keys) < 2:
            raise ContractError("a camera path needs at least two keyframes")
        ref = keys[0].intrinsics()
        if any(k.intrinsics() != ref for k in keys[1:]):
            raise ContractError("all keyframes must share intrinsics and resolution")

    def __len__(self):
        return len(self.keyframes)

    def at(self, t: float) -> Camera:
        return camera_at(self, t)

    def scaled(self, factor: float) -> "CameraPath":
        return CameraPath(tuple(k.scaled(factor) for k in self.keyframes), self.rate)

    def frame_times(self, n: int) -> list[float]:
        return [k / (n - 1) for k in range(n)]


def camera_at(path: CameraPath, t: float) -> Camera:
    """Pose at fractional time: lerp of translation, slerp of rotation."""
    if not 0.0 <= t <= 1.0:
        raise RangeError(f"camera time must lie in [0, 1], got {t}")
    keys = path.keyframes
    pos = t * (len(keys) - 1)
    i = min(int(np.floor(pos)), len(keys) - 2)
    u = pos - i
    a, b = keys[i], keys[i + 1]
    if u == 0.0:
        return a
    if u == 1.0:
        return b
    q = slerp(rotmat_to_quat(a.R), rotmat_to_quat(b.R), u)
    R = quat_to_rotmat(q)
    trans = (1 - u) * a.t + u * b.t
    return a.with_pose(R, trans)


# ---------------------------------------------------------------------------
# text format: one [keyframe N] block per pose, optional [path] block.

_INTRINSIC_KEYS = ("width", "height", "fx", "fy", "cx", "cy", "near", "far")


def save_camera_path(path: CameraPath, filename) -> None:
    cp = configparser.ConfigParser()
    cp["path"] = {"rate": repr(float(path.rate))}
    for k, cam in enumerate(path.keyframes):
        sec = {"width": str(cam.width), "height": str(cam.height)}
        for key in ("fx", "fy", "cx", "cy", "near", "far"):
            sec[key] = repr(float(getattr(cam, key)))
        sec["world_to_camera"] = "\n" + "\n".join(
            " ".join(repr(float(v)) for v in row) for row in cam.matrix())
        cp[f"keyframe {k}"] = sec
    with open(filename, "w") as fh:
        cp.write(fh)


def load_camera_path(filename) -> CameraPath:
    cp = configparser.ConfigParser()
    text = Path(filename).read_text()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise FormatError(f"{filename}: {exc}") from exc
    rate = cp.getfloat("path", "rate", fallback=30.0)
    keys = []
    sections = [s for s in cp.sections() if s.startswith("keyframe")]
    sections.sort(key=lambda s: int(s.split()[1]) if len(s.split()) > 1 else 0)
    for s in sections:
        sec = cp[s]
        missing = [k for k in _INTRINSIC_KEYS + ("world_to_camera",) if k not in sec]
        if missing:
            raise FormatError(f"{filename}: [{s}] lacks {', '.join(missing)}")
        vals = [float(v) for v in sec["world_to_camera"].split()]
        if len(vals) != 16:
            raise FormatError(f"{filename}: [{s}] world_to_camera needs 16 numbers, got {len(vals)}")
        M = np.array(vals).reshape(4, 4)
        keys.append(Camera(
            fx=float(sec["fx"]), fy=float(sec["fy"]), cx=float(sec["cx"]), cy=float(sec["cy"]),
            width=int(sec["width"]), height=int(sec["height"]), R=M[:3, :3], t=M[:3, 3],
            near=float(sec["near"]), far=float(sec["far"])))
    return CameraPath(tuple(keys), rate)
