"""Binary little-endian PLY in the usual Gaussian-splat vertex layout."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import DataError, FormatError
from .gaussians import GaussianScene

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


class UnsupportedFormatError(FormatError):
    pass


def _parse_header(raw: bytes):
    end = raw.find(b"end_header\n")
    if not raw.startswith(b"ply\n") or end < 0:
        raise FormatError("not a PLY file (missing 'ply' magic or end_header)")
    lines = raw[:end].decode("ascii", errors="replace").splitlines()[1:]
    fmt = None
    elements = []
    for line in lines:
        parts = line.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            fmt = parts[1]
            if fmt != "binary_little_endian":
                raise UnsupportedFormatError(f"PLY format '{fmt}' is not supported; need binary_little_endian")
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise FormatError("property declared before any element")
            if parts[1] == "list":
                raise FormatError(f"list property '{parts[-1]}' is not supported")
            if parts[1] not in _PLY_TYPES:
                raise FormatError(f"unknown property type '{parts[1]}'")
            elements[-1][2].append((parts[2], "<" + _PLY_TYPES[parts[1]]))
    if fmt is None:
        raise FormatError("PLY header has no format line")
    return elements, end + len(b"end_header\n")


def _n_rest(names) -> int:
    return sum(1 for n in names if n.startswith("f_rest_"))


def load_ply(path) -> GaussianScene:
    raw = Path(path).read_bytes()
    elements, offset = _parse_header(raw)
    vertex = None
    for name, count, props in elements:
        dtype = np.dtype(props)
        if name == "vertex":
            vertex = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
            break
        offset += dtype.itemsize * count
    if vertex is None:
        raise FormatError("PLY has no vertex element")
    names = vertex.dtype.names or ()
    n_rest = _n_rest(names)
    B = n_rest // 3 + 1
    required = (["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"]
                + [f"f_rest_{i}" for i in range(3 * B - 3)]
                + ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"])
    for key in required:
        if key not in names:
            raise FormatError(f"PLY vertex element lacks required property '{key}'")
    if n_rest % 3 or B not in (1, 4, 9, 16):
        raise FormatError(f"{n_rest} f_rest properties do not form an SH basis of degree <= 3")

    def col(*keys):
        return np.stack([vertex[k].astype(np.float32) for k in keys], axis=1) if keys else None

    n = len(vertex)
    centers = col("x", "y", "z")
    dc = col("f_dc_0", "f_dc_1", "f_dc_2")
    sh = np.zeros((n, 3, B), np.float32)
    sh[:, :, 0] = dc
    if B > 1:
        rest = col(*[f"f_rest_{i}" for i in range(3 * B - 3)]).reshape(n, 3, B - 1)
        sh[:, :, 1:] = rest
    opacity = col("opacity")
    scales = col("scale_0", "scale_1", "scale_2")
    rots = col("rot_0", "rot_1", "rot_2", "rot_3")

    for arr in (centers, sh.reshape(n, 3 * B), opacity, scales, rots):
        bad = ~np.all(np.isfinite(arr), axis=1)
        if np.any(bad):
            raise DataError(f"non-finite value at vertex {int(np.argmax(bad))}")
    norms = np.linalg.norm(rots.astype(np.float64), axis=1)
    if np.any(norms == 0):
        raise DataError(f"zero quaternion at vertex {int(np.argmax(norms == 0))}")
    off = np.abs(norms - 1.0) > 1e-6
    if np.any(off):
        rots = rots.copy()
        rots[off] = (rots[off].astype(np.float64) / norms[off, None]).astype(np.float32)
    return GaussianScene(centers, rots, scales, opacity, sh)


def save_ply(scene: GaussianScene, path) -> None:
    n = scene.count
    B = scene.sh_coeffs.shape[2]
    names = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
    names += [f"f_rest_{i}" for i in range(3 * B - 3)]
    names += ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    cols = [scene.centers, np.zeros((n, 3), np.float32), scene.sh_coeffs[:, :, 0],
            scene.sh_coeffs[:, :, 1:].reshape(n, 3 * B - 3), scene.opacity_logits,
            scene.log_scales, scene.rotations]
    data = np.concatenate(cols, axis=1).astype("<f4")
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {nm}" for nm in names]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(data).tobytes())
