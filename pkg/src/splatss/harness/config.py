"""Run configuration and its INI-style config file."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigurationError, FormatError

ABLATIONS = ("no_gai", "no_gtrr", "no_gi", "no_tru")


def parse_resolution(text: str) -> tuple[int, int]:
    """'WxH' → (W, H)."""
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as exc:
        raise ConfigurationError(f"resolution must look like 96x96, got '{text}'") from exc


@dataclass
class RunConfig:
    scene: str | None = None          # PLY path; None means synthetic
    gaussians: int = 5000
    extent: float = 2.0
    sh_degree: int = 0
    path: str | None = None           # camera path file; None means generated
    lr_res: tuple = (64, 64)          # (W, H)
    scale: int = 4
    frames: int = 3
    ablate: tuple = ()
    seed: int = 0
    out: str = "out"
    serial: bool = False
    checkpoints: tuple = ()
    fallback_upsampler: str | None = "bicubic"
    workers: int = 1

    def __post_init__(self):
        self.lr_res = tuple(int(v) for v in self.lr_res)
        self.ablate = tuple(self.ablate)
        self.checkpoints = tuple(self.checkpoints)
        self.validate()

    def validate(self):
        if self.scale not in (2, 4):
            raise ConfigurationError(f"scale must be 2 or 4, got {self.scale}")
        if self.frames < 2:
            raise ConfigurationError("a sequence needs at least 2 frames")
        unknown = [a for a in self.ablate if a not in ABLATIONS]
        if unknown:
            raise ConfigurationError(f"unknown ablation(s): {', '.join(unknown)}")
        if "no_gai" in self.ablate and not self.fallback_upsampler:
            raise ConfigurationError("no_gai needs a fallback upsampler")
        if min(self.lr_res) < 8:
            raise ConfigurationError("LR resolution must be at least 8×8")

    @property
    def hr_res(self) -> tuple[int, int]:
        return self.lr_res[0] * self.scale, self.lr_res[1] * self.scale

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, value: str):
    if key == "lr_res":
        return parse_resolution(value)
    if key in ("ablate", "checkpoints"):
        return tuple(v.strip() for v in value.replace(",", " ").split() if v.strip())
    if key in ("scale", "frames", "seed", "gaussians", "sh_degree", "workers"):
        return int(value)
    if key == "extent":
        return float(value)
    if key == "serial":
        return value.strip().lower() in ("1", "true", "yes", "on")
    if key in ("scene", "path", "fallback_upsampler"):
        return None if value.strip().lower() in ("", "none") else value.strip()
    return value.strip()


def read_config_file(path) -> dict:
    """Key = value pairs from every section; keys use underscores or dashes."""
    cp = configparser.ConfigParser()
    try:
        cp.read_string(Path(path).read_text())
    except (OSError, configparser.Error) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    out = {}
    for section in cp.sections():
        for key, value in cp[section].items():
            k = key.replace("-", "_")
            if k not in _FIELD_TYPES:
                raise ConfigurationError(f"{path}: unknown key '{key}' in [{section}]")
            out[k] = _coerce(k, value)
    return out


def write_config_file(cfg: RunConfig, path) -> None:
    cp = configparser.ConfigParser()
    run = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "lr_res":
            v = f"{v[0]}x{v[1]}"
        elif isinstance(v, tuple):
            v = " ".join(v)
        run[f.name] = "" if v is None else str(v)
    cp["run"] = run
    with open(path, "w") as fh:
        cp.write(fh)
