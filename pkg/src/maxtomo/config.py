"""Strict run configuration read from TOML.

Every table maps onto a dataclass; unknown keys, wrong types and out-of-range
values raise :class:`ConfigError`.  Complex numbers are written as
``[re, im]`` pairs.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .core import FACES
from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


@dataclass
class GridConfig:
    extent: list = field(default_factory=lambda: [1.0, 1.0, 1.0])
    cells: list = field(default_factory=lambda: [16, 16, 16])

    def validate(self):
        _vec(self.extent, "grid.extent", positive=True)
        _vec(self.cells, "grid.cells", integer=True)
        if min(self.cells) < 4:
            raise ConfigError("grid.cells must be >= 4 on every axis")


@dataclass
class WaveConfig:
    k: float | None = 15.3
    omega: float | None = None

    def validate(self):
        if (self.k is None) == (self.omega is None):
            raise ConfigError("wave: give exactly one of k or omega")
        val = self.k if self.k is not None else self.omega
        if not val > 0:
            raise ConfigError("wave: k / omega must be positive")


@dataclass
class BoundaryConfig:
    faces: list = field(default_factory=lambda: ["z+"])

    def validate(self):
        if not self.faces or any(f not in FACES for f in self.faces):
            raise ConfigError(f"boundary.faces must be a nonempty subset of {list(FACES)}")


@dataclass
class GaussianConfig:
    center: list = field(default_factory=lambda: [0.5, 0.5, 0.5])
    sigma: float = 0.08
    amplitude: list = field(default_factory=lambda: [0.05, 0.0])
    cutoff: float = 4.0

    def validate(self):
        _vec(self.center, "medium.gaussian.center")
        _cplx(self.amplitude, "medium.gaussian.amplitude")
        if not (self.sigma > 0 and self.cutoff > 0):
            raise ConfigError("medium.gaussian: sigma and cutoff must be positive")


@dataclass
class InclusionConfig:
    centers: list | None = None
    m: int = 2
    alpha: float = 0.06
    index: list = field(default_factory=lambda: [2.0, 0.5])
    c0: float = 0.4
    c: float = 0.3

    def validate(self):
        _cplx(self.index, "medium.inclusions.index")
        if self.centers is not None:
            for i, z in enumerate(self.centers):
                _vec(z, f"medium.inclusions.centers[{i}]")
        if self.m < 0 or not isinstance(self.m, int):
            raise ConfigError("medium.inclusions.m must be a non-negative integer")
        if not (self.alpha > 0 and self.c0 > 0 and self.c > 0):
            raise ConfigError("medium.inclusions: alpha, c0, c must be positive")


@dataclass
class MediumConfig:
    kind: str = "gaussian"
    background: list = field(default_factory=lambda: [1.0, 0.0])
    gaussian: GaussianConfig = field(default_factory=GaussianConfig)
    inclusions: InclusionConfig = field(default_factory=InclusionConfig)

    def validate(self):
        if self.kind not in ("homogeneous", "gaussian", "inclusions"):
            raise ConfigError("medium.kind must be homogeneous, gaussian or inclusions")
        _cplx(self.background, "medium.background")
        self.gaussian.validate()
        self.inclusions.validate()


@dataclass
class LGridConfig:
    l_max_factor: float = 2.0
    schedule: str = "propagating"
    c_k: float = 1.5
    c_l: float = 0.75
    s_floor: float = 0.0

    def validate(self):
        if self.l_max_factor < 0:
            raise ConfigError("lgrid.l_max_factor must be >= 0")
        if self.schedule not in ("propagating", "fixed"):
            raise ConfigError("lgrid.schedule must be propagating or fixed")
        if self.s_floor < 0:
            raise ConfigError("lgrid.s_floor must be >= 0")


@dataclass
class ProbeConfig:
    kind: str = "projected"
    convention: str = "physical"
    margin: float = 0.25
    reg: float = 1e-5
    guard: float = 60.0

    def validate(self):
        if self.kind not in ("projected", "trace"):
            raise ConfigError("probes.kind must be projected or trace")
        if self.convention not in ("physical", "classical"):
            raise ConfigError("probes.convention must be physical or classical")
        if not (0 <= self.margin < 0.5):
            raise ConfigError("probes.margin must be in [0, 0.5)")
        if not self.reg > 0 or not self.guard > 0:
            raise ConfigError("probes.reg and probes.guard must be positive")


@dataclass
class ReconConfig:
    route: str = "linearized"
    window: str = "none"
    reg: float | None = None
    rhs: str = "consistent"

    def validate(self):
        if self.route not in ("linearized", "full"):
            raise ConfigError("recon.route must be linearized or full")
        if self.window not in ("none", "hann"):
            raise ConfigError("recon.window must be none or hann")
        if self.reg is not None and not self.reg > 0:
            raise ConfigError("recon.reg must be positive")
        if self.rhs not in ("consistent", "literal"):
            raise ConfigError("recon.rhs must be consistent or literal")


@dataclass
class LocateConfig:
    expected_m: int | None = None
    local_radius: float = 0.1
    l_moment_factor: float = 1.0
    refine: bool = True

    def validate(self):
        if self.expected_m is not None and self.expected_m < 0:
            raise ConfigError("locate.expected_m must be >= 0")
        if not self.local_radius > 0 or not self.l_moment_factor > 0:
            raise ConfigError("locate.local_radius and locate.l_moment_factor must be positive")


@dataclass
class ForwardConfig:
    data: str = "plane_wave"
    direction: list = field(default_factory=lambda: [1.0, 2.0, 2.0])
    polarization: list = field(default_factory=lambda: [2.0, -1.0, 0.0])
    full_boundary: bool = True

    def validate(self):
        if self.data not in ("plane_wave", "random"):
            raise ConfigError("forward.data must be plane_wave or random")
        _vec(self.direction, "forward.direction")
        _vec(self.polarization, "forward.polarization")


@dataclass
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    wave: WaveConfig = field(default_factory=WaveConfig)
    boundary: BoundaryConfig = field(default_factory=BoundaryConfig)
    medium: MediumConfig = field(default_factory=MediumConfig)
    lgrid: LGridConfig = field(default_factory=LGridConfig)
    probes: ProbeConfig = field(default_factory=ProbeConfig)
    recon: ReconConfig = field(default_factory=ReconConfig)
    locate: LocateConfig = field(default_factory=LocateConfig)
    forward: ForwardConfig = field(default_factory=ForwardConfig)
    seed: int = 0
    out: str = "out"

    def validate(self) -> "RunConfig":
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if hasattr(v, "validate"):
                v.validate()
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        return self


# ---------------------------------------------------------------------------
# parsing


def _vec(v, name, positive=False, integer=False):
    if not isinstance(v, list) or len(v) != 3:
        raise ConfigError(f"{name} must be a list of 3 numbers")
    for x in v:
        if integer and not isinstance(x, int):
            raise ConfigError(f"{name} entries must be integers")
        if not isinstance(x, (int, float)) or isinstance(x, bool):
            raise ConfigError(f"{name} entries must be numbers")
        if positive and not x > 0:
            raise ConfigError(f"{name} entries must be positive")


def _cplx(v, name):
    if not isinstance(v, list) or len(v) != 2 or not all(isinstance(x, (int, float)) for x in v):
        raise ConfigError(f"{name} must be a [re, im] pair")


def as_complex(v) -> complex:
    return complex(float(v[0]), float(v[1]))


_SCALARS = {"float": (int, float), "int": (int,), "str": (str,), "bool": (bool,), "list": (list,)}


def _type_ok(value, annotation: str) -> bool:
    parts = [p.strip() for p in str(annotation).split("|")]
    for p in parts:
        if p == "None":
            continue
        allowed = _SCALARS.get(p)
        if allowed is None:
            return True
        if isinstance(value, bool) and p != "bool":
            continue
        if isinstance(value, allowed):
            return True
    return False


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"[{path}] must be a table")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        where = f" in [{path}]" if path else ""
        raise ConfigError(f"unknown key(s){where}: {', '.join(unknown)}")
    kwargs: dict[str, Any] = {}
    for name, value in data.items():
        f = fields[name]
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        sub = f"{path}.{name}" if path else name
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, sub)
        else:
            if not _type_ok(value, f.type):
                raise ConfigError(f"{sub}: expected {f.type}, got {type(value).__name__}")
            kwargs[name] = float(value) if f.type.startswith("float") and isinstance(value, int) else value
    return cls(**kwargs)


def parse_config(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from exc
    return _build(RunConfig, data, "").validate()


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def documented_keys() -> list[str]:
    """Every accepted dotted key (used by the strictness tests)."""
    out: list[str] = []

    def walk(cls, prefix):
        for f in dataclasses.fields(cls):
            default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
            key = f"{prefix}{f.name}"
            if dataclasses.is_dataclass(default):
                walk(type(default), key + ".")
            else:
                out.append(key)

    walk(RunConfig, "")
    return out
