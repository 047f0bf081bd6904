"""Run configuration shared by the MHD and reduced Stokes solvers."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError, PreconditionError
from .spectral import SpectralGrid

MODELS = ("mhd", "stokes")
IC_KINDS = ("single_mode", "single_mode_B", "orthogonal_modes", "braided", "random_band")


def _default_ic():
    return {"kind": "random_band", "seed": 7}


@dataclass
class SolverConfig:
    model: str = "mhd"
    n_dim: int = 2
    L: float = 1.0
    N: int = 128
    K_R: int = 42
    nu: float = 0.01
    s: float = 1.5
    dt: float = 1e-3
    T: float = 1.0
    ic: dict = field(default_factory=_default_ic)
    diag_every: int = 10
    snapshot_every: int = 0
    scheme: str = "if_rk4"
    blowup_factor: float = 1e6
    truncate_velocity: bool = True

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        known = {f.name for f in fields(cls)}
        extra = sorted(set(data) - known)
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(extra)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "SolverConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
        data.pop("K_list", None)
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if self.scheme != "if_rk4":
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.n_dim not in (2, 3):
            raise ConfigError("n_dim must be 2 or 3")
        if not self.nu > 0:
            raise ConfigError("viscosity nu must be positive")
        if not self.s > self.n_dim / 2:
            raise ConfigError(
                f"s = {self.s} violates the well-posedness constraint s > n/2 = {self.n_dim / 2}"
            )
        if not (self.dt > 0 and self.T > 0):
            raise ConfigError("dt and T must be positive")
        n = round(self.T / self.dt)
        if n < 1 or abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise ConfigError(f"T = {self.T} is not an integer multiple of dt = {self.dt}")
        if self.diag_every < 1 or self.snapshot_every < 0:
            raise ConfigError("diag_every must be >= 1 and snapshot_every >= 0")
        if not self.blowup_factor > 1:
            raise ConfigError("blowup_factor must exceed 1")
        if not isinstance(self.ic, dict) or self.ic.get("kind") not in IC_KINDS:
            raise ConfigError(f"ic.kind must be one of {IC_KINDS}")
        try:
            self.grid
        except PreconditionError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def grid(self) -> SpectralGrid:
        return SpectralGrid(self.n_dim, float(self.L), self.N, self.K_R)

    @property
    def n_steps(self) -> int:
        return round(self.T / self.dt)

    def replace(self, **changes) -> "SolverConfig":
        data = self.to_dict()
        data.update(changes)
        return SolverConfig.from_dict(data)
