"""Reduced Stokes model: u is slaved to B through a Stokes solve, B is transported ideally.

    -nu Lap u + grad p = (B.grad)B,     div u = 0
    dB/dt = S_R[(B.grad)u - (u.grad)B]

u carries no state; it is recomputed from B at every RK4 stage.  The magnetic
energy obeys d/dt (1/2)||B||^2 = -nu ||grad u||^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import SolverConfig
from .errors import ConfigError, DegenerateProbeError, GridMismatchError, PreconditionError
from .mhd import QuadraticTerms, initial_condition, write_rows
from .nonlinear import _require_band
from .spectral import (
    TWO_PI,
    SpectralGrid,
    VectorField,
    divergence_residual,
    grad_sobolev_norm,
    leray_coeffs,
    sobolev_norm,
    to_physical,
)

RELAX_COLUMNS = ("t", "u_L2", "B_L2", "B_Hs", "mag_energy", "euler_residual")


def _inverse_stokes(grid: SpectralGrid, nu: float) -> np.ndarray:
    """1 / (4 pi^2 nu |xi|^2) with the mean mode set to zero."""
    xi2 = grid.xi2
    with np.errstate(divide="ignore"):
        inv = np.where(xi2 > 0, 1.0 / (TWO_PI**2 * nu * np.where(xi2 > 0, xi2, 1.0)), 0.0)
    return inv


class _StokesKernel:
    """B-tendency of the reduced model.

    With ``truncate`` the Stokes velocity is cut to |k| <= K_R and every product
    is exact on the native N >= 3 K_R + 1 mesh.  Without it u keeps its full
    support |k| <= 2 K_R and the products are formed on the product grid.
    """

    def __init__(self, grid: SpectralGrid, nu: float, truncate: bool = True, hermitian=True):
        if not nu > 0:
            raise PreconditionError("viscosity nu must be positive")
        self.native = grid
        self.truncate = truncate
        self.work = grid if truncate else grid.product_grid()
        self.q = QuadraticTerms(self.work, hermitian)
        self.inv = _inverse_stokes(self.work, nu)
        self.nu = nu
        self.mask = self.work.cutoff_mask
        if not truncate:
            idx = grid.modes % self.work.N
            self._window = np.ix_(*([idx] * grid.n_dim))

    def lift(self, c):
        if self.truncate:
            return c
        out = np.zeros((c.shape[0],) + self.work.shape, complex)
        out[(slice(None),) + self._window] = c
        return out

    def lower(self, c):
        if self.truncate:
            return c
        return c[(slice(None),) + self._window]

    def velocity_work(self, Bw_phys):
        f = self.q.lorentz(Bw_phys) if self.truncate else self._full_lorentz(Bw_phys)
        return f * self.inv

    def _full_lorentz(self, B_phys):
        q = self.q
        prods = np.stack([B_phys[i] * B_phys[j] for i, j in q.sym_pairs])
        return leray_coeffs(q.sym_divergence(q.to_spec(prods)), self.work)

    def tendency(self, B_c):
        """(dB/dt, u) in work-grid coefficients."""
        Bw = self.lift(B_c)
        B_phys = self.q.to_phys(Bw)
        u = self.velocity_work(B_phys)
        u_phys = self.q.to_phys(u)
        dB = self.q.induction(u_phys, B_phys)
        return self.lower(dB), u

    def dissipation(self, u_w, s):
        e = np.sum(np.abs(u_w) ** 2, axis=0)
        w = self.work.volume * TWO_PI**2 * self.work.xi2
        return (self.nu * float(np.sum(w * e)),
                float(np.sqrt(np.sum(w * np.power(1.0 + self.work.xi2, s) * e))))


def stokes_solve(B: VectorField, nu: float, truncate: bool = True) -> VectorField:
    """Velocity with -nu Lap u = P[(B.grad)B] and zero mean.

    ``truncate`` returns S_R u on B's grid (the Galerkin velocity).  Otherwise
    the full solution, supported in |k| <= 2 K_R, is returned on the product grid.
    """
    if not nu > 0:
        raise PreconditionError("viscosity nu must be positive")
    _require_band(B)
    kern = _StokesKernel(B.grid, nu, truncate, B.hermitian)
    B_phys = kern.q.to_phys(kern.lift(B.coeffs))
    return VectorField(kern.work, kern.velocity_work(B_phys), B.hermitian)


def lorentz_force(B: VectorField) -> VectorField:
    """P[(B.grad)B] in full on the product grid."""
    _require_band(B)
    work = B.grid.product_grid()
    kern = _StokesKernel(B.grid, 1.0, truncate=False, hermitian=B.hermitian)
    B_phys = kern.q.to_phys(kern.lift(B.coeffs))
    return VectorField(work, kern._full_lorentz(B_phys), B.hermitian)


def euler_residual(B: VectorField) -> float:
    """||P[(B.grad)B]||_L2, zero exactly at stationary Euler states."""
    return sobolev_norm(lorentz_force(B))


def elliptic_ratio(B: VectorField, nu: float, s: float) -> float:
    """||u||_{H^(s+1)} / (||B||_{H^s}^2 / nu) for u = stokes_solve(B, nu)."""
    norm_B = sobolev_norm(B, s)
    if norm_B == 0:
        raise DegenerateProbeError("B is zero")
    u = stokes_solve(B, nu, truncate=False)
    return sobolev_norm(u, s + 1.0) / (norm_B**2 / nu)


@dataclass
class StokesState:
    t: float
    B: VectorField
    u: VectorField


def _make_state(t, B, nu, truncate):
    return StokesState(t, B, stokes_solve(B, nu, truncate))


def _rk4(kern: _StokesKernel, B, dt, s):
    k1, u1 = kern.tendency(B)
    k2, u2 = kern.tendency(B + 0.5 * dt * k1)
    k3, u3 = kern.tendency(B + 0.5 * dt * k2)
    k4, u4 = kern.tendency(B + dt * k3)
    d = [kern.dissipation(u, s) for u in (u1, u2, u3, u4)]
    incr = tuple((dt / 6) * (d[0][m] + 2 * d[1][m] + 2 * d[2][m] + d[3][m]) for m in range(2))
    return B + (dt / 6) * (k1 + 2 * (k2 + k3) + k4), incr


def step(state: StokesState, config: SolverConfig) -> StokesState:
    """One classical RK4 step of the B equation with u recomputed at each stage."""
    B = state.B
    _require_band(B)
    kern = _StokesKernel(B.grid, config.nu, config.truncate_velocity, B.hermitian)
    Bn, _ = _rk4(kern, B.coeffs, config.dt, config.s)
    if not np.all(np.isfinite(Bn)):
        from .errors import BlowUpError

        raise BlowUpError(f"non-finite coefficients after step at t = {state.t + config.dt}")
    return _make_state(state.t + config.dt, B._like(Bn), config.nu, config.truncate_velocity)


@dataclass
class RelaxationRecord:
    t: float
    u_L2: float
    B_L2: float
    B_Hs: float
    mag_energy: float
    euler_residual: float
    cumdiss: float
    cum_Hs_gradu: float
    B_envelope: float
    div_u: float
    div_B: float

    def row(self):
        return [getattr(self, c) for c in RELAX_COLUMNS]


@dataclass
class RelaxationReport:
    records: list = field(default_factory=list)
    status: str = "completed"
    message: str = ""
    support_violation: float = 0.0
    final_state: StokesState | None = None

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def energy_residual(self) -> float:
        """(1/2)||B(T)||^2 + int nu ||grad u||^2 - (1/2)||B(0)||^2."""
        first, last = self.records[0], self.records[-1]
        return last.mag_energy + last.cumdiss - first.mag_energy

    @property
    def envelope_violations(self) -> int:
        return int(sum(r.B_Hs > r.B_envelope * (1 + 1e-12) for r in self.records))

    @property
    def magnetic_energy_monotone(self) -> bool:
        E = np.array([r.mag_energy for r in self.records])
        return bool(np.all(np.diff(E) <= 1e-12 * max(E[0], 1e-300)))

    @property
    def velocity_decreased(self) -> bool:
        """||u(T)|| < ||u(0+)||."""
        return self.records[-1].u_L2 < self.records[0].u_L2

    def summary(self) -> dict:
        return {
            "status": self.status,
            "energy_residual": self.energy_residual(),
            "envelope_violations": self.envelope_violations,
            "magnetic_energy_monotone": self.magnetic_energy_monotone,
            "velocity_decreased": self.velocity_decreased,
            "final_euler_residual": self.records[-1].euler_residual,
            "max_div": max(max(r.div_u, r.div_B) for r in self.records),
            "support_violation": self.support_violation,
        }

    def write_csv(self, path):
        write_rows(path, RELAX_COLUMNS, (r.row() for r in self.records))


def _record(t, B, u, cumdiss, cum_hs, B0_hs, s):
    return RelaxationRecord(
        t=t,
        u_L2=sobolev_norm(u),
        B_L2=sobolev_norm(B),
        B_Hs=sobolev_norm(B, s),
        mag_energy=0.5 * sobolev_norm(B) ** 2,
        euler_residual=euler_residual(B),
        cumdiss=cumdiss,
        cum_Hs_gradu=cum_hs,
        B_envelope=B0_hs * math.exp(cum_hs),
        div_u=divergence_residual(u),
        div_B=divergence_residual(B),
    )


def initial_field(config: SolverConfig, grid: SpectralGrid | None = None) -> VectorField:
    """Initial B of the reduced model.

    For kinds that set a velocity only, the velocity profile is used as B.
    """
    ic = dict(config.ic)
    kind = ic.pop("kind")
    grid = config.grid if grid is None else grid
    u, B = initial_condition(kind, grid, **ic)
    if kind == "single_mode":
        return u
    return B


def run_relaxation(config: SolverConfig, B0: VectorField | None = None) -> RelaxationReport:
    """Integrate the reduced model and record the relaxation series."""
    grid = config.grid
    B = initial_field(config, grid) if B0 is None else B0
    if B.grid != grid:
        raise GridMismatchError("initial B does not live on the configured grid")
    _require_band(B)
    nu, s, dt = config.nu, config.s, config.dt
    trunc = config.truncate_velocity
    kern = _StokesKernel(grid, nu, trunc, B.hermitian)
    u = stokes_solve(B, nu, trunc)
    vmax = max(float(np.max(np.abs(to_physical(u)))), float(np.max(np.abs(to_physical(B)))), 1e-12)
    dt_max = 0.5 * grid.L / (TWO_PI * max(grid.K_R, 1) * vmax)
    if dt > dt_max:
        raise ConfigError(f"dt = {dt} exceeds the CFL limit {dt_max:.3e}")

    report = RelaxationReport()
    B0_hs = sobolev_norm(B, s)
    cumdiss = cum_hs = 0.0
    rec = _record(0.0, B, u, 0.0, 0.0, B0_hs, s)
    report.records.append(rec)
    Y0 = rec.B_Hs**2
    ceiling = config.blowup_factor * Y0 if Y0 > 0 else math.inf
    c = B.coeffs
    outside = ~grid.cutoff_mask
    n = 0
    for n in range(1, config.n_steps + 1):
        c, (dd, dh) = _rk4(kern, c, dt, s)
        cumdiss += dd
        cum_hs += dh
        t = n * dt
        if not np.all(np.isfinite(c)):
            report.status = "blowup"
            report.message = f"non-finite coefficients at t = {t:.6g}"
            break
        if n % config.diag_every == 0 or n == config.n_steps:
            Bf = B._like(c)
            uf = stokes_solve(Bf, nu, trunc)
            report.support_violation = max(report.support_violation,
                                           float(np.abs(c[:, outside]).max(initial=0.0)))
            rec = _record(t, Bf, uf, cumdiss, cum_hs, B0_hs, s)
            report.records.append(rec)
            if rec.B_Hs**2 > ceiling:
                report.status = "blowup"
                report.message = f"||B||_Hs^2 exceeded ceiling {ceiling:.3e} at t = {t:.6g}"
                break
    Bf = B._like(c)
    report.final_state = _make_state(n * dt, Bf, nu, trunc)
    return report
