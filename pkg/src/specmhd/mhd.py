"""Galerkin-truncated viscous non-resistive MHD on V_R.

The truncated system

    du/dt = nu Lap u + P S_R[(B.grad)B - (u.grad)u]
    dB/dt =            S_R[(B.grad)u - (u.grad)B]

is integrated with an integrating-factor RK4 scheme: the viscous factor
exp(-4 pi^2 nu |k/L|^2 t) is applied exactly and the quadratic terms go through
classical RK4 stages.  Quadratic terms are formed in divergence form on the
native N >= 3 K_R + 1 mesh, which is alias-free on |k| <= K_R.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import combinations, combinations_with_replacement
from pathlib import Path

import numpy as np

from .config import SolverConfig
from .errors import BlowUpError, ConfigError, GridMismatchError, PreconditionError
from .spectral import (
    TWO_PI,
    SpectralGrid,
    VectorField,
    analyze,
    analyze_real,
    divergence_residual,
    embed,
    fourier_truncate,
    grad_sobolev_norm,
    laplacian,
    leray_coeffs,
    random_solenoidal,
    sobolev_norm,
    synthesize,
    synthesize_real,
)

DIAG_COLUMNS = ("t", "E", "diss", "cumdiss", "Hs_u", "Hs_B", "Y", "Hs_gradu",
                "cum_Hs_gradu", "B_envelope", "div_u", "div_B")


@dataclass
class MHDState:
    t: float
    u: VectorField
    B: VectorField


# ---------------------------------------------------------------- initial data

def _transverse_mode(grid, k, direction, amplitude):
    """amplitude * direction * cos(2 pi k.x / L) with direction . k = 0."""
    c = np.zeros((grid.n_dim,) + grid.shape, complex)
    k = np.asarray(k)
    if abs(np.dot(k, direction)) > 0:
        raise PreconditionError("mode direction must be orthogonal to k")
    if np.dot(k, k) > grid.K_R**2:
        raise PreconditionError(f"mode {tuple(k)} lies outside the cutoff K_R = {grid.K_R}")
    for sign in (1, -1):
        idx = tuple(int(sign * ki) % grid.N for ki in k)
        for i, d in enumerate(direction):
            c[(i,) + idx] += 0.5 * amplitude * d
    return VectorField(grid, c, hermitian=True)


def _axis(grid, i):
    e = np.zeros(grid.n_dim)
    e[i] = 1.0
    return e


def initial_condition(kind: str, grid: SpectralGrid, seed: int = 7, amplitude: float | None = None,
                      gamma: float = 2.0, K: float | None = None):
    """Divergence-free, real-valued (u0, B0) in V_R.

    single_mode      u0 = a e2 cos(2 pi x1 / L), B0 = 0
    single_mode_B    u0 = 0, B0 = a e2 cos(2 pi x1 / L)  (a static state)
    orthogonal_modes u0 = a e2 cos(2 pi x1 / L), B0 = a e1 cos(2 pi x2 / L)
    braided          u0 = 0, B0 = a [e1 cos(2 pi x2 / L) + e2 cos(4 pi x1 / L)]
    random_band      independent random solenoidal u0, B0 with RMS a and
                     coefficient decay |k|^-gamma inside |k| <= K
    """
    zero = VectorField.zeros(grid)
    k1 = _axis(grid, 0).astype(int)
    k2 = _axis(grid, 1).astype(int)
    if kind == "single_mode":
        a = 1.0 if amplitude is None else amplitude
        return _transverse_mode(grid, k1, _axis(grid, 1), a), zero
    if kind == "single_mode_B":
        a = 1.0 if amplitude is None else amplitude
        return zero, _transverse_mode(grid, k1, _axis(grid, 1), a)
    if kind == "orthogonal_modes":
        a = 1.0 if amplitude is None else amplitude
        return (_transverse_mode(grid, k1, _axis(grid, 1), a),
                _transverse_mode(grid, k2, _axis(grid, 0), a))
    if kind == "braided":
        a = 1.0 if amplitude is None else amplitude
        B = (_transverse_mode(grid, k2, _axis(grid, 0), a)
             + _transverse_mode(grid, 2 * k1, _axis(grid, 1), a))
        return zero, B
    if kind == "random_band":
        a = 0.1 if amplitude is None else amplitude
        rng = np.random.default_rng(seed)
        u = random_solenoidal(grid, rng, gamma, K, rms=a)
        B = random_solenoidal(grid, rng, gamma, K, rms=a)
        return u, B
    raise PreconditionError(f"unknown initial condition {kind!r}")


def initial_state(config: SolverConfig, grid: SpectralGrid | None = None) -> MHDState:
    ic = dict(config.ic)
    kind = ic.pop("kind")
    grid = config.grid if grid is None else grid
    u, B = initial_condition(kind, grid, **ic)
    return MHDState(0.0, u, B)


# ---------------------------------------------------------------- quadratic terms

class QuadraticTerms:
    """Divergence-form products on the native mesh, truncated to |k| <= K_R."""

    def __init__(self, grid: SpectralGrid, hermitian: bool = True):
        self.grid = grid
        self.hermitian = hermitian
        n = grid.n_dim
        self.sym_pairs = list(combinations_with_replacement(range(n), 2))
        self.anti_pairs = list(combinations(range(n), 2))
        self.sym_index = {}
        for m, (i, j) in enumerate(self.sym_pairs):
            self.sym_index[i, j] = self.sym_index[j, i] = m
        self.ddx = TWO_PI * 1j * grid.xi
        self.mask = grid.cutoff_mask

    def to_phys(self, c):
        if self.hermitian:
            return synthesize_real(c, self.grid)
        return synthesize(c, self.grid)

    def to_spec(self, p):
        if self.hermitian:
            return analyze_real(p, self.grid)
        return analyze(p, self.grid)

    def sym_divergence(self, F):
        """Row-wise divergence of the symmetric tensor stored as upper-triangle list F."""
        n = self.grid.n_dim
        out = np.zeros((n,) + self.grid.shape, complex)
        for i in range(n):
            for j in range(n):
                out[i] += self.ddx[j] * F[self.sym_index[i, j]]
        return out

    def anti_divergence(self, A):
        """Row-wise divergence of the antisymmetric tensor with upper entries A."""
        n = self.grid.n_dim
        out = np.zeros((n,) + self.grid.shape, complex)
        for m, (i, j) in enumerate(self.anti_pairs):
            out[i] += self.ddx[j] * A[m]
            out[j] -= self.ddx[i] * A[m]
        return out

    def lorentz_minus_inertia(self, u_phys, B_phys):
        """P S_R[(B.grad)B - (u.grad)u] from physical samples."""
        prods = np.stack([B_phys[i] * B_phys[j] - u_phys[i] * u_phys[j]
                          for i, j in self.sym_pairs])
        F = self.to_spec(prods)
        return leray_coeffs(self.sym_divergence(F), self.grid) * self.mask

    def lorentz(self, B_phys):
        """P S_R[(B.grad)B]."""
        prods = np.stack([B_phys[i] * B_phys[j] for i, j in self.sym_pairs])
        F = self.to_spec(prods)
        return leray_coeffs(self.sym_divergence(F), self.grid) * self.mask

    def induction(self, u_phys, B_phys):
        """S_R[(B.grad)u - (u.grad)B] = S_R div(u B^T - B u^T)."""
        prods = np.stack([u_phys[i] * B_phys[j] - B_phys[i] * u_phys[j]
                          for i, j in self.anti_pairs])
        A = self.to_spec(prods)
        return self.anti_divergence(A) * self.mask

    def mhd(self, u_c, B_c):
        n = self.grid.n_dim
        phys = self.to_phys(np.concatenate([u_c, B_c]))
        u_phys, B_phys = phys[:n], phys[n:]
        return self.lorentz_minus_inertia(u_phys, B_phys), self.induction(u_phys, B_phys)


def _require_state(state: MHDState):
    if state.u.grid != state.B.grid:
        raise GridMismatchError("u and B live on different grids")
    for f in (state.u, state.B):
        if not f.in_band():
            raise PreconditionError("state is not in V_R (modes outside the cutoff ball)")


def rhs(state: MHDState, config: SolverConfig):
    """(du/dt, dB/dt) of the truncated system, viscous term included."""
    _require_state(state)
    grid = state.u.grid
    q = QuadraticTerms(grid, state.u.hermitian and state.B.hermitian)
    nu_c, nb_c = q.mhd(state.u.coeffs, state.B.coeffs)
    du = laplacian(state.u) * config.nu + VectorField(grid, nu_c, state.u.hermitian)
    dB = VectorField(grid, nb_c, state.B.hermitian)
    return du, dB


# ---------------------------------------------------------------- integrator

class _Integrator:
    """Integrating-factor RK4 for the coefficient arrays, with stage quadrature of
    nu ||grad u||^2 and ||grad u||_Hs so the cumulative integrals are 4th order."""

    def __init__(self, grid: SpectralGrid, nu: float, s: float, dt: float, hermitian=True):
        self.grid = grid
        self.nu = nu
        self.s = s
        self.dt = dt
        self.q = QuadraticTerms(grid, hermitian)
        lin = -nu * TWO_PI**2 * grid.xi2
        self.E = np.exp(lin * dt)
        self.E2 = np.exp(lin * dt / 2)
        self.gradw = grid.volume * TWO_PI**2 * grid.xi2
        self.gradw_s = self.gradw * np.power(1.0 + grid.xi2, s)

    def dissipation(self, u_c):
        e = np.sum(np.abs(u_c) ** 2, axis=0)
        return self.nu * float(np.sum(self.gradw * e)), float(np.sqrt(np.sum(self.gradw_s * e)))

    def advance(self, u, B):
        dt, E, E2 = self.dt, self.E, self.E2
        f = self.q.mhd
        a_u, a_B = f(u, B)
        d1 = self.dissipation(u)
        u2 = E2 * (u + 0.5 * dt * a_u)
        B2 = B + 0.5 * dt * a_B
        b_u, b_B = f(u2, B2)
        d2 = self.dissipation(u2)
        u3 = E2 * u + 0.5 * dt * b_u
        B3 = B + 0.5 * dt * b_B
        c_u, c_B = f(u3, B3)
        d3 = self.dissipation(u3)
        u4 = E * u + dt * E2 * c_u
        B4 = B + dt * c_B
        e_u, e_B = f(u4, B4)
        d4 = self.dissipation(u4)
        u_new = E * u + (dt / 6) * (E * a_u + 2 * E2 * (b_u + c_u) + e_u)
        B_new = B + (dt / 6) * (a_B + 2 * (b_B + c_B) + e_B)
        incr = tuple((dt / 6) * (d1[m] + 2 * d2[m] + 2 * d3[m] + d4[m]) for m in range(2))
        return u_new, B_new, incr


def cfl_limit(state: MHDState, grid: SpectralGrid, eps: float = 1e-12) -> float:
    """Largest stable dt: 0.5 L / (2 pi K_R max(|u|_inf, |B|_inf, eps))."""
    from .spectral import to_physical

    vmax = max(float(np.max(np.abs(to_physical(state.u)))),
               float(np.max(np.abs(to_physical(state.B)))), eps)
    return 0.5 * grid.L / (TWO_PI * max(grid.K_R, 1) * vmax)


def step(state: MHDState, config: SolverConfig) -> MHDState:
    """Advance one step of size config.dt."""
    _require_state(state)
    grid = state.u.grid
    herm = state.u.hermitian and state.B.hermitian
    integ = _Integrator(grid, config.nu, config.s, config.dt, herm)
    u, B, _ = integ.advance(state.u.coeffs, state.B.coeffs)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(B))):
        raise BlowUpError(f"non-finite coefficients after step at t = {state.t + config.dt}")
    return MHDState(state.t + config.dt, VectorField(grid, u, state.u.hermitian),
                    VectorField(grid, B, state.B.hermitian))


# ---------------------------------------------------------------- diagnostics and runs

@dataclass
class DiagnosticsRecord:
    t: float
    E: float
    diss: float
    cumdiss: float
    Hs_u: float
    Hs_B: float
    Y: float
    Hs_gradu: float
    cum_Hs_gradu: float
    B_envelope: float
    div_u: float
    div_B: float

    def row(self):
        return [getattr(self, c) for c in DIAG_COLUMNS]


def diagnose(state: MHDState, config: SolverConfig, cumdiss: float, cum_hs: float,
             B0_hs: float) -> DiagnosticsRecord:
    u, B, s = state.u, state.B, config.s
    Hs_u, Hs_B = sobolev_norm(u, s), sobolev_norm(B, s)
    return DiagnosticsRecord(
        t=state.t,
        E=0.5 * (sobolev_norm(u) ** 2 + sobolev_norm(B) ** 2),
        diss=config.nu * grad_sobolev_norm(u) ** 2,
        cumdiss=cumdiss,
        Hs_u=Hs_u,
        Hs_B=Hs_B,
        Y=Hs_u**2 + Hs_B**2,
        Hs_gradu=grad_sobolev_norm(u, s),
        cum_Hs_gradu=cum_hs,
        B_envelope=B0_hs * math.exp(cum_hs),
        div_u=divergence_residual(u),
        div_B=divergence_residual(B),
    )


@dataclass
class RunResult:
    config: SolverConfig
    records: list = field(default_factory=list)
    status: str = "completed"
    message: str = ""
    final_state: MHDState | None = None
    states: list = field(default_factory=list)
    support_violation: float = 0.0
    snapshots: list = field(default_factory=list)

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def energy_residual(self) -> float:
        """E(t) + int_0^t nu ||grad u||^2 - E(0) at the final record."""
        first, last = self.records[0], self.records[-1]
        return last.E + last.cumdiss - first.E

    def monitors(self, energy_tol: float = 1e-12) -> dict:
        recs = self.records
        E = np.array([r.E for r in recs])
        scale = max(E[0], 1e-300)
        return {
            "energy_monotone": bool(np.all(np.diff(E) <= energy_tol * scale)),
            "envelope_violations": int(sum(r.Hs_B > r.B_envelope * (1 + 1e-12) for r in recs)),
            "max_div": max(max(r.div_u, r.div_B) for r in recs),
            "support_violation": self.support_violation,
            "Y_max_over_Y0": max(r.Y for r in recs) / recs[0].Y if recs[0].Y > 0 else 0.0,
        }

    def implied_gronwall_constant(self) -> float:
        """Smallest C with Y(t) <= nu Y0 / (nu - C t Y0) along the recorded run."""
        r0 = self.records[0]
        best = 0.0
        for r in self.records[1:]:
            if r.t > 0 and r.Y > r0.Y and r0.Y > 0:
                best = max(best, self.config.nu * (1.0 - r0.Y / r.Y) / (r.t * r0.Y))
        return best

    def write_csv(self, path):
        write_rows(path, DIAG_COLUMNS, (r.row() for r in self.records))


def write_rows(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def run(config: SolverConfig, state: MHDState | None = None, keep_states: bool = False,
        snapshot_dir=None) -> RunResult:
    """Integrate the truncated MHD system from t = 0 to config.T.

    Blow-up (non-finite values or Y above blowup_factor * Y0) ends the run
    early with status 'blowup'; the records gathered so far are kept.
    """
    grid = config.grid
    if state is None:
        state = initial_state(config, grid)
    _require_state(state)
    if state.u.grid != grid:
        raise GridMismatchError("initial state does not live on the configured grid")
    dt_max = cfl_limit(state, grid)
    if config.dt > dt_max:
        raise ConfigError(f"dt = {config.dt} exceeds the CFL limit {dt_max:.3e}")

    herm = state.u.hermitian and state.B.hermitian
    integ = _Integrator(grid, config.nu, config.s, config.dt, herm)
    B0_hs = sobolev_norm(state.B, config.s)
    result = RunResult(config)
    cumdiss = cum_hs = 0.0
    rec = diagnose(state, config, cumdiss, cum_hs, B0_hs)
    result.records.append(rec)
    ceiling = config.blowup_factor * rec.Y if rec.Y > 0 else math.inf
    if keep_states:
        result.states.append(state)
    _maybe_snapshot(result, snapshot_dir, config, state, 0)

    u, B = state.u.coeffs, state.B.coeffs
    outside = ~grid.cutoff_mask
    for n in range(1, config.n_steps + 1):
        u, B, (dd, dh) = integ.advance(u, B)
        cumdiss += dd
        cum_hs += dh
        t = n * config.dt
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(B))):
            result.status = "blowup"
            result.message = f"non-finite coefficients at t = {t:.6g}"
            break
        snap = config.snapshot_every > 0 and n % config.snapshot_every == 0
        if snap and snapshot_dir is not None:
            _maybe_snapshot(result, snapshot_dir, config,
                            MHDState(t, VectorField(grid, u, herm), VectorField(grid, B, herm)), n)
        if n % config.diag_every == 0 or n == config.n_steps:
            state = MHDState(t, VectorField(grid, u, herm), VectorField(grid, B, herm))
            result.support_violation = max(result.support_violation,
                                           float(np.abs(u[:, outside]).max(initial=0.0)),
                                           float(np.abs(B[:, outside]).max(initial=0.0)))
            rec = diagnose(state, config, cumdiss, cum_hs, B0_hs)
            result.records.append(rec)
            if keep_states:
                result.states.append(state)
            if rec.Y > ceiling:
                result.status = "blowup"
                result.message = f"Y(t) = {rec.Y:.3e} exceeded ceiling {ceiling:.3e} at t = {t:.6g}"
                break
    result.final_state = MHDState(n * config.dt, VectorField(grid, u, herm), VectorField(grid, B, herm))
    return result


def _maybe_snapshot(result, snapshot_dir, config, state, n):
    if snapshot_dir is None or config.snapshot_every <= 0 or n % config.snapshot_every:
        return
    from .snapshot import write_snapshot

    path = Path(snapshot_dir) / f"snapshot_{n:08d}.specf"
    write_snapshot(path, [state.u, state.B])
    result.snapshots.append(str(path))


# ---------------------------------------------------------------- Cauchy experiment

@dataclass
class CauchyResult:
    K_list: list
    differences: list
    time_error: float | None = None

    @property
    def strictly_decreasing(self) -> bool:
        d = self.differences
        return all(b < a for a, b in zip(d, d[1:]))

    def rows(self):
        for (K, Kp), d in zip(zip(self.K_list, self.K_list[1:]), self.differences):
            yield K, Kp, d


def _sup_difference(states_a, states_b, grid):
    sup = 0.0
    for sa, sb in zip(states_a, states_b):
        if abs(sa.t - sb.t) > 1e-12:
            raise PreconditionError("runs were sampled at different times")
        du = embed(sa.u, grid) - embed(sb.u, grid)
        dB = embed(sa.B, grid) - embed(sb.B, grid)
        sup = max(sup, sobolev_norm(du) + sobolev_norm(dB))
    return sup


def cauchy_experiment(config: SolverConfig, K_list, control: bool = True) -> CauchyResult:
    """sup_t (||u^K - u^K'||_L2 + ||B^K - B^K'||_L2) for consecutive cutoffs.

    Initial data are generated once at the largest cutoff and truncated to each
    V_K; every run uses the same dt and output cadence.  With ``control`` the
    largest cutoff is rerun at dt/2 and the difference is reported as the pure
    time-integration error.
    """
    K_list = [int(K) for K in K_list]
    if len(K_list) < 2:
        raise PreconditionError("need at least two cutoffs")
    if any(b < a for a, b in zip(K_list, K_list[1:])):
        raise PreconditionError("cutoffs must be non-decreasing (nested spaces)")
    n = config.n_dim
    fine = SpectralGrid.for_cutoff(n, K_list[-1], config.L)
    base = initial_state(config.replace(N=fine.N, K_R=fine.K_R), fine)

    def run_at(K, cfg):
        grid = SpectralGrid.for_cutoff(n, K, config.L)
        st = MHDState(0.0, embed(fourier_truncate(base.u, K), grid),
                      embed(fourier_truncate(base.B, K), grid))
        res = run(cfg.replace(N=grid.N, K_R=K), st, keep_states=True)
        if not res.completed:
            raise BlowUpError(f"run at K = {K} terminated: {res.message}")
        return res.states

    trajectories = {K: run_at(K, config) for K in sorted(set(K_list))}
    diffs = [_sup_difference(trajectories[a], trajectories[b], fine)
             for a, b in zip(K_list, K_list[1:])]
    time_error = None
    if control:
        half = config.replace(dt=config.dt / 2, diag_every=2 * config.diag_every)
        time_error = _sup_difference(trajectories[K_list[-1]], run_at(K_list[-1], half), fine)
    return CauchyResult(K_list, diffs, time_error)
