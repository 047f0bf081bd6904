import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import advect_dict, dict_to_grid, exact_decay
from specmhd.config import SolverConfig
from specmhd.errors import BlowUpError, ConfigError, GridMismatchError, PreconditionError
from specmhd.mhd import (
    DIAG_COLUMNS,
    MHDState,
    cauchy_experiment,
    cfl_limit,
    initial_condition,
    initial_state,
    rhs,
    run,
    step,
)
from specmhd.spectral import (
    SpectralGrid,
    VectorField,
    divergence_residual,
    fourier_truncate,
    grad_sobolev_norm,
    inner_product,
    leray_project,
    sobolev_norm,
)

SMALL = dict(N=32, K_R=10, dt=2e-3, T=0.1, diag_every=5)


def small_config(**kw):
    return SolverConfig(**{**SMALL, **kw})


# ---------------------------------------------------------------- initial data

@pytest.mark.parametrize("kind", ["single_mode", "single_mode_B", "orthogonal_modes",
                                  "braided", "random_band"])
def test_initial_conditions_are_admissible(kind):
    grid = SpectralGrid(2, 1.0, 32, 10)
    u, B = initial_condition(kind, grid)
    for f in (u, B):
        assert divergence_residual(f) <= 1e-12
        assert f.in_band() and f.hermitian_defect() == 0.0


def test_single_mode_is_transverse_cosine():
    grid = SpectralGrid(2, 2.0, 16, 5)
    u, B = initial_condition("single_mode", grid, amplitude=0.3)
    assert not np.any(B.coeffs)
    expected = np.zeros_like(u.coeffs)
    expected[1, 1, 0] = expected[1, -1, 0] = 0.15
    np.testing.assert_array_equal(u.coeffs, expected)


def test_random_band_is_deterministic():
    grid = SpectralGrid(2, 1.0, 32, 10)
    a = initial_condition("random_band", grid, seed=3)
    b = initial_condition("random_band", grid, seed=3)
    c = initial_condition("random_band", grid, seed=4)
    assert all(np.array_equal(x.coeffs, y.coeffs) for x, y in zip(a, b))
    assert not np.array_equal(a[0].coeffs, c[0].coeffs)
    assert sobolev_norm(a[0]) == pytest.approx(0.1, rel=1e-12)


def test_unknown_initial_condition():
    with pytest.raises(PreconditionError):
        initial_condition("vortex", SpectralGrid(2, 1.0, 16, 5))


def test_initial_truncation_does_not_increase_l2():
    fine = SpectralGrid(2, 1.0, 98, 32)
    u, B = initial_condition("random_band", fine, gamma=1.0)
    for f in (u, B):
        assert sobolev_norm(fourier_truncate(f, 8)) <= sobolev_norm(f)


# ---------------------------------------------------------------- right-hand side

def test_static_single_mode_B():
    cfg = small_config(ic={"kind": "single_mode_B"})
    du, dB = rhs(initial_state(cfg), cfg)
    assert np.max(np.abs(du.coeffs)) < 1e-14 and np.max(np.abs(dB.coeffs)) < 1e-14


def test_pure_viscous_rhs():
    cfg = small_config(ic={"kind": "single_mode"})
    st0 = initial_state(cfg)
    du, dB = rhs(st0, cfg)
    expected = -4 * math.pi**2 * cfg.nu * st0.u.coeffs
    np.testing.assert_allclose(du.coeffs, expected, atol=1e-15)
    assert np.max(np.abs(dB.coeffs)) < 1e-15


@pytest.mark.parametrize("seed", range(3))
def test_rhs_matches_convolution_oracle(seed):
    grid = SpectralGrid(2, 1.0, 16, 5)
    u, B = initial_condition("random_band", grid, seed=seed)
    cfg = SolverConfig(N=16, K_R=5)
    du, dB = rhs(MHDState(0.0, u, B), cfg)
    pg = grid.product_grid()

    def window(c):
        idx = grid.modes % pg.N
        out = c[(slice(None),) + np.ix_(idx, idx)]
        return np.where(grid.cutoff_mask, out, 0)

    force = dict_to_grid(advect_dict(B, B), pg, 2) - dict_to_grid(advect_dict(u, u), pg, 2)
    nl_u = leray_project(VectorField(grid, window(force), True)).coeffs
    visc = -4 * math.pi**2 * cfg.nu * grid.xi2 * u.coeffs
    np.testing.assert_allclose(du.coeffs, nl_u + visc, atol=1e-13)
    ind = dict_to_grid(advect_dict(B, u), pg, 2) - dict_to_grid(advect_dict(u, B), pg, 2)
    np.testing.assert_allclose(dB.coeffs, window(ind), atol=1e-13)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=10, deadline=None)
def test_instantaneous_energy_equality(seed):
    cfg = small_config(ic={"kind": "random_band", "seed": seed})
    state = initial_state(cfg)
    du, dB = rhs(state, cfg)
    lhs = inner_product(du, state.u) + inner_product(dB, state.B)
    target = -cfg.nu * grad_sobolev_norm(state.u) ** 2
    assert lhs == pytest.approx(target, rel=1e-9)


def test_rhs_outputs_are_solenoidal_and_in_band():
    cfg = small_config()
    du, dB = rhs(initial_state(cfg), cfg)
    for f in (du, dB):
        assert f.in_band() and divergence_residual(f) <= 1e-10


def test_rhs_rejects_mixed_grids():
    cfg = small_config()
    u, _ = initial_condition("random_band", cfg.grid)
    _, B = initial_condition("random_band", SpectralGrid(2, 1.0, 34, 10))
    with pytest.raises(GridMismatchError):
        rhs(MHDState(0.0, u, B), cfg)


# ---------------------------------------------------------------- stepping

def test_single_step_exact_viscous_decay():
    cfg = small_config(ic={"kind": "single_mode"}, nu=0.05, dt=1e-2)
    st0 = initial_state(cfg)
    st1 = step(st0, cfg)
    factor = exact_decay(1, cfg.nu, cfg.dt)
    np.testing.assert_allclose(st1.u.coeffs, factor * st0.u.coeffs, rtol=1e-12, atol=1e-300)
    assert st1.t == cfg.dt and not np.any(st1.B.coeffs)


def test_zero_state_is_fixed():
    cfg = small_config()
    z = MHDState(0.0, VectorField.zeros(cfg.grid), VectorField.zeros(cfg.grid))
    s1 = step(z, cfg)
    assert not np.any(s1.u.coeffs) and not np.any(s1.B.coeffs)


def test_step_flags_non_finite():
    cfg = small_config()
    state = initial_state(cfg)
    state.u.coeffs[0, 1, 0] = np.nan
    with pytest.raises(BlowUpError):
        step(state, cfg)


def test_cfl_limit_and_rejection():
    cfg = small_config(ic={"kind": "single_mode", "amplitude": 1.0})
    st0 = initial_state(cfg)
    assert cfl_limit(st0, cfg.grid) == pytest.approx(0.5 / (2 * math.pi * 10 * 1.0))
    with pytest.raises(ConfigError, match="CFL"):
        run(cfg.replace(dt=1e-2, T=0.1))


# ---------------------------------------------------------------- runs

def test_static_run_is_constant():
    cfg = small_config(ic={"kind": "single_mode_B"}, T=1.0, dt=5e-3, diag_every=20)
    res = run(cfg)
    first = res.records[0]
    for r in res.records:
        assert r.E == pytest.approx(first.E, rel=1e-14)
        assert r.Hs_B == pytest.approx(first.Hs_B, rel=1e-14)
        assert r.diss == 0 and r.cumdiss == 0
    assert res.completed and len(res.records) == 11


def test_navier_stokes_energy_decays():
    cfg = small_config(ic={"kind": "random_band", "amplitude": 0.5}, T=0.2)
    u0, _ = initial_condition("random_band", cfg.grid, amplitude=0.5)
    res = run(cfg, MHDState(0.0, u0, VectorField.zeros(cfg.grid)))
    E = [r.E for r in res.records]
    assert all(b < a for a, b in zip(E, E[1:]))
    assert res.monitors()["energy_monotone"]


def test_run_monitors_and_energy_balance():
    cfg = small_config(T=0.2)
    res = run(cfg)
    mon = res.monitors()
    assert res.completed
    assert mon["support_violation"] == 0.0
    assert mon["max_div"] <= 1e-10
    assert mon["envelope_violations"] == 0
    assert mon["energy_monotone"]
    assert abs(res.energy_residual()) <= 1e-9 * res.records[0].E
    assert res.implied_gronwall_constant() >= 0.0
    assert all(math.isfinite(v) for r in res.records for v in r.row())


def test_energy_residual_is_fourth_order():
    res = [abs(run(small_config(ic={"kind": "random_band", "amplitude": 0.5}, T=0.2, dt=dt))
               .energy_residual()) for dt in (4e-3, 2e-3)]
    assert math.log2(res[0] / res[1]) > 3.5


def test_blowup_ceiling_terminates_cleanly():
    cfg = small_config(ic={"kind": "orthogonal_modes", "amplitude": 0.3}, nu=1e-3,
                       blowup_factor=1.0001, dt=5e-3, T=0.5, diag_every=1)
    res = run(cfg)
    assert res.status == "blowup" and not res.completed
    assert "ceiling" in res.message
    assert res.records[-1].Y > cfg.blowup_factor * res.records[0].Y


def test_run_is_deterministic(tmp_path):
    cfg = small_config()
    run(cfg).write_csv(tmp_path / "a.csv")
    run(cfg).write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    header = next(csv.reader(open(tmp_path / "a.csv")))
    assert tuple(header) == DIAG_COLUMNS


def test_snapshots_follow_cadence(tmp_path):
    cfg = small_config(snapshot_every=3, T=0.02, dt=2e-3)
    res = run(cfg, snapshot_dir=tmp_path)
    names = sorted(p.name for p in tmp_path.glob("*.specf"))
    assert names == [f"snapshot_{n:08d}.specf" for n in (0, 3, 6, 9)]
    assert len(res.snapshots) == 4


def test_three_dimensional_run():
    cfg = SolverConfig(n_dim=3, N=16, K_R=5, s=2.0, dt=5e-3, T=0.05, diag_every=5)
    res = run(cfg)
    mon = res.monitors()
    assert res.completed and mon["max_div"] <= 1e-10 and mon["support_violation"] == 0
    assert abs(res.energy_residual()) <= 1e-9 * res.records[0].E


# ---------------------------------------------------------------- Cauchy experiment

def test_cauchy_identical_cutoffs_give_zero():
    cfg = SolverConfig(N=26, K_R=8, dt=2e-3, T=0.02, diag_every=5)
    res = cauchy_experiment(cfg, [8, 8, 8], control=False)
    assert res.differences == [0.0, 0.0]
    assert not res.strictly_decreasing


def test_cauchy_control_is_small():
    cfg = SolverConfig(N=26, K_R=8, dt=2e-3, T=0.02, diag_every=5)
    res = cauchy_experiment(cfg, [4, 8], control=True)
    assert 0 < res.time_error < 1e-8
    assert res.differences[0] > 100 * res.time_error


def test_cauchy_rejects_non_nested():
    cfg = SolverConfig(N=26, K_R=8, dt=2e-3, T=0.02)
    with pytest.raises(PreconditionError):
        cauchy_experiment(cfg, [8, 4])
    with pytest.raises(PreconditionError):
        cauchy_experiment(cfg, [8])


# ---------------------------------------------------------------- config

def test_config_validation():
    with pytest.raises(ConfigError, match="s > n/2"):
        SolverConfig(s=1.0)
    with pytest.raises(ConfigError):
        SolverConfig(nu=0.0)
    with pytest.raises(ConfigError):
        SolverConfig(T=0.0105, dt=1e-3)
    with pytest.raises(ConfigError):
        SolverConfig.from_dict({"viscosity": 0.1})
    with pytest.raises(ConfigError):
        SolverConfig(N=64, K_R=42)
    cfg = SolverConfig()
    assert SolverConfig.from_dict(cfg.to_dict()) == cfg
