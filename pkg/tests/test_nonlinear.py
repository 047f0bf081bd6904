import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import (
    advect_dict,
    bessel_multiplier,
    commutator_dict,
    dict_to_grid,
    lambda_multiplier,
    sparse_field,
)
from specmhd.errors import DealiasingError, DegenerateProbeError, PreconditionError
from specmhd.nonlinear import (
    EstimateProbeReport,
    advect,
    advection_bound_probe,
    commutator_bessel,
    commutator_lambda,
    commutator_partial,
    commutator_ratio,
    corollary_ratio,
    gradient_estimate_bound,
    gradient_estimate_check,
    kato_ponce_ratio,
    probe_sweep,
    sample_seeds,
    skew_residual,
)
from specmhd.spectral import (
    SpectralGrid,
    VectorField,
    embed,
    gradient,
    partial,
    random_scalar,
    random_solenoidal,
    sobolev_norm,
)

seeds = st.integers(0, 2**32 - 1)


def constant_field(grid, c):
    v = VectorField.zeros(grid)
    v.coeffs[(slice(None),) + (0,) * grid.n_dim] = c
    return v


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


# ---------------------------------------------------------------- advection

def test_constant_advection_is_a_multiplier():
    grid = SpectralGrid(2, 2.0, 8, 2)
    u = constant_field(grid, [0.3, -0.7])
    B = VectorField.zeros(grid)
    B.coeffs[:, 1, 1] = [0.5, 0.25j]
    B.coeffs[:, -1, -1] = [0.5, -0.25j]
    out = advect(u, B)
    factor = 2j * math.pi * (0.3 * 1 - 0.7 * 1) / 2.0
    np.testing.assert_allclose(out.coeffs[:, 1, 1], factor * B.coeffs[:, 1, 1], rtol=1e-13)
    out.coeffs[:, 1, 1] = out.coeffs[:, -1, -1] = 0
    assert np.max(np.abs(out.coeffs)) < 1e-15


def test_constant_B_gives_zero():
    grid = SpectralGrid(2, 1.0, 8, 2)
    u = random_solenoidal(grid, np.random.default_rng(0))
    assert np.max(np.abs(advect(u, constant_field(grid, [1.0, 2.0])).coeffs)) < 1e-14


@pytest.mark.parametrize("seed", range(6))
def test_advect_matches_convolution_on_4x4(seed):
    grid = SpectralGrid(2, 1.0, 4, 1)
    rng = np.random.default_rng(seed)
    u = sparse_field(grid, rng, 2, hermitian=False)
    B = sparse_field(grid, rng, 2, hermitian=False)
    pg = grid.product_grid()
    expected = dict_to_grid(advect_dict(u, B), pg, 2)
    assert rel_err(advect(u, B, pg).coeffs, expected) < 1e-12


@given(seeds, st.sampled_from([1.0, 0.7]))
@settings(max_examples=15, deadline=None)
def test_advect_matches_convolution_random(seed, L):
    grid = SpectralGrid(2, L, 12, 3)
    rng = np.random.default_rng(seed)
    u = sparse_field(grid, rng, 8)
    B = sparse_field(grid, rng, 8)
    pg = grid.product_grid()
    expected = dict_to_grid(advect_dict(u, B), pg, 2)
    assert rel_err(advect(u, B, pg).coeffs, expected) < 1e-12


def test_advect_on_native_grid_is_exact_inside_cutoff():
    # aliased products only land at |k| >= N - 2 K_R > K_R
    grid = SpectralGrid(2, 1.0, 16, 5)
    rng = np.random.default_rng(3)
    u, B = random_solenoidal(grid, rng), random_solenoidal(grid, rng)
    full = advect(u, B, grid.product_grid())
    native = advect(u, B)
    idx = grid.modes % full.grid.N
    window = full.coeffs[(slice(None),) + np.ix_(idx, idx)]
    ball = grid.ball(grid.K_R)
    np.testing.assert_allclose(native.coeffs[:, ball], window[:, ball],
                               atol=1e-14 * np.abs(full.coeffs).max())


def test_advect_rejects_out_of_band():
    grid = SpectralGrid(2, 1.0, 16, 4)
    u = VectorField.zeros(grid)
    u.coeffs[0, 6, 0] = 1.0
    with pytest.raises(DealiasingError):
        advect(u, u)


@given(seeds)
@settings(max_examples=15, deadline=None)
def test_skew_symmetry(seed):
    grid = SpectralGrid(2, 1.0, 16, 5)
    rng = np.random.default_rng(seed)
    u = random_solenoidal(grid, rng)
    w = VectorField.from_components([random_scalar(grid, rng) for _ in range(2)])
    assert skew_residual(u, w) <= 1e-10


def test_three_dimensional_advection_matches_oracle():
    grid = SpectralGrid(3, 1.0, 8, 2)
    rng = np.random.default_rng(11)
    u = sparse_field(grid, rng, 4, solenoidal=True)
    B = sparse_field(grid, rng, 4)
    pg = grid.product_grid()
    expected = dict_to_grid(advect_dict(u, B), pg, 3)
    assert rel_err(advect(u, B, pg).coeffs, expected) < 1e-12


# ---------------------------------------------------------------- commutators

def test_commutator_at_s_zero_is_zero():
    grid = SpectralGrid(2, 1.0, 16, 5)
    rng = np.random.default_rng(1)
    u, B = random_solenoidal(grid, rng), random_solenoidal(grid, rng)
    assert not np.any(commutator_lambda(u, B, 0.0).coeffs)
    with pytest.raises(PreconditionError):
        commutator_lambda(u, B, -0.5)


def test_commutator_vanishes_for_constant_u():
    grid = SpectralGrid(2, 1.0, 16, 5)
    B = random_solenoidal(grid, np.random.default_rng(2))
    u = constant_field(grid, [1.0, -0.5])
    c = commutator_lambda(u, B, 1.5)
    assert np.max(np.abs(c.coeffs)) < 1e-12 * np.max(np.abs(B.coeffs))
    assert commutator_ratio(u, B, 1.5) == 0.0
    assert kato_ponce_ratio(u, B, 1.5) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("s", [1.1, 1.5, 2.0])
@pytest.mark.parametrize("seed", range(4))
def test_commutator_lambda_matches_oracle_on_8x8(s, seed):
    grid = SpectralGrid(2, 1.0, 8, 2)
    rng = np.random.default_rng(seed)
    u = random_solenoidal(grid, rng)
    B = random_solenoidal(grid, rng)
    got = commutator_lambda(u, B, s)
    expected = dict_to_grid(commutator_dict(u, B, lambda_multiplier(s, 1.0)), got.grid, 2)
    assert rel_err(got.coeffs, expected) < 1e-10


def test_commutator_bessel_matches_oracle():
    grid = SpectralGrid(2, 2.0, 12, 3)
    rng = np.random.default_rng(5)
    u, B = sparse_field(grid, rng, 10), sparse_field(grid, rng, 10)
    got = commutator_bessel(u, B, 1.7)
    expected = dict_to_grid(commutator_dict(u, B, bessel_multiplier(1.7, 2.0)), got.grid, 2)
    assert rel_err(got.coeffs, expected) < 1e-10


@given(seeds)
@settings(max_examples=10, deadline=None)
def test_partial_commutator_is_product_rule(seed):
    grid = SpectralGrid(2, 1.0, 16, 5)
    rng = np.random.default_rng(seed)
    u, B = random_solenoidal(grid, rng), random_solenoidal(grid, rng)
    for k in (0, 1):
        du = VectorField(grid, np.stack([partial(c, k).coeffs for c in u.components]), True)
        expected = advect(du, B, grid.product_grid())
        got = commutator_partial(u, B, k)
        assert rel_err(got.coeffs, expected.coeffs) < 1e-12


def test_lambda_one_is_not_the_derivative():
    # |xi| carries no 2 pi, and it is not d_k either
    grid = SpectralGrid(2, 1.0, 16, 5)
    rng = np.random.default_rng(9)
    u, B = random_solenoidal(grid, rng), random_solenoidal(grid, rng)
    lam = sobolev_norm(commutator_lambda(u, B, 1.0))
    d = math.hypot(sobolev_norm(commutator_partial(u, B, 0)), sobolev_norm(commutator_partial(u, B, 1)))
    assert lam < d


def test_commutator_ratio_shared_single_mode():
    grid = SpectralGrid(2, 1.0, 8, 2)
    u = VectorField.zeros(grid)
    u.coeffs[:, 1, 0] = [0.0, 1.0]
    u.coeffs[:, -1, 0] = [0.0, 1.0]
    got = commutator_ratio(u, u, 1.5)
    c = dict_to_grid(commutator_dict(u, u, lambda_multiplier(1.5, 1.0)), grid.product_grid(), 2)
    num = math.sqrt(np.sum(np.abs(c) ** 2))
    den = math.sqrt(4 * math.pi**2 * 2 * 2**1.5) * math.sqrt(2 * 2**1.5)
    assert got == pytest.approx(num / den, rel=1e-12)


def test_commutator_ratio_degenerate_B():
    grid = SpectralGrid(2, 1.0, 8, 2)
    u = random_solenoidal(grid, np.random.default_rng(0))
    with pytest.raises(DegenerateProbeError):
        commutator_ratio(u, VectorField.zeros(grid), 1.5)


# ---------------------------------------------------------------- probes

def test_corollary_ratio_requires_solenoidal_u():
    grid = SpectralGrid(2, 1.0, 16, 5)
    rng = np.random.default_rng(4)
    g = gradient(random_scalar(grid, rng))
    B = random_solenoidal(grid, rng)
    with pytest.raises(PreconditionError):
        corollary_ratio(g, B, 1.5)
    with pytest.raises(PreconditionError):
        advection_bound_probe(g, B, 1.5)


def test_advection_probe_constant_w():
    grid = SpectralGrid(2, 1.0, 16, 5)
    v = random_solenoidal(grid, np.random.default_rng(1))
    assert advection_bound_probe(v, constant_field(grid, [1.0, 1.0]), 2.0) == pytest.approx(0, abs=1e-14)


def test_advection_probe_single_modes_match_hand_value():
    grid = SpectralGrid(2, 1.0, 8, 2)
    v = VectorField.zeros(grid)
    v.coeffs[:, 1, 0] = [0.0, 0.5]
    v.coeffs[:, -1, 0] = [0.0, 0.5]
    w = VectorField.zeros(grid)
    w.coeffs[:, 0, 1] = [1.0, 0.0]
    w.coeffs[:, 0, -1] = [1.0, 0.0]
    # (v.grad)w = cos(2 pi x) * d_2 [2 cos(2 pi y)] e1 = -4 pi cos(2 pi x) sin(2 pi y) e1
    # modes (+-1, +-1) each of magnitude pi, weight (1 + 2)^(s-1)
    num = math.sqrt(4 * math.pi**2 * 3.0)
    den = math.sqrt(2 * 0.25 * 4) * math.sqrt(2 * 1 * 4)
    assert advection_bound_probe(v, w, 2.0) == pytest.approx(num / den, rel=1e-12)


def test_advection_probe_resolution_stable():
    grid = SpectralGrid(2, 1.0, 16, 5)
    rng = np.random.default_rng(2)
    v, w = random_solenoidal(grid, rng, 3.0), random_solenoidal(grid, rng, 3.0)
    fine = SpectralGrid(2, 1.0, 32, 5)
    a = advection_bound_probe(v, w, 1.5)
    b = advection_bound_probe(embed(v, fine), embed(w, fine), 1.5)
    assert abs(a - b) <= 0.2 * a


def test_gradient_estimate_examples():
    r = gradient_estimate_check([1.0, 0.0], [0.4, 0.0], 2.0)
    assert r == pytest.approx(0.64 / 0.24)
    assert r <= gradient_estimate_bound(2.0) == 6.0
    assert gradient_estimate_check([1.0, 0.0], [0.0, 0.0], 2.5) == 0.0
    with pytest.raises(PreconditionError):
        gradient_estimate_check([1.0, 0.0], [0.5, 0.0], 2.0)
    with pytest.raises(PreconditionError):
        gradient_estimate_check([1.0, 0.0], [0.1, 0.0], 1.0)


def test_gradient_estimate_small_zeta_limit():
    xi = np.array([1.3, -0.4])
    omega = np.array([0.6, 0.8])
    s = 2.7
    r = gradient_estimate_check(xi, 1e-7 * omega, s)
    nx = np.linalg.norm(xi)
    limit = s * nx ** (s - 2) * abs(xi @ omega) / nx ** (s - 1)
    assert r == pytest.approx(limit, rel=1e-5)
    assert limit <= s
    # roundoff-sized zeta must not cancel catastrophically
    tiny = gradient_estimate_check([0.5, 0.0], [5e-16, 0.0], 1.0625)
    assert tiny == pytest.approx(1.0625, rel=1e-9)


@given(st.floats(1.0001, 4.0), st.floats(0.0, 0.4999), st.floats(0, 2 * math.pi),
       st.floats(0, 2 * math.pi), st.floats(1e-3, 1e3))
@settings(max_examples=300, deadline=None)
def test_gradient_estimate_bound_property(s, frac, a, b, r):
    xi = r * np.array([math.cos(a), math.sin(a)])
    zeta = frac * r * np.array([math.cos(b), math.sin(b)])
    assert gradient_estimate_check(xi, zeta, s) <= gradient_estimate_bound(s)


def test_seeds_are_order_independent():
    assert sample_seeds(7, 5)[:3] == sample_seeds(7, 3)
    assert sample_seeds(7, 3) != sample_seeds(8, 3)


@pytest.mark.parametrize("kind", ["commutator", "kato_ponce", "corollary"])
def test_probe_sweep_reproducible(kind, tmp_path):
    a = probe_sweep(kind, samples=12, seed=7)
    b = probe_sweep(kind, samples=12, seed=7)
    assert a.ratios == b.ratios and a.max_ratio == b.max_ratio
    assert all(r >= 0 and math.isfinite(r) for r in a.ratios)
    assert a.max_ratio >= max(a.ratios) and a.max_ratio == max(a.ratios)
    path = tmp_path / "probe.csv"
    a.to_csv(path)
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == ["sample_id", "seed", "s", "n", "K_R", "ratio"]
    assert [float(r["ratio"]) for r in rows] == a.ratios


def test_empty_report():
    r = EstimateProbeReport("commutator", 1.5, 2, 8, 7)
    assert r.samples == 0 and r.max_ratio == 0.0
