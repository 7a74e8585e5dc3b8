import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from imlab.spectral import (
    MultiplierSpec,
    RadialGrid,
    SpectralField,
    apply_multiplier,
    dyadic_scales,
    field_from_function,
    forward_transform,
    inverse_transform,
    l2_norm,
    lebesgue_norm,
    lp_phi,
    lp_project,
    lp_psi,
    smoothing_symbol,
    sobolev_norm,
)

from conftest import direct_w

grids = st.builds(RadialGrid,
                  R=st.floats(0.5, 100.0),
                  M=st.sampled_from([8, 16, 32, 64, 128]))


def random_field(grid, seed, decay=1.0):
    rng = np.random.default_rng(seed)
    return SpectralField(grid, rng.standard_normal(grid.M) / np.arange(1, grid.M + 1) ** decay)


# -- grid --------------------------------------------------------------------

def test_grid_geometry():
    g = RadialGrid(10.0, 64)
    assert g.nodes[0] > 0 and g.nodes[-1] < g.R
    assert np.all(np.diff(g.nodes) > 0)
    assert np.all(np.diff(g.freqs) > 0)
    assert len(g.freqs) == 64
    assert g.freqs[0] == pytest.approx(math.pi / 10.0)


@pytest.mark.parametrize("M", [0, 7, 12, 100])
def test_grid_rejects_bad_mode_count(M):
    with pytest.raises(ValueError):
        RadialGrid(1.0, M)


@pytest.mark.parametrize("R", [0.0, -1.0, math.inf, math.nan])
def test_grid_rejects_bad_radius(R):
    with pytest.raises(ValueError):
        RadialGrid(R, 16)


def test_padded_grid_is_fine_enough_for_cubes():
    for M in [8, 64, 1024, 4096]:
        g = RadialGrid(1.0, M)
        assert g.intervals(2) > 2 * M
        assert g.padded_nodes(2).size == g.intervals(2) - 1


# -- transforms ----------------------------------------------------------------

def test_basis_function_transforms_to_unit_vector():
    g = RadialGrid(3.0, 32)
    f = forward_transform(g, np.sin(np.pi * g.nodes / g.R))
    expected = np.zeros(32)
    expected[0] = 1.0
    np.testing.assert_allclose(f.coeffs, expected, atol=1e-14)


def test_zero_samples_give_zero_coefficients():
    g = RadialGrid(1.0, 16)
    assert not np.any(forward_transform(g, np.zeros(16)).coeffs)


@given(grids, st.integers(0, 2 ** 32 - 1))
def test_round_trip(grid, seed):
    x = np.random.default_rng(seed).standard_normal(grid.M)
    back = inverse_transform(forward_transform(grid, x))
    np.testing.assert_allclose(back, x, rtol=0, atol=1e-12 * np.max(np.abs(x)))


@given(grids, st.integers(0, 2 ** 32 - 1))
def test_inverse_matches_direct_sum(grid, seed):
    f = random_field(grid, seed, decay=0.0)
    expected = direct_w(f.coeffs, grid.R, grid.nodes)
    np.testing.assert_allclose(inverse_transform(f), expected, atol=1e-12 * grid.M)


def test_refined_synthesis_matches_direct_sum():
    g = RadialGrid(7.0, 64)
    f = random_field(g, 3)
    for pad in (2, 3):
        r = g.padded_nodes(pad)
        np.testing.assert_allclose(f.w_values(pad), direct_w(f.coeffs, g.R, r), atol=1e-13)


def test_transform_rejects_non_finite():
    g = RadialGrid(1.0, 8)
    x = np.zeros(8)
    x[3] = np.nan
    with pytest.raises(ValueError, match="node index 3"):
        forward_transform(g, x)
    with pytest.raises(ValueError):
        forward_transform(g, np.zeros(9))


def test_field_rejects_wrong_length_and_nan():
    g = RadialGrid(1.0, 8)
    with pytest.raises(ValueError):
        SpectralField(g, np.zeros(4))
    with pytest.raises(ValueError):
        SpectralField(g, np.full(8, np.inf))


def test_field_is_immutable():
    g = RadialGrid(1.0, 8)
    f = SpectralField(g, np.ones(8))
    with pytest.raises(ValueError):
        f.coeffs[0] = 2.0


def test_origin_value_is_limit_of_w_over_r():
    g = RadialGrid(5.0, 32)
    f = random_field(g, 9, decay=3.0)
    r = 1e-6
    assert f.origin() == pytest.approx(direct_w(f.coeffs, g.R, [r])[0] / r, rel=1e-9)
    assert f.evaluate_u(np.array([0.0]))[0] == f.origin()


def test_field_from_function_gaussian():
    g = RadialGrid(20.0, 256)
    f = field_from_function(g, lambda r: np.exp(-r * r), pad=2)
    r = np.linspace(0.0, 6.0, 13)
    np.testing.assert_allclose(f.evaluate_u(r), np.exp(-r * r), atol=1e-12)


# -- multipliers -------------------------------------------------------------

def test_smoothing_symbol_reference_values():
    # m(N) = 1 and m(2N) = (1/2)^(1-s)
    assert smoothing_symbol(32.0, 32.0, 0.75) == pytest.approx(1.0, abs=1e-15)
    assert smoothing_symbol(64.0, 32.0, 0.75) == pytest.approx(0.840896, abs=1e-6)
    assert smoothing_symbol(64.0, 32.0, 0.75) == pytest.approx(2 ** -0.25, rel=1e-14)


@given(st.floats(0.51, 0.99), st.floats(1.0, 1e3))
def test_smoothing_symbol_shape(s, N):
    rho = np.geomspace(N / 16, N * 64, 2001)
    m = smoothing_symbol(rho, N, s)
    assert np.all(m[rho <= N] == 1.0)
    hi = rho >= 2 * N
    np.testing.assert_allclose(m[hi], (N / rho[hi]) ** (1 - s), rtol=1e-12)
    assert np.all(np.diff(m) <= 1e-15)
    assert np.all((m > 0) & (m <= 1))
    # continuity: no jumps on a fine log grid
    assert np.max(np.abs(np.diff(m))) < 0.01


def test_power_zero_is_identity():
    g = RadialGrid(2.0, 16)
    f = random_field(g, 1)
    out = apply_multiplier(f, MultiplierSpec.power(0.0))
    assert np.array_equal(out.coeffs, f.coeffs)


def test_power_one_single_mode():
    g = RadialGrid(3.0, 16)
    k = 5
    a = np.zeros(16)
    a[k - 1] = 1.0
    out = apply_multiplier(SpectralField(g, a), MultiplierSpec.power(1.0))
    assert out.coeffs[k - 1] == pytest.approx(k * math.pi / 3.0)
    # Hdot^1 norm of the mode from the analytic derivative: 4 pi int (w')^2 dr
    rho = k * math.pi / 3.0
    grad_sq = 4 * math.pi * integrate.quad(lambda r: (rho * math.cos(rho * r)) ** 2, 0, 3.0)[0]
    assert l2_norm(out) == pytest.approx(math.sqrt(grad_sq), rel=1e-12)


def test_negative_power_is_allowed():
    g = RadialGrid(1.0, 8)
    out = apply_multiplier(SpectralField(g, np.ones(8)), MultiplierSpec.power(-1.0))
    np.testing.assert_allclose(out.coeffs, 1.0 / g.freqs)


def test_custom_table_length_checked():
    g = RadialGrid(1.0, 8)
    f = SpectralField(g, np.ones(8))
    with pytest.raises(ValueError):
        apply_multiplier(f, MultiplierSpec.custom([1.0, 2.0]))
    out = apply_multiplier(f, MultiplierSpec.custom(np.arange(8.0)))
    np.testing.assert_array_equal(out.coeffs, np.arange(8.0))


@pytest.mark.parametrize("kw", [dict(kind="nope"), dict(kind="smoothing", s=0.4, N=2.0),
                                dict(kind="smoothing", s=0.75, N=0.0), dict(kind="lp_block", scale=-1.0),
                                dict(kind="custom")])
def test_multiplier_spec_validation(kw):
    with pytest.raises(ValueError):
        MultiplierSpec(**kw)


# -- Littlewood-Paley ---------------------------------------------------------

@given(st.floats(1e-3, 1e6))
def test_lp_partition_of_unity(x):
    js = range(math.floor(math.log2(x)) - 3, math.ceil(math.log2(x)) + 4)
    total = sum(float(lp_psi(x / 2.0 ** j)) for j in js)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_lp_phi_shape():
    assert lp_phi(1.0) == 1.0 and lp_phi(0.3) == 1.0
    assert lp_phi(2.0) == 0.0 and lp_phi(5.0) == 0.0
    x = np.linspace(0.01, 3, 500)
    assert np.all(np.diff(lp_phi(x)) <= 0)


@given(grids, st.integers(0, 2 ** 32 - 1))
def test_lp_synthesis_identity(grid, seed):
    f = random_field(grid, seed)
    total = np.zeros(grid.M)
    for M in dyadic_scales(grid):
        total += lp_project(f, M).coeffs
    assert l2_norm(SpectralField(grid, total - f.coeffs)) <= 1e-10 * l2_norm(f)


def test_lp_block_plateau_mode_unchanged():
    g = RadialGrid(math.pi, 64)  # rho_k = k
    a = np.zeros(64)
    a[15] = 1.0                  # rho = 16, the plateau point of the block at 16
    out = lp_project(SpectralField(g, a), 16.0)
    np.testing.assert_allclose(out.coeffs, a, atol=1e-15)


def test_lp_block_far_above_grid_is_zero():
    g = RadialGrid(1.0, 16)
    f = random_field(g, 2)
    assert not np.any(lp_project(f, 2.0 ** 20).coeffs)


def test_lp_project_needs_dyadic_scale():
    g = RadialGrid(1.0, 16)
    with pytest.raises(ValueError):
        lp_project(SpectralField.zeros(g), 3.0)


# -- norms ------------------------------------------------------------------

def test_zero_field_norms():
    g = RadialGrid(1.0, 16)
    z = SpectralField.zeros(g)
    for p in (1.5, 2, 4, math.inf):
        assert lebesgue_norm(z, p) == 0.0
    assert sobolev_norm(z, 0.5) == 0.0


def test_lebesgue_rejects_small_exponent():
    g = RadialGrid(1.0, 16)
    with pytest.raises(ValueError):
        lebesgue_norm(SpectralField.zeros(g), 1.0)


@given(grids, st.integers(0, 2 ** 32 - 1))
def test_l2_quadrature_matches_plancherel(grid, seed):
    f = random_field(grid, seed)
    assert lebesgue_norm(f, 2) == pytest.approx(l2_norm(f), rel=1e-8)


def test_l4_of_gaussian_against_adaptive_quadrature():
    g = RadialGrid(12.0, 256)
    f = field_from_function(g, lambda r: np.exp(-r * r) * (1 + 0.5 * r), pad=2)
    exact = (4 * math.pi * integrate.quad(lambda r: (math.exp(-r * r) * (1 + 0.5 * r)) ** 4 * r * r,
                                          0, 12.0, epsabs=1e-14, epsrel=1e-13, limit=200)[0]) ** 0.25
    assert lebesgue_norm(f, 4) == pytest.approx(exact, rel=1e-6)
    assert lebesgue_norm(f, 4, refine=3) == pytest.approx(exact, rel=1e-6)


def test_linf_includes_origin():
    g = RadialGrid(10.0, 128)
    f = field_from_function(g, lambda r: np.exp(-r * r), pad=2)
    assert lebesgue_norm(f, math.inf) == pytest.approx(1.0, abs=1e-12)


def test_sobolev_closed_forms():
    R = 4.0
    g = RadialGrid(R, 16)
    a = np.zeros(16)
    a[0] = 1.0
    f = SpectralField(g, a)
    assert sobolev_norm(f, 1.0) == pytest.approx(math.pi / R * math.sqrt(4 * math.pi * R / 2), rel=1e-14)
    assert sobolev_norm(f, 0.0) == l2_norm(f)
    inhom = math.sqrt(4 * math.pi * R / 2) * (1 + (math.pi / R) ** 0.5)
    assert sobolev_norm(f, 0.5, homogeneous=False) == pytest.approx(inhom, rel=1e-14)


@given(grids, st.integers(0, 2 ** 32 - 1), st.floats(-1, 1), st.floats(-1, 1))
def test_sobolev_composition(grid, seed, s, sigma):
    f = random_field(grid, seed, decay=2.0)
    lhs = sobolev_norm(apply_multiplier(f, MultiplierSpec.power(sigma)), s)
    assert lhs == pytest.approx(sobolev_norm(f, s + sigma), rel=1e-12)


@given(grids, st.integers(0, 2 ** 32 - 1), st.floats(0.01, 100.0))
def test_norms_are_homogeneous(grid, seed, c):
    f = random_field(grid, seed)
    assert lebesgue_norm(f * c, 3.0) == pytest.approx(c * lebesgue_norm(f, 3.0), rel=1e-12)
    assert sobolev_norm(f * c, 0.7) == pytest.approx(c * sobolev_norm(f, 0.7), rel=1e-12)
