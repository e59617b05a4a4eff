import math

import numpy as np
import pytest

from grid import Grid, inner
from soliton import (
    SolitonFamily,
    biorthogonality_matrix,
    check_generalized_kernel,
    cumulative_primitive,
    dc_mass,
    dc_primitive_values,
    dc_profile,
    kernel_basis,
    ode_residual,
    profile,
    profile_values,
)

PAIRS = [(p, c) for p in (2, 3) for c in (0.5, 1.0, 2.0)]


def default_grid(p):
    return Grid(2048 if p == 2 else 4096, 200.0)


class TestFamily:
    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            SolitonFamily(4, 1.0)
        with pytest.raises(ValueError):
            SolitonFamily(2, 0.0)

    def test_constants(self):
        fam = SolitonFamily(2, 1.0)
        assert fam.alpha == pytest.approx(0.5, abs=1e-14)
        assert fam.beta == pytest.approx(0.5, abs=1e-14)
        fam = SolitonFamily(3, 1.0)
        assert fam.alpha == pytest.approx(math.sqrt(2 / 3), abs=1e-14)
        assert fam.beta == pytest.approx(1.0, abs=1e-14)


class TestProfile:
    def test_peak_values(self, small_grid):
        assert profile(SolitonFamily(2, 1.0), small_grid).values.max() == pytest.approx(0.5, abs=1e-14)
        assert profile(SolitonFamily(3, 1.0), small_grid).values.max() == pytest.approx(0.8164966, abs=1e-7)

    @pytest.mark.parametrize("p,c", PAIRS)
    def test_decay(self, p, c):
        fam = SolitonFamily(p, c)
        assert profile_values(fam, np.array([30 / math.sqrt(c), -30 / math.sqrt(c)])).max() < 1e-10

    def test_even_and_positive(self, small_grid, fam2):
        phi = profile(fam2, small_grid, center=0.0).values
        assert np.all(phi > 0)
        # node 0 is -L/2; the remaining nodes pair up symmetrically around 0
        assert np.allclose(phi[1:], phi[1:][::-1], atol=1e-15)

    @pytest.mark.parametrize("p,c", PAIRS)
    def test_ode_residual(self, p, c, small_grid):
        assert ode_residual(SolitonFamily(p, c), small_grid) < 1e-9

    def test_ode_residual_detects_wrong_speed(self, small_grid, fam2):
        assert ode_residual(fam2, small_grid, c_test=2.0) >= 0.4

    @pytest.mark.parametrize("p,c", PAIRS)
    def test_scaling_identity(self, p, c, small_grid):
        fam = SolitonFamily(p, c)
        y = small_grid.nodes
        scaled = c ** (1 / (p - 1)) * profile_values(fam.with_speed(1.0), math.sqrt(c) * y)
        assert np.max(np.abs(profile_values(fam, y) - scaled)) < 1e-10

    @pytest.mark.parametrize("p,expected", [(2, 0.5), (3, 1 / 3)])
    def test_dc_profile_pairing(self, p, expected):
        grid = default_grid(p)
        fam = SolitonFamily(p, 1.0)
        assert inner(profile(fam, grid), dc_profile(fam, grid)) == pytest.approx(expected, rel=1e-10)

    @pytest.mark.parametrize("p", [2, 3])
    def test_dc_profile_matches_difference_quotient(self, p, small_grid):
        fam, eps = SolitonFamily(p, 1.3), 1e-4
        fd = (profile(fam.with_speed(1.3 + eps), small_grid) - profile(fam.with_speed(1.3 - eps), small_grid)) / (2 * eps)
        assert np.max(np.abs(fd.values - dc_profile(fam, small_grid).values)) < 1e-6

    @pytest.mark.parametrize("p", [2, 3])
    def test_mass_increases_with_speed(self, p, small_grid):
        fam = SolitonFamily(p, 1.0)
        lo = inner(profile(fam.with_speed(0.99), small_grid), profile(fam.with_speed(0.99), small_grid))
        hi = inner(profile(fam.with_speed(1.01), small_grid), profile(fam.with_speed(1.01), small_grid))
        assert hi > lo

    @pytest.mark.parametrize("p,expected", [(2, 1.0), (3, 0.0)])
    def test_dc_mass(self, p, expected):
        assert dc_mass(SolitonFamily(p, 1.0)) == pytest.approx(expected, abs=1e-14)


class TestKernelBasis:
    def test_theta_p2(self, grid, fam2):
        basis = kernel_basis(fam2, grid)
        assert basis.theta1 == pytest.approx(2.0, abs=1e-8)
        assert basis.theta2 == pytest.approx(2.0, abs=1e-7)

    def test_theta_p3(self, fam3):
        basis = kernel_basis(fam3, default_grid(3))
        assert basis.theta1 == pytest.approx(3.0, abs=1e-8)
        assert abs(basis.theta2) < 1e-12

    @pytest.mark.parametrize("p,c", PAIRS)
    def test_biorthogonality(self, p, c):
        basis = kernel_basis(SolitonFamily(p, c), default_grid(p))
        assert np.max(np.abs(biorthogonality_matrix(basis) - np.eye(2))) < 1e-8

    def test_zeta2_is_scaled_profile(self, grid, fam2):
        basis = kernel_basis(fam2, grid)
        assert np.max(np.abs(basis.zeta2.values - basis.theta1 * basis.phi.values)) < 1e-12

    @pytest.mark.parametrize("p", [2, 3])
    def test_generalized_kernel_relations(self, p):
        fam = SolitonFamily(p, 1.0)
        residuals = check_generalized_kernel(fam, kernel_basis(fam, default_grid(p)))
        assert residuals["L_xi1"] < 1e-8
        assert residuals["L_xi2_minus_xi1"] < 1e-8
        assert residuals["Lstar_zeta2"] < 1e-8
        assert residuals["Lstar_zeta1_minus_zeta2"] < 1e-6

    def test_primitive_matches_closed_form(self, grid):
        fam = SolitonFamily(2, 1.0)
        numeric = cumulative_primitive(dc_profile(fam, grid), 0.0, width=1.0)
        inside = np.abs(grid.nodes) <= 50.0
        exact = dc_primitive_values(fam, grid.nodes)
        assert np.max(np.abs(numeric.values[inside] - exact[inside])) < 1e-10

    def test_off_center_basis(self, grid, fam2):
        basis = kernel_basis(fam2, grid, center=-50.0)
        assert np.max(np.abs(biorthogonality_matrix(basis) - np.eye(2))) < 1e-8
        assert basis.phi.values[np.argmin(np.abs(grid.nodes + 50.0))] == pytest.approx(0.5, abs=1e-14)
