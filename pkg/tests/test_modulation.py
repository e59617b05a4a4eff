import numpy as np
import pytest

from errors import FitError
from evolve import EvolveConfig, evolve
from grid import Field, Grid, translate
from modulation import (
    ModulationTrack,
    basis_at,
    fit,
    forcing,
    gamma_step,
    m_quantities,
    modulation_rhs,
    nonlinear_terms,
    refined_speed,
    split,
    track_run,
    write_m_report,
)
from soliton import SolitonFamily, profile


class TestFit:
    def test_recovers_position_and_speed(self, grid):
        w = profile(SolitonFamily(2, 1.1), grid, 3.7)
        result = fit(w, (3.75, 1.08), p=2)
        assert abs(result.x - 3.7) < 1e-9
        assert abs(result.c - 1.1) < 1e-9
        assert result.v2.sup() < 1e-8

    def test_equivariant_under_translation(self, grid):
        w = profile(SolitonFamily(2, 1.1), grid, 3.7)
        first = fit(w, (3.75, 1.08), p=2)
        moved = fit(translate(w, -5.3), (9.05, 1.08), p=2)
        assert abs(moved.x - first.x - 5.3) < 1e-9
        assert abs(moved.c - first.c) < 1e-9

    def test_cubic_fit(self, grid):
        w = profile(SolitonFamily(3, 0.9), grid, -2.0)
        result = fit(w, (-1.95, 0.92), p=3)
        assert abs(result.x + 2.0) < 1e-9
        assert abs(result.c - 0.9) < 1e-9

    def test_orthogonality_after_perturbation(self, grid, gaussian):
        w = profile(SolitonFamily(2, 1.0), grid, 1.0) + gaussian(grid, amplitude=1e-2, width=2.0, center=3.0)
        result = fit(w, (1.0, 1.0), p=2)
        assert max(abs(g) for g in result.orthogonality(2)) < 1e-10

    def test_nonpositive_guess(self, grid):
        with pytest.raises(FitError):
            fit(profile(SolitonFamily(2, 1.0), grid), (0.0, -1.0))

    def test_nonconvergence_reports_time(self, grid):
        with pytest.raises(FitError) as info:
            fit(Field.zeros(grid), (0.0, 1.0), max_iter=2, time=4.5)
        assert info.value.time == 4.5


class TestSplitting:
    def test_split_identity(self, grid, gaussian):
        fam = SolitonFamily(2, 1.0)
        bump = gaussian(grid, amplitude=1e-2, width=1.5, center=-4.0)
        u = profile(fam, grid, 2.5) + bump
        v, v1, v2 = split(u, bump, 2.5, fam)
        assert np.max(np.abs((v - v1 - v2).values)) == 0.0
        assert v2.sup() < 1e-12

    def test_quadratic_terms(self, grid, gaussian):
        fam = SolitonFamily(2, 1.0)
        phi = profile(fam, grid)
        v1 = gaussian(grid, amplitude=0.1, width=1.0, center=2.0)
        v2 = gaussian(grid, amplitude=0.05, width=2.0, center=-1.0)
        terms = nonlinear_terms(fam, v1, v2)
        assert np.allclose(terms["N1"].values, (6.0 * phi * v1).values, atol=1e-14)
        assert np.allclose(terms["N2"].values, (3.0 * v2 * (2.0 * v1 + v2)).values, atol=1e-14)
        assert "N11" not in terms

    def test_cubic_term_split(self, grid, gaussian):
        fam = SolitonFamily(3, 1.0)
        v1 = gaussian(grid, amplitude=0.1, width=1.0, center=2.0)
        v2 = gaussian(grid, amplitude=0.05, width=2.0, center=-1.0)
        terms = nonlinear_terms(fam, v1, v2)
        assert np.allclose((terms["N11"] + terms["N12"]).values, terms["N1"].values, atol=1e-13)
        assert np.allclose((terms["N21"] + terms["N22"]).values, terms["N2"].values, atol=1e-13)


class TestModulationSystem:
    def test_unperturbed_soliton_does_not_modulate(self, grid):
        fam = SolitonFamily(2, 1.0)
        basis = basis_at(2, 1.0, grid)
        zero = Field.zeros(grid)
        assert modulation_rhs(fam, basis, zero, zero) == (0.0, 0.0)

    def test_refined_speed_without_radiation(self, grid):
        assert refined_speed(SolitonFamily(2, 1.0), 1.2, Field.zeros(grid)) == 1.2

    def test_refined_speed_shifts_with_mass_along_profile(self, grid):
        fam = SolitonFamily(2, 1.0)
        v1 = 1e-3 * profile(fam, grid)
        assert refined_speed(fam, 1.0, v1) > 1.0

    def test_gamma_needs_cubic(self, grid):
        zero = Field.zeros(grid)
        with pytest.raises(ValueError):
            gamma_step(SolitonFamily(2, 1.0), basis_at(2, 1.0, grid), zero, zero, 1.0)

    def test_gamma_speed_without_perturbation(self, grid):
        zero = Field.zeros(grid)
        assert gamma_step(SolitonFamily(3, 1.0), basis_at(3, 1.0, grid), zero, zero, 1.0) == pytest.approx(1.0)

    def test_zero_forcing(self, grid):
        assert forcing(SolitonFamily(2, 1.0), grid, 0.0, 0.0).sup() == 0.0

    def test_refined_speed_value(self, grid):
        # theta1 = 2 and <phi, phi> = 2/3 for p = 2, c = 1
        fam = SolitonFamily(2, 1.0)
        eps = 1e-3
        assert refined_speed(fam, 1.0, eps * profile(fam, grid)) == pytest.approx(1.0 + 4.0 * eps / 3.0, abs=1e-9)

    @pytest.mark.parametrize("p", [2, 3])
    def test_rates_without_v2(self, small_grid, gaussian, p):
        fam = SolitonFamily(p, 1.0)
        basis = basis_at(p, 1.0, small_grid)
        v1 = gaussian(small_grid, amplitude=1e-2, width=1.5, center=2.0)
        zero = Field.zeros(small_grid)
        n1 = nonlinear_terms(fam, v1, zero, basis.phi)["N1"]
        xdot_minus_c, cdot = modulation_rhs(fam, basis, v1, zero)
        assert xdot_minus_c == pytest.approx(-basis.pair(n1, basis.dzeta1), rel=1e-10, abs=1e-15)
        assert cdot == pytest.approx(basis.pair(n1, basis.dzeta2), rel=1e-10, abs=1e-15)

    def test_gamma_differs_from_x_at_third_order(self, small_grid, gaussian):
        # gamma' - x' comes from N22 alone, which is cubic in the perturbation
        fam = SolitonFamily(3, 1.0)
        basis = basis_at(3, 1.0, small_grid)
        gaps = []
        for eps in (2e-2, 1e-2):
            v1 = gaussian(small_grid, amplitude=eps, width=1.0, center=2.0)
            v2 = gaussian(small_grid, amplitude=eps, width=2.0, center=-1.0)
            xdot_minus_c, _ = modulation_rhs(fam, basis, v1, v2)
            gaps.append(gamma_step(fam, basis, v1, v2, 1.0) - (1.0 + xdot_minus_c))
        assert 7.0 < gaps[0] / gaps[1] < 9.0


class TestTracking:
    def test_traveling_soliton_track(self):
        grid = Grid(1024, 100.0)
        fam = SolitonFamily(2, 1.0)
        times = [0.0, 0.5, 1.0, 1.5]
        states = [profile(fam, grid, -10.0 + t) for t in times]
        zeros = [Field.zeros(grid) for _ in times]
        seen = []
        track = track_run(states, zeros, times, p=2, c0=1.0, x0=-10.0, a=0.5, on_sample=seen.append)

        assert len(seen) == len(times)
        assert np.max(np.abs(np.asarray(track.c) - 1.0)) < 1e-9
        assert np.max(np.abs(np.asarray(track.x) - (-10.0 + np.asarray(times)))) < 1e-9
        assert track.max_orthogonality() < 1e-10
        assert track.max_phase_jump() < 1e-9
        assert np.max(np.abs(track.xdot_minus_c)) < 1e-8
        assert track.series("v2_L2a").max() < 1e-8
        assert track.gamma == []

    def test_csv_header(self, tmp_path):
        track = ModulationTrack(p=2, c0=1.0, times=[0.0], c=[1.0], x=[0.0], refined_c=[1.0],
                                xdot_minus_c=[0.0], cdot=[0.0], residual=[0.0])
        path = tmp_path / "track.csv"
        track.to_csv(str(path))
        header, row = path.read_text().splitlines()
        assert header == "t,c,x,gamma,refined_c,xdot_minus_c,cdot,residual"
        assert row.split(",")[3] == "nan"

    def test_finite_differences_of_smooth_track(self):
        times = np.linspace(0.0, 2.0, 21)
        c = 1.0 + 0.1 * times
        x = 1.02 * times + 0.05 * times ** 2
        track = ModulationTrack(p=2, c0=1.0, times=list(times), c=list(c), x=list(x),
                                xdot_minus_c=[0.02] * times.size, cdot=[0.1] * times.size)
        check = track.finite_difference_check()
        assert check["cdot"] < 1e-10
        assert check["xdot_minus_c"] < 1e-10

    def test_finite_differences_flag_wrong_rates(self):
        times = [0.0, 1.0, 2.0, 3.0]
        track = ModulationTrack(p=2, c0=1.0, times=times, c=[1.0, 1.1, 1.2, 1.3], x=[0.0, 1.0, 2.0, 3.0],
                                xdot_minus_c=[0.0] * 4, cdot=[0.2] * 4)
        check = track.finite_difference_check()
        assert check["cdot"] == pytest.approx(0.5)

    def test_finite_differences_static(self):
        track = ModulationTrack(p=2, c0=1.0, times=[0.0, 1.0, 2.0], c=[1.0] * 3, x=[0.0, 1.0, 2.0],
                                xdot_minus_c=[0.0] * 3, cdot=[0.0] * 3)
        assert track.finite_difference_check() == {"cdot": 0.0, "xdot_minus_c": 0.0}

    @pytest.mark.slow
    def test_rates_match_fitted_motion(self, grid, gaussian):
        fam = SolitonFamily(2, 1.0)
        v0 = gaussian(grid, amplitude=1e-2, width=1.0, center=-50.0)
        cfg = EvolveConfig(dt=1e-3, t_end=10.0, p=2, sample_every=50, sponge_width=20.0)
        traj_u = evolve(profile(fam, grid, -50.0) + v0, cfg)
        traj_v1 = evolve(v0, cfg)
        track = track_run(traj_u.states, traj_v1.states, traj_u.times, p=2, c0=1.0, x0=-50.0, a=0.5, norm_window=25.0)
        check = track.finite_difference_check()
        assert check["cdot"] < 0.05
        assert check["xdot_minus_c"] < 0.05


def synthetic_track(p):
    times = [0.0, 1.0, 2.0, 3.0]
    track = ModulationTrack(p=p, c0=1.0, times=times, c=[1.0, 1.01, 0.995, 1.02],
                            xdot_minus_c=[0.0, 0.02, -0.03, 0.01])
    if p == 3:
        track.gamma_dot = [1.0, 1.05, 0.99, 1.0]
    track.norms = {
        "v1_L2": [0.01, 0.008, 0.009, 0.004],
        "v1_W1": [0.0, 0.003, 0.001, 0.002],
        "v2_L2a": [0.0, 0.002, 0.001, 0.0005],
        "v2_H1a": [0.0, 0.003, 0.002, 0.001],
        "v_L2": [0.01, 0.009, 0.009, 0.008],
    }
    return track


class TestMQuantities:
    @pytest.mark.parametrize("p", [2, 3])
    def test_series_are_nondecreasing(self, p):
        report = m_quantities(synthetic_track(p))
        for name, values in report["series"].items():
            assert np.all(np.diff(values) >= 0.0), name

    def test_total_for_each_power(self):
        quad = m_quantities(synthetic_track(2))["final"]
        assert "Mgamma" not in quad
        assert quad["Mtot"] == pytest.approx(quad["M1"] + quad["M2"] + quad["Mv"] + quad["Mc"] + quad["Mx"])
        cubic = m_quantities(synthetic_track(3))["final"]
        assert cubic["Mtot"] == pytest.approx(
            cubic["M1"] + cubic["M2"] + cubic["Mv"] + cubic["Mc"] + cubic["Mgamma"]
        )

    def test_report_json(self, tmp_path):
        path = tmp_path / "m.json"
        write_m_report(str(path), m_quantities(synthetic_track(2)))
        assert '"Mtot"' in path.read_text()
