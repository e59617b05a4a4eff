import math

import numpy as np
import pytest

from errors import SingularSystemError
from linop import (
    WeightedOperator,
    decay_rate,
    eigen,
    essential_spectrum_curve,
    fd4_diff_matrix,
    fourier_diff2_matrix,
    fourier_diff_matrix,
    free_operator_check,
    local_smoothing_gain,
    project_P,
    project_Q,
    propagate,
    resolvent_norm,
    resolvent_sweep,
    smoothing_exponent,
)
from soliton import SolitonFamily, kernel_basis


@pytest.fixture(scope="module")
def op2():
    return WeightedOperator(SolitonFamily(2, 1.0), 0.5)


@pytest.fixture(scope="module")
def small_op():
    return WeightedOperator(SolitonFamily(2, 1.0), 0.5, half_width=20.0, m=256)


class TestAssembly:
    def test_essential_floor(self):
        assert essential_spectrum_curve(1.0, 0.5, 0.0) == pytest.approx(0.375)
        xi = np.linspace(-5, 5, 101)
        assert np.all(essential_spectrum_curve(1.0, 0.5, xi).real >= 0.375 - 1e-12)

    @pytest.mark.parametrize("a", [0.0, 1.0, 1.5])
    def test_weight_rate_range(self, a):
        with pytest.raises(ValueError):
            WeightedOperator(SolitonFamily(2, 1.0), a)

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            WeightedOperator(SolitonFamily(2, 1.0), 0.5, scheme="chebyshev")

    def test_deterministic(self, small_op):
        again = WeightedOperator(SolitonFamily(2, 1.0), 0.5, half_width=20.0, m=256)
        assert np.array_equal(small_op.matrix, again.matrix)

    def test_fourier_matrix_differentiates(self):
        m, R = 64, math.pi
        x = -R + 2 * R / m * np.arange(m)
        D = fourier_diff_matrix(m, R)
        assert np.max(np.abs(D @ np.sin(3 * x) - 3 * np.cos(3 * x))) < 1e-10

    def test_second_derivative_matrix(self):
        m, R = 64, math.pi
        x = -R + 2 * R / m * np.arange(m)
        D = fourier_diff_matrix(m, R)
        D2 = fourier_diff2_matrix(m, R)
        assert np.max(np.abs(D2 @ np.sin(3 * x) + 9 * np.sin(3 * x))) < 1e-10
        assert np.max(np.abs(D2 - D @ D)) < 1e-8 * np.max(np.abs(D2))

    def test_fd4_matrix_is_fourth_order(self):
        errors = []
        for m in (199, 399):
            h = 20.0 / (m + 1)
            x = -10.0 + h * np.arange(1, m + 1)
            D = fd4_diff_matrix(m, h)
            errors.append(np.max(np.abs(D @ np.exp(-x ** 2) + 2 * x * np.exp(-x ** 2))))
        assert 12.0 < errors[0] / errors[1] < 20.0

    def test_odd_fourier_size(self):
        with pytest.raises(ValueError):
            fourier_diff_matrix(63, 1.0)
        with pytest.raises(ValueError):
            fourier_diff2_matrix(63, 1.0)

    def test_enlarged_keeps_spacing(self, small_op):
        big = small_op.enlarged(2)
        assert big.half_width == 40.0 and big.m == 512
        assert big.h == pytest.approx(small_op.h)

    @pytest.mark.parametrize("p", [2, 3])
    def test_edge_shift(self, p):
        # int f'(phi_1) dy = 12 for both exponents
        op = WeightedOperator(SolitonFamily(p, 1.0), 0.5, half_width=40.0, m=512)
        assert op.edge_shift == pytest.approx(0.5 * 12.0 / 80.0, rel=1e-8)
        assert op.free().edge_shift == 0.0


class TestSpectrum:
    @pytest.mark.parametrize("p", [2, 3])
    def test_zero_pair_at_tolerance(self, p):
        report = eigen(WeightedOperator(SolitonFamily(p, 1.0), 0.5), count=False)
        assert report.tol_zero == 1e-6
        assert report.zero_count == 2
        assert report.to_dict()["zero_max_abs"] < 1e-6

    @pytest.mark.parametrize("p", [2, 3])
    def test_ring_bottom_follows_the_edge_shift(self, p):
        op = WeightedOperator(SolitonFamily(p, 1.0), 0.5, half_width=30.0, m=400)
        ring = []
        for candidate in (op, op.enlarged(2)):
            report = eigen(candidate, count=False)
            assert report.zero_count == 2
            assert abs(report.ring_gap + report.edge_shift - 0.375) < 1e-3
            ring.append(report.ring_gap)
        # the seam mode moves with the box, a true eigenvalue would not
        assert ring[1] - ring[0] > 0.02

    def test_free_operator_on_curve(self, small_op):
        assert free_operator_check(small_op) < 1e-8

    @pytest.mark.parametrize("p", [2, 3])
    def test_kernel_relations_on_matrix(self, p):
        residuals = WeightedOperator(SolitonFamily(p, 1.0), 0.5).kernel_residuals()
        assert residuals["A_xi1"] < 1e-6
        assert residuals["A_xi2_minus_xi1"] < 1e-6

    def test_report_csv(self, tmp_path, small_op):
        path = tmp_path / "spectrum.csv"
        eigen(small_op, count=False).to_csv(str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == "re,im"
        assert len(lines) == small_op.m + 1

    def test_uncounted_report_uses_ring(self, small_op):
        report = eigen(small_op, count=False)
        assert report.evans is None
        assert report.gap == report.ring_gap
        assert "evans_extra" not in report.to_dict()


class TestProjection:
    def test_projector_is_idempotent(self, op2):
        P = op2.projector
        assert np.max(np.abs(P @ P - P)) < 1e-8

    def test_complement_annihilates_kernel(self, op2):
        xis, _ = op2.kernel
        assert np.max(np.abs(op2.complement @ xis)) < 1e-8

    def test_field_projection(self, grid, gaussian):
        fam = SolitonFamily(2, 1.0)
        basis = kernel_basis(fam, grid)
        v = gaussian(grid, width=2.0, center=1.0)
        q = project_Q(v, basis)
        for zeta in basis.zetas:
            assert abs(basis.pair(q, zeta)) < 1e-10
        assert np.max(np.abs((project_P(v, basis) + q - v).values)) < 1e-14


class TestSemigroup:
    def test_propagate_zero_time_copies(self, small_op):
        w0 = small_op.sample(lambda y: np.exp(-y ** 2))
        out = propagate(small_op, w0, 0.0)
        assert np.array_equal(out, w0) and out is not w0

    def test_negative_time(self, small_op):
        with pytest.raises(ValueError):
            propagate(small_op, np.zeros(small_op.m), -1.0)

    def test_split_steps_agree(self, small_op):
        w0 = small_op.complement @ small_op.sample(lambda y: np.exp(-y ** 2))
        one = propagate(small_op, w0, 2.0)
        many = propagate(small_op, w0, 2.0, max_step=0.5)
        assert np.max(np.abs(one - many)) < 1e-8 * np.max(np.abs(one))

    def test_kernel_is_invariant(self, op2):
        xis, _ = op2.kernel
        # exp(-tA) xi2 = xi2 - t xi1
        out = propagate(op2, xis[:, 1], 1.0)
        assert op2.norm(out - (xis[:, 1] - xis[:, 0])) < 1e-6 * op2.norm(xis[:, 1])

    def test_translation_mode_does_not_decay(self, op2):
        xis, _ = op2.kernel
        fit = decay_rate(op2, xis[:, 0], T=10.0, project=False)
        assert abs(fit.rate) < 1e-6

    def test_local_smoothing_zero_forcing(self, small_op):
        assert local_smoothing_gain(small_op, np.zeros((5, small_op.m)), 0.1) == 0.0

    def test_local_smoothing_finite(self, small_op):
        g = small_op.sample(lambda y: np.exp(-y ** 2))
        forcing = np.tile(g, (21, 1))
        gain = local_smoothing_gain(small_op, forcing, 0.1)
        assert 0.0 < gain < np.inf


class TestResolvent:
    def test_finite_off_spectrum(self, small_op):
        value = resolvent_norm(small_op, complex(0.0, 0.25 * small_op.essential_floor))
        assert 0.0 < value < np.inf

    def test_sweep_shape(self, small_op):
        rows = resolvent_sweep(small_op, [-1.0, 0.0, 1.0], 0.1)
        assert [r[0] for r in rows] == [-1.0, 0.0, 1.0]
        assert all(np.isfinite(r[1]) for r in rows)

    def test_zero_is_singular_without_projection(self, op2):
        with pytest.raises(SingularSystemError):
            resolvent_norm(op2, 0.0, project=False)
        assert np.isfinite(resolvent_norm(op2, 0.0))


@pytest.mark.slow
class TestDecayMeasurements:
    @pytest.fixture(scope="class")
    def op40(self):
        return WeightedOperator(SolitonFamily(2, 1.0), 0.5, half_width=40.0, m=800)

    @pytest.mark.parametrize("p", [2, 3])
    def test_spectrum_is_certified(self, p):
        report = eigen(WeightedOperator(SolitonFamily(p, 1.0), 0.5))
        assert report.evans.origin == 2
        assert report.evans.extra == 0
        assert report.gap >= 0.375 - 1e-3
        assert report.stable()

    def test_decay_rate_in_gap_band(self, op40):
        w0 = op40.sample(lambda y: np.exp(-y ** 2))
        fit = decay_rate(op40, w0, T=40.0)
        gap = eigen(op40).gap
        assert gap == pytest.approx(0.375)
        assert 0.9 * gap <= fit.rate <= 1.1 * gap
        fine = op40.refined(2)
        finer = decay_rate(fine, fine.sample(lambda y: np.exp(-y ** 2)), T=40.0)
        assert abs(finer.rate - fit.rate) < 0.05 * fit.rate

    def test_resolvent_refinement(self, small_op):
        lam = complex(0.0, 0.25 * small_op.essential_floor)
        coarse = resolvent_norm(small_op, lam)
        fine = resolvent_norm(small_op.refined(2), lam)
        assert abs(fine - coarse) < 0.1 * coarse

    def test_local_smoothing_refinement(self, small_op):
        gains = []
        for op in (small_op, small_op.refined(2)):
            g = op.sample(lambda y: np.exp(-y ** 2))
            gains.append(local_smoothing_gain(op, np.tile(g, (41, 1)), 0.1))
        assert abs(gains[1] - gains[0]) < 0.1 * gains[0]

    def test_local_smoothing_horizon(self, small_op):
        # forcing lives on [0, 5]; doubling the horizon adds only the decaying tail
        g = small_op.sample(lambda y: np.exp(-y ** 2))
        gains = []
        for rows in (101, 201):
            forcing = np.zeros((rows, small_op.m))
            forcing[:51] = g
            gains.append(local_smoothing_gain(small_op, forcing, 0.1))
        assert abs(gains[1] - gains[0]) < 0.1 * gains[0]

    @pytest.mark.parametrize(
        "j,mode,target,tol",
        [(0, "L1", 0.25, 0.05), (1, "L1", 0.75, 0.07), (1, "L2", 0.50, 0.05)],
    )
    def test_smoothing_exponents(self, j, mode, target, tol):
        op = WeightedOperator(SolitonFamily(2, 1.0), 0.5, half_width=12.0, m=1024)
        fit = smoothing_exponent(op, j=j, mode=mode)
        assert abs(fit.rate - target) <= tol

    def test_smoothing_rejects_bad_order(self, small_op):
        with pytest.raises(ValueError):
            smoothing_exponent(small_op, j=2)
