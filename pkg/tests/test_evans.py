import math

import numpy as np
import pytest

from errors import EigenError
from evans import EvansFunction, circle, count_point_spectrum, rectangle, spatial_root, winding_number
from soliton import SolitonFamily


class TestContours:
    def test_spatial_root(self):
        lam = complex(0.1, 0.3)
        nu = spatial_root(1.0, lam)
        assert abs(nu ** 3 - nu - lam) < 1e-12
        others = np.roots([1.0, 0.0, -1.0, -lam])
        assert nu.real == pytest.approx(np.min(others.real))

    def test_rectangle_is_counterclockwise(self):
        zs = rectangle(-1.0, 1.0, 1.0, per_side=4)
        assert zs.size == 16
        assert zs[0] == complex(-1.0, -1.0)
        # shoelace area is positive for counterclockwise walks
        area = 0.5 * np.sum(zs.real * np.roll(zs.imag, -1) - np.roll(zs.real, -1) * zs.imag)
        assert area == pytest.approx(4.0)

    @pytest.mark.parametrize(
        "func,expected",
        [(lambda z: z * z - 0.01, 2), (lambda z: z - 2.0, 0), (lambda z: 1.0 / (z - 0.2), -1)],
    )
    def test_winding_number(self, func, expected):
        assert winding_number(func, circle(0.0, 0.5)) == expected

    def test_winding_needs_refinement(self):
        # eight zeros on a sixteen-point circle wind faster than one step allows
        assert winding_number(lambda z: z ** 8 - 0.5 ** 8, circle(0.0, 0.9, points=16)) == 8

    def test_zero_on_contour(self):
        with pytest.raises(EigenError):
            winding_number(lambda z: z - 0.5, circle(0.0, 0.5, points=4))

    def test_point_limit(self):
        with pytest.raises(EigenError):
            winding_number(lambda z: z ** 40, circle(0.0, 1.0, points=7), max_points=64)


class TestEvansFunction:
    @pytest.fixture(scope="class")
    def evans2(self):
        return EvansFunction(SolitonFamily(2, 1.0), 0.5)

    @pytest.mark.parametrize("lam", [0.5, 1.0, 3.0])
    def test_right_of_curve(self, evans2, lam):
        # past the floor a second root crosses Re nu = -a
        with pytest.raises(ValueError):
            evans2(lam)

    @pytest.mark.parametrize("p", [2, 3])
    def test_vanishes_at_zero(self, p):
        evans = EvansFunction(SolitonFamily(p, 1.0), 0.5)
        assert abs(evans(0.0)) < 1e-3 * abs(evans(0.2))

    def test_conjugate_symmetry(self, evans2):
        lam = complex(-0.3, 0.7)
        assert evans2(lam.conjugate()) == pytest.approx(evans2(lam).conjugate(), rel=1e-6)

    def test_half_length_scales_with_speed(self):
        assert EvansFunction(SolitonFamily(2, 0.25), 0.2).half_length == pytest.approx(50.0)
        assert EvansFunction(SolitonFamily(2, 4.0), 0.5).half_length == pytest.approx(25.0)
        assert EvansFunction(SolitonFamily(2, 1.0), 0.5, length=10.0).half_length == 10.0

    def test_origin_radius_range(self):
        with pytest.raises(ValueError):
            count_point_spectrum(SolitonFamily(2, 1.0), 0.5, radius=0.5)


@pytest.mark.slow
class TestPointSpectrum:
    @pytest.mark.parametrize("p", [2, 3])
    def test_only_the_zero_pair(self, p):
        count = count_point_spectrum(SolitonFamily(p, 1.0), 0.5)
        assert count.origin == 2
        assert count.region == 2
        assert count.extra == 0
        assert count.region_bounds == (-4.0, pytest.approx(0.374), 4.0)

    def test_other_speed(self):
        # scaling maps c = 2, a = 0.5 sqrt(2) onto the unit case
        fam = SolitonFamily(3, 2.0)
        count = count_point_spectrum(fam, 0.5 * math.sqrt(2.0))
        assert count.origin == 2 and count.extra == 0
