"""
Evans function of L_c = d_y(d_y^2 - c + f'(phi_c)) left of the weighted essential curve.

For lambda with Re lambda < a(c - a^2) the characteristic polynomial
nu^3 - c nu - lambda has exactly one root nu1 with Re nu1 < -a. The
eigenvalue problem L_c v = lambda v is written as Y' = M(y, lambda) Y with
Y = (v, v', v''). Y+ is the solution tending to e^{nu1 y} r1 at +infinity
and Z- is the adjoint solution tending to e^{-nu1 y} l1 at -infinity; it
annihilates every solution that is small at -infinity. Their pairing
D(lambda) = Z-(0) . Y+(0) vanishes exactly at eigenvalues of L_c in
L^2_a, with multiplicity. Both are integrated with the e^{nu1 y} factor
removed, so they stay O(1) along the integration.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from errors import EigenError
from soliton import SolitonFamily, dy_profile_values, profile_values

logger = logging.getLogger(__name__)


def spatial_roots(c: float, lam: complex) -> np.ndarray:
    """Roots of nu^3 - c nu - lambda ordered by real part."""
    roots = np.roots([1.0, 0.0, -c, -complex(lam)])
    return roots[np.argsort(roots.real)]


def spatial_root(c: float, lam: complex) -> complex:
    return complex(spatial_roots(c, lam)[0])


@dataclass(frozen=True)
class EvansFunction:
    fam: SolitonFamily
    a: float
    length: Optional[float] = None
    rtol: float = 1e-8
    atol: float = 1e-10

    @property
    def half_length(self) -> float:
        # f'(phi_c) decays at least like e^{-sqrt(c) |y|}
        return self.length if self.length is not None else 25.0 / min(1.0, math.sqrt(self.fam.c))

    def _potential(self, y: float):
        phi = float(profile_values(self.fam, y))
        dphi = float(dy_profile_values(self.fam, y))
        return self.fam.fprime(phi), self.fam.fsecond(phi) * dphi

    def _system(self, y: float, lam: complex) -> np.ndarray:
        pot, dpot = self._potential(y)
        return np.array(
            [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [lam - dpot, self.fam.c - pot, 0.0]],
            dtype=complex,
        )

    def __call__(self, lam: complex) -> complex:
        lam = complex(lam)
        c = self.fam.c
        roots = spatial_roots(c, lam)
        nu = complex(roots[0])
        # exactly one decaying direction at +infinity in L^2_a
        if not nu.real < -self.a < roots[1].real:
            raise ValueError(f"lambda={lam} lies on or right of the weighted essential curve")
        right = np.array([1.0, nu, nu * nu], dtype=complex)
        left = np.array([nu * nu - c, nu, 1.0], dtype=complex) / (3.0 * nu * nu - c)
        shift = nu * np.eye(3)

        def decaying(y, Y):
            return (self._system(y, lam) - shift) @ Y

        def adjoint(y, Z):
            return (shift - self._system(y, lam).T) @ Z

        span = self.half_length
        plus = integrate.solve_ivp(decaying, (span, 0.0), right, method="DOP853", rtol=self.rtol, atol=self.atol)
        minus = integrate.solve_ivp(adjoint, (-span, 0.0), left, method="DOP853", rtol=self.rtol, atol=self.atol)
        if not (plus.success and minus.success):
            raise EigenError(f"Evans integration failed at lambda={lam}: {plus.message or minus.message}")
        return complex(minus.y[:, -1] @ plus.y[:, -1])


def rectangle(re_min: float, re_max: float, im_max: float, per_side: int = 16) -> np.ndarray:
    """Counterclockwise boundary of [re_min, re_max] x [-im_max, im_max], first corner not repeated."""
    s = np.linspace(0.0, 1.0, per_side, endpoint=False)
    bottom = re_min + (re_max - re_min) * s - 1j * im_max
    right = re_max + 1j * (-im_max + 2.0 * im_max * s)
    top = re_max - (re_max - re_min) * s + 1j * im_max
    left = re_min + 1j * (im_max - 2.0 * im_max * s)
    return np.concatenate([bottom, right, top, left])


def circle(center: complex, radius: float, points: int = 32) -> np.ndarray:
    return center + radius * np.exp(2j * math.pi * np.arange(points) / points)


def winding_number(
    func: Callable[[complex], complex],
    contour: Sequence[complex],
    max_step: float = 0.4,
    max_points: int = 4000,
) -> int:
    """Zeros of func inside the closed contour, from its accumulated argument.

    Segments are bisected until the argument changes by at most max_step
    between neighbouring points.
    """
    zs = [complex(z) for z in contour]
    zs.append(zs[0])
    values = [func(z) for z in zs[:-1]]
    values.append(values[0])
    total, k = 0.0, 0
    while k < len(zs) - 1:
        if values[k] == 0 or values[k + 1] == 0:
            raise EigenError(f"Evans function vanishes on the contour near {zs[k]}")
        step = float(np.angle(values[k + 1] / values[k]))
        if abs(step) > max_step:
            if len(zs) >= max_points:
                raise EigenError(f"argument not resolved with {max_points} contour points")
            mid = 0.5 * (zs[k] + zs[k + 1])
            zs.insert(k + 1, mid)
            values.insert(k + 1, func(mid))
            continue
        total += step
        k += 1
    logger.debug("winding: %d contour points, total argument %.6g", len(zs), total)
    return int(round(total / (2.0 * math.pi)))


@dataclass
class EvansCount:
    origin: int
    region: int
    region_bounds: tuple

    @property
    def extra(self) -> int:
        """Eigenvalues in the region other than the zero pair."""
        return self.region - self.origin


def count_point_spectrum(
    fam: SolitonFamily,
    a: float,
    margin: float = 1e-3,
    extent: float = 4.0,
    radius: float = 0.1,
    evans: Optional[EvansFunction] = None,
) -> EvansCount:
    """Eigenvalues near 0 and in the box [-extent, floor - margin] x [-extent, extent]."""
    floor = a * (fam.c - a * a)
    if not 0 < radius < floor - margin:
        raise ValueError(f"origin radius must lie in (0, {floor - margin:.6g}), got {radius}")
    evans = evans or EvansFunction(fam, a)
    re_max = floor - margin
    origin = winding_number(evans, circle(0.0, radius))
    region = winding_number(evans, rectangle(-extent, re_max, extent))
    logger.debug("evans count: p=%d c=%g origin=%d region=%d", fam.p, fam.c, origin, region)
    return EvansCount(origin=origin, region=region, region_bounds=(-extent, re_max, extent))
