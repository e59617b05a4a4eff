"""
Solitary waves of d_t u + d_x^3 u + 3 d_x(u^p) = 0 for p = 2, 3.

phi_c(y) = alpha_c sech^{2/(p-1)}(beta_c y) solves phi'' - c phi + 3 phi^p = 0.
Besides the profile this module builds the generalized kernel of the
linearized operator (xi1 = d_y phi_c, xi2 = d_c phi_c) and the biorthogonal
adjoint vectors zeta1, zeta2.
"""
import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, Optional

import numpy as np

from grid import Field, Grid, inner, spectral_antiderivative, spectral_deriv


@dataclass(frozen=True)
class SolitonFamily:
    p: int
    c: float

    def __post_init__(self):
        if self.p not in (2, 3):
            raise ValueError(f"nonlinearity exponent must be 2 or 3, got {self.p}")
        if not self.c > 0:
            raise ValueError(f"soliton speed must be positive, got {self.c}")
        object.__setattr__(self, "c", float(self.c))

    @property
    def alpha(self) -> float:
        return ((self.p + 1) * self.c / 6.0) ** (1.0 / (self.p - 1))

    @property
    def beta(self) -> float:
        return 0.5 * (self.p - 1) * math.sqrt(self.c)

    @property
    def exponent(self) -> float:
        return 2.0 / (self.p - 1)

    def with_speed(self, c: float) -> "SolitonFamily":
        return replace(self, c=c)

    def f(self, u):
        return 3.0 * u ** self.p

    def fprime(self, u):
        return 3.0 * self.p * u ** (self.p - 1)

    def fsecond(self, u):
        return 3.0 * self.p * (self.p - 1) * u ** (self.p - 2)


@dataclass(frozen=True, eq=False)
class KernelBasis:
    center: float
    window: float
    phi: Field
    xi1: Field
    xi2: Field
    zeta1: Field
    zeta2: Field
    dzeta1: Field
    dzeta2: Field
    theta1: float
    theta2: float

    @property
    def xis(self):
        return (self.xi1, self.xi2)

    @property
    def zetas(self):
        return (self.zeta1, self.zeta2)

    def pair(self, f: Field, g: Field) -> float:
        """Windowed pairing used for everything that touches the non-decaying zeta1."""
        return inner(f, g, window=self.window, center=self.center)


def _sech(z):
    e = np.exp(-np.abs(z))
    return 2.0 * e / (1.0 + e * e)


# ---- profile functions on arbitrary y arrays ----

def profile_values(fam: SolitonFamily, y) -> np.ndarray:
    return fam.alpha * _sech(fam.beta * np.asarray(y)) ** fam.exponent


def dy_profile_values(fam: SolitonFamily, y) -> np.ndarray:
    y = np.asarray(y)
    return -fam.exponent * fam.beta * np.tanh(fam.beta * y) * profile_values(fam, y)


def dc_profile_values(fam: SolitonFamily, y) -> np.ndarray:
    # scaling identity phi_c(y) = c^{1/(p-1)} phi_1(sqrt(c) y)
    unit = fam.with_speed(1.0)
    z = math.sqrt(fam.c) * np.asarray(y)
    scale = fam.c ** (1.0 / (fam.p - 1) - 1.0)
    return scale * (profile_values(unit, z) / (fam.p - 1) + 0.5 * z * dy_profile_values(unit, z))


def _unit_primitive(p: int, z) -> np.ndarray:
    unit = SolitonFamily(p, 1.0)
    ratio = unit.alpha / unit.beta
    if p == 2:
        return ratio * (1.0 + np.tanh(unit.beta * z))
    # Gudermannian: integral of sech
    return ratio * (0.5 * math.pi + 2.0 * np.arctan(np.tanh(0.5 * unit.beta * z)))


def dc_primitive_values(fam: SolitonFamily, y) -> np.ndarray:
    """Closed form of the primitive of d_c phi_c vanishing at -infinity."""
    unit = fam.with_speed(1.0)
    z = math.sqrt(fam.c) * np.asarray(y)
    k = 1.0 / (fam.p - 1)
    return fam.c ** (k - 1.5) * ((k - 0.5) * _unit_primitive(fam.p, z) + 0.5 * z * profile_values(unit, z))


def dc_mass(fam: SolitonFamily) -> float:
    """Integral of d_c phi_c over the line."""
    k = 1.0 / (fam.p - 1)
    return fam.c ** (k - 1.5) * (k - 0.5) * float(_unit_primitive(fam.p, np.inf))


# ---- grid fields ----

def profile(fam: SolitonFamily, grid: Grid, center: float = 0.0) -> Field:
    return Field.from_function(grid, lambda y: profile_values(fam, y), center)


def dy_profile(fam: SolitonFamily, grid: Grid, center: float = 0.0) -> Field:
    return Field.from_function(grid, lambda y: dy_profile_values(fam, y), center)


def dc_profile(fam: SolitonFamily, grid: Grid, center: float = 0.0) -> Field:
    return Field.from_function(grid, lambda y: dc_profile_values(fam, y), center)


def ode_residual(fam: SolitonFamily, grid: Grid, c_test: Optional[float] = None) -> float:
    """sup |phi'' - c phi + 3 phi^p|; c_test checks the profile against another speed."""
    phi = profile(fam, grid)
    c = fam.c if c_test is None else c_test
    res = spectral_deriv(phi, 2) - c * phi + fam.f(phi)
    return res.sup()


def cumulative_primitive(g: Field, center: float, width: float) -> Field:
    """Primitive of a localized g, accumulated from the left edge of the frame centered at `center`.

    The mean of g is carried by an analytic smooth step (1 + tanh(y/width))/2 and
    the zero-mean remainder is integrated spectrally, so the quadrature is exact
    to spectral accuracy.
    """
    grid = g.grid
    y = grid.frame(center)
    total = grid.h * float(np.sum(g.values))
    bump = Field(grid, 0.5 / width * _sech(y / width) ** 2)
    step = 0.5 * (1.0 + np.tanh(y / width))
    rest = spectral_antiderivative(g - total * bump)
    left = int(np.argmin(y))
    return Field(grid, total * step + rest.values - rest.values[left])


def kernel_basis(fam: SolitonFamily, grid: Grid, center: float = 0.0, window: Optional[float] = None) -> KernelBasis:
    if window is None:
        window = 0.25 * grid.length
    phi = profile(fam, grid, center)
    xi1 = dy_profile(fam, grid, center)
    xi2 = dc_profile(fam, grid, center)

    theta1 = 1.0 / inner(phi, xi2)
    mass = grid.h * float(np.sum(xi2.values))
    theta2 = 0.5 * theta1 ** 2 * mass ** 2

    primitive = cumulative_primitive(xi2, center, width=1.0 / math.sqrt(fam.c))
    zeta1 = -theta1 * primitive + theta2 * phi
    zeta2 = theta1 * phi
    dzeta1 = -theta1 * xi2 + theta2 * xi1
    dzeta2 = theta1 * xi1
    return KernelBasis(
        center=center,
        window=window,
        phi=phi,
        xi1=xi1,
        xi2=xi2,
        zeta1=zeta1,
        zeta2=zeta2,
        dzeta1=dzeta1,
        dzeta2=dzeta2,
        theta1=theta1,
        theta2=theta2,
    )


def biorthogonality_matrix(basis: KernelBasis) -> np.ndarray:
    return np.array([[basis.pair(xi, zeta) for zeta in basis.zetas] for xi in basis.xis])


# ---- linearized operator, applied spectrally ----

def apply_linearized(fam: SolitonFamily, phi: Field, w: Field) -> Field:
    """L_c w = d_y(d_y^2 w - c w + f'(phi) w)."""
    return spectral_deriv(spectral_deriv(w, 2) - fam.c * w + fam.fprime(phi) * w, 1)


def apply_adjoint(fam: SolitonFamily, phi: Field, w: Field, dw: Optional[Field] = None) -> Field:
    """L_c^* w = -(d_y^2 - c + f'(phi)) d_y w; pass dw when w itself is not periodic."""
    if dw is None:
        dw = spectral_deriv(w, 1)
    return -(spectral_deriv(dw, 2) - fam.c * dw + fam.fprime(phi) * dw)


def check_generalized_kernel(
    fam: SolitonFamily,
    basis: KernelBasis,
    linop_apply: Optional[Callable[[Field], Field]] = None,
    adjoint_apply: Optional[Callable[[Field, Field], Field]] = None,
) -> Dict[str, float]:
    """Sup-norms of the four generalized-kernel residuals.

    The adjoint residuals are restricted to the pairing window around the
    soliton, where zeta1 is resolved.
    """
    if linop_apply is None:
        linop_apply = lambda w: apply_linearized(fam, basis.phi, w)
    if adjoint_apply is None:
        adjoint_apply = lambda w, dw: apply_adjoint(fam, basis.phi, w, dw)

    grid = basis.phi.grid
    inside = np.abs(grid.frame(basis.center)) <= basis.window

    def windowed_sup(f: Field) -> float:
        return float(np.max(np.abs(f.values[inside])))

    return {
        "L_xi1": linop_apply(basis.xi1).sup(),
        "L_xi2_minus_xi1": (linop_apply(basis.xi2) - basis.xi1).sup(),
        "Lstar_zeta1_minus_zeta2": windowed_sup(adjoint_apply(basis.zeta1, basis.dzeta1) - basis.zeta2),
        "Lstar_zeta2": windowed_sup(adjoint_apply(basis.zeta2, basis.dzeta2)),
    }
