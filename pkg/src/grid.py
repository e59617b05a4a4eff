"""
Periodic spatial grid, real grid functions and the spectral calculus on them.

Every x- or y-variable in the lab is sampled on a `Grid`: n uniform nodes
x_j = -L/2 + j L / n. Fields are immutable; all operations return new fields.
"""
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import fft

NORM_KINDS = ("L2", "H1", "L1", "L2_a", "H1_a", "L1_a", "W", "W1")
WEIGHTED_KINDS = ("L2_a", "H1_a", "L1_a", "W", "W1")


@dataclass(frozen=True)
class Grid:
    n: int
    length: float

    def __post_init__(self):
        n = int(self.n)
        if n < 16 or n & (n - 1):
            raise ValueError(f"grid size n must be a power of two >= 16, got {self.n}")
        if not self.length > 0:
            raise ValueError(f"domain length must be positive, got {self.length}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "length", float(self.length))

    @property
    def h(self) -> float:
        return self.length / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        x = -0.5 * self.length + self.h * np.arange(self.n)
        x.flags.writeable = False
        return x

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """k_m = 2 pi m / L for the half spectrum used by the real transforms."""
        k = 2.0 * math.pi * fft.rfftfreq(self.n, d=self.h)
        k.flags.writeable = False
        return k

    @property
    def k_max(self) -> float:
        return math.pi * self.n / self.length

    def frame(self, center: float = 0.0) -> np.ndarray:
        """Periodic signed distance y = x - center, folded into [-L/2, L/2)."""
        half = 0.5 * self.length
        return np.mod(self.nodes - center + half, self.length) - half


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n,):
            raise ValueError(f"field has {vals.shape} samples, grid has {self.grid.n}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.n))

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[[np.ndarray], np.ndarray], center: float = 0.0) -> "Field":
        return cls(grid, func(grid.frame(center)))

    def _other(self, other):
        if isinstance(other, Field):
            _check_same_grid(self, other)
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return Field(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other: float):
        return Field(self.grid, self.values / other)

    def __neg__(self):
        return Field(self.grid, -self.values)

    def __pow__(self, p: int):
        return Field(self.grid, self.values ** p)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class WeightSpec:
    """Exponential weight e^{a y} (one_sided) or e^{-a|y|} (two_sided), y = x - center.

    The weight is applied only for |y| <= window; beyond it the integrand is zero.
    window=None means L/4 of whichever grid the weight is evaluated on.
    """
    a: float
    center: float = 0.0
    kind: str = "one_sided"
    window: Optional[float] = None

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"weight rate must be positive, got {self.a}")
        if self.kind not in ("one_sided", "two_sided"):
            raise ValueError(f"unknown weight kind: {self.kind}")
        if self.window is not None and not self.window > 0:
            raise ValueError(f"weight window must be positive, got {self.window}")

    def resolved_window(self, grid: Grid) -> float:
        window = 0.25 * grid.length if self.window is None else self.window
        if window > 0.5 * grid.length * (1 + 1e-12):
            raise ValueError(f"weight window {window} exceeds L/2 = {0.5 * grid.length}")
        return window

    def profile(self, grid: Grid) -> np.ndarray:
        window = self.resolved_window(grid)
        y = grid.frame(self.center)
        inside = np.abs(y) <= window
        yc = np.clip(y, -window, window)
        if self.kind == "one_sided":
            w = np.exp(self.a * yc)
        else:
            w = np.exp(-self.a * np.abs(yc))
        return np.where(inside, w, 0.0)


def _check_same_grid(f: Field, g: Field) -> None:
    if f.grid != g.grid:
        raise ValueError(f"grid mismatch: {f.grid} vs {g.grid}")


def spectral_deriv(f: Field, order: int = 1) -> Field:
    if order not in (1, 2, 3):
        raise ValueError(f"derivative order must be 1, 2 or 3, got {order}")
    k = f.grid.wavenumbers
    symbol = (1j * k) ** order
    if order % 2:
        # odd derivatives of the Nyquist mode are not real
        symbol = symbol.copy()
        symbol[-1] = 0.0
    return Field(f.grid, fft.irfft(symbol * fft.rfft(f.values), n=f.grid.n))


def translate(f: Field, s: float) -> Field:
    """g(x) = f(x + s) by Fourier phase shift."""
    if s == 0.0:
        return f
    k = f.grid.wavenumbers
    phase = np.exp(1j * k * s)
    phase[-1] = math.cos(k[-1] * s)
    return Field(f.grid, fft.irfft(phase * fft.rfft(f.values), n=f.grid.n))


def spectral_antiderivative(f: Field) -> Field:
    """Zero-mean periodic primitive of f - mean(f)."""
    k = f.grid.wavenumbers
    fh = fft.rfft(f.values)
    gh = np.zeros_like(fh)
    gh[1:] = fh[1:] / (1j * k[1:])
    gh[-1] = 0.0
    return Field(f.grid, fft.irfft(gh, n=f.grid.n))


def inner(f: Field, g: Field, window: Optional[float] = None, center: float = 0.0) -> float:
    """Rectangle-rule pairing h * sum f g, optionally restricted to |x - center| <= window."""
    _check_same_grid(f, g)
    prod = f.values * g.values
    if window is not None:
        prod = np.where(np.abs(f.grid.frame(center)) <= window, prod, 0.0)
    return float(f.grid.h * np.sum(prod))


def norm(f: Field, kind: str = "L2", weight: Optional[WeightSpec] = None) -> float:
    if kind not in NORM_KINDS:
        raise ValueError(f"unknown norm: {kind}")
    h = f.grid.h
    if kind == "L2":
        return math.sqrt(h * float(np.sum(f.values ** 2)))
    if kind == "L1":
        return h * float(np.sum(np.abs(f.values)))
    if kind == "H1":
        df = spectral_deriv(f, 1).values
        return math.sqrt(h * float(np.sum(f.values ** 2 + df ** 2)))

    if weight is None:
        raise ValueError(f"norm {kind} needs a WeightSpec")
    if kind in ("W", "W1"):
        weight = replace(weight, kind="two_sided")
    w = weight.profile(f.grid)
    if kind == "L1_a":
        return h * float(np.sum(w * np.abs(f.values)))
    sq = float(np.sum((w * f.values) ** 2))
    if kind in ("H1_a", "W1"):
        df = spectral_deriv(f, 1).values
        sq += float(np.sum((w * df) ** 2))
    return math.sqrt(h * sq)
