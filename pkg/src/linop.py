"""
Linearized operator L_c = d_y(d_y^2 - c + f'(phi_c)) in the weighted space L^2_a.

Working in the weighted variable w = e^{a y} v turns L_c into the conjugated
matrix (D - a)((D - a)^2 - c + diag f'(phi_c)) on a truncated line [-R, R].
Everything here (spectrum, projection, semigroup, resolvent) acts on that
matrix; states are arrays of weighted samples on the operator nodes.

The periodic truncation carries one mode the line does not have: the
weight makes the constant mode feel the soliton once per period, which
pulls the bottom of the discrete essential ring left of a(c - a^2) by
about a int f'(phi) / (2R). Point spectrum is therefore counted with the
Evans function, and the ring is only used outside the counted box.
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft, integrate, linalg, sparse

from errors import EigenError, FitQualityError, SingularSystemError
from evans import EvansCount, count_point_spectrum
from grid import Field
from soliton import (
    KernelBasis,
    SolitonFamily,
    dc_primitive_values,
    dc_profile_values,
    dy_profile_values,
    profile_values,
)
from utils import write_csv, write_json

logger = logging.getLogger(__name__)

SCHEMES = ("fourier", "fd4")


def essential_spectrum_curve(c: float, a: float, xi):
    """lambda(xi) = (i xi - a)((i xi - a)^2 - c), the image of the shifted symbol."""
    z = 1j * np.asarray(xi, dtype=float) - a
    return z * (z * z - c)


def fourier_diff_matrix(m: int, half_width: float) -> np.ndarray:
    """Periodic Fourier collocation derivative on m nodes of [-R, R)."""
    if m % 2:
        raise ValueError(f"Fourier collocation needs an even node count, got {m}")
    j = np.arange(1, m)
    col = np.zeros(m)
    col[1:] = 0.5 * (-1.0) ** j / np.tan(math.pi * j / m)
    row = col[np.r_[0, m - 1:0:-1]]
    return (math.pi / half_width) * linalg.toeplitz(col, row)


def fourier_diff2_matrix(m: int, half_width: float) -> np.ndarray:
    """Symbol -k^2 with the Nyquist mode zeroed, i.e. D @ D without the rounding of the product."""
    if m % 2:
        raise ValueError(f"Fourier collocation needs an even node count, got {m}")
    k = (math.pi / half_width) * fft.fftfreq(m, 1.0 / m)
    k[m // 2] = 0.0
    return linalg.circulant(np.real(fft.ifft(-(k ** 2))))


def fd4_diff_matrix(m: int, h: float) -> np.ndarray:
    """Fourth-order centered differences with zero (Dirichlet) values beyond the ends."""
    coeffs = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12.0 * h)
    diagonals = [np.full(m - abs(k), coeffs[i]) for i, k in enumerate(range(-2, 3))]
    return sparse.diags(diagonals, offsets=range(-2, 3), shape=(m, m)).toarray()


class WeightedOperator:
    """Dense discretization of e^{a y} L_c e^{-a y} on the truncated line."""

    def __init__(
        self,
        fam: SolitonFamily,
        a: float,
        half_width: float = 60.0,
        m: int = 800,
        scheme: str = "fourier",
        potential: bool = True,
    ):
        if not 0 < a < math.sqrt(fam.c):
            raise ValueError(f"weight rate must satisfy 0 < a < sqrt(c) = {math.sqrt(fam.c):.6g}, got {a}")
        if scheme not in SCHEMES:
            raise ValueError(f"unknown operator scheme: {scheme}")
        if not half_width > 0:
            raise ValueError(f"half width must be positive, got {half_width}")
        self.fam = fam
        self.a = float(a)
        self.half_width = float(half_width)
        self.m = int(m)
        self.scheme = scheme
        self.potential = potential

        if scheme == "fourier":
            self.h = 2.0 * self.half_width / self.m
            self.nodes = -self.half_width + self.h * np.arange(self.m)
            self.D = fourier_diff_matrix(self.m, self.half_width)
            second = fourier_diff2_matrix(self.m, self.half_width)
        else:
            self.h = 2.0 * self.half_width / (self.m + 1)
            self.nodes = -self.half_width + self.h * np.arange(1, self.m + 1)
            self.D = fd4_diff_matrix(self.m, self.h)
            second = self.D @ self.D

        eye = np.eye(self.m)
        self.shifted = self.D - self.a * eye
        # (D - a)^2 - c + f'(phi)
        self.inner = second - 2.0 * self.a * self.D + (self.a ** 2 - fam.c) * eye
        if potential:
            self.inner = self.inner + np.diag(fam.fprime(profile_values(fam, self.nodes)))
        self.matrix = self.shifted @ self.inner
        self._expm_cache: Dict[float, np.ndarray] = {}

    def __repr__(self):
        return (
            f"WeightedOperator(p={self.fam.p}, c={self.fam.c}, a={self.a}, "
            f"R={self.half_width}, m={self.m}, scheme={self.scheme!r})"
        )

    def free(self) -> "WeightedOperator":
        return WeightedOperator(self.fam, self.a, self.half_width, self.m, self.scheme, potential=False)

    def refined(self, factor: int = 2) -> "WeightedOperator":
        """Same line, factor times the nodes."""
        return WeightedOperator(self.fam, self.a, self.half_width, factor * self.m, self.scheme, self.potential)

    def enlarged(self, factor: int = 2) -> "WeightedOperator":
        """factor times the half width at the same node spacing."""
        return WeightedOperator(
            self.fam, self.a, factor * self.half_width, factor * self.m, self.scheme, self.potential
        )

    @property
    def essential_floor(self) -> float:
        return self.a * (self.fam.c - self.a ** 2)

    @property
    def edge_shift(self) -> float:
        """Leading displacement a int f'(phi) dy / (2R) of the periodic ring's bottom below the floor."""
        if self.scheme != "fourier" or not self.potential:
            return 0.0
        mass = self.h * float(np.sum(self.fam.fprime(profile_values(self.fam, self.nodes))))
        return self.a * mass / (2.0 * self.half_width)

    @cached_property
    def pencil(self) -> Tuple[np.ndarray, np.ndarray]:
        """(M, (D - a)^{-1}) with A x = lambda x  <=>  M x = lambda (D - a)^{-1} x.

        M carries two derivatives instead of three, so rounding splits the
        double zero eigenvalue by about sqrt(u ||M||) rather than sqrt(u ||A||).
        """
        return self.inner, linalg.inv(self.shifted)

    # ---- states ----

    def sample(self, func: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Weighted state e^{a y} f(y) of an unweighted profile f."""
        return np.exp(self.a * self.nodes) * func(self.nodes)

    def norm(self, w: np.ndarray) -> float:
        """L^2_a norm of the field whose weighted samples are w."""
        return math.sqrt(self.h * float(np.sum(np.abs(w) ** 2)))

    def sobolev_norm(self, w: np.ndarray, order: int) -> float:
        """H^order_a norm: weighted derivatives are (D - a)^j w."""
        total = float(np.sum(np.abs(w) ** 2))
        dw = w
        for _ in range(order):
            dw = self.shifted @ dw
            total += float(np.sum(np.abs(dw) ** 2))
        return math.sqrt(self.h * total)

    def delta(self, y0: float = 0.0) -> np.ndarray:
        """Unit-L^1_a discrete delta at the node nearest y0."""
        w = np.zeros(self.m)
        w[int(np.argmin(np.abs(self.nodes - y0)))] = 1.0 / self.h
        return w

    # ---- generalized kernel on the operator nodes ----

    @cached_property
    def kernel(self) -> Tuple[np.ndarray, np.ndarray]:
        """Weighted kernel vectors e^{ay} xi^i and adjoint vectors e^{-ay} zeta^i as m x 2 arrays."""
        fam, y = self.fam, self.nodes
        phi = profile_values(fam, y)
        xi2 = dc_profile_values(fam, y)
        theta1 = 1.0 / (self.h * float(np.sum(phi * xi2)))
        mass = self.h * float(np.sum(xi2))
        theta2 = 0.5 * theta1 ** 2 * mass ** 2
        zeta1 = -theta1 * dc_primitive_values(fam, y) + theta2 * phi
        zeta2 = theta1 * phi
        grow = np.exp(self.a * y)
        xis = np.column_stack([grow * dy_profile_values(fam, y), grow * xi2])
        zetas = np.column_stack([zeta1 / grow, zeta2 / grow])
        return xis, zetas

    @cached_property
    def projector(self) -> np.ndarray:
        """Spectral projection P onto the generalized kernel, exact projector at matrix level."""
        xis, zetas = self.kernel
        gram = self.h * zetas.T @ xis
        return xis @ np.linalg.solve(gram, self.h * zetas.T)

    @cached_property
    def complement(self) -> np.ndarray:
        return np.eye(self.m) - self.projector

    def kernel_residuals(self) -> Dict[str, float]:
        xis, _ = self.kernel
        scale = self.norm(xis[:, 0])
        return {
            "A_xi1": self.norm(self.matrix @ xis[:, 0]) / scale,
            "A_xi2_minus_xi1": self.norm(self.matrix @ xis[:, 1] - xis[:, 0]) / scale,
        }

    # ---- semigroup ----

    def semigroup(self, t: float) -> np.ndarray:
        """exp(-t A) by scaling and squaring, cached per time step."""
        key = round(float(t), 15)
        cached = self._expm_cache.get(key)
        if cached is None:
            logger.debug("expm cache miss: t=%g on %r", t, self)
            cached = linalg.expm(-key * self.matrix)
            if not np.all(np.isfinite(cached)):
                raise OverflowError(f"matrix exponential overflowed at t={t}; split the step")
            self._expm_cache[key] = cached
        return cached


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    zero_cluster: np.ndarray
    gap: float
    essential_floor: float
    tol_zero: float
    tol_spec: float
    ring_gap: float = math.inf
    edge_shift: float = 0.0
    evans: Optional[EvansCount] = None

    @property
    def zero_count(self) -> int:
        return int(self.zero_cluster.size)

    def stable(self) -> bool:
        """Two zero eigenvalues and nothing else left of the essential floor."""
        counted = self.evans is None or (self.evans.origin == 2 and self.evans.extra == 0)
        return self.zero_count == 2 and counted and self.gap >= self.essential_floor - self.tol_spec

    def to_dict(self) -> dict:
        out = {
            "zero_count": self.zero_count,
            "zero_max_abs": float(np.max(np.abs(self.zero_cluster))) if self.zero_count else None,
            "gap": self.gap,
            "essential_floor": self.essential_floor,
            "ring_gap": self.ring_gap,
            "edge_shift": self.edge_shift,
            "tol_zero": self.tol_zero,
            "tol_spec": self.tol_spec,
        }
        if self.evans is not None:
            out["evans_origin"] = self.evans.origin
            out["evans_extra"] = self.evans.extra
        out["stable"] = self.stable()
        return out

    def to_csv(self, path: str) -> None:
        write_csv(path, ["re", "im"], ((ev.real, ev.imag) for ev in self.eigenvalues))


def eigen(
    op: WeightedOperator,
    tol_zero: float = 1e-6,
    tol_spec: float = 1e-3,
    extent: float = 4.0,
    count: bool = True,
) -> SpectrumReport:
    """Matrix eigenvalues of the pencil plus an Evans count of the point spectrum.

    Inside [-extent, floor - tol_spec] x [-extent, extent] the gap is decided by
    the Evans count, which sees the line rather than the periodic ring. Outside
    that box the ring eigenvalues are used as computed.
    """
    M, S = op.pencil
    try:
        values = linalg.eigvals(M, S)
    except linalg.LinAlgError as e:
        raise EigenError(f"eigensolver failed on {op!r}: {e}") from e
    values = values[np.isfinite(values)]
    values = values[np.lexsort((values.imag, values.real))]
    near_zero = np.abs(values) < tol_zero
    rest = values[~near_zero]
    ring_gap = float(np.min(rest.real)) if rest.size else math.inf
    floor = op.essential_floor

    evans = None
    gap = ring_gap
    if count and op.potential:
        evans = count_point_spectrum(op.fam, op.a, margin=tol_spec, extent=extent)
        outside = rest[np.abs(rest.imag) > extent]
        gap = min(floor, float(np.min(outside.real))) if outside.size else floor
        if evans.extra:
            gap = min(gap, ring_gap)
    logger.debug(
        "eigen: %r zero=%d ring_gap=%.6g edge_shift=%.6g gap=%.6g",
        op, int(near_zero.sum()), ring_gap, op.edge_shift, gap,
    )
    return SpectrumReport(
        eigenvalues=values,
        zero_cluster=values[near_zero],
        gap=gap,
        essential_floor=floor,
        tol_zero=tol_zero,
        tol_spec=tol_spec,
        ring_gap=ring_gap,
        edge_shift=op.edge_shift,
        evans=evans,
    )


def free_operator_check(op: WeightedOperator) -> float:
    """Worst relative distance of the potential-free eigenvalues from the essential curve."""
    free = op.free()
    values = linalg.eigvals(free.matrix)
    c, a = op.fam.c, op.a
    worst = 0.0
    for lam in values:
        # lambda = z(z^2 - c) with z = i xi - a: the root with Re z nearest -a carries xi
        roots = np.roots([1.0, 0.0, -c, -lam])
        z = roots[np.argmin(np.abs(roots.real + a))]
        err = abs(essential_spectrum_curve(c, a, z.imag) - lam) / max(1.0, abs(lam))
        worst = max(worst, float(err))
    return worst


# ---- projections on lab-grid fields ----

def project_Q(v: Field, basis: KernelBasis) -> Field:
    """Q_c v = v - sum_i coef_i xi^i with coefficients making <Q_c v, zeta^j> vanish."""
    gram = np.array([[basis.pair(xi, zeta) for xi in basis.xis] for zeta in basis.zetas])
    moments = np.array([basis.pair(v, zeta) for zeta in basis.zetas])
    coef = np.linalg.solve(gram, moments)
    return v - coef[0] * basis.xi1 - coef[1] * basis.xi2


def project_P(v: Field, basis: KernelBasis) -> Field:
    return v - project_Q(v, basis)


# ---- semigroup measurements ----

def propagate(op: WeightedOperator, w0: np.ndarray, t: float, max_step: Optional[float] = None) -> np.ndarray:
    """w(t) = exp(-t A) w0; t is split into equal cached steps no longer than max_step."""
    if t < 0:
        raise ValueError(f"propagation time must be nonnegative, got {t}")
    if t == 0:
        return np.array(w0, copy=True)
    pieces = 1 if max_step is None else max(1, int(math.ceil(t / max_step - 1e-12)))
    e = op.semigroup(t / pieces)
    w = np.asarray(w0)
    for _ in range(pieces):
        w = e @ w
    return w


@dataclass
class RateFit:
    rate: float
    residual: float
    window: Tuple[float, float]

    def to_dict(self) -> dict:
        return {"rate": self.rate, "residual": self.residual, "window": list(self.window)}

    def write(self, path: str) -> None:
        write_json(path, self.to_dict())


def decay_series(op: WeightedOperator, w0: np.ndarray, T: float, dt: float = 0.5, project: bool = True):
    w = op.complement @ w0 if project else np.array(w0, copy=True)
    e = op.semigroup(dt)
    steps = int(round(T / dt))
    times = dt * np.arange(steps + 1)
    norms = np.empty(steps + 1)
    norms[0] = op.norm(w)
    for k in range(1, steps + 1):
        w = e @ w
        norms[k] = op.norm(w)
    return times, norms


def decay_rate(op: WeightedOperator, w0: np.ndarray, T: float, dt: float = 0.5, project: bool = True) -> RateFit:
    """Least-squares slope of log ||exp(-tA) Q w0||_{L^2_a} over the tail [T/2, T]."""
    times, norms = decay_series(op, w0, T, dt, project)
    tail = times >= 0.5 * T
    t_tail, n_tail = times[tail], norms[tail]
    if np.any(n_tail <= 0):
        raise FitQualityError("decay tail reached zero norm")
    if np.any(np.diff(n_tail) > 1e-7 * n_tail[:-1]):
        raise FitQualityError("decay tail is not monotone; discretization under-resolved")
    slope, intercept = np.polyfit(t_tail, np.log(n_tail), 1)
    fitted = slope * t_tail + intercept
    residual = float(np.sqrt(np.mean((np.log(n_tail) - fitted) ** 2)))
    return RateFit(rate=float(-slope), residual=residual, window=(float(t_tail[0]), float(t_tail[-1])))


def smoothing_exponent(
    op: WeightedOperator,
    j: int = 0,
    mode: str = "L1",
    f: Optional[np.ndarray] = None,
    times: Optional[Sequence[float]] = None,
    max_residual: float = 0.1,
) -> RateFit:
    """Short-time exponent alpha in ||exp(-tA) Q d^j f||_{L^2_a} ~ t^{-alpha}.

    mode "L1": f defaults to a unit-L^1_a discrete delta at the soliton center.
    mode "L2": without f the sup over unit-L^2_a sources is taken (operator norm).
    The factor e^{-floor t} is divided out before the log-log fit.
    """
    if j not in (0, 1):
        raise ValueError(f"derivative order j must be 0 or 1, got {j}")
    if mode not in ("L1", "L2"):
        raise ValueError(f"unknown smoothing mode: {mode}")
    if times is None:
        times = np.geomspace(1e-3, 1e-1, 9)
    times = np.asarray(times, dtype=float)

    source = op.complement
    if j == 1:
        source = source @ op.shifted
    if f is None and mode == "L1":
        f = op.delta(0.0)

    values = np.empty(times.size)
    for i, t in enumerate(times):
        e = op.semigroup(t)
        if f is None:
            values[i] = float(np.linalg.norm(e @ source, 2))
        else:
            values[i] = op.norm(e @ (source @ f))
    values *= np.exp(op.essential_floor * times)

    slope, intercept = np.polyfit(np.log(times), np.log(values), 1)
    fitted = slope * np.log(times) + intercept
    residual = float(np.sqrt(np.mean((np.log(values) - fitted) ** 2)))
    if residual > max_residual:
        raise FitQualityError(f"smoothing fit residual {residual:.3g} exceeds {max_residual:g}")
    return RateFit(rate=float(-slope), residual=residual, window=(float(times[0]), float(times[-1])))


def resolvent_norm(op: WeightedOperator, lam: complex, project: bool = True, rcond: float = 1e-12) -> float:
    """||(i lambda + A)^{-1} Q||_2; the kernel block is deflated by +P when projecting."""
    shifted = op.matrix + 1j * lam * np.eye(op.m)
    if project:
        # on range(Q) the deflation is invisible; on range(P) it lifts the zero eigenvalues
        shifted = shifted + op.projector
    s = linalg.svdvals(shifted)
    if s[-1] < rcond * s[0]:
        raise SingularSystemError(f"resolvent system singular at lambda={lam} (rcond={s[-1] / s[0]:.3g})")
    rhs = op.complement if project else np.eye(op.m)
    return float(np.linalg.norm(linalg.solve(shifted, rhs), 2))


def resolvent_sweep(op: WeightedOperator, re_values: Sequence[float], im: float) -> List[Tuple[float, float]]:
    return [(float(x), resolvent_norm(op, complex(x, im))) for x in re_values]


def local_smoothing_gain(op: WeightedOperator, forcing: np.ndarray, dt: float) -> float:
    """||Ag||_{L^2(0,T;H^2_a)} / ||g||_{L^2(0,T;L^2_a)} with Ag(t) = int_0^t exp(-(t-s)A) Q g(s) ds.

    forcing has one weighted state per row on the uniform time grid k*dt.
    Duhamel integral by trapezoid.
    """
    forcing = np.asarray(forcing, dtype=float)
    steps = forcing.shape[0]
    e = op.semigroup(dt)
    qg = forcing @ op.complement.T
    acc = np.zeros(op.m)
    num = np.empty(steps)
    den = np.array([op.norm(g) ** 2 for g in forcing])
    num[0] = 0.0
    for k in range(1, steps):
        acc = e @ acc + 0.5 * dt * (e @ qg[k - 1] + qg[k])
        num[k] = op.sobolev_norm(acc, 2) ** 2
    denominator = math.sqrt(integrate.trapezoid(den, dx=dt)) if steps > 1 else 0.0
    if denominator == 0.0:
        return 0.0
    return math.sqrt(integrate.trapezoid(num, dx=dt)) / denominator
