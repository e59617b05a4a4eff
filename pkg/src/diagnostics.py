"""
Measured forms of the estimates behind the stability argument.

Virial functional I(t) = int chi_eps(x - xtilde(t) - x0) v1~^2 and its
dissipation ledger, the weighted Gagliardo-Nirenberg and Sobolev
inequalities on random fields, the L^2 identities of the decomposition, the
constrained quadratic form for p = 3, H^1 growth of v1~, and tail norms.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import fft, integrate, linalg

from errors import MonotonicityError
from evolve import Trajectory
from grid import Field, Grid, WeightSpec, inner, norm, spectral_deriv, translate
from linop import fourier_diff_matrix
from soliton import SolitonFamily, dc_mass, dc_primitive_values, dc_profile_values, kernel_basis, profile, profile_values
from utils import write_csv, write_json

logger = logging.getLogger(__name__)

EPS_CAP = 0.1
XTILDE_KINDS = ("linear", "fitted_x", "fitted_gamma")
THETA_SWEEP = (0.0, 0.25, 0.5, 0.75, 1.0)


# ---- the cut-off chi_eps = 1 + tanh(eps x) ----

def _sech2(z):
    e = np.exp(-2.0 * np.abs(z))
    return 4.0 * e / (1.0 + e) ** 2


def chi(eps: float, x) -> np.ndarray:
    return 1.0 + np.tanh(eps * np.asarray(x))


def chi_derivatives(eps: float, x):
    """(chi, chi', chi'', chi''') at x."""
    z = eps * np.asarray(x, dtype=float)
    t = np.tanh(z)
    d1 = eps * _sech2(z)
    d2 = -2.0 * eps * t * d1
    d3 = eps ** 2 * d1 * (6.0 * t ** 2 - 2.0)
    return 1.0 + t, d1, d2, d3


def chi_properties(eps: float, x_range: float = 50.0, samples: int = 10_000) -> Dict[str, object]:
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    x = np.linspace(-x_range, x_range, samples)
    c, d1, _, d3 = chi_derivatives(eps, x)
    far = 50.0 / eps
    return {
        "eps": eps,
        "positive_derivative": bool(np.all(d1 > 0)),
        "derivative_below_2eps_chi": bool(np.all(d1 < 2.0 * eps * c)),
        "third_derivative_bound": bool(np.all(np.abs(d3) <= 4.0 * eps ** 2 * d1)),
        "worst_ratio": float(max(np.max(d1 / (2.0 * eps * c)), np.max(np.abs(d3) / (4.0 * eps ** 2 * d1)))),
        "limit_left": float(chi(eps, -far)),
        "limit_right": float(chi(eps, far)),
        "derivative_at_zero": float(chi_derivatives(eps, 0.0)[1]),
    }


# ---- virial ledger ----

@dataclass(frozen=True)
class VirialConfig:
    eps: float = 0.05
    x0: float = 0.0
    xtilde: str = "linear"
    c1: float = 0.5
    sigma: float = 0.0
    start: float = 0.0

    def __post_init__(self):
        if not 0 < self.eps <= EPS_CAP:
            raise ValueError(f"eps must lie in (0, {EPS_CAP}], got {self.eps}")
        if not self.c1 > 0:
            raise ValueError(f"lower speed bound c1 must be positive, got {self.c1}")
        if self.xtilde not in XTILDE_KINDS:
            raise ValueError(f"unknown reference path: {self.xtilde}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")

    @property
    def nu(self) -> float:
        return 0.5 * min(3.0, self.c1)

    @property
    def speed(self) -> float:
        return self.c1 + self.sigma


@dataclass(frozen=True)
class VirialSeries:
    times: np.ndarray
    I: np.ndarray
    D: np.ndarray
    nu: float

    @property
    def ledger(self) -> np.ndarray:
        return self.I + self.D - self.I[0]

    def excess(self) -> float:
        return float(np.max(self.ledger))

    def holds(self, rel_tol: float = 1e-6) -> bool:
        return self.excess() <= rel_tol * self.I[0]

    def front_ratio(self) -> float:
        return float(self.I[-1] / self.I[0]) if self.I[0] > 0 else 0.0

    def to_csv(self, path: str) -> None:
        write_csv(path, ["t", "I", "D", "ledger"], zip(self.times, self.I, self.D, self.ledger))


def reference_path(cfg: VirialConfig, times: Sequence[float], path: Optional[Sequence[float]] = None) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if cfg.xtilde == "linear":
        return cfg.start + cfg.speed * times
    if path is None or len(path) != len(times):
        raise ValueError(f"reference path '{cfg.xtilde}' needs one position per sample")
    path = np.asarray(path, dtype=float)
    if len(times) > 1:
        slope = np.diff(path) / np.diff(times)
        if np.min(slope) < cfg.speed:
            raise ValueError(f"reference path speed {np.min(slope):.4g} falls below {cfg.speed:.4g}")
    return path


def virial_series(
    traj: Trajectory,
    cfg: VirialConfig,
    path: Optional[Sequence[float]] = None,
    strict: bool = True,
    rel_tol: float = 1e-6,
) -> VirialSeries:
    """I(t) and the dissipation D(t) = nu int_0^t int chi'((d_x v1~)^2 + v1~^2) at the sample times."""
    times = np.asarray(traj.times, dtype=float)
    xt = reference_path(cfg, times, path)
    i_vals, d_vals = [], []
    for v, shift in zip(traj.states, xt):
        c, d1, _, _ = chi_derivatives(cfg.eps, v.grid.nodes - shift - cfg.x0)
        vx = spectral_deriv(v, 1).values
        i_vals.append(v.grid.h * float(np.sum(c * v.values ** 2)))
        d_vals.append(v.grid.h * float(np.sum(d1 * (vx ** 2 + v.values ** 2))))
    dissipation = cfg.nu * integrate.cumulative_trapezoid(d_vals, times, initial=0.0)
    series = VirialSeries(times=times, I=np.asarray(i_vals), D=dissipation, nu=cfg.nu)
    logger.debug("virial: I(0)=%.6g excess=%.3g", series.I[0], series.excess())
    if strict and not series.holds(rel_tol):
        bad = int(np.argmax(series.ledger))
        raise MonotonicityError(
            f"I + D exceeds I(0) by {series.excess():.3g} (tolerance {rel_tol:g} I(0))",
            time=float(times[bad]),
        )
    return series


# ---- weighted inequalities ----

def weighted_gn_check(v: Field, eps: float, x0: float, p: int):
    """(|int chi'(x+x0) v^{p+1}|, (1+2eps)^{(p-1)/2} |v|^{p-1} int chi'(x+x0)(v'^2+v^2))."""
    if p not in (1, 2, 3):
        raise ValueError(f"exponent must be 1, 2 or 3, got {p}")
    h = v.grid.h
    _, d1, _, _ = chi_derivatives(eps, v.grid.nodes + x0)
    dv = spectral_deriv(v, 1).values
    lhs = abs(h * float(np.sum(d1 * v.values ** (p + 1))))
    energy = h * float(np.sum(d1 * (dv ** 2 + v.values ** 2)))
    rhs = (1.0 + 2.0 * eps) ** (0.5 * (p - 1)) * norm(v, "L2") ** (p - 1) * energy
    return lhs, rhs


def weighted_sobolev_check(w: Field, a: float, theta: float, window: Optional[float] = None):
    """(lhs, rhs) pairs for the interpolated form and the L^2_a/H^1_a form."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    grid = w.grid
    if window is None:
        window = 0.5 * grid.length
    spec = WeightSpec(a, 0.0, "one_sided", window)
    one_sided = spec.profile(grid)
    dw = spectral_deriv(w, 1)
    w2 = w.values ** 2

    l2, dl2 = norm(w, "L2"), norm(dw, "L2")
    l2a, dl2a = norm(w, "L2_a", spec), norm(dw, "L2_a", spec)
    interpolated = (
        float(np.max(one_sided * w2)),
        2.0 * l2 ** theta * dl2 ** (1 - theta) * dl2a ** theta * l2a ** (1 - theta),
    )
    weighted = (float(np.max(one_sided ** 2 * w2)), 2.0 * l2a * norm(w, "H1_a", spec))
    return [interpolated, weighted]


def random_field(grid: Grid, rng: np.random.Generator, k_cut: float = 3.0, spread: float = 4.0) -> Field:
    """Band-limited noise under a Gaussian envelope of random width and center."""
    k = grid.wavenumbers
    modes = (k <= k_cut).astype(float)
    coeffs = modes * (rng.standard_normal(k.size) + 1j * rng.standard_normal(k.size))
    raw = fft.irfft(coeffs, n=grid.n)
    raw /= np.max(np.abs(raw)) or 1.0
    width = rng.uniform(0.5, 3.0)
    center = rng.uniform(-spread, spread)
    envelope = np.exp(-(((grid.nodes - center) / width) ** 2))
    return Field(grid, rng.uniform(0.1, 10.0) * raw * envelope)


def _worst(pairs) -> float:
    ratios = [lhs / rhs for lhs, rhs in pairs if rhs > 0]
    return max(ratios) if ratios else 0.0


def check_entry(name: str, passed: bool, worst_ratio: float, seed: Optional[int] = None) -> Dict[str, object]:
    return {"name": name, "passed": bool(passed), "worst_ratio": float(worst_ratio), "seed": seed}


def write_checks(path: str, entries: List[Dict[str, object]]) -> None:
    write_json(path, entries)


def inequality_suite(seed: int, count: int = 100, eps: float = 0.1, a: float = 0.5, grid: Optional[Grid] = None):
    """Randomized runs of both inequality families; one check entry per family."""
    grid = grid or Grid(1024, 60.0)
    rng = np.random.default_rng(seed)

    gn_pairs = []
    for _ in range(count):
        v = random_field(grid, rng)
        x0 = rng.uniform(-5.0, 5.0)
        gn_pairs.extend(weighted_gn_check(v, eps, x0, p) for p in (1, 2, 3))

    sobolev_pairs = []
    for _ in range(count):
        w = random_field(grid, rng)
        for theta in THETA_SWEEP:
            sobolev_pairs.extend(weighted_sobolev_check(w, a, theta))

    entries = []
    for name, pairs in (("weighted_gn", gn_pairs), ("weighted_sobolev", sobolev_pairs)):
        worst = _worst(pairs)
        violations = sum(1 for lhs, rhs in pairs if lhs > rhs)
        logger.info("%s: %d cases, %d violations, worst ratio %.4f", name, len(pairs), violations, worst)
        entries.append(check_entry(name, violations == 0, worst, seed))
    return entries


# ---- decomposition identities ----

def l2_identity_check(u: Field, fam: SolitonFamily, v: Field, v1: Field, x: float) -> Dict[str, float]:
    """Relative residuals of |u|^2 = |phi|^2 + 2<phi,v> + |v|^2 and <phi,v> = <phi,v1>."""
    phi = profile(fam, u.grid)
    u_frame = translate(u, x)
    total = inner(u_frame, u_frame)
    parts = inner(phi, phi) + 2.0 * inner(phi, v) + inner(v, v)
    scale = inner(phi, phi)
    return {
        "identity": abs(total - parts) / total if total else abs(parts),
        "orthogonality": abs(inner(phi, v) - inner(phi, v1)) / scale,
    }


@dataclass(frozen=True)
class QuadraticForm:
    value: float
    bound: float
    nu_hat: float

    @property
    def holds(self) -> bool:
        return self.value >= self.bound


@lru_cache(maxsize=16)
def coercivity_constant(p: int, c: float, c0: float, half_width: float = 20.0, m: int = 512) -> float:
    """Smallest Rayleigh quotient of S''(phi_c) over H^1 restricted to zeta^1, zeta^2 orthogonal fields."""
    fam = SolitonFamily(p, c)
    h = 2.0 * half_width / m
    y = -half_width + h * np.arange(m)
    D = fourier_diff_matrix(m, half_width)
    phi = profile_values(fam, y)

    theta1 = 1.0 / (h * float(np.sum(phi * dc_profile_values(fam, y))))
    theta2 = 0.5 * theta1 ** 2 * dc_mass(fam) ** 2
    zeta1 = -theta1 * dc_primitive_values(fam, y) + theta2 * phi
    zeta2 = theta1 * phi

    stiffness = D.T @ D
    form = stiffness + np.diag(c0 - fam.fprime(phi))
    gram = stiffness + np.eye(m)
    basis = linalg.null_space(np.column_stack([zeta1, zeta2]).T)
    nu_hat = linalg.eigh(
        basis.T @ form @ basis, basis.T @ gram @ basis, eigvals_only=True, subset_by_index=[0, 0]
    )[0]
    logger.debug("coercivity: p=%d c=%g c0=%g m=%d nu_hat=%.6g", p, c, c0, m, nu_hat)
    return float(nu_hat)


def quadratic_form_check(
    fam: SolitonFamily,
    c0: float,
    v2: Field,
    window: Optional[float] = None,
    half_width: float = 20.0,
    m: int = 512,
    tol: float = 1e-6,
) -> QuadraticForm:
    """<S''(phi_c) v2, v2> = int (v2'^2 + c0 v2^2 - 9 phi_c^2 v2^2) against nu_hat |v2|_{H^1}^2."""
    if fam.p != 3:
        raise ValueError("the constrained quadratic form is checked for p = 3 only")
    basis = kernel_basis(fam, v2.grid, 0.0, window)
    for i, zeta in enumerate(basis.zetas, start=1):
        pairing = basis.pair(v2, zeta)
        if abs(pairing) > tol:
            raise ValueError(f"v2 is not orthogonal to zeta{i}: <v2, zeta{i}> = {pairing:.3g}")
    dv2 = spectral_deriv(v2, 1)
    value = inner(dv2, dv2) + c0 * inner(v2, v2) - inner(fam.fprime(basis.phi) * v2, v2)
    nu_hat = coercivity_constant(fam.p, fam.c, c0, half_width, m)
    return QuadraticForm(value=value, bound=nu_hat * norm(v2, "H1") ** 2, nu_hat=nu_hat)


def h1_growth_check(trajectories: Sequence[Trajectory]) -> Dict[str, object]:
    """sup_t |d_x v1~(t)| / (|d_x v0| + |v0|^3) per run and their spread."""
    ratios = []
    for traj in trajectories:
        v0 = traj.states[0]
        scale = norm(spectral_deriv(v0, 1), "L2") + norm(v0, "L2") ** 3
        if scale == 0:
            ratios.append(0.0)
            continue
        peak = max(norm(spectral_deriv(v, 1), "L2") for v in traj.states)
        ratios.append(peak / scale)
    positive = [r for r in ratios if r > 0]
    spread = max(positive) / min(positive) if positive else 1.0
    return {"ratios": ratios, "C_hat": max(ratios) if ratios else 0.0, "spread": spread}


def tail_norm(u: Field, fam_plus: SolitonFamily, x_t: float, sigma: float, t: float, origin: float = 0.0) -> float:
    """|u - phi_{c+}(. - x_t)| in L^2 over x - origin >= sigma t."""
    grid = u.grid
    cut = origin + sigma * t
    if cut >= 0.5 * grid.length:
        raise ValueError(f"sigma t = {sigma * t:.4g} puts the cut {cut:.4g} beyond the domain edge {0.5 * grid.length:.4g}")
    diff = u - profile(fam_plus, grid, center=x_t)
    mask = grid.nodes >= cut
    return math.sqrt(grid.h * float(np.sum(diff.values[mask] ** 2)))
