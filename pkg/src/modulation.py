"""
Modulated decomposition of a perturbed soliton.

    u(t, x) - v1~(t, x) = phi_{c(t)}(x - x(t)) + v2(t, x - x(t))

(x, c) are fitted at every output sample so that v2 is orthogonal to both
adjoint vectors; the modulation system then gives (xdot - c, cdot) from the
decomposed fields, and the refined speed / gamma track are built on top.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import integrate

from errors import FitError, SingularSystemError
from grid import Field, Grid, WeightSpec, inner, norm, translate
from soliton import KernelBasis, SolitonFamily, dc_profile, kernel_basis, profile
from utils import write_csv, write_json

logger = logging.getLogger(__name__)

LEADING_JACOBIAN = np.array([[1.0, 0.0], [0.0, -1.0]])


@lru_cache(maxsize=64)
def basis_at(p: int, c: float, grid: Grid, window: Optional[float] = None) -> KernelBasis:
    return kernel_basis(SolitonFamily(p, c), grid, 0.0, window)


@lru_cache(maxsize=64)
def dc_zetas(p: int, c: float, grid: Grid, window: Optional[float] = None, rel: float = 1e-4) -> Tuple[Field, Field]:
    """d_c zeta^1, d_c zeta^2 by centered differences in c."""
    dc = rel * c
    hi = basis_at(p, c + dc, grid, window)
    lo = basis_at(p, c - dc, grid, window)
    return (hi.zeta1 - lo.zeta1) / (2 * dc), (hi.zeta2 - lo.zeta2) / (2 * dc)


@dataclass(eq=False)
class FitResult:
    x: float
    c: float
    v2: Field
    residual: float
    iters: int

    def orthogonality(self, p: int, window: Optional[float] = None) -> Tuple[float, float]:
        basis = basis_at(p, self.c, self.v2.grid, window)
        return basis.pair(self.v2, basis.zeta1), basis.pair(self.v2, basis.zeta2)


def _orthogonality_map(w: Field, x: float, c: float, p: int, window: Optional[float]):
    basis = basis_at(p, c, w.grid, window)
    v2 = translate(w, x) - basis.phi
    g = np.array([basis.pair(v2, basis.zeta1), basis.pair(v2, basis.zeta2)])
    return g, v2


def _fd_jacobian(w: Field, x: float, c: float, p: int, window: Optional[float]) -> np.ndarray:
    dx, dc = 1e-6, 1e-6 * c
    gx = _orthogonality_map(w, x + dx, c, p, window)[0] - _orthogonality_map(w, x - dx, c, p, window)[0]
    gc = _orthogonality_map(w, x, c + dc, p, window)[0] - _orthogonality_map(w, x, c - dc, p, window)[0]
    return np.column_stack([gx / (2 * dx), gc / (2 * dc)])


def fit(
    w: Field,
    guess: Tuple[float, float],
    p: int = 2,
    window: Optional[float] = None,
    tol: float = 1e-10,
    max_iter: int = 25,
    refresh_every: int = 5,
    time: Optional[float] = None,
) -> FitResult:
    """Newton solve of <w(. + x) - phi_c, zeta^i_c> = 0, i = 1, 2.

    The Jacobian starts at its base-point value diag(1, -1) and is refreshed by
    finite differences every `refresh_every` iterations.
    """
    x, c = float(guess[0]), float(guess[1])
    if c <= 0:
        raise FitError(f"initial speed guess must be positive, got {c}", time=time)
    g, v2 = _orthogonality_map(w, x, c, p, window)
    jac = LEADING_JACOBIAN
    it = 0
    while float(np.max(np.abs(g))) >= tol:
        it += 1
        if it > max_iter:
            raise FitError(
                f"decomposition lost: Newton did not converge in {max_iter} iterations "
                f"(|G| = {np.max(np.abs(g)):.3g})",
                time=time,
            )
        if it % refresh_every == 0:
            jac = _fd_jacobian(w, x, c, p, window)
        dx, dc = np.linalg.solve(jac, -g)
        x += dx
        c += dc
        if c <= 0:
            raise FitError(f"fitted speed became nonpositive ({c:.3g})", time=time)
        g, v2 = _orthogonality_map(w, x, c, p, window)
        logger.debug("fit iter %d: x=%.12g c=%.12g |G|=%.3g", it, x, c, np.max(np.abs(g)))
    return FitResult(x=x, c=c, v2=v2, residual=float(np.max(np.abs(g))), iters=it)


def split(u: Field, v1_lab: Field, x: float, fam: SolitonFamily) -> Tuple[Field, Field, Field]:
    """(v, v1, v2) in the frame y = x - x(t)."""
    v = translate(u, x) - profile(fam, u.grid)
    v1 = translate(v1_lab, x)
    return v, v1, v - v1


def nonlinear_terms(fam: SolitonFamily, v1: Field, v2: Field, phi: Optional[Field] = None) -> Dict[str, Field]:
    if phi is None:
        phi = profile(fam, v1.grid)
    f, fp = fam.f, fam.fprime
    v = v1 + v2
    n1 = f(phi + v1) - f(phi) - f(v1)
    n2 = f(phi + v) - f(phi + v1) - fp(phi) * v2
    terms = {"N": n1 + n2, "N1": n1, "N2": n2}
    if fam.p == 3:
        terms["N11"] = 9.0 * phi ** 2 * v1
        terms["N12"] = 9.0 * phi * v1 ** 2
        terms["N21"] = 9.0 * phi * v2 * (2.0 * v1 + v2)
        terms["N22"] = 3.0 * v2 * (3.0 * v1 ** 2 + 3.0 * v1 * v2 + v2 ** 2)
    return terms


def modulation_matrix(basis: KernelBasis, dczetas: Tuple[Field, Field], v2: Field) -> np.ndarray:
    pair = basis.pair
    return np.eye(2) - np.array(
        [
            [pair(v2, basis.dzeta1), pair(v2, dczetas[0])],
            [pair(v2, basis.dzeta2), pair(v2, dczetas[1])],
        ]
    )


def _solve_modulation(a_mat: np.ndarray, rhs: np.ndarray, max_cond: float = 1e8) -> np.ndarray:
    cond = float(np.linalg.cond(a_mat))
    if not np.isfinite(cond) or cond > max_cond:
        raise SingularSystemError(f"modulation matrix singular (cond={cond:.3g}); v2 too large")
    if cond > 10.0:
        logger.warning("modulation matrix ill-conditioned: cond=%.3g", cond)
    return np.linalg.solve(a_mat, rhs)


def modulation_rhs(
    fam: SolitonFamily,
    basis: KernelBasis,
    v1: Field,
    v2: Field,
    dczetas: Optional[Tuple[Field, Field]] = None,
) -> Tuple[float, float]:
    """(xdot - c, cdot) from A (c - xdot, cdot)^T = (<N, d_y zeta^1>, <N, d_y zeta^2>)^T."""
    if dczetas is None:
        dczetas = dc_zetas(fam.p, fam.c, v1.grid, basis.window)
    n = nonlinear_terms(fam, v1, v2, basis.phi)["N"]
    rhs = np.array([basis.pair(n, basis.dzeta1), basis.pair(n, basis.dzeta2)])
    c_minus_xdot, cdot = _solve_modulation(modulation_matrix(basis, dczetas, v2), rhs)
    return -float(c_minus_xdot), float(cdot)


def gamma_step(
    fam: SolitonFamily,
    basis: KernelBasis,
    v1: Field,
    v2: Field,
    c: float,
    dczetas: Optional[Tuple[Field, Field]] = None,
) -> float:
    """gamma' from c - gamma' = (1, 0) A^{-1} (<N1 + N21, d_y zeta^i>)."""
    if fam.p != 3:
        raise ValueError("gamma tracking is defined for p = 3 only")
    if dczetas is None:
        dczetas = dc_zetas(fam.p, fam.c, v1.grid, basis.window)
    terms = nonlinear_terms(fam, v1, v2, basis.phi)
    source = terms["N1"] + terms["N21"]
    rhs = np.array([basis.pair(source, basis.dzeta1), basis.pair(source, basis.dzeta2)])
    sol = _solve_modulation(modulation_matrix(basis, dczetas, v2), rhs)
    return c - float(sol[0])


def refined_speed(fam: SolitonFamily, c: float, v1: Field) -> float:
    """c + theta1(c) <v1, phi_c>."""
    fam_c = fam.with_speed(c)
    phi = profile(fam_c, v1.grid)
    theta1 = 1.0 / inner(phi, dc_profile(fam_c, v1.grid))
    return c + theta1 * inner(v1, phi)


def forcing(fam: SolitonFamily, grid: Grid, xdot_minus_c: float, cdot: float) -> Field:
    """l(t) = cdot d_c phi_c - (xdot - c) d_y phi_c in the y-frame."""
    basis = basis_at(fam.p, fam.c, grid)
    return cdot * basis.xi2 - xdot_minus_c * basis.xi1


# ---- tracks ----

@dataclass(eq=False)
class Decomposition:
    t: float
    fam: SolitonFamily
    fit: FitResult
    v: Field
    v1: Field
    v2: Field
    xdot_minus_c: float
    cdot: float


@dataclass
class ModulationTrack:
    p: int
    c0: float
    times: List[float] = field(default_factory=list)
    c: List[float] = field(default_factory=list)
    x: List[float] = field(default_factory=list)
    gamma: List[float] = field(default_factory=list)
    gamma_dot: List[float] = field(default_factory=list)
    refined_c: List[float] = field(default_factory=list)
    xdot_minus_c: List[float] = field(default_factory=list)
    cdot: List[float] = field(default_factory=list)
    residual: List[float] = field(default_factory=list)
    orthogonality: List[Tuple[float, float]] = field(default_factory=list)
    norms: Dict[str, List[float]] = field(default_factory=dict)

    def record_norms(self, **values: float) -> None:
        for key, value in values.items():
            self.norms.setdefault(key, []).append(float(value))

    def series(self, name: str) -> np.ndarray:
        if name in self.norms:
            return np.asarray(self.norms[name])
        return np.asarray(getattr(self, name), dtype=float)

    def max_orthogonality(self) -> float:
        if not self.orthogonality:
            return 0.0
        return float(np.max(np.abs(np.asarray(self.orthogonality))))

    def max_phase_jump(self) -> float:
        """Largest deviation of x between samples from the drift c * dt."""
        if len(self.times) < 2:
            return 0.0
        t, x, c = (np.asarray(s) for s in (self.times, self.x, self.c))
        return float(np.max(np.abs(np.diff(x) - c[:-1] * np.diff(t))))

    def finite_difference_check(self) -> Dict[str, float]:
        """RMS mismatch of the modulation rates against centered differences of the fitted (x, c).

        Each entry is relative to the RMS of the modulation rate itself, over
        the interior samples.
        """
        out = {"cdot": 0.0, "xdot_minus_c": 0.0}
        if len(self.times) < 3:
            return out
        t, x, c = (np.asarray(s, dtype=float) for s in (self.times, self.x, self.c))
        span = t[2:] - t[:-2]
        differences = {
            "cdot": (c[2:] - c[:-2]) / span,
            "xdot_minus_c": (x[2:] - x[:-2]) / span - c[1:-1],
        }
        for name, approx in differences.items():
            model = np.asarray(getattr(self, name), dtype=float)[1:-1]
            scale = float(np.sqrt(np.mean(model ** 2)))
            if scale > 0:
                out[name] = float(np.sqrt(np.mean((approx - model) ** 2))) / scale
        return out

    def total_variation(self, name: str) -> float:
        return float(np.sum(np.abs(np.diff(self.series(name)))))

    def to_csv(self, path: str) -> None:
        gamma = self.gamma if self.gamma else [float("nan")] * len(self.times)
        rows = zip(
            self.times, self.c, self.x, gamma, self.refined_c,
            self.xdot_minus_c, self.cdot, self.residual,
        )
        write_csv(path, ["t", "c", "x", "gamma", "refined_c", "xdot_minus_c", "cdot", "residual"], rows)


def track_run(
    u_states: List[Field],
    v1_states: List[Field],
    times: List[float],
    p: int,
    c0: float,
    x0: float,
    a: float,
    norm_window: Optional[float] = None,
    pair_window: Optional[float] = None,
    on_sample: Optional[Callable[[Decomposition], None]] = None,
) -> ModulationTrack:
    """Fit, split and modulate every output sample, warm-starting from the previous one."""
    track = ModulationTrack(p=p, c0=c0)
    x_prev, c_prev, t_prev = x0, c0, times[0]
    gamma = x0
    gdot_prev = None

    for t, u, v1_lab in zip(times, u_states, v1_states):
        guess = (x_prev + c_prev * (t - t_prev), c_prev)
        result = fit(u - v1_lab, guess, p=p, window=pair_window, time=t)
        fam = SolitonFamily(p, result.c)
        basis = basis_at(p, result.c, u.grid, pair_window)
        dcz = dc_zetas(p, result.c, u.grid, pair_window)
        v, v1, v2 = split(u, v1_lab, result.x, fam)
        xdot_minus_c, cdot = modulation_rhs(fam, basis, v1, v2, dcz)

        track.times.append(t)
        track.c.append(result.c)
        track.x.append(result.x)
        track.residual.append(result.residual)
        track.orthogonality.append((basis.pair(v2, basis.zeta1), basis.pair(v2, basis.zeta2)))
        track.refined_c.append(refined_speed(fam, result.c, v1))
        track.xdot_minus_c.append(xdot_minus_c)
        track.cdot.append(cdot)

        if p == 3:
            gdot = gamma_step(fam, basis, v1, v2, result.c, dcz)
            if gdot_prev is not None:
                gamma += 0.5 * (t - t_prev) * (gdot + gdot_prev)
            track.gamma.append(gamma)
            track.gamma_dot.append(gdot)
            gdot_prev = gdot

        one_sided = WeightSpec(a, 0.0, "one_sided", norm_window)
        track.record_norms(
            v1_L2=norm(v1, "L2"),
            v1_W=norm(v1, "W", one_sided),
            v1_W1=norm(v1, "W1", one_sided),
            v2_L2a=norm(v2, "L2_a", one_sided),
            v2_H1a=norm(v2, "H1_a", one_sided),
            v_L2=norm(v, "L2"),
        )
        if on_sample is not None:
            on_sample(Decomposition(t, fam, result, v, v1, v2, xdot_minus_c, cdot))
        x_prev, c_prev, t_prev = result.x, result.c, t

    return track


def _running_sup(values: np.ndarray) -> np.ndarray:
    return np.maximum.accumulate(values)


def _running_l2(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    return np.sqrt(integrate.cumulative_trapezoid(values ** 2, times, initial=0.0))


def m_quantities(track: ModulationTrack) -> Dict[str, object]:
    """Running M-quantities; each series is nondecreasing in T."""
    t = np.asarray(track.times)
    v1_l2, v1_w1 = track.series("v1_L2"), track.series("v1_W1")
    v2_l2a = track.series("v2_L2a")
    v2_time = v2_l2a if track.p == 2 else track.series("v2_H1a")
    c = np.asarray(track.c)

    series = {
        "M1": _running_sup(v1_l2) + _running_l2(t, v1_w1),
        "M2": _running_sup(v2_l2a) + _running_l2(t, v2_time),
        "Mv": _running_sup(track.series("v_L2") ** 2),
        "Mc": _running_sup(np.abs(c - track.c0)),
        "Mx": _running_sup(np.abs(np.asarray(track.xdot_minus_c))),
    }
    if track.p == 3:
        series["Mgamma"] = _running_sup(np.abs(np.asarray(track.gamma_dot) - c))
    last = "Mx" if track.p == 2 else "Mgamma"
    series["Mtot"] = series["M1"] + series["M2"] + series["Mv"] + series["Mc"] + series[last]

    return {
        "times": t.tolist(),
        "final": {k: float(v[-1]) for k, v in series.items()},
        "series": {k: v.tolist() for k, v in series.items()},
    }


def write_m_report(path: str, report: Dict[str, object]) -> None:
    write_json(path, report)
