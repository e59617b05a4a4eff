"""
Lab-frame integration of d_t u + d_x^3 u + 3 d_x(u^p) = 0.

Integrating-factor RK4 in Fourier space: the dispersive part e^{i k^3 t} is
applied exactly, the nonlinear flux is evaluated pseudospectrally with an
optional 2/3 mask, and an optional sponge damps radiation next to the
periodic seam.
"""
import logging
import math
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import fft

from errors import BlowUpError
from grid import Field, Grid, spectral_deriv
from utils import write_csv

logger = logging.getLogger(__name__)

STIFFNESS_GUARD = 50.0
# output spacing in time when sample_every is not configured
SAMPLE_SPACING = 0.05
SNAPSHOT_DTYPE = "<f8"


@dataclass(frozen=True)
class EvolveConfig:
    dt: float
    t_end: float
    p: int = 2
    sample_every: int = 100
    dealias: Optional[bool] = None
    sponge_width: float = 0.0
    sponge_strength: float = 1.0
    blowup: float = 1e6

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if self.t_end < 0:
            raise ValueError(f"final time must be nonnegative, got {self.t_end}")
        if int(self.sample_every) < 1:
            raise ValueError(f"sample_every must be >= 1, got {self.sample_every}")
        if self.p not in (2, 3):
            raise ValueError(f"nonlinearity exponent must be 2 or 3, got {self.p}")
        if self.sponge_width < 0:
            raise ValueError(f"sponge width must be nonnegative, got {self.sponge_width}")

    @property
    def use_dealias(self) -> bool:
        # cubic products alias more severely
        return self.p == 3 if self.dealias is None else bool(self.dealias)

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def check_grid(self, grid: Grid) -> None:
        # the linear part runs on every mode, masked or not
        stiffness = self.dt * grid.k_max ** 3
        if stiffness > STIFFNESS_GUARD:
            raise ValueError(
                f"dt * k_max^3 = {stiffness:.3g} exceeds {STIFFNESS_GUARD:g}; reduce dt or n"
            )


def default_dt(grid: Grid, cap: float = 1e-3) -> float:
    """Largest 'round' step not above cap that satisfies the stiffness guard with margin."""
    limit = 0.8 * STIFFNESS_GUARD / grid.k_max ** 3
    if cap <= limit:
        return cap
    exponent = math.floor(math.log10(limit))
    mantissa = math.floor(limit / 10 ** exponent)
    return mantissa * 10 ** exponent


def default_sample_every(dt: float, spacing: float = SAMPLE_SPACING) -> int:
    """Steps between output samples so that samples lie about `spacing` apart in time."""
    return max(1, int(round(spacing / dt)))


def sponge_profile(grid: Grid, width: float, strength: float) -> np.ndarray:
    """Smooth damping rate, nonzero only within `width` of the periodic seam."""
    if width <= 0:
        return np.zeros(grid.n)
    s = (np.abs(grid.nodes) - (0.5 * grid.length - width)) / width
    s = np.clip(s, 0.0, 1.0)
    return strength * 0.5 * (1.0 - np.cos(math.pi * s))


class IFRK4:
    """Integrating-factor RK4 stepper working on real-FFT coefficients."""

    def __init__(self, grid: Grid, cfg: EvolveConfig):
        cfg.check_grid(grid)
        self.grid = grid
        self.cfg = cfg
        k = grid.wavenumbers
        ik = 1j * k
        k3 = k ** 3
        ik[-1] = 0.0
        k3 = k3.copy()
        k3[-1] = 0.0
        half = np.exp(1j * k3 * 0.5 * cfg.dt)
        self._half = half
        self._full = half * half
        self._flux = -3.0 * ik
        if cfg.use_dealias:
            mask = (np.arange(k.size) <= grid.n // 3).astype(float)
            self._flux = self._flux * mask
        self._sponge = sponge_profile(grid, cfg.sponge_width, cfg.sponge_strength)
        self._has_sponge = bool(np.any(self._sponge))

    def nonlinear(self, uh: np.ndarray) -> np.ndarray:
        u = fft.irfft(uh, n=self.grid.n)
        out = self._flux * fft.rfft(u ** self.cfg.p)
        if self._has_sponge:
            out -= fft.rfft(self._sponge * u)
        return out

    def advance(self, uh: np.ndarray) -> np.ndarray:
        dt = self.cfg.dt
        e, e2 = self._half, self._full
        a = dt * self.nonlinear(uh)
        b = dt * self.nonlinear(e * (uh + 0.5 * a))
        c = dt * self.nonlinear(e * uh + 0.5 * b)
        d = dt * self.nonlinear(e2 * uh + e * c)
        return e2 * uh + (e2 * a + 2.0 * e * (b + c) + d) / 6.0


def _check_state(u: np.ndarray, cfg: EvolveConfig, t: float) -> None:
    if not np.all(np.isfinite(u)):
        raise BlowUpError("non-finite state", time=t)
    peak = float(np.max(np.abs(u)))
    if peak > cfg.blowup:
        raise BlowUpError(f"max|u| = {peak:.3g} exceeds {cfg.blowup:.3g}", time=t)


def step(u: Field, cfg: EvolveConfig) -> Field:
    stepper = IFRK4(u.grid, cfg)
    out = fft.irfft(stepper.advance(fft.rfft(u.values)), n=u.grid.n)
    _check_state(out, cfg, cfg.dt)
    return Field(u.grid, out)


def invariants(u: Field, p: int = 2) -> Tuple[float, float]:
    """(momentum, energy) = (int u^2, int 1/2 u_x^2 - 3/(p+1) u^{p+1})."""
    h = u.grid.h
    ux = spectral_deriv(u, 1).values
    momentum = h * float(np.sum(u.values ** 2))
    energy = h * float(np.sum(0.5 * ux ** 2 - 3.0 / (p + 1) * u.values ** (p + 1)))
    return momentum, energy


@dataclass
class Trajectory:
    p: int
    times: List[float] = field(default_factory=list)
    states: List[Field] = field(default_factory=list)
    momentum: List[float] = field(default_factory=list)
    energy: List[float] = field(default_factory=list)

    def record(self, t: float, u: Field) -> None:
        m, e = invariants(u, self.p)
        self.times.append(t)
        self.states.append(u)
        self.momentum.append(m)
        self.energy.append(e)

    def drift(self) -> Tuple[float, float]:
        """Largest relative deviation of momentum and energy from their initial values."""
        m = np.asarray(self.momentum)
        e = np.asarray(self.energy)
        dm = float(np.max(np.abs(m - m[0]))) / m[0] if m[0] else float(np.max(np.abs(m)))
        de = float(np.max(np.abs(e - e[0]))) / abs(e[0]) if e[0] else float(np.max(np.abs(e)))
        return dm, de

    def to_csv(self, path: str) -> None:
        rows = zip(self.times, self.momentum, self.energy)
        write_csv(path, ["t", "momentum", "energy"], rows)


def evolve(u0: Field, cfg: EvolveConfig) -> Trajectory:
    grid = u0.grid
    stepper = IFRK4(grid, cfg)
    traj = Trajectory(p=cfg.p)
    traj.record(0.0, u0)

    uh = fft.rfft(u0.values)
    total = cfg.steps
    logger.debug("evolve: %d steps of dt=%g on n=%d, L=%g", total, cfg.dt, grid.n, grid.length)
    for i in range(1, total + 1):
        uh = stepper.advance(uh)
        t = i * cfg.dt
        if not np.all(np.isfinite(uh)):
            raise BlowUpError("non-finite state", time=t)
        if i % cfg.sample_every == 0 or i == total:
            u = fft.irfft(uh, n=grid.n)
            _check_state(u, cfg, t)
            traj.record(t, Field(grid, u))
    return traj


# ---- peak tracking ----

def _trig_eval(coeffs: np.ndarray, grid: Grid, x: float) -> float:
    """Evaluate the real trigonometric interpolant with rfft coefficients at x."""
    k = grid.wavenumbers
    phase = np.exp(1j * k * (x - grid.nodes[0]))
    weights = np.full(k.size, 2.0)
    weights[0] = 1.0
    if grid.n % 2 == 0:
        weights[-1] = 1.0
    return float(np.real(np.sum(weights * coeffs * phase))) / grid.n


def peak_position(u: Field, tol: float = 1e-12, max_iter: int = 20) -> float:
    """Location of the maximum of the trigonometric interpolant near the largest sample."""
    grid = u.grid
    k = grid.wavenumbers
    uh = fft.rfft(u.values)
    d1 = 1j * k * uh
    d2 = -(k ** 2) * uh
    d1[-1] = 0.0
    x = float(grid.nodes[int(np.argmax(u.values))])
    for _ in range(max_iter):
        slope = _trig_eval(d1, grid, x)
        curv = _trig_eval(d2, grid, x)
        if curv >= 0:
            break
        dx = -slope / curv
        x += dx
        if abs(dx) < tol:
            break
    return x


# ---- snapshots ----

def write_snapshot(path: str, u: Field, t: float) -> None:
    """Little-endian float64: header (n, L, t) followed by the n samples."""
    header = np.array([u.grid.n, u.grid.length, t], dtype=SNAPSHOT_DTYPE)
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(np.asarray(u.values, dtype=SNAPSHOT_DTYPE).tobytes())


def read_snapshot(path: str) -> Tuple[Field, float]:
    with open(path, "rb") as f:
        raw = f.read()
    n, length, t = struct.unpack("<3d", raw[:24])
    values = np.frombuffer(raw[24:], dtype=SNAPSHOT_DTYPE)
    grid = Grid(int(n), length)
    return Field(grid, values), t
