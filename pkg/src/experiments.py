"""
Scenario bodies behind the runner subcommands.

Each scenario takes a fully resolved config dict and returns a
ScenarioResult; nothing here writes files except ScenarioResult.write, so
sweep workers hand their results back to a single collector.
"""
import math
import os
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from diagnostics import (
    VirialConfig,
    check_entry,
    h1_growth_check,
    inequality_suite,
    l2_identity_check,
    tail_norm,
    virial_series,
)
from errors import ConfigError, NumericFailure
from evolve import (
    EvolveConfig,
    Trajectory,
    default_dt,
    default_sample_every,
    evolve,
    peak_position,
    read_snapshot,
    write_snapshot,
)
from grid import Field, Grid, WeightSpec, norm, translate
from linop import (
    WeightedOperator,
    decay_rate,
    decay_series,
    eigen,
    free_operator_check,
    resolvent_sweep,
    smoothing_exponent,
)
from modulation import Decomposition, fit, forcing, m_quantities, track_run
from soliton import (
    SolitonFamily,
    biorthogonality_matrix,
    check_generalized_kernel,
    kernel_basis,
    ode_residual,
    profile,
    profile_values,
)
from utils import ensure_dir, write_csv, write_json

SOLITON_TABLE = [(p, c) for p in (2, 3) for c in (0.5, 1.0, 2.0)]
SMOOTHING_CASES = [(0, "L1", 0.25, 0.05), (1, "L1", 0.75, 0.07), (1, "L2", 0.50, 0.05)]


@dataclass
class ScenarioResult:
    kind: str
    summary: Dict[str, Any] = field(default_factory=dict)
    tables: Dict[str, Tuple[List[str], List[Sequence[Any]]]] = field(default_factory=dict)
    documents: Dict[str, Any] = field(default_factory=dict)
    snapshots: Dict[str, Tuple[Field, float]] = field(default_factory=dict)

    def write(self, out_dir: str) -> List[str]:
        ensure_dir(out_dir)
        paths = []
        for name, (header, rows) in self.tables.items():
            path = os.path.join(out_dir, name)
            write_csv(path, header, rows)
            paths.append(path)
        for name, payload in self.documents.items():
            path = os.path.join(out_dir, name)
            write_json(path, payload)
            paths.append(path)
        for name, (u, t) in self.snapshots.items():
            path = os.path.join(out_dir, name)
            write_snapshot(path, u, t)
            paths.append(path)
        return paths


# ---- config helpers ----

def grid_from(cfg: Dict[str, Any]) -> Grid:
    return Grid(int(cfg["grid"]["n"]), float(cfg["grid"]["L"]))


def family_from(cfg: Dict[str, Any]) -> SolitonFamily:
    exp = cfg["experiment"]
    return SolitonFamily(int(exp["p"]), float(exp["c0"]))


def evolve_config(cfg: Dict[str, Any], t_end: Optional[float] = None) -> EvolveConfig:
    ev = cfg["evolve"]
    sp = ev.get("sponge") or {}
    return EvolveConfig(
        dt=float(ev["dt"]),
        t_end=float(ev["t_end"] if t_end is None else t_end),
        p=int(cfg["experiment"]["p"]),
        sample_every=int(ev["sample_every"]),
        dealias=ev.get("dealias"),
        sponge_width=float(sp.get("width", 0.0)),
        sponge_strength=float(sp.get("strength", 1.0)),
    )


def operator_from(cfg: Dict[str, Any], section: str = "linop") -> WeightedOperator:
    """Operator with the section's R, m and scheme; missing keys come from linop."""
    sec = {**cfg["linop"], **cfg.get(section, {})}
    return WeightedOperator(
        family_from(cfg),
        float(cfg["experiment"]["a"]),
        half_width=float(sec["R"]),
        m=int(sec["m"]),
        scheme=sec.get("scheme", "fourier"),
    )


def initial_perturbation(cfg: Dict[str, Any], grid: Grid, center: float) -> Field:
    pert = cfg["perturbation"]
    kind = pert["kind"]
    amp = float(pert.get("amplitude", 0.0))
    at = center + float(pert.get("offset", 0.0))
    if kind == "gaussian":
        width = float(pert.get("width", 1.0))
        return Field.from_function(grid, lambda y: amp * np.exp(-((y / width) ** 2)), at)
    if kind == "profile-bump":
        fam = family_from(cfg)
        return Field.from_function(grid, lambda y: amp * profile_values(fam, y) / fam.alpha, at)
    if kind == "file":
        v0, _ = read_snapshot(pert["path"])
        if v0.grid != grid:
            raise ConfigError([f"perturbation file grid {v0.grid} does not match {grid}"])
        return v0
    raise ConfigError([f"unknown perturbation kind: {kind}"])


def _log_slope(x: Sequence[float], y: Sequence[float]) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def _halving_ratios(values: Sequence[float]) -> List[float]:
    return [a / b if b else float("inf") for a, b in zip(values[:-1], values[1:])]


# ---- spectral scenarios ----

def soliton_check(cfg: Dict[str, Any]) -> ScenarioResult:
    grid = grid_from(cfg)
    rows = []
    for p, c in SOLITON_TABLE:
        fam = SolitonFamily(p, c)
        basis = kernel_basis(fam, grid)
        residuals = check_generalized_kernel(fam, basis)
        biorth = float(np.max(np.abs(biorthogonality_matrix(basis) - np.eye(2))))
        rows.append([
            p, c, ode_residual(fam, grid), basis.theta1, basis.theta2, biorth,
            residuals["L_xi1"], residuals["L_xi2_minus_xi1"],
            residuals["Lstar_zeta1_minus_zeta2"], residuals["Lstar_zeta2"],
        ])
    header = [
        "p", "c", "ode_residual", "theta1", "theta2", "biorth_error",
        "L_xi1", "L_xi2_minus_xi1", "Lstar_zeta1_minus_zeta2", "Lstar_zeta2",
    ]
    table = np.asarray([r[2:] for r in rows], dtype=float)
    summary = {
        "max_ode_residual": float(np.max(table[:, 0])),
        "max_biorth_error": float(np.max(table[:, 3])),
        "max_kernel_residual": float(np.max(table[:, 4:6])),
        "max_adjoint_residual": float(np.max(table[:, 6:8])),
    }
    return ScenarioResult("soliton", summary, {"soliton.csv": (header, rows)})


def spectrum(cfg: Dict[str, Any]) -> ScenarioResult:
    op = operator_from(cfg)
    lin = cfg["linop"]
    tols = {"tol_zero": float(lin["tol_zero"]), "tol_spec": float(lin["tol_spec"])}
    report = eigen(op, **tols)
    summary = dict(report.to_dict())
    summary["free_operator_error"] = free_operator_check(op)
    summary.update(op.kernel_residuals())
    ring_offsets = [report.ring_gap + report.edge_shift - report.essential_floor]
    if lin.get("doubling", False):
        wide = op.enlarged(2)
        doubled = eigen(wide, **tols, count=False)
        summary["zero_count_doubled"] = doubled.zero_count
        summary["ring_gap_doubled"] = doubled.ring_gap
        summary["edge_shift_doubled"] = doubled.edge_shift
        ring_offsets.append(doubled.ring_gap + doubled.edge_shift - doubled.essential_floor)
    # the periodic ring sits below the floor only by the explained edge shift
    summary["ring_offset"] = float(max(abs(x) for x in ring_offsets))
    rows = [(float(lam.real), float(lam.imag)) for lam in report.eigenvalues]
    return ScenarioResult("spectrum", summary, {"spectrum.csv": (["re", "im"], rows)})


def semigroup(cfg: Dict[str, Any]) -> ScenarioResult:
    op = operator_from(cfg, "semigroup")
    sec = cfg["semigroup"]
    width = float(sec["width"])

    def bump(y):
        return np.exp(-((y / width) ** 2))

    w0 = op.sample(bump)
    T, dt = float(sec["T"]), float(sec["dt"])
    report = eigen(op, tol_zero=float(cfg["linop"]["tol_zero"]), tol_spec=float(cfg["linop"]["tol_spec"]))
    rate = decay_rate(op, w0, T, dt)
    times, norms = decay_series(op, w0, T, dt)
    summary = {
        "rate": rate.rate,
        "fit_residual": rate.residual,
        "gap": report.gap,
        "rate_over_gap": rate.rate / report.gap,
        "window": list(rate.window),
    }
    if sec.get("refine", False):
        fine_op = op.refined(2)
        fine = decay_rate(fine_op, fine_op.sample(bump), T, dt)
        summary["rate_refined"] = fine.rate
        summary["refinement_change"] = abs(fine.rate - rate.rate) / rate.rate
    return ScenarioResult("semigroup", summary, {"decay.csv": (["t", "norm_L2a"], list(zip(times, norms)))})


def smoothing(cfg: Dict[str, Any]) -> ScenarioResult:
    op = operator_from(cfg, "smoothing")
    fits, rows = {}, []
    for j, mode, target, tol in SMOOTHING_CASES:
        result = smoothing_exponent(op, j=j, mode=mode)
        key = f"j{j}_{mode}"
        fits[key] = {**result.to_dict(), "target": target, "tolerance": tol}
        rows.append([j, mode, result.rate, target, result.residual])
    summary = {key: value["rate"] for key, value in fits.items()}
    return ScenarioResult(
        "smoothing",
        summary,
        {"smoothing.csv": (["j", "mode", "alpha", "target", "residual"], rows)},
        {"smoothing.json": fits},
    )


def resolvent(cfg: Dict[str, Any]) -> ScenarioResult:
    op = operator_from(cfg, "resolvent")
    sec = cfg["resolvent"]
    re_values = np.linspace(float(sec["re_min"]), float(sec["re_max"]), int(sec["samples"]))
    im = 0.25 * op.essential_floor
    coarse = resolvent_sweep(op, re_values, im)
    peak = max(n for _, n in coarse)
    summary = {"im": im, "max_norm": peak, "finite": bool(np.isfinite(peak))}
    header, rows = ["re", "norm"], [list(r) for r in coarse]
    if sec.get("refine", True):
        fine = resolvent_sweep(op.refined(2), re_values, im)
        fine_peak = max(n for _, n in fine)
        summary["max_norm_refined"] = fine_peak
        summary["refinement_change"] = abs(fine_peak - peak) / peak
        header.append("norm_refined")
        rows = [r + [n] for r, (_, n) in zip(rows, fine)]
    return ScenarioResult("resolvent", summary, {"resolvent.csv": (header, rows)})


# ---- time-domain scenarios ----

def _soliton_offset(cfg: Dict[str, Any], grid: Grid) -> float:
    offset = cfg.get("soliton_offset")
    return -0.25 * grid.length if offset is None else float(offset)


def evolve_run(cfg: Dict[str, Any]) -> ScenarioResult:
    grid = grid_from(cfg)
    fam = family_from(cfg)
    start = _soliton_offset(cfg, grid)
    u0 = profile(fam, grid, start) + initial_perturbation(cfg, grid, start)
    ecfg = evolve_config(cfg)
    traj = evolve(u0, ecfg)
    u_end, t_end = traj.states[-1], traj.times[-1]
    dm, de = traj.drift()
    travelled = peak_position(u_end) - peak_position(u0)
    summary = {
        "momentum_drift": dm,
        "energy_drift": de,
        "peak_speed": travelled / t_end if t_end else 0.0,
        "soliton_error": norm(u_end - profile(fam, grid, start + fam.c * t_end), "L2"),
        "samples": len(traj.times),
    }
    return ScenarioResult(
        "evolve",
        summary,
        {"invariants.csv": (["t", "momentum", "energy"], list(zip(traj.times, traj.momentum, traj.energy)))},
        snapshots={"u_final.bin": (u_end, t_end)},
    )


def stability(cfg: Dict[str, Any]) -> ScenarioResult:
    """Perturbed soliton: decomposition track, M-quantities, orbital and tail measurements."""
    grid = grid_from(cfg)
    fam0 = family_from(cfg)
    p, c0 = fam0.p, fam0.c
    a = float(cfg["experiment"]["a"])
    start = _soliton_offset(cfg, grid)
    window = cfg["weights"].get("window")

    v0 = initial_perturbation(cfg, grid, start)
    ecfg = evolve_config(cfg)
    traj_u = evolve(profile(fam0, grid, start) + v0, ecfg)
    traj_v1 = evolve(v0, ecfg)

    weight = WeightSpec(a, 0.0, "one_sided", window)
    lab_states = dict(zip(traj_u.times, zip(traj_u.states, traj_v1.states)))
    per_sample: Dict[str, List[float]] = {k: [] for k in ("orbital_error", "ubar_L2a", "ell_L2a", "l2_identity", "l2_orthogonality")}

    def on_sample(d: Decomposition) -> None:
        u, v1_lab = lab_states[d.t]
        phi0 = profile(fam0, grid)
        per_sample["orbital_error"].append(norm(d.v + profile(d.fam, grid) - phi0, "L2"))
        per_sample["ubar_L2a"].append(norm(translate(u - v1_lab, d.fit.x), "L2_a", weight))
        per_sample["ell_L2a"].append(norm(forcing(d.fam, grid, d.xdot_minus_c, d.cdot), "L2_a", weight))
        ident = l2_identity_check(u, d.fam, d.v, d.v1, d.fit.x)
        per_sample["l2_identity"].append(ident["identity"])
        per_sample["l2_orthogonality"].append(ident["orthogonality"])

    track = track_run(
        traj_u.states, traj_v1.states, traj_u.times, p, c0, start, a,
        norm_window=window, on_sample=on_sample,
    )

    c_plus = track.refined_c[-1]
    fam_plus = SolitonFamily(p, c_plus)
    sigma = float(cfg["tail"]["sigma"])
    tails = [
        tail_norm(u, fam_plus, x, sigma, t, origin=start)
        for u, x, t in zip(traj_u.states, track.x, track.times)
    ]

    v0_norm = norm(v0, "L2")
    sup_orbital = max(per_sample["orbital_error"])
    v2_l2a = track.series("v2_L2a")
    m_report = m_quantities(track)

    vcfg = cfg["virial"]
    virial_cfg = VirialConfig(
        eps=float(vcfg["eps"]), x0=float(vcfg["x0"]), xtilde=vcfg["xtilde"],
        c1=float(vcfg["c1"]), sigma=float(vcfg["sigma"]), start=start,
    )
    path = {"linear": None, "fitted_x": track.x, "fitted_gamma": track.gamma or None}[virial_cfg.xtilde]
    virial = virial_series(traj_v1, virial_cfg, path=path, strict=False)

    summary = {
        "p": p,
        "c0": c0,
        "v0_L2": v0_norm,
        "c_plus": c_plus,
        "delta_c": abs(c_plus - c0),
        "sup_orbital_error": sup_orbital,
        "orbital_ratio": sup_orbital / math.sqrt(v0_norm) if v0_norm else 0.0,
        "v2_decay_ratio": float(v2_l2a[-1] / np.max(v2_l2a)) if np.max(v2_l2a) > 0 else 0.0,
        "tail_ratio": tails[-1] / tails[0] if tails[0] > 0 else 0.0,
        "refined_speed_tv": track.total_variation("refined_c"),
        "max_fit_residual": max(track.residual),
        "max_orthogonality": track.max_orthogonality(),
        "max_l2_identity": max(per_sample["l2_identity"]),
        "modulation_fd": track.finite_difference_check(),
        "virial_excess": virial.excess(),
        "virial_holds": virial.holds(),
        "M": m_report["final"],
    }
    if p == 3:
        summary["sup_gamma_gap"] = float(np.max(np.abs(np.asarray(track.gamma) - np.asarray(track.x))))

    diag_header = ["t", "orbital_error", "ubar_L2a", "ell_L2a", "tail", "v2_L2a", "l2_identity"]
    diag_rows = list(zip(
        track.times, per_sample["orbital_error"], per_sample["ubar_L2a"],
        per_sample["ell_L2a"], tails, v2_l2a, per_sample["l2_identity"],
    ))
    track_rows = list(zip(
        track.times, track.c, track.x, track.gamma or [float("nan")] * len(track.times),
        track.refined_c, track.xdot_minus_c, track.cdot, track.residual,
    ))
    return ScenarioResult(
        "stability",
        summary,
        {
            "track.csv": (["t", "c", "x", "gamma", "refined_c", "xdot_minus_c", "cdot", "residual"], track_rows),
            "invariants.csv": (["t", "momentum", "energy"], list(zip(traj_u.times, traj_u.momentum, traj_u.energy))),
            "diagnostics.csv": (diag_header, diag_rows),
            "virial.csv": (["t", "I", "D", "ledger"], list(zip(virial.times, virial.I, virial.D, virial.ledger))),
        },
        {"m_quantities.json": m_report},
        {"u_final.bin": (traj_u.states[-1], traj_u.times[-1])},
    )


def _amplitude_config(cfg: Dict[str, Any], amplitude: float) -> Dict[str, Any]:
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in cfg.items()}
    out["perturbation"] = {**cfg["perturbation"], "amplitude": amplitude}
    return out


def _stability_worker(cfg: Dict[str, Any]) -> ScenarioResult:
    return stability(cfg)


def sweep(cfg: Dict[str, Any], jobs: int = 1) -> ScenarioResult:
    """Stability runs over the configured amplitudes and the scaling laws across them."""
    amplitudes = [float(x) for x in cfg["sweep"]["amplitudes"]]
    configs = [_amplitude_config(cfg, amp) for amp in amplitudes]
    if jobs > 1:
        with Pool(processes=min(jobs, len(configs))) as pool:
            runs = pool.map(_stability_worker, configs)
    else:
        runs = [stability(c) for c in configs]

    rows, tables = [], {}
    for i, (amp, run) in enumerate(zip(amplitudes, runs)):
        s = run.summary
        rows.append([
            amp, s["v0_L2"], s["c_plus"], s["delta_c"], s["sup_orbital_error"], s["orbital_ratio"],
            s["refined_speed_tv"], s["v2_decay_ratio"], s["tail_ratio"], s.get("sup_gamma_gap", float("nan")),
        ])
        for name, table in run.tables.items():
            tables[f"run{i}_{name}"] = table
    header = [
        "amplitude", "v0_L2", "c_plus", "delta_c", "sup_orbital_error", "orbital_ratio",
        "refined_speed_tv", "v2_decay_ratio", "tail_ratio", "sup_gamma_gap",
    ]
    tables["sweep.csv"] = (header, rows)

    norms = [r[1] for r in rows]
    orbital = [r[5] for r in rows]
    summary = {
        "amplitudes": amplitudes,
        "delta_c_slope": _log_slope(norms, [r[3] for r in rows]),
        "orbital_ratio_spread": max(orbital) / min(orbital) if min(orbital) > 0 else float("inf"),
        "refined_tv_ratios": _halving_ratios([r[6] for r in rows]),
        "max_v2_decay_ratio": max(r[7] for r in rows),
        "max_tail_ratio": max(r[8] for r in rows),
    }
    if int(cfg["experiment"]["p"]) == 3:
        summary["gamma_gap_ratios"] = _halving_ratios([r[9] for r in rows])
    return ScenarioResult("sweep", summary, tables, {"runs.json": [r.summary for r in runs]})


def virial_run(cfg: Dict[str, Any], sigma: Optional[float] = None, eps: Optional[float] = None) -> Tuple[Trajectory, Any]:
    """v1~ from a centered Gaussian and its virial series along x~ = (c1 + sigma) t."""
    grid = grid_from(cfg)
    vcfg = cfg["virial"]
    amp = float(vcfg["amplitude"])
    v0 = Field.from_function(grid, lambda y: amp * np.exp(-(y ** 2)))
    traj = evolve(v0, evolve_config(cfg, t_end=float(vcfg["t_end"])))
    virial_cfg = VirialConfig(
        eps=float(vcfg["eps"] if eps is None else eps),
        x0=float(vcfg["x0"]),
        c1=float(vcfg["c1"]),
        sigma=float(vcfg["sigma"] if sigma is None else sigma),
    )
    return traj, virial_series(traj, virial_cfg, strict=False)


def inequalities(cfg: Dict[str, Any]) -> ScenarioResult:
    sec = cfg["inequalities"]
    seed = int(cfg["experiment"]["seed"])
    entries = inequality_suite(seed, count=int(sec["count"]), eps=float(sec["eps"]), a=float(cfg["experiment"]["a"]))
    summary = {e["name"]: e["worst_ratio"] for e in entries}
    summary["passed"] = all(e["passed"] for e in entries)
    return ScenarioResult("inequalities", summary, documents={"checks.json": entries})


# ---- acceptance checks ----

def _with(cfg: Dict[str, Any], **sections: Dict[str, Any]) -> Dict[str, Any]:
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in cfg.items()}
    for name, values in sections.items():
        out[name] = {**out.get(name, {}), **values}
    return out


def _for_p(cfg: Dict[str, Any], p: int, **sections: Dict[str, Any]) -> Dict[str, Any]:
    n = 2048 if p == 2 else 4096
    grid = Grid(n, float(cfg["grid"]["L"]))
    dt = default_dt(grid)
    evolve_section = {"dt": dt, "sample_every": default_sample_every(dt)}
    return _with(cfg, experiment={"p": p, "c0": 1.0, "a": 0.5}, grid={"n": n}, evolve=evolve_section, **sections)


def check_soliton(cfg, seed):
    s = soliton_check(_for_p(cfg, 2)).summary
    worst = s["max_ode_residual"] / 1e-9
    yield check_entry("soliton_exactness", worst < 1.0, worst)
    worst = max(s["max_biorth_error"] / 1e-8, s["max_kernel_residual"] / 1e-6)
    yield check_entry("kernel_algebra", worst < 1.0, worst)


def check_traveling_wave(cfg, seed):
    run_cfg = _with(
        _for_p(cfg, 2),
        grid={"n": 2048, "L": 200.0},
        evolve={"dt": 1e-3, "t_end": 10.0, "sample_every": 1000, "sponge": {"width": 0.0}},
        perturbation={"kind": "gaussian", "amplitude": 0.0},
    )
    run_cfg["soliton_offset"] = 0.0
    s = evolve_run(run_cfg).summary
    worst = max(s["soliton_error"] / 1e-6, s["momentum_drift"] / 1e-8, s["energy_drift"] / 1e-8)
    yield check_entry("traveling_wave", worst < 1.0, worst)


def check_spectrum(cfg, seed):
    for p in (2, 3):
        s = spectrum(_with(_for_p(cfg, p), linop={"doubling": True})).summary
        floor = s["essential_floor"]
        ok = s["stable"] and s["zero_count"] == 2 and s["gap"] >= floor - 1e-3
        yield check_entry(f"spectrum_p{p}", ok, (floor - 1e-3) / s["gap"] if s["gap"] > 0 else float("inf"))
        kernel = max(s["A_xi1"], s["A_xi2_minus_xi1"], s["zero_max_abs"] or 0.0)
        yield check_entry(f"spectrum_kernel_p{p}", kernel < 1e-6, kernel / 1e-6)
        ring_ok = s["ring_offset"] < 1e-3 and s["zero_count_doubled"] == 2
        yield check_entry(f"spectrum_doubling_p{p}", ring_ok, s["ring_offset"] / 1e-3)


def check_modulation(cfg, seed, t_end: float = 20.0):
    run_cfg = _for_p(cfg, 2)
    grid = grid_from(run_cfg)
    xs, cs, shift = 3.7, 1.1, 5.3
    w = profile(SolitonFamily(2, cs), grid, xs)
    first = fit(w, (xs + 0.05, 0.98 * cs), p=2)
    moved = fit(translate(w, -shift), (xs + shift + 0.05, 0.98 * cs), p=2)
    err = max(abs(first.x - xs), abs(first.c - cs), abs(moved.x - first.x - shift), abs(moved.c - first.c))
    yield check_entry("fit_round_trip", err < 1e-9, err / 1e-9)
    s = stability(_with(run_cfg, evolve={"t_end": t_end})).summary
    yield check_entry("fit_orthogonality", s["max_orthogonality"] < 1e-8, s["max_orthogonality"] / 1e-8)
    worst = max(s["modulation_fd"].values())
    yield check_entry("modulation_consistency", worst < 0.05, worst / 0.05)


def check_inequalities(cfg, seed):
    yield from inequality_suite(seed, count=int(cfg["inequalities"]["count"]), eps=float(cfg["inequalities"]["eps"]))


def check_semigroup(cfg, seed):
    s = semigroup(_with(_for_p(cfg, 2), semigroup={"refine": True})).summary
    ratio = s["rate_over_gap"]
    yield check_entry("semigroup_decay", 0.9 <= ratio <= 1.1, abs(ratio - 1.0) / 0.1)
    change = s["refinement_change"]
    yield check_entry("semigroup_refinement", change < 0.05, change / 0.05)


def check_smoothing(cfg, seed):
    s = smoothing(_for_p(cfg, 2))
    for key, fit_doc in s.documents["smoothing.json"].items():
        dev = abs(fit_doc["rate"] - fit_doc["target"]) / fit_doc["tolerance"]
        yield check_entry(f"smoothing_{key}", dev <= 1.0, dev)


def check_resolvent(cfg, seed):
    s = resolvent(_with(_for_p(cfg, 2), resolvent={"refine": True})).summary
    change = s["refinement_change"]
    yield check_entry("resolvent_bounded", s["finite"] and change < 0.1, change / 0.1)


def _sweep_entries(cfg, p, jobs):
    s = sweep(_with(_for_p(cfg, p), evolve={"t_end": 80.0}), jobs=jobs).summary
    yield check_entry(f"orbital_scaling_p{p}", s["orbital_ratio_spread"] <= 2.0, s["orbital_ratio_spread"] / 2.0)
    yield check_entry(f"v2_decay_p{p}", s["max_v2_decay_ratio"] < 0.2, s["max_v2_decay_ratio"] / 0.2)
    tv = s["refined_tv_ratios"]
    yield check_entry(f"refined_speed_p{p}", all(3.0 <= r <= 5.0 for r in tv), max(abs(r - 4.0) for r in tv))
    if p == 2:
        slope = s["delta_c_slope"]
        yield check_entry("speed_shift_slope", 0.8 <= slope <= 1.2, abs(slope - 1.0) / 0.2)
        yield check_entry("tail_decay", s["max_tail_ratio"] < 0.2, s["max_tail_ratio"] / 0.2)
    else:
        gaps = s["gamma_gap_ratios"]
        yield check_entry("gamma_gap_cubic", all(6.0 <= r <= 10.0 for r in gaps), max(abs(r - 8.0) / 2.0 for r in gaps))


def check_sweep_p2(cfg, seed, jobs=1):
    yield from _sweep_entries(cfg, 2, jobs)


def check_sweep_p3(cfg, seed, jobs=1):
    yield from _sweep_entries(cfg, 3, jobs)


def check_virial(cfg, seed):
    run_cfg = _for_p(cfg, 2)
    _, series = virial_run(run_cfg, sigma=0.0, eps=0.05)
    ratio = series.excess() / (1e-6 * series.I[0])
    yield check_entry("virial_ledger", series.holds(), max(ratio, 0.0))
    _, front = virial_run(run_cfg, sigma=0.25, eps=0.1)
    yield check_entry("virial_front_decay", front.front_ratio() < 0.05, front.front_ratio() / 0.05)


def check_h1_growth(cfg, seed):
    run_cfg = _for_p(cfg, 3)
    trajs = []
    for amp in (1e-2, 5e-3, 2.5e-3):
        grid = grid_from(run_cfg)
        v0 = Field.from_function(grid, lambda y, amp=amp: amp * np.exp(-(y ** 2)))
        trajs.append(evolve(v0, evolve_config(run_cfg, t_end=float(run_cfg["virial"]["t_end"]))))
    report = h1_growth_check(trajs)
    yield check_entry("h1_growth", report["spread"] < 2.0, report["spread"] / 2.0)


FAST_CHECKS: List[Callable] = [check_soliton, check_traveling_wave, check_spectrum, check_modulation, check_inequalities]
SLOW_CHECKS: List[Callable] = [
    check_semigroup, check_smoothing, check_resolvent, check_sweep_p2, check_sweep_p3, check_virial, check_h1_growth,
]


def run_checks(cfg: Dict[str, Any], full: bool = False, jobs: int = 1) -> ScenarioResult:
    seed = int(cfg["experiment"]["seed"])
    entries = []
    for check in FAST_CHECKS + (SLOW_CHECKS if full else []):
        name = check.__name__
        print(f"Checking: {name}")
        kwargs = {"jobs": jobs} if check in (check_sweep_p2, check_sweep_p3) else {}
        try:
            for entry in check(cfg, seed, **kwargs):
                entry["seed"] = seed
                entries.append(entry)
        except NumericFailure as exc:
            print(f"Failed: {name}: {exc}")
            entries.append(check_entry(name, False, float("inf"), seed))
    summary = {
        "passed": all(e["passed"] for e in entries),
        "failed": [e["name"] for e in entries if not e["passed"]],
        "count": len(entries),
    }
    return ScenarioResult("check", summary, documents={"checks.json": entries})


SCENARIOS: Dict[str, Callable[[Dict[str, Any]], ScenarioResult]] = {
    "soliton": soliton_check,
    "spectrum": spectrum,
    "semigroup": semigroup,
    "smoothing": smoothing,
    "resolvent": resolvent,
    "evolve": evolve_run,
    "stability": stability,
    "inequalities": inequalities,
}
