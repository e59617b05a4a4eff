import os

from dotenv import load_dotenv

load_dotenv()

# thread caps must be in place before numpy loads its BLAS
_threads = os.environ.get("SOLISTAB_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[_var] = _threads

import argparse
import copy
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import yaml
from jinja2 import Environment, FileSystemLoader

from db import connect, init_db, insert_run
from diagnostics import EPS_CAP, XTILDE_KINDS
from errors import CheckFailure, ConfigError, NumericFailure
from evolve import STIFFNESS_GUARD, default_dt, default_sample_every
from experiments import SCENARIOS, ScenarioResult, run_checks, sweep
from grid import Grid
from utils import VERSION, config_hash, ensure_dir, now_iso, write_json

COMMANDS = (
    "soliton", "spectrum", "semigroup", "smoothing", "resolvent",
    "evolve", "stability", "sweep", "check", "inequalities",
)
KIND_ALIASES = {
    "soliton-check": "soliton",
    "resolvent-sweep": "resolvent",
    "inequality-suite": "inequalities",
}
PERTURBATION_KINDS = ("gaussian", "profile-bump", "file")
SCHEMES = ("fourier", "fd4")

DEFAULTS: Dict[str, Any] = {
    "project": {"name": "solistab"},
    "storage": {"db_path": "data/runs.sqlite", "out_dir": "out"},
    "experiment": {"kind": "stability", "p": 2, "c0": 1.0, "a": 0.5, "seed": 0},
    "grid": {"n": None, "L": 200.0},
    "evolve": {
        "dt": None,
        "t_end": 80.0,
        "sample_every": None,
        "dealias": None,
        "sponge": {"width": 30.0, "strength": 5.0},
    },
    "perturbation": {"kind": "gaussian", "amplitude": 1e-2, "width": 1.0, "offset": 0.0, "path": None},
    "soliton_offset": None,
    "weights": {"window": 25.0},
    "linop": {"R": 60.0, "m": 800, "scheme": "fourier", "tol_zero": 1e-6, "tol_spec": 1e-3, "doubling": True},
    "semigroup": {"R": 40.0, "m": 800, "T": 40.0, "dt": 0.5, "width": 1.0, "refine": True},
    "smoothing": {"R": 12.0, "m": 1024},
    "resolvent": {"R": 40.0, "m": 800, "re_min": -20.0, "re_max": 20.0, "samples": 41, "refine": True},
    "sweep": {"amplitudes": [1e-2, 5e-3, 2.5e-3]},
    "virial": {"eps": 0.05, "x0": 0.0, "xtilde": "linear", "c1": 0.5, "sigma": 0.0, "t_end": 50.0, "amplitude": 1e-2},
    "tail": {"sigma": 0.5},
    "inequalities": {"count": 100, "eps": 0.1},
}


def load_config(path: str) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return yaml.safe_load(f) or {}


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def apply_flags(config: Dict[str, Any], args: argparse.Namespace) -> Dict[str, Any]:
    config = copy.deepcopy(config)
    exp = config["experiment"]
    if args.command:
        exp["kind"] = args.command
    exp["kind"] = KIND_ALIASES.get(exp["kind"], exp["kind"])
    for flag, key in (("p", "p"), ("c0", "c0"), ("a", "a"), ("seed", "seed")):
        value = getattr(args, flag, None)
        if value is not None:
            exp[key] = value
    if args.amplitude is not None:
        config["perturbation"]["amplitude"] = args.amplitude
    if args.t_end is not None:
        config["evolve"]["t_end"] = args.t_end
    if args.out is not None:
        config["storage"]["out_dir"] = args.out
    return config


def resolve(config: Dict[str, Any]) -> Dict[str, Any]:
    """Fill the p-dependent defaults so the stored snapshot is complete."""
    config = copy.deepcopy(config)
    p = config["experiment"]["p"]
    grid = config["grid"]
    if grid.get("n") is None:
        grid["n"] = 2048 if p == 2 else 4096
    if config.get("soliton_offset") is None:
        config["soliton_offset"] = -0.25 * float(grid["L"])
    ev = config["evolve"]
    if ev.get("dt") is None and p in (2, 3) and _is_power_of_two(grid["n"]) and float(grid["L"]) > 0:
        ev["dt"] = default_dt(Grid(int(grid["n"]), float(grid["L"])))
    if ev.get("sample_every") is None and isinstance(ev.get("dt"), (int, float)) and ev["dt"] > 0:
        ev["sample_every"] = default_sample_every(float(ev["dt"]))
    return config


def _is_power_of_two(n: Any) -> bool:
    return isinstance(n, int) and n >= 16 and not n & (n - 1)


def validate(config: Dict[str, Any]) -> List[str]:
    errors: List[str] = []
    exp = config.get("experiment", {})
    kind = KIND_ALIASES.get(exp.get("kind"), exp.get("kind"))
    if kind not in COMMANDS:
        errors.append(f"unknown experiment kind: {exp.get('kind')}")

    p, c0, a = exp.get("p"), exp.get("c0"), exp.get("a")
    if p not in (2, 3):
        errors.append(f"nonlinearity exponent p must be 2 or 3, got {p}")
    if not isinstance(c0, (int, float)) or c0 <= 0:
        errors.append(f"soliton speed c0 must be positive, got {c0}")
    elif not isinstance(a, (int, float)) or a <= 0:
        errors.append(f"weight rate must satisfy a > 0, got {a}")
    elif a >= math.sqrt(c0):
        errors.append(f"weight rate must satisfy a < √c (a={a}, √c0={math.sqrt(c0):.6g})")

    grid = config.get("grid", {})
    n, length = grid.get("n"), grid.get("L")
    if not _is_power_of_two(n):
        errors.append(f"grid size n must be a power of two >= 16, got {n}")
    if not isinstance(length, (int, float)) or length <= 0:
        errors.append(f"domain length L must be positive, got {length}")
        length = None

    ev = config.get("evolve", {})
    dt, t_end = ev.get("dt"), ev.get("t_end")
    if not isinstance(dt, (int, float)) or dt <= 0:
        errors.append(f"time step dt must be positive, got {dt}")
    elif _is_power_of_two(n) and length:
        k_max = math.pi * n / length
        if dt * k_max ** 3 > STIFFNESS_GUARD:
            errors.append(f"dt * k_max^3 = {dt * k_max ** 3:.3g} exceeds {STIFFNESS_GUARD:g}")
    if not isinstance(t_end, (int, float)) or t_end < 0:
        errors.append(f"final time t_end must be nonnegative, got {t_end}")
    if not isinstance(ev.get("sample_every"), int) or ev["sample_every"] < 1:
        errors.append(f"sample_every must be an integer >= 1, got {ev.get('sample_every')}")
    sponge = ev.get("sponge") or {}
    if length and not 0 <= sponge.get("width", 0.0) < 0.5 * length:
        errors.append(f"sponge width must lie in [0, L/2), got {sponge.get('width')}")

    pert = config.get("perturbation", {})
    if pert.get("kind") not in PERTURBATION_KINDS:
        errors.append(f"unknown perturbation kind: {pert.get('kind')}")
    if not isinstance(pert.get("amplitude"), (int, float)) or pert["amplitude"] < 0:
        errors.append(f"perturbation amplitude must be nonnegative, got {pert.get('amplitude')}")
    if pert.get("kind") == "gaussian" and not pert.get("width", 0) > 0:
        errors.append(f"gaussian width must be positive, got {pert.get('width')}")
    if pert.get("kind") == "file" and not (pert.get("path") and os.path.exists(pert["path"])):
        errors.append(f"perturbation file does not exist: {pert.get('path')}")

    window = config.get("weights", {}).get("window")
    if window is not None and length and not 0 < window <= 0.5 * length:
        errors.append(f"weight window must lie in (0, L/2], got {window}")

    offset = config.get("soliton_offset")
    if kind in ("evolve", "stability", "sweep") and length and isinstance(c0, (int, float)) and c0 > 0:
        start = -0.25 * length if offset is None else offset
        end = start + c0 * (t_end or 0.0)
        edge = 0.5 * length - sponge.get("width", 0.0)
        if not -edge < start < edge or end >= edge:
            errors.append(f"soliton path [{start:.4g}, {end:.4g}] leaves the undamped domain (|x| < {edge:.4g})")

    sigma = config.get("tail", {}).get("sigma")
    if isinstance(c0, (int, float)) and not (isinstance(sigma, (int, float)) and 0 < sigma < c0):
        errors.append(f"tail sigma must lie in (0, c0), got {sigma}")

    for section in ("linop", "smoothing", "semigroup", "resolvent"):
        # sections without their own R, m or scheme use the linop ones
        sec = {**config.get("linop", {}), **config.get(section, {})}
        if not sec.get("R", 0) > 0:
            errors.append(f"{section}.R must be positive, got {sec.get('R')}")
        m = sec.get("m")
        scheme = sec.get("scheme", "fourier")
        if scheme not in SCHEMES:
            errors.append(f"unknown {section} scheme: {scheme}")
        if not isinstance(m, int) or m < 16 or (scheme == "fourier" and m % 2):
            errors.append(f"{section}.m must be an even integer >= 16, got {m}")

    vir = config.get("virial", {})
    if not 0 < vir.get("eps", 0) <= EPS_CAP:
        errors.append(f"virial eps must lie in (0, {EPS_CAP}], got {vir.get('eps')}")
    if not vir.get("c1", 0) > 0:
        errors.append(f"virial c1 must be positive, got {vir.get('c1')}")
    if vir.get("xtilde") not in XTILDE_KINDS:
        errors.append(f"unknown virial reference path: {vir.get('xtilde')}")
    elif vir["xtilde"] == "fitted_gamma" and p != 3:
        errors.append("virial reference path fitted_gamma needs p = 3")

    amps = config.get("sweep", {}).get("amplitudes") or []
    if kind == "sweep" and (len(amps) < 2 or any(x <= 0 for x in amps)):
        errors.append(f"sweep needs at least two positive amplitudes, got {amps}")
    return errors


@dataclass
class RunRecord:
    kind: str
    config: Dict[str, Any]
    config_hash: str
    version: str
    seed: int
    wall_time: float
    summary: Dict[str, Any]
    artifacts: List[str] = field(default_factory=list)
    created_at: str = field(default_factory=now_iso)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def render_summary(record: RunRecord, repo_root: str) -> str:
    env = Environment(loader=FileSystemLoader(os.path.join(repo_root, "template")))
    template = env.get_template("summary.md")
    return template.render(record=record, summary=record.summary, config=record.config)


def execute(config: Dict[str, Any], jobs: int = 1, full: bool = False) -> ScenarioResult:
    kind = config["experiment"]["kind"]
    if kind == "sweep":
        return sweep(config, jobs=jobs)
    if kind == "check":
        return run_checks(config, full=full, jobs=jobs)
    return SCENARIOS[kind](config)


def run(config: Dict[str, Any], repo_root: str, jobs: int = 1, full: bool = False) -> RunRecord:
    """Execute the configured scenario, write its artifacts and return the record."""
    errors = validate(config)
    if errors:
        raise ConfigError(errors)
    out_dir = ensure_dir(config["storage"]["out_dir"])
    start = time.monotonic()
    result = execute(config, jobs=jobs, full=full)
    artifacts = result.write(out_dir)
    record = RunRecord(
        kind=result.kind,
        config=config,
        config_hash=config_hash({k: v for k, v in config.items() if k != "storage"}),
        version=VERSION,
        seed=int(config["experiment"]["seed"]),
        wall_time=time.monotonic() - start,
        summary=result.summary,
    )
    summary_path = os.path.join(out_dir, "summary.json")
    markdown_path = os.path.join(out_dir, "summary.md")
    record.artifacts = artifacts + [summary_path, markdown_path]
    write_json(summary_path, record.to_dict())
    with open(markdown_path, "w", encoding="utf-8") as f:
        f.write(render_summary(record, repo_root))
    return record


def assert_checks(record: RunRecord) -> None:
    if record.kind == "check" and not record.summary["passed"]:
        raise CheckFailure("failed checks: " + ", ".join(record.summary["failed"]))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="run.py", description="Solitary-wave stability experiments.")
    parser.add_argument("command", nargs="?", choices=COMMANDS, help="scenario to run (default: experiment.kind)")
    parser.add_argument("--config", help="path to config.yaml")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--p", type=int)
    parser.add_argument("--c0", type=float)
    parser.add_argument("--a", type=float)
    parser.add_argument("--amplitude", type=float)
    parser.add_argument("--t-end", dest="t_end", type=float)
    parser.add_argument("--full", action="store_true", help="check: include the slow desk-scale checks")
    parser.add_argument("--verbose", "-v", action="count", default=0)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    repo_root = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
    config_path = args.config or os.path.join(repo_root, "config.yaml")
    if args.verbose:
        print(f"Config: {config_path}")

    try:
        user = load_config(config_path) if os.path.exists(config_path) else {}
        config = resolve(apply_flags(deep_merge(DEFAULTS, user), args))
    except (OSError, yaml.YAMLError, KeyError, TypeError, ValueError) as e:
        print(f"Config error: {e}")
        return 2

    db_path = os.environ.get("SOLISTAB_DB_PATH") or config["storage"]["db_path"]
    if not os.path.isabs(db_path):
        db_path = os.path.join(repo_root, db_path)
    if not os.path.isabs(config["storage"]["out_dir"]):
        config["storage"]["out_dir"] = os.path.join(repo_root, config["storage"]["out_dir"])

    errors = validate(config)
    if errors:
        for message in errors:
            print(f"Config error: {message}")
        return 2

    exp = config["experiment"]
    print(f"Running: {exp['kind']} (p={exp['p']}, c0={exp['c0']})")
    try:
        record = run(config, repo_root, jobs=max(1, args.jobs), full=args.full)
    except ConfigError as e:
        for message in e.messages:
            print(f"Config error: {message}")
        return 2
    except NumericFailure as e:
        stamp = "" if e.time is None else f" at t={e.time:.6g}"
        print(f"Failed: {exp['kind']}{stamp}: {e}")
        return 3

    ensure_dir(os.path.dirname(db_path))
    conn = connect(db_path)
    init_db(conn)
    run_row = record.to_dict()
    if not insert_run(conn, run_row):
        print(f"Already recorded: {record.config_hash[:12]}")
    conn.close()

    print(f"Done: {record.kind} in {record.wall_time:.1f}s")
    print(f"Summary written: {os.path.join(config['storage']['out_dir'], 'summary.json')}")

    try:
        assert_checks(record)
    except CheckFailure as e:
        print(f"Checks failed: {e}")
        return 4
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
