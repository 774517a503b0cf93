"""Experiment configuration: one JSON document per run, validated before anything executes."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

SCENARIOS = (
    "fixed_cylinder",
    "collar_family",
    "vortex_family",
    "degenerate_family",
    "half_cylinder_limit",
    "ode_only",
)
ACTIONS = ("circle_on_sphere", "so3_on_sphere")
ODE_FLOWS = ("neumann", "geodesic", "gradient_line")
CHI_KINDS = ("flat_one", "smooth_bump")

SCENARIO_HELP = {
    "fixed_cylinder": "one solve on [-T, T] with constant conformal factor and boundary circles near a fixed point",
    "collar_family": "great-circle necks solved on canonical collars, delta_n = e^{-T_n}",
    "vortex_family": "manufactured gradient-line vortices with twists converging to a non-degenerate limit",
    "degenerate_family": "rotating equator maps with twists shrinking to zero",
    "half_cylinder_limit": "solve with one boundary circle on the fixed set; tracks decay toward it",
    "ode_only": "integrate a limiting neck ODE without any field solve",
}


class ConfigError(ValueError):
    """Raised for any out-of-range or ill-typed configuration field."""


@dataclass(frozen=True)
class GridParams:
    points_per_unit_t: int = 8
    n_theta: int = 16


@dataclass(frozen=True)
class SolverParams:
    step: float = 0.1
    max_iters: int = 20000
    tol: float = 1e-9
    update_connection: bool = False


@dataclass(frozen=True)
class Thresholds:
    tol_sequence: float = 0.05
    kernel_tol: float = 1e-9
    concentration: float = 0.1
    zero_nu: float = 0.05
    infinite_nu: float = 20.0
    fixed_point_tol: float = 1e-2


@dataclass(frozen=True)
class OdeParams:
    flow: str = "neumann"
    kappa: float = 1.0
    beta: tuple[float, ...] = (0.0, 0.0, 1.0)
    start: tuple[float, ...] = (1.0, 0.0, 0.0)
    velocity: tuple[float, ...] = (0.0, 0.0, 1.0)
    s_max: float = 10.0
    h_s: float = 1e-3


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    seed: int = 0
    action: str = "circle_on_sphere"
    center: tuple[float, ...] = (0.0,)
    grid: GridParams = field(default_factory=GridParams)
    solver: SolverParams = field(default_factory=SolverParams)
    thresholds: Thresholds = field(default_factory=Thresholds)
    T_half: float = 8.0
    T_list: tuple[float, ...] = ()
    alpha: tuple[float, ...] = (0.3,)
    lam: float = 0.5
    epsilon: float = 0.05
    perturbation: float = 0.02
    nu: float = 1.0
    kappa: float = 1.0
    twist_base: float = 0.3
    vortex_offset: float = 3.0
    chi_kind: str = "smooth_bump"
    ode: OdeParams = field(default_factory=OdeParams)

    def to_dict(self) -> dict[str, Any]:
        return json.loads(json.dumps(asdict(self)))

    @property
    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _number(doc: dict, key: str, default: float, lo: float = -math.inf, hi: float = math.inf, strict_lo: bool = False) -> float:
    v = doc.get(key, default)
    _require(isinstance(v, (int, float)) and not isinstance(v, bool), f"{key} must be a number, got {v!r}")
    v = float(v)
    _require(math.isfinite(v), f"{key} must be finite")
    ok_lo = v > lo if strict_lo else v >= lo
    _require(ok_lo and v <= hi, f"{key}={v} outside {'(' if strict_lo else '['}{lo}, {hi}]")
    return v


def _integer(doc: dict, key: str, default: int, lo: int, hi: int) -> int:
    v = doc.get(key, default)
    _require(isinstance(v, int) and not isinstance(v, bool), f"{key} must be an integer, got {v!r}")
    _require(lo <= v <= hi, f"{key}={v} outside [{lo}, {hi}]")
    return int(v)


def _vector(doc: dict, key: str, default: tuple[float, ...], length: int | None = None) -> tuple[float, ...]:
    v = doc.get(key, list(default))
    _require(isinstance(v, list) and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v), f"{key} must be a list of numbers")
    _require(all(math.isfinite(float(x)) for x in v), f"{key} entries must be finite")
    if length is not None:
        _require(len(v) == length, f"{key} needs {length} entries, got {len(v)}")
    return tuple(float(x) for x in v)


def _section(doc: dict, key: str) -> dict:
    sub = doc.get(key, {})
    _require(isinstance(sub, dict), f"{key} must be an object")
    return sub


def _check_keys(doc: dict, allowed: set[str], where: str) -> None:
    extra = sorted(set(doc) - allowed)
    _require(not extra, f"unknown field(s) in {where}: {', '.join(extra)}")


def parse_config(doc: dict) -> ExperimentConfig:
    _require(isinstance(doc, dict), "config must be a JSON object")
    _check_keys(doc, {f.name for f in fields(ExperimentConfig)}, "config")
    scenario = doc.get("scenario")
    _require(scenario in SCENARIOS, f"scenario must be one of {SCENARIOS}, got {scenario!r}")
    action = doc.get("action", "circle_on_sphere")
    _require(action in ACTIONS, f"action must be one of {ACTIONS}")
    n_gen = 1 if action == "circle_on_sphere" else 3

    g = _section(doc, "grid")
    _check_keys(g, {f.name for f in fields(GridParams)}, "grid")
    grid = GridParams(_integer(g, "points_per_unit_t", 8, 2, 256), _integer(g, "n_theta", 16, 8, 512))

    s = _section(doc, "solver")
    _check_keys(s, {f.name for f in fields(SolverParams)}, "solver")
    upd = s.get("update_connection", False)
    _require(isinstance(upd, bool), "solver.update_connection must be a boolean")
    solver = SolverParams(
        _number(s, "step", 0.1, 0.0, 1e3, strict_lo=True),
        _integer(s, "max_iters", 20000, 1, 10_000_000),
        _number(s, "tol", 1e-9, 0.0, 1.0, strict_lo=True),
        upd,
    )

    t = _section(doc, "thresholds")
    _check_keys(t, {f.name for f in fields(Thresholds)}, "thresholds")
    thresholds = Thresholds(
        _number(t, "tol_sequence", 0.05, 0.0, 1e6, strict_lo=True),
        _number(t, "kernel_tol", 1e-9, 0.0, 1.0, strict_lo=True),
        _number(t, "concentration", 0.1, 0.0, 1e6, strict_lo=True),
        _number(t, "zero_nu", 0.05, 0.0, 1e6, strict_lo=True),
        _number(t, "infinite_nu", 20.0, 0.0, 1e9, strict_lo=True),
        _number(t, "fixed_point_tol", 1e-2, 0.0, 10.0, strict_lo=True),
    )
    _require(thresholds.zero_nu < thresholds.infinite_nu, "thresholds.zero_nu must be below infinite_nu")

    o = _section(doc, "ode")
    _check_keys(o, {f.name for f in fields(OdeParams)}, "ode")
    flow = o.get("flow", "neumann")
    _require(flow in ODE_FLOWS, f"ode.flow must be one of {ODE_FLOWS}")
    ode = OdeParams(
        flow,
        _number(o, "kappa", 1.0, 0.0, 1e3),
        _vector(o, "beta", (0.0, 0.0, 1.0), 3),
        _vector(o, "start", (1.0, 0.0, 0.0), 3),
        _vector(o, "velocity", (0.0, 0.0, 1.0), 3),
        _number(o, "s_max", 10.0, 0.0, 1e4, strict_lo=True),
        _number(o, "h_s", 1e-3, 0.0, 1.0, strict_lo=True),
    )
    norm = math.sqrt(sum(x * x for x in ode.start))
    _require(abs(norm - 1.0) <= 1e-10, "ode.start must be a unit vector")
    _require(abs(sum(a * b for a, b in zip(ode.start, ode.velocity))) <= 1e-10, "ode.velocity must be tangent at ode.start")

    T_list = _vector(doc, "T_list", ())
    if scenario in ("collar_family", "vortex_family", "degenerate_family"):
        _require(len(T_list) >= 3, f"{scenario} needs a T_list with at least three entries")
        _require(all(x >= 1.0 for x in T_list), "T_list entries must be at least 1")
        _require(all(b > a for a, b in zip(T_list, T_list[1:])), "T_list must be strictly increasing")

    chi = doc.get("chi_kind", "smooth_bump")
    _require(chi in CHI_KINDS, f"chi_kind must be one of {CHI_KINDS}")

    return ExperimentConfig(
        scenario=scenario,
        seed=_integer(doc, "seed", 0, 0, 2**64 - 1),
        action=action,
        center=_vector(doc, "center", (0.0,) * n_gen, n_gen),
        grid=grid,
        solver=solver,
        thresholds=thresholds,
        T_half=_number(doc, "T_half", 8.0, 0.5, 200.0),
        T_list=T_list,
        alpha=_vector(doc, "alpha", (0.3,) if n_gen == 1 else (0.0, 0.0, 0.3), n_gen),
        lam=_number(doc, "lam", 0.5, 0.0, 1e3, strict_lo=True),
        epsilon=_number(doc, "epsilon", 0.05, 0.0, 0.5, strict_lo=True),
        perturbation=_number(doc, "perturbation", 0.02, 0.0, 0.5),
        nu=_number(doc, "nu", 1.0, 0.0, 1e3, strict_lo=True),
        kappa=_number(doc, "kappa", 1.0, 0.0, 1e3, strict_lo=True),
        twist_base=_number(doc, "twist_base", 0.3, -10.0, 10.0),
        vortex_offset=_number(doc, "vortex_offset", 3.0, 1.0, 100.0, strict_lo=True),
        chi_kind=chi,
        ode=ode,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return parse_config(doc)
