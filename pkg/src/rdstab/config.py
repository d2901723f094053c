"""Scenario files: YAML schema, validation and object builders.

A scenario bundles the plant description, the measurement, the LTI block,
certification targets and simulation settings.  Numeric entries may be
plain numbers or constant expression strings like ``"1/7"`` or ``"pi/2"``;
spatial coefficients may be expressions in ``xi``.  Errors carry the
offending field path so misconfigurations are quick to locate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .errors import ConfigError, ExpressionError
from .expressions import compile_profile, parse_number
from .reduction import CoupledPlant, OdePlant, TRACE_KINDS
from .simulator import SimulationConfig
from .spectral import (
    SpectralBasis,
    closed_form_basis,
    discretized_basis,
    robin_basis,
)

_PLANT_KEYS = {"theta1", "theta2", "p", "q_tilde", "q_c", "zeta_m", "trace"}
_ODE_KEYS = {"a", "b", "c"}
_CERTIFY_KEYS = {"targets", "epsilon", "alpha_grid", "beta_grid"}
_SIMULATE_KEYS = {"n_sim", "t_end", "dt_out", "method", "w0", "z0", "x0"}
_TOP_KEYS = {"name", "plant", "ode", "certify", "simulate"}
_GRID_KEYS = {"start", "stop", "count"}


def _check_keys(data: dict, allowed: set, path: str):
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}; allowed keys are {sorted(allowed)}")


def _require(data: dict, key: str, path: str):
    if key not in data:
        raise ConfigError(f"{path}.{key}: required field is missing")
    return data[key]


def _number(value, path: str) -> float:
    try:
        return parse_number(value)
    except ExpressionError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _coefficient(value, path: str):
    """A scalar or an expression in xi; returns float or callable."""
    if isinstance(value, str):
        try:
            return compile_profile(value)
        except ExpressionError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    raise ConfigError(f"{path}: expected a number or an expression string")


def _matrix(value, path: str) -> np.ndarray:
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise ConfigError(f"{path}: expected a list of rows")
    rows = []
    for i, row in enumerate(value):
        rows.append([_number(v, f"{path}[{i}][{j}]") for j, v in enumerate(row)])
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise ConfigError(f"{path}: rows have inconsistent lengths {sorted(lengths)}")
    return np.array(rows, dtype=float)


def _vector(value, path: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path}: expected a non-empty list")
    return np.array([_number(v, f"{path}[{i}]") for i, v in enumerate(value)], dtype=float)


def _grid(value, path: str) -> np.ndarray:
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected a mapping with start, stop, count")
    _check_keys(value, _GRID_KEYS, path)
    start = _number(_require(value, "start", path), f"{path}.start")
    stop = _number(_require(value, "stop", path), f"{path}.stop")
    count = _require(value, "count", path)
    if not isinstance(count, int) or count < 1:
        raise ConfigError(f"{path}.count: expected a positive integer")
    if start <= 0 or stop <= 0:
        raise ConfigError(f"{path}: grid endpoints must be positive for log spacing")
    return np.geomspace(start, stop, count)


@dataclass
class ScenarioConfig:
    """Parsed scenario with the original mapping kept for round-tripping."""

    name: str
    theta1: float
    theta2: float
    p: object
    q_tilde: object
    q_c: Optional[float]
    zeta_m: float
    trace_kind: str
    ode: OdePlant
    targets: list
    epsilon: Optional[float]
    alpha_grid: Optional[np.ndarray]
    beta_grid: Optional[np.ndarray]
    sim: SimulationConfig
    w0: object
    z0: object
    x0: np.ndarray
    raw: dict = field(repr=False, default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("scenario root must be a mapping")
        _check_keys(data, _TOP_KEYS, "scenario")
        name = data.get("name", "scenario")
        if not isinstance(name, str):
            raise ConfigError("name: expected a string")

        plant = _require(data, "plant", "scenario")
        if not isinstance(plant, dict):
            raise ConfigError("plant: expected a mapping")
        _check_keys(plant, _PLANT_KEYS, "plant")
        theta1 = _number(_require(plant, "theta1", "plant"), "plant.theta1")
        theta2 = _number(_require(plant, "theta2", "plant"), "plant.theta2")
        for nm, th in (("plant.theta1", theta1), ("plant.theta2", theta2)):
            if not (0.0 <= th <= np.pi / 2 + 1e-12):
                raise ConfigError(f"{nm}: must lie in [0, pi/2], got {th}")
        p = _coefficient(_require(plant, "p", "plant"), "plant.p")
        q_tilde = _coefficient(_require(plant, "q_tilde", "plant"), "plant.q_tilde")
        q_c = None if "q_c" not in plant else _number(plant["q_c"], "plant.q_c")
        zeta_m = _number(_require(plant, "zeta_m", "plant"), "plant.zeta_m")
        if not (0.0 < zeta_m < 1.0):
            raise ConfigError(f"plant.zeta_m: must lie in (0, 1), got {zeta_m}")
        trace_kind = _require(plant, "trace", "plant")
        if trace_kind not in TRACE_KINDS:
            raise ConfigError(f"plant.trace: must be one of {TRACE_KINDS}, got {trace_kind!r}")

        ode_data = _require(data, "ode", "scenario")
        if not isinstance(ode_data, dict):
            raise ConfigError("ode: expected a mapping")
        _check_keys(ode_data, _ODE_KEYS, "ode")
        a = _matrix(_require(ode_data, "a", "ode"), "ode.a")
        b = _vector(_require(ode_data, "b", "ode"), "ode.b")
        c = _vector(_require(ode_data, "c", "ode"), "ode.c")
        try:
            ode = OdePlant(a, b, c)
        except ValueError as exc:
            raise ConfigError(f"ode: {exc}") from exc

        certify = data.get("certify", {})
        if not isinstance(certify, dict):
            raise ConfigError("certify: expected a mapping")
        _check_keys(certify, _CERTIFY_KEYS, "certify")
        targets = []
        for i, tgt in enumerate(certify.get("targets", [])):
            path = f"certify.targets[{i}]"
            if not isinstance(tgt, dict) or set(tgt) != {"n", "eta"}:
                raise ConfigError(f"{path}: expected a mapping with exactly n and eta")
            n = tgt["n"]
            if not isinstance(n, int) or n < 1:
                raise ConfigError(f"{path}.n: expected a positive integer")
            eta = _number(tgt["eta"], f"{path}.eta")
            if eta < 0:
                raise ConfigError(f"{path}.eta: must be nonnegative")
            targets.append((n, eta))
        epsilon = None if "epsilon" not in certify else _number(certify["epsilon"], "certify.epsilon")
        if epsilon is not None and not (0 < epsilon <= 0.5):
            raise ConfigError(f"certify.epsilon: must lie in (0, 1/2], got {epsilon}")
        if trace_kind == "derivative" and targets and epsilon is None:
            raise ConfigError("certify.epsilon: required for derivative-trace certification")
        alpha_grid = None if "alpha_grid" not in certify else _grid(certify["alpha_grid"], "certify.alpha_grid")
        beta_grid = None if "beta_grid" not in certify else _grid(certify["beta_grid"], "certify.beta_grid")

        sim_data = data.get("simulate", {})
        if not isinstance(sim_data, dict):
            raise ConfigError("simulate: expected a mapping")
        _check_keys(sim_data, _SIMULATE_KEYS, "simulate")
        sim_kwargs = {}
        if "n_sim" in sim_data:
            if not isinstance(sim_data["n_sim"], int) or sim_data["n_sim"] < 1:
                raise ConfigError("simulate.n_sim: expected a positive integer")
            sim_kwargs["n_sim"] = sim_data["n_sim"]
        for key in ("t_end", "dt_out"):
            if key in sim_data:
                sim_kwargs[key] = _number(sim_data[key], f"simulate.{key}")
        if "method" in sim_data:
            sim_kwargs["method"] = sim_data["method"]
        try:
            sim = SimulationConfig(**sim_kwargs)
        except ValueError as exc:
            raise ConfigError(f"simulate: {exc}") from exc

        w0 = z0 = None
        if "w0" in sim_data and "z0" in sim_data:
            raise ConfigError("simulate: give only one of w0 (lifted) and z0 (physical)")
        if "w0" in sim_data:
            w0 = _profile_or_vector(sim_data["w0"], "simulate.w0")
        if "z0" in sim_data:
            z0 = _coefficient(sim_data["z0"], "simulate.z0")
            if not callable(z0):
                raise ConfigError("simulate.z0: expected an expression in xi")
        x0 = np.zeros(ode.dim)
        if "x0" in sim_data:
            x0 = _vector(sim_data["x0"], "simulate.x0")
            if len(x0) != ode.dim:
                raise ConfigError(f"simulate.x0: expected length {ode.dim}, got {len(x0)}")

        return cls(
            name=name, theta1=theta1, theta2=theta2, p=p, q_tilde=q_tilde,
            q_c=q_c, zeta_m=zeta_m, trace_kind=trace_kind, ode=ode,
            targets=targets, epsilon=epsilon,
            alpha_grid=alpha_grid, beta_grid=beta_grid,
            sim=sim, w0=w0, z0=z0, x0=x0, raw=data,
        )

    def to_dict(self) -> dict:
        return self.raw


def _profile_or_vector(value, path: str):
    if isinstance(value, list):
        return _vector(value, path)
    prof = _coefficient(value, path)
    if not callable(prof):
        raise ConfigError(f"{path}: expected an expression in xi or a coefficient list")
    return prof


def load_scenario(path) -> ScenarioConfig:
    """Read and validate a scenario file."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: invalid YAML{where}: {getattr(exc, 'problem', exc)}") from exc
    if data is None:
        raise ConfigError(f"{path}: file is empty")
    return ScenarioConfig.from_dict(data)


def build_plant(cfg: ScenarioConfig) -> CoupledPlant:
    """Coupled plant object for a scenario."""
    try:
        return CoupledPlant(
            theta1=cfg.theta1, theta2=cfg.theta2, p=cfg.p, q_tilde=cfg.q_tilde,
            zeta_m=cfg.zeta_m, trace_kind=cfg.trace_kind, ode=cfg.ode, q_c=cfg.q_c,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_basis(
    plant: CoupledPlant, n_max: int, method: str = "auto", grid_size: int = 8192
) -> SpectralBasis:
    """Basis for the plant's shifted operator by the requested route.

    "auto" picks the cheapest exact route: closed-form for constant
    coefficients with pure Dirichlet/Neumann ends, the root solver for
    other constant-coefficient angles, the grid eigensolver otherwise.
    """
    problem = plant.problem
    if method == "auto":
        if problem.is_constant:
            try:
                return closed_form_basis(problem, n_max)
            except ValueError:
                return robin_basis(problem, n_max)
        return discretized_basis(problem, n_max, grid_size=grid_size)
    if method == "closed-form":
        return closed_form_basis(problem, n_max)
    if method == "robin":
        return robin_basis(problem, n_max)
    if method == "discretized":
        return discretized_basis(problem, n_max, grid_size=grid_size)
    raise ConfigError(f"unknown basis method {method!r}")
