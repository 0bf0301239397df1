"""
JSON scenario configuration.

Schema (all keys except ``grid`` and ``epsilons`` are optional)::

    {
      "schema": "brlab.config/1",
      "grid": {"n": 1, "h": "1/256", "half_width": 1.0, "height": 1.0},
      "potential": "quartic" | "peierls_nabarro",
      "scenario": {"kind": "constant" | "two-phase" | "layer-trace", "value": 1.0},
      "epsilons": [0.2, 0.1, 0.05],
      "solver": {"method": "newton", "tol": 1e-10, "max_sweeps": 50,
                 "relaxation": 1.9, "newton_iters": 5, "pseudo_time": 64.0},
      "analysis": {
        "centers": [[0.0]],
        "radii": [..] | {"geomspace": [r_min, r_max, count]},
        "eta0": "calibrate" | 1.87,
        "calibration": {"count": 100, "epsilon": 0.0125, "R": 0.2, "h": "1/256"},
        "clearing_R": 0.2,
        "sigma_r": 0.2,
        "balls": [{"center": [0.0], "radius": 0.2}],
        "battery": {"scales": [0.05, 0.1, 0.2], "centers": [[0.0], [0.15]]},
        "decay_disc": {"center": [0.7], "radius": 0.2},
        "variation_constant": 6.4
      },
      "validate": {"hs": ["1/64", "1/128", "1/256"], "epsilon": 0.25},
      "output": "runs/two_phase",
      "seed": 0,
      "workers": 1
    }

``h`` and radii accept numbers or fraction strings such as "1/256".
Validation errors name the offending field.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .geometry import GridSpec, HalfBall, RegionError, build_grid, max_admissible_radius, region_weights
from .potentials import PotentialKind
from .solver import SolveParams

CONFIG_SCHEMA = "brlab.config/1"
SCENARIOS = ("constant", "two-phase", "layer-trace")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is a dotted path into the JSON document."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(where, f"expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        out = float(value)
    elif isinstance(value, str):
        try:
            out = float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError):
            raise ConfigError(where, f"cannot parse {value!r} as a number") from None
    else:
        raise ConfigError(where, f"expected a number, got {type(value).__name__}")
    if not np.isfinite(out):
        raise ConfigError(where, "must be finite")
    return out


def _point(value: Any, n: int, where: str) -> tuple[float, ...]:
    vals = [value] if isinstance(value, (int, float, str)) and not isinstance(value, bool) else value
    if not isinstance(vals, (list, tuple)) or len(vals) != n:
        raise ConfigError(where, f"expected {n} face coordinate(s), got {value!r}")
    return tuple(_number(v, f"{where}[{i}]") for i, v in enumerate(vals))


def _check_keys(section: dict, allowed: set, where: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(where, "expected an object")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}" if where else unknown[0], "unknown key")


@dataclass(frozen=True)
class BallSpec:
    center: tuple[float, ...]
    radius: float

    def region(self) -> HalfBall:
        return HalfBall(self.center, self.radius)


@dataclass(frozen=True)
class AnalysisPlan:
    centers: tuple[tuple[float, ...], ...]
    radii: tuple[float, ...]
    eta0: Union[float, str] = "calibrate"
    calibration_count: int = 100
    calibration_epsilon: float = 0.0125
    calibration_R: float = 0.2
    calibration_h: float = 1 / 256
    clearing_R: float = 0.2
    sigma_r: float = 0.2
    balls: tuple[BallSpec, ...] = ()
    battery_scales: tuple[float, ...] = (0.05, 0.1, 0.2)
    battery_centers: tuple[tuple[float, ...], ...] = ()
    decay_disc: Optional[BallSpec] = None
    variation_constant: float = 6.4


@dataclass(frozen=True)
class ValidatePlan:
    hs: tuple[float, ...] = (1 / 64, 1 / 128, 1 / 256)
    epsilon: float = 0.25


@dataclass(frozen=True)
class ScenarioConfig:
    grid: GridSpec
    potential: PotentialKind
    scenario: str
    value: float
    epsilons: tuple[float, ...]
    solver: SolveParams
    analysis: AnalysisPlan
    validate: ValidatePlan = field(default_factory=ValidatePlan)
    output: Optional[str] = None
    seed: int = 0
    workers: int = 1
    source: Optional[str] = None

    def with_overrides(self, out=None, seed=None, workers=None) -> ScenarioConfig:
        cfg = self
        if out is not None:
            cfg = replace(cfg, output=str(out))
        if seed is not None:
            if seed < 0 or seed >= 2**64:
                raise ConfigError("seed", "must be an unsigned 64-bit integer")
            cfg = replace(cfg, seed=int(seed))
        if workers is not None:
            if workers < 1:
                raise ConfigError("workers", "must be >= 1")
            cfg = replace(cfg, workers=int(workers))
        return cfg

    def to_dict(self) -> dict:
        a = self.analysis
        return {
            "schema": CONFIG_SCHEMA,
            "grid": {
                "n": self.grid.n,
                "h": self.grid.h,
                "half_widths": list(self.grid.half_widths),
                "height": self.grid.height,
            },
            "potential": self.potential.value,
            "scenario": {"kind": self.scenario, "value": self.value},
            "epsilons": list(self.epsilons),
            "solver": {
                "method": self.solver.method,
                "tol": self.solver.tol,
                "max_sweeps": self.solver.max_sweeps,
                "relaxation": self.solver.relaxation,
                "newton_iters": self.solver.newton_iters,
                "pseudo_time": self.solver.pseudo_time,
            },
            "analysis": {
                "centers": [list(c) for c in a.centers],
                "radii": list(a.radii),
                "eta0": a.eta0,
                "calibration": {
                    "count": a.calibration_count,
                    "epsilon": a.calibration_epsilon,
                    "R": a.calibration_R,
                    "h": a.calibration_h,
                },
                "clearing_R": a.clearing_R,
                "sigma_r": a.sigma_r,
                "balls": [{"center": list(b.center), "radius": b.radius} for b in a.balls],
                "battery": {"scales": list(a.battery_scales), "centers": [list(c) for c in a.battery_centers]},
                "decay_disc": None
                if a.decay_disc is None
                else {"center": list(a.decay_disc.center), "radius": a.decay_disc.radius},
                "variation_constant": a.variation_constant,
            },
            "validate": {"hs": list(self.validate.hs), "epsilon": self.validate.epsilon},
            "seed": self.seed,
            "workers": self.workers,
        }


def _parse_grid(raw: Any) -> GridSpec:
    _check_keys(raw, {"n", "h", "half_width", "half_widths", "height"}, "grid")
    n = raw.get("n", 1)
    if n not in (1, 2) or isinstance(n, bool):
        raise ConfigError("grid.n", f"must be 1 or 2, got {n!r}")
    if "h" not in raw:
        raise ConfigError("grid.h", "missing")
    h = _number(raw["h"], "grid.h")
    if h <= 0:
        raise ConfigError("grid.h", "must be positive")
    if "half_widths" in raw:
        widths = _point(raw["half_widths"], n, "grid.half_widths")
    else:
        widths = (_number(raw.get("half_width", 1.0), "grid.half_width"),) * n
    height = _number(raw.get("height", 1.0), "grid.height")
    try:
        spec = GridSpec(n, h, widths, height)
        build_grid(spec)
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from None
    return spec


def _parse_solver(raw: Any) -> SolveParams:
    raw = raw or {}
    allowed = {"method", "tol", "max_sweeps", "relaxation", "newton_iters", "pseudo_time"}
    _check_keys(raw, allowed, "solver")
    kwargs: dict[str, Any] = {}
    for key in ("tol", "relaxation", "pseudo_time"):
        if key in raw:
            kwargs[key] = _number(raw[key], f"solver.{key}")
    for key in ("max_sweeps", "newton_iters"):
        if key in raw:
            v = raw[key]
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"solver.{key}", f"expected an integer, got {v!r}")
            kwargs[key] = v
    if "method" in raw:
        kwargs["method"] = raw["method"]
    try:
        return SolveParams(**kwargs)
    except ValueError as exc:
        raise ConfigError("solver", str(exc)) from None


def _parse_radii(raw: Any, where: str) -> tuple[float, ...]:
    if isinstance(raw, dict):
        _check_keys(raw, {"geomspace", "linspace"}, where)
        key = "geomspace" if "geomspace" in raw else "linspace"
        spec = raw.get(key)
        if not isinstance(spec, list) or len(spec) != 3:
            raise ConfigError(f"{where}.{key}", "expected [start, stop, count]")
        lo, hi = _number(spec[0], f"{where}.{key}[0]"), _number(spec[1], f"{where}.{key}[1]")
        count = spec[2]
        if isinstance(count, bool) or not isinstance(count, int) or count < 1:
            raise ConfigError(f"{where}.{key}[2]", "count must be a positive integer")
        if lo <= 0 or hi < lo:
            raise ConfigError(where, "need 0 < start <= stop")
        vals = np.geomspace(lo, hi, count) if key == "geomspace" else np.linspace(lo, hi, count)
        return tuple(float(v) for v in vals)
    if not isinstance(raw, list) or not raw:
        raise ConfigError(where, "expected a non-empty list or a geomspace/linspace object")
    vals = tuple(_number(v, f"{where}[{i}]") for i, v in enumerate(raw))
    if any(b <= a for a, b in zip(vals, vals[1:])) or vals[0] <= 0:
        raise ConfigError(where, "radii must be positive and strictly increasing")
    return vals


def _parse_ball(raw: Any, n: int, where: str) -> BallSpec:
    _check_keys(raw, {"center", "radius"}, where)
    if "center" not in raw or "radius" not in raw:
        raise ConfigError(where, "needs center and radius")
    radius = _number(raw["radius"], f"{where}.radius")
    if radius <= 0:
        raise ConfigError(f"{where}.radius", "must be positive")
    return BallSpec(_point(raw["center"], n, f"{where}.center"), radius)


def _parse_analysis(raw: Any, spec: GridSpec) -> AnalysisPlan:
    raw = raw or {}
    allowed = {
        "centers", "radii", "eta0", "calibration", "clearing_R", "sigma_r", "balls",
        "battery", "decay_disc", "variation_constant",
    }
    _check_keys(raw, allowed, "analysis")
    n = spec.n
    grid = build_grid(spec)
    centers = tuple(
        _point(c, n, f"analysis.centers[{i}]") for i, c in enumerate(raw.get("centers", [[0.0] * n]))
    )
    if not centers:
        raise ConfigError("analysis.centers", "need at least one center")
    radii = _parse_radii(raw.get("radii", {"geomspace": [4 * spec.h, 0.8, 12]}), "analysis.radii")
    for i, c in enumerate(centers):
        limit = max_admissible_radius(grid, c)
        if radii[-1] > limit + 1e-12:
            raise ConfigError("analysis.radii", f"radius {radii[-1]:g} not admissible at center {i} (max {limit:g})")

    eta0 = raw.get("eta0", "calibrate")
    if eta0 != "calibrate":
        eta0 = _number(eta0, "analysis.eta0")
        if eta0 <= 0:
            raise ConfigError("analysis.eta0", "must be positive or \"calibrate\"")
    cal = raw.get("calibration", {}) or {}
    _check_keys(cal, {"count", "epsilon", "R", "h"}, "analysis.calibration")
    count = cal.get("count", 100)
    if isinstance(count, bool) or not isinstance(count, int) or count < 1:
        raise ConfigError("analysis.calibration.count", "must be a positive integer")
    cal_eps = _number(cal.get("epsilon", 0.0125), "analysis.calibration.epsilon")
    cal_R = _number(cal.get("R", 0.2), "analysis.calibration.R")
    cal_h = _number(cal.get("h", 1 / 256), "analysis.calibration.h")
    if not (cal_eps > 0 and cal_R > 0 and cal_h > 0) or cal_eps / cal_R > 1 / 16 + 1e-12:
        raise ConfigError("analysis.calibration", "need positive values with epsilon/R <= 1/16")

    clearing_R = _number(raw.get("clearing_R", 0.2), "analysis.clearing_R")
    sigma_r = _number(raw.get("sigma_r", 0.2), "analysis.sigma_r")
    if sigma_r < 4 * spec.h - 1e-12:
        raise ConfigError("analysis.sigma_r", f"must be at least 4h = {4 * spec.h:g}")
    if clearing_R <= 0 or clearing_R > min(max_admissible_radius(grid, c) for c in centers) + 1e-12:
        raise ConfigError("analysis.clearing_R", "must be positive and admissible at every center")

    balls = tuple(_parse_ball(b, n, f"analysis.balls[{i}]") for i, b in enumerate(raw.get("balls", [])))
    for i, b in enumerate(balls):
        try:
            region_weights(grid, b.region())
        except RegionError as exc:
            raise ConfigError(f"analysis.balls[{i}]", str(exc)) from None

    battery = raw.get("battery", {}) or {}
    _check_keys(battery, {"scales", "centers"}, "analysis.battery")
    scales = tuple(_number(s, f"analysis.battery.scales[{i}]") for i, s in enumerate(battery.get("scales", [0.05, 0.1, 0.2])))
    if not scales or any(s <= 0 for s in scales):
        raise ConfigError("analysis.battery.scales", "need positive scales")
    bcenters = tuple(
        _point(c, n, f"analysis.battery.centers[{i}]") for i, c in enumerate(battery.get("centers", []))
    ) or centers
    for i, c in enumerate(bcenters):
        for s in scales:
            if any(abs(ci) + 2 * s >= w for ci, w in zip(c, spec.half_widths)) or 2 * s >= spec.height:
                raise ConfigError(f"analysis.battery.centers[{i}]", f"bump of scale {s:g} reaches a Dirichlet face")

    decay = raw.get("decay_disc")
    decay_disc = _parse_ball(decay, n, "analysis.decay_disc") if decay is not None else None
    constant = _number(raw.get("variation_constant", 6.4), "analysis.variation_constant")
    return AnalysisPlan(
        centers=centers,
        radii=radii,
        eta0=eta0,
        calibration_count=count,
        calibration_epsilon=cal_eps,
        calibration_R=cal_R,
        calibration_h=cal_h,
        clearing_R=clearing_R,
        sigma_r=sigma_r,
        balls=balls,
        battery_scales=scales,
        battery_centers=bcenters,
        decay_disc=decay_disc,
        variation_constant=constant,
    )


def _parse_validate(raw: Any) -> ValidatePlan:
    raw = raw or {}
    _check_keys(raw, {"hs", "epsilon"}, "validate")
    hs = tuple(_number(v, f"validate.hs[{i}]") for i, v in enumerate(raw.get("hs", ["1/64", "1/128", "1/256"])))
    if len(hs) < 2 or any(b >= a for a, b in zip(hs, hs[1:])):
        raise ConfigError("validate.hs", "need at least two strictly decreasing spacings")
    eps = _number(raw.get("epsilon", 0.25), "validate.epsilon")
    if eps < 2 * hs[0]:
        raise ConfigError("validate.epsilon", f"violates the epsilon >= 2h guard at h={hs[0]:g}")
    return ValidatePlan(hs, eps)


def parse_config(raw: Any, source: Optional[str] = None) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a JSON object")
    allowed = {"schema", "grid", "potential", "scenario", "epsilons", "solver", "analysis", "validate", "output", "seed", "workers"}
    _check_keys(raw, allowed, "")
    schema = raw.get("schema", CONFIG_SCHEMA)
    if not isinstance(schema, str) or schema.split("/")[0] != "brlab.config" or schema.split("/")[-1].split(".")[0] != "1":
        raise ConfigError("schema", f"unsupported config schema {schema!r} (expected {CONFIG_SCHEMA})")
    if "grid" not in raw:
        raise ConfigError("grid", "missing")
    spec = _parse_grid(raw["grid"])

    try:
        potential = PotentialKind.parse(raw.get("potential", "quartic"))
    except ValueError as exc:
        raise ConfigError("potential", str(exc)) from None

    scen = raw.get("scenario", {"kind": "two-phase"})
    if isinstance(scen, str):
        scen = {"kind": scen}
    _check_keys(scen, {"kind", "value"}, "scenario")
    kind = str(scen.get("kind", "two-phase")).replace("_", "-").lower()
    if kind not in SCENARIOS:
        raise ConfigError("scenario.kind", f"must be one of {', '.join(SCENARIOS)}, got {kind!r}")
    value = _number(scen.get("value", 1.0), "scenario.value")
    if abs(value) > 1:
        raise ConfigError("scenario.value", "must lie in [-1, 1]")

    eps_raw = raw.get("epsilons")
    if not isinstance(eps_raw, list) or not eps_raw:
        raise ConfigError("epsilons", "expected a non-empty list")
    epsilons = tuple(_number(e, f"epsilons[{i}]") for i, e in enumerate(eps_raw))
    for i, e in enumerate(epsilons):
        if e <= 0:
            raise ConfigError(f"epsilons[{i}]", "must be positive")
        if e < 2 * spec.h * (1 - 1e-12):
            raise ConfigError(f"epsilons[{i}]", f"{e:g} violates the epsilon >= 2h guard (h = {spec.h:g})")
    if any(b >= a for a, b in zip(epsilons, epsilons[1:])):
        raise ConfigError("epsilons", "must be strictly decreasing")

    solver = _parse_solver(raw.get("solver"))
    analysis = _parse_analysis(raw.get("analysis"), spec)
    validate = _parse_validate(raw.get("validate"))

    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output", "expected a path string")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    workers = raw.get("workers", 1)
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers", "must be a positive integer")
    return ScenarioConfig(
        grid=spec,
        potential=potential,
        scenario=kind,
        value=value,
        epsilons=epsilons,
        solver=solver,
        analysis=analysis,
        validate=validate,
        output=output,
        seed=seed,
        workers=workers,
        source=source,
    )


def load_config(path: Union[str, os.PathLike]) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(raw, source=str(path))
