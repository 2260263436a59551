"""Packaged tracking scenarios and the JSON run-description format.

Two built-ins reproduce the published experiments: a single robot whose
tracking goal blends smoothly from one moving object to another, and a
two-robot team tracking two objects under a maximum inter-agent distance
barrier.  Object trajectories are degree-3 polynomial reconstructions
through the published start points (only the starts and qualitative shapes
are published); success thresholds are quantitative stand-ins recorded in
the scenario itself.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import ConfigError
from .objectives import BarrierSum, QuadraticTracking, SwitchingBlend
from .paths import PolynomialPath, Waypoint, fit_polynomial_path
from .planner import GainProfile, design_gains
from .plants import ParallelPlants, integrator_plant, wmr_plant
from .sim import (BoundReport, ImplicitPlanningController, SimConfig, SimTrace,
                  check_bound, integrate)

_DEFAULT_SIM = {"t0": 0.0, "t_end": 20.0, "rtol": 1e-8, "atol": 1e-10,
                "max_step": 0.01, "sample_interval": 0.01}


@dataclass(frozen=True)
class ScenarioSpec:
    """Fully explicit, JSON-serializable description of one run."""

    data: dict[str, Any]

    def __getitem__(self, key):
        return self.data[key]

    def get(self, key, default=None):
        return self.data.get(key, default)

    @property
    def name(self) -> str:
        return self.data.get("name", "custom")

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.data, indent=indent, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSpec":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ConfigError("scenario document must be a JSON object")
        return cls(data)

    def override(self, dotted_key: str, value) -> "ScenarioSpec":
        """Return a copy with a dotted-path key replaced."""
        data = copy.deepcopy(self.data)
        node = data
        parts = dotted_key.split(".")
        for part in parts[:-1]:
            if isinstance(node, list):
                node = node[int(part)]
            elif part in node:
                node = node[part]
            else:
                node[part] = {}
                node = node[part]
        leaf = parts[-1]
        if isinstance(node, list):
            node[int(leaf)] = value
        else:
            node[leaf] = value
        return ScenarioSpec(data)

    # -- builders -------------------------------------------------------------

    def build_plant(self):
        plant_cfg = self.data.get("plant", {})
        kind = plant_cfg.get("kind")
        if kind == "integrator":
            return integrator_plant(int(plant_cfg.get("dim", 2)))
        if kind == "wmr":
            wmr = self.data.get("wmr", {})
            eps = float(wmr.get("singularity_epsilon", 1e-6))
            agents = int(plant_cfg.get("agents", 1))
            plants = [wmr_plant(eps) for _ in range(agents)]
            return plants[0] if agents == 1 else ParallelPlants(*plants)
        raise ConfigError(f"unknown plant kind {kind!r}")

    def build_objective(self):
        obj = self.data.get("objective", {})
        kind = obj.get("kind")
        order = int(obj.get("max_partial_order", 4))
        if kind == "quadratic_tracking":
            return QuadraticTracking(_path(obj["path"]), max_partial_order=order)
        if kind == "switching_blend":
            return SwitchingBlend(_path(obj["path1"]), _path(obj["path2"]),
                                  center=float(obj["switch_center"]),
                                  width=float(obj["switch_width"]),
                                  max_partial_order=order)
        if kind == "barrier_sum":
            return BarrierSum(_path(obj["path1"]), _path(obj["path2"]),
                              max_sq_distance=float(obj["max_sq_distance"]),
                              gain=float(obj["gain"]), max_partial_order=order)
        raise ConfigError(f"unknown objective kind {kind!r}")

    def build_gains(self) -> GainProfile:
        poles = [_pole(p) for p in self.data.get("gains", {}).get("poles", [])]
        if not poles:
            raise ConfigError("gains.poles missing")
        m = self.build_plant().output_dim
        return design_gains(poles, m)

    def build_sim_config(self) -> SimConfig:
        sim = dict(_DEFAULT_SIM)
        sim.update(self.data.get("sim", {}))
        return SimConfig(**sim)

    def initial_state(self):
        plant_cfg = self.data.get("plant", {})
        init = self.data.get("initial", {})
        y0 = np.asarray(init.get("y"), dtype=float).ravel()
        if plant_cfg.get("kind") == "integrator":
            return y0, np.zeros(0)
        wmr = self.data.get("wmr", {})
        agents = int(plant_cfg.get("agents", 1))
        headings = np.atleast_1d(np.asarray(wmr.get("heading_init"), dtype=float))
        speeds = np.atleast_1d(np.asarray(wmr.get("u1_init"), dtype=float))
        if headings.shape[0] != agents or speeds.shape[0] != agents:
            raise ConfigError("wmr.heading_init / wmr.u1_init must list one value per agent")
        x = np.concatenate([[y0[2 * i], y0[2 * i + 1], headings[i]]
                            for i in range(agents)])
        return x, speeds.astype(float)


def _path(coeffs) -> PolynomialPath:
    return PolynomialPath(np.asarray(coeffs, dtype=float))


def _pole(p) -> complex:
    if isinstance(p, (list, tuple)):
        return complex(p[0], p[1])
    return complex(p)


def _hermite(p0, v0, p1, v1, t1: float) -> list[list[float]]:
    path = fit_polynomial_path([Waypoint(0.0, p0, v0), Waypoint(t1, p1, v1)])
    return path.coefficients.tolist()


def scenario_switching() -> ScenarioSpec:
    """Single WMR switching its tracking goal between two moving objects.

    Published parameters: switch center a = 10, width b = 1.5, object
    starts (-5,-5) and (5,-3), agent start (-5,4), horizon 20 s.  Object
    paths beyond the starts are reconstructions; the agent must be within
    0.1 of object 1 over [4,5] s and of object 2 over [16,20] s.
    """
    path1 = _hermite([-5.0, -5.0], [0.9, 0.35], [9.5, 0.5], [0.5, 0.15], 20.0)
    path2 = _hermite([5.0, -3.0], [0.35, 0.4], [13.0, 4.5], [0.45, 0.35], 20.0)
    data = {
        "name": "switching",
        "plant": {"kind": "wmr", "agents": 1},
        "wmr": {"u1_init": [0.5], "heading_init": [-1.5707963267948966],
                "singularity_epsilon": 1e-6},
        "objective": {"kind": "switching_blend", "switch_center": 10.0,
                      "switch_width": 1.5, "path1": path1, "path2": path2,
                      "max_partial_order": 4},
        "initial": {"y": [-5.0, 4.0]},
        "gains": {"poles": [-2.0, -3.0]},
        "sim": dict(_DEFAULT_SIM),
        "m_f": 2.0,
        "noise_allowance": 1e-9,
        "success": {
            "tracking": [
                {"path": "path1", "agent": 0, "window": [4.0, 5.0], "max_error": 0.1},
                {"path": "path2", "agent": 0, "window": [16.0, 20.0], "max_error": 0.1},
            ],
        },
        "backend": "auto",
    }
    return ScenarioSpec(data)


def scenario_multi_robot() -> ScenarioSpec:
    """Two WMRs tracking two objects under a max-distance barrier.

    Published parameters: object starts (-5,-3) and (-2,-3), agent starts
    (-4.5,-3.5) and (-3.5,-3.5), barrier pole at squared distance d = 2,
    gain 1e-8.  Object paths converge (reconstruction) so the goals become
    jointly feasible; the squared inter-agent distance must stay below d at
    every sample and both tracking errors fall below 0.1 after 10 s.
    """
    path1 = _hermite([-5.0, -3.0], [0.95, 0.40], [2.2, 0.9], [0.40, 0.18], 20.0)
    path2 = _hermite([-2.0, -3.0], [0.50, 0.38], [3.3, 1.2], [0.40, 0.18], 20.0)
    data = {
        "name": "multi_robot",
        "plant": {"kind": "wmr", "agents": 2},
        "wmr": {"u1_init": [0.5, 0.5],
                "heading_init": [2.356194490192345, 0.3217505543966422],
                "singularity_epsilon": 1e-6},
        "objective": {"kind": "barrier_sum", "max_sq_distance": 2.0,
                      "gain": 1e-8, "path1": path1, "path2": path2,
                      "max_partial_order": 4},
        "initial": {"y": [-4.5, -3.5, -3.5, -3.5]},
        "gains": {"poles": [-2.0, -3.0]},
        "sim": dict(_DEFAULT_SIM),
        "m_f": 2.0,
        "noise_allowance": 1e-9,
        "success": {
            "tracking": [
                {"path": "path1", "agent": 0, "window": [10.0, 20.0], "max_error": 0.1},
                {"path": "path2", "agent": 1, "window": [10.0, 20.0], "max_error": 0.1},
            ],
            "max_sq_separation": 2.0,
        },
        "backend": "auto",
    }
    return ScenarioSpec(data)


BUILTIN_SCENARIOS = {
    "switching": scenario_switching,
    "multi_robot": scenario_multi_robot,
}


@dataclass
class RunResult:
    """Everything produced by one scenario run."""

    spec: ScenarioSpec
    trace: SimTrace
    bound: BoundReport | None
    success: dict

    @property
    def passed(self) -> bool:
        return bool(self.success.get("passed", False))


def run_scenario(spec: ScenarioSpec, backend: str | None = None) -> RunResult:
    """Build, integrate, bound-check, and grade one scenario."""
    plant = spec.build_plant()
    objective = spec.build_objective()
    gains = spec.build_gains()
    config = spec.build_sim_config()
    controller = ImplicitPlanningController(
        gains, backend=backend or spec.get("backend", "auto"))
    trace = integrate(plant, controller, objective, spec.initial_state(), config)

    bound = None
    if trace.n_samples and trace.error is None:
        bound = check_bound(trace, gains, m_f=float(spec.get("m_f", 1.0)),
                            noise_allowance=float(spec.get("noise_allowance", 1e-9)))
    success = grade_success(spec, trace, bound, objective)
    return RunResult(spec=spec, trace=trace, bound=bound, success=success)


def grade_success(spec: ScenarioSpec, trace: SimTrace, bound: BoundReport | None,
                  objective) -> dict:
    """Evaluate the scenario's stored success criteria against a trace."""
    criteria = []
    ok = trace.error is None
    criteria.append({"kind": "completed", "passed": trace.error is None,
                     "error": trace.error})

    success_cfg = spec.get("success", {})
    for tc in success_cfg.get("tracking", []):
        observed = _tracking_error(spec, trace, objective, tc)
        passed = observed is not None and observed <= tc["max_error"]
        ok = ok and passed
        criteria.append({"kind": "tracking", "path": tc["path"],
                         "agent": tc["agent"], "window": tc["window"],
                         "max_error": tc["max_error"],
                         "observed_max": observed, "passed": passed})

    max_sq = success_cfg.get("max_sq_separation")
    if max_sq is not None:
        if trace.n_samples and trace.y.shape[1] == 4:
            sep = np.sum((trace.y[:, 0:2] - trace.y[:, 2:4]) ** 2, axis=1)
            observed = float(np.max(sep))
        else:
            observed = None
        passed = observed is not None and observed < max_sq
        ok = ok and passed
        criteria.append({"kind": "separation", "bound": max_sq,
                         "observed_max": observed, "passed": passed})

    if bound is not None:
        passed = bound.trajectory_bound_ok and bound.objective_gap_ok
        ok = ok and passed
        criteria.append({"kind": "bound", "passed": passed,
                         "max_violation": bound.max_violation,
                         "max_gap_violation": bound.max_gap_violation})
    else:
        ok = False
    return {"passed": bool(ok), "criteria": criteria}


def _tracking_error(spec: ScenarioSpec, trace: SimTrace, objective, tc) -> float | None:
    if trace.n_samples == 0:
        return None
    lo, hi = tc["window"]
    mask = (trace.t >= lo - 1e-12) & (trace.t <= hi + 1e-12)
    if not mask.any():
        return None
    path = getattr(objective, {"path1": "path1", "path2": "path2",
                               "path": "path"}[tc["path"]])
    agent = int(tc["agent"])
    y_agent = trace.y[mask][:, 2 * agent:2 * agent + 2]
    ref = np.stack([path(t) for t in trace.t[mask]])
    return float(np.max(np.linalg.norm(y_agent - ref, axis=1)))
