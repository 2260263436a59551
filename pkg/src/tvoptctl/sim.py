"""Closed-loop integration, optimizer tracking, and convergence certificates.

The integrator is an adaptive Dormand-Prince 5(4) pair with the FSAL
property.  Steps are clamped to the logging grid so samples are taken at
exactly-integrated states (no interpolation error enters the recorded
trace).  Runs abort cleanly on singularity/domain/stiffness failures,
returning the partial trace plus a machine-readable error record.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .derivatives import total_gradient_derivative
from .errors import (ConfigError, ConvergenceError, DomainError,
                     SingularityError, SolveError, StiffnessError, TvoptError)
from .objectives import Objective
from .planner import (ControlAction, GainProfile, closed_loop_error_matrix,
                      control_input_nonuniform, control_input_uniform)
from .plants import ChainExtendedPlant, PlantModel

_MIN_STEP = 1e-12

# Dormand-Prince 5(4) tableau (FSAL: last stage row equals the 5th-order b).
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B = _DP_A[6]
_DP_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
                  -17253 / 339200, 22 / 525, -1 / 40])


@dataclass(frozen=True)
class SimConfig:
    """Integration and logging settings."""

    t0: float = 0.0
    t_end: float = 10.0
    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float = 1e-2
    sample_interval: float = 1e-2

    def __post_init__(self):
        if self.t_end <= self.t0:
            raise ConfigError("t_end must exceed t0")
        if self.rtol <= 0 or self.atol <= 0:
            raise ConfigError("rtol and atol must be positive")
        if self.max_step <= 0 or self.sample_interval <= 0:
            raise ConfigError("max_step and sample_interval must be positive")


class ImplicitPlanningController:
    """Bundles a GainProfile and dispatches the matching control law."""

    def __init__(self, gains: GainProfile, backend: str = "auto"):
        self.gains = gains
        self.backend = backend

    def action(self, plant, objective, t, z, diagnostics=False) -> ControlAction:
        layout = plant.layout
        x, zeta, xi = layout.unpack(z)
        if isinstance(plant, ChainExtendedPlant):
            return control_input_nonuniform(plant, objective, self.gains, t,
                                            x, zeta, xi, diagnostics=diagnostics)
        return control_input_uniform(plant, objective, self.gains, t, x, zeta,
                                     diagnostics=diagnostics)

    def rhs(self, plant, objective):
        """Closed-loop derivative function f(t, z) for the integrator."""
        from . import _backend
        compiled = _backend.make_rhs(plant, objective, self.gains, self.backend)
        if compiled is not None:
            return compiled
        layout = plant.layout

        def f(t, z):
            act = self.action(plant, objective, t, z)
            x, _, _ = layout.unpack(z)
            xdot = plant.plant_dynamics(x, act.u)
            return np.concatenate([xdot, act.zeta_dot, act.xi_dot])

        return f


@dataclass
class SimTrace:
    """Time-indexed log of a closed-loop run (struct-of-arrays)."""

    t: np.ndarray
    x: np.ndarray
    zeta: np.ndarray
    xi: np.ndarray
    y: np.ndarray
    y_star: np.ndarray
    grad_stack: np.ndarray       # (N, k, m)
    stack_norms: np.ndarray      # (N, k)
    u: np.ndarray
    f0_y: np.ndarray
    f0_ystar: np.ndarray
    envelope: np.ndarray
    meta: dict = field(default_factory=dict)
    error: dict | None = None

    @property
    def n_samples(self) -> int:
        return self.t.shape[0]

    def raise_if_aborted(self):
        if self.error is not None:
            raise TvoptError(f"run aborted: {self.error}")


def integrate(plant: PlantModel, controller: ImplicitPlanningController,
              objective: Objective, initial_state, config: SimConfig) -> SimTrace:
    """Integrate the closed loop and log on the sample grid.

    `initial_state` is (x0, zeta0) or (x0, zeta0, xi0); chain states default
    to zero.  Aborts (singularity, barrier domain, Hessian solve, optimizer
    convergence, step underflow) terminate the run and are recorded on the
    returned partial trace instead of propagating.
    """
    layout = plant.layout
    z = _pack_initial(layout, initial_state)
    gains = controller.gains
    k, m = gains.order, plant.output_dim

    grid = _sample_grid(config)
    rhs = controller.rhs(plant, objective)

    samples = []
    error = None
    y_star_warm = None

    t = config.t0
    try:
        f_now = rhs(t, z)
    except TvoptError as exc:
        error = _error_record(exc, t)
        f_now = None

    if error is None:
        try:
            y_star_warm = _log_sample(samples, plant, controller, objective,
                                      gains, t, z, y_star_warm)
        except TvoptError as exc:
            error = _error_record(exc, t)

    h = min(config.max_step, config.sample_interval)
    next_idx = 1
    while error is None and next_idx < grid.shape[0]:
        target = grid[next_idx]
        clamped = min(h, config.max_step, target - t)
        try:
            z_new, f_new, err_norm, h_used = _dp_step(rhs, t, z, f_now, clamped,
                                                      config)
        except TvoptError as exc:
            error = _error_record(exc, t)
            break
        if err_norm <= 1.0:  # accepted
            t_new = target if abs(t + h_used - target) < 1e-12 else t + h_used
            z, f_now, t = z_new, f_new, t_new
            if t == target:
                try:
                    y_star_warm = _log_sample(samples, plant, controller,
                                              objective, gains, t, z, y_star_warm)
                except TvoptError as exc:
                    error = _error_record(exc, t)
                    break
                next_idx += 1
        h = h_used * _step_factor(err_norm)
        if h < _MIN_STEP:
            error = _error_record(
                StiffnessError(f"step size underflow ({h:.2e}) at t={t:.6g}"), t)

    trace = _assemble_trace(samples, layout, k, m, gains, error)
    return trace


def _pack_initial(layout, initial_state):
    parts = tuple(np.atleast_1d(np.asarray(p, dtype=float)) for p in initial_state)
    if len(parts) == 2:
        x0, zeta0 = parts
        xi0 = np.zeros(layout.a)
    else:
        x0, zeta0, xi0 = parts
    if x0.shape[0] != layout.n or zeta0.shape[0] != layout.c or xi0.shape[0] != layout.a:
        raise ConfigError(
            f"initial state dims {tuple(p.shape[0] for p in (x0, zeta0, xi0))} "
            f"do not match plant layout ({layout.n}, {layout.c}, {layout.a})")
    return layout.pack(x0, zeta0, xi0)


def _sample_grid(config: SimConfig) -> np.ndarray:
    span = config.t_end - config.t0
    n = int(math.floor(span / config.sample_interval + 1e-9))
    grid = config.t0 + config.sample_interval * np.arange(n + 1)
    if config.t_end - grid[-1] > 1e-9 * max(1.0, abs(config.t_end)):
        grid = np.append(grid, config.t_end)
    else:
        grid[-1] = config.t_end
    return grid


def _dp_step(rhs, t, z, f_now, h, config):
    """One Dormand-Prince trial step; returns (z5, f_new, err_norm, h)."""
    if h <= 0:
        raise StiffnessError(f"nonpositive step at t={t}")
    ks = [f_now]
    for i in range(1, 7):
        zi = z + h * sum(a * kj for a, kj in zip(_DP_A[i], ks))
        ks.append(rhs(t + _DP_C[i] * h, zi))
    z5 = z + h * sum(b * kj for b, kj in zip(_DP_B, ks))
    err_vec = h * sum(e * kj for e, kj in zip(_DP_E, ks))
    scale = config.atol + config.rtol * np.maximum(np.abs(z), np.abs(z5))
    err_norm = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
    return z5, ks[6], err_norm, h


def _step_factor(err_norm: float) -> float:
    if err_norm == 0.0:
        return 10.0
    return min(10.0, max(0.2, 0.9 * err_norm ** -0.2))


def _output_stack(plant, t, z):
    layout = plant.layout
    x, zeta, xi = layout.unpack(z)
    if isinstance(plant, ChainExtendedPlant):
        return plant.output_stack(x, zeta, xi)
    return plant.output_map(x, zeta)


def _log_sample(samples, plant, controller, objective, gains, t, z, warm):
    stack = _output_stack(plant, t, z)
    partials = objective.partials(stack[0], t, order=gains.order + 1)
    grads = np.stack([total_gradient_derivative(partials, stack, j)
                      for j in range(gains.order)])
    act = controller.action(plant, objective, t, z, diagnostics=False)
    y = stack[0]
    y_star = solve_optimizer(objective, t, y if warm is None else warm)
    f0_y = partials.value
    f0_star = objective.partials(y_star, t, order=1).value
    samples.append((t, z.copy(), y.copy(), y_star, grads, act.u.copy(),
                    f0_y, f0_star))
    return y_star


def _error_record(exc: Exception, t: float) -> dict:
    return {"type": type(exc).__name__, "message": str(exc), "t": float(t)}


def _assemble_trace(samples, layout, k, m, gains, error) -> SimTrace:
    n = len(samples)
    t = np.array([s[0] for s in samples])
    z = np.array([s[1] for s in samples]).reshape(n, layout.total)
    y = np.array([s[2] for s in samples]).reshape(n, m)
    y_star = np.array([s[3] for s in samples]).reshape(n, m)
    grads = np.array([s[4] for s in samples]).reshape(n, k, m)
    u = np.array([s[5] for s in samples]).reshape(n, m)
    f0_y = np.array([s[6] for s in samples])
    f0_star = np.array([s[7] for s in samples])
    stack_norms = np.linalg.norm(grads, axis=2) if n else np.zeros((0, k))
    meta = {"order": k, "output_dim": m, "bound_c": gains.bound_c,
            "bound_alpha": gains.bound_alpha,
            "spectral_abscissa": gains.spectral_abscissa}
    return SimTrace(
        t=t,
        x=z[:, :layout.n],
        zeta=z[:, layout.n:layout.n + layout.c],
        xi=z[:, layout.n + layout.c:],
        y=y, y_star=y_star, grad_stack=grads, stack_norms=stack_norms, u=u,
        f0_y=f0_y, f0_ystar=f0_star,
        envelope=np.full(n, np.nan), meta=meta, error=error)


def solve_optimizer(objective: Objective, t: float, warm_start,
                    tol: float = 1e-10, max_iter: int = 100) -> np.ndarray:
    """Track y*(t) by damped Newton on grad_y f0(., t) from a warm start."""
    y = np.atleast_1d(np.asarray(warm_start, dtype=float)).copy()
    for _ in range(max_iter):
        p = objective.partials(y, t, order=2)
        g = p.gradient
        if np.linalg.norm(g) <= tol:
            return y
        try:
            step = scipy.linalg.cho_solve(scipy.linalg.cho_factor(p.hessian), g)
        except np.linalg.LinAlgError as exc:
            raise SolveError(f"Hessian not positive definite in Newton solve: {exc}")
        decrement = float(g @ step)
        if decrement <= 1e-12 * max(1.0, abs(p.value)):
            # Quadratic endgame: the Armijo test is below f64 resolution of
            # f0; take the full Newton step (backtracking on domain only).
            lam = 1.0
            while lam >= 2 ** -40:
                if _in_domain(objective, y - lam * step, t):
                    break
                lam *= 0.5
            else:
                raise ConvergenceError(f"optimizer pinned to the domain boundary at t={t}")
            y = y - lam * step
            continue
        lam = 1.0
        while True:
            try:
                trial = objective.partials(y - lam * step, t, order=1)
            except DomainError:
                trial = None
            if trial is not None and trial.value <= p.value - 1e-4 * lam * decrement:
                y = y - lam * step
                break
            lam *= 0.5
            if lam < 2 ** -40:
                raise ConvergenceError(
                    f"Newton line search stalled at t={t} (convexity violated?)")
    raise ConvergenceError(f"optimizer solve did not reach {tol} in {max_iter} iterations")


def _in_domain(objective: Objective, y, t: float) -> bool:
    try:
        objective.partials(y, t, order=1)
        return True
    except DomainError:
        return False


@dataclass
class BoundReport:
    """Certificate check of the exponential convergence bound."""

    C: float
    alpha: float
    max_violation: float
    fitted_rate: float
    objective_gap_ok: bool
    trajectory_bound_ok: bool
    max_gap_violation: float
    bound_c: float
    m_f: float
    noise_allowance: float
    n_samples: int

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


def check_bound(trace: SimTrace, gains: GainProfile, m_f: float,
                noise_allowance: float = 1e-9) -> BoundReport:
    """Check ||y - y*|| <= C e^{-alpha t} and the objective-gap bound.

    C is computed from the initial stacked gradient norms (a certificate,
    not a fit); the empirical decay rate is reported separately from a
    least-squares fit of log ||y - y*|| where the error exceeds 1e-9.
    The pass/fail booleans allow a small absolute measurement noise term
    (optimizer Newton tolerance + integration tolerances); raw violations
    are reported unmodified.
    """
    if trace.n_samples == 0:
        raise ConfigError("empty trace")
    c, alpha = gains.bound_c, gains.bound_alpha
    C = math.sqrt(c ** 2 / m_f ** 2 * float(np.sum(trace.stack_norms[0] ** 2)))
    rel_t = trace.t - trace.t[0]
    envelope = C * np.exp(-alpha * rel_t)
    trace.envelope[:] = envelope
    trace.meta["C"] = C
    trace.meta["m_f"] = m_f

    err = np.linalg.norm(trace.y - trace.y_star, axis=1)
    max_violation = float(np.max(err - envelope))

    gap = trace.f0_y - trace.f0_ystar
    gap_bound = m_f * C ** 2 * np.exp(-2 * alpha * rel_t)
    max_gap_violation = float(np.max(gap - gap_bound))
    gap_ok = bool(np.all(gap >= -noise_allowance)
                  and max_gap_violation <= noise_allowance)

    mask = err > 1e-9
    if int(mask.sum()) >= 2:
        slope = np.polyfit(trace.t[mask], np.log(err[mask]), 1)[0]
        fitted_rate = float(-slope)
    else:
        fitted_rate = math.inf
    return BoundReport(
        C=C, alpha=alpha, max_violation=max_violation, fitted_rate=fitted_rate,
        objective_gap_ok=gap_ok,
        trajectory_bound_ok=max_violation <= noise_allowance,
        max_gap_violation=max_gap_violation, bound_c=c, m_f=m_f,
        noise_allowance=noise_allowance, n_samples=trace.n_samples)


def error_dynamics_residual(trace: SimTrace, objective: Objective,
                            gains: GainProfile) -> float:
    """Max residual of d/dt(stacked gradient) against H @ stack along a trace.

    Central 4th-order finite differences on the uniform sample grid; the
    residual is relative where ||H G|| >= 1e-9 and absolute below that.
    """
    if trace.n_samples < 5:
        raise ConfigError("need at least five samples for the interior stencil")
    dt = np.diff(trace.t)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=1e-12):
        raise ConfigError("error-dynamics residual needs a uniform sample grid")
    if dt[0] > 1e-2 + 1e-12:
        raise ConfigError("sample_interval must be <= 1e-2 for finite differencing")
    H = closed_loop_error_matrix(gains)
    G = trace.grad_stack.reshape(trace.n_samples, -1)
    worst = 0.0
    for i in range(2, trace.n_samples - 2):
        fd = (-G[i + 2] + 8 * G[i + 1] - 8 * G[i - 1] + G[i - 2]) / (12 * dt[0])
        model = H @ G[i]
        diff = float(np.linalg.norm(fd - model))
        denom = float(np.linalg.norm(model))
        worst = max(worst, diff / denom if denom >= 1e-9 else diff)
    return worst


# -- artifact emission --------------------------------------------------------

def trace_column_header(m: int, k: int) -> list[str]:
    cols = ["t"]
    cols += [f"y_{i + 1}" for i in range(m)]
    cols += [f"ystar_{i + 1}" for i in range(m)]
    cols += [f"gradnorm_{j}" for j in range(k)]
    cols += [f"u_{i + 1}" for i in range(m)]
    cols += ["envelope"]
    return cols


def write_trace_csv(trace: SimTrace, path):
    """Emit the trace with the documented column order."""
    k = trace.meta["order"]
    m = trace.meta["output_dim"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(trace_column_header(m, k))
        for i in range(trace.n_samples):
            row = ([f"{trace.t[i]:.17g}"]
                   + [f"{v:.17g}" for v in trace.y[i]]
                   + [f"{v:.17g}" for v in trace.y_star[i]]
                   + [f"{v:.17g}" for v in trace.stack_norms[i]]
                   + [f"{v:.17g}" for v in trace.u[i]]
                   + [f"{trace.envelope[i]:.17g}"])
            writer.writerow(row)
