"""Hurwitz gain design and the implicit trajectory-planning control laws.

The planner places the closed-loop error dynamics: it turns a Hurwitz pole
set into companion-form coefficients a_0..a_{k-1}, computes the k-th output
derivative that makes the stacked gradient obey those linear dynamics, and
assembles the plant input through the decoupling data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb

import numpy as np
import scipy.linalg

from .derivatives import (DerivativeStack, evaluate_plan,
                          total_derivative_plan, total_gradient_derivative)
from .errors import ConfigError, GainError, SingularityError, SolveError
from .objectives import Objective, ObjectivePartials
from .plants import ChainExtendedPlant, PlantModel

_REPEATED_POLE_TOL = 1e-9
_EPS_SHIFT = 1e-3  # rate shift certifying repeated-pole transients


@dataclass(frozen=True)
class GainProfile:
    """Companion-form gain data with certified transient constants.

    coefficients holds the last companion row (a_0 .. a_{k-1}); the error
    matrix is companion(a) kron I_m.  (bound_c, bound_alpha) certify
    ||e^{Ht}|| <= bound_c * e^{-bound_alpha t}.
    """

    order: int
    output_dim: int
    coefficients: np.ndarray
    poles: np.ndarray
    spectral_abscissa: float
    bound_c: float
    bound_alpha: float

    def companion(self) -> np.ndarray:
        k = self.order
        H = np.zeros((k, k))
        H[:-1, 1:] = np.eye(k - 1)
        H[-1, :] = self.coefficients
        return H


@dataclass
class ControlDiagnostics:
    """Per-evaluation control internals for logging."""

    y_imp: np.ndarray
    gradient_stack_norms: np.ndarray
    decoupling_condition_number: float


@dataclass
class ControlAction:
    """Input and state rates produced by a control-law evaluation."""

    u: np.ndarray
    w: np.ndarray
    zeta_dot: np.ndarray
    xi_dot: np.ndarray
    diagnostics: ControlDiagnostics | None = None


def design_gains(poles, m: int) -> GainProfile:
    """Build a GainProfile from a conjugate-closed set of Hurwitz poles."""
    poles = np.atleast_1d(np.asarray(poles, dtype=complex))
    k = poles.shape[0]
    if k < 1:
        raise GainError("need at least one pole")
    if np.max(poles.real) >= 0:
        raise GainError(f"poles must have negative real part, got {poles}")
    conj = np.sort_complex(np.conj(poles))
    if not np.allclose(np.sort_complex(poles), conj, atol=1e-12):
        raise GainError("pole set must be closed under conjugation")

    # monic characteristic polynomial; the companion row negates its tail
    char = np.real(np.poly(poles))          # [1, c_{k-1}, ..., c_0]
    coefficients = -char[1:][::-1]          # a_0 .. a_{k-1}
    abscissa = float(np.max(poles.real))

    residual = max(abs(lam ** k - sum(coefficients[i] * lam ** i for i in range(k)))
                   for lam in poles)
    if residual > 1e-9:
        raise GainError(f"characteristic polynomial residual {residual:.2e}")

    c, alpha = _transient_constants(poles, coefficients)
    return GainProfile(order=k, output_dim=m, coefficients=coefficients,
                       poles=np.sort_complex(poles), spectral_abscissa=abscissa,
                       bound_c=c, bound_alpha=alpha)


def _transient_constants(poles: np.ndarray, coefficients: np.ndarray):
    """Certified (c, alpha) for the companion block from eigenvector data."""
    k = poles.shape[0]
    if k == 1:
        return 1.0, float(-poles[0].real)
    groups = _group_poles(poles)
    max_mult = max(len(g) for g in groups)
    if max_mult == 1:
        H = _companion(coefficients)
        _, V = np.linalg.eig(H)
        return float(np.linalg.cond(V)), float(-np.max(poles.real))
    # repeated poles: confluent Vandermonde brings H to Jordan form; the
    # polynomial transient is absorbed with a small rate shift.
    V = np.zeros((k, k), dtype=complex)
    col = 0
    for group in groups:
        lam = group[0]
        for r in range(len(group)):
            V[:, col] = [comb(j, r) * lam ** (j - r) if j >= r else 0.0
                         for j in range(k)]
            col += 1
    alpha = float(-np.max(poles.real)) - _EPS_SHIFT
    if alpha <= 0:
        raise GainError("spectral abscissa too close to zero for the shifted bound")
    c = float(np.linalg.cond(V)) * _polynomial_decay_sup(max_mult, _EPS_SHIFT)
    return max(c, 1.0), alpha


def _group_poles(poles: np.ndarray):
    ordered = sorted(poles, key=lambda z: (z.real, z.imag))
    groups: list[list[complex]] = []
    for lam in ordered:
        if groups and abs(lam - groups[-1][0]) <= _REPEATED_POLE_TOL:
            groups[-1].append(lam)
        else:
            groups.append([lam])
    return groups


def _polynomial_decay_sup(s: int, eps: float) -> float:
    """sup_t (sum_{j<s} t^j / j!) e^{-eps t}, evaluated on a dense grid."""
    t_peak = max(1.0, (s - 1) / eps)
    grid = np.concatenate([[0.0], np.geomspace(1e-3, 10 * t_peak, 4000)])
    js = np.arange(s)
    facts = np.array([float(math.factorial(int(j))) for j in js])
    vals = (grid[:, None] ** js[None, :] / facts[None, :]).sum(axis=1) * np.exp(-eps * grid)
    return float(vals.max())


def _companion(coefficients: np.ndarray) -> np.ndarray:
    k = coefficients.shape[0]
    H = np.zeros((k, k))
    H[:-1, 1:] = np.eye(k - 1)
    H[-1, :] = coefficients
    return H


def closed_loop_error_matrix(gains: GainProfile) -> np.ndarray:
    """Materialize H = companion(a) kron I_m for analysis."""
    return np.kron(gains.companion(), np.eye(gains.output_dim))


def _y_imp_and_gradients(partials: ObjectivePartials, stack: DerivativeStack,
                         gains: GainProfile):
    k = gains.order
    if stack.order != k:
        raise ConfigError(f"stack of order {stack.order}, gains of order {k}")
    grads = [total_gradient_derivative(partials, stack, j) for j in range(k)]
    rhs = None
    for i in range(k):
        term = gains.coefficients[i] * grads[i]
        rhs = term if rhs is None else rhs + term
    for m in range(1, k):
        hess_m = evaluate_plan(total_derivative_plan(2, 0, m), partials, stack)
        rhs = rhs - comb(k - 1, m) * (hess_m @ stack[k - m])
    rhs = rhs - evaluate_plan(total_derivative_plan(1, 1, k - 1), partials, stack)
    try:
        factor = scipy.linalg.cho_factor(partials.hessian)
        y_imp = scipy.linalg.cho_solve(factor, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolveError(f"Hessian not positive definite at t={partials.t}: {exc}")
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - alias of above
        raise SolveError(f"Hessian not positive definite at t={partials.t}: {exc}")
    return y_imp, grads


def plan_output_derivative(partials: ObjectivePartials, stack: DerivativeStack,
                           gains: GainProfile) -> np.ndarray:
    """The k-th output derivative imposing Hurwitz gradient-stack dynamics.

    Solves Hess * y^(k) = sum_i a_i grad^(i) - sum_{m>=1} C(k-1,m)
    Hess^(m) y^(k-m) - mixed^(k-1) with an SPD factorization.
    """
    y_imp, _ = _y_imp_and_gradients(partials, stack, gains)
    return y_imp


def control_input_uniform(plant: PlantModel, objective: Objective,
                          gains: GainProfile, t: float, x, zeta,
                          diagnostics: bool = False) -> ControlAction:
    """Control law for plants whose every channel has relative degree k."""
    k = gains.order
    if plant.relative_degrees != (k,) * plant.output_dim:
        raise ConfigError(
            f"plant degrees {plant.relative_degrees} do not match gain order {k}")
    stack = plant.output_map(x, zeta)
    partials = objective.partials(stack[0], t, order=k + 1)
    y_imp, grads = _y_imp_and_gradients(partials, stack, gains)
    p_vec, R = plant.decoupling(x, zeta)
    w = _decoupling_solve(R, y_imp - p_vec)
    alpha, beta = plant.alpha_beta(x, zeta)
    gamma, delta = plant.gamma_delta(x, zeta)
    diag = _diagnostics(y_imp, grads, R) if diagnostics else None
    return ControlAction(u=alpha + beta @ w, w=w, zeta_dot=gamma + delta @ w,
                         xi_dot=np.zeros(0), diagnostics=diag)


def control_input_nonuniform(plant: ChainExtendedPlant, objective: Objective,
                             gains: GainProfile, t: float, x, zeta, xi,
                             diagnostics: bool = False) -> ControlAction:
    """Control law for chain-extended plants (non-uniform base degrees)."""
    if not isinstance(plant, ChainExtendedPlant):
        raise ConfigError("nonuniform control expects a chain-extended plant")
    k = gains.order
    if plant.order != k:
        raise ConfigError(f"extended plant order {plant.order} != gain order {k}")
    stack = plant.output_stack(x, zeta, xi)
    partials = objective.partials(stack[0], t, order=k + 1)
    s, grads = _y_imp_and_gradients(partials, stack, gains)
    alpha_t, beta_t = plant.alpha_beta_tilde(xi)
    v = alpha_t + beta_t @ s
    p_vec, R = plant.decoupling(x, zeta)
    w = _decoupling_solve(R, v - p_vec)
    alpha, beta = plant.alpha_beta(x, zeta)
    gamma, delta = plant.gamma_delta(x, zeta)
    diag = _diagnostics(s, grads, R) if diagnostics else None
    return ControlAction(u=alpha + beta @ w, w=w, zeta_dot=gamma + delta @ w,
                         xi_dot=plant.xi_rates(xi, s), diagnostics=diag)


def _decoupling_solve(R: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(R, rhs)
    except np.linalg.LinAlgError:
        raise SingularityError("decoupling matrix numerically singular")


def _diagnostics(y_imp, grads, R) -> ControlDiagnostics:
    return ControlDiagnostics(
        y_imp=y_imp,
        gradient_stack_norms=np.array([np.linalg.norm(g) for g in grads]),
        decoupling_condition_number=float(np.linalg.cond(R)))
