"""Polynomial reference paths in the monomial basis t^j.

Reference trajectories are parameterized per output component by
coefficients over the basis 1, t, t^2, t^3 (degree fixed at 3, i.e. four
parameters per component), so all time derivatives are available in closed
form and vanish beyond the degree.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FitError

DEGREE = 3  # four monomial coefficients per component


@dataclass(frozen=True)
class PolynomialPath:
    """A vector-valued polynomial path with closed-form derivatives.

    coefficients[i, j] multiplies t^j in component i.
    """

    coefficients: np.ndarray
    t_start: float = 0.0
    t_end: float = math.inf

    def __post_init__(self):
        coeffs = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def dim(self) -> int:
        return self.coefficients.shape[0]

    def eval(self, t: float, order: int = 0) -> np.ndarray:
        """Evaluate the order-th time derivative at time t."""
        coeffs = self.coefficients
        _, n = coeffs.shape
        if order >= n:
            return np.zeros(coeffs.shape[0])
        # Horner on the differentiated coefficients.
        fall = np.array([_falling_factorial(j, order) for j in range(order, n)])
        dc = coeffs[:, order:] * fall
        out = dc[:, -1].copy()
        for j in range(dc.shape[1] - 2, -1, -1):
            out = out * t + dc[:, j]
        return out

    def __call__(self, t: float) -> np.ndarray:
        return self.eval(t, 0)

    def derivatives(self, t: float, count: int) -> np.ndarray:
        """Stack derivatives 0..count-1 as an array of shape (count, dim)."""
        return np.stack([self.eval(t, j) for j in range(count)])


def _falling_factorial(j: int, order: int) -> float:
    out = 1.0
    for i in range(order):
        out *= j - i
    return out


@dataclass(frozen=True)
class Waypoint:
    """Position (and optional velocity) constraint at a given time."""

    t: float
    position: np.ndarray
    velocity: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "position",
                           np.atleast_1d(np.asarray(self.position, dtype=float)))
        if self.velocity is not None:
            object.__setattr__(self, "velocity",
                               np.atleast_1d(np.asarray(self.velocity, dtype=float)))


def fit_polynomial_path(waypoints: list[Waypoint], degree: int = DEGREE,
                        t_start: float = 0.0, t_end: float = math.inf) -> PolynomialPath:
    """Fit a polynomial path through position/velocity waypoints.

    With exactly degree+1 constraints per component the Vandermonde system
    (with derivative rows for velocities) is solved exactly; with fewer or
    more constraints the minimum-norm least-squares solution is used.
    """
    if not waypoints:
        raise FitError("at least one waypoint is required")
    dim = waypoints[0].position.shape[0]
    n = degree + 1

    rows, rhs = [], []
    for wp in waypoints:
        if wp.position.shape[0] != dim:
            raise FitError("inconsistent waypoint dimensions")
        rows.append([wp.t ** j for j in range(n)])
        rhs.append(wp.position)
        if wp.velocity is not None:
            rows.append([j * wp.t ** (j - 1) if j >= 1 else 0.0 for j in range(n)])
            rhs.append(wp.velocity)
    A = np.asarray(rows, dtype=float)
    b = np.asarray(rhs, dtype=float)  # (n_constraints, dim)

    if A.shape[0] == n:
        if abs(np.linalg.det(A)) < 1e-12:
            raise FitError("singular constraint system (coincident waypoint times?)")
        coeffs = np.linalg.solve(A, b)
    else:
        coeffs, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
        if A.shape[0] < n and rank < A.shape[0]:
            raise FitError("rank-deficient constraint system")
    return PolynomialPath(coeffs.T, t_start=t_start, t_end=t_end)


def constant_path(point) -> PolynomialPath:
    """Path that stays at a fixed point for all time."""
    point = np.atleast_1d(np.asarray(point, dtype=float))
    coeffs = np.zeros((point.shape[0], DEGREE + 1))
    coeffs[:, 0] = point
    return PolynomialPath(coeffs)
