"""Time-varying objectives with closed-form partial-derivative tensors.

An objective evaluates f0(y, t) together with all partials d^a_y d^b_t f0
(a >= 1, a + b <= order) as dense symmetric tensors.  Built-ins cover the
tracking objectives used by the scenarios: plain quadratic tracking, a
tanh-blended switch between two targets, and a two-agent tracking sum with
a smooth maximum-distance barrier.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import lru_cache
from math import comb, pi, tan, tanh

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import ConfigError, DomainError, OrderError
from .paths import PolynomialPath

MAX_PARTIAL_ORDER = 5  # dense tensor storage cap (supports k <= 4)


@dataclass
class ObjectivePartials:
    """Objective value and partial tensors at a point (y, t).

    tensors maps (a, b) -> d^a_y d^b_t f0 with shape (m,)*a, for all
    a >= 1, a + b <= max_order.
    """

    y: np.ndarray
    t: float
    value: float
    tensors: dict[tuple[int, int], np.ndarray]
    max_order: int

    @property
    def gradient(self) -> np.ndarray:
        return self.tensors[(1, 0)]

    @property
    def hessian(self) -> np.ndarray:
        return self.tensors[(2, 0)]


class Objective(ABC):
    """Interface for a time-varying objective f0(y, t)."""

    output_dim: int
    strong_convexity: float
    max_partial_order: int

    def __init__(self, output_dim: int, strong_convexity: float,
                 max_partial_order: int = 4):
        if max_partial_order < 2:
            raise ConfigError("max_partial_order must be at least 2")
        if max_partial_order > MAX_PARTIAL_ORDER:
            raise ConfigError(
                f"max_partial_order capped at {MAX_PARTIAL_ORDER} (dense tensor storage)")
        self.output_dim = output_dim
        self.strong_convexity = float(strong_convexity)
        self.max_partial_order = max_partial_order

    @abstractmethod
    def _evaluate(self, y: np.ndarray, t: float, order: int):
        """Return (value, tensors) with all partials up to total order."""

    def partials(self, y, t: float, order: int | None = None) -> ObjectivePartials:
        """Evaluate f0 and its partial tensors up to the given total order."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if y.shape != (self.output_dim,):
            raise ConfigError(f"expected y of shape ({self.output_dim},), got {y.shape}")
        if not np.all(np.isfinite(y)):
            raise DomainError("y contains non-finite entries")
        if order is None:
            order = self.max_partial_order
        if order > self.max_partial_order:
            raise OrderError(
                f"partials up to total order {order} requested, objective "
                f"supports {self.max_partial_order}")
        value, tensors = self._evaluate(y, float(t), order)
        return ObjectivePartials(y=y, t=float(t), value=float(value),
                                 tensors=tensors, max_order=order)


def evaluate_partials(objective: Objective, y, t: float,
                      order: int | None = None) -> ObjectivePartials:
    """Evaluate an objective's value and partial tensors at (y, t)."""
    return objective.partials(y, t, order=order)


def _zero_tensors(m: int, order: int) -> dict[tuple[int, int], np.ndarray]:
    return {(a, b): np.zeros((m,) * a)
            for a in range(1, order + 1) for b in range(order - a + 1)}


# -- derivative chains for tanh and tan^2 -----------------------------------
#
# d^n/du^n tanh(u) = P_n(tanh u) with P_{n+1} = P_n' (1 - tau^2), and
# d^n/dx^n tan(cx)^2 = c^n R_n(tan cx) with R_{n+1} = R_n' (1 + tau^2).
# Coefficient arrays are cached per order.

@lru_cache(maxsize=None)
def _tanh_poly(n: int) -> np.ndarray:
    if n == 0:
        return np.array([0.0, 1.0])
    prev = _tanh_poly(n - 1)
    return npoly.polymul(npoly.polyder(prev), np.array([1.0, 0.0, -1.0]))


@lru_cache(maxsize=None)
def _tansq_poly(n: int) -> np.ndarray:
    if n == 0:
        return np.array([0.0, 0.0, 1.0])
    prev = _tansq_poly(n - 1)
    return npoly.polymul(npoly.polyder(prev), np.array([1.0, 0.0, 1.0]))


def switch_derivatives(t: float, center: float, width: float, count: int) -> np.ndarray:
    """S(t) = 0.5 - 0.5 tanh((t - center)/width) and derivatives 0..count-1."""
    tau = tanh((t - center) / width)
    out = np.empty(count)
    out[0] = 0.5 - 0.5 * tau
    for n in range(1, count):
        out[n] = -0.5 * npoly.polyval(tau, _tanh_poly(n)) / width ** n
    return out


def barrier_derivatives(x: float, d: float, gain: float, count: int) -> np.ndarray:
    """H(x) = gain tan(x pi / (2d))^2 and derivatives 0..count-1 in x."""
    c = pi / (2.0 * d)
    tau = tan(c * x)
    return np.array([gain * c ** n * npoly.polyval(tau, _tansq_poly(n))
                     for n in range(count)])


# -- built-in objectives -----------------------------------------------------

class QuadraticTracking(Objective):
    """f0(y, t) = 0.5 ||y - y_d(t)||^2 for a reference path y_d."""

    def __init__(self, path: PolynomialPath, max_partial_order: int = 4):
        super().__init__(path.dim, strong_convexity=1.0,
                         max_partial_order=max_partial_order)
        self.path = path

    def _evaluate(self, y, t, order):
        m = self.output_dim
        tensors = _zero_tensors(m, order)
        err = y - self.path.eval(t, 0)
        tensors[(1, 0)] = err
        tensors[(2, 0)] = np.eye(m)
        for b in range(1, order):
            tensors[(1, b)] = -self.path.eval(t, b)
        return 0.5 * float(err @ err), tensors


class SwitchingBlend(Objective):
    """Blend of two quadratic tracking goals through a smooth switch.

    f0 = S(t) ||y - y1(t)||^2 + (1 - S(t)) ||y - y2(t)||^2 with
    S(t) = 0.5 - 0.5 tanh((t - center)/width).  The Hessian is 2I for all
    t, so the strong-convexity constant is 2.
    """

    def __init__(self, path1: PolynomialPath, path2: PolynomialPath,
                 center: float, width: float, max_partial_order: int = 4):
        if path1.dim != path2.dim:
            raise ConfigError("blend paths must have equal dimension")
        super().__init__(path1.dim, strong_convexity=2.0,
                         max_partial_order=max_partial_order)
        self.path1, self.path2 = path1, path2
        self.center, self.width = float(center), float(width)

    def switch(self, t: float) -> float:
        return 0.5 - 0.5 * tanh((t - self.center) / self.width)

    def _evaluate(self, y, t, order):
        m = self.output_dim
        tensors = _zero_tensors(m, order)
        s = switch_derivatives(t, self.center, self.width, order)
        w2 = -s  # weight of goal 2 is 1 - S(t); derivatives flip sign
        w2[0] = 1.0 - s[0]
        value = 0.0
        eye = np.eye(m)
        for path, w in ((self.path1, s), (self.path2, w2)):
            derivs = path.derivatives(t, order)
            err = y - derivs[0]
            value += w[0] * float(err @ err)
            # d^b_t grad = 2 sum_j C(b,j) w^(j) * d_t^{b-j}(y - p)
            for b in range(order):
                acc = w[b] * err
                for j in range(b):
                    acc = acc + comb(b, j) * w[j] * (-derivs[b - j])
                tensors[(1, b)] = tensors[(1, b)] + 2.0 * acc
            for b in range(order - 1):
                tensors[(2, b)] = tensors[(2, b)] + 2.0 * w[b] * eye
        return value, tensors


@lru_cache(maxsize=None)
def _partitions_le2(a: int) -> tuple[tuple[tuple[int, ...], ...], ...]:
    """Set partitions of range(a) into blocks of size one or two."""
    def rec(items: tuple[int, ...]):
        if not items:
            yield ()
            return
        first, rest = items[0], items[1:]
        for sub in rec(rest):
            yield ((first,),) + sub
        for i, other in enumerate(rest):
            rem = rest[:i] + rest[i + 1:]
            for sub in rec(rem):
                yield ((first, other),) + sub
    return tuple(rec(tuple(range(a))))


class BarrierSum(Objective):
    """Two-agent tracking with a smooth inter-agent distance barrier.

    On the stacked output Y = (y1, y2) in R^4:
        f0 = ||y1 - p1(t)||^2 + ||y2 - p2(t)||^2 + H(||y1 - y2||^2),
    H(x) = gain * tan(x pi / (2 d))^2, with its pole at squared distance
    x = d.  Convexity is only local; the declared constant (2) holds on the
    barrier's domain, where the barrier Hessian is positive semidefinite.
    """

    def __init__(self, path1: PolynomialPath, path2: PolynomialPath,
                 max_sq_distance: float, gain: float, max_partial_order: int = 4):
        if path1.dim != 2 or path2.dim != 2:
            raise ConfigError("barrier objective expects two planar reference paths")
        super().__init__(4, strong_convexity=2.0, max_partial_order=max_partial_order)
        self.path1, self.path2 = path1, path2
        self.max_sq_distance = float(max_sq_distance)
        self.gain = float(gain)

    def _evaluate(self, y, t, order):
        tensors = _zero_tensors(4, order)
        value = 0.0
        # tracking terms (weight 1, no switch)
        for idx, path in ((0, self.path1), (2, self.path2)):
            derivs = path.derivatives(t, order)
            err = y[idx:idx + 2] - derivs[0]
            value += float(err @ err)
            tensors[(1, 0)][idx:idx + 2] += 2.0 * err
            for b in range(1, order):
                tensors[(1, b)][idx:idx + 2] += -2.0 * derivs[b]
        if order >= 2:
            tensors[(2, 0)] += 2.0 * np.eye(4)

        # barrier on the squared inter-agent distance
        e = y[0:2] - y[2:4]
        q = float(e @ e)
        if q >= self.max_sq_distance:
            raise DomainError(
                f"squared inter-agent distance {q:.6g} at or beyond the barrier "
                f"pole {self.max_sq_distance:.6g}")
        h = barrier_derivatives(q, self.max_sq_distance, self.gain, order + 1)
        value += h[0]
        dq = np.concatenate([2.0 * e, -2.0 * e])
        d2q = 2.0 * np.block([[np.eye(2), -np.eye(2)], [-np.eye(2), np.eye(2)]])
        letters = "abcde"
        for a in range(1, order + 1):
            acc = np.zeros((4,) * a)
            for part in _partitions_le2(a):
                specs, ops = [], []
                for block in part:
                    if len(block) == 1:
                        specs.append(letters[block[0]])
                        ops.append(dq)
                    else:
                        specs.append(letters[block[0]] + letters[block[1]])
                        ops.append(d2q)
                outer = np.einsum(",".join(specs) + "->" + letters[:a], *ops)
                acc += h[len(part)] * outer
            tensors[(a, 0)] = tensors[(a, 0)] + acc
        return value, tensors


def quadratic_tracking(path: PolynomialPath, **kw) -> QuadraticTracking:
    return QuadraticTracking(path, **kw)


def switching_blend(path1: PolynomialPath, path2: PolynomialPath,
                    center: float, width: float, **kw) -> SwitchingBlend:
    return SwitchingBlend(path1, path2, center, width, **kw)


def barrier_sum(path1: PolynomialPath, path2: PolynomialPath,
                max_sq_distance: float, gain: float, **kw) -> BarrierSum:
    return BarrierSum(path1, path2, max_sq_distance, gain, **kw)
