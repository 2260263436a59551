"""Total time derivatives of gradient/Hessian fields along a trajectory.

The j-th total derivative of the gradient g(t) = grad_y f0(y(t), t) follows
the binomial recursion

    g^(j) = sum_{m=0}^{j-1} C(j-1, m) * Hess^(m) @ y^(j-m) + mixed^(j-1),

where Hess^(m) and mixed^(m) are total time derivatives of the Hessian and
of the mixed partial d/dt grad_y f0.  Those inner totals are expanded by
the multivariate chain rule over the stored partial tensors; the expansion
is compiled once per (tensor, order) pair into a flat list of contraction
terms and cached.
"""
from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np

from .errors import OrderError

# A term is (coeff, a, b, ks): coeff * partial tensor d^a_y d^b_t f0
# contracted with y^(k) for each k in ks (ks sorted descending).
Term = tuple[int, int, int, tuple[int, ...]]


class DerivativeStack:
    """The output and its total time derivatives [y, y', ..., y^(order-1)]."""

    def __init__(self, derivs):
        derivs = np.atleast_2d(np.asarray(derivs, dtype=float))
        if not np.all(np.isfinite(derivs)):
            raise ValueError("derivative stack contains non-finite entries")
        self.derivs = derivs

    @property
    def order(self) -> int:
        return self.derivs.shape[0]

    @property
    def dim(self) -> int:
        return self.derivs.shape[1]

    def __getitem__(self, j: int) -> np.ndarray:
        if j >= self.order:
            raise OrderError(f"y^({j}) not available in a stack of order {self.order}")
        return self.derivs[j]


def _differentiate_term(term: Term) -> list[Term]:
    """One d/dt application: chain rule on the tensor, product rule on ks."""
    coeff, a, b, ks = term
    out = [
        (coeff, a + 1, b, tuple(sorted(ks + (1,), reverse=True))),
        (coeff, a, b + 1, ks),
    ]
    for i in range(len(ks)):
        bumped = ks[:i] + (ks[i] + 1,) + ks[i + 1:]
        out.append((coeff, a, b, tuple(sorted(bumped, reverse=True))))
    return out


def _merge(terms: list[Term]) -> tuple[Term, ...]:
    acc: dict[tuple[int, int, tuple[int, ...]], int] = {}
    for coeff, a, b, ks in terms:
        acc[(a, b, ks)] = acc.get((a, b, ks), 0) + coeff
    merged = [(c, a, b, ks) for (a, b, ks), c in acc.items() if c != 0]
    merged.sort(key=lambda t: (t[1], t[2], t[3]))
    return tuple(merged)


@lru_cache(maxsize=None)
def total_derivative_plan(a: int, b: int, order: int) -> tuple[Term, ...]:
    """Contraction plan for the order-th total derivative of d^a_y d^b_t f0."""
    terms: tuple[Term, ...] = ((1, a, b, ()),)
    for _ in range(order):
        expanded: list[Term] = []
        for term in terms:
            expanded.extend(_differentiate_term(term))
        terms = _merge(expanded)
    return terms


def evaluate_plan(plan: tuple[Term, ...], partials, stack: DerivativeStack) -> np.ndarray:
    """Evaluate a contraction plan against partial tensors and a stack."""
    tensors = partials.tensors
    out = None
    for coeff, a, b, ks in plan:
        if (a, b) not in tensors:
            raise OrderError(
                f"partial tensor of order ({a},{b}) not available "
                f"(max total order {partials.max_order})")
        val = tensors[(a, b)]
        for k in ks:
            vec = stack[k]
            val = np.tensordot(val, vec, axes=(val.ndim - 1, 0))
        term = coeff * val if coeff != 1 else val
        out = term if out is None else out + term
    return out


def total_gradient_derivative(partials, stack: DerivativeStack, j: int) -> np.ndarray:
    """j-th total time derivative of grad_y f0 along the stacked trajectory.

    j = 0 returns the gradient itself.  For j >= 1 the binomial recursion is
    used, with the Hessian/mixed-partial totals expanded by the chain rule.
    Requires partial tensors up to total order j+1 and y-derivatives up to
    y^(j) in the stack.
    """
    if j == 0:
        return evaluate_plan(total_derivative_plan(1, 0, 0), partials, stack)
    out = None
    for m in range(j):
        hess_m = evaluate_plan(total_derivative_plan(2, 0, m), partials, stack)
        term = comb(j - 1, m) * (hess_m @ stack[j - m])
        out = term if out is None else out + term
    out = out + evaluate_plan(total_derivative_plan(1, 1, j - 1), partials, stack)
    return out


# Central finite-difference stencils (offset -> weight), denominators h^j.
_FD_STENCILS = {
    1: ({-1: -0.5, 1: 0.5}, 1e-5),
    2: ({-1: 1.0, 0: -2.0, 1: 1.0}, 3e-4),
    3: ({-3: 1 / 8, -2: -1.0, -1: 13 / 8, 1: -13 / 8, 2: 1.0, 3: -1 / 8}, 5e-3),
    4: ({-3: -1 / 6, -2: 2.0, -1: -13 / 2, 0: 28 / 3,
         1: -13 / 2, 2: 2.0, 3: -1 / 6}, 3e-2),
}


def finite_difference_gradient_derivative(objective, trajectory, t: float, j: int,
                                          h: float | None = None) -> np.ndarray:
    """Oracle: j-th total derivative of grad_y f0(y(t), t) by finite differences.

    Differentiates the composed map t -> grad_y f0(y(t), t) with a central
    stencil; independent of the chain-rule engine, intended for tests only.
    `trajectory` maps t to y(t) (a PolynomialPath works).
    """
    if j == 0:
        return objective.partials(np.asarray(trajectory(t), dtype=float), t, order=1).gradient
    if j not in _FD_STENCILS:
        raise OrderError(f"no finite-difference stencil for order {j}")
    weights, default_h = _FD_STENCILS[j]
    step = default_h if h is None else h
    out = None
    for offset, w in sorted(weights.items()):
        ts = t + offset * step
        grad = objective.partials(np.asarray(trajectory(ts), dtype=float), ts, order=1).gradient
        term = w * grad
        out = term if out is None else out + term
    return out / step ** j
