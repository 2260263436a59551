import numpy as np
import pytest

import tvoptctl as tv
from tvoptctl.derivatives import (DerivativeStack, evaluate_plan,
                                  finite_difference_gradient_derivative,
                                  total_derivative_plan, total_gradient_derivative)
from tvoptctl.errors import OrderError

from test_objectives import ExpQuadratic


def quadratic_setup(rng):
    path = tv.PolynomialPath(rng.standard_normal((2, 4)))
    obj = tv.quadratic_tracking(path)
    t = rng.uniform(0.0, 2.0)
    rows = rng.standard_normal((4, 2))
    return obj, path, t, DerivativeStack(rows)


def test_first_order_binomial_identity_is_exact():
    # j = 1 must evaluate to hessian @ ydot + mixed, the same float expression
    rng = np.random.default_rng(1)
    for _ in range(50):
        obj, path, t, stack = quadratic_setup(rng)
        p = obj.partials(stack[0], t, order=2)
        engine = total_gradient_derivative(p, stack, 1)
        direct = p.hessian @ stack[1] + p.tensors[(1, 1)]
        assert np.array_equal(engine, direct)


def test_quadratic_first_and_second_totals():
    rng = np.random.default_rng(2)
    obj, path, t, stack = quadratic_setup(rng)
    p = obj.partials(stack[0], t, order=3)
    np.testing.assert_allclose(total_gradient_derivative(p, stack, 1),
                               stack[1] - path.eval(t, 1), atol=1e-12)
    np.testing.assert_allclose(total_gradient_derivative(p, stack, 2),
                               stack[2] - path.eval(t, 2), atol=1e-12)


def test_exp_quadratic_total_derivative_value():
    # f0 = 0.5 e^t y^2 at y=2, ydot=3, t=0: d/dt grad = e^t (ydot + y) = 5
    obj = ExpQuadratic()
    stack = DerivativeStack([[2.0], [3.0]])
    p = obj.partials([2.0], 0.0, order=2)
    engine = total_gradient_derivative(p, stack, 1)
    assert engine[0] == pytest.approx(5.0, abs=1e-12)
    path = tv.PolynomialPath([[2.0, 3.0, 0.0, 0.0]])  # y(t) = 2 + 3t
    oracle = finite_difference_gradient_derivative(obj, path, 0.0, 1)
    assert oracle[0] == pytest.approx(5.0, rel=1e-6)


def test_engine_matches_oracle_on_parabola_track():
    # y(t) = (t, t^2) under quadratic tracking
    traj = tv.PolynomialPath([[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    ref = tv.PolynomialPath([[0.5, -1.0, 0.2, 0.0], [0.0, 0.7, 0.0, -0.1]])
    obj = tv.quadratic_tracking(ref)
    t = 0.9
    stack = DerivativeStack(traj.derivatives(t, 2))
    p = obj.partials(traj(t), t, order=2)
    engine = total_gradient_derivative(p, stack, 1)
    oracle = finite_difference_gradient_derivative(obj, traj, t, 1)
    rel = np.linalg.norm(engine - oracle) / np.linalg.norm(oracle)
    assert rel <= 1e-6


def test_oracle_zero_for_constant_setup():
    obj = tv.quadratic_tracking(tv.constant_path([0.0, 0.0]))
    traj = tv.constant_path([1.0, 2.0])
    for j in (1, 2, 3):
        np.testing.assert_allclose(
            finite_difference_gradient_derivative(obj, traj, 0.5, j), 0.0, atol=1e-6)


def test_lemma_consistency_randomized():
    from tvoptctl.cli import lemma_property_suite
    worst = lemma_property_suite([1, 2, 3], trials=60, seed=123)
    for order, err in worst.items():
        assert err <= 1e-5, f"order {order}: {err}"


def test_plan_cache_structure():
    # order-0 plan of the gradient is the tensor itself
    assert total_derivative_plan(1, 0, 0) == ((1, 1, 0, ()),)
    # d/dt grad = T(2,0) . y^(1) + T(1,1)
    assert set(total_derivative_plan(1, 0, 1)) == {(1, 2, 0, (1,)), (1, 1, 1, ())}
    # second derivative picks up the binomial weight on the middle term
    plan2 = dict(((a, b, ks), c) for c, a, b, ks in total_derivative_plan(1, 0, 2))
    assert plan2[(2, 0, (2,))] == 1
    assert plan2[(3, 0, (1, 1))] == 1
    assert plan2[(2, 1, (1,))] == 2
    assert plan2[(1, 2, ())] == 1


def test_missing_partials_raise_order_error():
    obj = tv.quadratic_tracking(tv.constant_path([0.0, 0.0]), max_partial_order=2)
    stack = DerivativeStack(np.zeros((3, 2)))
    p = obj.partials([1.0, 0.0], 0.0, order=2)
    with pytest.raises(OrderError):
        total_gradient_derivative(p, stack, 2)  # needs total order 3


def test_missing_stack_entries_raise_order_error():
    obj = tv.quadratic_tracking(tv.constant_path([0.0, 0.0]))
    stack = DerivativeStack(np.zeros((1, 2)))
    p = obj.partials([1.0, 0.0], 0.0, order=3)
    with pytest.raises(OrderError):
        total_gradient_derivative(p, stack, 1)  # needs y^(1)


def test_stack_rejects_non_finite():
    with pytest.raises(ValueError):
        DerivativeStack([[np.inf, 0.0]])


def test_oracle_rejects_unknown_order():
    obj = tv.quadratic_tracking(tv.constant_path([0.0, 0.0]))
    with pytest.raises(OrderError):
        finite_difference_gradient_derivative(obj, tv.constant_path([0.0, 0.0]), 0.0, 5)
