import math

import numpy as np
import pytest

import tvoptctl as tv
from tvoptctl.derivatives import DerivativeStack
from tvoptctl.errors import ConfigError, GainError, SingularityError, SolveError
from tvoptctl.objectives import Objective
from tvoptctl.planner import (closed_loop_error_matrix, control_input_nonuniform,
                              control_input_uniform, design_gains,
                              plan_output_derivative)

from test_plants import TwoChannelMixedDegree


class ScaledObjective(Objective):
    """kappa * f0 wrapper for the scale-covariance property."""

    def __init__(self, inner, kappa):
        super().__init__(inner.output_dim, kappa * inner.strong_convexity,
                         inner.max_partial_order)
        self.inner, self.kappa = inner, kappa

    def _evaluate(self, y, t, order):
        value, tensors = self.inner._evaluate(y, t, order)
        return self.kappa * value, {key: self.kappa * T for key, T in tensors.items()}


def test_design_gains_two_pole_example():
    gains = design_gains([-2.0, -3.0], m=2)
    np.testing.assert_allclose(gains.coefficients, [-6.0, -5.0])
    assert gains.spectral_abscissa == pytest.approx(-2.0)
    assert gains.bound_alpha == pytest.approx(2.0)
    assert gains.bound_c >= 1.0
    H = closed_loop_error_matrix(gains)
    np.testing.assert_allclose(H[:2, 2:], np.eye(2))
    np.testing.assert_allclose(H[2:, :2], -6.0 * np.eye(2))
    np.testing.assert_allclose(H[2:, 2:], -5.0 * np.eye(2))
    np.testing.assert_allclose(np.sort(np.linalg.eigvals(H).real),
                               [-3.0, -3.0, -2.0, -2.0], atol=1e-12)


def test_design_gains_single_pole_matches_gradient_flow():
    gains = design_gains([-4.0], m=3)
    np.testing.assert_allclose(gains.coefficients, [-4.0])
    np.testing.assert_allclose(closed_loop_error_matrix(gains), -4.0 * np.eye(3))
    assert gains.bound_c == 1.0


def test_design_gains_rejects_bad_sets():
    with pytest.raises(GainError):
        design_gains([0.0], m=1)
    with pytest.raises(GainError):
        design_gains([1.0, -2.0], m=1)
    with pytest.raises(GainError):
        design_gains([complex(-1, 2), complex(-1, 3)], m=1)  # not conjugate-closed


def test_pole_round_trip_random_sets():
    rng = np.random.default_rng(4)
    for _ in range(25):
        k = int(rng.integers(1, 5))
        poles = []
        while len(poles) < k:
            if k - len(poles) >= 2 and rng.random() < 0.5:
                re, im = -rng.uniform(0.5, 4.0), rng.uniform(0.1, 3.0)
                poles += [complex(re, im), complex(re, -im)]
            else:
                poles.append(complex(-rng.uniform(0.5, 4.0), 0.0))
        m = int(rng.integers(1, 4))
        gains = design_gains(poles, m=m)
        eigs = list(np.linalg.eigvals(closed_loop_error_matrix(gains)))
        # greedy nearest matching: each pole appears with multiplicity m
        for pole in np.repeat(np.array(poles), m):
            dists = [abs(e - pole) for e in eigs]
            idx = int(np.argmin(dists))
            assert dists[idx] <= 1e-9
            eigs.pop(idx)


def test_plain_companion_for_scalar_output():
    gains = design_gains([-1.0, -2.0, -4.0], m=1)
    H = closed_loop_error_matrix(gains)
    assert H.shape == (3, 3)
    np.testing.assert_allclose(H[0], [0.0, 1.0, 0.0])
    np.testing.assert_allclose(H[1], [0.0, 0.0, 1.0])


def test_repeated_pole_bound_certifies_matrix_exponential():
    import scipy.linalg
    gains = design_gains([-1.0, -1.0], m=1)
    assert gains.bound_alpha == pytest.approx(1.0 - 1e-3)
    assert gains.bound_c >= 1.0
    H = closed_loop_error_matrix(gains)
    for t in np.linspace(0.0, 40.0, 300):
        norm = np.linalg.norm(scipy.linalg.expm(H * t), 2)
        assert norm <= gains.bound_c * math.exp(-gains.bound_alpha * t) + 1e-12


def pd_setup(rng):
    path = tv.PolynomialPath(rng.standard_normal((2, 4)))
    obj = tv.quadratic_tracking(path)
    gains = design_gains([-2.0, -3.0], m=2)
    t = rng.uniform(0.0, 2.0)
    stack = DerivativeStack(rng.standard_normal((2, 2)))
    return path, obj, gains, t, stack


def test_pd_reduction_on_quadratic_tracking():
    # order-2 solution equals the classical PD law on quadratic objectives
    rng = np.random.default_rng(12)
    kp, kd = 6.0, 5.0
    for _ in range(300):
        path, obj, gains, t, stack = pd_setup(rng)
        partials = obj.partials(stack[0], t, order=3)
        y_imp = plan_output_derivative(partials, stack, gains)
        pd = (path.eval(t, 2) - kp * (stack[0] - path.eval(t, 0))
              - kd * (stack[1] - path.eval(t, 1)))
        np.testing.assert_allclose(y_imp, pd, atol=1e-12)


def test_pure_feedforward_at_matched_optimum():
    rng = np.random.default_rng(13)
    path, obj, gains, t, _ = pd_setup(rng)
    stack = DerivativeStack(path.derivatives(t, 2))
    partials = obj.partials(stack[0], t, order=3)
    y_imp = plan_output_derivative(partials, stack, gains)
    np.testing.assert_allclose(y_imp, path.eval(t, 2), atol=1e-12)


def test_first_order_law_is_prediction_plus_correction():
    rng = np.random.default_rng(14)
    path = tv.PolynomialPath(rng.standard_normal((2, 4)))
    obj = tv.quadratic_tracking(path)
    gains = design_gains([-1.5], m=2)
    t, y = 0.4, np.array([1.0, -2.0])
    partials = obj.partials(y, t, order=2)
    y_imp = plan_output_derivative(partials, DerivativeStack([y]), gains)
    np.testing.assert_allclose(y_imp, path.eval(t, 1) - 1.5 * (y - path(t)),
                               atol=1e-12)


def test_scale_covariance_of_planned_derivative():
    rng = np.random.default_rng(15)
    for kappa in (0.25, 3.0, 117.0):
        path, obj, gains, t, stack = pd_setup(rng)
        scaled = ScaledObjective(obj, kappa)
        base = plan_output_derivative(obj.partials(stack[0], t, order=3), stack, gains)
        scl = plan_output_derivative(scaled.partials(stack[0], t, order=3), stack, gains)
        np.testing.assert_allclose(scl, base, atol=1e-12)


def test_stack_order_must_match_gain_order():
    rng = np.random.default_rng(16)
    path, obj, gains, t, _ = pd_setup(rng)
    with pytest.raises(ConfigError):
        plan_output_derivative(obj.partials([0.0, 0.0], t, order=3),
                               DerivativeStack(np.zeros((1, 2))), gains)


def test_singular_hessian_raises_solve_error():
    class Degenerate(Objective):
        def __init__(self):
            super().__init__(1, strong_convexity=1.0, max_partial_order=3)

        def _evaluate(self, y, t, order):
            tensors = {(a, b): np.zeros((1,) * a)
                       for a in range(1, order + 1) for b in range(order - a + 1)}
            return 0.0, tensors

    gains = design_gains([-1.0], m=1)
    with pytest.raises(SolveError):
        plan_output_derivative(Degenerate().partials([0.0], 0.0, order=2),
                               DerivativeStack([[0.0]]), gains)


def test_uniform_control_on_integrator_first_order():
    rng = np.random.default_rng(18)
    path = tv.PolynomialPath(rng.standard_normal((2, 4)))
    obj = tv.quadratic_tracking(path)
    plant = tv.integrator_plant(2)
    gains = design_gains([-2.5], m=2)
    y = rng.standard_normal(2)
    act = control_input_uniform(plant, obj, gains, 0.3, y, np.zeros(0),
                                diagnostics=True)
    expected = path.eval(0.3, 1) - 2.5 * (y - path(0.3))
    np.testing.assert_allclose(act.u, expected, atol=1e-12)
    assert act.diagnostics.decoupling_condition_number == pytest.approx(1.0)
    assert act.diagnostics.gradient_stack_norms.shape == (1,)


def test_uniform_control_wmr_identity_decoupling_point():
    path = tv.constant_path([1.0, 1.0])
    obj = tv.quadratic_tracking(path)
    plant = tv.wmr_plant()
    gains = design_gains([-2.0, -3.0], m=2)
    x, zeta = np.array([0.0, 0.0, 0.0]), np.array([1.0])
    act = control_input_uniform(plant, obj, gains, 0.0, x, zeta, diagnostics=True)
    # R = I there, so w equals the planned second derivative
    np.testing.assert_allclose(act.w, act.diagnostics.y_imp, atol=1e-14)
    np.testing.assert_allclose(act.u, [zeta[0], act.w[1]], atol=1e-14)
    np.testing.assert_allclose(act.zeta_dot, [act.w[0]], atol=1e-14)


def test_uniform_control_wmr_singularity():
    obj = tv.quadratic_tracking(tv.constant_path([1.0, 1.0]))
    gains = design_gains([-2.0, -3.0], m=2)
    with pytest.raises(SingularityError):
        control_input_uniform(tv.wmr_plant(), obj, gains, 0.0,
                              np.zeros(3), np.array([1e-9]))


def test_uniform_control_requires_matching_degrees():
    obj = tv.quadratic_tracking(tv.constant_path([1.0, 1.0]))
    gains = design_gains([-2.0, -3.0], m=2)
    with pytest.raises(ConfigError):
        control_input_uniform(tv.integrator_plant(2), obj, gains, 0.0,
                              np.zeros(2), np.zeros(0))


def test_nonuniform_control_routes_chain_head():
    plant = tv.attach_auxiliary_chains(TwoChannelMixedDegree(), 2)
    obj = tv.quadratic_tracking(tv.constant_path([0.0, 0.0]))
    gains = design_gains([-2.0, -3.0], m=2)
    x, xi = np.array([1.0, -1.0, 0.5]), np.array([0.25])
    act = control_input_nonuniform(plant, obj, gains, 0.0, x, np.zeros(0), xi,
                                   diagnostics=True)
    s = act.diagnostics.y_imp
    # channel 1 is driven by the chain head, its chain tail by s_1
    np.testing.assert_allclose(act.u[0], xi[0])
    np.testing.assert_allclose(act.u[1], s[1])
    np.testing.assert_allclose(act.xi_dot, [s[0]])


def test_nonuniform_empty_chains_bit_for_bit():
    plant = tv.wmr_plant()
    ext = tv.attach_auxiliary_chains(plant, 2)
    obj = tv.switching_blend(tv.constant_path([0.0, 0.0]),
                             tv.constant_path([2.0, 1.0]), center=1.0, width=0.5)
    gains = design_gains([-2.0, -3.0], m=2)
    rng = np.random.default_rng(19)
    for _ in range(20):
        x = rng.standard_normal(3)
        zeta = np.array([rng.uniform(0.3, 2.0)])
        t = rng.uniform(0.0, 2.0)
        a = control_input_uniform(plant, obj, gains, t, x, zeta)
        b = control_input_nonuniform(ext, obj, gains, t, x, zeta, np.zeros(0))
        assert np.array_equal(a.u, b.u)
        assert np.array_equal(a.zeta_dot, b.zeta_dot)


def test_nonuniform_requires_extended_plant_and_matching_order():
    obj = tv.quadratic_tracking(tv.constant_path([0.0, 0.0]))
    gains = design_gains([-2.0, -3.0], m=2)
    with pytest.raises(ConfigError):
        control_input_nonuniform(tv.wmr_plant(), obj, gains, 0.0,
                                 np.zeros(3), np.ones(1), np.zeros(0))
    ext = tv.attach_auxiliary_chains(TwoChannelMixedDegree(), 3)
    with pytest.raises(ConfigError):
        control_input_nonuniform(ext, obj, gains, 0.0, np.zeros(3),
                                 np.zeros(0), np.zeros(3))
