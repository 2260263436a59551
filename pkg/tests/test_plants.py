import math

import numpy as np
import pytest

import tvoptctl as tv
from tvoptctl.errors import ConfigError, SingularityError, ValidationError
from tvoptctl.plants import ParallelPlants, PlantModel, StateLayout


class TwoChannelMixedDegree(PlantModel):
    """Synthetic plant with relative degrees {1, 2}: x1' = w1, x2'' = w2."""

    def __init__(self):
        self.state_dim = 3
        self.output_dim = 2
        self.compensator_dim = 0
        self.relative_degrees = (1, 2)

    def plant_dynamics(self, x, u):
        return np.array([u[0], x[2], u[1]])

    def alpha_beta(self, x, zeta):
        return np.zeros(2), np.eye(2)

    def gamma_delta(self, x, zeta):
        return np.zeros(0), np.zeros((0, 2))

    def decoupling(self, x, zeta):
        return np.zeros(2), np.eye(2)

    def channel_stacks(self, x, zeta):
        return [np.array([x[0]]), np.array([x[1], x[2]])]


def test_integrator_basics():
    plant = tv.integrator_plant(2)
    x = np.array([3.0, 4.0])
    stack = plant.output_map(x, np.zeros(0))
    np.testing.assert_allclose(stack[0], [3.0, 4.0])
    p, R = plant.decoupling(x, np.zeros(0))
    np.testing.assert_allclose(p, 0.0)
    np.testing.assert_allclose(R, np.eye(2))
    u = np.array([0.5, -2.0])
    np.testing.assert_allclose(plant.plant_dynamics(x, u), u)


def test_integrator_rejects_zero_channels():
    with pytest.raises(ConfigError):
        tv.integrator_plant(0)


def test_wmr_decoupling_at_zero_heading():
    plant = tv.wmr_plant()
    p, R = plant.decoupling(np.array([0.0, 0.0, 0.0]), np.array([1.0]))
    np.testing.assert_allclose(R, np.eye(2))
    np.testing.assert_allclose(p, 0.0)


def test_wmr_inverse_at_quarter_turn():
    # heading pi/2, unit speed: accelerating (0, 1) needs (w1, w2) = (1, 0)
    plant = tv.wmr_plant()
    _, R = plant.decoupling(np.array([0.0, 0.0, math.pi / 2]), np.array([1.0]))
    w = np.linalg.solve(R, np.array([0.0, 1.0]))
    np.testing.assert_allclose(w, [1.0, 0.0], atol=1e-12)


def test_wmr_singularity_raised():
    plant = tv.wmr_plant()
    with pytest.raises(SingularityError):
        plant.decoupling(np.zeros(3), np.array([0.0]))
    with pytest.raises(SingularityError):
        plant.decoupling(np.zeros(3), np.array([1e-9]))


def test_wmr_output_stack_velocity_row():
    plant = tv.wmr_plant()
    stack = plant.output_map(np.array([1.0, 2.0, 0.3]), np.array([0.7]))
    np.testing.assert_allclose(stack[0], [1.0, 2.0])
    np.testing.assert_allclose(stack[1], [0.7 * math.cos(0.3), 0.7 * math.sin(0.3)])


def test_attach_chains_mixed_degrees():
    ext = tv.attach_auxiliary_chains(TwoChannelMixedDegree(), 2)
    assert ext.relative_degrees == (2, 2)
    assert ext.chain_lengths == (1, 0)
    assert ext.aux_dim == 1
    # chain head feeds channel 1, direct input feeds channel 2
    alpha_t, beta_t = ext.alpha_beta_tilde(np.array([4.5]))
    np.testing.assert_allclose(alpha_t, [4.5, 0.0])
    np.testing.assert_allclose(beta_t, np.diag([0.0, 1.0]))
    s = np.array([9.0, -3.0])
    np.testing.assert_allclose(ext.xi_rates(np.array([4.5]), s), [9.0])
    stack = ext.output_stack(np.array([1.0, 2.0, 3.0]), np.zeros(0), np.array([4.5]))
    np.testing.assert_allclose(stack.derivs, [[1.0, 2.0], [4.5, 3.0]])


def test_attach_chains_identity_extension():
    plant = tv.wmr_plant()
    ext = tv.attach_auxiliary_chains(plant, 2)
    assert ext.aux_dim == 0
    assert ext.relative_degrees == (2, 2)
    alpha_t, beta_t = ext.alpha_beta_tilde(np.zeros(0))
    np.testing.assert_allclose(alpha_t, 0.0)
    np.testing.assert_allclose(beta_t, np.eye(2))


def test_attach_chains_integrator_to_third_order():
    ext = tv.attach_auxiliary_chains(tv.integrator_plant(2), 3)
    assert ext.relative_degrees == (3, 3)
    assert ext.aux_dim == 4
    assert ext.layout.total == 6


def test_attach_chains_order_too_low():
    with pytest.raises(ConfigError):
        tv.attach_auxiliary_chains(tv.wmr_plant(), 1)


def test_degree_bookkeeping_matches_state_dimension():
    # sum of relative degrees equals the composite state dimension
    for plant in (tv.integrator_plant(3),
                  tv.attach_auxiliary_chains(tv.integrator_plant(2), 3),
                  tv.attach_auxiliary_chains(TwoChannelMixedDegree(), 4),
                  tv.wmr_plant()):
        assert sum(plant.relative_degrees) == plant.layout.total


def test_parallel_plants_block_structure():
    pair = ParallelPlants(tv.wmr_plant(), tv.wmr_plant())
    assert pair.output_dim == 4
    assert pair.relative_degrees == (2, 2, 2, 2)
    x = np.array([0.0, 0.0, 0.0, 1.0, 1.0, math.pi / 2])
    zeta = np.array([1.0, 2.0])
    p, R = pair.decoupling(x, zeta)
    np.testing.assert_allclose(R[:2, :2], np.eye(2))
    np.testing.assert_allclose(R[2:, 2:], [[0.0, -2.0], [1.0, 0.0]], atol=1e-12)
    np.testing.assert_allclose(R[:2, 2:], 0.0)
    np.testing.assert_allclose(R[2:, :2], 0.0)
    stacks = pair.output_map(x, zeta)
    np.testing.assert_allclose(stacks[1], [1.0, 0.0, 0.0, 2.0], atol=1e-12)


def test_validate_linearization_wmr():
    rng = np.random.default_rng(7)
    samples = [(rng.standard_normal(3), [rng.uniform(0.5, 2.0)]) for _ in range(50)]
    report = tv.validate_linearization(tv.wmr_plant(), samples, tolerance=1e-6)
    assert report["max_residual"] <= 1e-6
    assert not report["singular_samples"]


def test_validate_linearization_integrator_near_exact():
    rng = np.random.default_rng(8)
    samples = [(rng.standard_normal(2), np.zeros(0)) for _ in range(10)]
    report = tv.validate_linearization(tv.integrator_plant(2), samples)
    assert report["max_residual"] <= 1e-9


def test_validate_linearization_flags_singular_sample():
    report = tv.validate_linearization(
        tv.wmr_plant(), [(np.zeros(3), [1e-9]), (np.zeros(3), [1.0])])
    assert report["singular_samples"] == [0]


def test_validate_linearization_catches_wrong_decoupling():
    class LyingWMR(tv.WMRPlant):
        def decoupling(self, x, zeta):
            p, R = super().decoupling(x, zeta)
            return p + 0.1, R

    with pytest.raises(ValidationError):
        tv.validate_linearization(LyingWMR(), [(np.zeros(3), [1.0])])


def test_state_layout_pack_unpack_roundtrip():
    layout = StateLayout(3, 1, 2)
    z = layout.pack([1.0, 2.0, 3.0], [4.0], [5.0, 6.0])
    x, zeta, xi = layout.unpack(z)
    np.testing.assert_allclose(x, [1.0, 2.0, 3.0])
    np.testing.assert_allclose(zeta, [4.0])
    np.testing.assert_allclose(xi, [5.0, 6.0])
