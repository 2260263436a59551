"""Control-affine plants carrying their feedback-linearization data.

Each plant supplies, in closed form: the physical dynamics, the dynamic
compensator shape (u = alpha + beta w, zeta_dot = gamma + delta w), the
decoupling pair (p, R) with y^(r_i) = p_i + (R w)_i, and the per-channel
output derivative stacks.  A numerical validator cross-checks all of it by
differentiating the outputs along simulated trajectories.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .derivatives import DerivativeStack
from .errors import ConfigError, SingularityError, ValidationError


@dataclass(frozen=True)
class StateLayout:
    """Flat packing of the composite state (x, zeta, xi)."""

    n: int
    c: int
    a: int = 0

    @property
    def total(self) -> int:
        return self.n + self.c + self.a

    def pack(self, x, zeta, xi=None) -> np.ndarray:
        parts = [np.asarray(x, dtype=float).ravel(),
                 np.asarray(zeta, dtype=float).ravel()]
        if self.a:
            parts.append(np.asarray(xi, dtype=float).ravel())
        return np.concatenate(parts) if len(parts) > 1 else parts[0].copy()

    def unpack(self, z: np.ndarray):
        x = z[:self.n]
        zeta = z[self.n:self.n + self.c]
        xi = z[self.n + self.c:self.total]
        return x, zeta, xi


class PlantModel:
    """Base class: square control-affine plant plus compensator data."""

    state_dim: int
    output_dim: int
    compensator_dim: int
    relative_degrees: tuple[int, ...]

    # -- data maps, supplied by subclasses -----------------------------------

    def plant_dynamics(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Physical state rates xdot = f(x) + G(x) u."""
        raise NotImplementedError

    def alpha_beta(self, x, zeta):
        """Compensator output shape: u = alpha + beta @ w."""
        raise NotImplementedError

    def gamma_delta(self, x, zeta):
        """Compensator state shape: zeta_dot = gamma + delta @ w."""
        raise NotImplementedError

    def decoupling(self, x, zeta):
        """Drift/decoupling pair (p, R) with y^(r) = p + R @ w."""
        raise NotImplementedError

    def channel_stacks(self, x, zeta) -> list[np.ndarray]:
        """Per-channel output derivatives [y_i, y_i', ..., y_i^(r_i - 1)]."""
        raise NotImplementedError

    # -- derived conveniences -------------------------------------------------

    @property
    def max_degree(self) -> int:
        return max(self.relative_degrees)

    @property
    def is_uniform(self) -> bool:
        return len(set(self.relative_degrees)) == 1

    @property
    def layout(self) -> StateLayout:
        return StateLayout(self.state_dim, self.compensator_dim, 0)

    def physical_input(self, x, zeta, w) -> np.ndarray:
        alpha, beta = self.alpha_beta(x, zeta)
        return alpha + beta @ w

    def composite_rates(self, x, zeta, w):
        """State rates of plant + compensator driven by the new input w."""
        u = self.physical_input(x, zeta, w)
        gamma, delta = self.gamma_delta(x, zeta)
        return self.plant_dynamics(x, u), gamma + delta @ w

    def output_map(self, x, zeta) -> DerivativeStack:
        """Uniform-degree derivative stack [y, y', ..., y^(r-1)]."""
        if not self.is_uniform:
            raise ConfigError(
                "output_map needs uniform relative degrees; attach auxiliary "
                "chains first")
        stacks = self.channel_stacks(x, zeta)
        return DerivativeStack(np.stack(stacks, axis=1))


class IntegratorPlant(PlantModel):
    """xdot = u, y = x: relative degree one in every channel."""

    def __init__(self, m: int):
        if m < 1:
            raise ConfigError("integrator needs at least one channel")
        self.state_dim = m
        self.output_dim = m
        self.compensator_dim = 0
        self.relative_degrees = (1,) * m

    def plant_dynamics(self, x, u):
        return np.asarray(u, dtype=float)

    def alpha_beta(self, x, zeta):
        m = self.output_dim
        return np.zeros(m), np.eye(m)

    def gamma_delta(self, x, zeta):
        return np.zeros(0), np.zeros((0, self.output_dim))

    def decoupling(self, x, zeta):
        m = self.output_dim
        return np.zeros(m), np.eye(m)

    def channel_stacks(self, x, zeta):
        return [np.array([x[i]]) for i in range(self.output_dim)]


class WMRPlant(PlantModel):
    """Nonholonomic wheeled mobile robot with a speed compensator.

    State (x1, x2, x3): planar position and heading, with
        x1' = cos(x3) u1,  x2' = sin(x3) u1,  x3' = u2,  y = (x1, x2).
    The forward speed u1 is promoted to a compensator state zeta1 with
    zeta1' = w1 and u2 = w2, which gives the composite system relative
    degree {2, 2} and
        y'' = R(x3, zeta1) @ (w1, w2),
        R = [[cos x3, -sin x3 * zeta1], [sin x3, cos x3 * zeta1]].
    R is invertible iff zeta1 != 0; control evaluation aborts when
    |zeta1| < singularity_epsilon.
    """

    def __init__(self, singularity_epsilon: float = 1e-6):
        if singularity_epsilon <= 0:
            raise ConfigError("singularity_epsilon must be positive")
        self.state_dim = 3
        self.output_dim = 2
        self.compensator_dim = 1
        self.relative_degrees = (2, 2)
        self.singularity_epsilon = float(singularity_epsilon)

    def plant_dynamics(self, x, u):
        return np.array([math.cos(x[2]) * u[0], math.sin(x[2]) * u[0], u[1]])

    def alpha_beta(self, x, zeta):
        return np.array([zeta[0], 0.0]), np.array([[0.0, 0.0], [0.0, 1.0]])

    def gamma_delta(self, x, zeta):
        return np.zeros(1), np.array([[1.0, 0.0]])

    def decoupling(self, x, zeta):
        if abs(zeta[0]) < self.singularity_epsilon:
            raise SingularityError(
                f"forward speed |u1| = {abs(zeta[0]):.3e} below "
                f"{self.singularity_epsilon:.1e}; decoupling matrix singular")
        c, s = math.cos(x[2]), math.sin(x[2])
        R = np.array([[c, -s * zeta[0]], [s, c * zeta[0]]])
        return np.zeros(2), R

    def channel_stacks(self, x, zeta):
        c, s = math.cos(x[2]), math.sin(x[2])
        return [np.array([x[0], c * zeta[0]]), np.array([x[1], s * zeta[0]])]


class ParallelPlants(PlantModel):
    """Block-diagonal composition of independent plants (shared time axis)."""

    def __init__(self, *plants: PlantModel):
        if not plants:
            raise ConfigError("need at least one plant")
        self.plants = plants
        self.state_dim = sum(p.state_dim for p in plants)
        self.output_dim = sum(p.output_dim for p in plants)
        self.compensator_dim = sum(p.compensator_dim for p in plants)
        self.relative_degrees = tuple(r for p in plants for r in p.relative_degrees)
        self._x_off = np.cumsum([0] + [p.state_dim for p in plants])
        self._z_off = np.cumsum([0] + [p.compensator_dim for p in plants])
        self._u_off = np.cumsum([0] + [p.output_dim for p in plants])

    def _split(self, x, zeta):
        for i, p in enumerate(self.plants):
            yield (p, x[self._x_off[i]:self._x_off[i + 1]],
                   zeta[self._z_off[i]:self._z_off[i + 1]])

    def plant_dynamics(self, x, u):
        return np.concatenate([
            p.plant_dynamics(x[self._x_off[i]:self._x_off[i + 1]],
                             u[self._u_off[i]:self._u_off[i + 1]])
            for i, p in enumerate(self.plants)])

    def alpha_beta(self, x, zeta):
        parts = [p.alpha_beta(xp, zp) for p, xp, zp in self._split(x, zeta)]
        alpha = np.concatenate([a for a, _ in parts])
        beta = _block_diag([b for _, b in parts])
        return alpha, beta

    def gamma_delta(self, x, zeta):
        gammas, deltas = [], []
        for i, (p, xp, zp) in enumerate(self._split(x, zeta)):
            g, d = p.gamma_delta(xp, zp)
            gammas.append(g)
            pad = np.zeros((p.compensator_dim, self.output_dim))
            pad[:, self._u_off[i]:self._u_off[i + 1]] = d
            deltas.append(pad)
        return np.concatenate(gammas), np.vstack(deltas) if deltas else np.zeros((0, self.output_dim))

    def decoupling(self, x, zeta):
        parts = [p.decoupling(xp, zp) for p, xp, zp in self._split(x, zeta)]
        p_vec = np.concatenate([pv for pv, _ in parts])
        R = _block_diag([r for _, r in parts])
        return p_vec, R

    def channel_stacks(self, x, zeta):
        out = []
        for p, xp, zp in self._split(x, zeta):
            out.extend(p.channel_stacks(xp, zp))
        return out


def _block_diag(blocks: list[np.ndarray]) -> np.ndarray:
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


class ChainExtendedPlant(PlantModel):
    """Plant extended with per-channel integrator chains to uniform degree k.

    Channel i with base degree r_i < k gains a chain xi^i of length k - r_i:
    its new input v_i is the chain head xi^i_1, interior states shift, and
    the chain tail is driven by the outer input s_i.  Channels already at
    degree k take v_i = s_i directly.
    """

    def __init__(self, base: PlantModel, k: int):
        if k < base.max_degree:
            raise ConfigError(
                f"target order {k} below the largest relative degree {base.max_degree}")
        self.base = base
        self.order = k
        self.state_dim = base.state_dim
        self.output_dim = base.output_dim
        self.compensator_dim = base.compensator_dim
        self.relative_degrees = (k,) * base.output_dim
        self.chain_lengths = tuple(k - r for r in base.relative_degrees)
        self.aux_dim = sum(self.chain_lengths)
        self._chain_off = np.cumsum([0] + list(self.chain_lengths))

    @property
    def layout(self) -> StateLayout:
        return StateLayout(self.state_dim, self.compensator_dim, self.aux_dim)

    def chains(self, xi: np.ndarray) -> list[np.ndarray]:
        return [xi[self._chain_off[i]:self._chain_off[i + 1]]
                for i in range(self.output_dim)]

    def alpha_beta_tilde(self, xi: np.ndarray):
        """v = alpha_tilde(xi) + beta_tilde @ s routing chains and direct inputs."""
        alpha_t = np.zeros(self.output_dim)
        beta_diag = np.zeros(self.output_dim)
        for i, chain in enumerate(self.chains(xi)):
            if chain.shape[0]:
                alpha_t[i] = chain[0]
            else:
                beta_diag[i] = 1.0
        return alpha_t, np.diag(beta_diag)

    def xi_rates(self, xi: np.ndarray, s: np.ndarray) -> np.ndarray:
        out = np.empty_like(xi)
        for i in range(self.output_dim):
            lo, hi = self._chain_off[i], self._chain_off[i + 1]
            if hi > lo:
                out[lo:hi - 1] = xi[lo + 1:hi]
                out[hi - 1] = s[i]
        return out

    def output_stack(self, x, zeta, xi) -> DerivativeStack:
        """Order-k stack: base channel derivatives continued by chain states."""
        rows = np.empty((self.order, self.output_dim))
        base_stacks = self.base.channel_stacks(x, zeta)
        for i, chain in enumerate(self.chains(xi)):
            r = self.base.relative_degrees[i]
            rows[:r, i] = base_stacks[i]
            rows[r:, i] = chain
        return DerivativeStack(rows)

    # base maps pass through
    def plant_dynamics(self, x, u):
        return self.base.plant_dynamics(x, u)

    def alpha_beta(self, x, zeta):
        return self.base.alpha_beta(x, zeta)

    def gamma_delta(self, x, zeta):
        return self.base.gamma_delta(x, zeta)

    def decoupling(self, x, zeta):
        return self.base.decoupling(x, zeta)

    def channel_stacks(self, x, zeta):
        return self.base.channel_stacks(x, zeta)


def integrator_plant(m: int) -> IntegratorPlant:
    """m-channel integrator: xdot = u, y = x."""
    return IntegratorPlant(m)


def wmr_plant(singularity_epsilon: float = 1e-6) -> WMRPlant:
    """Wheeled mobile robot with dynamic speed compensator."""
    return WMRPlant(singularity_epsilon)


def attach_auxiliary_chains(plant: PlantModel, k: int) -> ChainExtendedPlant:
    """Extend every channel of a plant to uniform relative degree k."""
    return ChainExtendedPlant(plant, k)


def validate_linearization(plant: PlantModel, samples, tolerance: float = 1e-6,
                           inputs_per_sample: int = 3, seed: int = 0,
                           fd_step: float = 1e-4):
    """Numerically check the plant's decoupling data and derivative stacks.

    For each sample state and several random constant inputs w, the output
    stacks are finite-differenced along short simulated trajectories and
    compared against (i) the next stack entry (which also confirms that
    derivatives below the relative degree are input-independent) and
    (ii) p + R @ w at the top order.  Samples where the decoupling matrix
    is singular are excluded and flagged.  Raises ValidationError when any
    residual exceeds the tolerance.
    """
    rng = np.random.default_rng(seed)
    results, singular, failures = [], [], []
    for idx, (x0, zeta0) in enumerate(samples):
        x0 = np.asarray(x0, dtype=float)
        zeta0 = np.asarray(zeta0, dtype=float)
        try:
            p_vec, R = plant.decoupling(x0, zeta0)
        except SingularityError:
            singular.append(idx)
            continue
        if np.linalg.cond(R) > 1e8:
            singular.append(idx)
            continue
        worst = 0.0
        center = plant.channel_stacks(x0, zeta0)
        for _ in range(inputs_per_sample):
            w = rng.standard_normal(plant.output_dim)
            plus = _flow_stacks(plant, x0, zeta0, w, fd_step)
            minus = _flow_stacks(plant, x0, zeta0, w, -fd_step)
            target = p_vec + R @ w
            for i, r in enumerate(plant.relative_degrees):
                for j in range(r):
                    fd = (plus[i][j] - minus[i][j]) / (2 * fd_step)
                    ref = center[i][j + 1] if j + 1 < r else target[i]
                    worst = max(worst, abs(fd - ref) / max(1.0, abs(ref)))
        results.append((idx, worst))
        if worst > tolerance:
            failures.append((idx, worst))
    report = {
        "max_residual": max((w for _, w in results), default=0.0),
        "residuals": results,
        "singular_samples": singular,
        "failures": failures,
    }
    if failures:
        raise ValidationError(f"linearization check failed at samples {failures}")
    return report


def _flow_stacks(plant: PlantModel, x0, zeta0, w, h: float):
    """Channel stacks after flowing the composite dynamics for time h (RK4)."""
    steps = 4
    dt = h / steps
    x, zeta = x0.copy(), zeta0.copy()
    for _ in range(steps):
        x, zeta = _rk4_step(plant, x, zeta, w, dt)
    return plant.channel_stacks(x, zeta)


def _rk4_step(plant, x, zeta, w, dt):
    k1 = plant.composite_rates(x, zeta, w)
    k2 = plant.composite_rates(x + 0.5 * dt * k1[0], zeta + 0.5 * dt * k1[1], w)
    k3 = plant.composite_rates(x + 0.5 * dt * k2[0], zeta + 0.5 * dt * k2[1], w)
    k4 = plant.composite_rates(x + dt * k3[0], zeta + dt * k3[1], w)
    x_new = x + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    z_new = zeta + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return x_new, z_new
