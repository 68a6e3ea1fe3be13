"""1D homogeneous BGK relaxation model: explicit Euler solver and the
training-data generator (perturbed-Maxwellian initial conditions evolved into
trajectories)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinetic import DistributionField, Macroscopics, maxwellian, moments
from .numerics import Rng, VelocityGrid

__all__ = [
    "BgkConfig",
    "Trajectory",
    "BgkDataset",
    "bgk_rhs",
    "bgk_step",
    "sample_bgk_initial",
    "generate_bgk_trajectory",
    "generate_bgk_dataset",
    "PERTURBATION_MODES",
]

# Wavenumbers entering the random perturbation g(v).
PERTURBATION_MODES = (3, 5, 7, 9, 11, 13)


@dataclass(frozen=True)
class BgkConfig:
    """Relaxation time, step size, step count, and the (1D) velocity grid."""

    tau: float
    dt: float
    n_steps: int
    grid: VelocityGrid

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"relaxation time must be positive, got {self.tau}")
        if not 0 < self.dt / self.tau < 1:
            raise ValueError(
                f"dt/tau = {self.dt / self.tau} violates explicit-Euler stability")
        if self.n_steps < 1:
            raise ValueError(f"need at least one step, got {self.n_steps}")
        if self.grid.dim != 1:
            raise ValueError("the BGK solver is one-dimensional")


@dataclass
class Trajectory:
    """States f^0 ... f^n on a shared grid with fixed step size."""

    grid: VelocityGrid
    dt: float
    states: np.ndarray  # (n_steps + 1, N)

    def __len__(self) -> int:
        return self.states.shape[0]

    def field(self, index: int) -> DistributionField:
        return DistributionField(self.grid, self.states[index],
                                 time=index * self.dt)


def _local_maxwellian(grid: VelocityGrid, values: np.ndarray) -> np.ndarray:
    m = moments(grid, values)
    return maxwellian(grid, m).values


def bgk_rhs(grid: VelocityGrid, f, tau: float) -> DistributionField:
    """(M[f] - f) / tau with M[f] the Maxwellian of the discrete moments."""
    if not tau > 0:
        raise ValueError(f"relaxation time must be positive, got {tau}")
    values = f.values if isinstance(f, DistributionField) else np.asarray(f)
    return DistributionField(grid, (_local_maxwellian(grid, values) - values) / tau)


def bgk_step(grid: VelocityGrid, f, cfg: BgkConfig) -> DistributionField:
    """Forward Euler update f + dt * (M[f] - f) / tau.

    Moments for M[f] are recomputed from the current discrete state at every
    step."""
    values = f.values if isinstance(f, DistributionField) else np.asarray(f)
    new = values + cfg.dt * (_local_maxwellian(grid, values) - values) / cfg.tau
    time = (f.time + cfg.dt) if isinstance(f, DistributionField) and f.time is not None else None
    return DistributionField(grid, new, time=time)


def sample_bgk_initial(rng: Rng, grid: VelocityGrid,
                       epsilon: float) -> DistributionField:
    """Perturbed-Maxwellian initial condition.

    Draws rho0 ~ U(0.8, 1.2), T0 ~ U(0.6, 1.4) (u0 = 0), then modulates the
    Maxwellian by 1 + epsilon * g(v) with

        g(v) = sum_k s_k a_k cos(k*pi*v/L + phi_k),  k in (3, 5, 7, 9, 11, 13),

    a_k ~ U(0.4, 1.0), random signs s_k, phases phi_k ~ U(0, 2*pi), and L the
    largest grid speed.  The result is clipped at zero: large amplitudes
    (far-from-equilibrium regime) otherwise produce negative states that
    poison the moments.  No renormalization is applied after clipping, so
    rho0 is the pre-clip nominal density.  Draw order is fixed (rho0, T0,
    then a_k, s_k, phi_k per mode) so streams are reproducible.
    """
    if epsilon < 0:
        raise ValueError(f"perturbation amplitude must be >= 0, got {epsilon}")
    rho0 = float(rng.uniform(0.8, 1.2))
    t0 = float(rng.uniform(0.6, 1.4))
    base = maxwellian(grid, Macroscopics(rho0, np.zeros(grid.dim), t0,
                                         0.5 * rho0 * grid.dim * t0)).values
    length = float(np.max(np.abs(grid.axis)))
    g = np.zeros_like(grid.axis)
    for k in PERTURBATION_MODES:
        a_k = float(rng.uniform(0.4, 1.0))
        s_k = int(rng.sign())
        phi_k = float(rng.uniform(0.0, 2.0 * np.pi))
        g += s_k * a_k * np.cos(k * np.pi * grid.axis / length + phi_k)
    values = np.clip(base * (1.0 + epsilon * g), 0.0, None)
    return DistributionField(grid, values, time=0.0)


def generate_bgk_trajectory(f0: DistributionField, cfg: BgkConfig) -> Trajectory:
    """Roll the explicit Euler scheme forward for n_steps."""
    states = np.empty((cfg.n_steps + 1, cfg.grid.n_points))
    states[0] = f0.values
    f = f0.values
    inv_tau = cfg.dt / cfg.tau
    for n in range(cfg.n_steps):
        f = f + inv_tau * (_local_maxwellian(cfg.grid, f) - f)
        states[n + 1] = f
    return Trajectory(cfg.grid, cfg.dt, states)


@dataclass
class BgkDataset:
    """Stacked trajectories plus the recipe that generated them."""

    grid: VelocityGrid
    tau: float
    dt: float
    epsilon: float
    seed: int
    trajectories: np.ndarray  # (n_traj, n_steps + 1, N)

    @property
    def n_trajectories(self) -> int:
        return self.trajectories.shape[0]

    def split(self, val_fraction: float = 0.1):
        """Deterministic train/validation split by trajectory (no leakage
        across time steps of one trajectory)."""
        n_val = max(1, int(round(val_fraction * self.n_trajectories)))
        return self.trajectories[:-n_val], self.trajectories[-n_val:]


def generate_bgk_dataset(rng: Rng, n_traj: int, epsilon: float,
                         cfg: BgkConfig) -> BgkDataset:
    """Generate independent trajectories.

    Trajectory j uses the derived stream ``seed + j`` so the dataset is
    bit-identical for a given base seed under any execution order.
    """
    if n_traj < 1:
        raise ValueError(f"need at least one trajectory, got {n_traj}")
    out = np.empty((n_traj, cfg.n_steps + 1, cfg.grid.n_points))
    for j in range(n_traj):
        f0 = sample_bgk_initial(rng.spawn(j), cfg.grid, epsilon)
        out[j] = generate_bgk_trajectory(f0, cfg).states
    return BgkDataset(cfg.grid, cfg.tau, cfg.dt, epsilon, rng.seed, out)
