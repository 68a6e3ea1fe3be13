"""Shared kinetic-theory primitives.

Maxwellian equilibria, discrete macroscopic moments, the closed-form
Bobylev-Krook-Wu (BKW) benchmark solution for 2D Maxwell molecules, the
H-functional diagnostic, and the weighted error norms used in all result
tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .numerics import VelocityGrid

__all__ = [
    "Macroscopics",
    "DistributionField",
    "ErrorReport",
    "DegenerateStateError",
    "maxwellian",
    "moments",
    "bkw",
    "bkw_time_derivative",
    "error_norms",
    "h_functional",
]

# Below this density the moment inversion (u, T) is numerically meaningless.
DENSITY_FLOOR = 1e-12


class DegenerateStateError(ValueError):
    """Raised when a distribution has no usable mass for moment inversion."""


@dataclass(frozen=True)
class Macroscopics:
    """Density, bulk velocity, temperature, and total energy of a state."""

    rho: float
    u: np.ndarray  # (dim,)
    T: float
    E: float

    @property
    def momentum(self) -> np.ndarray:
        return self.rho * self.u

    @property
    def dim(self) -> int:
        return self.u.shape[0]


@dataclass
class DistributionField:
    """Real-valued samples of a distribution function on a velocity grid."""

    grid: VelocityGrid
    values: np.ndarray
    time: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("distribution contains non-finite values")

    def has_negative(self, tol: float = 0.0) -> bool:
        """Diagnostic: negative values are tolerated but worth flagging."""
        return bool(np.any(self.values < -tol))


@dataclass(frozen=True)
class ErrorReport:
    """Field norms of a difference plus absolute moment discrepancies."""

    l1: float
    l2: float
    linf: float
    d_rho: float
    d_u: float
    d_energy: float


def maxwellian(grid: VelocityGrid, macro: Macroscopics) -> DistributionField:
    """Equilibrium distribution rho/(2 pi T)^(d/2) * exp(-|v-u|^2 / (2T))."""
    if not macro.T > 0:
        raise ValueError(f"temperature must be positive, got {macro.T}")
    if not macro.rho > 0:
        raise ValueError(f"density must be positive, got {macro.rho}")
    d = grid.dim
    norm = macro.rho / (2.0 * np.pi * macro.T) ** (d / 2.0)
    if d == 1:
        sq = (grid.axis - macro.u[0]) ** 2
    else:
        sq = ((grid.axis[:, None] - macro.u[0]) ** 2
              + (grid.axis[None, :] - macro.u[1]) ** 2)
    return DistributionField(grid, norm * np.exp(-sq / (2.0 * macro.T)))


def _values_of(f) -> np.ndarray:
    return f.values if isinstance(f, DistributionField) else np.asarray(f)


def moments(grid: VelocityGrid, f) -> Macroscopics:
    """Quadrature moments: rho, u, T (u-centered, divided by dim), E.

    The returned quantities satisfy ``E = rho*|u|^2/2 + (d/2)*rho*T`` to
    rounding because T is computed from the u-centered second moment.
    """
    values = _values_of(f)
    w = grid.quad_weights
    d = grid.dim
    rho = float(np.sum(w * values))
    if not rho > DENSITY_FLOOR:
        raise DegenerateStateError(
            f"density {rho:.3e} too small to normalize moments")
    if d == 1:
        u = np.array([np.sum(w * grid.axis * values) / rho])
        centered = (grid.axis - u[0]) ** 2
        energy = 0.5 * float(np.sum(w * grid.axis**2 * values))
    else:
        u1 = np.sum(w * grid.axis[:, None] * values) / rho
        u2 = np.sum(w * grid.axis[None, :] * values) / rho
        u = np.array([u1, u2])
        centered = ((grid.axis[:, None] - u1) ** 2
                    + (grid.axis[None, :] - u2) ** 2)
        energy = 0.5 * float(np.sum(w * grid.speed_squared() * values))
    T = float(np.sum(w * centered * values) / (d * rho))
    return Macroscopics(rho, u, T, energy)


def _bkw_k(t: float) -> float:
    return 1.0 - 0.5 * np.exp(-t / 8.0)


def bkw(grid: VelocityGrid, t: float) -> DistributionField:
    """Closed-form isotropic benchmark solution, 2D Maxwell molecules.

    With the benchmark constants (C = 1/2, constant angular kernel 1/(2 pi))
    the shape factor is K(t) = 1 - exp(-t/8)/2 and

        f(t, v) = exp(-|v|^2/(2K)) / (2 pi K)
                  * ((d+2)K - d)/(2K) + (1-K)/(2K^2) |v|^2),  d = 2.
    """
    if grid.dim != 2:
        raise ValueError("the benchmark solution is two-dimensional")
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    K = _bkw_k(t)
    r2 = grid.speed_squared()
    gauss = np.exp(-r2 / (2.0 * K)) / (2.0 * np.pi * K)
    bracket = (4.0 * K - 2.0) / (2.0 * K) + (1.0 - K) / (2.0 * K**2) * r2
    return DistributionField(grid, gauss * bracket, time=float(t))


def bkw_time_derivative(grid: VelocityGrid, t: float) -> np.ndarray:
    """Exact d/dt of the benchmark solution (chain rule through K).

    Independent oracle for collision-operator consistency checks.
    """
    if grid.dim != 2:
        raise ValueError("the benchmark solution is two-dimensional")
    K = _bkw_k(t)
    dK = (1.0 - K) / 8.0  # K' = exp(-t/8)/16
    r2 = grid.speed_squared()
    A = 1.0 / (2.0 * np.pi * K)
    B = np.exp(-r2 / (2.0 * K))
    C = (4.0 * K - 2.0) / (2.0 * K) + (1.0 - K) / (2.0 * K**2) * r2
    # d/dK of each factor
    dC = 1.0 / K**2 + r2 * (K - 2.0) / (2.0 * K**3)
    df_dK = A * B * (C * (-1.0 / K + r2 / (2.0 * K**2)) + dC)
    return dK * df_dK


def _slice_weights(grid: VelocityGrid) -> np.ndarray:
    """1D trapezoid weights over one axis of the grid (for slice norms)."""
    n = grid.n_points
    dv = grid.spacing
    w = np.full(n, dv)
    w[0] = w[-1] = 0.5 * dv
    return w


def error_norms(f_num, f_ref, grid: VelocityGrid,
                slice_axis: int | None = None,
                slice_index: int | None = None) -> ErrorReport:
    """Weighted discrete L1/L2/Linf of the difference plus moment errors.

    With ``slice_axis``/``slice_index`` given, the field norms are taken along
    that 1D slice (e.g. the ``v2 = 0`` row) using 1D trapezoid weights; the
    moment errors always use the full grid.  The norms include quadrature
    weights, so absolute magnitudes may differ from unweighted vector norms by
    a grid-measure factor.
    """
    a = _values_of(f_num)
    b = _values_of(f_ref)
    if a.shape != b.shape or a.shape != grid.shape:
        raise ValueError("field shapes do not match the grid")
    diff = a - b
    if slice_axis is None:
        w = grid.quad_weights
    else:
        if slice_axis not in range(grid.dim):
            raise ValueError(f"slice axis {slice_axis} out of range")
        if not 0 <= slice_index < grid.n_points:
            raise ValueError(f"slice index {slice_index} out of range")
        diff = np.take(diff, slice_index, axis=slice_axis)
        w = _slice_weights(grid)
    l1 = float(np.sum(w * np.abs(diff)))
    l2 = float(np.sqrt(np.sum(w * diff**2)))
    linf = float(np.max(np.abs(diff)))
    ma = moments(grid, a)
    mb = moments(grid, b)
    return ErrorReport(
        l1, l2, linf,
        d_rho=abs(ma.rho - mb.rho),
        d_u=float(np.linalg.norm(ma.u - mb.u)),
        d_energy=abs(ma.E - mb.E),
    )


def h_functional(grid: VelocityGrid, f) -> float:
    """Discrete H = sum w f log f (diagnostic; f clipped below at 1e-300)."""
    values = np.clip(_values_of(f), 1e-300, None)
    return float(np.sum(grid.quad_weights * values * np.log(values)))
