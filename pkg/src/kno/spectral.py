"""Fourier-Galerkin discretization of the 2D homogeneous Boltzmann equation
for Maxwell molecules (velocity-independent kinetic kernel, constant angular
kernel 1/(2 pi)).

The collision spectrum is the double sum ``Q_k = sum_{l+m=k} G(l, m) fh_l fh_m``
over integer wavevectors ``|l|_inf, |m|_inf <= N/2``.  The weight splits into a
gain part, whose unit-sphere integral reduces analytically to a Bessel-J0
factor for constant angular kernels, and a loss part that depends on ``m``
only.  Writing the remaining integral over the truncated relative-velocity
ball in polar coordinates ``q = r*h`` and applying a product quadrature
(Gauss-Legendre radially, uniform directions on the half circle with the
``h -> -h`` conjugation symmetry) gives the separable low-rank form

    G(l, m) = sum_p 2*Re( alpha_p(l + m) * beta_p(m) ) - G_loss(m),

    alpha_p(k) = w_p * J0(pi*r_p*|k| / (2L)) * exp( i*pi*r_p * (k . h_p) / (2L))
    beta_p(m)  =                               exp(-i*pi*r_p * (m . h_p) / L)
    G_loss(m)  = sum_p 2 * w_p * cos(pi*r_p * (m . h_p) / L)

with ``w_p`` the product quadrature weight including the polar Jacobian.
The inner sum over ``l + m = k`` is then a truncated convolution per node,
evaluated with zero-padded FFTs, reducing the cost per evaluation from
``O(N^(2d))`` to ``O(N_p N^d log N)``.  Because the gain at ``k = 0`` and the
loss share the same quadrature nodes, ``G(l, -l) = 0`` holds exactly and the
discrete mass is conserved to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import j0  # Cephes rational/asymptotic J0, ~1e-15 accurate

from .kinetic import DistributionField
from .numerics import Rng, VelocityGrid, gauss_legendre, mode_values

__all__ = [
    "DomainParams",
    "SpectralKernel",
    "DirectWeights",
    "precompute_kernel",
    "assemble_direct_weights",
    "collision_direct",
    "collision_fast",
    "boltzmann_step",
    "solve_boltzmann",
    "sample_boltzmann_initial",
    "to_galerkin",
    "from_galerkin",
    "BoltzmannDataset",
    "generate_boltzmann_dataset",
]

# Anti-aliasing geometry: with support radius S, the truncation radius is
# R = 2S and the box half-width must satisfy L >= (3 + sqrt(2))/2 * S.
_ALIAS_FACTOR = (3.0 + np.sqrt(2.0)) / 2.0

DIRECT_MAX_N = 16  # dense (N^2 x N^2) tables only for oracle-sized problems


@dataclass(frozen=True)
class DomainParams:
    """Velocity box half-width L, support radius S, truncation radius R = 2S."""

    half_width: float
    support_radius: float
    truncation_radius: float

    def __post_init__(self):
        if not np.isclose(self.truncation_radius, 2.0 * self.support_radius,
                          rtol=1e-12):
            raise ValueError("truncation radius must equal twice the support radius")
        if self.half_width < _ALIAS_FACTOR * self.support_radius * (1 - 1e-12):
            raise ValueError(
                f"half-width {self.half_width} too small for support radius "
                f"{self.support_radius} (needs >= {_ALIAS_FACTOR:.6f} * S)")

    @classmethod
    def from_half_width(cls, half_width: float) -> "DomainParams":
        """Largest admissible support for a given box (equality in the
        anti-aliasing bound): S = 2L/(3 + sqrt(2)), R = 2S."""
        s = 2.0 * half_width / (3.0 + np.sqrt(2.0))
        return cls(float(half_width), s, 2.0 * s)


@dataclass(frozen=True)
class SpectralKernel:
    """Precomputed low-rank factors of the collision weight.

    ``alpha`` and ``beta`` hold one entry per quadrature node (radial x
    half-circle directions) and per wavevector in FFT bin order;
    ``loss_multiplier`` is the real loss table indexed by ``m``.
    """

    n_points: int
    domain: DomainParams
    n_radial: int
    n_angular: int
    node_r: np.ndarray       # (P,)
    node_theta: np.ndarray   # (P,) direction angles in [0, pi)
    node_weight: np.ndarray  # (P,) quadrature weight incl. polar Jacobian
    alpha: np.ndarray        # (P, N, N) complex
    beta: np.ndarray         # (P, N, N) complex
    loss_multiplier: np.ndarray  # (N, N) real

    @property
    def n_nodes(self) -> int:
        return self.node_r.shape[0]


@dataclass(frozen=True)
class DirectWeights:
    """Dense weight table G[l1, l2, m1, m2] in FFT bin order (oracle use)."""

    n_points: int
    domain: DomainParams
    table: np.ndarray  # (N, N, N, N) complex


def _quadrature_nodes(dom: DomainParams, n_radial: int, n_angular: int):
    """Product nodes (r_p, theta_p, w_p) over [0, R] x [0, pi)."""
    r, wr = gauss_legendre(n_radial, 0.0, dom.truncation_radius)
    theta = np.pi * np.arange(n_angular) / n_angular
    rr, tt = np.meshgrid(r, theta, indexing="ij")
    ww = np.meshgrid(wr, theta, indexing="ij")[0] * (np.pi / n_angular)
    rr, tt, ww = rr.ravel(), tt.ravel(), ww.ravel()
    return rr, tt, ww * rr  # fold the polar Jacobian into the weight


def _gain_alpha(node_r, node_theta, node_weight, kx, ky, half_width):
    """alpha_p(k) on an arbitrary integer wavevector grid; shape (P, *k)."""
    k_norm = np.sqrt(kx**2 + ky**2)
    k_dot_h = (np.cos(node_theta)[:, None, None] * kx
               + np.sin(node_theta)[:, None, None] * ky)
    c = np.pi / (2.0 * half_width)
    bessel = j0(c * node_r[:, None, None] * k_norm)
    phase = np.exp(1j * c * node_r[:, None, None] * k_dot_h)
    return node_weight[:, None, None] * bessel * phase


def _beta_table(node_r, node_theta, mx, my, half_width):
    m_dot_h = (np.cos(node_theta)[:, None, None] * mx
               + np.sin(node_theta)[:, None, None] * my)
    c = np.pi / half_width
    return np.exp(-1j * c * node_r[:, None, None] * m_dot_h)


def precompute_kernel(n_points: int, dom: DomainParams,
                      n_radial: int, n_angular: int) -> SpectralKernel:
    """Assemble the low-rank gain factors and the loss multiplier table."""
    if n_radial < 1 or n_angular < 1:
        raise ValueError("need at least one radial and one angular node")
    modes = mode_values(n_points)
    kx, ky = np.meshgrid(modes, modes, indexing="ij")
    kx = kx.astype(np.float64)
    ky = ky.astype(np.float64)
    r, theta, w = _quadrature_nodes(dom, n_radial, n_angular)
    alpha = _gain_alpha(r, theta, w, kx, ky, dom.half_width)
    beta = _beta_table(r, theta, kx, ky, dom.half_width)
    loss = 2.0 * np.einsum("p,pij->ij", w, np.cos(
        (np.pi / dom.half_width) * r[:, None, None]
        * (np.cos(theta)[:, None, None] * kx + np.sin(theta)[:, None, None] * ky)))
    for a in (alpha, beta, loss):
        a.setflags(write=False)
    return SpectralKernel(n_points, dom, n_radial, n_angular,
                          r, theta, w, alpha, beta, loss)


def assemble_direct_weights(n_points: int, dom: DomainParams,
                            n_radial: int, n_angular: int) -> DirectWeights:
    """Dense G(l, m) from the same quadrature as :func:`precompute_kernel`,
    so direct and fast collision evaluations agree to rounding."""
    if n_points > DIRECT_MAX_N:
        raise ValueError(
            f"dense weights limited to N <= {DIRECT_MAX_N}, got {n_points}")
    modes = mode_values(n_points)
    r, theta, w = _quadrature_nodes(dom, n_radial, n_angular)
    # alpha on the extended wavevector range reached by k = l + m
    ext = np.arange(-n_points, n_points - 1, dtype=np.float64)
    ekx, eky = np.meshgrid(ext, ext, indexing="ij")
    alpha_ext = _gain_alpha(r, theta, w, ekx, eky, dom.half_width)
    mx, my = np.meshgrid(modes.astype(np.float64), modes.astype(np.float64),
                         indexing="ij")
    beta = _beta_table(r, theta, mx, my, dom.half_width)
    loss = 2.0 * np.einsum("p,pij->ij", w, np.cos(
        (np.pi / dom.half_width) * r[:, None, None]
        * (np.cos(theta)[:, None, None] * mx + np.sin(theta)[:, None, None] * my)))

    n = n_points
    # index of mode value (l + m) within the extended alpha table
    off = n  # ext[0] = -n
    k1 = modes[:, None] + modes[None, :]  # (l_i, m_i) -> summed mode value
    table = np.empty((n, n, n, n), dtype=np.complex128)
    for i1 in range(n):
        for i2 in range(n):
            a = alpha_ext[:, k1[i1, :, None] + off, k1[i2, None, :] + off]
            gain = 2.0 * np.real(np.einsum("pij,pij->ij", a, beta))
            table[i1, i2] = gain - loss
    return DirectWeights(n_points, dom, table)


# ---------------------------------------------------------------------------
# Galerkin coefficients and truncated convolution

def _phase(n_points: int) -> np.ndarray:
    """Per-bin factor relating grid-sample DFTs to coefficients of
    exp(i*pi*k*v/L) on the midpoint grid v_j = -L + (j + 1/2)*dv:
    p_k = (-1)^k * exp(-i*pi*k/N) per axis."""
    k = mode_values(n_points).astype(np.float64)
    p = (1.0 - 2.0 * (np.abs(k) % 2)) * np.exp(-1j * np.pi * k / n_points)
    return p[:, None] * p[None, :]


def to_galerkin(f: np.ndarray, n_points: int) -> np.ndarray:
    """Fourier coefficients fh_k of the trigonometric interpolant of f."""
    ph = _phase(n_points)
    return ph * np.fft.fft2(f, axes=(-2, -1)) / n_points**2


def from_galerkin(fh: np.ndarray, n_points: int) -> np.ndarray:
    """Grid samples from Galerkin coefficients (complex; caller takes .real)."""
    ph = _phase(n_points)
    return np.fft.ifft2(ph.conj() * fh, axes=(-2, -1)) * n_points**2


def _pad_modes(a: np.ndarray, n: int) -> np.ndarray:
    """Embed coefficients on modes [-N/2, N/2) into a 2N-periodic array."""
    h = n // 2
    out = np.zeros(a.shape[:-2] + (2 * n, 2 * n), dtype=np.complex128)
    out[..., :h, :h] = a[..., :h, :h]
    out[..., :h, 3 * n // 2:] = a[..., :h, h:]
    out[..., 3 * n // 2:, :h] = a[..., h:, :h]
    out[..., 3 * n // 2:, 3 * n // 2:] = a[..., h:, h:]
    return out


def _unpad_modes(a: np.ndarray, n: int) -> np.ndarray:
    h = n // 2
    out = np.empty(a.shape[:-2] + (n, n), dtype=np.complex128)
    out[..., :h, :h] = a[..., :h, :h]
    out[..., :h, h:] = a[..., :h, 3 * n // 2:]
    out[..., h:, :h] = a[..., 3 * n // 2:, :h]
    out[..., h:, h:] = a[..., 3 * n // 2:, 3 * n // 2:]
    return out


def _collision_spectrum(kernel: SpectralKernel, fh: np.ndarray,
                        node_chunk: int = 128) -> np.ndarray:
    """Q_k on the retained modes via zero-padded FFT convolutions.

    The convolution is truncated (indices restricted to |l|_inf, |m|_inf <=
    N/2, no circular wrap-around), implemented by zero-padding to 2N per axis.
    Each stored half-circle node contributes itself and its conjugate mirror.
    """
    n = kernel.n_points
    if fh.shape[-2:] != (n, n):
        raise ValueError(f"field size {fh.shape[-2:]} != kernel size {(n, n)}")
    fa = np.fft.fft2(_pad_modes(fh, n), axes=(-2, -1))
    qh = np.zeros(fh.shape, dtype=np.complex128)
    nb = fh.ndim - 2  # leading batch axes
    bsl = (slice(None),) + (None,) * nb
    for lo in range(0, kernel.n_nodes, node_chunk):
        hi = min(lo + node_chunk, kernel.n_nodes)
        beta = kernel.beta[lo:hi]
        alpha = kernel.alpha[lo:hi]
        stack = np.concatenate([beta[bsl] * fh[None], beta.conj()[bsl] * fh[None]])
        conv = _unpad_modes(
            np.fft.ifft2(fa[None] * np.fft.fft2(_pad_modes(stack, n),
                                                axes=(-2, -1)), axes=(-2, -1)), n)
        amul = np.concatenate([alpha, alpha.conj()])
        qh += np.einsum("pij,p...ij->...ij", amul, conv)
    loss = _unpad_modes(
        np.fft.ifft2(fa * np.fft.fft2(_pad_modes(kernel.loss_multiplier * fh, n),
                                      axes=(-2, -1)), axes=(-2, -1)), n)
    return qh - loss


def collision_fast(kernel: SpectralKernel, f) -> np.ndarray:
    """Collision operator on grid samples (leading axes are batch)."""
    values = f.values if isinstance(f, DistributionField) else np.asarray(f)
    n = kernel.n_points
    fh = to_galerkin(values, n)
    qh = _collision_spectrum(kernel, fh)
    return from_galerkin(qh, n).real


def collision_direct(weights: DirectWeights, f) -> np.ndarray:
    """O(N^4) reference evaluation of the Galerkin double sum."""
    values = f.values if isinstance(f, DistributionField) else np.asarray(f)
    n = weights.n_points
    if values.shape[-2:] != (n, n):
        raise ValueError(f"field size {values.shape[-2:]} != table size {(n, n)}")
    if values.ndim > 2:
        return np.stack([collision_direct(weights, v) for v in values])
    fh = to_galerkin(values, n)
    modes = mode_values(n)
    half = n // 2
    qh = np.zeros((n, n), dtype=np.complex128)
    for i1 in range(n):
        for i2 in range(n):
            k1 = modes[i1] - modes  # m1 = k1 - l1 over all l1 bins
            k2 = modes[i2] - modes
            ok1 = (k1 >= -half) & (k1 < half)
            ok2 = (k2 >= -half) & (k2 < half)
            m1 = k1[ok1] % n
            m2 = k2[ok2] % n
            l1 = np.arange(n)[ok1]
            l2 = np.arange(n)[ok2]
            # gather G[l1, l2, m1, m2] with m paired to l per axis (m = k - l)
            block = weights.table[l1[:, None], l2[None, :], m1[:, None], m2[None, :]]
            qh[i1, i2] = np.sum(block * fh[l1[:, None], l2[None, :]]
                                * fh[m1[:, None], m2[None, :]])
    return from_galerkin(qh, n).real


def boltzmann_step(f: np.ndarray, dt: float, kernel: SpectralKernel) -> np.ndarray:
    """Forward Euler: f + dt * Q(f)."""
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    return f + dt * collision_fast(kernel, f)


def solve_boltzmann(f0: np.ndarray, t_final: float, dt: float,
                    kernel: SpectralKernel) -> np.ndarray:
    """Euler-integrate to t_final; t_final/dt must be integral within 1e-9."""
    steps = t_final / dt
    n_steps = int(round(steps))
    if abs(steps - n_steps) > 1e-9:
        raise ValueError(f"t_final/dt = {steps} is not an integer step count")
    f = np.asarray(f0, dtype=np.float64)
    for _ in range(n_steps):
        f = boltzmann_step(f, dt, kernel)
    return f


# ---------------------------------------------------------------------------
# Training-data initial conditions

def _gaussian(grid: VelocityGrid, center, sigma) -> np.ndarray:
    sq = ((grid.axis[:, None] - center[0]) ** 2
          + (grid.axis[None, :] - center[1]) ** 2)
    return np.exp(-sq / (2.0 * sigma**2)) / (2.0 * np.pi * sigma**2)


def sample_boltzmann_initial(rng: Rng, grid: VelocityGrid,
                             kind: str) -> DistributionField:
    """Random initial condition of one of the three training families:
    a normalized Gaussian with center in [-0.5, 0.5]^2 and width in
    [0.3, 0.5]; a sum of two such Gaussians; or a Gaussian modulated by
    1 + p(v) with p a random polynomial of degree <= 2 (coefficients
    uniform in [-0.3, 0.3]), clipped at zero.
    """
    if grid.dim != 2:
        raise ValueError("Boltzmann initial conditions are two-dimensional")

    def draw():
        c = rng.uniform(-0.5, 0.5, size=2)
        s = float(rng.uniform(0.3, 0.5))
        return _gaussian(grid, c, s)

    if kind == "gaussian":
        values = draw()
    elif kind == "two_gaussians":
        values = draw() + draw()
    elif kind == "perturbed":
        base = draw()
        c = rng.uniform(-0.3, 0.3, size=6)
        v1 = grid.axis[:, None]
        v2 = grid.axis[None, :]
        poly = (c[0] + c[1] * v1 + c[2] * v2
                + c[3] * v1**2 + c[4] * v1 * v2 + c[5] * v2**2)
        values = np.clip(base * (1.0 + poly), 0.0, None)
    else:
        raise ValueError(f"unknown initial-condition family {kind!r}")
    return DistributionField(grid, values, time=0.0)


@dataclass
class BoltzmannDataset:
    """Initial fields and their solver-evolved targets at fixed times."""

    grid: VelocityGrid
    seed: int
    dt: float
    kinds: list[str]            # per-sample family label
    initial: np.ndarray         # (n, N, N)
    targets: dict[float, np.ndarray]

    @property
    def n_samples(self) -> int:
        return self.initial.shape[0]


def generate_boltzmann_dataset(seed: int, grid: VelocityGrid,
                               kernel: SpectralKernel,
                               n_per_kind: int = 100,
                               kinds=("gaussian", "two_gaussians", "perturbed"),
                               target_times=(1.0,),
                               dt: float = 0.01,
                               batch: int = 30) -> BoltzmannDataset:
    """Sample initial conditions and evolve them with the spectral solver.

    One Philox stream drives all draws in a fixed documented order (family by
    family, sample by sample), so regeneration with the same seed is
    bit-identical.
    """
    rng = Rng(seed)
    labels: list[str] = []
    fields = []
    for kind in kinds:
        for _ in range(n_per_kind):
            fields.append(sample_boltzmann_initial(rng, grid, kind).values)
            labels.append(kind)
    initial = np.stack(fields)

    times = sorted(float(t) for t in target_times)
    for t in times:
        if abs(t / dt - round(t / dt)) > 1e-9:
            raise ValueError(f"target time {t} not an integral number of steps")
    targets = {t: np.empty_like(initial) for t in times}
    for lo in range(0, initial.shape[0], batch):
        f = initial[lo:lo + batch].copy()
        t_now = 0.0
        for t in times:
            n_steps = int(round((t - t_now) / dt))
            for _ in range(n_steps):
                f = boltzmann_step(f, dt, kernel)
            targets[t][lo:lo + batch] = f
            t_now = t
    return BoltzmannDataset(grid, seed, dt, labels, initial, targets)
