"""Velocity grids, quadrature, FFT conventions, and reproducible randomness.

Everything else in the package builds on this module.  The FFT convention is
fixed once here: the forward transform is the plain unnormalized sum
``F_k = sum_j f_j exp(-2*pi*i*j*k/N)`` and the inverse carries the ``1/N**dim``
factor, so the convolution theorem reads ``fft(a*b) = conv(fft(a), fft(b))``
without stray constants.  Integer wavevectors follow the usual FFT bin order
``0, 1, ..., N/2-1, -N/2, ..., -1`` per axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "VelocityGrid",
    "ComplexSpectrum",
    "Rng",
    "make_grid",
    "fft_forward",
    "fft_inverse",
    "mode_values",
    "gauss_legendre",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform velocity grid on ``[-L, L]^dim``.

    Two layouts are supported, matching the quadrature each solver needs:

    * ``trapezoid``: both endpoints included, spacing ``2L/(N-1)``, trapezoid
      weights (half weight at the endpoints).  Used by the 1D BGK solver.
    * ``periodic``: spacing ``2L/N``, midpoint points ``-L + (j + 1/2)*dv``,
      all weights equal ``dv**dim``.  Used by the 2D spectral solver.  The
      midpoint offset keeps the point set exactly symmetric about 0 (the
      reflection ``v -> -v`` is the index map ``j -> N-1-j``), so odd moments
      of even states vanish identically instead of picking up a boundary bias
      from an unpaired ``-L`` node.
    """

    dim: int
    half_width: float
    n_points: int
    kind: str
    axis: np.ndarray          # (N,) coordinates along one axis
    axis_weights: np.ndarray  # (N,) 1D quadrature weights along one axis

    @property
    def spacing(self) -> float:
        return float(self.axis[1] - self.axis[0])

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_points,) * self.dim

    @property
    def points(self) -> np.ndarray:
        """Coordinates of every node: shape (N,) in 1D, (N, N, 2) in 2D."""
        if self.dim == 1:
            return self.axis
        v1, v2 = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.stack([v1, v2], axis=-1)

    @property
    def quad_weights(self) -> np.ndarray:
        """Tensor-product quadrature weights, shape ``(N,)*dim``."""
        if self.dim == 1:
            return self.axis_weights
        return np.multiply.outer(self.axis_weights, self.axis_weights)

    def speed_squared(self) -> np.ndarray:
        """|v|^2 at every node."""
        if self.dim == 1:
            return self.axis**2
        return self.axis[:, None] ** 2 + self.axis[None, :] ** 2


def make_grid(dim: int, half_width: float, n_points: int, kind: str) -> VelocityGrid:
    """Build a :class:`VelocityGrid`; rejects ``n_points < 4`` or ``L <= 0``."""
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    if n_points < 4:
        raise ValueError(f"n_points must be >= 4, got {n_points}")
    if not half_width > 0:
        raise ValueError(f"half_width must be positive, got {half_width}")
    if kind == "trapezoid":
        dv = 2.0 * half_width / (n_points - 1)
        axis = -half_width + dv * np.arange(n_points)
        w = np.full(n_points, dv)
        w[0] = w[-1] = 0.5 * dv
    elif kind == "periodic":
        dv = 2.0 * half_width / n_points
        axis = -half_width + dv * (np.arange(n_points) + 0.5)
        w = np.full(n_points, dv)
    else:
        raise ValueError(f"unknown grid kind {kind!r}")
    return VelocityGrid(dim, float(half_width), int(n_points),
                        kind, _readonly(axis), _readonly(w))


def mode_values(n: int) -> np.ndarray:
    """Integer wavevector per FFT bin: ``0..N/2-1, -N/2..-1``."""
    return np.fft.fftfreq(n, d=1.0 / n).astype(np.int64)


@dataclass(frozen=True)
class ComplexSpectrum:
    """FFT coefficients in natural bin order, one axis per dimension."""

    dim: int
    n_points: int
    coefficients: np.ndarray

    def __post_init__(self):
        expected = (self.n_points,) * self.dim
        if self.coefficients.shape != expected:
            raise ValueError(
                f"coefficient shape {self.coefficients.shape} != {expected}")


def _check_pow2(n: int) -> None:
    if n < 2 or (n & (n - 1)) != 0:
        raise ValueError(f"FFT size must be a power of two, got {n}")


def fft_forward(values: np.ndarray) -> ComplexSpectrum:
    """Unnormalized forward DFT of a real or complex field."""
    values = np.asarray(values)
    dim = values.ndim
    if dim not in (1, 2):
        raise ValueError(f"expected a 1D or 2D field, got ndim={dim}")
    n = values.shape[0]
    if any(s != n for s in values.shape):
        raise ValueError(f"field must be square, got shape {values.shape}")
    _check_pow2(n)
    coeff = np.fft.fftn(values.astype(np.complex128))
    return ComplexSpectrum(dim, n, coeff)


def fft_inverse(spectrum: ComplexSpectrum) -> np.ndarray:
    """Inverse DFT carrying the ``1/N**dim`` normalization."""
    _check_pow2(spectrum.n_points)
    return np.fft.ifftn(spectrum.coefficients)


def gauss_legendre(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on ``[a, b]``."""
    if n < 1:
        raise ValueError(f"need at least one node, got {n}")
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


class Rng:
    """Deterministic random stream backed by the Philox counter-based generator.

    Philox (4x64, 10 rounds) is splittable and its bit stream is stable across
    platforms for a fixed numpy major version, so identical ``(seed, stream)``
    always yields identical draws.  ``spawn(i)`` derives the independent
    per-trajectory stream ``seed + i``; distinct ``stream`` values give
    independent streams for the same seed (used for e.g. per-epoch shuffles).
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self._gen = np.random.Generator(
            np.random.Philox(key=np.array([self.seed, self.stream],
                                          dtype=np.uint64)))

    def spawn(self, index: int) -> "Rng":
        return Rng(self.seed + index, self.stream)

    def uniform(self, a: float, b: float, size=None):
        """Draw from U[a, b); rejects degenerate intervals."""
        if not a < b:
            raise ValueError(f"need a < b, got [{a}, {b})")
        return self._gen.uniform(a, b, size=size)

    def sign(self, size=None):
        """Random signs, -1 or +1 with equal probability."""
        return 2 * self._gen.integers(0, 2, size=size) - 1

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)
