"""Fourier neural operator in plain numpy with hand-derived reverse-mode
gradients.

Forward pipeline: a pointwise affine lift of ``[v, f0(v)]`` into
``hidden_channels`` feature channels, a stack of Fourier layers

    F_out = act( F W + b + irfft( R (.) rfft(F) on retained modes ) ),

and a two-layer pointwise projection back to a scalar field.  The retained
band is the square truncation ``|k|_inf <= k_max`` with ``k_max =
n_modes // 2``; the real-input FFT stores only the non-redundant half
spectrum, so each layer holds one complex ``channels x channels`` matrix per
retained half-spectrum wavevector.  Modes outside the band are zeroed inside
the spectral branch by default; ``spectral_passthrough=True`` forwards them
unchanged instead (the pointwise path carries full-band information either
way).

Every operation records what its adjoint needs on a :class:`Tape`;
:func:`fno_backward` replays the chain exactly, including the rfft/irfft
adjoints under the package FFT convention and conjugate-cotangent gradients
for the complex spectral weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .numerics import Rng, VelocityGrid, mode_values

__all__ = [
    "FnoConfig",
    "FnoParams",
    "Tape",
    "StaleTapeError",
    "GradientCheckResult",
    "init_fno",
    "fno_forward",
    "fno_backward",
    "gradient_check",
    "parameter_count",
    "rfftn_adjoint",
    "irfftn_adjoint",
]

PROJECTION_WIDTH = 128

_SQRT2 = np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


class StaleTapeError(RuntimeError):
    """Raised when a released tape is replayed."""


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def _gelu_deriv(x):
    phi = 0.5 * (1.0 + erf(x / _SQRT2))
    return phi + x * np.exp(-0.5 * x * x) * _INV_SQRT2PI


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_deriv(x):
    return (x > 0.0).astype(np.float64)


def _identity(x):
    return x


def _one(x):
    return np.ones_like(x)


_ACTIVATIONS = {
    "gelu": (_gelu, _gelu_deriv),
    "relu": (_relu, _relu_deriv),
    "identity": (_identity, _one),
}


@dataclass(frozen=True)
class FnoConfig:
    """Architecture hyperparameters.

    ``n_modes`` counts retained modes per axis two-sided, i.e. the band is
    ``|k|_inf <= n_modes // 2``; it must not exceed the grid size.  Input
    channels are the ``dim`` velocity coordinates plus the field itself.
    """

    dim: int
    n_modes: int
    hidden_channels: int
    n_layers: int
    activation: str = "gelu"
    spectral_passthrough: bool = False

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n_modes < 2:
            raise ValueError(f"n_modes must be >= 2, got {self.n_modes}")
        if self.hidden_channels < 1 or self.n_layers < 1:
            raise ValueError("need at least one channel and one layer")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def k_max(self) -> int:
        return self.n_modes // 2

    @property
    def in_channels(self) -> int:
        return self.dim + 1

    @property
    def n_slots(self) -> int:
        """Stored spectral matrices per layer (half-spectrum band size)."""
        if self.dim == 1:
            return self.k_max + 1
        return (2 * self.k_max + 1) * (self.k_max + 1)


@dataclass
class LayerParams:
    spectral: np.ndarray   # (n_slots, C, C) complex
    pointwise: np.ndarray  # (C, C)
    bias: np.ndarray       # (C,)


@dataclass
class FnoParams:
    """All learnable tensors; iteration order of :meth:`named` is stable."""

    config: FnoConfig
    lift_w: np.ndarray   # (in_channels, C)
    lift_b: np.ndarray   # (C,)
    layers: list[LayerParams]
    proj_w1: np.ndarray  # (C, PROJECTION_WIDTH)
    proj_b1: np.ndarray
    proj_w2: np.ndarray  # (PROJECTION_WIDTH, 1)
    proj_b2: np.ndarray

    def named(self):
        yield "lift_w", self.lift_w
        yield "lift_b", self.lift_b
        for t, layer in enumerate(self.layers):
            yield f"layer{t}_spectral", layer.spectral
            yield f"layer{t}_pointwise", layer.pointwise
            yield f"layer{t}_bias", layer.bias
        yield "proj_w1", self.proj_w1
        yield "proj_b1", self.proj_b1
        yield "proj_w2", self.proj_w2
        yield "proj_b2", self.proj_b2

    def tensor(self, name: str) -> np.ndarray:
        for n, a in self.named():
            if n == name:
                return a
        raise KeyError(name)

    def map(self, fn) -> "FnoParams":
        """New FnoParams with fn applied tensor-wise."""
        return FnoParams(
            self.config, fn(self.lift_w), fn(self.lift_b),
            [LayerParams(fn(l.spectral), fn(l.pointwise), fn(l.bias))
             for l in self.layers],
            fn(self.proj_w1), fn(self.proj_b1), fn(self.proj_w2), fn(self.proj_b2))

    def copy(self) -> "FnoParams":
        return self.map(np.copy)


def parameter_count(params_or_cfg) -> int:
    """Real-valued scalar count; a complex entry counts as two."""
    if isinstance(params_or_cfg, FnoConfig):
        cfg = params_or_cfg
        c = cfg.hidden_channels
        lift = cfg.in_channels * c + c
        per_layer = cfg.n_slots * c * c * 2 + c * c + c
        proj = c * PROJECTION_WIDTH + PROJECTION_WIDTH + PROJECTION_WIDTH + 1
        return lift + cfg.n_layers * per_layer + proj
    total = 0
    for _, a in params_or_cfg.named():
        total += a.size * (2 if np.iscomplexobj(a) else 1)
    return total


def init_fno(cfg: FnoConfig, rng: Rng) -> FnoParams:
    """Deterministic initialization: spectral weights uniform in
    ``[-s, s] + i[-s, s]`` with ``s = 1 / hidden_channels**2``; pointwise maps
    (and their biases) uniform with fan-in scaling ``1/sqrt(fan_in)``."""
    c = cfg.hidden_channels

    def dense(fan_in, shape):
        a = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-a, a, size=shape)

    lift_w = dense(cfg.in_channels, (cfg.in_channels, c))
    lift_b = dense(cfg.in_channels, (c,))
    layers = []
    s = 1.0 / c**2
    for _ in range(cfg.n_layers):
        re = rng.uniform(-s, s, size=(cfg.n_slots, c, c))
        im = rng.uniform(-s, s, size=(cfg.n_slots, c, c))
        layers.append(LayerParams(re + 1j * im, dense(c, (c, c)), dense(c, (c,))))
    proj_w1 = dense(c, (c, PROJECTION_WIDTH))
    proj_b1 = dense(c, (PROJECTION_WIDTH,))
    proj_w2 = dense(PROJECTION_WIDTH, (PROJECTION_WIDTH, 1))
    proj_b2 = dense(PROJECTION_WIDTH, (1,))
    return FnoParams(cfg, lift_w, lift_b, layers, proj_w1, proj_b1,
                     proj_w2, proj_b2)


# ---------------------------------------------------------------------------
# Half-spectrum band bookkeeping

def _gather_rows(cfg: FnoConfig, n: int) -> np.ndarray | None:
    """For 2D: full-axis bin indices with |mode| <= k_max, in slot order
    (0..k_max then -k_max..-1).  None in 1D (the band is a plain slice)."""
    if cfg.dim == 1:
        return None
    k = cfg.k_max
    modes = mode_values(n)
    order = list(range(0, k + 1)) + list(range(-k, 0))
    rows = []
    for m in order:
        hits = np.where(modes == m)[0]
        if hits.size:
            rows.append(hits[0])
    return np.asarray(rows, dtype=np.intp)


def _slot_index(cfg: FnoConfig, n: int) -> np.ndarray:
    """Indices into the (n_slots,) spectral tensor that are representable on
    an N-point grid, aligned with the gathered band entries."""
    k = cfg.k_max
    if cfg.dim == 1:
        return np.arange(k + 1, dtype=np.intp)
    modes = mode_values(n)
    order = list(range(0, k + 1)) + list(range(-k, 0))
    idx = []
    for si, m in enumerate(order):
        if np.any(modes == m):
            idx.append(np.arange(si * (k + 1), (si + 1) * (k + 1)))
    return np.concatenate(idx)


# ---------------------------------------------------------------------------
# FFT adjoints under the real inner product (conjugate-cotangent convention)

def _halfweights(n_half_bins: int, n: int) -> np.ndarray:
    """Mirror multiplicity of half-spectrum bins: 1 for the self-conjugate
    bins (k = 0 and the Nyquist bin), 2 otherwise."""
    w = np.full(n_half_bins, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    return w


def rfftn_adjoint(y: np.ndarray, spatial_shape: tuple[int, ...],
                  axes: tuple[int, ...]) -> np.ndarray:
    """Adjoint of ``np.fft.rfftn`` over ``axes`` (output is real)."""
    n_last = spatial_shape[-1]
    w = 1.0 / _halfweights(y.shape[axes[-1]], n_last)
    shape = [1] * y.ndim
    shape[axes[-1]] = -1
    scaled = y * w.reshape(shape)
    if len(axes) == 1:
        return n_last * np.fft.irfft(scaled, n=n_last, axis=axes[0])
    n0 = spatial_shape[0]
    tmp = np.fft.ifft(scaled, axis=axes[0])
    return n0 * n_last * np.fft.irfft(tmp, n=n_last, axis=axes[-1])


def irfftn_adjoint(g: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    """Adjoint of ``np.fft.irfftn`` over ``axes`` (input was a half spectrum)."""
    n_last = g.shape[axes[-1]]
    y = np.fft.rfft(g, axis=axes[-1])
    w = _halfweights(y.shape[axes[-1]], n_last)
    shape = [1] * y.ndim
    shape[axes[-1]] = -1
    y = y * (w.reshape(shape) / n_last)
    if len(axes) == 1:
        return y
    n0 = g.shape[axes[0]]
    return np.fft.fft(y, axis=axes[0]) / n0


# ---------------------------------------------------------------------------
# Forward

@dataclass
class _LayerRecord:
    f_in: np.ndarray        # layer input, channels last
    sel_t: np.ndarray       # gathered input spectrum, (slots, batch, C)
    pre: np.ndarray         # preactivation


@dataclass
class Tape:
    """Intermediates of one forward pass, sufficient for all gradients."""

    params: FnoParams
    grid: VelocityGrid
    single: bool
    x_in: np.ndarray
    layer_records: list[_LayerRecord]
    f_last: np.ndarray
    h_pre: np.ndarray
    h: np.ndarray
    output: np.ndarray
    released: bool = False

    def release(self):
        """Drop the recorded arrays; further backward calls raise."""
        self.layer_records = []
        self.x_in = self.f_last = self.h_pre = self.h = None
        self.released = True


def _spatial_axes(dim: int) -> tuple[int, ...]:
    return (1,) if dim == 1 else (1, 2)


def _gather(fh: np.ndarray, cfg: FnoConfig, rows: np.ndarray | None) -> np.ndarray:
    """Retained band of a half spectrum as (slots, batch, C), contiguous."""
    k = cfg.k_max
    if cfg.dim == 1:
        sel = fh[:, :k + 1, :]
    else:
        cols = np.arange(k + 1)
        sel = fh[:, rows[:, None], cols[None, :], :]
        sel = sel.reshape(sel.shape[0], -1, sel.shape[-1])
    return np.ascontiguousarray(sel.transpose(1, 0, 2))


def _scatter(values_t: np.ndarray, template_shape, cfg: FnoConfig,
             rows: np.ndarray | None, base: np.ndarray | None) -> np.ndarray:
    """Place (slots, batch, C) band values into a half spectrum array."""
    out = np.zeros(template_shape, dtype=np.complex128) if base is None else base
    vals = values_t.transpose(1, 0, 2)
    k = cfg.k_max
    if cfg.dim == 1:
        out[:, :k + 1, :] = vals
    else:
        cols = np.arange(k + 1)
        out[:, rows[:, None], cols[None, :], :] = vals.reshape(
            vals.shape[0], rows.size, k + 1, vals.shape[-1])
    return out


def _coords(grid: VelocityGrid, batch: int) -> np.ndarray:
    if grid.dim == 1:
        c = grid.axis[None, :, None]
    else:
        c = grid.points[None]
    return np.broadcast_to(c, (batch,) + grid.shape + (grid.dim,))


def fno_forward(params: FnoParams, f0, grid: VelocityGrid):
    """Evaluate the operator; returns the prediction and the tape.

    ``f0`` may be a single field of the grid shape or a batch with one
    leading axis; the prediction matches.
    """
    cfg = params.config
    if grid.dim != cfg.dim:
        raise ValueError(f"grid dim {grid.dim} != model dim {cfg.dim}")
    n = grid.n_points
    if cfg.k_max > n // 2:
        raise ValueError(
            f"retained band k_max={cfg.k_max} exceeds grid Nyquist {n // 2}")
    x = np.asarray(f0, dtype=np.float64)
    single = x.ndim == cfg.dim
    if single:
        x = x[None]
    if x.shape[1:] != grid.shape:
        raise ValueError(f"field shape {x.shape[1:]} != grid shape {grid.shape}")
    act, _ = _ACTIVATIONS[cfg.activation]
    axes = _spatial_axes(cfg.dim)
    rows = _gather_rows(cfg, n)
    slots = _slot_index(cfg, n)

    x_in = np.concatenate([_coords(grid, x.shape[0]), x[..., None]], axis=-1)
    f = x_in @ params.lift_w + params.lift_b
    records = []
    for layer in params.layers:
        fh = np.fft.rfftn(f, axes=axes)
        sel_t = _gather(fh, cfg, rows)
        out_t = sel_t @ layer.spectral[slots]
        base = fh.copy() if cfg.spectral_passthrough else None
        zh = _scatter(out_t, fh.shape, cfg, rows, base)
        s = np.fft.irfftn(zh, s=grid.shape, axes=axes)
        pre = f @ layer.pointwise + layer.bias + s
        records.append(_LayerRecord(f, sel_t, pre))
        f = act(pre)
    h_pre = f @ params.proj_w1 + params.proj_b1
    h = act(h_pre)
    out = (h @ params.proj_w2 + params.proj_b2)[..., 0]
    tape = Tape(params, grid, single, x_in, records, f, h_pre, h, out)
    return (out[0] if single else out), tape


# ---------------------------------------------------------------------------
# Backward

def fno_backward(tape: Tape, grad_output):
    """Exact reverse-mode gradients of one forward pass.

    ``grad_output`` is dLoss/dPrediction (same shape as the prediction).
    Returns an :class:`FnoParams`-shaped gradient container (complex spectral
    gradients follow the conjugate-cotangent convention for real losses) and
    the gradient with respect to the input field.
    """
    if tape.released:
        raise StaleTapeError("tape has been released; rerun the forward pass")
    params = tape.params
    cfg = params.config
    _, dact = _ACTIVATIONS[cfg.activation]
    axes = _spatial_axes(cfg.dim)
    n = tape.grid.n_points
    rows = _gather_rows(cfg, n)
    slots = _slot_index(cfg, n)

    g = np.asarray(grad_output, dtype=np.float64)
    if tape.single:
        g = g[None]
    g = g[..., None]  # scalar output channel

    c_hidden = cfg.hidden_channels
    # projection head
    h_flat = tape.h.reshape(-1, PROJECTION_WIDTH)
    g_flat = g.reshape(-1, 1)
    grad_proj_w2 = h_flat.T @ g_flat
    grad_proj_b2 = g_flat.sum(axis=0)
    gh = (g_flat @ params.proj_w2.T).reshape(tape.h.shape)
    gh_pre = gh * dact(tape.h_pre)
    f_last_flat = tape.f_last.reshape(-1, c_hidden)
    ghp_flat = gh_pre.reshape(-1, PROJECTION_WIDTH)
    grad_proj_w1 = f_last_flat.T @ ghp_flat
    grad_proj_b1 = ghp_flat.sum(axis=0)
    gf = (ghp_flat @ params.proj_w1.T).reshape(tape.f_last.shape)

    grad_layers = []
    for layer, rec in zip(reversed(params.layers), reversed(tape.layer_records)):
        gpre = gf * dact(rec.pre)
        gpre_flat = gpre.reshape(-1, c_hidden)
        fin_flat = rec.f_in.reshape(-1, c_hidden)
        grad_w = fin_flat.T @ gpre_flat
        grad_b = gpre_flat.sum(axis=0)
        gf_w = (gpre_flat @ layer.pointwise.T).reshape(rec.f_in.shape)
        # spectral branch
        gzh = irfftn_adjoint(gpre, axes)
        gsel_t = _gather(gzh, cfg, rows)
        r = layer.spectral[slots]
        grad_r = np.zeros_like(layer.spectral)
        grad_r[slots] = rec.sel_t.conj().transpose(0, 2, 1) @ gsel_t
        gfh_t = gsel_t @ r.conj().transpose(0, 2, 1)
        base = gzh.copy() if cfg.spectral_passthrough else None
        gfh = _scatter(gfh_t, gzh.shape, cfg, rows, base)
        gf_spec = rfftn_adjoint(gfh, tape.grid.shape, axes)
        gf = gf_w + gf_spec
        grad_layers.append(LayerParams(grad_r, grad_w, grad_b))
    grad_layers.reverse()

    gf_flat = gf.reshape(-1, c_hidden)
    xin_flat = tape.x_in.reshape(-1, cfg.in_channels)
    grad_lift_w = xin_flat.T @ gf_flat
    grad_lift_b = gf_flat.sum(axis=0)
    gx = (gf_flat @ params.lift_w.T).reshape(tape.x_in.shape)
    input_grad = gx[..., -1]
    if tape.single:
        input_grad = input_grad[0]
    grads = FnoParams(cfg, grad_lift_w, grad_lift_b, grad_layers,
                      grad_proj_w1, grad_proj_b1, grad_proj_w2, grad_proj_b2)
    return grads, input_grad


# ---------------------------------------------------------------------------
# Finite-difference verification

@dataclass(frozen=True)
class GradientCheckResult:
    max_rel_error: float
    n_checked: int
    warned: bool = False


def _real_views(params: FnoParams):
    """(name, flat float64 view) per tensor; complex entries appear as
    interleaved re/im pairs, so one flat index addresses one real scalar."""
    out = []
    for name, arr in params.named():
        view = arr.view(np.float64) if np.iscomplexobj(arr) else arr
        out.append((name, view.reshape(-1)))
    return out


def gradient_check(params: FnoParams, f0, grid: VelocityGrid, loss_fn,
                   n_samples: int, rng: Rng | None = None) -> GradientCheckResult:
    """Compare reverse-mode gradients against central finite differences.

    ``loss_fn(prediction) -> (value, grad_wrt_prediction)`` must be smooth.
    Samples ``n_samples`` scalar parameters uniformly across all tensors
    (real and imaginary parts of spectral weights count separately).  The
    difference uses the fourth-order central stencil with a step tuned to
    each parameter's magnitude: small-magnitude gradients would otherwise be
    swamped by cancellation noise of the plain two-point stencil in f64.
    """
    if n_samples == 0:
        return GradientCheckResult(0.0, 0, warned=True)
    rng = rng or Rng(0)
    pred, tape = fno_forward(params, f0, grid)
    _, gpred = loss_fn(pred)
    grads, _ = fno_backward(tape, gpred)

    def loss_at(name_view, idx, theta):
        name_view[idx] = theta
        out, t = fno_forward(params, f0, grid)
        t.release()
        return loss_fn(out)[0]

    pviews = _real_views(params)
    gviews = dict(_real_views(grads))
    sizes = np.array([v.size for _, v in pviews])
    cum = np.cumsum(sizes)
    total = int(cum[-1])
    picks = np.unique((rng.uniform(0.0, 1.0, size=n_samples) * total).astype(int))
    worst = 0.0
    for flat in picks:
        ti = int(np.searchsorted(cum, flat, side="right"))
        name, view = pviews[ti]
        idx = int(flat - (cum[ti] - sizes[ti]))
        theta = view[idx]
        h = 5e-4 * max(1.0, abs(theta))
        lp1 = loss_at(view, idx, theta + h)
        lm1 = loss_at(view, idx, theta - h)
        lp2 = loss_at(view, idx, theta + 2 * h)
        lm2 = loss_at(view, idx, theta - 2 * h)
        view[idx] = theta
        fd = (8.0 * (lp1 - lm1) - (lp2 - lm2)) / (12.0 * h)
        an = gviews[name][idx]
        rel = abs(an - fd) / max(abs(an), abs(fd), 1e-10)
        worst = max(worst, rel)
    return GradientCheckResult(float(worst), len(picks))
