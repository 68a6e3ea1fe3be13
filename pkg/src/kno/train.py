"""Losses (with closed-form gradients), Adam, learning-rate schedule,
the two training loops (sequence-to-sequence for the 1D relaxation model,
point-to-point for the 2D collision model), and table-row evaluation.

Loss conventions: the MSE is the mean over samples and grid points of the
squared difference (the operator-learning convention of unweighted vector
norms); the relative-L2 metric is the per-sample ratio of discrete L2 norms
averaged over the batch.  Conservation penalties are squared differences of
quadrature moments between prediction and reference, averaged over the batch;
they are quadratic in the prediction, so their gradients are closed-form.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .fno import FnoParams, fno_backward, fno_forward
from .numerics import Rng, VelocityGrid

__all__ = [
    "LossConfig",
    "TrainConfig",
    "EpochRecord",
    "TrainHistory",
    "AdamState",
    "NanGradientError",
    "loss_base",
    "conservation_penalties",
    "total_loss",
    "sequence_loss",
    "make_loss_fn",
    "adam_step",
    "lr_schedule",
    "rollout",
    "train_bgk_sequence",
    "train_boltzmann_p2p",
    "evaluate",
]


class NanGradientError(RuntimeError):
    """A non-finite loss or gradient aborted the optimization."""


@dataclass(frozen=True)
class LossConfig:
    mode: str = "point_to_point"      # or "sequence"
    base: str = "mse"                 # or "relative_l2"
    lambda_mass: float = 0.0
    lambda_momentum: float = 0.0
    lambda_energy: float = 0.0
    weighted: bool = False            # quadrature-weighted base norm

    def __post_init__(self):
        if self.mode not in ("point_to_point", "sequence"):
            raise ValueError(f"unknown loss mode {self.mode!r}")
        if self.base not in ("mse", "relative_l2"):
            raise ValueError(f"unknown base loss {self.base!r}")
        if min(self.lambda_mass, self.lambda_momentum, self.lambda_energy) < 0:
            raise ValueError("penalty weights must be nonnegative")

    @property
    def has_penalties(self) -> bool:
        return (self.lambda_mass > 0 or self.lambda_momentum > 0
                or self.lambda_energy > 0)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    lr_decay: float = 0.5
    lr_decay_interval: int = 50
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    val_fraction: float = 0.1
    rollout_finetune_epochs: int = 0

    def __post_init__(self):
        if not 0 < self.lr_decay <= 1:
            raise ValueError(f"decay factor must be in (0, 1], got {self.lr_decay}")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    mse: float
    c_mass: float
    c_momentum: float
    c_energy: float
    wall_time: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    CSV_HEADER = "epoch,lr,train_loss,val_loss,mse,c_mass,c_momentum,c_energy,wall_time"

    def rows(self):
        for r in self.records:
            yield (r.epoch, r.lr, r.train_loss, r.val_loss, r.mse,
                   r.c_mass, r.c_momentum, r.c_energy, r.wall_time)


# ---------------------------------------------------------------------------
# Losses

def _as_batch(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a


def loss_base(f_pred, f_ref, kind: str, weights: np.ndarray | None = None) -> float:
    """MSE (mean over samples and points) or batch-mean relative L2."""
    p = _as_batch(f_pred)
    r = _as_batch(f_ref)
    if p.shape != r.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {r.shape}")
    d = p - r
    if kind == "mse":
        if weights is None:
            return float(np.mean(d * d))
        return float(np.mean(np.sum(weights * d * d, axis=tuple(range(1, d.ndim)))))
    if kind == "relative_l2":
        flat_axes = tuple(range(1, d.ndim)) if d.ndim > 1 else (0,)
        dn = np.sqrt(np.sum(d * d, axis=flat_axes))
        rn = np.sqrt(np.sum(r * r, axis=flat_axes))
        if np.any(rn == 0):
            raise ValueError("relative loss undefined for a zero-norm reference")
        return float(np.mean(dn / rn))
    raise ValueError(f"unknown base loss {kind!r}")


def _moment_diffs(diff: np.ndarray, grid: VelocityGrid):
    """Per-sample moment differences of a (batch, *grid) difference field."""
    w = grid.quad_weights
    axes = tuple(range(1, diff.ndim))
    dm = np.sum(w * diff, axis=axes)
    if grid.dim == 1:
        dp = [np.sum(w * grid.axis * diff, axis=axes)]
    else:
        dp = [np.sum(w * grid.axis[:, None] * diff, axis=axes),
              np.sum(w * grid.axis[None, :] * diff, axis=axes)]
    de = np.sum(w * grid.speed_squared() * diff, axis=axes)
    return dm, dp, de


def conservation_penalties(f_pred, f_ref, grid: VelocityGrid):
    """(C_mass, C_momentum, C_energy): batch means of squared quadrature-
    moment differences (momentum summed over components, energy with the
    |v|^2 weight)."""
    p = _as_batch(f_pred)
    r = _as_batch(f_ref)
    if p.ndim == grid.dim:
        p, r = p[None], r[None]
    dm, dp, de = _moment_diffs(p - r, grid)
    c_m = float(np.mean(dm**2))
    c_p = float(sum(np.mean(c**2) for c in dp))
    c_e = float(np.mean(de**2))
    return c_m, c_p, c_e


def total_loss(f_pred, f_ref, grid: VelocityGrid, cfg: LossConfig):
    """Base loss plus weighted penalties; returns (scalar, components dict)."""
    base = loss_base(f_pred, f_ref, cfg.base,
                     grid.quad_weights if cfg.weighted else None)
    c_m, c_p, c_e = conservation_penalties(f_pred, f_ref, grid)
    value = (base + cfg.lambda_mass * c_m + cfg.lambda_momentum * c_p
             + cfg.lambda_energy * c_e)
    return value, {"base": base, "c_mass": c_m, "c_momentum": c_p,
                   "c_energy": c_e}


def _value_and_grad(pred: np.ndarray, ref: np.ndarray, grid: VelocityGrid,
                    cfg: LossConfig, sample_weight: float | None = None):
    """Loss value, components, and dLoss/dpred for a (batch, *grid) batch.

    ``sample_weight`` overrides the 1/batch averaging (used by the sequence
    loss, where samples of one trajectory are summed, not averaged).
    """
    n = pred.shape[0]
    ws = (1.0 / n) if sample_weight is None else sample_weight
    d = pred - ref
    axes = tuple(range(1, d.ndim))
    npoints = int(np.prod(d.shape[1:]))
    if cfg.base == "mse":
        if cfg.weighted:
            base = ws * float(np.sum(grid.quad_weights * d * d))
            grad = (2.0 * ws) * grid.quad_weights * d
        else:
            base = ws * float(np.sum(d * d)) / npoints
            grad = (2.0 * ws / npoints) * d
    else:
        dn = np.sqrt(np.sum(d * d, axis=axes))
        rn = np.sqrt(np.sum(ref * ref, axis=axes))
        if np.any(rn == 0):
            raise ValueError("relative loss undefined for a zero-norm reference")
        base = ws * float(np.sum(dn / rn))
        safe = np.where(dn > 0, dn, 1.0)
        grad = ws * d / (safe * rn).reshape((-1,) + (1,) * len(axes))
    comps = {"base": base, "c_mass": 0.0, "c_momentum": 0.0, "c_energy": 0.0}
    if cfg.has_penalties:
        w = grid.quad_weights
        dm, dp, de = _moment_diffs(d, grid)
        bshape = (-1,) + (1,) * len(axes)
        c_m = ws * float(np.sum(dm**2))
        c_p = ws * float(sum(np.sum(c**2) for c in dp))
        c_e = ws * float(np.sum(de**2))
        comps["c_mass"], comps["c_momentum"], comps["c_energy"] = c_m, c_p, c_e
        grad = grad + cfg.lambda_mass * (2.0 * ws) * dm.reshape(bshape) * w
        if grid.dim == 1:
            grad = grad + cfg.lambda_momentum * (2.0 * ws) * (
                dp[0].reshape(bshape) * (w * grid.axis))
        else:
            grad = grad + cfg.lambda_momentum * (2.0 * ws) * (
                dp[0].reshape(bshape) * (w * grid.axis[:, None])
                + dp[1].reshape(bshape) * (w * grid.axis[None, :]))
        grad = grad + cfg.lambda_energy * (2.0 * ws) * (
            de.reshape(bshape) * (w * grid.speed_squared()))
    value = (comps["base"] + cfg.lambda_mass * comps["c_mass"]
             + cfg.lambda_momentum * comps["c_momentum"]
             + cfg.lambda_energy * comps["c_energy"])
    return value, comps, grad


def make_loss_fn(f_ref, grid: VelocityGrid, cfg: LossConfig):
    """Callable ``pred -> (value, grad)`` for gradient checks and training."""
    ref = _as_batch(f_ref)

    def fn(pred):
        p = _as_batch(pred)
        squeeze = p.ndim == grid.dim
        pb = p[None] if squeeze else p
        rb = ref[None] if squeeze else ref
        value, _, grad = _value_and_grad(pb, rb, grid, cfg)
        return value, (grad[0] if squeeze else grad)

    return fn


def sequence_loss(rollout_preds, trajectory_ref, cfg: LossConfig,
                  grid: VelocityGrid | None = None) -> float:
    """Sum over rollout steps of the squared L2 (mean over points), averaged
    over samples; with nonzero penalty weights (requires ``grid``) the same
    per-step conservation penalties are added."""
    p = _as_batch(rollout_preds)
    r = _as_batch(trajectory_ref)
    if p.shape != r.shape:
        raise ValueError(f"rollout length/shape mismatch {p.shape} vs {r.shape}")
    if p.ndim < 3:  # (T, *grid) single sample
        p, r = p[None], r[None]
    n, t_steps = p.shape[0], p.shape[1]
    d = p - r
    npoints = int(np.prod(p.shape[2:]))
    value = float(np.sum(d * d)) / (n * npoints)
    if cfg.has_penalties:
        if grid is None:
            raise ValueError("penalties in the sequence loss need the grid")
        flat_p = p.reshape((n * t_steps,) + p.shape[2:])
        flat_r = r.reshape((n * t_steps,) + r.shape[2:])
        dm, dp, de = _moment_diffs(flat_p - flat_r, grid)
        value += cfg.lambda_mass * float(np.sum(dm**2)) / n
        value += cfg.lambda_momentum * float(sum(np.sum(c**2) for c in dp)) / n
        value += cfg.lambda_energy * float(np.sum(de**2)) / n
    return value


# ---------------------------------------------------------------------------
# Optimizer

@dataclass
class AdamState:
    """First/second moment accumulators per named tensor, plus step count."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def _float_view(a: np.ndarray) -> np.ndarray:
    return a.view(np.float64) if np.iscomplexobj(a) else a


def adam_step(params: FnoParams, grads: FnoParams, state: AdamState,
              t: int, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> FnoParams:
    """One Adam update with bias correction; returns new parameters.

    Complex tensors are updated component-wise through their real views.
    Non-finite gradients abort with a diagnostic."""
    if t < 1:
        raise ValueError(f"step index must be >= 1, got {t}")
    new = params.copy()
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for (name, g), (_, p) in zip(grads.named(), new.named()):
        gview = _float_view(g)
        if not np.all(np.isfinite(gview)):
            raise NanGradientError(f"non-finite gradient in {name}")
        if name not in state.m:
            state.m[name] = np.zeros_like(gview)
            state.v[name] = np.zeros_like(gview)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * gview
        v *= beta2
        v += (1.0 - beta2) * gview * gview
        pview = _float_view(p)
        pview -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    state.t = t
    return new


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Step decay: lr * decay^(epoch // interval)."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return cfg.lr * cfg.lr_decay ** (epoch // cfg.lr_decay_interval)


# ---------------------------------------------------------------------------
# Training loops

def rollout(params: FnoParams, f0, grid: VelocityGrid, n_steps: int) -> np.ndarray:
    """Autoregressive application of the one-step operator; returns the
    predicted states including the initial one, stacked along a new axis."""
    f = np.asarray(f0, dtype=np.float64)
    states = [f]
    for _ in range(n_steps):
        f, tape = fno_forward(params, f, grid)
        tape.release()
        states.append(f)
    return np.stack(states, axis=-grid.dim - 1)


def _epoch_pass(params, grid, inputs, targets, order, batch_size, loss_cfg,
                state, t0, lr, tcfg):
    """One optimization epoch over flattened (input, target) pairs grouped by
    ``order`` (indices into the leading axis).  Returns updated params, the
    running step count, and accumulated loss components."""
    totals = np.zeros(4)
    n_seen = 0
    t = t0
    for lo in range(0, len(order), batch_size):
        idx = order[lo:lo + batch_size]
        x = inputs[idx]
        y = targets[idx]
        if x.ndim > grid.dim + 1:  # trajectory batches: flatten steps
            n_traj = x.shape[0]
            x = x.reshape((-1,) + x.shape[2:])
            y = y.reshape((-1,) + y.shape[2:])
            sw = 1.0 / n_traj
        else:
            sw = None
        pred, tape = fno_forward(params, x, grid)
        value, comps, gpred = _value_and_grad(pred, y, grid, loss_cfg,
                                              sample_weight=sw)
        if not np.isfinite(value):
            raise NanGradientError(f"non-finite loss {value}")
        grads, _ = fno_backward(tape, gpred)
        tape.release()
        t += 1
        params = adam_step(params, grads, state, t, lr,
                           tcfg.beta1, tcfg.beta2, tcfg.eps)
        k = len(idx)
        totals += k * np.array([value, comps["c_mass"], comps["c_momentum"],
                                comps["c_energy"]])
        n_seen += k
    return params, t, totals / n_seen


def _eval_loss(params, grid, inputs, targets, loss_cfg, per_trajectory):
    x, y = inputs, targets
    if per_trajectory:
        n_traj = x.shape[0]
        x = x.reshape((-1,) + x.shape[2:])
        y = y.reshape((-1,) + y.shape[2:])
        sw = 1.0 / n_traj
    else:
        sw = None
    pred, tape = fno_forward(params, x, grid)
    tape.release()
    value, _, _ = _value_and_grad(pred, y, grid, loss_cfg, sample_weight=sw)
    return value


def train_bgk_sequence(model: FnoParams, dataset, train_cfg: TrainConfig,
                       loss_cfg: LossConfig):
    """Sequence-to-sequence training of the one-step relaxation operator.

    Teacher forcing: inputs are reference states at every step, the loss is
    the per-step sum over each trajectory (plus optional per-step
    conservation penalties).  Batches are whole trajectories.  Optional
    full-rollout fine-tuning (gradients through the autoregressive chain) is
    enabled by ``rollout_finetune_epochs``.  Evaluation of a trained model
    always uses the autoregressive rollout from f0.
    """
    if dataset.n_trajectories < 1:
        raise ValueError("empty dataset")
    grid = dataset.grid
    train, val = dataset.split(train_cfg.val_fraction)
    inputs, targets = train[:, :-1], train[:, 1:]
    vin, vtgt = val[:, :-1], val[:, 1:]

    params = model
    state = AdamState()
    history = TrainHistory()
    step = 0
    for epoch in range(train_cfg.epochs):
        tic = time.perf_counter()
        lr = lr_schedule(epoch, train_cfg)
        order = Rng(train_cfg.seed, stream=1 + epoch).permutation(len(inputs))
        params, step, avg = _epoch_pass(
            params, grid, inputs, targets, order, train_cfg.batch_size,
            loss_cfg, state, step, lr, train_cfg)
        val_loss = _eval_loss(params, grid, vin, vtgt, loss_cfg, True)
        history.records.append(EpochRecord(epoch, lr, avg[0], val_loss,
                                           avg[0] - loss_cfg.lambda_mass * avg[1]
                                           - loss_cfg.lambda_momentum * avg[2]
                                           - loss_cfg.lambda_energy * avg[3],
                                           avg[1], avg[2], avg[3],
                                           time.perf_counter() - tic))
    for extra in range(train_cfg.rollout_finetune_epochs):
        tic = time.perf_counter()
        lr = lr_schedule(train_cfg.epochs - 1, train_cfg)
        order = Rng(train_cfg.seed, stream=10_001 + extra).permutation(len(train))
        params, step = _rollout_finetune_epoch(
            params, grid, train, order, max(1, train_cfg.batch_size // 8),
            loss_cfg, state, step, lr, train_cfg)
        val_loss = _eval_loss(params, grid, vin, vtgt, loss_cfg, True)
        history.records.append(EpochRecord(train_cfg.epochs + extra, lr,
                                           float("nan"), val_loss,
                                           float("nan"), 0.0, 0.0, 0.0,
                                           time.perf_counter() - tic))
    return params, history


def _rollout_finetune_epoch(params, grid, trajectories, order, batch_size,
                            loss_cfg, state, step, lr, tcfg):
    """Backpropagation through the full autoregressive chain."""
    t_steps = trajectories.shape[1] - 1
    for lo in range(0, len(order), batch_size):
        idx = order[lo:lo + batch_size]
        batch = trajectories[idx]
        n_traj = batch.shape[0]
        f = batch[:, 0]
        tapes, preds = [], []
        for k in range(t_steps):
            f, tape = fno_forward(params, f, grid)
            tapes.append(tape)
            preds.append(f)
        grads_total = params.map(np.zeros_like)
        g_next = np.zeros_like(f)
        for k in reversed(range(t_steps)):
            _, _, gstep = _value_and_grad(preds[k], batch[:, k + 1], grid,
                                          loss_cfg, sample_weight=1.0 / n_traj)
            g, g_in = fno_backward(tapes[k], gstep + g_next)
            tapes[k].release()
            for (_, acc), (_, inc) in zip(grads_total.named(), g.named()):
                acc += inc
            g_next = g_in
        step += 1
        params = adam_step(params, grads_total, state, step, lr,
                           tcfg.beta1, tcfg.beta2, tcfg.eps)
    return params, step


def train_boltzmann_p2p(model: FnoParams, dataset, target_time: float,
                        train_cfg: TrainConfig, loss_cfg: LossConfig):
    """Point-to-point training of the fixed-time evolution operator
    f0 -> f(target_time)."""
    if dataset.n_samples < 1:
        raise ValueError("empty dataset")
    t = float(target_time)
    if t not in dataset.targets:
        raise ValueError(f"dataset has no targets at t={t}; "
                         f"available: {sorted(dataset.targets)}")
    grid = dataset.grid
    inputs = dataset.initial
    targets = dataset.targets[t]
    n_val = max(1, int(round(train_cfg.val_fraction * inputs.shape[0])))
    tr_in, tr_tgt = inputs[:-n_val], targets[:-n_val]
    va_in, va_tgt = inputs[-n_val:], targets[-n_val:]

    params = model
    state = AdamState()
    history = TrainHistory()
    step = 0
    for epoch in range(train_cfg.epochs):
        tic = time.perf_counter()
        lr = lr_schedule(epoch, train_cfg)
        order = Rng(train_cfg.seed, stream=1 + epoch).permutation(len(tr_in))
        params, step, avg = _epoch_pass(
            params, grid, tr_in, tr_tgt, order, train_cfg.batch_size,
            loss_cfg, state, step, lr, train_cfg)
        val_loss = _eval_loss(params, grid, va_in, va_tgt, loss_cfg, False)
        history.records.append(EpochRecord(epoch, lr, avg[0], val_loss,
                                           avg[0] - loss_cfg.lambda_mass * avg[1]
                                           - loss_cfg.lambda_momentum * avg[2]
                                           - loss_cfg.lambda_energy * avg[3],
                                           avg[1], avg[2], avg[3],
                                           time.perf_counter() - tic))
    return params, history


# ---------------------------------------------------------------------------
# Evaluation

def evaluate(method_fields: dict, reference, grid: VelocityGrid) -> list[dict]:
    """Per-method table rows against a reference field.

    Field norms are taken along the row nearest ``v2 = 0`` for 2D grids
    (full-grid norms in 1D); moment errors compare quadrature moments of
    prediction and reference on the same grid.
    """
    from .kinetic import error_norms

    ref = np.asarray(reference, dtype=np.float64)
    if grid.dim == 2:
        slice_axis, slice_index = 1, int(np.argmin(np.abs(grid.axis)))
    else:
        slice_axis, slice_index = None, None
    rows = []
    for name, fld in method_fields.items():
        rep = error_norms(np.asarray(fld), ref, grid,
                          slice_axis=slice_axis, slice_index=slice_index)
        rows.append({"method": name, "L1": rep.l1, "L2": rep.l2,
                     "Linf": rep.linf, "d_rho": rep.d_rho, "d_u": rep.d_u,
                     "d_E": rep.d_energy})
    return rows
