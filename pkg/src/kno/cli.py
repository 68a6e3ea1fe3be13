"""Command-line interface.

    kno <generate|solve|train|benchmark-bkw|export> --config <path>
        [--seed N] [--out <path>]

Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 numerical
failure.  The environment variable ``KNO_THREADS`` caps BLAS/FFT threads; it
must take effect before numpy loads, so it is applied at import time.
"""

from __future__ import annotations

import os

if "KNO_THREADS" in os.environ:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["KNO_THREADS"])

import argparse
import json
import sys

import numpy as np

from . import bgk as bgk_mod
from . import fno as fno_mod
from . import spectral as sp_mod
from . import train as train_mod
from .config import ConfigError, load_config
from .container import ContainerError, read_container, write_container
from .kinetic import DegenerateStateError, Macroscopics, bkw, maxwellian, moments
from .numerics import Rng, VelocityGrid, make_grid

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _fmt(x) -> str:
    """Floats with 17 significant digits so CSV values re-parse exactly."""
    return format(float(x), ".17g")


def _write_csv(path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(x if isinstance(x, str) else _fmt(x)
                              for x in row) + "\n")


def _section(cfg: dict, name: str) -> dict:
    if name not in cfg:
        raise ConfigError(f"configuration needs a {name!r} section")
    return cfg[name]


def _grid_from(cfg: dict) -> VelocityGrid:
    g = _section(cfg, "grid")
    return make_grid(g["dim"], g["half_width"], g["n_points"], g["kind"])


def _grid_meta(grid: VelocityGrid) -> dict:
    return {"dim": grid.dim, "half_width": grid.half_width,
            "n_points": grid.n_points, "kind": grid.kind}


def _grid_from_meta(meta: dict) -> VelocityGrid:
    return make_grid(meta["dim"], meta["half_width"], meta["n_points"],
                     meta["kind"])


def _seed_of(cfg: dict) -> int:
    return int(cfg.get("seed", 0))


def _kernel_from(grid: VelocityGrid, section: dict) -> sp_mod.SpectralKernel:
    dom = sp_mod.DomainParams.from_half_width(grid.half_width)
    n_radial = int(section.get("n_radial", grid.n_points))
    n_angular = int(section.get("n_angular", 16))
    return sp_mod.precompute_kernel(grid.n_points, dom, n_radial, n_angular)


# ---------------------------------------------------------------------------
# Dataset and checkpoint files

def _save_dataset(ds, out: str) -> None:
    if isinstance(ds, bgk_mod.BgkDataset):
        write_container(out, {"trajectories": ds.trajectories})
        meta = {"kind": "bgk", "seed": ds.seed, "epsilon": ds.epsilon,
                "tau": ds.tau, "dt": ds.dt,
                "n_steps": ds.trajectories.shape[1] - 1,
                "n_trajectories": ds.n_trajectories,
                "grid": _grid_meta(ds.grid)}
    else:
        records = {"initial": ds.initial}
        for t in sorted(ds.targets):
            records[f"target_t{t:g}"] = ds.targets[t]
        write_container(out, records)
        meta = {"kind": "boltzmann", "seed": ds.seed, "dt": ds.dt,
                "target_times": sorted(ds.targets), "labels": ds.kinds,
                "grid": _grid_meta(ds.grid)}
    with open(out + ".json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def _load_dataset(path: str):
    records = read_container(path)
    with open(path + ".json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    grid = _grid_from_meta(meta["grid"])
    if meta["kind"] == "bgk":
        return bgk_mod.BgkDataset(grid, meta["tau"], meta["dt"],
                                  meta["epsilon"], meta["seed"],
                                  records["trajectories"])
    targets = {float(t): records[f"target_t{t:g}"]
               for t in meta["target_times"]}
    return sp_mod.BoltzmannDataset(grid, meta["seed"], meta["dt"],
                                   list(meta["labels"]), records["initial"],
                                   targets)


def save_checkpoint(path: str, params: fno_mod.FnoParams, meta: dict) -> None:
    write_container(path, dict(params.named()))
    cfg = params.config
    doc = {"model": {"dim": cfg.dim, "n_modes": cfg.n_modes,
                     "hidden_channels": cfg.hidden_channels,
                     "n_layers": cfg.n_layers, "activation": cfg.activation,
                     "spectral_passthrough": cfg.spectral_passthrough}}
    doc.update(meta)
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def load_checkpoint(path: str) -> fno_mod.FnoParams:
    records = read_container(path)
    with open(path + ".json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    m = meta["model"]
    cfg = fno_mod.FnoConfig(m["dim"], m["n_modes"], m["hidden_channels"],
                            m["n_layers"], m.get("activation", "gelu"),
                            m.get("spectral_passthrough", False))
    layers = [fno_mod.LayerParams(records[f"layer{t}_spectral"],
                                  records[f"layer{t}_pointwise"],
                                  records[f"layer{t}_bias"])
              for t in range(cfg.n_layers)]
    return fno_mod.FnoParams(cfg, records["lift_w"], records["lift_b"], layers,
                             records["proj_w1"], records["proj_b1"],
                             records["proj_w2"], records["proj_b2"])


# ---------------------------------------------------------------------------
# Commands

def cmd_generate(cfg: dict, out: str) -> None:
    solver = _section(cfg, "solver")
    grid = _grid_from(cfg)
    seed = _seed_of(cfg)
    if solver["type"] == "bgk":
        bcfg = bgk_mod.BgkConfig(solver.get("tau", 0.1), solver.get("dt", 0.01),
                                 solver.get("n_steps", 100), grid)
        ds = bgk_mod.generate_bgk_dataset(Rng(seed),
                                          solver.get("n_trajectories", 100),
                                          solver.get("epsilon", 0.2), bcfg)
    else:
        kernel = _kernel_from(grid, solver)
        ds = sp_mod.generate_boltzmann_dataset(
            seed, grid, kernel,
            n_per_kind=solver.get("n_per_kind", 100),
            kinds=tuple(solver.get("kinds",
                                   ["gaussian", "two_gaussians", "perturbed"])),
            target_times=tuple(solver.get("target_times", [1.0])),
            dt=solver.get("dt", 0.01))
    _save_dataset(ds, out)
    print(f"wrote dataset {out} (+ sidecar {out}.json)")


def _initial_field(cfg: dict, grid: VelocityGrid, solver: dict, seed: int):
    kind = solver.get("initial", "sampled" if solver["type"] == "bgk" else "bkw")
    if solver["type"] == "bgk":
        if kind == "maxwellian":
            return maxwellian(grid, Macroscopics(1.0, np.zeros(1), 1.0, 0.5)).values
        return bgk_mod.sample_bgk_initial(Rng(seed), grid,
                                          solver.get("epsilon", 0.2)).values
    if kind == "bkw":
        return bkw(grid, 0.0).values
    return sp_mod.sample_boltzmann_initial(Rng(seed), grid, kind).values


def _moment_row(t: float, grid: VelocityGrid, values) -> tuple:
    m = moments(grid, values)
    return (t, m.rho) + tuple(m.u) + (m.E,)


def cmd_solve(cfg: dict, out: str) -> None:
    solver = _section(cfg, "solver")
    grid = _grid_from(cfg)
    seed = _seed_of(cfg)
    f = _initial_field(cfg, grid, solver, seed)
    dt = solver.get("dt", 0.01)
    rows = [_moment_row(0.0, grid, f)]
    if solver["type"] == "bgk":
        bcfg = bgk_mod.BgkConfig(solver.get("tau", 0.1), dt,
                                 solver.get("n_steps", 100), grid)
        for n in range(bcfg.n_steps):
            f = bgk_mod.bgk_step(grid, f, bcfg).values
            rows.append(_moment_row((n + 1) * dt, grid, f))
    else:
        t_final = solver.get("t_final", 1.0)
        steps = t_final / dt
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigError(f"t_final/dt = {steps} is not an integer")
        kernel = _kernel_from(grid, solver)
        for n in range(int(round(steps))):
            f = sp_mod.boltzmann_step(f, dt, kernel)
            rows.append(_moment_row((n + 1) * dt, grid, f))
    write_container(out, {"field": f, "axis": grid.axis})
    header = "t,rho," + ",".join(f"u_{i+1}" for i in range(grid.dim)) + ",E"
    _write_csv(out + ".moments.csv", header, rows)
    print(f"wrote solution {out} and {out}.moments.csv")


def cmd_train(cfg: dict, out: str) -> None:
    tsec = _section(cfg, "train")
    if "data" not in tsec:
        raise ConfigError("train.data must point to a dataset container")
    ds = _load_dataset(tsec["data"])
    seed = _seed_of(cfg)
    loss_sec = cfg.get("loss", {})
    loss_cfg = train_mod.LossConfig(
        mode=tsec.get("mode", "point_to_point"),
        base=loss_sec.get("base", "mse"),
        lambda_mass=loss_sec.get("lambda_mass", 0.0),
        lambda_momentum=loss_sec.get("lambda_momentum", 0.0),
        lambda_energy=loss_sec.get("lambda_energy", 0.0),
        weighted=loss_sec.get("weighted", False))
    train_cfg = train_mod.TrainConfig(
        lr=tsec.get("lr", 1e-3), lr_decay=tsec.get("lr_decay", 0.5),
        lr_decay_interval=tsec.get("lr_decay_interval", 50),
        epochs=tsec.get("epochs", 200),
        batch_size=tsec.get("batch_size", 32), seed=seed,
        beta1=tsec.get("beta1", 0.9), beta2=tsec.get("beta2", 0.999),
        eps=tsec.get("eps", 1e-8),
        val_fraction=tsec.get("val_fraction", 0.1),
        rollout_finetune_epochs=tsec.get("rollout_finetune_epochs", 0))
    if "resume_from" in tsec:
        params = load_checkpoint(tsec["resume_from"])
    else:
        m = _section(cfg, "model")
        mcfg = fno_mod.FnoConfig(m["dim"], m["n_modes"], m["hidden_channels"],
                                 m["n_layers"], m.get("activation", "gelu"),
                                 m.get("spectral_passthrough", False))
        params = fno_mod.init_fno(mcfg, Rng(seed))
    if loss_cfg.mode == "sequence":
        params, history = train_mod.train_bgk_sequence(params, ds, train_cfg,
                                                       loss_cfg)
        meta = {"mode": "sequence", "seed": seed}
    else:
        t_target = tsec.get("target_time", 1.0)
        params, history = train_mod.train_boltzmann_p2p(params, ds, t_target,
                                                        train_cfg, loss_cfg)
        meta = {"mode": "point_to_point", "seed": seed,
                "target_time": t_target}
    save_checkpoint(out, params, meta)
    _write_csv(out + ".history.csv", train_mod.TrainHistory.CSV_HEADER,
               history.rows())
    print(f"wrote checkpoint {out} and {out}.history.csv")


BENCHMARK_HEADER = "method,L1,L2,Linf,d_rho,d_u,d_E"


def cmd_benchmark_bkw(cfg: dict, out: str) -> None:
    grid = _grid_from(cfg)
    if grid.dim != 2:
        raise ConfigError("the benchmark needs a two-dimensional grid")
    bsec = cfg.get("benchmark", {})
    times = [float(t) for t in bsec.get("times", [1.0, 4.0, 7.0])]
    methods = bsec.get("methods", ["sm"])
    checkpoints = bsec.get("checkpoints", {})
    dt = bsec.get("dt", 0.01)
    kernel = _kernel_from(grid, bsec)
    f0 = bkw(grid, 0.0).values
    labels = {"sm": "SM", "fno": "FNO", "cfno": "C-FNO"}
    for t in times:
        fields = {}
        for method in methods:
            if method == "sm":
                fields[labels[method]] = sp_mod.solve_boltzmann(f0, t, dt, kernel)
            else:
                table = checkpoints.get(method, {})
                key = f"{t:g}"
                if key not in table:
                    raise ConfigError(
                        f"no {method} checkpoint for t={key}; available: "
                        f"{sorted(table) or 'none'}")
                params = load_checkpoint(table[key])
                pred, tape = fno_mod.fno_forward(params, f0, grid)
                tape.release()
                fields[labels[method]] = pred
        ref = bkw(grid, t).values
        rows = train_mod.evaluate(fields, ref, grid)
        path = f"{out}_t{t:g}.csv"
        _write_csv(path, BENCHMARK_HEADER,
                   [(r["method"], r["L1"], r["L2"], r["Linf"],
                     r["d_rho"], r["d_u"], r["d_E"]) for r in rows])
        print(f"wrote {path}")


def cmd_export(cfg: dict, out: str) -> None:
    esec = _section(cfg, "export")
    files = esec["files"]
    axis_fixed = 0 if esec["slice"] == "v1=0" else 1
    rows = []
    for path in files:
        records = read_container(path)
        field = records["field"]
        axis = records["axis"]
        if field.ndim == 1:
            sliced, coords = field, axis
        else:
            idx = int(np.argmin(np.abs(axis)))
            sliced = field[idx, :] if axis_fixed == 0 else field[:, idx]
            coords = axis
        for v, fv in zip(coords, sliced):
            rows.append((path, v, fv) if len(files) > 1 else (v, fv))
    header = "file,v,f" if len(files) > 1 else "v,f"
    _write_csv(out, header, rows)
    print(f"wrote {out}")


_COMMANDS = {
    "generate": (cmd_generate, "dataset.kno"),
    "solve": (cmd_solve, "solution.kno"),
    "train": (cmd_train, "checkpoint.kno"),
    "benchmark-bkw": (cmd_benchmark_bkw, "benchmark"),
    "export": (cmd_export, "profiles.csv"),
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kno",
        description="Kinetic solvers and conservation-aware operator learning")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--out", default=None)
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.seed is not None:
        cfg["seed"] = args.seed
    fn, default_out = _COMMANDS[args.command]
    out = args.out or default_out
    try:
        fn(cfg, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (train_mod.NanGradientError, DegenerateStateError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ContainerError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
