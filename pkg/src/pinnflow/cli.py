"""Command-line surface: training, evaluation, field export, diagnostics.

Run configuration files are flat ``key = value`` text (``#`` comments,
blank lines ignored).  Recognized keys mirror the TrainRunConfig fields:

  fourier_bins, fourier_sigma, hidden_layers, hidden_width,
  x_min, x_max, y_min, y_max, t_min, t_max,
  cylinder_x, cylinder_y, cylinder_diameter ("none" to drop the obstacle),
  nu_min, nu_max,
  n_labeled, n_residual, refinement, refinement_fraction, refinement_radius,
  w_data, w_pde, w_bc, mode,
  train_nus, test_nus (semicolon- or comma-free ";"-separated lists),
  epochs, seed, lr, beta1, beta2, eps, batch_size,
  data_path, n_boundary_per_kind, out_dir, checkpoint_every

Every failure exits nonzero with a one-line ``reason: detail`` message on
stderr (exit 2 for usage/configuration errors).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import analytic, evaluation, physics
from .autodiff import directional_derivatives
from .data import (
    LabeledSet,
    assemble_split,
    load_snapshots,
    taylor_green_dataset,
    write_snapshots,
)
from .network import NetworkConfig
from .physics import cylinder_panels, lift_force, residual_values, vorticity_values
from .sampling import DomainSpec, SamplingPlan, sample_interior
from .training import LossWeights, TrainRunConfig, load_checkpoint, train


class CliError(Exception):
    """One-line machine-parsable failure: ``reason: detail``."""

    def __init__(self, reason: str, detail: str = "", status: int = 2):
        self.reason = reason
        self.detail = detail
        self.status = status
        super().__init__(f"{reason}: {detail}" if detail else reason)


# ---------------------------------------------------------------------------
# run-config parsing
# ---------------------------------------------------------------------------


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError("config-parse-error", f"line {lineno}: expected key = value")
        k, _, v = line.partition("=")
        out[k.strip()] = v.strip()
    return out


def _floats(raw: str) -> tuple[float, ...]:
    raw = raw.strip()
    if not raw or raw == "none":
        return ()
    return tuple(float(x) for x in raw.replace(",", ";").split(";") if x.strip())


def load_run_config(path: str) -> TrainRunConfig:
    if not os.path.exists(path):
        raise CliError("config-not-found", path)
    with open(path, "r", encoding="utf-8") as fh:
        kv = parse_config_text(fh.read())

    def get(key, cast, default):
        if key not in kv:
            return default
        try:
            return cast(kv[key])
        except ValueError as err:
            raise CliError("config-parse-error", f"key {key!r}: {err}") from err

    try:
        network = NetworkConfig(
            fourier_bins=get("fourier_bins", int, 50),
            fourier_sigma=get("fourier_sigma", float, 1.0),
            hidden_layers=get("hidden_layers", int, 7),
            hidden_width=get("hidden_width", int, 100),
        )
        cyl = kv.get("cylinder_diameter", "1.0")
        domain = DomainSpec(
            x_min=get("x_min", float, -2.5),
            x_max=get("x_max", float, 7.5),
            y_min=get("y_min", float, -2.5),
            y_max=get("y_max", float, 2.5),
            t_min=get("t_min", float, 0.0),
            t_max=get("t_max", float, 60.0),
            cylinder_center=(get("cylinder_x", float, 0.0), get("cylinder_y", float, 0.0)),
            cylinder_diameter=None if cyl == "none" else float(cyl),
            nu_min=get("nu_min", float, 0.002),
            nu_max=get("nu_max", float, 0.010),
        )
        sampling = SamplingPlan(
            n_labeled=get("n_labeled", int, 500_000),
            n_residual=get("n_residual", int, 800_000),
            refinement=kv.get("refinement", "uniform"),
            refinement_fraction=get("refinement_fraction", float, 0.5),
            refinement_radius=get("refinement_radius", float, 2.0),
            seed=get("seed", int, 0),
        )
        weights = LossWeights(
            w_data=get("w_data", float, 1.0),
            w_pde=get("w_pde", float, 1.0),
            w_bc=get("w_bc", float, 1.0),
            mode=kv.get("mode", "pinn"),
        )
        data_path = kv.get("data_path") or None
        out_dir = kv.get("out_dir") or None
        return TrainRunConfig(
            network=network,
            domain=domain,
            sampling=sampling,
            weights=weights,
            train_nus=_floats(kv.get("train_nus", "0.002;0.0025;0.003;0.005;0.010")),
            test_nus=_floats(kv.get("test_nus", "")),
            epochs=get("epochs", int, 30_000),
            seed=get("seed", int, 0),
            lr=get("lr", float, 1e-3),
            beta1=get("beta1", float, 0.9),
            beta2=get("beta2", float, 0.999),
            eps=get("eps", float, 1e-8),
            batch_size=get("batch_size", int, 4096),
            data_path=data_path,
            n_boundary_per_kind=get("n_boundary_per_kind", int, 0),
            out_dir=out_dir,
            checkpoint_every=get("checkpoint_every", int, 0),
        )
    except CliError:
        raise
    except FileNotFoundError as err:
        raise CliError("data-not-found", str(err)) from err
    except (ValueError, TypeError) as err:
        raise CliError("config-invalid", str(err)) from err


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _require_file(path: str, reason: str) -> str:
    if not os.path.exists(path):
        raise CliError(reason, path)
    return path


def _cmd_train(args) -> int:
    run = load_run_config(args.config)
    if args.mode is not None:
        run = replace(run, weights=replace(run.weights, mode=args.mode))
    if args.seed is not None:
        run = replace(run, seed=args.seed, sampling=replace(run.sampling, seed=args.seed))
    if run.out_dir is None:
        run = replace(run, out_dir=args.out_dir or ".")
    final, _ = train(run)
    print(f"trained {final.epoch} epochs -> {os.path.join(run.out_dir, 'checkpoint.pnns')}")
    return 0


def _cmd_eval(args) -> int:
    ck = load_checkpoint(_require_file(args.checkpoint, "checkpoint-not-found"))
    points = load_snapshots(_require_file(args.data, "data-not-found"))
    data_nus = sorted({round(float(v), 15) for v in points.nu})
    train_nus = [nu for nu in data_nus if any(abs(nu - v) <= 1e-12 for v in ck.train_nus)]
    test_nus = [nu for nu in data_nus if nu not in train_nus]
    split = assemble_split(points, train_nus, test_nus)
    plan = SamplingPlan(n_labeled=1, n_residual=args.residual_n, seed=args.seed)
    residual = sample_interior(ck.domain, plan)
    report = evaluation.evaluate(ck, split, residual, seed=args.seed)
    report.to_csv(args.out)
    print(f"wrote {args.out} ({len(report.rows)} rows)")
    return 0


def _cmd_vorticity(args) -> int:
    ck = load_checkpoint(_require_file(args.checkpoint, "checkpoint-not-found"))
    grid, _, _ = evaluation.vorticity_field(ck, args.nu, args.t, args.nx, args.ny)
    evaluation.write_grid(args.out, grid, ck.domain)
    print(f"wrote {args.out} ({args.nx}x{args.ny})")
    return 0


def _cmd_lift(args) -> int:
    ck = load_checkpoint(_require_file(args.checkpoint, "checkpoint-not-found"))
    if ck.domain.cylinder_diameter is None:
        raise CliError("no-cylinder", "checkpoint domain has no obstacle")
    panels = cylinder_panels(args.panels, ck.domain.cylinder_diameter)
    series = evaluation.lift_series(ck, args.nu, (args.t_min, args.t_max), args.steps, panels)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,lift\n")
        for t, fl in series:
            fh.write("%.17g,%.17g\n" % (t, fl))
    print(f"wrote {args.out} ({len(series)} steps)")
    return 0


def _load_series(path: str):
    vals = []
    with open(_require_file(path, "series-not-found"), "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                try:
                    vals.append(float(line.split(",")[-1]))
                except ValueError:
                    continue  # header line
    return np.asarray(vals)


def _cmd_timeshift(args) -> int:
    pred = _load_series(args.pred)
    ref = _load_series(args.ref)
    try:
        lag = evaluation.time_shift(pred, ref, args.dt)
    except (evaluation.DegenerateSeries, ValueError) as err:
        raise CliError("degenerate-series", str(err)) from err
    print("%.17g" % lag)
    return 0


def _cmd_gen_taylor_green(args) -> int:
    nus = _floats(args.nus)
    if not nus:
        raise CliError("config-invalid", "at least one nu value required")
    points = taylor_green_dataset(nus, args.n, t_range=(args.t_min, args.t_max), seed=args.seed)
    write_snapshots(args.out, points)
    print(f"wrote {args.out} ({len(points)} rows)")
    return 0


def _cmd_sample(args) -> int:
    run = load_run_config(args.plan)
    batch = sample_interior(run.domain, run.sampling)
    # labels are unknown at sampling time; emit zeros so the file round-trips
    # through the snapshot loader
    zeros = np.zeros(len(batch))
    write_snapshots(args.out, LabeledSet(batch.x, batch.y, batch.t, batch.nu, zeros, zeros, zeros))
    print(f"wrote {args.out} ({len(batch)} rows)")
    return 0


# ---------------------------------------------------------------------------
# oracle self-check suite
# ---------------------------------------------------------------------------


def _oracle_checks():
    """(name, passed) pairs for the built-in analytic checks."""
    results = []
    nu = 0.01
    rng = np.random.default_rng(1234)
    x = rng.uniform(0, 2 * math.pi, 64)
    y = rng.uniform(0, 2 * math.pi, 64)
    t = rng.uniform(0, 1, 64)
    nus = np.full(64, nu)

    def tg_field(xv, yv, tv, nuv):
        return analytic.taylor_green(xv, yv, tv, nuv)

    f, g, h = residual_values(tg_field, x, y, t, nus)
    results.append(("residual-nullity", float(np.max(np.abs([f, g, h]))) < 1e-10))

    omega = vorticity_values(tg_field, x, y, t, nus)
    exact = analytic.taylor_green_vorticity(x, y, t, nus)
    results.append(("vorticity-closed-form", float(np.max(np.abs(omega - exact))) < 1e-10))

    panels = cylinder_panels(512, 1.0)
    fl = lift_force(lambda xv, yv, tv, nuv: (0.0 * xv, 0.0 * yv, yv), 0.0, nu, panels)
    results.append(("lift-closed-form", abs(fl + math.pi * 0.25) < 1e-9))

    w_rot = vorticity_values(
        analytic.rigid_rotation, np.array([0.3]), np.array([0.1]), np.array([0.0]), np.array([nu])
    )
    results.append(("rigid-rotation-vorticity", abs(float(w_rot[0]) - 2.0) < 1e-12))

    from .autodiff import sin as adsin

    val, d1v, d2v = directional_derivatives(
        lambda xv, yv, tv: adsin(xv) * yv, (0.7, 1.3, 0.0), "x"
    )
    ok = abs(val - math.sin(0.7) * 1.3) < 1e-12
    ok = ok and abs(d1v - math.cos(0.7) * 1.3) < 1e-10
    ok = ok and abs(d2v + math.sin(0.7) * 1.3) < 1e-10
    results.append(("derivative-closed-form", ok))
    return results


def _cmd_check(args) -> int:
    if args.suite != "oracle":
        raise CliError("unknown-suite", args.suite)
    failed = 0
    for name, ok in _oracle_checks():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
        if not ok:
            failed += 1
    if failed:
        raise CliError("oracle-check-failed", f"{failed} checks", status=1)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pinnflow", description="Parametric flow-field learner")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("train", help="train a model from a run config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--mode", choices=("pinn", "nn"))
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out-dir")
    sp.set_defaults(func=_cmd_train)

    sp = sub.add_parser("eval", help="score a checkpoint against labeled data")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--residual-n", type=int, default=2000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="report.csv")
    sp.set_defaults(func=_cmd_eval)

    sp = sub.add_parser("vorticity", help="export a gridded vorticity field")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--nu", type=float, required=True)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--nx", type=int, default=200)
    sp.add_argument("--ny", type=int, default=100)
    sp.add_argument("--out", default="vorticity.txt")
    sp.set_defaults(func=_cmd_vorticity)

    sp = sub.add_parser("lift", help="export a lift-force time series")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--nu", type=float, required=True)
    sp.add_argument("--t-min", type=float, default=0.0)
    sp.add_argument("--t-max", type=float, default=60.0)
    sp.add_argument("--steps", type=int, default=256)
    sp.add_argument("--panels", type=int, default=physics.DEFAULT_PANEL_COUNT)
    sp.add_argument("--out", default="lift.csv")
    sp.set_defaults(func=_cmd_lift)

    sp = sub.add_parser("timeshift", help="cross-correlation lag of two series files")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--ref", required=True)
    sp.add_argument("--dt", type=float, required=True)
    sp.set_defaults(func=_cmd_timeshift)

    sp = sub.add_parser("gen-taylor-green", help="emit an analytic labeled dataset")
    sp.add_argument("--nus", required=True, help="';'-separated nu values")
    sp.add_argument("--n", type=int, required=True, help="points per nu value")
    sp.add_argument("--t-min", type=float, default=0.0)
    sp.add_argument("--t-max", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_gen_taylor_green)

    sp = sub.add_parser("sample", help="emit collocation points from a plan config")
    sp.add_argument("--plan", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_sample)

    sp = sub.add_parser("check", help="run the built-in analytic self-checks")
    sp.add_argument("--suite", required=True)
    sp.set_defaults(func=_cmd_check)

    return p


def cli(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    try:
        return args.func(args)
    except CliError as err:
        print(f"{err.reason}: {err.detail}" if err.detail else err.reason, file=sys.stderr)
        return err.status
    except FileNotFoundError as err:
        print(f"file-not-found: {err.filename or err}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
