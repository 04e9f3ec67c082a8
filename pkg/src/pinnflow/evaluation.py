"""Evaluation suite: per-nu error scorecards, vorticity field export, lift
time series, and the time-shift diagnostic."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import physics
from .analytic import taylor_green_vorticity
from .data import DatasetSplit
from .network import NetworkField
from .sampling import DomainSpec, PointBatch
from .training import Checkpoint

METRIC_HEADER = "nu,split,mse_u,mse_v,mse_p,mse_residual,mse_vorticity"


class ConfigMismatch(ValueError):
    pass


class DegenerateSeries(ValueError):
    pass


@dataclass(frozen=True)
class MetricRow:
    nu: float
    split: str
    mse_u: float
    mse_v: float
    mse_p: float
    mse_residual: float
    mse_vorticity: float


@dataclass(frozen=True)
class MetricReport:
    rows: tuple[MetricRow, ...]
    vorticity_reference: str = "analytic"
    seed: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(METRIC_HEADER + "\n")
            for r in self.rows:
                fh.write(
                    "%.17g,%s,%.17g,%.17g,%.17g,%.17g,%.17g\n"
                    % (r.nu, r.split, r.mse_u, r.mse_v, r.mse_p, r.mse_residual, r.mse_vorticity)
                )


def _as_field(model, domain: DomainSpec | None):
    """Accept a Checkpoint or a differentiable field evaluator."""
    if isinstance(model, Checkpoint):
        return NetworkField(model.params, model.domain), model.domain
    return model, domain


def evaluate(
    model,
    dataset: DatasetSplit,
    residual_points: PointBatch,
    domain: DomainSpec | None = None,
    vorticity_reference: Callable | None = taylor_green_vorticity,
    seed: int = 0,
) -> MetricReport:
    """Per-(nu, split) MSEs of fields, PDE residuals, and vorticity.

    ``model`` is a Checkpoint or any differentiable field.  Residual MSE is
    computed at the residual points' (x, y, t) with nu pinned to the row's
    value.  Vorticity is compared against ``vorticity_reference``
    (analytic oracle by default); pass None to skip it (reported as NaN).
    """
    field, domain = _as_field(model, domain)
    if isinstance(model, Checkpoint):
        for nus in (dataset.train_nus, dataset.test_nus):
            for nu in nus:
                if not (domain.nu_min - 1e-9 <= nu <= domain.nu_max + 1e-9):
                    raise ConfigMismatch(f"nu={nu} outside checkpoint normalization range")
    rows = []
    for split, nus, pts in (
        ("train", dataset.train_nus, dataset.train_points),
        ("test", dataset.test_nus, dataset.test_points),
    ):
        for nu in nus:
            mask = np.abs(pts.nu - nu) <= 1e-12
            sub = pts[mask]
            if len(sub) == 0:
                continue
            u, v, p = physics.field_values(field, sub.x, sub.y, sub.t, sub.nu)
            nu_res = np.full(len(residual_points), nu)
            f, g, h = physics.residual_values(
                field, residual_points.x, residual_points.y, residual_points.t, nu_res
            )
            if vorticity_reference is None:
                mse_w = float("nan")
            else:
                w_pred = physics.vorticity_values(field, sub.x, sub.y, sub.t, sub.nu)
                w_ref = vorticity_reference(sub.x, sub.y, sub.t, sub.nu)
                mse_w = float(np.mean((w_pred - w_ref) ** 2))
            rows.append(
                MetricRow(
                    nu=float(nu),
                    split=split,
                    mse_u=float(np.mean((u - sub.u) ** 2)),
                    mse_v=float(np.mean((v - sub.v) ** 2)),
                    mse_p=float(np.mean((p - sub.p) ** 2)),
                    mse_residual=float(np.mean(f**2 + g**2 + h**2)),
                    mse_vorticity=mse_w,
                )
            )
    reference = "none" if vorticity_reference is None else getattr(vorticity_reference, "__name__", "custom")
    return MetricReport(tuple(rows), vorticity_reference=reference, seed=seed)


# ---------------------------------------------------------------------------
# field exports
# ---------------------------------------------------------------------------

GRID_SENTINEL = -1e30


def vorticity_field(model, nu: float, t: float, nx: int, ny: int, domain: DomainSpec | None = None, sentinel: float = GRID_SENTINEL):
    """Vorticity on an nx-by-ny grid over the domain rectangle; nodes inside
    the cylinder carry the sentinel value.  Returns (grid, xs, ys)."""
    field, domain = _as_field(model, domain)
    xs = np.linspace(domain.x_min, domain.x_max, nx)
    ys = np.linspace(domain.y_min, domain.y_max, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    flat_x, flat_y = gx.ravel(), gy.ravel()
    omega = physics.vorticity_values(
        field, flat_x, flat_y, np.full(flat_x.size, float(t)), np.full(flat_x.size, float(nu))
    ).reshape(nx, ny)
    if domain.cylinder_diameter is not None:
        cx, cy = domain.cylinder_center
        inside = (gx - cx) ** 2 + (gy - cy) ** 2 < (domain.cylinder_diameter / 2.0) ** 2
        omega = np.where(inside, sentinel, omega)
    return omega, xs, ys


def write_grid(path, grid: np.ndarray, domain: DomainSpec, sentinel: float = GRID_SENTINEL) -> None:
    """Gridded text format: header ``nx ny x_min x_max y_min y_max sentinel``
    then row-major values."""
    nx, ny = grid.shape
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(
            "%d %d %.17g %.17g %.17g %.17g %.17g\n"
            % (nx, ny, domain.x_min, domain.x_max, domain.y_min, domain.y_max, sentinel)
        )
        for row in grid:
            fh.write(" ".join("%.17g" % v for v in row) + "\n")


def lift_series(model, nu: float, t_range: tuple[float, float], n_steps: int, panels: Sequence[physics.SurfacePoint], domain: DomainSpec | None = None):
    """Lift force at uniform times over ``t_range`` (inclusive endpoints)."""
    if n_steps < 2:
        raise ValueError("n_steps must be at least 2")
    field, _ = _as_field(model, domain)
    times = np.linspace(t_range[0], t_range[1], n_steps)
    return [(float(t), physics.lift_force(field, float(t), float(nu), panels)) for t in times]


# ---------------------------------------------------------------------------
# time-shift diagnostic
# ---------------------------------------------------------------------------


def time_shift(pred_series, ref_series, dt: float) -> float:
    """Lag maximizing the discrete cross-correlation between prediction and
    reference; positive lag means the prediction trails the reference.
    Ties break toward the smaller absolute lag."""
    pred = np.asarray(pred_series, dtype=np.float64)
    ref = np.asarray(ref_series, dtype=np.float64)
    if pred.size != ref.size or pred.size < 16:
        raise ValueError("series must have equal length >= 16")
    if np.ptp(pred) == 0.0 or np.ptp(ref) == 0.0:
        raise DegenerateSeries("constant series have no identifiable lag")
    pred = pred - pred.mean()
    ref = ref - ref.mean()
    n = pred.size
    max_lag = n // 2
    # full[n - 1 + k] = sum_i pred[i + k] * ref[i]
    full = np.correlate(pred, ref, mode="full")
    best_k, best_c = 0, -np.inf
    for k in sorted(range(-max_lag, max_lag + 1), key=lambda k: (abs(k), k)):
        c = float(full[n - 1 + k])
        if c > best_c:
            best_c, best_k = c, k
    return best_k * dt
