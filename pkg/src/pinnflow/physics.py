"""Navier-Stokes residual operators, vorticity, boundary residuals, and the
cylinder lift-force quadrature.

All operators act on a "field": any callable (x, y, t, nu) -> (u, v, p)
over DiffValues, e.g. an analytic oracle or a trained network evaluator.
The viscosity coefficient is nu = 1/Re throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .sampling import DomainSpec, SamplePoint


class DerivativeUnavailable(Exception):
    pass


class PointOffBoundary(ValueError):
    pass


class TooFewPanels(ValueError):
    pass


@dataclass(frozen=True)
class ResidualTriple:
    f: float  # continuity
    g: float  # x-momentum
    h: float  # y-momentum


@dataclass(frozen=True)
class BoundarySpec:
    """Inlet u=1, v=0; cylinder no-slip; outlet p=0; periodic top/bottom."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    cylinder_center: tuple[float, float]
    cylinder_diameter: float | None

    @classmethod
    def from_domain(cls, domain: DomainSpec) -> "BoundarySpec":
        return cls(
            domain.x_min,
            domain.x_max,
            domain.y_min,
            domain.y_max,
            domain.cylinder_center,
            domain.cylinder_diameter,
        )


@dataclass(frozen=True)
class SurfacePoint:
    theta: float
    x: float
    y: float
    n_x: float
    n_y: float
    ds: float


def _col(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64).reshape(-1, 1)


def _stacked_seeded_eval(field, rec, x, y, t, nu, n_dirs):
    """One field evaluation on ``n_dirs`` stacked copies of the points.

    Block ``k`` of the stack carries a unit tangent on input coordinate
    ``k`` (coordinate order x, y, t), so a single pass yields directional
    derivatives along the first ``n_dirs`` coordinates; block extraction is
    done on-tape with ``rec.rows``.
    """
    cols = (x, y, t, nu)
    n = cols[0].shape[0]
    leaves = []
    for i, arr in enumerate(cols):
        value = np.concatenate([arr] * n_dirs, axis=0)
        if i < n_dirs:
            seed = np.zeros((n_dirs * n, 1))
            seed[i * n : (i + 1) * n] = 1.0
            leaves.append(rec.variable(value, tangent=seed))
        else:
            leaves.append(rec.variable(value))
    return field(*leaves), n


def residual_nodes(field, rec: ad.ComputationRecord, x, y, t, nu):
    """On-tape residuals (f, g, h) at column arrays of points.

    A single tangent-seeded field evaluation on the x/y/t-stacked points
    supplies every derivative; the returned DiffValues stay differentiable
    with respect to any parameter leaves the field registered on ``rec``.
    """
    x, y, t, nu = _col(x), _col(y), _col(t), _col(nu)
    try:
        (u, v, p), n = _stacked_seeded_eval(field, rec, x, y, t, nu, 3)
        du, d2u = rec.d1(u), rec.d2(u)
        dv, d2v = rec.d1(v), rec.d2(v)
        dp = rec.d1(p)

        def blk(node, i):
            return rec.rows(node, i * n, (i + 1) * n)

        u0 = blk(rec.detach(u), 0)
        v0 = blk(rec.detach(v), 0)
        u_x, u_y, u_t = blk(du, 0), blk(du, 1), blk(du, 2)
        v_x, v_y, v_t = blk(dv, 0), blk(dv, 1), blk(dv, 2)
        p_x, p_y = blk(dp, 0), blk(dp, 1)
        u_xx, u_yy = blk(d2u, 0), blk(d2u, 1)
        v_xx, v_yy = blk(d2v, 0), blk(d2v, 1)
    except ad.AutodiffError as err:
        raise DerivativeUnavailable(str(err)) from err

    nu_c = rec.constant(nu)
    f = u_x + v_y
    g = u_t + u0 * u_x + v0 * u_y + p_x - nu_c * (u_xx + u_yy)
    h = v_t + u0 * v_x + v0 * v_y + p_y - nu_c * (v_xx + v_yy)
    return f, g, h


def residual_values(field, x, y, t, nu):
    """Numeric (f, g, h) arrays at batches of points."""
    rec = ad.ComputationRecord()
    f, g, h = residual_nodes(field, rec, x, y, t, nu)
    return (
        np.asarray(f._node.value).ravel(),
        np.asarray(g._node.value).ravel(),
        np.asarray(h._node.value).ravel(),
    )


def residuals(field, point) -> ResidualTriple:
    """Residual triple of Eqs. f = u_x + v_y, g and h (momentum) at one point."""
    f, g, h = residual_values(field, *(np.atleast_1d(c) for c in point))
    return ResidualTriple(float(f[0]), float(g[0]), float(h[0]))


def vorticity_values(field, x, y, t, nu) -> np.ndarray:
    """omega = v_x - u_y at batches of points."""
    x, y, t, nu = _col(x), _col(y), _col(t), _col(nu)
    rec = ad.ComputationRecord()
    try:
        (u, v, _), n = _stacked_seeded_eval(field, rec, x, y, t, nu, 2)
        omega = rec.rows(rec.d1(v), 0, n) - rec.rows(rec.d1(u), n, 2 * n)
    except ad.AutodiffError as err:
        raise DerivativeUnavailable(str(err)) from err
    return np.asarray(omega._node.value).ravel()


def vorticity(field, point) -> float:
    return float(vorticity_values(field, *(np.atleast_1d(c) for c in point))[0])


def field_values(field, x, y, t, nu):
    """Plain (u, v, p) arrays of a differentiable field at batches of points."""
    rec = ad.ComputationRecord()
    leaves = [rec.variable(_col(c)) for c in (x, y, t, nu)]
    u, v, p = field(*leaves)
    return (
        np.asarray(u._node.value).ravel(),
        np.asarray(v._node.value).ravel(),
        np.asarray(p._node.value).ravel(),
    )


# ---------------------------------------------------------------------------
# boundary conditions
# ---------------------------------------------------------------------------

_BOUNDARY_TOL = 1e-9


def boundary_residuals(field, spec: BoundarySpec, point: SamplePoint) -> np.ndarray:
    """Constraint violation vector for one boundary sample.

    inlet -> (u - 1, v); cylinder -> (u, v); outlet -> (p,);
    periodic_pair -> component-wise mismatch between the y_min and y_max
    points sharing this sample's (x, t, nu).
    """
    kind = point.kind
    if kind == "inlet":
        if abs(point.x - spec.x_min) > _BOUNDARY_TOL:
            raise PointOffBoundary(f"inlet point at x={point.x}")
        u, v, _ = field_values(field, [point.x], [point.y], [point.t], [point.nu])
        return np.array([u[0] - 1.0, v[0]])
    if kind == "outlet":
        if abs(point.x - spec.x_max) > _BOUNDARY_TOL:
            raise PointOffBoundary(f"outlet point at x={point.x}")
        _, _, p = field_values(field, [point.x], [point.y], [point.t], [point.nu])
        return np.array([p[0]])
    if kind == "cylinder":
        if spec.cylinder_diameter is None:
            raise PointOffBoundary("domain has no cylinder")
        cx, cy = spec.cylinder_center
        r = math.hypot(point.x - cx, point.y - cy)
        if abs(r - spec.cylinder_diameter / 2.0) > _BOUNDARY_TOL:
            raise PointOffBoundary(f"cylinder point at radius {r}")
        u, v, _ = field_values(field, [point.x], [point.y], [point.t], [point.nu])
        return np.array([u[0], v[0]])
    if kind == "periodic_pair":
        near_min = abs(point.y - spec.y_min) <= _BOUNDARY_TOL
        near_max = abs(point.y - spec.y_max) <= _BOUNDARY_TOL
        if not (near_min or near_max):
            raise PointOffBoundary(f"periodic point at y={point.y}")
        u, v, p = field_values(
            field,
            [point.x, point.x],
            [spec.y_min, spec.y_max],
            [point.t, point.t],
            [point.nu, point.nu],
        )
        return np.array([u[0] - u[1], v[0] - v[1], p[0] - p[1]])
    raise ValueError(f"not a boundary kind: {kind!r}")


# ---------------------------------------------------------------------------
# lift force (trapezoidal quadrature on the cylinder surface)
# ---------------------------------------------------------------------------


def cylinder_panels(n: int, diameter: float) -> list[SurfacePoint]:
    """n uniformly spaced surface panels; on the uniform closed circle the
    trapezoid weights collapse to ds = 2 pi R / n."""
    if n < 4:
        raise TooFewPanels(n)
    r = diameter / 2.0
    ds = 2.0 * math.pi * r / n
    panels = []
    for k in range(n):
        th = 2.0 * math.pi * k / n
        c, s = math.cos(th), math.sin(th)
        panels.append(SurfacePoint(theta=th, x=r * c, y=r * s, n_x=c, n_y=s, ds=ds))
    return panels


DEFAULT_PANEL_COUNT = 360


def lift_force(field, t: float, nu: float, panels: Sequence[SurfacePoint]) -> float:
    """Closed-curve surface integral of
    [-p n_y + 2 nu v_y n_y + nu (u_y + v_x) n_x] ds over the panels."""
    xs = np.array([pl.x for pl in panels])
    ys = np.array([pl.y for pl in panels])
    ny = np.array([pl.n_y for pl in panels])
    nx = np.array([pl.n_x for pl in panels])
    ds = np.array([pl.ds for pl in panels])
    ts = np.full_like(xs, float(t))
    nus = np.full_like(xs, float(nu))

    xc, yc, tc, nuc = _col(xs), _col(ys), _col(ts), _col(nus)
    rec = ad.ComputationRecord()
    try:
        (u, v, p), n = _stacked_seeded_eval(field, rec, xc, yc, tc, nuc, 2)
        du, dv = rec.d1(u), rec.d1(v)

        def vals(node):
            return np.asarray(node._node.value).ravel()

        p0 = vals(p)[:n]
        v_x = vals(rec.rows(dv, 0, n))
        u_y = vals(rec.rows(du, n, 2 * n))
        v_y = vals(rec.rows(dv, n, 2 * n))
    except ad.AutodiffError as err:
        raise DerivativeUnavailable(str(err)) from err

    integrand = -p0 * ny + 2.0 * nu * v_y * ny + nu * (u_y + v_x) * nx
    return float(np.sum(integrand * ds))
