"""Seeded generators for collocation, boundary, and parameter-grid points.

All sampling is driven by numpy's PCG64 generator; the algorithm name is
recorded in run metadata so datasets reproduce bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

RNG_ALGORITHM = "pcg64"

POINT_KINDS = ("interior", "inlet", "outlet", "cylinder", "periodic_pair", "initial")


class NuOutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class DomainSpec:
    """Rectangular flow domain with an optional cylinder, nondimensional units.

    Lengths are in cylinder diameters (D = 1); ``cylinder_diameter=None``
    drops the obstacle entirely (analytic benchmark domains).
    """

    x_min: float = -2.5
    x_max: float = 7.5
    y_min: float = -2.5
    y_max: float = 2.5
    t_min: float = 0.0
    t_max: float = 60.0
    cylinder_center: tuple[float, float] = (0.0, 0.0)
    cylinder_diameter: float | None = 1.0
    nu_min: float = 0.002
    nu_max: float = 0.010

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max and self.t_min < self.t_max):
            raise ValueError("domain bounds must be ordered")
        if not (0.0 < self.nu_min < self.nu_max):
            raise ValueError("nu range must be positive and ordered")
        if self.cylinder_diameter is not None:
            if self.cylinder_diameter <= 0:
                raise ValueError("cylinder diameter must be positive")
            cx, cy = self.cylinder_center
            r = self.cylinder_diameter / 2.0
            inside = (
                self.x_min < cx - r
                and cx + r < self.x_max
                and self.y_min < cy - r
                and cy + r < self.y_max
            )
            if not inside:
                raise ValueError("cylinder must lie strictly inside the domain")

    @property
    def cylinder_radius(self) -> float:
        if self.cylinder_diameter is None:
            raise ValueError("domain has no cylinder")
        return self.cylinder_diameter / 2.0

    def in_cylinder(self, x, y) -> np.ndarray:
        if self.cylinder_diameter is None:
            return np.zeros(np.broadcast(x, y).shape, dtype=bool)
        cx, cy = self.cylinder_center
        return (np.asarray(x) - cx) ** 2 + (np.asarray(y) - cy) ** 2 <= self.cylinder_radius**2


@dataclass(frozen=True)
class SamplePoint:
    x: float
    y: float
    t: float
    nu: float
    kind: str


@dataclass(frozen=True)
class SamplingPlan:
    n_labeled: int = 500_000
    n_residual: int = 800_000
    refinement: str = "uniform"
    refinement_fraction: float = 0.5
    refinement_radius: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.n_labeled <= 0 or self.n_residual <= 0:
            raise ValueError("counts must be positive")
        if not 0.0 <= self.refinement_fraction <= 1.0:
            raise ValueError("refinement_fraction must lie in [0, 1]")
        if self.refinement not in ("uniform", "cylinder_refined"):
            raise ValueError(f"unknown refinement mode {self.refinement!r}")


class PointBatch(Sequence):
    """Array-backed sequence of SamplePoints (cheap at millions of points)."""

    __slots__ = ("x", "y", "t", "nu", "kinds")

    def __init__(self, x, y, t, nu, kinds):
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.t = np.asarray(t, dtype=np.float64)
        self.nu = np.asarray(nu, dtype=np.float64)
        if isinstance(kinds, str):
            kinds = np.full(self.x.size, kinds, dtype=object)
        self.kinds = np.asarray(kinds, dtype=object)

    def __len__(self) -> int:
        return self.x.size

    def __getitem__(self, i):
        if isinstance(i, (slice, list, np.ndarray)):
            return PointBatch(self.x[i], self.y[i], self.t[i], self.nu[i], self.kinds[i])
        return SamplePoint(self.x[i], self.y[i], self.t[i], self.nu[i], self.kinds[i])

    def __iter__(self) -> Iterator[SamplePoint]:
        for i in range(len(self)):
            yield self[i]

    @staticmethod
    def concatenate(batches: Sequence["PointBatch"]) -> "PointBatch":
        return PointBatch(
            np.concatenate([b.x for b in batches]),
            np.concatenate([b.y for b in batches]),
            np.concatenate([b.t for b in batches]),
            np.concatenate([b.nu for b in batches]),
            np.concatenate([b.kinds for b in batches]),
        )


def _uniform_rect(rng, spec: DomainSpec, n: int, exclude_disk: tuple[float, float, float] | None = None):
    """n (x, y) points uniform over the rectangle, rejecting the cylinder
    interior and optionally an extra disk (cx, cy, radius)."""
    xs = np.empty(0)
    ys = np.empty(0)
    while xs.size < n:
        m = max(n - xs.size, 64)
        m = m + m // 2
        cx = rng.uniform(spec.x_min, spec.x_max, m)
        cy = rng.uniform(spec.y_min, spec.y_max, m)
        keep = ~spec.in_cylinder(cx, cy)
        if exclude_disk is not None:
            dx, dy, dr = exclude_disk
            keep &= (cx - dx) ** 2 + (cy - dy) ** 2 > dr**2
        xs = np.concatenate((xs, cx[keep]))
        ys = np.concatenate((ys, cy[keep]))
    return xs[:n], ys[:n]


def _uniform_annulus(rng, spec: DomainSpec, n: int, r_outer: float):
    """n (x, y) points uniform over the disk of radius r_outer around the
    cylinder center, cylinder interior excluded, clipped to the rectangle."""
    cx0, cy0 = spec.cylinder_center
    r_inner = 0.0 if spec.cylinder_diameter is None else spec.cylinder_radius
    xs = np.empty(0)
    ys = np.empty(0)
    while xs.size < n:
        m = max(n - xs.size, 64)
        m = m + m // 2
        u = rng.uniform(0.0, 1.0, m)
        r = np.sqrt(u * (r_outer**2 - r_inner**2) + r_inner**2)
        th = rng.uniform(0.0, 2.0 * math.pi, m)
        cx = cx0 + r * np.cos(th)
        cy = cy0 + r * np.sin(th)
        keep = (cx >= spec.x_min) & (cx <= spec.x_max) & (cy >= spec.y_min) & (cy <= spec.y_max)
        xs = np.concatenate((xs, cx[keep]))
        ys = np.concatenate((ys, cy[keep]))
    return xs[:n], ys[:n]


def sample_interior(spec: DomainSpec, plan: SamplingPlan) -> PointBatch:
    """Residual (collocation) points over rectangle x time x nu.

    ``cylinder_refined`` draws ``refinement_fraction`` of the points inside
    the refinement disk and the remainder outside it, so the in-disk count
    is exactly the requested share.
    """
    rng = np.random.default_rng(plan.seed)
    n = plan.n_residual
    if plan.refinement == "uniform":
        xs, ys = _uniform_rect(rng, spec, n)
    else:
        n_near = int(round(plan.refinement_fraction * n))
        xn, yn = _uniform_annulus(rng, spec, n_near, plan.refinement_radius)
        cx0, cy0 = spec.cylinder_center
        xf, yf = _uniform_rect(rng, spec, n - n_near, exclude_disk=(cx0, cy0, plan.refinement_radius))
        xs = np.concatenate((xn, xf))
        ys = np.concatenate((yn, yf))
    ts = rng.uniform(spec.t_min, spec.t_max, n)
    nus = rng.uniform(spec.nu_min, spec.nu_max, n)
    return PointBatch(xs, ys, ts, nus, "interior")


def sample_boundary(spec: DomainSpec, n_per_kind: Mapping[str, int] | int, seed: int = 0) -> PointBatch:
    """Boundary and initial-condition points.

    ``n_per_kind`` maps kind -> count (an int applies to every kind).
    Periodic counts are pair counts; each pair emits two adjacent points
    sharing (x, t, nu) with y at y_min and y_max.
    """
    kinds = ("inlet", "outlet", "cylinder", "periodic_pair", "initial")
    if isinstance(n_per_kind, int):
        n_per_kind = {k: n_per_kind for k in kinds}
    for k in n_per_kind:
        if k not in kinds:
            raise ValueError(f"unknown boundary kind {k!r}")
    rng = np.random.default_rng(seed)
    batches = []
    for kind in kinds:
        n = int(n_per_kind.get(kind, 0))
        if n <= 0:
            continue
        if kind in ("inlet", "outlet"):
            x0 = spec.x_min if kind == "inlet" else spec.x_max
            batches.append(
                PointBatch(
                    np.full(n, x0),
                    rng.uniform(spec.y_min, spec.y_max, n),
                    rng.uniform(spec.t_min, spec.t_max, n),
                    rng.uniform(spec.nu_min, spec.nu_max, n),
                    kind,
                )
            )
        elif kind == "cylinder":
            r = spec.cylinder_radius
            cx0, cy0 = spec.cylinder_center
            th = rng.uniform(0.0, 2.0 * math.pi, n)
            batches.append(
                PointBatch(
                    cx0 + r * np.cos(th),
                    cy0 + r * np.sin(th),
                    rng.uniform(spec.t_min, spec.t_max, n),
                    rng.uniform(spec.nu_min, spec.nu_max, n),
                    kind,
                )
            )
        elif kind == "periodic_pair":
            xs = rng.uniform(spec.x_min, spec.x_max, n)
            ts = rng.uniform(spec.t_min, spec.t_max, n)
            nus = rng.uniform(spec.nu_min, spec.nu_max, n)
            batches.append(
                PointBatch(
                    np.repeat(xs, 2),
                    np.tile([spec.y_min, spec.y_max], n),
                    np.repeat(ts, 2),
                    np.repeat(nus, 2),
                    kind,
                )
            )
        else:  # initial
            xs, ys = _uniform_rect(rng, spec, n)
            batches.append(
                PointBatch(
                    xs,
                    ys,
                    np.full(n, spec.t_min),
                    rng.uniform(spec.nu_min, spec.nu_max, n),
                    kind,
                )
            )
    if not batches:
        return PointBatch([], [], [], [], np.empty(0, dtype=object))
    return PointBatch.concatenate(batches)


def sample_parameter_grid(
    nu_values: Sequence[float],
    points_per_value: int,
    spec: DomainSpec,
    plan: SamplingPlan | None = None,
    seed: int = 0,
) -> PointBatch:
    """Interior points with nu restricted to the given grid, co-locating
    residual points with labeled parameter slices."""
    if points_per_value <= 0:
        raise ValueError("points_per_value must be positive")
    for nu in nu_values:
        if not (spec.nu_min - 1e-12 <= nu <= spec.nu_max + 1e-12):
            raise NuOutOfRange(nu)
    base = plan or SamplingPlan(n_labeled=1, n_residual=points_per_value, seed=seed)
    batches = []
    for i, nu in enumerate(nu_values):
        sub = SamplingPlan(
            n_labeled=1,
            n_residual=points_per_value,
            refinement=base.refinement,
            refinement_fraction=base.refinement_fraction,
            refinement_radius=base.refinement_radius,
            seed=int(np.random.SeedSequence([base.seed, i]).generate_state(1)[0]),
        )
        b = sample_interior(spec, sub)
        batches.append(PointBatch(b.x, b.y, b.t, np.full(len(b), float(nu)), b.kinds))
    return PointBatch.concatenate(batches)
