"""Labeled snapshot ingestion, analytic dataset generation, and train/test
splitting by parameter value.

Snapshot CSV contract: UTF-8, header exactly ``x,y,t,re,u,v,p``, one point
per row, plain decimal floats, LF line endings, no quoting.  The ``re``
column stores the Reynolds number; nu = 1/Re is used internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .analytic import taylor_green

SNAPSHOT_HEADER = "x,y,t,re,u,v,p"

_NU_MATCH_TOL = 1e-12


class MissingHeader(ValueError):
    pass


class MalformedRow(ValueError):
    def __init__(self, line_number: int, detail: str = ""):
        self.line_number = line_number
        super().__init__(f"malformed row at line {line_number}" + (f": {detail}" if detail else ""))


class NonFiniteValue(ValueError):
    def __init__(self, line_number: int, column: str):
        self.line_number = line_number
        self.column = column
        super().__init__(f"non-finite value in column {column!r} at line {line_number}")


class OrphanNu(ValueError):
    def __init__(self, value: float):
        self.value = value
        super().__init__(f"nu={value} belongs to neither split")


@dataclass(frozen=True)
class LabeledPoint:
    x: float
    y: float
    t: float
    nu: float
    u: float
    v: float
    p: float


class LabeledSet(Sequence):
    """Array-backed sequence of labeled points."""

    __slots__ = ("x", "y", "t", "nu", "u", "v", "p")

    def __init__(self, x, y, t, nu, u, v, p):
        arrays = [np.asarray(a, dtype=np.float64) for a in (x, y, t, nu, u, v, p)]
        sizes = {a.size for a in arrays}
        if len(sizes) > 1:
            raise ValueError("column lengths differ")
        self.x, self.y, self.t, self.nu, self.u, self.v, self.p = arrays

    def __len__(self) -> int:
        return self.x.size

    def __getitem__(self, i):
        if isinstance(i, (slice, np.ndarray, list)):
            return LabeledSet(*(a[i] for a in self._columns()))
        return LabeledPoint(*(float(a[i]) for a in self._columns()))

    def __iter__(self) -> Iterator[LabeledPoint]:
        for i in range(len(self)):
            yield self[i]

    def _columns(self):
        return (self.x, self.y, self.t, self.nu, self.u, self.v, self.p)

    @staticmethod
    def empty() -> "LabeledSet":
        return LabeledSet(*([[]] * 7))

    @staticmethod
    def concatenate(sets: Sequence["LabeledSet"]) -> "LabeledSet":
        return LabeledSet(*(np.concatenate(cols) for cols in zip(*(s._columns() for s in sets))))


@dataclass(frozen=True)
class DatasetSplit:
    train_nus: tuple[float, ...]
    test_nus: tuple[float, ...]
    train_points: LabeledSet
    test_points: LabeledSet


_COLUMNS = ("x", "y", "t", "re", "u", "v", "p")


def load_snapshots(path) -> LabeledSet:
    """Read a snapshot CSV, rejecting malformed rows and non-finite values.
    Row order is preserved."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\n")
        if header != SNAPSHOT_HEADER:
            raise MissingHeader(f"expected header {SNAPSHOT_HEADER!r}, got {header!r}")
        cols = [[] for _ in _COLUMNS]
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != 7:
                raise MalformedRow(lineno, f"expected 7 fields, got {len(fields)}")
            for j, raw in enumerate(fields):
                try:
                    val = float(raw)
                except ValueError as err:
                    raise MalformedRow(lineno, str(err)) from err
                if not math.isfinite(val):
                    raise NonFiniteValue(lineno, _COLUMNS[j])
                cols[j].append(val)
    re = np.asarray(cols[3])
    if np.any(re <= 0):
        bad = int(np.argmax(re <= 0))
        raise MalformedRow(bad + 2, "Reynolds number must be positive")
    return LabeledSet(cols[0], cols[1], cols[2], 1.0 / re, cols[4], cols[5], cols[6])


def write_snapshots(path, points: LabeledSet) -> None:
    """Write the snapshot CSV with 17-significant-digit decimals (exact
    float64 round trips)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(SNAPSHOT_HEADER + "\n")
        re = 1.0 / points.nu
        for i in range(len(points)):
            row = (points.x[i], points.y[i], points.t[i], re[i], points.u[i], points.v[i], points.p[i])
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def taylor_green_dataset(
    nu_values: Sequence[float],
    n_per_nu: int,
    box: tuple[float, float, float, float] = (0.0, 2.0 * math.pi, 0.0, 2.0 * math.pi),
    t_range: tuple[float, float] = (0.0, 1.0),
    seed: int = 0,
) -> LabeledSet:
    """Analytic labels at seeded-uniform points, as a CFD stand-in."""
    x0, x1, y0, y1 = box
    if not (0.0 <= x0 < x1 <= 2.0 * math.pi and 0.0 <= y0 < y1 <= 2.0 * math.pi):
        raise ValueError("box must lie within [0, 2*pi]^2")
    rng = np.random.default_rng(seed)
    sets = []
    for nu in nu_values:
        x = rng.uniform(x0, x1, n_per_nu)
        y = rng.uniform(y0, y1, n_per_nu)
        t = rng.uniform(t_range[0], t_range[1], n_per_nu)
        u, v, p = taylor_green(x, y, t, float(nu))
        sets.append(LabeledSet(x, y, t, np.full(n_per_nu, float(nu)), u, v, p))
    return LabeledSet.concatenate(sets)


def assemble_split(points: LabeledSet, train_nus: Sequence[float], test_nus: Sequence[float]) -> DatasetSplit:
    """Partition labeled points by nu membership; every point must match a
    value of exactly one split within 1e-12."""
    train_nus = tuple(float(v) for v in train_nus)
    test_nus = tuple(float(v) for v in test_nus)
    if set(train_nus) & set(test_nus):
        raise ValueError("train and test nu sets overlap")

    def member(nu_col, values):
        if not values:
            return np.zeros(nu_col.size, dtype=bool)
        return np.min(np.abs(nu_col[:, None] - np.asarray(values)[None, :]), axis=1) <= _NU_MATCH_TOL

    in_train = member(points.nu, train_nus)
    in_test = member(points.nu, test_nus)
    orphan = ~(in_train | in_test)
    if np.any(orphan):
        raise OrphanNu(float(points.nu[np.argmax(orphan)]))
    return DatasetSplit(train_nus, test_nus, points[in_train], points[in_test])
