import math

import numpy as np
import pytest

from pinnflow.analytic import taylor_green
from pinnflow.data import (
    SNAPSHOT_HEADER,
    LabeledSet,
    MalformedRow,
    MissingHeader,
    NonFiniteValue,
    OrphanNu,
    assemble_split,
    load_snapshots,
    taylor_green_dataset,
    write_snapshots,
)
from pinnflow.physics import residual_values


def test_load_two_rows(tmp_path):
    f = tmp_path / "s.csv"
    f.write_text(SNAPSHOT_HEADER + "\n1,2,3,100,0.5,0.1,0.2\n4,5,6,200,0.6,0.2,0.3\n")
    pts = load_snapshots(f)
    assert len(pts) == 2
    assert pts[0].x == 1.0
    assert pts[1].nu == pytest.approx(1 / 200)


def test_missing_header(tmp_path):
    f = tmp_path / "s.csv"
    f.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(MissingHeader):
        load_snapshots(f)


def test_nan_named_line(tmp_path):
    f = tmp_path / "s.csv"
    f.write_text(SNAPSHOT_HEADER + "\n1,2,3,100,0.5,0.1,0.2\n1,2,3,100,NaN,0.1,0.2\n")
    with pytest.raises(NonFiniteValue) as err:
        load_snapshots(f)
    assert err.value.line_number == 3
    assert err.value.column == "u"


def test_malformed_row(tmp_path):
    f = tmp_path / "s.csv"
    f.write_text(SNAPSHOT_HEADER + "\n1,2,3\n")
    with pytest.raises(MalformedRow):
        load_snapshots(f)


def test_round_trip_10k_points(tmp_path):
    rng = np.random.default_rng(0)
    n = 10_000
    pts = LabeledSet(
        rng.uniform(-2.5, 7.5, n),
        rng.uniform(-2.5, 2.5, n),
        rng.uniform(0, 60, n),
        rng.uniform(0.002, 0.01, n),
        rng.standard_normal(n),
        rng.standard_normal(n),
        rng.standard_normal(n),
    )
    f = tmp_path / "rt.csv"
    write_snapshots(f, pts)
    back = load_snapshots(f)
    for a, b in zip(pts._columns(), back._columns()):
        assert np.all(np.abs(a - b) <= 1e-15 * np.maximum(np.abs(a), 1.0))


def test_taylor_green_point_values():
    u, v, p = taylor_green(0.0, math.pi / 2, 0.0, 0.01)
    assert (u, v, p) == pytest.approx((-1.0, 0.0, 0.0), abs=1e-15)
    u, v, p = taylor_green(0.0, 0.0, 0.0, 0.01)
    assert (u, v, p) == pytest.approx((0.0, 0.0, -0.5), abs=1e-15)


def test_generated_labels_satisfy_residuals():
    pts = taylor_green_dataset([0.004, 0.008], 200, seed=2)
    f, g, h = residual_values(taylor_green, pts.x, pts.y, pts.t, pts.nu)
    assert max(np.max(np.abs(f)), np.max(np.abs(g)), np.max(np.abs(h))) < 1e-9


def test_generated_labels_match_formula():
    pts = taylor_green_dataset([0.005], 100, seed=3)
    u, v, p = taylor_green(pts.x, pts.y, pts.t, pts.nu)
    assert np.allclose(pts.u, u, atol=1e-15)
    assert np.allclose(pts.v, v, atol=1e-15)
    assert np.allclose(pts.p, p, atol=1e-15)


def test_split_partition_and_conservation():
    train = (0.002, 0.0025, 0.003, 0.005, 0.010)
    test = (0.0015, 0.007, 0.004, 0.00225, 0.015)
    n = 40
    pts = LabeledSet(
        np.zeros(n * 10),
        np.zeros(n * 10),
        np.zeros(n * 10),
        np.repeat(train + test, n),
        np.zeros(n * 10),
        np.zeros(n * 10),
        np.zeros(n * 10),
    )
    split = assemble_split(pts, train, test)
    assert len(split.train_points) + len(split.test_points) == len(pts)
    assert len(split.train_points) == 5 * n
    assert set(np.round(split.test_points.nu, 15)) == set(test)


def test_empty_test_set():
    pts = taylor_green_dataset([0.005], 10, seed=1)
    split = assemble_split(pts, [0.005], [])
    assert len(split.train_points) == 10
    assert len(split.test_points) == 0


def test_orphan_nu():
    pts = LabeledSet([0.0], [0.0], [0.0], [0.012], [0.0], [0.0], [0.0])
    with pytest.raises(OrphanNu):
        assemble_split(pts, [0.002], [0.005])
