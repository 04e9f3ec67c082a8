"""End-to-end acceptance suite.

Each test prints a single pass/fail line; the desk-scale training runs
(criteria 4-6) share one module-scoped fixture.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from pinnflow import autodiff as ad
from pinnflow.analytic import taylor_green
from pinnflow.data import LabeledSet, load_snapshots, taylor_green_dataset, write_snapshots
from pinnflow.evaluation import time_shift
from pinnflow.network import NetworkConfig, NetworkField, forward_batch, init_params
from pinnflow.physics import cylinder_panels, lift_force, residual_values
from pinnflow.sampling import DomainSpec, SamplingPlan, sample_interior
from pinnflow.training import (
    LossWeights,
    TrainRunConfig,
    load_checkpoint,
    save_checkpoint,
    train,
)

# ---------------------------------------------------------------------------
# desk-scale training setup (criteria 4-6); the Fourier bandwidth, epoch
# budget, and batch size were calibrated with pilot runs, everything else is
# fixed by the contract.  fourier_sigma = 0.5 matters: at sigma = 1 the fit
# is accurate on the three labeled viscosity slices but wiggles between them
# (the residual term alone cannot pin the interpolation), plateauing around
# 3e-3 test MSE; halving the feature bandwidth removes the wiggle.
# ---------------------------------------------------------------------------

TRAIN_BOX = DomainSpec(
    x_min=0.0, x_max=2 * math.pi, y_min=0.0, y_max=2 * math.pi,
    t_min=0.0, t_max=1.0, cylinder_diameter=None, nu_min=0.005, nu_max=0.02,
)
TRAIN_NET = NetworkConfig(fourier_bins=16, hidden_layers=3, hidden_width=32, fourier_sigma=0.5)
TRAIN_NUS = (0.005, 0.010, 0.020)
TEST_NU = 0.0075
EPOCHS = 750
BATCH_SIZE = 512
WEIGHTS = LossWeights(mode="pinn")


def _run_config(mode: str) -> TrainRunConfig:
    weights = WEIGHTS if mode == "pinn" else LossWeights(
        w_data=WEIGHTS.w_data, w_pde=WEIGHTS.w_pde, w_bc=WEIGHTS.w_bc, mode="nn"
    )
    return TrainRunConfig(
        network=TRAIN_NET,
        domain=TRAIN_BOX,
        sampling=SamplingPlan(n_labeled=5_000, n_residual=10_000, seed=0),
        weights=weights,
        train_nus=TRAIN_NUS,
        test_nus=(),
        epochs=EPOCHS,
        seed=0,
        lr=1e-3,
        batch_size=BATCH_SIZE,
    )


@pytest.fixture(scope="module")
def trained_models():
    """(pinn checkpoint, pinn rerun checkpoint, nn checkpoint)."""
    pinn, _ = train(_run_config("pinn"))
    pinn_again, _ = train(_run_config("pinn"))
    nn, _ = train(_run_config("nn"))
    return pinn, pinn_again, nn


def _report(num: int, name: str, ok: bool):
    print(f"[criterion {num}] {name}: {'PASS' if ok else 'FAIL'}")
    assert ok


# ---------------------------------------------------------------------------
# 1. derivative oracle suite
# ---------------------------------------------------------------------------


def test_criterion_1_derivative_oracle_suite():
    start = time.time()
    domain = DomainSpec()
    rng = np.random.default_rng(100)
    cfg = NetworkConfig(fourier_bins=6, hidden_layers=2, hidden_width=12)
    ok = True
    for trial in range(100):
        if trial % 10 == 0:
            params = init_params(cfg, int(rng.integers(0, 2**31)))
            field = NetworkField(params, domain)
        point = (
            rng.uniform(domain.x_min, domain.x_max),
            rng.uniform(domain.y_min, domain.y_max),
            rng.uniform(domain.t_min, domain.t_max),
            rng.uniform(domain.nu_min, domain.nu_max),
        )
        which = int(rng.integers(0, 3))
        direction, idx = [("x", 0), ("y", 1), ("t", 2)][int(rng.integers(0, 3))]

        def scalar(coords):
            return forward_batch(*(np.atleast_1d(c) for c in coords), params, domain)[0, which]

        _, d1, d2 = ad.directional_derivatives(
            lambda x, y, t, nu: field(x, y, t, nu)[which], point, direction
        )
        h1, h2 = 1e-5, 1e-3
        hi, lo = list(point), list(point)
        hi[idx] += h1
        lo[idx] -= h1
        fd1 = (scalar(hi) - scalar(lo)) / (2 * h1)
        hi2, lo2 = list(point), list(point)
        hi2[idx] += h2
        lo2[idx] -= h2
        fd2 = (scalar(hi2) - 2 * scalar(point) + scalar(lo2)) / h2**2
        ok = ok and abs(d1 - fd1) <= 1e-6 * max(abs(fd1), 1e-6)
        ok = ok and abs(d2 - fd2) <= 1e-5 * max(abs(fd2), 1e-4)
    elapsed = time.time() - start
    _report(1, f"derivative oracle suite ({elapsed:.1f}s)", ok and elapsed < 10.0)


# ---------------------------------------------------------------------------
# 2. residual nullity
# ---------------------------------------------------------------------------


def test_criterion_2_residual_nullity():
    start = time.time()
    rng = np.random.default_rng(200)
    n = 1000
    x = rng.uniform(0, 2 * math.pi, n)
    y = rng.uniform(0, 2 * math.pi, n)
    t = rng.uniform(0, 1, n)
    nu = rng.uniform(0.002, 0.010, n)
    f, g, h = residual_values(taylor_green, x, y, t, nu)
    worst = max(np.max(np.abs(f)), np.max(np.abs(g)), np.max(np.abs(h)))
    elapsed = time.time() - start
    _report(2, f"residual nullity (worst {worst:.2e})", worst < 1e-9 and elapsed < 5.0)


# ---------------------------------------------------------------------------
# 3. lift quadrature
# ---------------------------------------------------------------------------


def test_criterion_3_lift_quadrature():
    def p_y(x, y, t, nu):
        z = 0.0 * x
        return z, z, y

    fl = lift_force(p_y, 0.0, 0.01, cylinder_panels(1024, 1.0))
    exact = -math.pi * 0.25
    value_ok = abs(fl - exact) < 1e-6

    decay_ok = True
    n = 16
    prev = abs(lift_force(p_y, 0.0, 0.01, cylinder_panels(n, 1.0)) - exact)
    while n < 256:
        n *= 2
        cur = abs(lift_force(p_y, 0.0, 0.01, cylinder_panels(n, 1.0)) - exact)
        # at least quadratic decay; the 1e-12 floor absorbs the exactness of
        # the uniform trapezoid rule on this integrand (error ~ roundoff)
        decay_ok = decay_ok and cur <= prev / 4.0 + 1e-12
        prev = cur
    _report(3, f"lift quadrature (err {abs(fl - exact):.2e})", value_ok and decay_ok)


# ---------------------------------------------------------------------------
# 4-6. desk-scale training
# ---------------------------------------------------------------------------


def test_criterion_4_parametric_learning(trained_models):
    pinn, _, _ = trained_models
    test = taylor_green_dataset([TEST_NU], 4000, t_range=(0.0, 1.0), seed=999)
    pred = forward_batch(test.x, test.y, test.t, test.nu, pinn.params, TRAIN_BOX)
    mse_u = float(np.mean((pred[:, 0] - test.u) ** 2))
    mse_v = float(np.mean((pred[:, 1] - test.v) ** 2))
    vel_mse = 0.5 * (mse_u + mse_v)
    _report(4, f"parametric learning (test velocity MSE {vel_mse:.2e})", vel_mse < 1e-3)


def test_criterion_5_pinn_vs_nn_residual_ordering(trained_models):
    pinn, _, nn = trained_models
    held_out = sample_interior(TRAIN_BOX, SamplingPlan(n_labeled=1, n_residual=2000, seed=7777))

    def residual_mse(ck):
        field = NetworkField(ck.params, ck.domain)
        f, g, h = residual_values(field, held_out.x, held_out.y, held_out.t, held_out.nu)
        return float(np.mean(f**2 + g**2 + h**2))

    pinn_mse = residual_mse(pinn)
    nn_mse = residual_mse(nn)
    _report(
        5,
        f"pinn-vs-nn residual ordering (pinn {pinn_mse:.2e}, nn {nn_mse:.2e})",
        pinn_mse * 10.0 <= nn_mse,
    )


def test_criterion_6_training_determinism(trained_models, tmp_path):
    pinn, pinn_again, _ = trained_models
    p1 = tmp_path / "a.pnns"
    p2 = tmp_path / "b.pnns"
    save_checkpoint(pinn, p1)
    save_checkpoint(pinn_again, p2)
    _report(6, "training determinism", p1.read_bytes() == p2.read_bytes())


# ---------------------------------------------------------------------------
# 7. time-shift diagnostic
# ---------------------------------------------------------------------------


def test_criterion_7_time_shift():
    dt = 0.01
    t = np.arange(0, 8 * math.pi, dt)
    ok = True
    for injected in (0.5, -0.5, 0.25, 0.0):
        lag = time_shift(np.sin(t - injected), np.sin(t), dt)
        ok = ok and abs(lag - injected) <= dt * (1 + 1e-9)
    _report(7, "time-shift diagnostic", ok)


# ---------------------------------------------------------------------------
# 8. round-trips
# ---------------------------------------------------------------------------


def test_criterion_8_round_trips(tmp_path):
    rng = np.random.default_rng(800)
    n = 5000
    pts = LabeledSet(
        rng.uniform(-2.5, 7.5, n),
        rng.uniform(-2.5, 2.5, n),
        rng.uniform(0, 60, n),
        rng.uniform(0.002, 0.01, n),
        rng.standard_normal(n),
        rng.standard_normal(n),
        rng.standard_normal(n),
    )
    csv = tmp_path / "pts.csv"
    write_snapshots(csv, pts)
    back = load_snapshots(csv)
    csv_ok = all(
        np.all(np.abs(a - b) <= 1e-15 * np.maximum(np.abs(a), 1.0))
        for a, b in zip(pts._columns(), back._columns())
    )

    tiny = TrainRunConfig(
        network=NetworkConfig(fourier_bins=4, hidden_layers=2, hidden_width=8),
        domain=TRAIN_BOX,
        sampling=SamplingPlan(n_labeled=64, n_residual=64, seed=0),
        weights=LossWeights(),
        train_nus=(0.005,),
        epochs=1,
        seed=0,
        batch_size=32,
    )
    ck, _ = train(tiny)
    p1 = tmp_path / "c1.pnns"
    p2 = tmp_path / "c2.pnns"
    save_checkpoint(ck, p1)
    save_checkpoint(load_checkpoint(p1), p2)
    ck_ok = p1.read_bytes() == p2.read_bytes()
    _report(8, "round-trips", csv_ok and ck_ok)


# ---------------------------------------------------------------------------
# 9. sampling correctness
# ---------------------------------------------------------------------------


def _segment_mass(a: float, b: float, r: float) -> float:
    """Integral over [a, b] of the chord length 2*sqrt(r^2 - s^2) (the area
    the cylinder removes from a coordinate slab)."""

    def anti(s):
        s = min(max(s, -r), r)
        return s * math.sqrt(max(r * r - s * s, 0.0)) + r * r * math.asin(s / r)

    return anti(b) - anti(a)


def test_criterion_9_sampling_correctness():
    spec = DomainSpec()
    plan = SamplingPlan(n_labeled=1, n_residual=1_000_000, seed=900)
    batch = sample_interior(spec, plan)
    inside = int(np.sum(batch.x**2 + batch.y**2 <= 0.25))

    again = sample_interior(spec, plan)
    reproducible = (
        np.array_equal(batch.x, again.x)
        and np.array_equal(batch.y, again.y)
        and np.array_equal(batch.t, again.t)
        and np.array_equal(batch.nu, again.nu)
    )

    # chi-square marginal uniformity; x/y expectations corrected for the
    # cylinder cut out of the rectangle
    bins = 20
    n = len(batch)
    r = 0.5
    height = spec.y_max - spec.y_min
    width = spec.x_max - spec.x_min
    area = width * height - math.pi * r * r
    chi_ok = True
    for col, lo, hi, corrected in (
        (batch.x, spec.x_min, spec.x_max, "x"),
        (batch.y, spec.y_min, spec.y_max, "y"),
        (batch.t, spec.t_min, spec.t_max, None),
        (batch.nu, spec.nu_min, spec.nu_max, None),
    ):
        counts, edges = np.histogram(col, bins=bins, range=(lo, hi))
        if corrected is None:
            expected = np.full(bins, n / bins)
        else:
            full = height if corrected == "x" else width
            expected = np.array(
                [
                    (full * (edges[i + 1] - edges[i]) - _segment_mass(edges[i], edges[i + 1], r))
                    for i in range(bins)
                ]
            ) * (n / area)
        _, p = stats.chisquare(counts, f_exp=expected * counts.sum() / expected.sum())
        chi_ok = chi_ok and p > 0.001
    _report(
        9,
        f"sampling correctness (inside cylinder {inside}, reproducible {reproducible})",
        inside == 0 and reproducible and chi_ok,
    )
