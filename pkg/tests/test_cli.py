import math

import numpy as np
import pytest

from pinnflow.analytic import taylor_green
from pinnflow.cli import cli, load_run_config, parse_config_text
from pinnflow.data import assemble_split, load_snapshots
from pinnflow.evaluation import evaluate
from pinnflow.sampling import DomainSpec, SamplingPlan, sample_interior

BOX_CFG = """\
# analytic box run
fourier_bins = 4
hidden_layers = 2
hidden_width = 8
x_min = 0
x_max = 6.283185307179586
y_min = 0
y_max = 6.283185307179586
t_min = 0
t_max = 1
cylinder_diameter = none
nu_min = 0.004
nu_max = 0.02
n_labeled = 90
n_residual = 90
train_nus = 0.005;0.01
test_nus =
epochs = 1
seed = 0
batch_size = 64
mode = pinn
"""


def _write_cfg(tmp_path, text=BOX_CFG, extra=""):
    p = tmp_path / "run.cfg"
    p.write_text(text + extra)
    return str(p)


def test_check_oracle_suite_passes(capsys):
    assert cli(["check", "--suite", "oracle"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out


def test_check_unknown_suite(capsys):
    assert cli(["check", "--suite", "bogus"]) == 2
    assert capsys.readouterr().err.startswith("unknown-suite")


def test_train_missing_config(capsys, tmp_path):
    assert cli(["train", "--config", str(tmp_path / "nope.cfg")]) == 2
    err = capsys.readouterr().err
    assert err.startswith("config-not-found")
    assert err.count("\n") == 1  # one-line reason


def test_config_parser_round_trip(tmp_path):
    run = load_run_config(_write_cfg(tmp_path))
    assert run.network.fourier_bins == 4
    assert run.domain.cylinder_diameter is None
    assert run.train_nus == (0.005, 0.01)
    assert run.weights.mode == "pinn"


def test_config_parse_error():
    with pytest.raises(Exception):
        parse_config_text("not a key value line")


def test_gen_taylor_green_parses_back(tmp_path, capsys):
    out = tmp_path / "tg.csv"
    assert cli(["gen-taylor-green", "--nus", "0.005;0.01", "--n", "20", "--out", str(out)]) == 0
    pts = load_snapshots(out)
    assert len(pts) == 40
    u, v, p = taylor_green(pts.x, pts.y, pts.t, pts.nu)
    assert np.max(np.abs(pts.u - u)) < 1e-12


def test_gen_then_evaluate_analytic_wrapper(tmp_path):
    out = tmp_path / "tg.csv"
    assert cli(["gen-taylor-green", "--nus", "0.005;0.0075", "--n", "50", "--out", str(out)]) == 0
    pts = load_snapshots(out)
    split = assemble_split(pts, (0.005,), (0.0075,))
    box = DomainSpec(
        x_min=0, x_max=2 * math.pi, y_min=0, y_max=2 * math.pi,
        t_min=0, t_max=1, cylinder_diameter=None, nu_min=0.004, nu_max=0.02,
    )
    residual = sample_interior(box, SamplingPlan(n_labeled=1, n_residual=40, seed=0))
    report = evaluate(taylor_green, split, residual, domain=box)
    for row in report.rows:
        assert max(row.mse_u, row.mse_v, row.mse_p) < 1e-12


def test_sample_round_trips_through_loader(tmp_path):
    plan = tmp_path / "plan.cfg"
    plan.write_text("n_labeled = 5\nn_residual = 60\nseed = 4\n")
    out = tmp_path / "pts.csv"
    assert cli(["sample", "--plan", str(plan), "--out", str(out)]) == 0
    pts = load_snapshots(out)
    assert len(pts) == 60
    assert np.all(pts.u == 0.0)


def test_train_eval_vorticity_lift_pipeline(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, extra=f"out_dir = {tmp_path / 'out'}\n")
    assert cli(["train", "--config", cfg]) == 0
    ck = str(tmp_path / "out" / "checkpoint.pnns")

    data = tmp_path / "tg.csv"
    assert cli(["gen-taylor-green", "--nus", "0.005;0.0075", "--n", "30", "--out", str(data)]) == 0
    report = tmp_path / "report.csv"
    assert cli(["eval", "--checkpoint", ck, "--data", str(data), "--residual-n", "50", "--out", str(report)]) == 0
    lines = report.read_text().splitlines()
    assert lines[0] == "nu,split,mse_u,mse_v,mse_p,mse_residual,mse_vorticity"
    assert len(lines) == 3

    vort = tmp_path / "v.txt"
    assert cli(["vorticity", "--checkpoint", ck, "--nu", "0.0075", "--t", "0.5", "--nx", "6", "--ny", "5", "--out", str(vort)]) == 0
    assert vort.read_text().splitlines()[0].split()[:2] == ["6", "5"]

    # the box run has no cylinder: lift must fail with a parsable reason
    assert cli(["lift", "--checkpoint", ck, "--nu", "0.0075", "--out", str(tmp_path / "l.csv")]) == 2
    assert capsys.readouterr().err.splitlines()[-1].startswith("no-cylinder")


def test_cli_determinism(tmp_path):
    cfg1 = _write_cfg(tmp_path, extra=f"out_dir = {tmp_path / 'a'}\n")
    assert cli(["train", "--config", cfg1]) == 0
    cfg2_path = tmp_path / "run2.cfg"
    cfg2_path.write_text(BOX_CFG + f"out_dir = {tmp_path / 'b'}\n")
    assert cli(["train", "--config", str(cfg2_path)]) == 0
    a = (tmp_path / "a" / "checkpoint.pnns").read_bytes()
    b = (tmp_path / "b" / "checkpoint.pnns").read_bytes()
    assert a == b


def test_timeshift_command(tmp_path, capsys):
    t = np.arange(0, 8 * math.pi, 0.01)
    pred = tmp_path / "pred.txt"
    ref = tmp_path / "ref.txt"
    pred.write_text("\n".join("%.17g" % v for v in np.sin(t - 0.5)))
    ref.write_text("\n".join("%.17g" % v for v in np.sin(t)))
    assert cli(["timeshift", "--pred", str(pred), "--ref", str(ref), "--dt", "0.01"]) == 0
    lag = float(capsys.readouterr().out.strip())
    assert abs(lag - 0.5) <= 0.011
