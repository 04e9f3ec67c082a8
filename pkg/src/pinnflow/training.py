"""Composite loss, Adam optimization, and checkpointing.

The loss follows the PINN recipe: weighted sum of a labeled-data MSE, the
mean squared PDE residuals (f, g, h), and the mean squared boundary
violations.  ``nn`` mode zeroes the PDE weight while still reporting the
residual component for logging.
"""

from __future__ import annotations

import dataclasses
import io
import math
import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .data import DatasetSplit, LabeledSet, assemble_split, taylor_green_dataset, load_snapshots
from .network import ModelParams, NetworkConfig, NetworkField, init_params
from .physics import residual_nodes
from .sampling import RNG_ALGORITHM, DomainSpec, PointBatch, SamplingPlan, sample_boundary, sample_interior

CHECKPOINT_MAGIC = b"PNNS"
CHECKPOINT_VERSION = 1


class EmptyBatch(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


class NonFiniteLoss(RuntimeError):
    """Training diverged; carries the epoch and the last good checkpoint."""

    def __init__(self, epoch: int, last_checkpoint: "Checkpoint | None"):
        self.epoch = epoch
        self.last_checkpoint = last_checkpoint
        super().__init__(f"non-finite loss at epoch {epoch}")


@dataclass(frozen=True)
class LossWeights:
    w_data: float = 1.0
    w_pde: float = 1.0
    w_bc: float = 1.0
    mode: str = "pinn"

    def __post_init__(self):
        if min(self.w_data, self.w_pde, self.w_bc) < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.mode not in ("pinn", "nn"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def effective_w_pde(self) -> float:
        return 0.0 if self.mode == "nn" else self.w_pde


@dataclass(frozen=True)
class AdamState:
    step: int
    m: np.ndarray
    v: np.ndarray
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def initial(cls, n_params: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        return cls(0, np.zeros(n_params), np.zeros(n_params), lr, beta1, beta2, eps)


def adam_step(params: ModelParams, grads: ad.GradientVector, state: AdamState):
    """One bias-corrected Adam update; the frozen Fourier matrix is untouched."""
    theta = params.flatten_trainable()
    if grads.entries.size != theta.size or state.m.size != theta.size:
        raise ShapeMismatch(
            f"gradient/moment size {grads.entries.size}/{state.m.size} vs {theta.size} parameters"
        )
    step = state.step + 1
    g = grads.entries
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1**step)
    v_hat = v / (1.0 - state.beta2**step)
    theta = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params.with_trainable(theta), replace(state, step=step, m=m, v=v)


# ---------------------------------------------------------------------------
# composite loss
# ---------------------------------------------------------------------------


def _mse_node(rec, pred, target):
    return rec.mean((pred - rec.constant(np.reshape(target, (-1, 1)))) ** 2)


def _bc_loss_node(rec, field, bc: PointBatch):
    """Mean squared boundary residual over every constraint component."""
    sums = []
    counts = 0
    kinds = np.asarray(bc.kinds)

    def eval_at(mask_or_idx):
        cols = [np.reshape(a[mask_or_idx], (-1, 1)) for a in (bc.x, bc.y, bc.t, bc.nu)]
        leaves = [rec.variable(c) for c in cols]
        return field(*leaves)

    for kind in ("inlet", "outlet", "cylinder"):
        mask = kinds == kind
        n = int(mask.sum())
        if n == 0:
            continue
        u, v, p = eval_at(mask)
        if kind == "inlet":
            sums += [rec.total((u - 1.0) ** 2), rec.total(v**2)]
            counts += 2 * n
        elif kind == "cylinder":
            sums += [rec.total(u**2), rec.total(v**2)]
            counts += 2 * n
        else:
            sums.append(rec.total(p**2))
            counts += n

    mask = kinds == "periodic_pair"
    if mask.any():
        idx = np.nonzero(mask)[0]
        lo, hi = idx[0::2], idx[1::2]
        u0, v0, p0 = eval_at(lo)
        u1, v1, p1 = eval_at(hi)
        sums += [rec.total((u0 - u1) ** 2), rec.total((v0 - v1) ** 2), rec.total((p0 - p1) ** 2)]
        counts += 3 * (len(idx) // 2)

    if not sums:
        return None
    total = sums[0]
    for s in sums[1:]:
        total = total + s
    return total * (1.0 / counts)


def composite_loss(
    params: ModelParams,
    domain: DomainSpec,
    labeled: LabeledSet | None,
    residual: PointBatch | None,
    bc: PointBatch | None,
    weights: LossWeights,
    want_grads: bool = True,
):
    """Weighted total loss with per-term components.

    Returns ``(total, components, grads)`` where components maps
    data/pde/bc to their unweighted values and grads is None when
    ``want_grads`` is false.
    """
    if weights.w_data > 0 and (labeled is None or len(labeled) == 0):
        raise EmptyBatch("data term has positive weight but no labeled batch")
    if weights.effective_w_pde > 0 and (residual is None or len(residual) == 0):
        raise EmptyBatch("pde term has positive weight but no residual batch")
    # a None bc batch simply drops the boundary term; an explicitly empty one
    # with positive weight is a caller error
    if weights.w_bc > 0 and bc is not None and len(bc) == 0:
        raise EmptyBatch("bc term has positive weight but empty boundary batch")

    rec = ad.ComputationRecord()
    fld = NetworkField(params, domain, trainable=want_grads)
    terms = []
    comps = {"data": 0.0, "pde": 0.0, "bc": 0.0}

    if labeled is not None and len(labeled) > 0:
        cols = [np.reshape(a, (-1, 1)) for a in (labeled.x, labeled.y, labeled.t, labeled.nu)]
        leaves = [rec.variable(c) for c in cols]
        u, v, p = fld(*leaves)
        data = (_mse_node(rec, u, labeled.u) + _mse_node(rec, v, labeled.v) + _mse_node(rec, p, labeled.p)) * (
            1.0 / 3.0
        )
        comps["data"] = float(data._node.value)
        terms.append(weights.w_data * data)

    if residual is not None and len(residual) > 0:
        f, g, h = residual_nodes(fld, rec, residual.x, residual.y, residual.t, residual.nu)
        pde = rec.mean(f**2) + rec.mean(g**2) + rec.mean(h**2)
        comps["pde"] = float(pde._node.value)
        terms.append(weights.effective_w_pde * pde)

    if bc is not None and len(bc) > 0:
        bc_node = _bc_loss_node(rec, fld, bc)
        if bc_node is not None:
            comps["bc"] = float(bc_node._node.value)
            terms.append(weights.w_bc * bc_node)

    if not terms:
        raise EmptyBatch("no loss terms")
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    total_value = float(total._node.value)
    grads = ad.backward(rec, total) if want_grads else None
    return total_value, comps, grads


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Checkpoint:
    config: NetworkConfig
    domain: DomainSpec
    params: ModelParams
    adam: AdamState
    epoch: int
    seed: int
    mode: str = "pinn"
    train_nus: tuple[float, ...] = ()
    test_nus: tuple[float, ...] = ()
    loss_tail: tuple[tuple[int, float], ...] = ()
    version: int = CHECKPOINT_VERSION


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return "%.17g" % v
    if isinstance(v, (tuple, list)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


_META_KEYS = (
    "fourier_bins",
    "fourier_sigma",
    "hidden_layers",
    "hidden_width",
    "activation",
    "x_min",
    "x_max",
    "y_min",
    "y_max",
    "t_min",
    "t_max",
    "cylinder_x",
    "cylinder_y",
    "cylinder_diameter",
    "nu_min",
    "nu_max",
    "epoch",
    "seed",
    "mode",
    "train_nus",
    "test_nus",
    "adam_step",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "rng",
    "loss_tail",
)


def _checkpoint_metadata(ck: Checkpoint) -> dict:
    c, d = ck.config, ck.domain
    return {
        "fourier_bins": c.fourier_bins,
        "fourier_sigma": float(c.fourier_sigma),
        "hidden_layers": c.hidden_layers,
        "hidden_width": c.hidden_width,
        "activation": c.activation,
        "x_min": float(d.x_min),
        "x_max": float(d.x_max),
        "y_min": float(d.y_min),
        "y_max": float(d.y_max),
        "t_min": float(d.t_min),
        "t_max": float(d.t_max),
        "cylinder_x": float(d.cylinder_center[0]),
        "cylinder_y": float(d.cylinder_center[1]),
        "cylinder_diameter": None if d.cylinder_diameter is None else float(d.cylinder_diameter),
        "nu_min": float(d.nu_min),
        "nu_max": float(d.nu_max),
        "epoch": ck.epoch,
        "seed": ck.seed,
        "mode": ck.mode,
        "train_nus": tuple(float(v) for v in ck.train_nus),
        "test_nus": tuple(float(v) for v in ck.test_nus),
        "adam_step": ck.adam.step,
        "lr": float(ck.adam.lr),
        "beta1": float(ck.adam.beta1),
        "beta2": float(ck.adam.beta2),
        "eps": float(ck.adam.eps),
        "rng": RNG_ALGORITHM,
        "loss_tail": tuple(f"{e}:{_fmt(float(l))}" for e, l in ck.loss_tail),
    }


def save_checkpoint(ck: Checkpoint, path) -> None:
    """Versioned binary: magic, version, length-prefixed metadata text, then
    little-endian float64 blocks (fourier, trainable, Adam m, Adam v)."""
    meta = _checkpoint_metadata(ck)
    text = "".join(f"{k}={_fmt(meta[k])}\n" for k in _META_KEYS).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", ck.version))
    buf.write(struct.pack("<Q", len(text)))
    buf.write(text)
    for arr in (ck.params.fourier_matrix, ck.params.flatten_trainable(), ck.adam.m, ck.adam.v):
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack_from("<Q", raw, 8)
    meta_text = raw[16 : 16 + meta_len].decode("utf-8")
    meta = {}
    for line in meta_text.splitlines():
        k, _, v = line.partition("=")
        meta[k] = v

    def floats(key):
        return tuple(float(x) for x in meta[key].split(";")) if meta[key] else ()

    config = NetworkConfig(
        fourier_bins=int(meta["fourier_bins"]),
        fourier_sigma=float(meta["fourier_sigma"]),
        hidden_layers=int(meta["hidden_layers"]),
        hidden_width=int(meta["hidden_width"]),
        activation=meta["activation"],
    )
    domain = DomainSpec(
        x_min=float(meta["x_min"]),
        x_max=float(meta["x_max"]),
        y_min=float(meta["y_min"]),
        y_max=float(meta["y_max"]),
        t_min=float(meta["t_min"]),
        t_max=float(meta["t_max"]),
        cylinder_center=(float(meta["cylinder_x"]), float(meta["cylinder_y"])),
        cylinder_diameter=None if meta["cylinder_diameter"] == "none" else float(meta["cylinder_diameter"]),
        nu_min=float(meta["nu_min"]),
        nu_max=float(meta["nu_max"]),
    )
    offset = 16 + meta_len
    n_fourier = config.fourier_bins * config.input_dim
    n_train = config.trainable_count
    blocks = []
    for size in (n_fourier, n_train, n_train, n_train):
        blocks.append(np.frombuffer(raw, dtype="<f8", count=size, offset=offset).astype(np.float64))
        offset += size * 8
    fourier = blocks[0].reshape(config.fourier_bins, config.input_dim)
    template = ModelParams(
        fourier,
        [np.zeros(sh) for sh in config.layer_dims],
        [np.zeros(sh[0]) for sh in config.layer_dims],
    )
    params = template.with_trainable(blocks[1])
    params.fourier_matrix = fourier
    adam = AdamState(
        step=int(meta["adam_step"]),
        m=blocks[2],
        v=blocks[3],
        lr=float(meta["lr"]),
        beta1=float(meta["beta1"]),
        beta2=float(meta["beta2"]),
        eps=float(meta["eps"]),
    )
    tail = []
    if meta["loss_tail"]:
        for item in meta["loss_tail"].split(";"):
            e, _, l = item.partition(":")
            tail.append((int(e), float(l)))
    return Checkpoint(
        config=config,
        domain=domain,
        params=params,
        adam=adam,
        epoch=int(meta["epoch"]),
        seed=int(meta["seed"]),
        mode=meta["mode"],
        train_nus=floats("train_nus"),
        test_nus=floats("test_nus"),
        loss_tail=tuple(tail),
    )


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainRunConfig:
    """Full experiment description (aggregates network, domain, sampling,
    loss, optimizer, and dataset settings)."""

    network: NetworkConfig = field(default_factory=NetworkConfig)
    domain: DomainSpec = field(default_factory=DomainSpec)
    sampling: SamplingPlan = field(default_factory=SamplingPlan)
    weights: LossWeights = field(default_factory=LossWeights)
    train_nus: tuple[float, ...] = (0.002, 0.0025, 0.003, 0.005, 0.010)
    test_nus: tuple[float, ...] = ()
    epochs: int = 30_000
    seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 4096
    data_path: str | None = None
    label_box: tuple[float, float, float, float] = (0.0, 2.0 * math.pi, 0.0, 2.0 * math.pi)
    n_boundary_per_kind: int = 0
    out_dir: str | None = None
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0:
            raise ValueError("epochs must be >= 0 and batch_size positive")
        for nu in tuple(self.train_nus) + tuple(self.test_nus):
            if not (self.domain.nu_min - 1e-12 <= nu <= self.domain.nu_max + 1e-12):
                raise ValueError(f"nu={nu} outside the domain's nu range")
        if self.data_path is not None and not os.path.exists(self.data_path):
            raise FileNotFoundError(self.data_path)


def _derived_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1)[0])


def _circular(perm: np.ndarray, start: int, count: int) -> np.ndarray:
    n = perm.size
    return perm[(start + np.arange(count)) % n]


def prepare_training_data(run: TrainRunConfig):
    """Labeled split, residual points, and boundary points for a run."""
    ss = np.random.SeedSequence(run.seed)
    _, s_sample, _, s_data, s_bc = ss.spawn(5)
    if run.data_path is not None:
        points = load_snapshots(run.data_path)
    else:
        n_per_nu = max(1, -(-run.sampling.n_labeled // max(1, len(run.train_nus))))
        points = taylor_green_dataset(
            run.train_nus,
            n_per_nu,
            box=run.label_box,
            t_range=(run.domain.t_min, run.domain.t_max),
            seed=_derived_seed(s_data),
        )
    split = assemble_split(points, run.train_nus, run.test_nus)
    residual = sample_interior(run.domain, replace(run.sampling, seed=_derived_seed(s_sample)))
    bc = None
    if run.n_boundary_per_kind > 0:
        kinds = {"inlet": run.n_boundary_per_kind, "outlet": run.n_boundary_per_kind, "periodic_pair": run.n_boundary_per_kind}
        if run.domain.cylinder_diameter is not None:
            kinds["cylinder"] = run.n_boundary_per_kind
        bc = sample_boundary(run.domain, kinds, seed=_derived_seed(s_bc))
    return split, residual, bc


def train(run: TrainRunConfig, resume: Checkpoint | None = None):
    """Run the optimization; returns (final checkpoint, per-epoch log rows).

    Log rows are (epoch, total, data, pde, bc).  Fully deterministic for a
    given (run, resume) in single-threaded execution.  Raises
    :class:`NonFiniteLoss` carrying the last good checkpoint on divergence.
    """
    if resume is not None and run.epochs == 0:
        return resume, []

    ss = np.random.SeedSequence(run.seed)
    s_init, _, s_shuffle, _, _ = ss.spawn(5)
    split, residual, bc = prepare_training_data(run)
    labeled = split.train_points
    if len(labeled) == 0:
        raise EmptyBatch("no labeled training points")

    if resume is not None:
        params, adam, epoch0 = resume.params, resume.adam, resume.epoch
    else:
        params = init_params(run.network, _derived_seed(s_init))
        adam = AdamState.initial(params.trainable_count, run.lr, run.beta1, run.beta2, run.eps)
        epoch0 = 0

    def make_checkpoint(epoch, tail):
        return Checkpoint(
            config=run.network,
            domain=run.domain,
            params=params,
            adam=adam,
            epoch=epoch,
            seed=run.seed,
            mode=run.weights.mode,
            train_nus=tuple(run.train_nus),
            test_nus=tuple(run.test_nus),
            loss_tail=tuple(tail),
        )

    shuffle_rng = np.random.default_rng(s_shuffle)
    n_lab, n_res = len(labeled), len(residual)
    n_bc = 0 if bc is None else len(bc)
    steps = max(1, -(-max(n_lab, n_res) // run.batch_size))
    log_rows = []
    tail: list[tuple[int, float]] = list(resume.loss_tail) if resume is not None else []
    last_good = make_checkpoint(epoch0, tail)

    out_dir = run.out_dir
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    for e in range(1, run.epochs + 1):
        epoch = epoch0 + e
        perm_lab = shuffle_rng.permutation(n_lab)
        perm_res = shuffle_rng.permutation(n_res)
        acc = np.zeros(4)
        for k in range(steps):
            lab_idx = _circular(perm_lab, k * run.batch_size, min(run.batch_size, n_lab))
            res_idx = _circular(perm_res, k * run.batch_size, min(run.batch_size, n_res))
            lab_batch = labeled[lab_idx]
            res_batch = residual[res_idx]
            # boundary sets are small and pair-structured; use them whole
            bc_batch = bc if n_bc else None
            total, comps, grads = composite_loss(
                params, run.domain, lab_batch, res_batch, bc_batch, run.weights, want_grads=True
            )
            if not math.isfinite(total):
                raise NonFiniteLoss(epoch, last_good)
            params, adam = adam_step(params, grads, adam)
            acc += (total, comps["data"], comps["pde"], comps["bc"])
        acc /= steps
        log_rows.append((epoch, acc[0], acc[1], acc[2], acc[3]))
        tail.append((epoch, float(acc[0])))
        tail = tail[-10:]
        last_good = make_checkpoint(epoch, tail)
        if run.checkpoint_every and out_dir is not None and epoch % run.checkpoint_every == 0:
            save_checkpoint(last_good, os.path.join(out_dir, f"checkpoint_{epoch:06d}.pnns"))

    final = make_checkpoint(epoch0 + run.epochs, tail)
    if out_dir is not None:
        save_checkpoint(final, os.path.join(out_dir, "checkpoint.pnns"))
        with open(os.path.join(out_dir, "metrics.csv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("epoch,total,data,pde,bc\n")
            for row in log_rows:
                fh.write("%d,%.17g,%.17g,%.17g,%.17g\n" % row)
    return final, log_rows
