"""Fourier-feature MLP mapping (x, y, t, nu) to (u, v, p).

The Fourier matrix is drawn once at initialization and frozen; only the
fully connected layers are trainable.  Inputs are affinely normalized to
[-1, 1] per coordinate using the domain bounds, with the flow parameter
carried internally as nu = 1/Re.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .sampling import DomainSpec


class NonPositiveReynolds(ValueError):
    pass


class NonFiniteOutput(ValueError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    fourier_bins: int = 50
    fourier_sigma: float = 1.0
    hidden_layers: int = 7
    hidden_width: int = 100
    activation: str = "tanh"
    input_dim: int = 4
    output_dim: int = 3

    def __post_init__(self):
        if self.fourier_bins <= 0 or self.hidden_layers <= 0 or self.hidden_width <= 0:
            raise ValueError("network sizes must be positive")
        if self.fourier_sigma <= 0:
            raise ValueError("fourier_sigma must be positive")
        if self.activation != "tanh":
            raise ValueError("only tanh activation is supported")
        if self.input_dim != 4 or self.output_dim != 3:
            raise ValueError("network is fixed to 4 inputs and 3 outputs")

    @property
    def embed_dim(self) -> int:
        return 2 * self.fourier_bins

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(out, in) shape of every weight matrix."""
        dims = [self.embed_dim] + [self.hidden_width] * self.hidden_layers + [self.output_dim]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]

    @property
    def trainable_count(self) -> int:
        return sum(o * i + o for o, i in self.layer_dims)


@dataclass
class FieldPrediction:
    u: float
    v: float
    p: float


@dataclass
class ModelParams:
    """Frozen Fourier matrix plus MLP weights and biases.

    Canonical flattening: fourier matrix first (excluded from updates),
    then per layer the weight matrix (row-major) followed by the bias.
    """

    fourier_matrix: np.ndarray
    layer_weights: list[np.ndarray] = field(default_factory=list)
    layer_biases: list[np.ndarray] = field(default_factory=list)

    @property
    def trainable_count(self) -> int:
        return sum(w.size for w in self.layer_weights) + sum(b.size for b in self.layer_biases)

    def flatten_trainable(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.layer_weights, self.layer_biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def with_trainable(self, flat: np.ndarray) -> "ModelParams":
        if flat.size != self.trainable_count:
            raise ValueError("flat vector size does not match parameter count")
        weights, biases = [], []
        k = 0
        for w, b in zip(self.layer_weights, self.layer_biases):
            weights.append(flat[k : k + w.size].reshape(w.shape).copy())
            k += w.size
            biases.append(flat[k : k + b.size].reshape(b.shape).copy())
            k += b.size
        return ModelParams(self.fourier_matrix, weights, biases)


def init_params(config: NetworkConfig, seed: int) -> ModelParams:
    """Seeded initialization: Gaussian Fourier features, Glorot-uniform
    weights, zero biases.  Same (config, seed) gives bit-identical params."""
    rng = np.random.default_rng(seed)
    fourier = rng.normal(0.0, config.fourier_sigma, (config.fourier_bins, config.input_dim))
    weights, biases = [], []
    for out_dim, in_dim in config.layer_dims:
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        weights.append(rng.uniform(-limit, limit, (out_dim, in_dim)))
        biases.append(np.zeros(out_dim))
    return ModelParams(fourier, weights, biases)


# ---------------------------------------------------------------------------
# input normalization
# ---------------------------------------------------------------------------


def _affine(v, lo, hi):
    return 2.0 * (v - lo) / (hi - lo) - 1.0


def normalize_input(raw, domain: DomainSpec):
    """(x, y, t, Re) -> normalized (x^, y^, t^, nu^), each in [-1, 1] on the
    configured bounds.  The parameter axis is nu = 1/Re."""
    x, y, t, re = raw
    if re <= 0:
        raise NonPositiveReynolds(re)
    return (
        _affine(x, domain.x_min, domain.x_max),
        _affine(y, domain.y_min, domain.y_max),
        _affine(t, domain.t_min, domain.t_max),
        _affine(1.0 / re, domain.nu_min, domain.nu_max),
    )


def denormalize_input(normalized, domain: DomainSpec):
    """Exact inverse of :func:`normalize_input` (returns (x, y, t, Re))."""

    def inv(v, lo, hi):
        return lo + (v + 1.0) * (hi - lo) / 2.0

    xh, yh, th, nuh = normalized
    nu = inv(nuh, domain.nu_min, domain.nu_max)
    return (
        inv(xh, domain.x_min, domain.x_max),
        inv(yh, domain.y_min, domain.y_max),
        inv(th, domain.t_min, domain.t_max),
        1.0 / nu,
    )


def normalize_nu_point(point, domain: DomainSpec):
    """Like normalize_input but with nu (not Re) as the fourth coordinate."""
    x, y, t, nu = point
    return (
        _affine(x, domain.x_min, domain.x_max),
        _affine(y, domain.y_min, domain.y_max),
        _affine(t, domain.t_min, domain.t_max),
        _affine(nu, domain.nu_min, domain.nu_max),
    )


# ---------------------------------------------------------------------------
# plain numpy evaluation
# ---------------------------------------------------------------------------


def embed(point, params: ModelParams, domain: DomainSpec) -> np.ndarray:
    """Fourier feature vector [sin(B q); cos(B q)] of one (x, y, t, nu) point."""
    q = np.asarray(normalize_nu_point(point, domain))
    z = params.fourier_matrix @ q
    return np.concatenate((np.sin(z), np.cos(z)))


def forward(point, params: ModelParams, domain: DomainSpec) -> FieldPrediction:
    """Evaluate the network at one (x, y, t, nu) point."""
    h = embed(point, params, domain)
    n_layers = len(params.layer_weights)
    for i, (w, b) in enumerate(zip(params.layer_weights, params.layer_biases)):
        h = w @ h + b
        if i < n_layers - 1:
            h = np.tanh(h)
    if not np.all(np.isfinite(h)):
        raise NonFiniteOutput("network produced non-finite output (diverged parameters?)")
    return FieldPrediction(u=float(h[0]), v=float(h[1]), p=float(h[2]))


def forward_batch(x, y, t, nu, params: ModelParams, domain: DomainSpec) -> np.ndarray:
    """Vectorized forward pass; returns an (n, 3) array of (u, v, p)."""
    q = np.stack(
        [
            _affine(np.asarray(x, dtype=float), domain.x_min, domain.x_max),
            _affine(np.asarray(y, dtype=float), domain.y_min, domain.y_max),
            _affine(np.asarray(t, dtype=float), domain.t_min, domain.t_max),
            _affine(np.asarray(nu, dtype=float), domain.nu_min, domain.nu_max),
        ],
        axis=-1,
    )
    z = q @ params.fourier_matrix.T
    h = np.concatenate((np.sin(z), np.cos(z)), axis=-1)
    n_layers = len(params.layer_weights)
    for i, (w, b) in enumerate(zip(params.layer_weights, params.layer_biases)):
        h = h @ w.T + b
        if i < n_layers - 1:
            h = np.tanh(h)
    return h


# ---------------------------------------------------------------------------
# differentiable evaluation
# ---------------------------------------------------------------------------


class NetworkField:
    """Differentiable (x, y, t, nu) -> (u, v, p) evaluator over a tape.

    Call with DiffValues of shape (n, 1) from one ComputationRecord.  With
    ``trainable=True``, weights and biases become parameter leaves
    (registered in canonical order on first use per record) so the result
    is differentiable with respect to them.
    """

    def __init__(self, params: ModelParams, domain: DomainSpec, trainable: bool = False):
        self.params = params
        self.domain = domain
        self.trainable = trainable
        self._bound: dict[int, tuple] = {}

    def _bind(self, rec: ad.ComputationRecord):
        key = id(rec)
        if key not in self._bound:
            make = (lambda a: rec.variable(a, param=True)) if self.trainable else rec.constant
            # leaf registration must match the canonical flattening order:
            # per layer, weight then bias
            weights, biases = [], []
            for w, b in zip(self.params.layer_weights, self.params.layer_biases):
                weights.append(make(w))
                biases.append(make(b))
            cols = [rec.constant(self.params.fourier_matrix[:, k]) for k in range(4)]
            self._bound[key] = (weights, biases, cols)
        return self._bound[key]

    def __call__(self, x, y, t, nu):
        rec = x.record
        weights, biases, cols = self._bind(rec)
        d = self.domain
        coords = (
            _affine(x, d.x_min, d.x_max),
            _affine(y, d.y_min, d.y_max),
            _affine(t, d.t_min, d.t_max),
            _affine(nu, d.nu_min, d.nu_max),
        )
        z = coords[0] * cols[0]
        for c, col in zip(coords[1:], cols[1:]):
            z = z + c * col
        h = rec.concat(ad.sin(z), ad.cos(z))
        n_layers = len(weights)
        for i, (w, b) in enumerate(zip(weights, biases)):
            h = rec.matmul(h, w, transpose_b=True) + b
            if i < n_layers - 1:
                h = ad.tanh(h)
        return rec.col(h, 0), rec.col(h, 1), rec.col(h, 2)
