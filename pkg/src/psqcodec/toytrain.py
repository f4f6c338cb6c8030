"""Projected scalar quantization on two-dimensional toy data.

A small tanh MLP encoder maps 2-D points onto the quantizer hypercube, a
scalar quantizer discretizes each latent dimension, and a mirrored MLP decoder
maps the grid back. Gradients are written out by hand; the quantizer block is
an identity in the backward pass for both the straight-through and the
additive-noise realization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .quantizers import (QuantizerGrid, dequantize, grid_from_levels, make_rng, quantize,
                         uniform_noise)

MODES = ("st", "noise")
OPTIMIZERS = ("adam", "sgd")
ACTIVATIONS = ("tanh", "identity")


class TrainingDiverged(FloatingPointError):
    """Raised when the loss or a gradient becomes non-finite.

    ``state`` carries the last finite ``(encoder, decoder, history)``.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass
class Layer:
    weights: np.ndarray
    biases: np.ndarray
    activation: str = "tanh"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.biases.shape != (self.weights.shape[0],):
            raise ValueError("bias length must equal the layer's output size")

    def copy(self) -> "Layer":
        return Layer(self.weights.copy(), self.biases.copy(), self.activation)


@dataclass
class MlpNetwork:
    layers: list

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.weights.shape[0] != b.weights.shape[1]:
                raise ValueError("consecutive layer sizes do not chain")

    @property
    def in_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weights.shape[0]

    def copy(self) -> "MlpNetwork":
        return MlpNetwork([layer.copy() for layer in self.layers])

    def parameters(self) -> list:
        out = []
        for layer in self.layers:
            out += [layer.weights, layer.biases]
        return out

    def forward(self, x):
        """Run a batch ``(N, in)``; the cache keeps each layer's input and output."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"network expects {self.in_dim} inputs, got {x.shape[-1]}")
        cache = []
        h = x
        for layer in self.layers:
            a = h @ layer.weights.T + layer.biases
            out = np.tanh(a) if layer.activation == "tanh" else a
            cache.append((h, out))
            h = out
        return h, cache

    def backward(self, cache, grad_out):
        """Return ``(grad wrt input, [dW0, db0, dW1, db1, ...])``."""
        grads = []
        g = grad_out
        for layer, (h_in, h_out) in zip(reversed(self.layers), reversed(cache)):
            if layer.activation == "tanh":
                g = g * (1.0 - h_out ** 2)
            grads.append(g.sum(axis=0))
            grads.append(g.T @ h_in)
            g = g @ layer.weights
        return g, grads[::-1]

    def apply_update(self, grads, lr: float) -> "MlpNetwork":
        layers = []
        for i, layer in enumerate(self.layers):
            layers.append(Layer(layer.weights - lr * grads[2 * i],
                                layer.biases - lr * grads[2 * i + 1],
                                layer.activation))
        return MlpNetwork(layers)


def init_mlp(sizes, activations, seed) -> MlpNetwork:
    """Glorot-normal weights, zero biases."""
    rng = make_rng(seed)
    layers = []
    for (n_in, n_out), act in zip(zip(sizes, sizes[1:]), activations):
        std = math.sqrt(2.0 / (n_in + n_out))
        layers.append(Layer(rng.normal(0.0, std, (n_out, n_in)), np.zeros(n_out), act))
    return MlpNetwork(layers)


def init_psq(latent_dims: int, hidden=(32, 32), data_dim: int = 2, seed=0):
    rng = make_rng(seed)
    enc_sizes = [data_dim, *hidden, latent_dims]
    dec_sizes = [latent_dims, *reversed(hidden), data_dim]
    enc = init_mlp(enc_sizes, ["tanh"] * (len(enc_sizes) - 1), rng)
    dec = init_mlp(dec_sizes, ["tanh"] * (len(dec_sizes) - 2) + ["identity"], rng)
    return enc, dec


@dataclass
class TwoMoonsSet:
    points: np.ndarray
    n: int
    noise_std: float
    seed: int
    center: tuple = (0.5, 0.25)
    scale: float = 1.5


def _moon_arcs(n: int) -> np.ndarray:
    n_upper = (n + 1) // 2
    n_lower = n - n_upper
    t1 = np.linspace(0.0, np.pi, n_upper)
    t2 = np.linspace(0.0, np.pi, n_lower)
    upper = np.stack([np.cos(t1), np.sin(t1)], axis=1)
    lower = np.stack([1.0 - np.cos(t2), 0.5 - np.sin(t2)], axis=1)
    return np.vstack([upper, lower])


def two_moons(n: int, noise_std: float = 0.05, seed: int = 0) -> TwoMoonsSet:
    """Two interleaved unit half circles, jittered, centered and scaled into [-1, 1]^2.

    The second arc is the first one mirrored and moved by (1, 0.5). Scaling
    divides by 1.5 (the canonical half-extent) or by the realized maximum
    magnitude if jitter pushes points further out.
    """
    if n < 1:
        raise ValueError("need at least one point")
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    rng = make_rng(seed)
    pts = _moon_arcs(n)
    if noise_std > 0:
        pts = pts + rng.normal(0.0, noise_std, pts.shape)
    pts = pts[rng.permutation(n)]
    center = np.array([0.5, 0.25])
    pts = pts - center
    scale = max(1.5, float(np.max(np.abs(pts))))
    return TwoMoonsSet(pts / scale, n, noise_std, seed, (0.5, 0.25), scale)


@dataclass
class TrainConfig:
    """Training setup. The default 3-bit grid is 4 x 2 levels on a 2-D latent."""

    mode: str = "st"
    grid: QuantizerGrid = field(default_factory=lambda: grid_from_levels((4, 2)))
    learning_rate: float = 1e-3
    steps: int = 10000
    batch_size: int = 256
    seed: int = 0
    hidden: tuple = (32, 32)
    optimizer: str = "adam"
    cosine_decay: bool = True
    log_every: int = 100

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")


def forward(enc: MlpNetwork, grid: QuantizerGrid, dec: MlpNetwork, x, mode: str = "eval",
            noise=None, seed=None):
    """Encoder -> tanh latent -> quantizer block -> decoder.

    ``mode`` is ``"st"`` (hard quantization, identity backward), ``"noise"``
    (additive uniform noise, training only) or ``"eval"`` (hard
    quantization). In noise mode pass either ``noise`` explicitly or a ``seed``.
    """
    if enc.out_dim != grid.dims or dec.in_dim != grid.dims:
        raise ValueError("encoder output / decoder input must match the grid dimension")
    z, enc_cache = enc.forward(x)
    if mode in ("st", "eval"):
        zq = dequantize(grid, quantize(grid, z))
    elif mode == "noise":
        if noise is None:
            noise = uniform_noise(grid, z.shape[:-1], seed)
        zq = z + noise
    else:
        raise ValueError(f"unknown mode {mode!r}")
    xhat, dec_cache = dec.forward(zq)
    return xhat, {"enc": enc_cache, "dec": dec_cache, "z": z, "zq": zq}


def loss_and_grads(enc, grid, dec, x, mode, noise=None, seed=None):
    """Mean squared error over all batch elements and its parameter gradients."""
    x = np.asarray(x, dtype=np.float64)
    xhat, cache = forward(enc, grid, dec, x, mode, noise=noise, seed=seed)
    diff = xhat - x
    mse = float(np.mean(diff ** 2))
    g = 2.0 * diff / diff.size
    g_zq, dec_grads = dec.backward(cache["dec"], g)
    # quantizer block: identity for ST and for the noise addition
    _, enc_grads = enc.backward(cache["enc"], g_zq)
    return mse, enc_grads, dec_grads


def backward_step(enc, dec, grid, batch, config: TrainConfig, noise=None, seed=None):
    """One plain gradient-descent step; returns ``(enc, dec, batch_mse)``."""
    mse, g_enc, g_dec = loss_and_grads(enc, grid, dec, batch, config.mode, noise=noise, seed=seed)
    for g in g_enc + g_dec:
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient (batch mse={mse})", (enc, dec))
    if not math.isfinite(mse):
        raise TrainingDiverged("non-finite loss", (enc, dec))
    lr = config.learning_rate
    return enc.apply_update(g_enc, lr), dec.apply_update(g_dec, lr), mse


class Adam:
    """Adam moments for a flat parameter list (encoder params, then decoder params)."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = None
        self.v = None
        self.t = 0

    def directions(self, grads):
        if self.m is None:
            self.m = [np.zeros_like(g) for g in grads]
            self.v = [np.zeros_like(g) for g in grads]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        out = []
        for m, v, g in zip(self.m, self.v, grads):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            out.append(m_hat / (np.sqrt(v_hat) + self.eps))
        return out


def _learning_rate(config: TrainConfig, step: int) -> float:
    if not config.cosine_decay:
        return config.learning_rate
    return config.learning_rate * 0.5 * (1.0 + math.cos(math.pi * step / config.steps))


def evaluate_mse(enc, grid, dec, data) -> float:
    xhat, _ = forward(enc, grid, dec, data, "eval")
    return float(np.mean((xhat - data) ** 2))


def cell_utilization(enc, grid, data) -> float:
    z, _ = enc.forward(data)
    cells = np.unique(grid.flat_index(quantize(grid, z)))
    return cells.size / grid.num_cells


@dataclass
class TrainResult:
    encoder: MlpNetwork
    decoder: MlpNetwork
    history: list
    utilization: float
    final_mse: float
    initial_mse: float


def train_psq(config: TrainConfig, data, init=None) -> TrainResult:
    """Minibatch training on the reconstruction MSE (Adam or plain descent).

    ``history`` holds ``(step, eval_mse)`` pairs every ``log_every`` steps plus
    the final step; eval MSE always uses hard quantization.
    """
    data = np.asarray(getattr(data, "points", data), dtype=np.float64)
    rng = make_rng(config.seed)
    if init is None:
        enc, dec = init_psq(config.grid.dims, config.hidden, data.shape[1], rng)
    else:
        enc, dec = init[0].copy(), init[1].copy()
    initial = evaluate_mse(enc, config.grid, dec, data)
    history = [(0, initial)]
    bs = min(config.batch_size, len(data))
    adam = Adam() if config.optimizer == "adam" else None
    n_enc = len(enc.parameters())
    for step in range(1, config.steps + 1):
        batch = data[rng.integers(0, len(data), bs)]
        mse, g_enc, g_dec = loss_and_grads(enc, config.grid, dec, batch, config.mode, seed=rng)
        grads = g_enc + g_dec
        if not math.isfinite(mse) or not all(np.all(np.isfinite(g)) for g in grads):
            raise TrainingDiverged(f"non-finite loss or gradient at step {step}",
                                   (enc, dec, history))
        if adam is not None:
            grads = adam.directions(grads)
        lr = _learning_rate(config, step - 1)
        enc = enc.apply_update(grads[:n_enc], lr)
        dec = dec.apply_update(grads[n_enc:], lr)
        if step % config.log_every == 0 or step == config.steps:
            history.append((step, evaluate_mse(enc, config.grid, dec, data)))
    return TrainResult(enc, dec, history, cell_utilization(enc, config.grid, data),
                       history[-1][1], initial)


def effective_codebook(dec: MlpNetwork, grid: QuantizerGrid) -> np.ndarray:
    """Decoder image of every grid cell, ordered by flat cell index."""
    out, _ = dec.forward(dequantize(grid, grid.cell_indices()))
    return out


def pixel_centers(resolution: int) -> np.ndarray:
    return -1.0 + (np.arange(resolution) + 0.5) * (2.0 / resolution)


def decision_regions(enc, dec, grid, resolution: int = 256):
    """Rasterize ``[-1, 1]^2`` into flat cell indices.

    Row 0 is the top edge (y = +1), column 0 the left edge (x = -1). Returns
    the raster and a dict mapping each occupied cell to its decoded codepoint.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    c = pixel_centers(resolution)
    xx, yy = np.meshgrid(c, c[::-1])
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    z, _ = enc.forward(pts)
    raster = grid.flat_index(quantize(grid, z)).reshape(resolution, resolution)
    book = effective_codebook(dec, grid)
    occupied = np.unique(raster)
    return raster, {int(k): book[k] for k in occupied}


def direct_grid_baseline(data, total_bits: int):
    """Best axis-aligned uniform quantizer applied to the raw 2-D data.

    Searches every split of ``2**total_bits`` cells into power-of-two level
    counts per axis; each axis grid spans that axis' data range. Returns
    ``(mse, (levels_x, levels_y))``.
    """
    data = np.asarray(getattr(data, "points", data), dtype=np.float64)
    lo, hi = data.min(axis=0), data.max(axis=0)
    best = (math.inf, None)
    for bx in range(total_bits + 1):
        levels = (2 ** bx, 2 ** (total_bits - bx))
        recon = np.empty_like(data)
        for q, n in enumerate(levels):
            width = (hi[q] - lo[q]) / n
            if width == 0:
                recon[:, q] = lo[q]
                continue
            k = np.clip(np.floor((data[:, q] - lo[q]) / width), 0, n - 1)
            recon[:, q] = lo[q] + (k + 0.5) * width
        mse = float(np.mean((recon - data) ** 2))
        if mse < best[0]:
            best = (mse, levels)
    return best
