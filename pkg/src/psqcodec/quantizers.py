"""Uniform scalar quantization on the [-1, 1] hypercube.

A grid holds an integer level count per latent dimension. Even level counts
give a mid-rise quantizer with reconstruction levels ``(i + 0.5) * step`` and
indices in ``[-levels/2, levels/2 - 1]``; odd counts (only reachable through
:func:`grid_from_levels`) give the mid-tread variant ``i * step``. In both cases
``step = 2 / levels`` so the cells tile ``[-1, 1]`` exactly.

Random draws use a Philox counter-based generator seeded per call, so the
transmitter and receiver of a dithered quantizer regenerate identical noise
from a shared integer seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "QuantizerGrid",
    "make_grid",
    "grid_from_levels",
    "make_rng",
    "quantize",
    "dequantize",
    "uniform_noise",
    "noise_surrogate",
    "dithered_quantize",
    "dithered_reconstruct",
    "st_apply",
]


def make_rng(seed) -> np.random.Generator:
    """Return a Philox-backed generator; an existing Generator passes through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class QuantizerGrid:
    levels: tuple[int, ...]

    def __post_init__(self):
        levels = tuple(int(n) for n in self.levels)
        if len(levels) == 0:
            raise ValueError("grid needs at least one dimension")
        if any(n < 2 for n in levels):
            raise ValueError(f"every dimension needs at least 2 levels, got {levels}")
        object.__setattr__(self, "levels", levels)

    @property
    def dims(self) -> int:
        return len(self.levels)

    @property
    def level_counts(self) -> np.ndarray:
        return np.asarray(self.levels, dtype=np.int64)

    @property
    def step(self) -> np.ndarray:
        return 2.0 / self.level_counts

    @property
    def index_min(self) -> np.ndarray:
        return -(self.level_counts // 2)

    @property
    def index_max(self) -> np.ndarray:
        return self.index_min + self.level_counts - 1

    @property
    def _offset(self) -> np.ndarray:
        # 0.5 for mid-rise (even), 0 for mid-tread (odd)
        return np.where(self.level_counts % 2 == 0, 0.5, 0.0)

    @property
    def is_uniform(self) -> bool:
        return len(set(self.levels)) == 1

    @property
    def delta(self) -> float:
        """Scalar step size; only defined when all dimensions share a level count."""
        if not self.is_uniform:
            raise ValueError("delta is ambiguous for a grid with mixed level counts")
        return 2.0 / self.levels[0]

    @property
    def bits_per_dim(self) -> np.ndarray:
        return np.log2(self.level_counts)

    @property
    def total_bits(self) -> float:
        return float(np.sum(self.bits_per_dim))

    @property
    def num_cells(self) -> int:
        return int(np.prod(self.level_counts, dtype=object))

    def reconstruction_levels(self, dim: int = 0) -> np.ndarray:
        i = np.arange(self.index_min[dim], self.index_max[dim] + 1)
        return (i + self._offset[dim]) * self.step[dim]

    def to_symbols(self, indices) -> np.ndarray:
        """Shift signed indices to non-negative symbols ``0 .. levels-1``."""
        return np.asarray(indices, dtype=np.int64) - self.index_min

    def from_symbols(self, symbols) -> np.ndarray:
        return np.asarray(symbols, dtype=np.int64) + self.index_min

    def flat_index(self, indices) -> np.ndarray:
        """Mixed-radix cell number of each index vector (first dim most significant)."""
        sym = self.to_symbols(indices)
        flat = np.zeros(sym.shape[:-1], dtype=np.int64)
        for q, n in enumerate(self.levels):
            flat = flat * n + sym[..., q]
        return flat

    def cell_indices(self) -> np.ndarray:
        """Every index vector of the grid, ordered by :meth:`flat_index`."""
        axes = [np.arange(lo, hi + 1) for lo, hi in zip(self.index_min, self.index_max)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def make_grid(bits_per_dim: int, dims: int) -> QuantizerGrid:
    """Symmetric mid-rise grid with ``2**bits_per_dim`` levels on each of ``dims`` axes."""
    if int(bits_per_dim) != bits_per_dim or bits_per_dim < 1:
        raise ValueError(f"bits_per_dim must be a positive integer, got {bits_per_dim}")
    if int(dims) != dims or dims < 1:
        raise ValueError(f"dims must be a positive integer, got {dims}")
    return QuantizerGrid((2 ** int(bits_per_dim),) * int(dims))


def grid_from_levels(levels) -> QuantizerGrid:
    return QuantizerGrid(tuple(levels))


def _as_latent(grid: QuantizerGrid, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 0 or z.shape[-1] != grid.dims:
        raise ValueError(f"expected trailing dimension {grid.dims}, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("latent contains non-finite values")
    return z


def quantize(grid: QuantizerGrid, z) -> np.ndarray:
    """Map latents of shape ``(..., Q)`` to clamped integer indices."""
    z = _as_latent(grid, z)
    i = np.floor(z / grid.step + (0.5 - grid._offset))
    return np.clip(i, grid.index_min, grid.index_max).astype(np.int64)


def dequantize(grid: QuantizerGrid, k) -> np.ndarray:
    k = np.asarray(k)
    if k.ndim == 0 or k.shape[-1] != grid.dims:
        raise ValueError(f"expected trailing dimension {grid.dims}, got shape {k.shape}")
    if not np.issubdtype(k.dtype, np.integer):
        if not np.all(k == np.round(k)):
            raise ValueError("indices must be integers")
        k = k.astype(np.int64)
    if np.any(k < grid.index_min) or np.any(k > grid.index_max):
        raise ValueError("index outside the grid range")
    return (k + grid._offset) * grid.step


def uniform_noise(grid: QuantizerGrid, shape, seed) -> np.ndarray:
    """I.i.d. noise on ``[-step/2, step/2)`` per dimension."""
    rng = make_rng(seed)
    u = rng.random(tuple(shape) + (grid.dims,))
    n = (u - 0.5) * grid.step
    # keep the upper bound open even if the product rounds up
    half = grid.step / 2
    return np.where(n >= half, np.nextafter(half, 0.0), n)


def noise_surrogate(grid: QuantizerGrid, z, seed) -> np.ndarray:
    """Training-time stand-in for quantization: ``z + n`` with uniform ``n``.

    The result is not clamped to [-1, 1].
    """
    z = _as_latent(grid, z)
    return z + uniform_noise(grid, z.shape[:-1], seed)


def dithered_quantize(grid: QuantizerGrid, z, seed, dither=None):
    """Quantize ``z + dither`` and return ``(indices, dither)``.

    ``dither`` defaults to uniform noise drawn from ``seed``; passing an array
    overrides it (zeros reduce this to plain quantization).
    """
    z = _as_latent(grid, z)
    if dither is None:
        dither = uniform_noise(grid, z.shape[:-1], seed)
    else:
        dither = np.broadcast_to(np.asarray(dither, dtype=np.float64), z.shape)
    return quantize(grid, z + dither), dither


def dithered_reconstruct(grid: QuantizerGrid, k, seed=None, dither=None) -> np.ndarray:
    """Receiver side: regenerate the dither from ``seed`` and subtract it."""
    k = np.asarray(k)
    if dither is None:
        if seed is None:
            raise ValueError("need either the shared seed or the dither itself")
        dither = uniform_noise(grid, k.shape[:-1], seed)
    return dequantize(grid, k) - dither


def _identity(upstream):
    return upstream


def st_apply(grid: QuantizerGrid, z) -> tuple[np.ndarray, Callable]:
    """Hard round trip in the forward pass, identity in the backward pass.

    Returns the quantized value and the backward map, which hands the
    upstream gradient through unchanged.
    """
    return dequantize(grid, quantize(grid, z)), _identity
