"""Toy end-to-end codec: compressed STFT -> PCA projection -> tanh -> scalar
quantization -> constant-bitrate packet, and back.

PCA is a linear stand-in for the trained encoder/decoder. It is fitted per
signal and travels as side information that the bit budget does not count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import Pca, pca_fit, quant_snr
from .bitstream import BitBudget, BitstreamPacket, pack, unpack
from .quantizers import QuantizerGrid, dequantize, grid_from_levels, quantize
from .spectral import StftConfig, compress, expand, istft, stack_reim, stft, unstack_reim


@dataclass
class SideInfo:
    pca: Pca
    scale: np.ndarray
    group: int
    n_stft_frames: int
    n_samples: int
    stft: StftConfig

    def to_npz(self, path) -> None:
        cfg = self.stft
        np.savez(path, mean=self.pca.mean, components=self.pca.components,
                 variances=self.pca.variances, scale=self.scale,
                 shape=np.array([self.group, self.n_stft_frames, self.n_samples]),
                 stft=np.array([cfg.window_len, cfg.hop, cfg.fft_len, cfg.sample_rate]),
                 alpha=np.array([cfg.alpha]))

    @classmethod
    def from_npz(cls, path) -> "SideInfo":
        with np.load(path) as f:
            w, h, n, sr = (int(v) for v in f["stft"])
            g, frames, samples = (int(v) for v in f["shape"])
            return cls(Pca(f["mean"], f["components"], f["variances"]), f["scale"], g, frames,
                       samples, StftConfig(w, h, n, sr, float(f["alpha"][0])))


@dataclass
class CodecResult:
    packet: BitstreamPacket
    side: SideInfo
    decoded: np.ndarray
    snr_db: float
    bits_per_frame: int


def make_budget(bitrate_bps: float, frame_s: float, dims: int,
                bits_per_dim: int | None = None) -> BitBudget:
    """Budget from a bitrate, or a fixed ``bits_per_dim`` on every dimension."""
    if bits_per_dim is None:
        return BitBudget.from_rate(bitrate_bps, frame_s, dims)
    if bits_per_dim < 1:
        raise ValueError("bits_per_dim must be >= 1")
    return BitBudget(dims * bits_per_dim / frame_s, frame_s, (2 ** bits_per_dim,) * dims,
                     dims * bits_per_dim)


def _latent_frames(signal, config: StftConfig, group: int):
    # one window of zeros on each side keeps every real sample where the
    # overlap-add normalizer is well away from zero
    pad = np.zeros(config.window_len)
    spec = compress(stft(np.concatenate([pad, signal, pad]), config))
    x = stack_reim(spec)  # (2F, N)
    n = x.shape[1]
    pad = (-n) % group
    if pad:
        x = np.hstack([x, np.zeros((x.shape[0], pad))])
    # stack `group` consecutive STFT frames into one codec frame
    y = x.T.reshape(-1, group * x.shape[0]).T
    return y, n


def _from_latent_frames(y, side: SideInfo) -> np.ndarray:
    rows = y.shape[0] // side.group
    x = y.T.reshape(-1, rows).T[:, : side.n_stft_frames]
    spec = expand(unstack_reim(x, side.stft))
    out = istft(spec)[side.stft.window_len:]
    if len(out) < side.n_samples:
        out = np.concatenate([out, np.zeros(side.n_samples - len(out))])
    return out[: side.n_samples]


def encode(signal, budget: BitBudget, config: StftConfig = StftConfig(),
           squash: float = 2.5):
    """Return ``(packet, side_info)``."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1 or len(signal) < config.window_len:
        raise ValueError(f"need a mono signal of at least {config.window_len} samples")
    group = max(1, int(round(budget.frame_duration_s * config.sample_rate / config.hop)))
    y, n_stft = _latent_frames(signal, config, group)
    dims = budget.dims
    if y.shape[1] < 2:
        raise ValueError("signal too short for a projection fit")
    pca = pca_fit(y, min(dims, y.shape[0]))
    z = pca.project(y)
    if z.shape[0] < dims:
        z = np.vstack([z, np.zeros((dims - z.shape[0], z.shape[1]))])
    std = z.std(axis=1)
    scale = squash * np.where(std > 0, std, 1.0)
    zt = np.tanh(z / scale[:, None])
    grid = grid_from_levels(budget.radices)
    symbols = grid.to_symbols(quantize(grid, zt.T))
    side = SideInfo(pca, scale, group, n_stft, len(signal), config)
    return pack(symbols, budget), side


def decode(packet: BitstreamPacket, side: SideInfo) -> np.ndarray:
    grid: QuantizerGrid = grid_from_levels(packet.budget.radices)
    zq = dequantize(grid, grid.from_symbols(unpack(packet))).T
    z = np.arctanh(zq) * side.scale[:, None]
    z = z[: side.pca.components.shape[0]]
    return _from_latent_frames(side.pca.reconstruct(z), side)


def simulate(signal, budget: BitBudget, config: StftConfig = StftConfig()) -> CodecResult:
    packet, side = encode(signal, budget, config)
    out = decode(packet, side)
    return CodecResult(packet, side, out, quant_snr(signal, out), budget.bits_per_frame)
