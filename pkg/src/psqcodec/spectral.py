"""STFT analysis/synthesis with power-law magnitude compression, plus codec losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

MAG_FLOOR = 1e-7


@dataclass(frozen=True)
class StftConfig:
    window_len: int = 320
    hop: int = 160
    fft_len: int = 512
    sample_rate: int = 16000
    alpha: float = 0.3

    def __post_init__(self):
        if not 0 < self.hop <= self.window_len <= self.fft_len:
            raise ValueError("need 0 < hop <= window_len <= fft_len")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    @property
    def n_bins(self) -> int:
        return self.fft_len // 2 + 1

    @property
    def window(self) -> np.ndarray:
        return get_window("hann", self.window_len, fftbins=True)

    def n_frames(self, n_samples: int) -> int:
        return 1 + (n_samples - self.window_len) // self.hop


DEFAULT_RESOLUTIONS = (
    StftConfig(window_len=320, hop=160, fft_len=512),
    StftConfig(window_len=640, hop=320, fft_len=1024),
    StftConfig(window_len=160, hop=80, fft_len=256),
)


@dataclass
class Spectrogram:
    values: np.ndarray
    config: StftConfig

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.ndim != 2 or self.values.shape[0] != self.config.n_bins:
            raise ValueError(f"expected {self.config.n_bins} bins, got shape {self.values.shape}")

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


def frames(signal, config: StftConfig) -> np.ndarray:
    """Windowed frames, shape ``(N, window_len)``."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("signal must be one-dimensional")
    if len(x) < config.window_len:
        raise ValueError(f"signal has {len(x)} samples, needs at least {config.window_len}")
    n = config.n_frames(len(x))
    idx = np.arange(config.window_len)[None, :] + config.hop * np.arange(n)[:, None]
    return x[idx] * config.window


def stft(signal, config: StftConfig = StftConfig()) -> Spectrogram:
    """One-sided STFT with frames zero-padded to ``fft_len``; shape ``(F, N)``."""
    return Spectrogram(np.fft.rfft(frames(signal, config), n=config.fft_len, axis=1).T, config)


def istft(spec: Spectrogram, config: StftConfig | None = None) -> np.ndarray:
    """Weighted overlap-add inverse normalized by the summed squared window.

    Output length is ``(N - 1) * hop + window_len``. Samples where the summed
    squared window vanishes are set to zero.
    """
    config = spec.config if config is None else config
    if spec.values.shape[0] != config.n_bins:
        raise ValueError("spectrogram does not match the configuration")
    n = spec.n_frames
    w = config.window
    blocks = np.fft.irfft(spec.values.T, n=config.fft_len, axis=1)[:, : config.window_len]
    length = (n - 1) * config.hop + config.window_len
    out = np.zeros(length)
    norm = np.zeros(length)
    for m in range(n):
        sl = slice(m * config.hop, m * config.hop + config.window_len)
        out[sl] += blocks[m] * w
        norm[sl] += w * w
    good = norm > 1e-10
    out[good] /= norm[good]
    out[~good] = 0.0
    return out


def compress(spec: Spectrogram, alpha: float | None = None) -> Spectrogram:
    """``|X|^alpha * exp(j angle X)``; zero bins stay zero."""
    return Spectrogram(_power_law(spec.values, spec.config.alpha if alpha is None else alpha),
                       spec.config)


def expand(spec: Spectrogram, alpha: float | None = None) -> Spectrogram:
    a = spec.config.alpha if alpha is None else alpha
    return Spectrogram(_power_law(spec.values, 1.0 / a), spec.config)


def _power_law(values, exponent):
    if exponent <= 0:
        raise ValueError("exponent must be positive")
    mag = np.abs(values)
    scale = np.zeros_like(mag)
    nz = mag > 0
    scale[nz] = mag[nz] ** (exponent - 1.0)
    return values * scale


def stack_reim(spec) -> np.ndarray:
    v = spec.values if isinstance(spec, Spectrogram) else np.asarray(spec)
    return np.concatenate([v.real, v.imag], axis=0)


def unstack_reim(stacked, config: StftConfig | None = None):
    stacked = np.asarray(stacked, dtype=np.float64)
    if stacked.shape[0] % 2:
        raise ValueError("stacked matrix needs an even number of rows")
    f = stacked.shape[0] // 2
    values = stacked[:f] + 1j * stacked[f:]
    return values if config is None else Spectrogram(values, config)


def rec_loss(x, x_hat, resolutions=DEFAULT_RESOLUTIONS):
    """Multi-resolution spectral reconstruction loss.

    Each resolution adds the relative Frobenius error and the summed absolute
    log-magnitude error (magnitudes floored at ``MAG_FLOOR``). Returns the
    resolution average and a per-resolution list of ``(rel_mse, log_mag)``.
    """
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError("signals must have equal length")
    breakdown = []
    for cfg in resolutions:
        s = stft(x, cfg).values
        s_hat = stft(x_hat, cfg).values
        ref = np.linalg.norm(s)
        if ref == 0:
            raise ZeroDivisionError("reference spectrogram has zero Frobenius norm")
        rel = float(np.linalg.norm(s - s_hat) / ref)
        log_mag = float(np.sum(np.abs(np.log(np.maximum(np.abs(s), MAG_FLOOR))
                                      - np.log(np.maximum(np.abs(s_hat), MAG_FLOOR)))))
        breakdown.append((rel, log_mag))
    total = sum(a + b for a, b in breakdown) / len(breakdown)
    return total, breakdown


def lsgan_losses(real_scores, fake_scores):
    """Least-squares GAN terms summed over a discriminator ensemble.

    Each list entry holds one discriminator's scores; scores are averaged
    over their elements. Returns ``(generator_loss, discriminator_loss)``.
    """
    if len(real_scores) != len(fake_scores):
        raise ValueError("real and fake score lists must have equal length")
    gen = sum(float(np.mean((np.asarray(f, dtype=float) - 1.0) ** 2)) for f in fake_scores)
    disc = sum(float(np.mean((np.asarray(r, dtype=float) - 1.0) ** 2))
               + float(np.mean(np.asarray(f, dtype=float) ** 2))
               for r, f in zip(real_scores, fake_scores))
    return gen, disc


def feature_matching_loss(real_feats, fake_feats) -> float:
    """``1/(K J) * sum_k sum_j ||real_kj - fake_kj||_{1,1}``.

    ``real_feats[k][j]`` is the j-th intermediate feature map of the k-th
    discriminator.
    """
    if len(real_feats) != len(fake_feats) or not real_feats:
        raise ValueError("need the same non-zero number of discriminators on both sides")
    n_layers = len(real_feats[0])
    total = 0.0
    for rk, fk in zip(real_feats, fake_feats):
        if len(rk) != n_layers or len(fk) != n_layers:
            raise ValueError("every discriminator must expose the same number of features")
        for r, f in zip(rk, fk):
            r = np.asarray(r, dtype=float)
            f = np.asarray(f, dtype=float)
            if r.shape != f.shape:
                raise ValueError(f"feature shapes differ: {r.shape} vs {f.shape}")
            total += float(np.sum(np.abs(r - f)))
    return total / (len(real_feats) * n_layers)


def combine_gen_loss(rec, adv, feat, lambda_rec=1.0, lambda_adv=1.0, lambda_feat=10.0) -> float:
    if min(lambda_rec, lambda_adv, lambda_feat) < 0:
        raise ValueError("loss weights must be non-negative")
    return lambda_rec * rec + lambda_adv * adv + lambda_feat * feat


def frame_energy(spec: Spectrogram) -> np.ndarray:
    """Per-frame time-domain energy recovered from the one-sided spectrum."""
    p = np.abs(spec.values) ** 2
    n = spec.config.fft_len
    weights = np.full(p.shape[0], 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    return (weights[:, None] * p).sum(axis=0) / n
