"""Statistics behind the quantizer analysis: latent decorrelation, the Tikhonov
identity of noisy linear autoencoders, the constant prior-matching KL, a
two-sample KS test and SNR."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quantizers import make_rng

PERFECT_SNR = math.inf


@dataclass
class CorrelationReport:
    rho_temporal: float
    rho_channel: float


@dataclass
class AvgCorr:
    value: float
    skipped_rows: int


def _avg_offdiag_corr(x: np.ndarray) -> AvgCorr:
    """Mean |correlation coefficient| over distinct row pairs of ``x`` (rows x samples)."""
    if x.shape[0] < 2 or x.shape[1] < 2:
        raise ValueError("need at least two rows and two samples")
    xc = x - x.mean(axis=1, keepdims=True)
    cov = xc @ xc.T / (x.shape[1] - 1)
    var = np.diag(cov).copy()
    ok = var > 1e-12 * max(float(var.max()), 1e-300)
    skipped = int(np.sum(~ok))
    c = cov[np.ix_(ok, ok)]
    sd = np.sqrt(np.diag(c))
    r = np.abs(c / np.outer(sd, sd))
    m = r.shape[0]
    if m < 2:
        return AvgCorr(math.nan, skipped)
    off = r.sum() - np.trace(r)
    return AvgCorr(float(min(off / (m * (m - 1)), 1.0)), skipped)


def avg_corr(seq, axis: str = "channel", with_skipped: bool = False):
    """Average absolute off-diagonal correlation of a ``channels x frames`` matrix.

    ``axis="channel"`` correlates latent dimensions with each other (each row
    centered over frames); ``axis="temporal"`` correlates frames with each
    other (each column centered over channels). Rows with zero variance are
    left out; ``with_skipped=True`` also returns how many were dropped.
    """
    y = np.asarray(seq, dtype=np.float64)
    if y.ndim != 2:
        raise ValueError("expected a 2-D channels x frames matrix")
    if not np.all(np.isfinite(y)):
        raise ValueError("sequence contains non-finite values")
    if axis == "channel":
        res = _avg_offdiag_corr(y)
    elif axis == "temporal":
        res = _avg_offdiag_corr(y.T)
    else:
        raise ValueError(f"axis must be 'channel' or 'temporal', got {axis!r}")
    return (res.value, res.skipped_rows) if with_skipped else res.value


def correlation_report(seq) -> CorrelationReport:
    return CorrelationReport(avg_corr(seq, "temporal"), avg_corr(seq, "channel"))


@dataclass
class Pca:
    mean: np.ndarray
    components: np.ndarray  # (Q, d), rows are principal directions
    variances: np.ndarray

    def project(self, y):
        """``(d, N)`` frames -> ``(Q, N)`` coefficients."""
        return self.components @ (np.asarray(y) - self.mean[:, None])

    def reconstruct(self, z):
        return self.components.T @ np.asarray(z) + self.mean[:, None]


def pca_fit(y, n_components: int) -> Pca:
    """Principal axes of a ``d x N`` frame matrix (columns are frames)."""
    y = np.asarray(y, dtype=np.float64)
    if not 1 <= n_components <= y.shape[0]:
        raise ValueError(f"n_components must lie in [1, {y.shape[0]}]")
    mean = y.mean(axis=1)
    yc = y - mean[:, None]
    u, s, _ = np.linalg.svd(yc, full_matrices=False)
    # sign convention: largest-magnitude entry of each component is positive
    signs = np.sign(u[np.argmax(np.abs(u), axis=0), np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    u = u * signs
    var = s ** 2 / max(y.shape[1] - 1, 1)
    return Pca(mean, u[:, :n_components].T.copy(), var[:n_components])


@dataclass
class TikhonovCheck:
    mc_lhs: float
    analytic_rhs: float
    rel_gap: float


def tikhonov_check(E, D, delta: float, n_samples: int, seed, chunk: int = 200_000) -> TikhonovCheck:
    """Monte-Carlo ``E||D(Ez + n) - z||^2`` vs ``||DE - I||_F^2 + sigma^2 ||D||_F^2``.

    ``z`` is standard normal in ``R^d`` and ``n`` uniform on
    ``[-delta/2, delta/2)^Q`` with ``sigma^2 = delta^2 / 12``.
    """
    E = np.atleast_2d(np.asarray(E, dtype=np.float64))
    D = np.atleast_2d(np.asarray(D, dtype=np.float64))
    q, d = E.shape
    if D.shape != (d, q):
        raise ValueError(f"decoder must be {d}x{q} for a {q}x{d} encoder, got {D.shape}")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = make_rng(seed)
    total = 0.0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        z = rng.standard_normal((m, d))
        n = (rng.random((m, q)) - 0.5) * delta
        err = (z @ E.T + n) @ D.T - z
        total += float(np.einsum("ij,ij->", err, err))
        done += m
    mc = total / n_samples
    sigma2 = delta ** 2 / 12.0
    analytic = float(np.sum((D @ E - np.eye(d)) ** 2) + sigma2 * np.sum(D ** 2))
    gap = abs(mc - analytic) / analytic if analytic else abs(mc)
    return TikhonovCheck(mc, analytic, gap)


def uniform_kl(delta: float, dims: int) -> float:
    """KL between a uniform cell of side ``delta`` inside [-1, 1]^Q and the uniform
    distribution on the whole hypercube: ``Q * log(2 / delta)``."""
    if not 0 < delta <= 2:
        raise ValueError(f"delta must lie in (0, 2], got {delta}")
    if dims < 1:
        raise ValueError("dims must be >= 1")
    return dims * math.log(2.0 / delta)


@dataclass
class KsResult:
    statistic: float
    critical: float
    alpha: float

    @property
    def passed(self) -> bool:
        return self.statistic <= self.critical


def ks_critical(n: int, m: int, alpha: float) -> float:
    """Asymptotic two-sample Kolmogorov-Smirnov critical value."""
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    return c * math.sqrt((n + m) / (n * m))


def ks_two_sample(a, b, alpha: float = 0.01) -> KsResult:
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    stat = float(np.max(np.abs(cdf_a - cdf_b)))
    return KsResult(stat, ks_critical(a.size, b.size, alpha), alpha)


def quant_snr(reference, degraded) -> float:
    """``10 log10(||x||^2 / ||x - y||^2)`` in dB; identical signals give ``inf``."""
    x = np.asarray(reference, dtype=np.float64)
    y = np.asarray(degraded, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("signals must have equal length")
    sig = float(np.sum(x ** 2))
    if sig == 0:
        raise ValueError("reference signal is all zeros")
    err = float(np.sum((x - y) ** 2))
    if err == 0:
        return PERFECT_SNR
    return 10.0 * math.log10(sig / err)
