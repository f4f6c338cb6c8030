"""Vector quantization baseline: codebook search, EMA k-means and residual VQ."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .quantizers import make_rng

CODEBOOK_MAGIC = b"NSCB"
_CODEBOOK_HEADER = struct.Struct("<4sIIdd")


@dataclass
class Codebook:
    vectors: np.ndarray
    ema_counts: np.ndarray = None
    ema_sums: np.ndarray = None
    decay: float = 0.99
    epsilon: float = 1e-5

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=np.float64))
        if self.vectors.size == 0:
            raise ValueError("codebook must hold at least one vector")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("codebook entries must be finite")
        if self.ema_counts is None:
            self.ema_counts = np.ones(self.size)
        if self.ema_sums is None:
            self.ema_sums = self.vectors.copy()
        self.ema_counts = np.asarray(self.ema_counts, dtype=np.float64)
        self.ema_sums = np.asarray(self.ema_sums, dtype=np.float64)
        if self.ema_counts.shape != (self.size,) or self.ema_sums.shape != self.vectors.shape:
            raise ValueError("EMA statistics do not match the codebook shape")
        if np.any(self.ema_counts < 0):
            raise ValueError("EMA counts must be non-negative")
        if not 0.0 <= self.decay <= 1.0:
            raise ValueError(f"decay must lie in [0, 1], got {self.decay}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def bits(self) -> int:
        return math.ceil(math.log2(self.size)) if self.size > 1 else 0

    def to_bytes(self) -> bytes:
        """Little-endian dump: header, then vectors, counts and sums as float64."""
        head = _CODEBOOK_HEADER.pack(CODEBOOK_MAGIC, self.dim, self.size, self.decay, self.epsilon)
        body = np.concatenate([self.vectors.ravel(), self.ema_counts, self.ema_sums.ravel()])
        return head + body.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Codebook":
        if len(data) < _CODEBOOK_HEADER.size:
            raise ValueError("truncated codebook header")
        magic, d, L, decay, eps = _CODEBOOK_HEADER.unpack_from(data)
        if magic != CODEBOOK_MAGIC:
            raise ValueError(f"bad codebook magic {magic!r}")
        n = L * d * 2 + L
        body = np.frombuffer(data, dtype="<f8", offset=_CODEBOOK_HEADER.size)
        if body.size != n:
            raise ValueError(f"codebook body holds {body.size} floats, expected {n}")
        vectors = body[: L * d].reshape(L, d)
        counts = body[L * d : L * d + L]
        sums = body[L * d + L :].reshape(L, d)
        return cls(vectors.copy(), counts.copy(), sums.copy(), decay, eps)


@dataclass
class RvqStack:
    stages: list = field(default_factory=list)

    def __post_init__(self):
        if not self.stages:
            raise ValueError("RVQ needs at least one stage")
        dims = {cb.dim for cb in self.stages}
        if len(dims) != 1:
            raise ValueError(f"all stages must share a dimension, got {sorted(dims)}")

    @property
    def dim(self) -> int:
        return self.stages[0].dim

    @property
    def bits_per_frame(self) -> int:
        return sum(cb.bits for cb in self.stages)


def squared_distances(codebook: Codebook, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    diff = z[..., None, :] - codebook.vectors
    return np.einsum("...ld,...ld->...l", diff, diff)


def nearest(codebook: Codebook, z):
    """Index of the closest codevector; ties go to the lowest index.

    Accepts a single vector ``(d,)`` or a batch ``(N, d)``.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != codebook.dim:
        raise ValueError(f"expected dimension {codebook.dim}, got {z.shape[-1]}")
    if not np.all(np.isfinite(z)):
        raise ValueError("input contains non-finite values")
    idx = np.argmin(squared_distances(codebook, z), axis=-1)
    return int(idx) if z.ndim == 1 else idx


def vq_losses(z, zq, beta: float = 0.25):
    """Codebook and commitment terms of the VQ-VAE objective.

    Both terms evaluate to ``||z - zq||^2``; they differ only in which side
    the stop-gradient protects during training (codebook vs. encoder).
    """
    z = np.asarray(z, dtype=np.float64)
    zq = np.asarray(zq, dtype=np.float64)
    if z.shape != zq.shape:
        raise ValueError("z and zq must have the same shape")
    err = float(np.sum((z - zq) ** 2))
    return err, err, err + beta * err


def ema_update(codebook: Codebook, batch, assignments) -> Codebook:
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    assignments = np.asarray(assignments, dtype=np.int64)
    if batch.shape[1] != codebook.dim:
        raise ValueError(f"batch dimension {batch.shape[1]} != codebook dimension {codebook.dim}")
    if assignments.shape != (batch.shape[0],):
        raise ValueError("need exactly one assignment per batch row")
    if np.any(assignments < 0) or np.any(assignments >= codebook.size):
        raise ValueError("assignment outside the codebook")

    counts = np.bincount(assignments, minlength=codebook.size).astype(np.float64)
    sums = np.zeros_like(codebook.vectors)
    np.add.at(sums, assignments, batch)

    g = codebook.decay
    new_counts = g * codebook.ema_counts + (1 - g) * counts
    new_sums = g * codebook.ema_sums + (1 - g) * sums
    if g == 1.0:
        vectors = codebook.vectors.copy()
    else:
        vectors = new_sums / (new_counts + codebook.epsilon)[:, None]
    return replace(codebook, vectors=vectors, ema_counts=new_counts, ema_sums=new_sums)


def reinit_dead(codebook: Codebook, batch, count_threshold: float, seed) -> Codebook:
    """Replace codevectors whose EMA count is below threshold by batch samples."""
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[0] == 0:
        raise ValueError("batch is empty")
    dead = np.flatnonzero(codebook.ema_counts < count_threshold)
    if dead.size == 0:
        return codebook
    rng = make_rng(seed)
    replace_rows = dead.size > batch.shape[0]
    picks = rng.choice(batch.shape[0], size=dead.size, replace=replace_rows)
    vectors = codebook.vectors.copy()
    counts = codebook.ema_counts.copy()
    sums = codebook.ema_sums.copy()
    vectors[dead] = batch[picks]
    counts[dead] = 1.0
    sums[dead] = batch[picks]
    return replace(codebook, vectors=vectors, ema_counts=counts, ema_sums=sums)


def utilization(codebook: Codebook, batch) -> float:
    used = np.unique(nearest(codebook, np.atleast_2d(batch)))
    return used.size / codebook.size


def kmeans_pp_init(batch, size: int, seed, decay: float = 0.99, epsilon: float = 1e-5) -> Codebook:
    """k-means++ seeding from a batch."""
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    rng = make_rng(seed)
    chosen = [int(rng.integers(batch.shape[0]))]
    d2 = np.sum((batch - batch[chosen[0]]) ** 2, axis=1)
    for _ in range(1, size):
        total = d2.sum()
        if total <= 0:
            nxt = int(rng.integers(batch.shape[0]))
        else:
            nxt = int(rng.choice(batch.shape[0], p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((batch - batch[nxt]) ** 2, axis=1))
    return Codebook(batch[chosen].copy(), decay=decay, epsilon=epsilon)


def train_codebook(data, size: int, seed, iterations: int = 50, decay: float = 0.99,
                   epsilon: float = 1e-5, batch_size: int | None = None,
                   dead_threshold: float | None = None) -> Codebook:
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    rng = make_rng(seed)
    cb = kmeans_pp_init(data, size, rng, decay, epsilon)
    for _ in range(iterations):
        if batch_size is None or batch_size >= len(data):
            batch = data
        else:
            batch = data[rng.choice(len(data), size=batch_size, replace=False)]
        cb = ema_update(cb, batch, nearest(cb, batch))
        if dead_threshold is not None:
            cb = reinit_dead(cb, batch, dead_threshold, rng)
    return cb


def rvq_encode(stack: RvqStack, z) -> list[int]:
    r = np.asarray(z, dtype=np.float64)
    if r.shape != (stack.dim,):
        raise ValueError(f"expected a vector of length {stack.dim}")
    out = []
    for cb in stack.stages:
        k = nearest(cb, r)
        out.append(k)
        r = r - cb.vectors[k]
    return out


def rvq_decode(stack: RvqStack, indices, n_stages: int | None = None) -> np.ndarray:
    """Sum the selected codevectors, optionally truncated to the first stages."""
    if len(indices) != len(stack.stages):
        raise ValueError(f"need {len(stack.stages)} indices, got {len(indices)}")
    n = len(stack.stages) if n_stages is None else n_stages
    out = np.zeros(stack.dim)
    for cb, k in zip(stack.stages[:n], indices[:n]):
        if not 0 <= k < cb.size:
            raise ValueError(f"index {k} outside stage codebook of size {cb.size}")
        out = out + cb.vectors[k]
    return out


def stagewise_errors(stack: RvqStack, z) -> np.ndarray:
    """Squared reconstruction error after decoding 0, 1, ..., Q stages."""
    z = np.asarray(z, dtype=np.float64)
    k = rvq_encode(stack, z)
    return np.array([np.sum((z - rvq_decode(stack, k, q)) ** 2)
                     for q in range(len(stack.stages) + 1)])


def random_rvq_stack(dim: int, stages: int, size: int, seed, scale_decay: float = 0.5,
                     include_zero: bool = True) -> RvqStack:
    """Random Gaussian stage codebooks with shrinking scale.

    With ``include_zero`` the first codevector of every stage is the origin,
    which makes each stage's error no larger than its input residual.
    """
    rng = make_rng(seed)
    books = []
    for q in range(stages):
        vecs = rng.standard_normal((size, dim)) * scale_decay ** q
        if include_zero:
            vecs[0] = 0.0
        books.append(Codebook(vecs))
    return RvqStack(books)


def train_rvq(data, stages: int, size: int, seed, iterations: int = 50,
              include_zero: bool = True, **kwargs) -> RvqStack:
    """Greedy stage-by-stage EMA k-means on the running residual."""
    rng = make_rng(seed)
    residual = np.atleast_2d(np.asarray(data, dtype=np.float64)).copy()
    books = []
    for _ in range(stages):
        n_learned = size - 1 if include_zero else size
        cb = train_codebook(residual, n_learned, rng, iterations, **kwargs)
        if include_zero:
            cb = Codebook(np.vstack([np.zeros(cb.dim), cb.vectors]),
                          np.concatenate([[1.0], cb.ema_counts]),
                          np.vstack([np.zeros(cb.dim), cb.ema_sums]),
                          cb.decay, cb.epsilon)
        residual = residual - cb.vectors[nearest(cb, residual)]
        books.append(cb)
    return RvqStack(books)
