"""Random entry masks over the upper triangle of a p-by-p matrix.

The screening algorithms never look at all variable pairs: a random subset
of upper-triangle positions is drawn, with every pair included independently
at a fixed rate. Instead of flipping p(p-1)/2 coins, the sampler generates
the sorted linear indices of the included pairs directly by accumulating
geometric-distributed gaps, so generation cost is proportional to the
number of pairs actually drawn.

Pairs are 1-based ``(i, j)`` with ``i < j`` throughout, matching the
on-disk coordinate format.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import MASK_STREAM, derive_seed, make_rng

__all__ = [
    "PairIndexMap",
    "PairSample",
    "sample_pairs",
    "split_train_validation",
    "write_pairs_csv",
    "read_pairs_csv",
]


@dataclass(frozen=True)
class PairIndexMap:
    """Bijection between upper-triangle pairs and linear ranks.

    Pairs ``(i, j)`` with ``1 <= i < j <= p`` are ordered lexicographically
    and mapped to ranks ``1 .. p(p-1)/2``.
    """

    p: int

    def __post_init__(self):
        if self.p < 2:
            raise ValueError(f"need p >= 2, got p={self.p}")

    @property
    def total(self) -> int:
        return self.p * (self.p - 1) // 2

    def rank(self, i, j):
        """Linear rank of pair ``(i, j)``; accepts scalars or arrays."""
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        if np.any(i < 1) or np.any(i >= j) or np.any(j > self.p):
            raise ValueError("pair indices must satisfy 1 <= i < j <= p")
        r = (i - 1) * (2 * self.p - i) // 2 + (j - i)
        return r if r.ndim else int(r)

    def pair(self, rank):
        """Inverse of :meth:`rank`; returns ``(i, j)`` arrays or scalars."""
        r = np.asarray(rank, dtype=np.int64)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        if np.any(r < 1) or np.any(r > self.total):
            raise ValueError("rank out of range")
        p = self.p
        # Row i occupies ranks (before(i), before(i+1)] where
        # before(i) = (i-1)(2p-i)/2; solve the quadratic and fix up the
        # float rounding with exact integer comparisons.
        disc = (2 * p + 1) ** 2 - 8 * (p + r)
        i = ((2 * p + 1) - np.sqrt(disc.astype(np.float64))) / 2.0
        i = np.floor(i).astype(np.int64)
        i = np.clip(i, 1, p - 1)

        def before(k):
            return (k - 1) * (2 * p - k) // 2

        i = np.where(before(i + 1) < r, i + 1, i)
        i = np.where(before(i) >= r, i - 1, i)
        j = i + (r - before(i))
        if scalar:
            return int(i[0]), int(j[0])
        return i, j


def sample_pairs(p: int, prob: float, seed: int) -> np.ndarray:
    """Draw upper-triangle pairs, each included independently at ``prob``.

    Uses geometric gap sampling: the gap between consecutive included
    linear indices of an independent Bernoulli process is geometric, so
    cumulative sums of geometric draws reproduce the process exactly in
    time proportional to the number of included pairs.

    Returns an ``(m, 2)`` int64 array of 1-based pairs, sorted by linear
    rank. Deterministic given ``(p, prob, seed)``.
    """
    if p < 2:
        raise ValueError(f"need p >= 2, got p={p}")
    if not 0.0 < prob <= 1.0:
        raise ValueError(f"sampling probability must be in (0, 1], got {prob}")
    index_map = PairIndexMap(p)
    total = index_map.total

    rng = make_rng(seed, MASK_STREAM)
    if prob == 1.0:
        ranks = np.arange(1, total + 1, dtype=np.int64)
    else:
        block = max(256, int(total * prob * 1.1) + 16)
        chunks = []
        running = 0
        while running <= total:
            gaps = rng.geometric(prob, size=block).astype(np.int64)
            ranks_chunk = np.cumsum(gaps) + running
            running = int(ranks_chunk[-1])
            chunks.append(ranks_chunk)
        ranks = np.concatenate(chunks)
        # A gap landing exactly on the last linear index counts as sampled.
        ranks = ranks[ranks <= total]

    i, j = index_map.pair(ranks)
    return np.column_stack([i, j])


@dataclass(frozen=True)
class PairSample:
    """A realized sampling mask split into training and validation pairs.

    Training pairs feed the screening matrix; validation pairs are held
    out to score candidate ranks. Marginally, any fixed pair lands in
    ``train_pairs`` with probability ``rho`` and in ``validation_pairs``
    with probability ``rho * tau``.
    """

    p: int
    rho: float
    tau: float
    train_pairs: np.ndarray
    validation_pairs: np.ndarray
    seed: int


def split_train_validation(p: int, rho: float, tau: float, seed: int) -> PairSample:
    """Sample pairs at rate ``(1 + tau) * rho`` and split train/validation.

    Each sampled pair is assigned to training with probability
    ``1 / (1 + tau)`` by an independent coin, so the training inclusion
    rate is exactly ``rho``. ``tau = 0`` yields an empty validation set.
    """
    if tau < 0:
        raise ValueError(f"validation proportion must be >= 0, got {tau}")
    rate = (1.0 + tau) * rho
    if not 0.0 < rate <= 1.0:
        raise ValueError(
            f"(1 + tau) * rho = {rate:.6g} is outside (0, 1]; lower rho or tau"
        )
    base = sample_pairs(p, rate, derive_seed(seed, MASK_STREAM, 0))
    coin = make_rng(seed, MASK_STREAM, 1)
    keep = coin.random(len(base)) < 1.0 / (1.0 + tau)
    return PairSample(
        p=p,
        rho=rho,
        tau=tau,
        train_pairs=base[keep],
        validation_pairs=base[~keep],
        seed=seed,
    )


def write_pairs_csv(path, pairs: np.ndarray, *, p: int, rho: float, seed: int) -> None:
    """Write a pair list as two-column CSV with a reproducibility header."""
    pairs = np.asarray(pairs, dtype=np.int64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# p={p} rho={rho!r} seed={seed}\n")
        for i, j in pairs:
            fh.write(f"{i},{j}\n")


def read_pairs_csv(path):
    """Read a pair list written by :func:`write_pairs_csv`.

    Returns ``(pairs, meta)`` where ``meta`` has keys p, rho, seed.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("# "):
            raise ValueError(f"{path}: missing '# p=... rho=... seed=...' header")
        meta = {}
        for field in header[2:].split():
            key, _, value = field.partition("=")
            meta[key] = value
        try:
            meta = {
                "p": int(meta["p"]),
                "rho": float(meta["rho"]),
                "seed": int(meta["seed"]),
            }
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{path}: malformed header: {header}") from exc
        rows = [line.split(",") for line in fh if line.strip()]
    pairs = np.array(rows, dtype=np.int64) if rows else np.empty((0, 2), dtype=np.int64)
    return pairs, meta
