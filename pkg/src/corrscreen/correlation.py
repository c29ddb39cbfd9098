"""Pairwise difference statistics between two sample groups.

For sampled variable pairs ``(i, j)`` the engine evaluates
``stat(group1; i, j) - stat(group2; i, j)`` where the statistic is a sample
covariance, a Pearson correlation, or a Spearman correlation. Each group is
prepared once (centering, scaling, optional rank transform) so that every
pair afterwards costs a single length-n dot product, evaluated in chunks
across the whole pair list.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.stats import rankdata

__all__ = [
    "STAT_KINDS",
    "ExpressionMatrix",
    "PreparedGroup",
    "SparseDifferential",
    "prepare_group",
    "pair_difference",
    "build_sparse_differential",
    "write_differential_coo",
    "read_differential_coo",
]

STAT_KINDS = ("covariance", "pearson", "spearman")

PAIR_CHUNK = 200_000  # pairs evaluated per gather; bounds transient memory


@dataclass
class ExpressionMatrix:
    """An n-samples by p-variables numeric matrix with variable names."""

    values: np.ndarray
    variable_names: list[str]
    group_label: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("expression matrix must be 2-dimensional")
        n, p = self.values.shape
        if n < 3:
            raise ValueError(f"need at least 3 samples (rows), got {n}")
        if p < 2:
            raise ValueError(f"need at least 2 variables (columns), got {p}")
        if len(self.variable_names) != p:
            raise ValueError(
                f"{len(self.variable_names)} variable names for {p} columns"
            )
        if not np.all(np.isfinite(self.values)):
            bad = np.argwhere(~np.isfinite(self.values))[0]
            raise ValueError(
                f"non-finite value at row {bad[0] + 1}, column {bad[1] + 1} "
                f"({self.variable_names[bad[1]]})"
            )

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_variables(self) -> int:
        return self.values.shape[1]


@dataclass
class PreparedGroup:
    """One group preprocessed for constant-time pair statistics.

    ``work`` holds columns scaled so the statistic for pair ``(i, j)`` is
    the plain dot product ``work[:, i] . work[:, j]``: centered / sqrt(n-1)
    for covariance, unit-norm centered (ranks for Spearman) for the
    correlation statistics. Zero-variance columns are zeroed in ``work``
    and flagged, which pins their correlations to 0 rather than NaN.
    """

    stat_kind: str
    transformed: np.ndarray
    column_means: np.ndarray
    column_sds: np.ndarray
    degenerate: np.ndarray
    work: np.ndarray = field(repr=False)

    @property
    def n_samples(self) -> int:
        return self.transformed.shape[0]

    @property
    def n_variables(self) -> int:
        return self.transformed.shape[1]


def prepare_group(x: ExpressionMatrix, stat_kind: str) -> PreparedGroup:
    """Center/scale (and for Spearman, rank-transform) one group."""
    if stat_kind not in STAT_KINDS:
        raise ValueError(f"stat_kind must be one of {STAT_KINDS}, got {stat_kind!r}")
    if stat_kind == "spearman":
        transformed = rankdata(x.values, method="average", axis=0).astype(np.float64)
    else:
        transformed = x.values

    n = transformed.shape[0]
    means = transformed.mean(axis=0)
    centered = transformed - means
    sds = np.sqrt((centered**2).sum(axis=0) / (n - 1))
    degenerate = sds == 0.0

    if stat_kind == "covariance":
        work = centered / np.sqrt(n - 1)
    else:
        norms = sds * np.sqrt(n - 1)
        safe = np.where(degenerate, 1.0, norms)
        work = centered / safe
        if degenerate.any():
            work[:, degenerate] = 0.0
    return PreparedGroup(
        stat_kind=stat_kind,
        transformed=transformed,
        column_means=means,
        column_sds=sds,
        degenerate=degenerate,
        work=work,
    )


def pair_difference(g1: PreparedGroup, g2: PreparedGroup, i: int, j: int) -> float:
    """Difference statistic for one 1-based pair ``(i, j)``."""
    if g1.stat_kind != g2.stat_kind:
        raise ValueError("groups were prepared with different statistics")
    if i == j:
        raise ValueError("pair indices must differ")
    a, b = i - 1, j - 1
    v1 = float(g1.work[:, a] @ g1.work[:, b])
    v2 = float(g2.work[:, a] @ g2.work[:, b])
    return v1 - v2


@dataclass
class SparseDifferential:
    """Rescaled difference statistics stored at sampled positions only.

    The matrix is symmetric with a zero diagonal; each unordered pair is
    stored once as ``(i, j)`` with ``i < j``, 1-based. Values are the raw
    differences divided by the sampling rate ``rho`` so their expectation
    (zeros at unsampled positions included) matches the dense difference.
    """

    p: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    rho: float
    stat_kind: str
    degenerate_vars: np.ndarray
    degenerate_pair_count: int = 0
    _rank_index: tuple | None = field(default=None, repr=False)

    @property
    def n_entries(self) -> int:
        return len(self.values)

    def value(self, i: int, j: int) -> float:
        """Entry lookup, symmetric in ``(i, j)``; unsampled pairs are 0."""
        from .sampling import PairIndexMap

        if i == j:
            return 0.0
        if i > j:
            i, j = j, i
        index_map = PairIndexMap(self.p)
        if self._rank_index is None:
            ranks = index_map.rank(self.rows, self.cols)
            order = np.argsort(ranks)
            self._rank_index = (ranks[order], order)
        sorted_ranks, order = self._rank_index
        r = index_map.rank(i, j)
        pos = np.searchsorted(sorted_ranks, r)
        if pos < len(sorted_ranks) and sorted_ranks[pos] == r:
            return float(self.values[order[pos]])
        return 0.0

    def to_csr(self):
        """Symmetric CSR view (both triangles) for matrix-vector products."""
        from scipy.sparse import coo_matrix

        r0 = self.rows - 1
        c0 = self.cols - 1
        coo = coo_matrix(
            (
                np.concatenate([self.values, self.values]),
                (np.concatenate([r0, c0]), np.concatenate([c0, r0])),
            ),
            shape=(self.p, self.p),
        )
        return coo.tocsr()

    def to_dense(self) -> np.ndarray:
        """Dense symmetric matrix; intended for small p only."""
        dense = np.zeros((self.p, self.p))
        dense[self.rows - 1, self.cols - 1] = self.values
        dense[self.cols - 1, self.rows - 1] = self.values
        return dense


def _pair_values(work: np.ndarray, rows0: np.ndarray, cols0: np.ndarray) -> np.ndarray:
    out = np.empty(len(rows0))
    for start in range(0, len(rows0), PAIR_CHUNK):
        sl = slice(start, start + PAIR_CHUNK)
        out[sl] = np.einsum(
            "nc,nc->c", work[:, rows0[sl]], work[:, cols0[sl]], optimize=True
        )
    return out


def evaluate_pair_differences(
    g1: PreparedGroup,
    g2: PreparedGroup,
    pairs: np.ndarray,
    threads: int = 1,
) -> np.ndarray:
    """Unrescaled difference statistics for an ``(m, 2)`` 1-based pair array."""
    if g1.stat_kind != g2.stat_kind:
        raise ValueError("groups were prepared with different statistics")
    if g1.n_variables != g2.n_variables:
        raise ValueError("groups have different variable counts")
    pairs = np.asarray(pairs, dtype=np.int64)
    if pairs.size == 0:
        return np.empty(0)
    rows0 = pairs[:, 0] - 1
    cols0 = pairs[:, 1] - 1
    if np.any(rows0 < 0) or np.any(rows0 >= cols0) or np.any(cols0 >= g1.n_variables):
        raise ValueError("pairs must satisfy 1 <= i < j <= p")

    if threads > 1 and len(pairs) > 2 * PAIR_CHUNK:
        bounds = np.linspace(0, len(pairs), threads + 1, dtype=np.int64)
        out = np.empty(len(pairs))

        def run(t):
            lo, hi = bounds[t], bounds[t + 1]
            out[lo:hi] = _pair_values(g1.work, rows0[lo:hi], cols0[lo:hi]) - _pair_values(
                g2.work, rows0[lo:hi], cols0[lo:hi]
            )

        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(threads)))
        return out
    return _pair_values(g1.work, rows0, cols0) - _pair_values(g2.work, rows0, cols0)


def build_sparse_differential(
    g1: PreparedGroup,
    g2: PreparedGroup,
    pairs: np.ndarray,
    rho: float,
    stat_kind: str | None = None,
    threads: int = 1,
) -> SparseDifferential:
    """Evaluate differences on ``pairs`` and rescale by ``1 / rho``.

    The result does not depend on evaluation order; chunks are disjoint so
    evaluation may be spread over ``threads`` workers.
    """
    if stat_kind is not None and stat_kind != g1.stat_kind:
        raise ValueError(
            f"groups prepared as {g1.stat_kind!r} but {stat_kind!r} requested"
        )
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    pairs = np.asarray(pairs, dtype=np.int64)
    p = g1.n_variables
    diffs = evaluate_pair_differences(g1, g2, pairs, threads=threads)
    degenerate_vars = g1.degenerate | g2.degenerate
    if pairs.size:
        deg_pairs = int(
            np.sum(degenerate_vars[pairs[:, 0] - 1] | degenerate_vars[pairs[:, 1] - 1])
        )
    else:
        deg_pairs = 0
    return SparseDifferential(
        p=p,
        rows=pairs[:, 0] if pairs.size else np.empty(0, dtype=np.int64),
        cols=pairs[:, 1] if pairs.size else np.empty(0, dtype=np.int64),
        values=diffs / rho,
        rho=rho,
        stat_kind=g1.stat_kind,
        degenerate_vars=degenerate_vars,
        degenerate_pair_count=deg_pairs,
    )


def write_differential_coo(path, sd: SparseDifferential) -> None:
    """Write coordinate-format text: header then ``i j value`` lines."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# p={sd.p} rho={sd.rho!r} stat_kind={sd.stat_kind}\n")
        for i, j, v in zip(sd.rows, sd.cols, sd.values):
            fh.write(f"{i} {j} {v!r}\n")


def read_differential_coo(path) -> SparseDifferential:
    """Read a matrix written by :func:`write_differential_coo`."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("# "):
            raise ValueError(f"{path}: missing coordinate-format header")
        meta = dict(field.partition("=")[::2] for field in header[2:].split())
        rows, cols, vals = [], [], []
        for line in fh:
            if not line.strip():
                continue
            i, j, v = line.split()
            rows.append(int(i))
            cols.append(int(j))
            vals.append(float(v))
    p = int(meta["p"])
    return SparseDifferential(
        p=p,
        rows=np.array(rows, dtype=np.int64),
        cols=np.array(cols, dtype=np.int64),
        values=np.array(vals),
        rho=float(meta["rho"]),
        stat_kind=meta["stat_kind"],
        degenerate_vars=np.zeros(p, dtype=bool),
    )
