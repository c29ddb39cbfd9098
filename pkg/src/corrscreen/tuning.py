"""Holdout selection of the screening rank.

Extra pairs are sampled alongside the training mask, their (unscaled)
difference statistics are held out, and candidate ranks are scored by how
well the rank-K truncation of the training matrix's eigendecomposition
predicts the held-out entries. One partial eigendecomposition up to the
largest candidate rank serves every K: the rank-K prediction is the
rank-(K-1) prediction plus a single outer-product term.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .correlation import (
    ExpressionMatrix,
    SparseDifferential,
    evaluate_pair_differences,
    prepare_group,
)
from .eigen import SpectralResult, top_k_eigen
from .rng import EIGEN_STREAM, MASK_STREAM, derive_seed
from .sampling import split_train_validation
from .screening import ScoreVector, check_same_variables, spectral_scores

__all__ = [
    "TuningResult",
    "predict_entry",
    "loss_profile",
    "select_rank",
    "default_k_upper",
    "tune_rank",
]


@dataclass
class TuningResult:
    """Holdout losses per candidate rank and the selected rank."""

    losses: dict[int, float]
    k_hat: int
    validation_count: int
    excluded_degenerate: int = 0

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "losses": {str(k): v for k, v in sorted(self.losses.items())},
                    "k_hat": self.k_hat,
                    "validation_count": self.validation_count,
                    "excluded_degenerate": self.excluded_degenerate,
                },
                fh,
                indent=2,
            )
            fh.write("\n")


def predict_entry(spec: SpectralResult, i: int, j: int, k: int) -> float:
    """Rank-``k`` reconstruction of entry ``(i, j)``, 1-based; ``k=0`` is 0."""
    if not 0 <= k <= spec.k:
        raise ValueError(f"k must be in [0, {spec.k}], got {k}")
    if i == j:
        raise ValueError("pair indices must differ")
    u = spec.eigenvectors
    lam = spec.eigenvalues
    return float(np.sum(lam[:k] * u[i - 1, :k] * u[j - 1, :k]))


def loss_profile(
    spec: SpectralResult,
    pairs: np.ndarray,
    targets: np.ndarray,
    k_l: int,
    k_u: int,
) -> dict[int, float]:
    """Sum of squared holdout errors for each rank in ``[k_l, k_u]``.

    Predictions are accumulated incrementally over eigenpairs, so the sweep
    costs one pass over the validation entries per rank.
    """
    if not 1 <= k_l <= k_u <= spec.k:
        raise ValueError(f"need 1 <= k_l <= k_u <= {spec.k}, got [{k_l}, {k_u}]")
    pairs = np.asarray(pairs, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.float64)
    rows0 = pairs[:, 0] - 1
    cols0 = pairs[:, 1] - 1
    preds = np.zeros(len(targets))
    losses: dict[int, float] = {}
    u = spec.eigenvectors
    lam = spec.eigenvalues
    for r in range(k_u):
        preds = preds + lam[r] * u[rows0, r] * u[cols0, r]
        if r + 1 >= k_l:
            losses[r + 1] = float(np.sum((targets - preds) ** 2))
    return losses


def select_rank(losses: dict[int, float]) -> int:
    """Argmin over ranks; exact ties go to the smaller rank."""
    best_k, best = None, np.inf
    for k in sorted(losses):
        if losses[k] < best:
            best_k, best = k, losses[k]
    return best_k


def default_k_upper(rho: float, n1: int, n2: int, p: int, k_l: int) -> int:
    """Default rank ceiling: floor(rho * (n1 + n2)), clamped.

    The difference matrix has rank at most ``n1 + n2`` and only a ``rho``
    fraction of entries is seen, so larger ranks are pure noise. The
    ceiling is also kept below ``p`` so a Krylov basis fits.
    """
    raw = int(np.floor(rho * (n1 + n2)))
    return int(np.clip(raw, k_l, max(k_l, min(n1 + n2, p - 2))))


def tune_rank(
    x1: ExpressionMatrix,
    x2: ExpressionMatrix,
    rho: float,
    tau: float = 0.1,
    k_l: int = 2,
    k_u: int | None = None,
    stat_kind: str = "spearman",
    seed: int = 0,
    threads: int = 1,
    matrix_sink=None,
) -> tuple[TuningResult, ScoreVector]:
    """Sample train/validation pairs, sweep ranks, screen at the best one.

    The training entries (rescaled by ``1 / rho``) form the sparse matrix
    whose eigendecomposition up to ``k_u`` is computed once; holdout
    targets are the unscaled difference statistics. The returned scores
    reuse the same decomposition truncated at the selected rank, so no
    second decomposition is ever run.
    """
    check_same_variables(x1, x2)
    p = x1.n_variables
    n1, n2 = x1.n_samples, x2.n_samples
    if k_u is None:
        k_u = default_k_upper(rho, n1, n2, p, k_l)
    if not 1 <= k_l <= k_u:
        raise ValueError(f"need 1 <= k_l <= k_u, got k_l={k_l}, k_u={k_u}")

    sample = split_train_validation(p, rho, tau, derive_seed(seed, MASK_STREAM))
    if len(sample.validation_pairs) == 0:
        raise ValueError(
            "validation set is empty; increase tau or rho (or the problem size)"
        )

    g1 = prepare_group(x1, stat_kind)
    g2 = prepare_group(x2, stat_kind)

    train = sample.train_pairs
    val = sample.validation_pairs
    train_vals = evaluate_pair_differences(g1, g2, train, threads=threads)
    val_vals = evaluate_pair_differences(g1, g2, val, threads=threads)

    degenerate = g1.degenerate | g2.degenerate
    ok = ~(degenerate[val[:, 0] - 1] | degenerate[val[:, 1] - 1])
    excluded = int((~ok).sum())
    if not ok.any():
        raise ValueError(
            "all validation pairs touch zero-variance variables; cannot tune"
        )

    sd = SparseDifferential(
        p=p,
        rows=train[:, 0],
        cols=train[:, 1],
        values=train_vals / rho,
        rho=rho,
        stat_kind=stat_kind,
        degenerate_vars=degenerate,
    )
    if matrix_sink is not None:
        matrix_sink(sd)
    spec = top_k_eigen(sd, k_u, seed=derive_seed(seed, EIGEN_STREAM))

    losses = loss_profile(spec, val[ok], val_vals[ok], k_l, k_u)
    k_hat = select_rank(losses)
    result = TuningResult(
        losses=losses,
        k_hat=k_hat,
        validation_count=int(ok.sum()),
        excluded_degenerate=excluded,
    )
    scores = ScoreVector(
        scores=spectral_scores(spec.truncated(k_hat)),
        k_used=k_hat,
        rho_used=rho,
        stat_kind=stat_kind,
        names=list(x1.variable_names),
    )
    return result, scores
