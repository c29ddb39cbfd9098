"""Synthetic instances with a known differential block, and ROC metrics.

The generator plants two spiked covariances ``I + v v^T`` whose spikes live
on disjoint coordinate blocks, so exactly the union of the two supports is
differentially correlated. Samples are drawn as ``x = z + g * v`` with
``z ~ N(0, I)`` and a scalar ``g ~ N(0, 1)``, which realizes the covariance
exactly without ever forming a p-by-p matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .correlation import ExpressionMatrix
from .rng import DATA_STREAM, make_rng
from .screening import ScoreVector

__all__ = ["SpikedInstance", "RocCurve", "generate_spiked", "roc_auc"]

SPIKE_MEAN = 1.0
SPIKE_VARIANCE = 0.2


@dataclass(frozen=True)
class SpikedInstance:
    """Ground truth of one synthetic differential-correlation instance."""

    p: int
    m: int
    v1: np.ndarray
    v2: np.ndarray
    truth: np.ndarray
    seed: int


@dataclass
class RocCurve:
    """(sensitivity, specificity) sweep and the rank-based AUC."""

    points: np.ndarray
    auc: float


def variable_names(p: int) -> list[str]:
    return [f"v{i + 1:05d}" for i in range(p)]


def _sample_group(v: np.ndarray, n: int, rng, label: str) -> ExpressionMatrix:
    p = len(v)
    z = rng.standard_normal((n, p))
    g = rng.standard_normal((n, 1))
    return ExpressionMatrix(values=z + g * v, variable_names=variable_names(p), group_label=label)


def generate_spiked(
    p: int,
    n1: int,
    n2: int,
    seed: int,
    m: int = 100,
) -> tuple[SpikedInstance, ExpressionMatrix, ExpressionMatrix]:
    """Generate one instance: two groups differing on the first ``m`` variables.

    The first spike is supported on coordinates ``1 .. m/2`` and the second
    on ``m/2 + 1 .. m``; spike entries are drawn from a normal with mean 1
    and variance 0.2.
    """
    if p < m:
        raise ValueError(f"need p >= m, got p={p}, m={m}")
    if m < 2 or m % 2:
        raise ValueError(f"m must be even and >= 2, got {m}")
    if min(n1, n2) < 3:
        raise ValueError("need at least 3 samples per group")
    rng = make_rng(seed, DATA_STREAM)
    half = m // 2
    sd = np.sqrt(SPIKE_VARIANCE)

    v1 = np.zeros(p)
    v1[:half] = rng.normal(SPIKE_MEAN, sd, size=half)
    v2 = np.zeros(p)
    v2[half:m] = rng.normal(SPIKE_MEAN, sd, size=half)

    x1 = _sample_group(v1, n1, rng, "group1")
    x2 = _sample_group(v2, n2, rng, "group2")
    truth = np.zeros(p, dtype=bool)
    truth[:m] = True
    inst = SpikedInstance(p=p, m=m, v1=v1, v2=v2, truth=truth, seed=seed)
    return inst, x1, x2


def roc_auc(scores, truth) -> RocCurve:
    """ROC curve over all score thresholds and the exact rank-based AUC.

    The AUC equals the probability that a random differential variable
    outscores a random null variable, ties counting one half, which is the
    Mann-Whitney statistic of the two score samples.
    """
    if isinstance(scores, ScoreVector):
        scores = scores.scores
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=bool)
    if scores.shape != truth.shape:
        raise ValueError("scores and truth flags must have the same length")
    n_pos = int(truth.sum())
    n_neg = len(truth) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("truth flags must contain both classes")

    ranks = rankdata(scores, method="average")
    auc = (ranks[truth].mean() - (n_pos + 1) / 2.0) / n_neg

    order = np.argsort(-scores, kind="stable")
    sorted_truth = truth[order]
    sorted_scores = scores[order]
    tp = np.cumsum(sorted_truth)
    fp = np.cumsum(~sorted_truth)
    # One ROC point per distinct score value: take the last index of each
    # run of equal scores so tied variables enter together.
    last = np.nonzero(np.diff(sorted_scores, append=np.nan) != 0)[0]
    sens = tp[last] / n_pos
    spec = 1.0 - fp[last] / n_neg
    points = np.column_stack([sens, spec])
    return RocCurve(points=points, auc=float(auc))
