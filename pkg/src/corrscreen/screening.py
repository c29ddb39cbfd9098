"""Spectral screening scores and the compressed screening pipeline.

A variable's score is the norm of its row in the scaled eigenvector matrix
``U |Lambda|^(1/2)`` of the difference matrix: variables outside the
differential block have (asymptotically) zero rows, so large scores flag
variables whose correlation structure changed. The compressed variant
evaluates the difference only on a random subset of pairs, rescales, and
screens the sparse matrix's top eigenpairs instead.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .correlation import (
    STAT_KINDS,
    ExpressionMatrix,
    build_sparse_differential,
    prepare_group,
)
from .eigen import SpectralResult, top_k_eigen
from .rng import EIGEN_STREAM, MASK_STREAM, derive_seed
from .sampling import sample_pairs

__all__ = [
    "ScoreVector",
    "SamplingRateWarning",
    "spectral_scores",
    "screen",
    "threshold_select",
    "rho_lower_bounds",
    "check_same_variables",
    "write_scores_csv",
]

DEFAULT_K = 2


class SamplingRateWarning(UserWarning):
    """The sampling rate is below the recommended information lower bound."""


@dataclass
class ScoreVector:
    """Per-variable screening scores plus the settings that produced them."""

    scores: np.ndarray
    k_used: int
    rho_used: float
    stat_kind: str
    names: list[str] | None = None
    warnings: list[str] = field(default_factory=list)


def spectral_scores(spec: SpectralResult, positive_part: bool = False) -> np.ndarray:
    """Row norms of ``U |Lambda|^(1/2)``.

    The difference matrix is indefinite; magnitudes of negative eigenvalues
    carry differential signal too, so by default the absolute eigenvalues
    are used. ``positive_part`` instead drops negative eigenvalues, which
    coincides with the default whenever the spectrum is nonnegative.
    """
    lam = spec.eigenvalues
    weights = np.maximum(lam, 0.0) if positive_part else np.abs(lam)
    return np.sqrt((spec.eigenvectors**2) @ weights)


def rho_lower_bounds(n1: int, n2: int, p: int) -> tuple[float, float]:
    """Information and coverage lower bounds on the sampling rate.

    Sampling should supply at least as many entries as the raw data
    contains (rate above ``2(n1+n2)/(p+1)``) and leave no variable with an
    empty row (rate above ``2 log(p) / p``).
    """
    return 2.0 * (n1 + n2) / (p + 1.0), 2.0 * np.log(p) / p


def check_same_variables(x1: ExpressionMatrix, x2: ExpressionMatrix) -> None:
    if x1.n_variables != x2.n_variables:
        raise ValueError(
            f"groups have {x1.n_variables} and {x2.n_variables} variables"
        )
    for a, b in zip(x1.variable_names, x2.variable_names):
        if a != b:
            raise ValueError(f"variable names differ: {a!r} vs {b!r}")


def screen(
    x1: ExpressionMatrix,
    x2: ExpressionMatrix,
    rho: float = 1.0,
    k: int = DEFAULT_K,
    stat_kind: str = "spearman",
    seed: int = 0,
    threads: int = 1,
    positive_part: bool = False,
    matrix_sink=None,
) -> ScoreVector:
    """Compressed spectral screening of two groups.

    Samples pairs at rate ``rho``, evaluates rescaled difference statistics
    there, extracts the top-``k`` eigenpairs of the sparse result, and
    returns per-variable scores. At ``rho = 1`` this reproduces screening
    of the dense difference matrix. ``matrix_sink``, if given, is called
    with the assembled sparse differential before decomposition.
    """
    if stat_kind not in STAT_KINDS:
        raise ValueError(f"stat_kind must be one of {STAT_KINDS}, got {stat_kind!r}")
    check_same_variables(x1, x2)
    p = x1.n_variables
    notes = []
    info_bound, coverage_bound = rho_lower_bounds(x1.n_samples, x2.n_samples, p)
    if rho < info_bound:
        msg = (
            f"rho={rho:g} is below the recommended lower bound "
            f"2(n1+n2)/(p+1)={info_bound:.4g}; screening may be unreliable"
        )
        warnings.warn(msg, SamplingRateWarning, stacklevel=2)
        notes.append(msg)

    pairs = sample_pairs(p, rho, derive_seed(seed, MASK_STREAM))
    g1 = prepare_group(x1, stat_kind)
    g2 = prepare_group(x2, stat_kind)
    sd = build_sparse_differential(g1, g2, pairs, rho, threads=threads)
    if matrix_sink is not None:
        matrix_sink(sd)
    spec = top_k_eigen(sd, k, seed=derive_seed(seed, EIGEN_STREAM))
    return ScoreVector(
        scores=spectral_scores(spec, positive_part=positive_part),
        k_used=k,
        rho_used=rho,
        stat_kind=stat_kind,
        names=list(x1.variable_names),
        warnings=notes,
    )


def threshold_select(scores: ScoreVector, delta) -> np.ndarray:
    """Boolean flags ``score > delta`` (strict), per variable."""
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != scores.scores.shape:
        raise ValueError(
            f"threshold vector has shape {delta.shape}, scores {scores.scores.shape}"
        )
    if np.any(delta < 0):
        raise ValueError("thresholds must be non-negative")
    return scores.scores > delta


def write_scores_csv(path, scores: ScoreVector, selected=None) -> None:
    """Write ``variable_name,score[,selected]`` rows."""
    names = scores.names or [f"v{i + 1}" for i in range(len(scores.scores))]
    with open(path, "w", encoding="utf-8") as fh:
        if selected is None:
            fh.write("variable_name,score\n")
            for name, s in zip(names, scores.scores):
                fh.write(f"{name},{s:.10g}\n")
        else:
            fh.write("variable_name,score,selected\n")
            for name, s, sel in zip(names, scores.scores, selected):
                fh.write(f"{name},{s:.10g},{int(sel)}\n")
