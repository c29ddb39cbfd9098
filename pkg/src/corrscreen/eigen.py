"""Top eigenpairs (by magnitude) of the sparse symmetric difference matrix.

The difference matrix is indefinite, so the screening needs the eigenvalues
of largest absolute value, positive or negative. They are computed with an
implicitly restarted Lanczos iteration (ARPACK via scipy) driven purely by
sparse matrix-vector products, keeping memory at O(np) for matrices with
O(np) stored entries. Matrices small enough that a Krylov subspace cannot
be built fall back to a dense solve.

Determinism: the Lanczos start vector is drawn from a seeded generator, and
each eigenvector is sign-normalized so its largest-magnitude entry is
positive, so repeated calls are byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .correlation import SparseDifferential
from .rng import EIGEN_STREAM, make_rng

__all__ = ["SpectralResult", "EigenConvergenceError", "top_k_eigen"]

# Eigenvalues below this fraction of the leading magnitude count as zero
# when deciding rank deficiency.
RANK_EPS = 1e-12

# Matrices this small are decomposed densely; ARPACK needs room to build a
# Krylov basis and is unreliable when k approaches p.
DENSE_P = 32

# Memory budget: no densification above this size, ever.
DENSE_P_MAX = 2000


class EigenConvergenceError(RuntimeError):
    """Raised when the iteration stalls; carries the residuals achieved."""

    def __init__(self, message, eigenvalues=None, residuals=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues
        self.residuals = residuals


@dataclass
class SpectralResult:
    """Top-k eigenpairs ordered by decreasing eigenvalue magnitude."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    rank_deficient: bool = False

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    @property
    def p(self) -> int:
        return self.eigenvectors.shape[0]

    def truncated(self, k: int) -> "SpectralResult":
        """Restrict to the leading ``k`` pairs (already magnitude-ordered)."""
        if not 1 <= k <= self.k:
            raise ValueError(f"k must be in [1, {self.k}], got {k}")
        return SpectralResult(
            eigenvalues=self.eigenvalues[:k],
            eigenvectors=self.eigenvectors[:, :k],
            residuals=self.residuals[:k],
            rank_deficient=self.rank_deficient,
        )


def _order_and_sign(eigenvalues, eigenvectors):
    """Magnitude-descending order (ties: signed value descending, then
    discovery order) and a positive largest-magnitude entry per vector."""
    order = np.lexsort((np.arange(len(eigenvalues)), -eigenvalues, -np.abs(eigenvalues)))
    eigenvalues = eigenvalues[order]
    eigenvectors = eigenvectors[:, order]
    lead = np.abs(eigenvectors).argmax(axis=0)
    signs = np.sign(eigenvectors[lead, np.arange(eigenvectors.shape[1])])
    signs[signs == 0] = 1.0
    return eigenvalues, eigenvectors * signs


def top_k_eigen(
    m: SparseDifferential,
    k: int,
    tol: float = 1e-8,
    seed: int = 0,
) -> SpectralResult:
    """Compute the ``k`` eigenpairs of largest magnitude of ``m``.

    ``tol`` is the acceptance contract on relative residuals: every
    returned pair must satisfy ``|m @ u - lam * u| <= tol * |lam_1|``
    (the solver itself iterates to machine precision, so screening output
    does not depend on ``tol``). Eigenvalues whose magnitude is numerically
    zero relative to the leading one are reported as exact zeros with
    ``rank_deficient`` set.
    """
    p = m.p
    if not 1 <= k <= p:
        raise ValueError(f"k must be in [1, {p}], got {k}")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")

    if m.n_entries == 0 or not np.any(m.values):
        eigenvectors = np.zeros((p, k))
        eigenvectors[np.arange(k), np.arange(k)] = 1.0
        return SpectralResult(
            eigenvalues=np.zeros(k),
            eigenvectors=eigenvectors,
            residuals=np.zeros(k),
            rank_deficient=True,
        )

    csr = m.to_csr()
    use_dense = p <= DENSE_P or k > p - 2
    if use_dense and p > DENSE_P_MAX:
        raise ValueError(
            f"k={k} too close to p={p} for the sparse path and p exceeds the "
            f"dense fallback budget ({DENSE_P_MAX})"
        )

    if use_dense:
        eigenvalues, eigenvectors = np.linalg.eigh(csr.toarray())
        keep = np.argsort(-np.abs(eigenvalues), kind="stable")[:k]
        eigenvalues = eigenvalues[keep]
        eigenvectors = eigenvectors[:, keep]
    else:
        start = make_rng(seed, EIGEN_STREAM).standard_normal(p)
        ncv = min(p, max(2 * k + 1, 20))
        try:
            eigenvalues, eigenvectors = eigsh(
                csr, k=k, which="LM", v0=start, tol=0, maxiter=2000, ncv=ncv
            )
        except ArpackNoConvergence as exc:
            # One escalation with a larger subspace before giving up.
            try:
                eigenvalues, eigenvectors = eigsh(
                    csr,
                    k=k,
                    which="LM",
                    v0=start,
                    tol=0,
                    maxiter=10000,
                    ncv=min(p, max(4 * k + 1, 40)),
                )
            except ArpackNoConvergence as exc2:
                got_vals = np.asarray(exc2.eigenvalues)
                got_vecs = np.asarray(exc2.eigenvectors)
                res = (
                    np.linalg.norm(csr @ got_vecs - got_vecs * got_vals, axis=0)
                    if got_vecs.size
                    else np.empty(0)
                )
                raise EigenConvergenceError(
                    f"eigensolver did not converge: {exc2} (after escalation "
                    f"from: {exc})",
                    eigenvalues=got_vals,
                    residuals=res,
                ) from exc2

    eigenvalues, eigenvectors = _order_and_sign(eigenvalues, eigenvectors)

    lead_mag = np.abs(eigenvalues[0])
    rank_deficient = False
    if lead_mag > 0:
        tiny = np.abs(eigenvalues) <= RANK_EPS * lead_mag
        if tiny.any():
            eigenvalues = np.where(tiny, 0.0, eigenvalues)
            rank_deficient = True
    residuals = np.linalg.norm(csr @ eigenvectors - eigenvectors * eigenvalues, axis=0)

    converged = residuals <= tol * max(lead_mag, np.finfo(float).tiny)
    if not np.all(converged):
        raise EigenConvergenceError(
            f"{int((~converged).sum())} of {k} eigenpairs exceed the residual "
            f"tolerance {tol:g} * |lambda_1|",
            eigenvalues=eigenvalues,
            residuals=residuals,
        )
    return SpectralResult(
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        residuals=residuals,
        rank_deficient=rank_deficient,
    )
