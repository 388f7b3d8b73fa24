"""Dense complex linear algebra and fixed-step integration primitives.

Matrices are plain ``numpy`` arrays (complex128 where it matters). LAPACK
does the heavy lifting; this module pins the truncation rules and the
error behaviour the rest of the package relies on.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DegenerateSnapshotError, IntegrationBlowUp

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class RankPolicy:
    """How many singular triplets to keep.

    ``RankPolicy.fixed(r)`` keeps the leading ``r``; ``RankPolicy.threshold(eps)``
    keeps every singular value above ``eps * sigma_max``.
    """

    mode: str = "threshold"
    rank: int | None = None
    eps_rel: float = 1e-10

    def __post_init__(self):
        if self.mode == "fixed":
            if self.rank is None or int(self.rank) < 1:
                raise ValueError("fixed rank policy needs rank >= 1")
        elif self.mode == "threshold":
            if not 0.0 < self.eps_rel < 1.0:
                raise ValueError("threshold policy needs 0 < eps_rel < 1")
        else:
            raise ValueError(f"unknown rank policy mode {self.mode!r}")

    @classmethod
    def fixed(cls, rank: int) -> RankPolicy:
        return cls(mode="fixed", rank=int(rank))

    @classmethod
    def threshold(cls, eps_rel: float = 1e-10) -> RankPolicy:
        return cls(mode="threshold", eps_rel=float(eps_rel))

    def select(self, sigma: np.ndarray) -> int:
        if sigma.size == 0 or sigma[0] <= 0.0:
            return 0
        if self.mode == "fixed":
            # never keep exact zeros, they break the inverse
            nonzero = int(np.count_nonzero(sigma > 0.0))
            return min(self.rank, nonzero)
        return int(np.count_nonzero(sigma > self.eps_rel * sigma[0]))


def truncated_svd(M, policy: RankPolicy | None = None):
    """Rank-truncated thin SVD ``M ~ U_r @ diag(sigma) @ V_r^H``.

    Returns
    -------
    U_r : (n, r) ndarray
    sigma : (r,) ndarray, non-increasing and positive
    V_r : (m, r) ndarray
    """
    if policy is None:
        policy = RankPolicy()
    M = np.asarray(M)
    if M.ndim != 2:
        raise ValueError("truncated_svd expects a 2-D array")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    try:
        U, s, Vh = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"SVD did not converge: {exc}") from exc
    r = policy.select(s)
    if r == 0:
        raise DegenerateSnapshotError("degenerate snapshot matrix (rank 0 after truncation)")
    return U[:, :r], s[:r], Vh[:r].conj().T


def _eig_unit(A):
    try:
        lam, W = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        # LAPACK geev reports the failing QR sweep index in the message
        raise ConvergenceError(f"eigensolver failed to converge: {exc}") from exc
    norms = np.linalg.norm(W, axis=0)
    norms[norms == 0.0] = 1.0
    return lam, W / norms


def _eig_residual(A, lam, W):
    return np.linalg.norm(A @ W - W * lam[None, :], axis=0).max() if len(lam) else 0.0


def eig_dense(A):
    """Eigenvalues and unit-norm right eigenvectors of a small dense matrix.

    Each pair satisfies ``||A w - lam w|| <= 1e-10 ||A||_F``. Balancing in
    LAPACK can break this when entries span hundreds of decades; the solve is
    then repeated with entries below ``eps * ||A||_F`` flushed to zero, a
    perturbation inside the backward error of the solver itself.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("eig_dense expects a square matrix")
    tol = 1e-10 * np.linalg.norm(A)
    lam, W = _eig_unit(A)
    if _eig_residual(A, lam, W) <= tol:
        return lam, W
    flushed = np.where(np.abs(A) < _EPS * np.linalg.norm(A), 0.0, A)
    lam, W = _eig_unit(flushed)
    res = _eig_residual(A, lam, W)
    if res > tol:
        raise ConvergenceError(f"eigenpair residual {res:.3g} exceeds {tol:.3g}")
    log.info("eig_dense: resolved after flushing entries below eps*||A||")
    return lam, W


def pinv_apply(U_r, sigma, V_r, y):
    """Apply the truncated pseudoinverse ``V_r diag(1/sigma) U_r^H`` to ``y``.

    Singular values below ``1e3 * eps * max(sigma)`` are excluded.
    """
    sigma = np.asarray(sigma, dtype=float)
    cutoff = 1e3 * _EPS * sigma.max()
    keep = sigma > cutoff
    if not np.all(keep):
        log.info("pinv_apply: excluded %d singular values below %.3g",
                 int((~keep).sum()), cutoff)
    coeff = (U_r[:, keep].conj().T @ y)
    coeff = coeff / (sigma[keep] if coeff.ndim == 1 else sigma[keep, None])
    return V_r[:, keep] @ coeff


def lsq_solve(A, y, policy: RankPolicy | None = None):
    """Minimum-norm least-squares solution of ``A x = y`` via its own SVD."""
    if policy is None:
        policy = RankPolicy.threshold(1e3 * _EPS)
    U_r, s, V_r = truncated_svd(A, policy)
    return pinv_apply(U_r, s, V_r, y)


def rk4_step(f, t, y, h):
    """One classical Runge-Kutta step of ``dy/dt = f(t, y)``."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + (0.5 * h) * k1)
    k3 = f(t + 0.5 * h, y + (0.5 * h) * k2)
    k4 = f(t + h, y + h * k3)
    out = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationBlowUp(t + h)
    return out
