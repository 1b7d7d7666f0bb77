"""Dense linear algebra for gradient families.

Numerical rank with relative singular-value thresholding, greedy row-pivoted
orthogonalization for basis selection, nullspace and row-space bases,
minimum-norm right inverses and a sign-constrained least-squares solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RANK_TOL = 1e-8
ZERO_ROW_TOL = 1e-12
MARGINAL_GAP = 1e3


class RankDeficientError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


@dataclass(frozen=True)
class RankProfile:
    rank: int
    pivots: tuple
    singular_values: tuple
    tol: float
    marginal: bool


def _as_matrix(M, n=None):
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(1, -1) if M.size or n is None else M.reshape(0, n)
    return M


def _pivot_rows(M, labels, count):
    """Greedy row pivoting: largest residual norm first, ties to the smaller label."""
    R = M.copy()
    chosen = []
    remaining = list(range(M.shape[0]))
    for _ in range(count):
        norms = np.linalg.norm(R[remaining], axis=1)
        top = norms.max()
        ties = [remaining[k] for k in range(len(remaining)) if norms[k] >= top * (1 - 1e-12)]
        p = min(ties, key=lambda r: labels[r])
        chosen.append(p)
        remaining.remove(p)
        q = R[p] / np.linalg.norm(R[p])
        for _ in range(2):  # reorthogonalize once
            R[remaining] -= np.outer(R[remaining] @ q, q)
        R[p] = 0.0
        if not remaining:
            break
    return chosen


def numerical_rank(M, labels=None, tol=DEFAULT_RANK_TOL):
    """Rank of the row family ``M`` and a pivot sub-family of that size.

    The rank counts singular values above ``tol * sigma_max``; a matrix whose
    rows all have norm at most 1e-12 has rank 0.  Pivots are chosen by greedy
    orthogonalization and reported by label.
    """
    M = _as_matrix(M)
    m = M.shape[0]
    labels = tuple(range(m)) if labels is None else tuple(labels)
    if len(labels) != m:
        raise ValueError("one label per row required")
    if m == 0 or M.shape[1] == 0:
        return RankProfile(0, (), (), tol, False)
    sv = np.linalg.svd(M, compute_uv=False)
    if np.all(np.linalg.norm(M, axis=1) <= ZERO_ROW_TOL):
        return RankProfile(0, (), tuple(float(s) for s in sv), tol, False)
    r = int(np.sum(sv > tol * sv[0]))
    marginal = False
    if r < len(sv) and sv[r] > 0.0:
        marginal = bool(sv[r - 1] / sv[r] < MARGINAL_GAP)
    rows = _pivot_rows(M, labels, r)
    pivots = tuple(sorted((labels[k] for k in rows), key=labels.index))
    return RankProfile(r, pivots, tuple(float(s) for s in sv), tol, marginal)


def stacked_ranks(stack, tol=DEFAULT_RANK_TOL):
    """Numerical rank and marginal flag of every matrix in a ``(k, m, n)`` stack.

    Same rule as :func:`numerical_rank`, without pivot selection.
    """
    stack = np.asarray(stack, dtype=float)
    k, m, n = stack.shape
    if m == 0 or n == 0:
        return np.zeros(k, dtype=int), np.zeros(k, dtype=bool)
    sv = np.linalg.svd(stack, compute_uv=False)
    ranks = np.sum(sv > tol * sv[:, :1], axis=1)
    ranks[np.all(np.linalg.norm(stack, axis=2) <= ZERO_ROW_TOL, axis=1)] = 0
    marginal = np.zeros(k, dtype=bool)
    p = sv.shape[1]
    for r in np.unique(ranks):
        if 0 < r < p:
            sel = (ranks == r) & (sv[:, r] > 0.0)
            marginal[sel] = sv[sel, r - 1] / sv[sel, r] < MARGINAL_GAP
    return ranks, marginal


def nullspace(M, tol=DEFAULT_RANK_TOL, n=None):
    """Orthonormal basis (as columns) of ``{d : M d = 0}``."""
    M = _as_matrix(M, n)
    n = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(n)
    r = numerical_rank(M, tol=tol).rank
    _, _, vt = np.linalg.svd(M)
    return vt[r:].T.copy()


def rowspace(M, tol=DEFAULT_RANK_TOL):
    """Orthonormal basis (as columns) of the span of the rows of ``M``."""
    M = _as_matrix(M)
    if M.shape[0] == 0:
        return np.zeros((M.shape[1], 0))
    r = numerical_rank(M, tol=tol).rank
    _, _, vt = np.linalg.svd(M)
    return vt[:r].T.copy()


def dual_vectors(M, tol=DEFAULT_RANK_TOL):
    """Minimum-norm right inverse D of a full-row-rank ``M`` (so M D = I).

    Column j of D is the coordinate form of the dual functional of row j:
    it pairs to one with row j, to zero with the other rows, and lies in
    the row space of ``M``.
    """
    M = _as_matrix(M)
    r = M.shape[0]
    if r == 0:
        return np.zeros((M.shape[1], 0))
    if numerical_rank(M, tol=tol).rank != r:
        raise RankDeficientError(f"dual vectors need full row rank {r}")
    return M.T @ np.linalg.solve(M @ M.T, np.eye(r))


@dataclass(frozen=True)
class SplitReport:
    n: int
    row_dim: int
    null_dim: int
    concatenated_rank: int
    decomposition_error: float

    @property
    def holds(self):
        return self.row_dim + self.null_dim == self.n and self.concatenated_rank == self.n


def split_check(M, tol=DEFAULT_RANK_TOL, seed=0):
    """Certify R^n = rowspace(M) + ker(M) as a direct sum.

    Also measures how well ``x = D M x + (x - D M x)`` splits random points,
    with D the dual vectors: the second term must lie in the kernel.
    """
    M = _as_matrix(M)
    n = M.shape[1]
    D = dual_vectors(M, tol)
    rows = rowspace(M, tol)
    null = nullspace(M, tol, n)
    both = np.hstack([rows, null])
    concat = numerical_rank(both.T, tol=tol).rank if both.size else 0
    rng = np.random.default_rng(seed)
    err = 0.0
    scale = max(1.0, float(np.linalg.norm(M)))
    for _ in range(8):
        x = rng.standard_normal(n)
        rest = x - D @ (M @ x)
        err = max(err, float(np.linalg.norm(M @ rest)) / (scale * max(1.0, float(np.linalg.norm(x)))))
    return SplitReport(n, rows.shape[1], null.shape[1], concat, err)


def signed_least_squares(A, b, free=(), nonneg=(), maxiter=None):
    """Minimize ``|A lam - b|`` with ``lam[j] >= 0`` for ``j`` in ``nonneg``.

    Columns in ``free`` are unconstrained; ``free`` and ``nonneg`` must
    partition the columns.  This is the Lawson-Hanson active-set method with
    the free columns kept permanently in the passive set; least-squares
    subproblems use minimum-norm solutions.

    Returns ``(lam, residual)``.  Raises :class:`ConvergenceError` carrying
    the best iterate when more than ``10 * m`` iterations are needed.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    m = A.shape[1]
    free, nonneg = set(free), set(nonneg)
    if free & nonneg or free | nonneg != set(range(m)):
        raise ValueError("free and nonneg must partition the columns")
    maxiter = 10 * max(m, 1) if maxiter is None else maxiter
    lam = np.zeros(m)
    if m == 0:
        return lam, float(np.linalg.norm(b))

    eps = np.finfo(float).eps
    tol = 10 * eps * max(A.shape) * max(1.0, float(np.linalg.norm(A, 2)) * float(np.linalg.norm(b)))

    def solve(passive):
        z = np.zeros(m)
        cols = sorted(passive)
        if cols:
            z[cols] = np.linalg.lstsq(A[:, cols], b, rcond=None)[0]
        return z

    passive = set(free)
    lam = solve(passive)
    excluded = set()
    iterations = 0
    while True:
        w = A.T @ (b - A @ lam)
        candidates = [j for j in sorted(nonneg - passive - excluded) if w[j] > tol]
        if not candidates:
            break
        j = max(candidates, key=lambda k: (w[k], -k))
        passive.add(j)
        first = True
        while True:
            iterations += 1
            if iterations > maxiter:
                raise ConvergenceError(
                    f"sign-constrained least squares did not converge in {maxiter} iterations",
                    best=lam,
                    residual=float(np.linalg.norm(A @ lam - b)),
                )
            z = solve(passive)
            if first and z[j] <= 0.0:
                # dependent column: it cannot enter with a positive weight
                passive.discard(j)
                excluded.add(j)
                break
            first = False
            bad = [k for k in passive & nonneg if z[k] <= 0.0]
            if not bad:
                lam = z
                excluded.clear()
                break
            alpha = min(lam[k] / (lam[k] - z[k]) for k in bad)
            lam = lam + alpha * (z - lam)
            for k in list(passive & nonneg):
                if lam[k] <= tol:
                    lam[k] = 0.0
                    passive.discard(k)
    for k in nonneg:
        lam[k] = max(lam[k], 0.0)
    return lam, float(np.linalg.norm(A @ lam - b))
