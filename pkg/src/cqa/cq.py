"""Sampling-based checks of constant-rank conditions.

``crc_check`` certifies the constant rank condition for one index family J
at x0 by sampling a neighbourhood: the rank of the gradients of J must not
change, the pivot sub-family J2 chosen at x0 must keep full rank, and every
other gradient of J must stay in the span of the J2 gradients.
``rcrcq_plus_check`` runs it on every J between I0 and I0 + I(x0) with one
shared neighbourhood.  All verdicts are numerical evidence at the sampled
radius, not proofs.

In finite dimension the remaining conditions of CRC+ (closed image,
shrinking and boundedly-complete basis, Besselian basis, dual vectors in
the space) hold automatically and are only recorded in the report.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from . import numlin
from .problem import InfeasiblePointError, active_set

DEFAULT_SPAN_TOL = 1e-6
SUBSET_CAP = 16

AUTOMATIC_CONDITIONS = (
    "closed image of the J2 derivative: automatic, finite truncation",
    "shrinking and boundedly-complete J2 basis: automatic, finite truncation",
    "Besselian J2 basis: automatic, finite truncation",
    "dual vectors of the J2 basis lie in the space: automatic, finite truncation",
)


class PreconditionError(ValueError):
    def __init__(self, message, verdict=None):
        super().__init__(message)
        self.verdict = verdict


@dataclass(frozen=True)
class NeighborhoodSpec:
    """Deterministic sample of a ball of radius ``radius`` around ``center``.

    Sample k is drawn uniformly from the ball of radius
    ``radius * 10**-(k % 4)`` so that small scales are always represented.
    Each preferred direction adds the points ``center +- t d/|d|`` for ``t``
    in ``radius * 2**-j``, j < 6.
    """

    center: tuple
    radius: float = 0.1
    samples: int = 64
    seed: int = 42
    directions: tuple = ()

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.samples < 8:
            raise ValueError("at least 8 samples are required")

    def points(self):
        c = np.asarray(self.center, dtype=float)
        n = c.size
        rng = np.random.default_rng(self.seed)
        pts = []
        for k in range(self.samples):
            g = rng.standard_normal(n)
            g /= np.linalg.norm(g)
            s = self.radius * 10.0 ** -(k % 4) * rng.random() ** (1.0 / n)
            pts.append(c + s * g)
        for d in self.directions:
            d = np.asarray(d, dtype=float)
            d = d / np.linalg.norm(d)
            for j in range(6):
                t = self.radius * 2.0**-j
                pts.append(c + t * d)
                pts.append(c - t * d)
        return pts


@dataclass(frozen=True)
class SampleRecord:
    point: tuple
    rank: int
    pivot_rank: int
    span_residual: float
    marginal: bool
    error: str | None = None


@dataclass(frozen=True)
class CRCVerdict:
    J: tuple
    J2: tuple
    holds: str  # yes | no | marginal
    center_rank: int
    center_profile: numlin.RankProfile
    samples: tuple
    span_residual: float
    witness: SampleRecord | None = None

    @property
    def sample_ranks(self):
        return tuple(s.rank for s in self.samples)


class _GradientCache:
    """Gradients of a system at a fixed list of points, computed lazily.

    Rows are stored per label as ``(points, n)`` arrays; points where some
    gradient cannot be evaluated are remembered with their error message.
    """

    def __init__(self, sys, points):
        self.sys = sys
        self.points = points
        self._rows = {}
        self.errors = [None] * len(points)

    def _ensure(self, label):
        if label in self._rows:
            return
        block = np.full((len(self.points), self.sys.n), np.nan)
        for k, pt in enumerate(self.points):
            if self.errors[k] is not None:
                continue
            try:
                block[k] = self.sys[label].gradient(pt)
            except ex.EvaluationError as err:
                self.errors[k] = str(err)
        self._rows[label] = block

    def stack(self, labels):
        """``(points, |labels|, n)`` gradient stack."""
        for label in labels:
            self._ensure(label)
        if not labels:
            return np.zeros((len(self.points), 0, self.sys.n))
        return np.stack([self._rows[label] for label in labels], axis=1)

    def matrix(self, k, labels):
        M = self.stack(labels)[k]
        if self.errors[k] is not None:
            raise ex.EvaluationError(self.errors[k])
        return M


def _stacked_span_residual(rows, basis):
    """Per-sample max relative distance of ``rows`` to the span of ``basis``."""
    k = rows.shape[0]
    if rows.shape[1] == 0:
        return np.zeros(k)
    if basis.shape[1] == 0:
        perp = rows
    else:
        Q, _ = np.linalg.qr(np.swapaxes(basis, 1, 2))
        perp = rows - (rows @ Q) @ np.swapaxes(Q, 1, 2)
    norms = np.linalg.norm(rows, axis=2)
    rel = np.where(norms > numlin.ZERO_ROW_TOL, np.linalg.norm(perp, axis=2) / np.where(norms > 0, norms, 1.0), 0.0)
    return rel.max(axis=1)


def _crc_from_cache(J, center, cache, tol_rank, tol_span):
    M0 = center.matrix(0, J)
    prof0 = numlin.numerical_rank(M0, J, tol_rank)
    J2 = prof0.pivots
    others = tuple(k for k in J if k not in J2)
    stack = cache.stack(J)
    ok_pts = np.array([e is None for e in cache.errors], dtype=bool)
    good = stack[ok_pts]
    ranks, marg = numlin.stacked_ranks(good, tol_rank)
    sub = good[:, [J.index(j) for j in J2], :]
    pivot_ranks = numlin.stacked_ranks(sub, tol_rank)[0] if J2 else np.zeros(len(good), dtype=int)
    spans = _stacked_span_residual(good[:, [J.index(j) for j in others], :], sub)
    records = []
    failure = None
    failure_marginal = True
    any_marginal = prof0.marginal or bool(marg.any())
    worst_span = float(spans.max()) if spans.size else 0.0
    g = 0
    for k, pt in enumerate(cache.points):
        if not ok_pts[k]:
            records.append(SampleRecord(tuple(map(float, pt)), -1, -1, float("nan"), True, cache.errors[k]))
            continue
        rec = SampleRecord(tuple(map(float, pt)), int(ranks[g]), int(pivot_ranks[g]), float(spans[g]), bool(marg[g]))
        records.append(rec)
        ok = rec.rank == prof0.rank and rec.pivot_rank == len(J2) and rec.span_residual <= tol_span
        if not ok:
            confident = not (rec.marginal or prof0.marginal)
            if failure is None or (confident and failure_marginal):
                failure, failure_marginal = rec, not confident
        g += 1
    if failure is not None:
        holds = "marginal" if failure_marginal else "no"
    elif not ok_pts.all() or any_marginal:
        holds = "marginal"
    else:
        holds = "yes"
    return CRCVerdict(tuple(J), J2, holds, prof0.rank, prof0, tuple(records), worst_span, failure)


def crc_check(sys, J, x0, nbhd=None, tol_rank=numlin.DEFAULT_RANK_TOL, tol_span=DEFAULT_SPAN_TOL):
    """Constant rank condition for the gradients of ``J`` near ``x0``."""
    J = tuple(sorted(J))
    for k in J:
        sys[k]  # KeyError for unknown labels
    x0 = np.asarray(x0, dtype=float)
    nbhd = nbhd or NeighborhoodSpec(tuple(x0))
    center = _GradientCache(sys, [x0])
    cache = _GradientCache(sys, nbhd.points())
    return _crc_from_cache(J, center, cache, tol_rank, tol_span)


@dataclass(frozen=True)
class CQReport:
    point: tuple
    truncation: int
    active: tuple
    equalities: tuple
    verdicts: tuple
    overall: str  # yes | no | marginal
    coverage: str  # exhaustive | sampled
    radius: float
    samples: int
    seed: int
    automatic_conditions: tuple = AUTOMATIC_CONDITIONS
    notes: tuple = field(default_factory=tuple)

    @property
    def failing(self):
        return tuple(v for v in self.verdicts if v.holds != "yes")

    @property
    def witness(self):
        for v in self.verdicts:
            if v.holds == "no":
                return v
        return self.failing[0] if self.failing else None

    def verdict_for(self, J):
        J = tuple(sorted(J))
        for v in self.verdicts:
            if v.J == J:
                return v
        raise KeyError(J)


def _subsets(active, cap, max_subsets, seed):
    if len(active) <= cap:
        for size in range(len(active) + 1):
            yield from itertools.combinations(active, size)
        return
    rng = np.random.default_rng(seed)
    seen = set()
    limit = max_subsets or 2**cap
    # always include the extremes
    for s in ((), tuple(active)):
        seen.add(s)
        yield s
    while len(seen) < limit:
        mask = rng.random(len(active)) < 0.5
        s = tuple(a for a, m in zip(active, mask) if m)
        if s not in seen:
            seen.add(s)
            yield s


def rcrcq_plus_check(
    sys,
    x0,
    nbhd=None,
    tol_rank=numlin.DEFAULT_RANK_TOL,
    tol_span=DEFAULT_SPAN_TOL,
    max_subsets=None,
    tol_active=1e-8,
    subset_cap=SUBSET_CAP,
):
    """RCRCQ+ at ``x0``: CRC for every J with I0 <= J <= I0 + I(x0).

    All subsets share the same neighbourhood sample.  Beyond ``subset_cap``
    active inequalities, ``max_subsets`` seeded random subsets are checked
    and the report coverage is ``"sampled"``.
    """
    x0 = np.asarray(x0, dtype=float)
    acts = active_set(sys, x0, tol_active)
    if not acts.feasible:
        raise InfeasiblePointError(acts.violated)
    nbhd = nbhd or NeighborhoodSpec(tuple(x0))
    center = _GradientCache(sys, [x0])
    cache = _GradientCache(sys, nbhd.points())
    I0 = sys.I0
    verdicts = []
    for S in _subsets(acts.active, subset_cap, max_subsets, nbhd.seed):
        J = tuple(sorted(I0 + S))
        verdicts.append(_crc_from_cache(J, center, cache, tol_rank, tol_span))
    verdicts.sort(key=lambda v: v.J)  # lexicographic in the sorted labels
    holds = [v.holds for v in verdicts]
    if all(h == "yes" for h in holds):
        overall = "yes"
    elif "no" in holds:
        overall = "no"
    else:
        overall = "marginal"
    coverage = "exhaustive" if len(acts.active) <= subset_cap else "sampled"
    notes = (
        f"numerical evidence at radius {nbhd.radius} with {len(cache.points)} samples, truncation {sys.truncation}",
    )
    return CQReport(
        tuple(map(float, x0)),
        sys.truncation,
        acts.active,
        I0,
        tuple(verdicts),
        overall,
        coverage,
        nbhd.radius,
        len(cache.points),
        nbhd.seed,
        notes=notes,
    )


def w_matrix(sys, J1, J2, x0, x, tol_rank=numlin.DEFAULT_RANK_TOL):
    """W(x)[i][j] = Dg_i(x) . d_j with d_j the dual vectors of J2 at x0.

    At ``x = x0`` the J2 rows of W form the identity.
    """
    D = numlin.dual_vectors(sys.jacobian(np.asarray(x0, dtype=float), tuple(J2)), tol_rank)
    return sys.jacobian(np.asarray(x, dtype=float), tuple(J1)) @ D


@dataclass(frozen=True)
class DependenceReport:
    J: tuple
    J2: tuple
    points: tuple
    max_dependent_residual: float
    max_basis_residual: float
    tol: float
    manifold_dim: int

    @property
    def passes(self):
        return self.max_dependent_residual <= self.tol


def functional_dependence_check(
    sys,
    J,
    J2,
    x0,
    step_count=50,
    step_size=0.05,
    tol_dep=1e-8,
    seed=42,
    nbhd=None,
    params=None,
    tol_rank=numlin.DEFAULT_RANK_TOL,
):
    """Check that the constraints of J outside J2 vanish on the J2 level set.

    Points of M = {x : g_i(x) = g_i(x0), i in J2} are produced by a random
    step of length at most ``step_size`` in the tangent space at x0 followed
    by the Newton corrector.  Requires the constant rank condition for J at
    x0 (raises :class:`PreconditionError` otherwise) and g_l(x0) = 0 on J.
    """
    from .tangent import CorrectorParams, ljusternik_corrector

    x0 = np.asarray(x0, dtype=float)
    J = tuple(sorted(J))
    J2 = tuple(sorted(J2))
    if not set(J2) <= set(J):
        raise ValueError("J2 must be a subset of J")
    verdict = crc_check(sys, J, x0, nbhd)
    if verdict.holds != "yes":
        raise PreconditionError(f"constant rank condition fails for J={list(J)} (verdict {verdict.holds})", verdict)
    rank_J = verdict.center_rank
    M2 = sys.jacobian(x0, J2)
    if numlin.numerical_rank(M2, J2, tol_rank).rank != len(J2) or len(J2) != rank_J:
        raise PreconditionError(f"J2={list(J2)} is not a basis of the J gradients at x0", verdict)
    values = sys.values(x0, J)
    if np.any(np.abs(values) > 1e-8):
        raise PreconditionError("all constraints of J must vanish at x0", verdict)
    params = params or CorrectorParams()
    target = sys.values(x0, J2)
    others = tuple(k for k in J if k not in J2)
    T = numlin.nullspace(M2, tol_rank, sys.n)
    rng = np.random.default_rng(seed)
    points = []
    worst_dep = worst_basis = 0.0
    for _ in range(step_count):
        if T.shape[1]:
            g = rng.standard_normal(T.shape[1])
            step = T @ (g / np.linalg.norm(g)) * step_size * rng.random()
        else:
            step = np.zeros(sys.n)
        xi = x0 + step
        if J2:
            corr, _ = ljusternik_corrector(sys, J2, xi, params, target=target)
        else:
            corr = np.zeros(sys.n)
        y = xi + corr
        points.append(tuple(map(float, y)))
        if J2:
            worst_basis = max(worst_basis, float(np.max(np.abs(sys.values(y, J2) - target))))
        if others:
            worst_dep = max(worst_dep, float(np.max(np.abs(sys.values(y, others)))))
    return DependenceReport(J, J2, tuple(points), worst_dep, worst_basis, tol_dep, T.shape[1])
