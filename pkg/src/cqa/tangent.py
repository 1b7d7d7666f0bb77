"""Tangent directions of the feasible set.

The corrector restores a set of equality constraints from a trial point
with minimum-norm Gauss-Newton steps; ``tangency_test`` follows the
construction ``x0 + t d + r(t)`` on a geometric grid of t and certifies
``|r(t)|/t -> 0``.  ``brute_force_tangent_oracle`` works from the
definition of the Bouligand cone instead (feasible points near the ray) and
serves as an independent check.  ``abadie_check`` compares both cones on a
battery of directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import cq, numlin
from . import expr as ex
from .problem import InfeasiblePointError, active_set, cone_contains, linearized_cone


class CorrectorError(RuntimeError):
    pass


class DirectionError(ValueError):
    """Direction outside the linearized cone where membership is required."""


@dataclass(frozen=True)
class CorrectorParams:
    t0: float = 0.1
    factor: float = 0.5
    levels: int = 12
    newton_tol: float = 1e-12
    max_iter: int = 50
    ratio_tol: float = 1e-3
    feas_tol: float = 1e-9
    cone_tol: float = 1e-9
    ball_fraction: float = 0.1
    final_levels: int = 4
    witness_tol: float = 1e-12
    ball_starts: int = 4

    def __post_init__(self):
        if not (self.t0 > 0 and 0 < self.factor < 1 and self.levels >= self.final_levels >= 1):
            raise ValueError("the t-grid must be positive and strictly decreasing")

    @property
    def grid(self):
        return tuple(self.t0 * self.factor**k for k in range(self.levels))


# -- corrector --------------------------------------------------------------


def ljusternik_corrector(sys, J2, xi, params=None, target=None, tol_rank=numlin.DEFAULT_RANK_TOL):
    """Correction x(xi) with g_i(xi + x(xi)) = target_i for i in ``J2``.

    Each step is ``-D(y) (g(y) - target)`` where D(y) holds the dual vectors
    (minimum-norm right inverse) of the J2 gradients at the current iterate.
    Returns ``(correction, iterations)``.
    """
    params = params or CorrectorParams()
    J2 = tuple(J2)
    xi = np.asarray(xi, dtype=float)
    target = np.zeros(len(J2)) if target is None else np.asarray(target, dtype=float)
    y = xi.copy()
    eps = np.finfo(float).eps
    for it in range(params.max_iter + 1):
        try:
            f = sys.values(y, J2) - target
            M = sys.jacobian(y, J2)
        except ex.EvaluationError as err:
            raise CorrectorError(f"evaluation failed at iterate {it}: {err}") from None
        floor = 64 * eps * (1.0 + float(np.max(np.abs(y), initial=0.0))) * float(np.max(np.abs(M), initial=1.0))
        if np.max(np.abs(f), initial=0.0) <= max(params.newton_tol, floor):
            return y - xi, it
        if it == params.max_iter:
            break
        try:
            D = numlin.dual_vectors(M, tol_rank)
        except numlin.RankDeficientError:
            raise CorrectorError(f"rank collapse of the J2 gradients at iterate {it}") from None
        y = y - D @ f
        if not np.all(np.isfinite(y)):
            raise CorrectorError(f"iterate {it + 1} is not finite")
    raise CorrectorError(f"no convergence in {params.max_iter} Newton iterations")


# -- refined active set -----------------------------------------------------


def refined_active_set(sys, x0, d, tol=1e-9, tol_active=1e-8):
    """Active inequalities whose gradient is orthogonal to ``d``."""
    x0 = np.asarray(x0, dtype=float)
    d = np.asarray(d, dtype=float)
    cone = linearized_cone(sys, x0, tol_active)
    if not cone_contains(cone, d, tol):
        raise DirectionError("direction is outside the linearized cone")
    scale = tol * float(np.linalg.norm(d))
    slopes = cone.active_rows @ d if cone.active_rows.size else np.zeros(0)
    return tuple(k for k, s in zip(cone.active_labels, slopes) if abs(s) <= scale)


# -- tangency certificate ---------------------------------------------------


@dataclass(frozen=True)
class LevelRecord:
    t: float
    correction: tuple
    ratio: float
    iterations: int
    basis_residual: float
    dependent_residual: float
    inequality_violation: float
    error: str | None = None
    ball_violation: float | None = None
    center_violation: float | None = None


@dataclass(frozen=True)
class TangencyCertificate:
    direction: tuple
    J: tuple
    J2: tuple
    records: tuple
    verdict: str  # tangent | not-tangent | inconclusive
    reason: str
    failing_level: float | None = None

    @property
    def ratios(self):
        return tuple(r.ratio for r in self.records)


def _nonincreasing(values):
    return all(b <= a * (1 + 1e-9) + 1e-15 for a, b in zip(values, values[1:]))


def _violation_parts(sys, y, J):
    Jset = set(J)
    dep = 0.0
    ineq = 0.0
    for c in sys.constraints:
        v = c.value(y)
        if c.label in Jset:
            dep = max(dep, abs(v))
        elif c.kind == "eq":
            dep = max(dep, abs(v))
        else:
            ineq = max(ineq, v)
    return dep, ineq


def min_violation_in_ball(sys, center, radius, seed=0, starts=4):
    """Smallest constraint violation found in a ball, by local search.

    Minimizes the squared violation with SLSQP from the center and
    ``starts - 1`` seeded random points of the ball.  Returns
    ``(violation, point)``; the violation is max(|g_eq|, g_ineq^+).
    """
    center = np.asarray(center, dtype=float)
    n = center.size
    eq = [c for c in sys.constraints if c.kind == "eq"]
    ineq = [c for c in sys.constraints if c.kind == "ineq"]

    def raw(y):
        val = 0.0
        grad = np.zeros(n)
        for c in eq:
            v, g = ex.value_and_gradient(c.expr, y)
            val += v * v
            grad += 2 * v * g
        for c in ineq:
            v, g = ex.value_and_gradient(c.expr, y)
            if v > 0:
                val += v * v
                grad += 2 * v * g
        return val, grad

    phi0, _ = raw(center)
    best_v, best_y = sys.violation(center), center
    if phi0 == 0.0:
        return best_v, best_y
    scale = 1.0 / phi0

    def obj(u):
        try:
            v, g = raw(center + radius * u)
        except ex.EvaluationError:
            return 1e30, np.zeros(n)
        return v * scale, g * radius * scale

    cons = [{"type": "ineq", "fun": lambda u: 1.0 - u @ u, "jac": lambda u: -2 * u}]
    rng = np.random.default_rng(seed)
    for s in range(starts):
        if s == 0:
            u0 = np.zeros(n)
        else:
            g = rng.standard_normal(n)
            u0 = g / np.linalg.norm(g) * rng.random() ** (1.0 / n)
        res = minimize(obj, u0, jac=True, method="SLSQP", constraints=cons, options={"ftol": 1e-14, "maxiter": 200})
        u = res.x
        if u @ u > 1.0:
            u = u / math.sqrt(u @ u)
        y = center + radius * u
        try:
            v = sys.violation(y)
        except ex.EvaluationError:
            continue
        if v < best_v:
            best_v, best_y = v, y
    return best_v, best_y


def tangency_test(sys, x0, d, params=None, tol_active=1e-8, tol_rank=numlin.DEFAULT_RANK_TOL, seed=0):
    """Certificate that ``d`` is (or is not) a tangent direction at ``x0``.

    J(d) = I0 + I(x0, d) is restored by the corrector on its pivot
    sub-family J2; the residuals of all of J(d) and the violations of the
    remaining inequalities are recorded per grid level.  The verdict is
    ``tangent`` when, over the final levels, the ratios |r(t)|/t do not
    increase, the last is at most ``ratio_tol`` and every residual is within
    ``feas_tol``.  ``not-tangent`` needs a positive witness: either d lies
    outside the linearized cone, or at each final level no point within
    ``ball_fraction * t |d|`` of x0 + t d reduces the violation below
    ``max(witness_tol, 1e-3 * violation at x0 + t d)``.
    """
    params = params or CorrectorParams()
    x0 = np.asarray(x0, dtype=float)
    d = np.asarray(d, dtype=float)
    acts = active_set(sys, x0, tol_active)
    if not acts.feasible:
        raise InfeasiblePointError(acts.violated)
    dn = float(np.linalg.norm(d))
    if dn == 0.0:
        return TangencyCertificate((0.0,) * sys.n, (), (), (), "tangent", "zero direction")
    cone = linearized_cone(sys, x0, tol_active)
    if not cone_contains(cone, d, params.cone_tol):
        return TangencyCertificate(
            tuple(map(float, d)), (), (), (), "not-tangent", "direction outside the linearized cone"
        )
    refined = refined_active_set(sys, x0, d, params.cone_tol, tol_active)
    J = tuple(sorted(sys.I0 + refined))
    J2 = numlin.numerical_rank(sys.jacobian(x0, J), J, tol_rank).pivots if J else ()
    records = []
    failing = None
    for t in params.grid:
        xi = x0 + t * d
        try:
            if J2:
                corr, its = ljusternik_corrector(sys, J2, xi, params, tol_rank=tol_rank)
            else:
                corr, its = np.zeros(sys.n), 0
            y = xi + corr
            basis = float(np.max(np.abs(sys.values(y, J2)), initial=0.0))
            dep, ineq = _violation_parts(sys, y, J)
        except (CorrectorError, ex.EvaluationError) as err:
            records.append(LevelRecord(t, (), float("nan"), 0, float("nan"), float("nan"), float("nan"), str(err)))
            if failing is None:
                failing = t
            continue
        records.append(
            LevelRecord(t, tuple(map(float, corr)), float(np.linalg.norm(corr)) / t, its, basis, dep, max(ineq, 0.0))
        )
    if failing is not None:
        return TangencyCertificate(
            tuple(map(float, d)), J, J2, tuple(records), "inconclusive", "corrector failure", failing
        )
    final = records[-params.final_levels :]
    ratios = [r.ratio for r in final]
    feasible = all(r.dependent_residual <= params.feas_tol and r.inequality_violation <= params.feas_tol for r in final)
    if _nonincreasing(ratios) and ratios[-1] <= params.ratio_tol and feasible:
        return TangencyCertificate(tuple(map(float, d)), J, J2, tuple(records), "tangent", "corrector certificate")
    # search for a witness of non-tangency on the final levels
    witnessed = True
    updated = list(records)
    for k in range(len(records) - params.final_levels, len(records)):
        rec = records[k]
        xi = x0 + rec.t * d
        center_v = sys.violation(xi)
        ball_v, _ = min_violation_in_ball(sys, xi, params.ball_fraction * rec.t * dn, seed + k, params.ball_starts)
        updated[k] = LevelRecord(**{**rec.__dict__, "ball_violation": ball_v, "center_violation": center_v})
        if not ball_v > max(params.witness_tol, 1e-3 * center_v):
            witnessed = False
    if witnessed:
        return TangencyCertificate(
            tuple(map(float, d)), J, J2, tuple(updated), "not-tangent", "no feasible point near x0 + t d"
        )
    return TangencyCertificate(
        tuple(map(float, d)), J, J2, tuple(updated), "inconclusive", "certificate criteria not met"
    )


# -- condition (H1) ---------------------------------------------------------

H1_NOTE = (
    "checks sufficient conditions (strict descent, finite or declared tail), "
    "not the statement for every corrector r(t)"
)


@dataclass(frozen=True)
class H1Verdict:
    direction: tuple
    refined: tuple
    margins: dict  # i in I(x0) \ I(x0,d) -> Dg_i(x0) d/|d|
    verdict: str  # verified | verified-finite | unverified
    reason: str
    tail_checked: int = 0
    note: str = H1_NOTE


def h1_check(sys, x0, d, tol=1e-9, tol_active=1e-8, tol_descent=1e-8, tol_slack=1e-8, probe=64):
    """Sufficient conditions for (H1) along ``d``.

    Realized inequalities: every active one outside I(x0, d) must descend
    strictly (slope <= -tol_descent) and every inactive one must have slack
    <= -tol_slack.  Unrealized family members are probed over ``probe``
    indices past the truncation: members that are active with zero slope
    along d belong to I(x0, d) and need nothing; any other member needs the
    family's declared ``tailBound`` B < 0, read as a uniform bound
    "g_i(x0) <= B or Dg_i(x0) d/|d| <= B", and the probe must not refute it.
    """
    x0 = np.asarray(x0, dtype=float)
    d = np.asarray(d, dtype=float)
    refined = refined_active_set(sys, x0, d, tol, tol_active)
    acts = active_set(sys, x0, tol_active)
    dn = float(np.linalg.norm(d))
    dhat = d / dn if dn > 0 else d
    margins = {}
    for k in acts.active:
        if k not in refined:
            margins[k] = float(sys[k].gradient(x0) @ dhat)
    direction = tuple(map(float, d))
    bad = [k for k, m in margins.items() if m > -tol_descent]
    if bad:
        return H1Verdict(direction, refined, margins, "unverified", f"no strict descent for {bad}")
    slack_bad = [k for k in acts.inactive if acts.slack[k] > -tol_slack]
    if slack_bad:
        return H1Verdict(direction, refined, margins, "unverified", f"insufficient slack for {slack_bad}")
    if not sys.has_unrealized_tail():
        return H1Verdict(
            direction, refined, margins, "verified-finite", "finitely many inequalities, so I1 \\ I(x0,d) is finite"
        )
    needs_bound = False
    checked = 0
    for fam, members in sys.tail(probe):
        for c in members:
            checked += 1
            g = c.value(x0)
            slope = float(c.gradient(x0) @ dhat) if dn > 0 else 0.0
            if g > tol_active:
                return H1Verdict(direction, refined, margins, "unverified", f"tail member {c.label} is infeasible at x0", checked)
            if abs(g) <= tol_active and abs(slope) <= tol:
                continue
            needs_bound = True
            B = fam.tail_bound
            if B is None:
                return H1Verdict(
                    direction,
                    refined,
                    margins,
                    "unverified",
                    f"tail member {c.label} is outside I(x0,d) and its family declares no tail bound",
                    checked,
                )
            if B > -min(tol_slack, tol_descent) or not (g <= B or slope <= B):
                return H1Verdict(
                    direction, refined, margins, "unverified", f"declared tail bound {B} refuted at {c.label}", checked
                )
    if needs_bound:
        return H1Verdict(
            direction, refined, margins, "verified", "strict descent on I(x0)\\I(x0,d) and declared tail bound", checked
        )
    return H1Verdict(
        direction,
        refined,
        margins,
        "verified-finite",
        f"probed tail members lie in I(x0,d), so I1 \\ I(x0,d) is finite (probe of {probe})",
        checked,
    )


# -- brute-force oracle -----------------------------------------------------


def project_feasible(sys, y, tol=1e-10, max_iter=60, tol_rank=numlin.DEFAULT_RANK_TOL):
    """Newton projection onto F: equalities and violated inequalities are
    driven to zero with minimum-norm steps.  Returns the point or None."""
    y = np.asarray(y, dtype=float).copy()
    for _ in range(max_iter):
        try:
            vals = sys.values(y)
        except ex.EvaluationError:
            return None
        labels = [
            c.label
            for c, v in zip(sys.constraints, vals)
            if (c.kind == "eq" and abs(v) > tol) or (c.kind == "ineq" and v > tol)
        ]
        if not labels:
            return y
        work = sys.I0 + tuple(k for k in labels if k not in sys.I0)
        try:
            M = sys.jacobian(y, work)
        except ex.EvaluationError:
            return None
        piv = numlin.numerical_rank(M, work, tol_rank).pivots
        if not piv:
            return None
        idx = [work.index(k) for k in piv]
        f = np.array([vals[sys.labels.index(k)] for k in piv])
        y = y - np.linalg.pinv(M[idx]) @ f
        if not np.all(np.isfinite(y)):
            return None
    return None


@dataclass(frozen=True)
class OracleResult:
    direction: tuple
    verdict: str  # accept | reject | abstain
    radii: tuple
    best_angles: tuple
    feasible_counts: tuple

    @property
    def accepted(self):
        return self.verdict == "accept"


def brute_force_tangent_oracle(
    sys, x0, d, radii=None, samples_per_radius=48, angle_tol=0.1, seed=0, tol_feas=1e-10, tol_active=1e-8
):
    """Tangency of ``d`` straight from the definition of the Bouligand cone.

    For each radius t (decreasing) feasible points x with |x - x0| in
    [t/2, 3t/2] are searched (half the trial points scattered around the ray
    x0 + t d, half uniform in the shell, each projected onto F).  ``d`` is
    accepted iff every radius yields one whose direction is within
    ``angle_tol`` radians of d; a radius with no feasible point makes the
    oracle abstain.
    """
    x0 = np.asarray(x0, dtype=float)
    d = np.asarray(d, dtype=float)
    acts = active_set(sys, x0, tol_active)
    if not acts.feasible:
        raise InfeasiblePointError(acts.violated)
    n = x0.size
    dn = float(np.linalg.norm(d))
    if dn == 0.0:
        return OracleResult((0.0,) * n, "accept", (), (), ())
    dhat = d / dn
    radii = tuple(radii) if radii is not None else tuple(0.05 * 2.0**-k for k in range(6))
    rng = np.random.default_rng(seed)
    best_angles, counts = [], []
    cos_tol = math.cos(angle_tol)
    for t in radii:
        best = math.pi
        found = 0
        hit = False
        for s in range(samples_per_radius):
            if s % 2 == 0:
                g = rng.standard_normal(n)
                trial = x0 + t * (0.6 + 0.8 * rng.random()) * (dhat + 0.5 * angle_tol * g / math.sqrt(n))
            else:
                g = rng.standard_normal(n)
                trial = x0 + t * (0.5 + rng.random()) * g / np.linalg.norm(g)
            y = project_feasible(sys, trial, tol_feas)
            if y is None:
                continue
            v = y - x0
            r = float(np.linalg.norm(v))
            if not 0.5 * t <= r <= 1.5 * t:
                continue
            found += 1
            c = float(v @ dhat) / r
            best = min(best, math.acos(max(-1.0, min(1.0, c))))
            if c >= cos_tol:
                hit = True
                break
        best_angles.append(best)
        counts.append(found)
        if not hit:
            verdict = "abstain" if found == 0 else "reject"
            return OracleResult(tuple(map(float, d)), verdict, radii, tuple(best_angles), tuple(counts))
    return OracleResult(tuple(map(float, d)), "accept", radii, tuple(best_angles), tuple(counts))


# -- Abadie decision --------------------------------------------------------


@dataclass(frozen=True)
class DirectionResult:
    direction: tuple
    source: str
    in_linearized_cone: bool
    tangency: TangencyCertificate | None = None
    h1: H1Verdict | None = None
    oracle: OracleResult | None = None


@dataclass(frozen=True)
class AbadieReport:
    point: tuple
    verdict: str  # holds-numerically | fails | inconclusive
    witness: tuple | None
    rcrcq_plus: str
    h1: str
    directions: tuple
    tangent_in_linearized: bool
    notes: tuple = field(default_factory=tuple)


def _unit(v):
    return v / np.linalg.norm(v)


def direction_battery(sys, x0, cone, count=4, seed=42, tol=1e-9):
    """Directions to probe: coordinate axes, kernel basis of the active
    gradients, the sum of the axis directions inside the cone and seeded
    random members of the cone.  Returns ``(direction, source)`` pairs."""
    n = sys.n
    out = []
    seen = set()

    def add(v, source):
        key = tuple(np.round(_unit(v), 12))
        if key not in seen:
            seen.add(key)
            out.append((v, source))

    axes_in = []
    for k in range(n):
        for s in (1.0, -1.0):
            e = np.zeros(n)
            e[k] = s
            add(e, "axis")
            if cone_contains(cone, e, tol):
                axes_in.append(e)
    rows = cone.rows
    null = numlin.nullspace(rows, n=n) if rows.shape[0] else np.zeros((n, 0))
    if rows.shape[0]:
        for col in null.T:
            add(col.copy(), "kernel")
            add(-col, "kernel")
    if len(axes_in) > 1:
        centroid = np.sum(axes_in, axis=0)
        if np.linalg.norm(centroid) > 0:
            add(centroid, "centroid")
    rng = np.random.default_rng(seed)
    eq_null = numlin.nullspace(cone.equality_rows, n=n) if cone.equality_rows.shape[0] else np.eye(n)
    found = 0
    if eq_null.shape[1]:
        for _ in range(10_000):
            g = rng.standard_normal(eq_null.shape[1])
            v = eq_null @ (g / np.linalg.norm(g))
            if cone_contains(cone, v, tol):
                add(v, "random")
                found += 1
                if found >= count:
                    break
    return out


def abadie_check(
    sys,
    x0,
    params=None,
    nbhd=None,
    cq_report=None,
    tol_active=1e-8,
    tol_rank=numlin.DEFAULT_RANK_TOL,
    random_directions=4,
    seed=42,
    angle_tol=0.1,
    oracle_samples=48,
):
    """Numerical decision of T_F(x0) = Gamma_F(x0).

    Every direction of the battery inside the linearized cone gets a
    tangency certificate and an (H1) verdict; axis and centroid directions
    also go through the oracle, whose accepted directions must lie in the
    linearized cone.  The RCRCQ+ verdict travels with the result so the
    hypothesis status is visible next to the conclusion.
    """
    params = params or CorrectorParams()
    x0 = np.asarray(x0, dtype=float)
    acts = active_set(sys, x0, tol_active)
    if not acts.feasible:
        raise InfeasiblePointError(acts.violated)
    cone = linearized_cone(sys, x0, tol_active)
    if cq_report is None:
        cq_report = cq.rcrcq_plus_check(sys, x0, nbhd, tol_rank=tol_rank, tol_active=tol_active)
    rows = cone.rows
    slack_tol = math.sin(angle_tol) * max(1.0, float(np.max(np.linalg.norm(rows, axis=1), initial=0.0)))
    results = []
    t_in_gamma = True
    notes = []
    for k, (d, source) in enumerate(direction_battery(sys, x0, cone, random_directions, seed, params.cone_tol)):
        inside = cone_contains(cone, d, params.cone_tol)
        oracle = None
        if source in ("axis", "centroid"):
            oracle = brute_force_tangent_oracle(
                sys, x0, d, samples_per_radius=oracle_samples, angle_tol=angle_tol, seed=seed + k, tol_active=tol_active
            )
            if oracle.accepted and not cone_contains(cone, d, slack_tol):
                t_in_gamma = False
                notes.append(f"oracle accepted {list(map(float, d))} outside the linearized cone")
        cert = h1 = None
        if inside:
            cert = tangency_test(sys, x0, d, params, tol_active, tol_rank, seed=seed + k)
            h1 = h1_check(sys, x0, d, params.cone_tol, tol_active)
        results.append(DirectionResult(tuple(map(float, d)), source, inside, cert, h1, oracle))
    certs = [r for r in results if r.tangency is not None]
    witness = next((r.direction for r in certs if r.tangency.verdict == "not-tangent"), None)
    if witness is not None:
        verdict = "fails"
    elif t_in_gamma and all(r.tangency.verdict == "tangent" for r in certs):
        verdict = "holds-numerically"
    else:
        verdict = "inconclusive"
    h1_verdicts = [r.h1.verdict for r in certs]
    if not h1_verdicts or all(v == "verified-finite" for v in h1_verdicts):
        h1 = "verified-finite"
    elif all(v in ("verified", "verified-finite") for v in h1_verdicts):
        h1 = "verified"
    else:
        h1 = "unverified"
    notes.append(f"numerical evidence at truncation {sys.truncation}")
    return AbadieReport(
        tuple(map(float, x0)), verdict, witness, cq_report.overall, h1, tuple(results), t_in_gamma, tuple(notes)
    )
