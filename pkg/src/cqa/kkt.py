"""Lagrange multipliers at a feasible point.

Sign convention: the Lagrangian is ``L(x, lam) = f(x) + sum_i lam_i g_i(x)``
with ``lam`` in the normal cone of K at G(x0).  Since inequality
coordinates of K are nonpositive, this gives

    lam_i free    for equalities (i in I0)
    lam_i >= 0    for active inequalities (i in I(x0))
    lam_i = 0     for inactive inequalities

and stationarity reads ``Df(x0) + sum_i lam_i Dg_i(x0) = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from . import numlin
from .problem import InfeasiblePointError, active_set

DEFAULT_RESIDUAL_TOL = 1e-8


class PatternError(ValueError):
    pass


@dataclass(frozen=True)
class NormalConePattern:
    classes: dict  # label -> "free" | "nonneg" | "zero"

    def labels(self, cls):
        return tuple(k for k, c in self.classes.items() if c == cls)


def normal_cone_pattern(sys, x0, tol_active=1e-8):
    acts = active_set(sys, x0, tol_active)
    if not acts.feasible:
        raise InfeasiblePointError(acts.violated)
    classes = {}
    for c in sys.constraints:
        if c.kind == "eq":
            classes[c.label] = "free"
        elif c.label in acts.active:
            classes[c.label] = "nonneg"
        else:
            classes[c.label] = "zero"
    return NormalConePattern(classes)


@dataclass(frozen=True)
class MultiplierSolution:
    multipliers: dict
    residual: float
    verdict: str  # KKT | no-multiplier-found
    tol: float
    pattern: NormalConePattern


def _objective_gradient(f0, x0, n):
    if f0 is None:
        return np.zeros(n)
    return ex.gradient(f0, np.asarray(x0, dtype=float))


def lagrange_multipliers(sys, f0, x0, tol_res=DEFAULT_RESIDUAL_TOL, tol_active=1e-8):
    """Multipliers minimizing the stationarity residual under the sign pattern.

    When the active gradients are dependent the multiplier is not unique;
    the returned one comes from minimum-norm subproblem solves.
    """
    x0 = np.asarray(x0, dtype=float)
    pattern = normal_cone_pattern(sys, x0, tol_active)
    free = pattern.labels("free")
    nonneg = pattern.labels("nonneg")
    cols = free + nonneg
    A = sys.jacobian(x0, cols).T if cols else np.zeros((sys.n, 0))
    b = -_objective_gradient(f0, x0, sys.n)
    lam, res = numlin.signed_least_squares(
        A, b, free=range(len(free)), nonneg=range(len(free), len(cols))
    )
    multipliers = {k: 0.0 for k in pattern.classes}
    for k, v in zip(cols, lam):
        multipliers[k] = float(v)
    verdict = "KKT" if res <= tol_res else "no-multiplier-found"
    return MultiplierSolution(multipliers, res, verdict, tol_res, pattern)


def kkt_residual(sys, f0, x0, lam, tol_active=1e-8):
    """|Df(x0) + sum_i lam_i Dg_i(x0)|; ``lam`` must obey the sign pattern."""
    x0 = np.asarray(x0, dtype=float)
    pattern = normal_cone_pattern(sys, x0, tol_active)
    total = _objective_gradient(f0, x0, sys.n).copy()
    for k, v in lam.items():
        cls = pattern.classes.get(k)
        if cls is None:
            raise PatternError(f"unknown constraint label {k}")
        if cls == "zero" and v != 0.0:
            raise PatternError(f"multiplier of inactive constraint {k} must vanish")
        if cls == "nonneg" and v < -1e-12:
            raise PatternError(f"multiplier of active constraint {k} must be nonnegative")
        if v != 0.0:
            total += v * sys[k].gradient(x0)
    return float(np.linalg.norm(total))


@dataclass(frozen=True)
class ClosednessNote:
    generators: tuple  # (label, sign class, gradient)
    rank: int
    statement: str


def multiplier_set_closedness_note(sys, x0, tol_active=1e-8):
    """The multiplier cone {sum a_i Dg_i(x0) : signs per pattern} is finitely
    generated at finite truncation, hence closed; list its generators."""
    x0 = np.asarray(x0, dtype=float)
    pattern = normal_cone_pattern(sys, x0, tol_active)
    labels = pattern.labels("free") + pattern.labels("nonneg")
    labels = tuple(k for k in sys.labels if k in labels)
    M = sys.jacobian(x0, labels)
    gens = tuple((k, pattern.classes[k], tuple(map(float, row))) for k, row in zip(labels, M))
    rank = numlin.numerical_rank(M, labels).rank if labels else 0
    if labels:
        statement = (
            f"finitely generated by {len(labels)} gradients (rank {rank}) at truncation {sys.truncation}, hence closed"
        )
    else:
        statement = "no equality or active constraint: the multiplier cone is {0}"
    return ClosednessNote(gens, rank, statement)
