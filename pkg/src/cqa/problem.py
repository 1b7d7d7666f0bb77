"""Constraint systems, problem documents, active sets and cones.

A system describes

    F = {x in R^n : g_i(x) = 0 (i in I0),  g_i(x) <= 0 (i in I1)}

where constraints are either scalar entries with an explicit integer label
or index families ``g_i`` whose members are realized up to a truncation
level N.  Family member ``i`` gets the label ``base + i``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex

DOCUMENT_VERSION = "cqa/1"
DEFAULT_ACTIVE_TOL = 1e-8
DEFAULT_TRUNCATION = 6


class ProblemError(Exception):
    pass


class DocumentError(ProblemError):
    """Invalid problem document; ``path`` names the offending field."""

    def __init__(self, message, path="", offset=None):
        self.path = path
        self.offset = offset
        text = f"{path}: {message}" if path else message
        if offset is not None:
            text += f" (byte {offset})"
        super().__init__(text)


class DocumentIOError(ProblemError):
    """Unreadable or corrupt document file."""


class InfeasiblePointError(ProblemError):
    def __init__(self, violated, message=None):
        self.violated = tuple(violated)
        super().__init__(message or f"point is infeasible; violated constraints {list(self.violated)}")


# -- document ---------------------------------------------------------------


@dataclass(frozen=True)
class ScalarEntry:
    label: int
    expr: ex.Expression
    source: str


@dataclass(frozen=True)
class FamilyEntry:
    base: int
    lo: int
    hi: int | None  # None: unbounded
    expr: ex.Expression
    source: str
    index_symbol: str
    coefficients: dict = field(default_factory=dict)
    tail_bound: float | None = None

    def member(self, i):
        """Expression of member ``i`` with coefficients and index substituted."""
        return ex.substitute(self.expr, index=i, env=self.coefficients)

    def label(self, i):
        return self.base + i

    @property
    def infinite(self):
        return self.hi is None


@dataclass(frozen=True)
class ProblemDocument:
    n: int
    equalities: tuple
    inequalities: tuple
    index_symbol: str = "i"
    objective: ex.Expression | None = None
    points: dict = field(default_factory=dict)
    truncation: int | None = None
    version: str = DOCUMENT_VERSION
    raw: dict = field(default_factory=dict, compare=False, repr=False)


def _expr_field(raw, path, n, index_symbol=None, names=()):
    if not isinstance(raw, str):
        raise DocumentError("expected an expression string", path)
    try:
        return ex.parse(raw, n=n, index_symbol=index_symbol, names=names)
    except ex.ParseError as err:
        raise DocumentError(err.message, path, err.offset) from None


def _int_field(raw, path):
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise DocumentError("expected an integer", path)
    return raw


def _entry(raw, path, n, index_symbol):
    if not isinstance(raw, dict):
        raise DocumentError("expected an object", path)
    if "family" in raw:
        fam = raw["family"]
        fpath = f"{path}.family"
        if not isinstance(fam, dict):
            raise DocumentError("expected an object", fpath)
        symbol = fam.get("indexSymbol", index_symbol)
        base = _int_field(fam.get("base", 0), f"{fpath}.base")
        rng = fam.get("range")
        if not isinstance(rng, list) or len(rng) != 2:
            raise DocumentError("expected [lo, hi] with hi an integer or \"inf\"", f"{fpath}.range")
        lo = _int_field(rng[0], f"{fpath}.range[0]")
        if rng[1] == "inf":
            hi = None
        else:
            hi = _int_field(rng[1], f"{fpath}.range[1]")
            if hi < lo:
                raise DocumentError("empty range", f"{fpath}.range")
        coeffs = fam.get("coefficients", {})
        if not isinstance(coeffs, dict):
            raise DocumentError("expected an object", f"{fpath}.coefficients")
        parsed = {}
        for name, src in coeffs.items():
            if name in ex.FUNCTIONS or name == symbol or ex._VAR.match(name):
                raise DocumentError(f"coefficient name {name!r} is reserved", f"{fpath}.coefficients")
            # coefficients are functions of the index only
            parsed[name] = _expr_field(src, f"{fpath}.coefficients.{name}", 0, symbol)
        e = _expr_field(fam.get("expr"), f"{fpath}.expr", n, symbol, tuple(parsed))
        tail = fam.get("tailBound")
        if tail is not None:
            if isinstance(tail, bool) or not isinstance(tail, (int, float)) or not tail < 0:
                raise DocumentError("tailBound must be a negative number", f"{fpath}.tailBound")
            tail = float(tail)
        return FamilyEntry(base, lo, hi, e, fam["expr"], symbol, parsed, tail)
    label = _int_field(raw.get("label"), f"{path}.label")
    e = _expr_field(raw.get("expr"), f"{path}.expr", n)
    return ScalarEntry(label, e, raw["expr"])


def parse_document(raw):
    """Validate a decoded JSON document and build a :class:`ProblemDocument`."""
    if not isinstance(raw, dict):
        raise DocumentError("document must be a JSON object")
    version = raw.get("version", DOCUMENT_VERSION)
    if version != DOCUMENT_VERSION:
        raise DocumentError(f"unsupported version {version!r}", "version")
    n = _int_field(raw.get("n"), "n")
    if n < 1:
        raise DocumentError("need at least one variable", "n")
    index_symbol = raw.get("indexSymbol", "i")
    if not isinstance(index_symbol, str) or not index_symbol.isidentifier() or index_symbol in ex.FUNCTIONS:
        raise DocumentError("invalid index symbol", "indexSymbol")
    groups = {}
    for key in ("equalities", "inequalities"):
        items = raw.get(key, [])
        if not isinstance(items, list):
            raise DocumentError("expected an array", key)
        groups[key] = tuple(_entry(item, f"{key}[{k}]", n, index_symbol) for k, item in enumerate(items))
    objective = None
    if raw.get("objective") is not None:
        objective = _expr_field(raw["objective"], "objective", n)
    points = {}
    for name, value in (raw.get("points") or {}).items():
        if not isinstance(value, list) or len(value) != n or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raise DocumentError(f"expected {n} numbers", f"points.{name}")
        points[name] = tuple(float(v) for v in value)
    truncation = raw.get("truncation")
    if truncation is not None:
        truncation = _int_field(truncation, "truncation")
    doc = ProblemDocument(
        n=n,
        equalities=groups["equalities"],
        inequalities=groups["inequalities"],
        index_symbol=index_symbol,
        objective=objective,
        points=points,
        truncation=truncation,
        version=version,
        raw=raw,
    )
    _check_labels(doc, truncation or DEFAULT_TRUNCATION, strict_lower=False)
    return doc


def load_document(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as err:
        raise DocumentIOError(f"cannot read {path}: {err.strerror}") from None
    try:
        raw = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise DocumentIOError(f"{path} is not valid JSON: {err}") from None
    return parse_document(raw)


# -- realized systems -------------------------------------------------------


@dataclass(frozen=True)
class Constraint:
    label: int
    kind: str  # "eq" or "ineq"
    expr: ex.Expression
    family: FamilyEntry | None = None
    index: int | None = None

    def value(self, x):
        try:
            return ex.evaluate(self.expr, x)
        except ex.EvaluationError as err:
            raise ex.EvaluationError(f"constraint {self.label}: {err}") from None

    def gradient(self, x):
        try:
            return ex.gradient(self.expr, x)
        except ex.EvaluationError as err:
            raise ex.EvaluationError(f"constraint {self.label}: {err}") from None


@dataclass(frozen=True)
class ConstraintSystem:
    n: int
    constraints: tuple
    truncation: int
    families: tuple = ()
    objective: ex.Expression | None = None

    def __post_init__(self):
        object.__setattr__(self, "_by_label", {c.label: c for c in self.constraints})

    @property
    def I0(self):
        return tuple(c.label for c in self.constraints if c.kind == "eq")

    @property
    def I1(self):
        return tuple(c.label for c in self.constraints if c.kind == "ineq")

    @property
    def labels(self):
        return tuple(c.label for c in self.constraints)

    def __getitem__(self, label):
        return self._by_label[label]

    def values(self, x, labels=None):
        labels = self.labels if labels is None else labels
        return np.array([self[k].value(x) for k in labels], dtype=float)

    def jacobian(self, x, labels=None):
        labels = self.labels if labels is None else labels
        if not labels:
            return np.zeros((0, self.n))
        return np.array([self[k].gradient(x) for k in labels], dtype=float)

    def violation(self, x):
        """Max of |g_i| over equalities and g_i^+ over inequalities."""
        worst = 0.0
        for c in self.constraints:
            v = c.value(x)
            worst = max(worst, abs(v) if c.kind == "eq" else v)
        return worst

    def tail(self, count):
        """Family members beyond the truncation, up to ``count`` per family.

        Returns ``(family, constraints)`` pairs.  Families whose range ends at
        or before the truncation contribute nothing.
        """
        out = []
        for fam in self.families:
            start = max(self.truncation + 1, fam.lo)
            stop = start + count - 1
            if fam.hi is not None:
                stop = min(stop, fam.hi)
            members = tuple(
                Constraint(fam.label(i), "ineq", fam.member(i), fam, i) for i in range(start, stop + 1)
            )
            if members:
                out.append((fam, members))
        return out

    def has_unrealized_tail(self):
        return any(fam.hi is None or fam.hi > self.truncation for fam in self.families)


def _check_labels(doc, N, strict_lower=True):
    families = [e for e in doc.equalities + doc.inequalities if isinstance(e, FamilyEntry)]
    if strict_lower and families and N < min(f.lo for f in families):
        raise ProblemError(f"truncation {N} is below the smallest family lower bound {min(f.lo for f in families)}")
    seen = {}
    for kind, group in (("eq", doc.equalities), ("ineq", doc.inequalities)):
        for k, entry in enumerate(group):
            if isinstance(entry, ScalarEntry):
                labels = [entry.label]
            else:
                hi = N if entry.hi is None else min(entry.hi, N)
                labels = [entry.label(i) for i in range(entry.lo, hi + 1)]
            for label in labels:
                if label in seen:
                    raise DocumentError(f"label {label} is used twice", seen[label])
                seen[label] = f"{'equalities' if kind == 'eq' else 'inequalities'}[{k}]"


def realize(doc, N=None):
    """Expand all families of ``doc`` up to truncation ``N``."""
    N = N if N is not None else (doc.truncation or DEFAULT_TRUNCATION)
    if N < 1:
        raise ProblemError("truncation must be at least 1")
    _check_labels(doc, N)
    constraints = []
    families = []
    for kind, group in (("eq", doc.equalities), ("ineq", doc.inequalities)):
        for entry in group:
            if isinstance(entry, ScalarEntry):
                constraints.append(Constraint(entry.label, kind, entry.expr))
                continue
            if kind == "ineq":
                families.append(entry)
            hi = N if entry.hi is None else min(entry.hi, N)
            for i in range(entry.lo, hi + 1):
                constraints.append(Constraint(entry.label(i), kind, entry.member(i), entry, i))
    return ConstraintSystem(doc.n, tuple(constraints), N, tuple(families), doc.objective)


# -- active set and cones ---------------------------------------------------


@dataclass(frozen=True)
class ActiveSet:
    point: tuple
    tol: float
    active: tuple
    slack: dict
    equality_residuals: dict
    violated: tuple

    @property
    def feasible(self):
        return not self.violated

    @property
    def verdict(self):
        return "feasible" if self.feasible else "infeasible"

    @property
    def inactive(self):
        return tuple(k for k in self.slack if k not in self.active)


def active_set(sys, x, tol=DEFAULT_ACTIVE_TOL):
    """Inequalities with |g_i(x)| <= tol; ties count as active."""
    x = np.asarray(x, dtype=float)
    slack, eqres, active, violated = {}, {}, [], []
    for c in sys.constraints:
        v = c.value(x)
        if c.kind == "eq":
            eqres[c.label] = v
            if abs(v) > tol:
                violated.append(c.label)
        else:
            slack[c.label] = v
            if abs(v) <= tol:
                active.append(c.label)
            elif v > tol:
                violated.append(c.label)
    return ActiveSet(tuple(float(t) for t in x), tol, tuple(active), slack, eqres, tuple(violated))


@dataclass(frozen=True)
class LinearizedCone:
    point: tuple
    n: int
    equality_labels: tuple
    equality_rows: np.ndarray
    active_labels: tuple
    active_rows: np.ndarray

    @property
    def rows(self):
        return np.vstack([self.equality_rows, self.active_rows])

    @property
    def labels(self):
        return self.equality_labels + self.active_labels


def linearized_cone(sys, x0, tol=DEFAULT_ACTIVE_TOL):
    acts = active_set(sys, x0, tol)
    if not acts.feasible:
        raise InfeasiblePointError(acts.violated)
    x0 = np.asarray(x0, dtype=float)
    return LinearizedCone(
        acts.point,
        sys.n,
        sys.I0,
        sys.jacobian(x0, sys.I0),
        acts.active,
        sys.jacobian(x0, acts.active),
    )


def cone_contains(cone, d, tol=1e-9):
    """Membership of ``d`` in the linearized cone, up to ``tol * |d|``."""
    d = np.asarray(d, dtype=float)
    scale = tol * float(np.linalg.norm(d))
    if cone.equality_rows.size and np.any(np.abs(cone.equality_rows @ d) > scale):
        return False
    if cone.active_rows.size and np.any(cone.active_rows @ d > scale):
        return False
    return True


def tangent_cone_of_K(y0, I0, I1, tol=DEFAULT_ACTIVE_TOL):
    """Sign pattern of the tangent cone of the basis cone K at ``y0``.

    Coordinates are 1-based labels into ``y0``.  Returns a dict mapping each
    coordinate to ``"zero"``, ``"nonpos"`` or ``"free"``.
    """
    I0, I1 = set(I0), set(I1)
    if I0 & I1:
        raise ProblemError("I0 and I1 must be disjoint")
    out = {}
    for k, y in enumerate(y0, start=1):
        if k in I0:
            if abs(y) > tol:
                raise ProblemError(f"y0 is not in K: coordinate {k} must vanish")
            out[k] = "zero"
        elif k in I1:
            if y > tol:
                raise ProblemError(f"y0 is not in K: coordinate {k} must be nonpositive")
            out[k] = "nonpos" if y >= -tol else "free"
        else:
            out[k] = "free"
    return out


def parse_point(text, doc=None):
    """``"0,0"`` style coordinates or the name of a document point."""
    if doc is not None and text in doc.points:
        return np.array(doc.points[text])
    try:
        values = [float(t) for t in text.replace(" ", "").split(",") if t != ""]
    except ValueError:
        raise ProblemError(f"cannot parse point {text!r}") from None
    if not values or not all(math.isfinite(v) for v in values):
        raise ProblemError(f"cannot parse point {text!r}")
    return np.array(values)
