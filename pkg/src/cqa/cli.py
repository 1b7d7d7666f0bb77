"""Command-line front end.

Usage::

    cqa validate FILE
    cqa analyze FILE --point 0,0 [--truncate N] [--radius R] [--samples M]
                [--seed S] [--tol-active T] [--tol-rank T] [--json OUT]
    cqa tangent FILE --point P --direction D [--oracle]
    cqa kkt FILE --point P
    cqa replay REPORT [--json OUT]

Exit status: 0 success, 1 usage or validation error, 2 I/O error,
3 infeasible point.  Negative coordinates need the ``--point=-1,0`` form.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__, cq, kkt, numlin, problem, tangent
from . import expr as ex
from . import report as rp

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INFEASIBLE = 0, 1, 2, 3


class CLIError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


def default_seed():
    raw = os.environ.get("CQA_SEED")
    if raw is None:
        return 42
    try:
        return int(raw)
    except ValueError:
        raise CLIError(f"CQA_SEED must be an integer, got {raw!r}") from None


def _load(path):
    try:
        return problem.load_document(path)
    except problem.DocumentIOError as err:
        raise CLIError(str(err), EXIT_IO) from None
    except problem.DocumentError as err:
        raise CLIError(str(err)) from None


def _system(doc, N):
    try:
        return problem.realize(doc, N)
    except problem.ProblemError as err:
        raise CLIError(str(err)) from None


def _point(text, doc, what="point"):
    try:
        x = problem.parse_point(text, doc)
    except problem.ProblemError as err:
        raise CLIError(str(err)) from None
    if x.size != doc.n:
        raise CLIError(f"{what} has {x.size} coordinates, the problem has {doc.n}")
    return x


def _require_feasible(sys_, x0, tol):
    try:
        acts = problem.active_set(sys_, x0, tol)
    except ex.EvaluationError as err:
        raise CLIError(str(err)) from None
    if not acts.feasible:
        raise CLIError(f"point is infeasible; violated constraints {list(acts.violated)}", EXIT_INFEASIBLE)
    return acts


def _emit(report, out):
    text = rp.dumps(report)
    if out:
        try:
            rp.write_atomic(out, text)
        except OSError as err:
            raise CLIError(f"cannot write {out}: {err.strerror}", EXIT_IO) from None
    else:
        sys.stdout.write(text)


def _header(command, params, doc):
    return {
        "tool": "cqa",
        "toolVersion": __version__,
        "command": command,
        "parameters": params,
        "problem": doc.raw,
    }


# -- commands ---------------------------------------------------------------


def cmd_validate(args):
    doc = _load(args.file)
    sys_ = _system(doc, doc.truncation)
    print(
        f"ok: n={doc.n}, {len(sys_.I0)} equalities and {len(sys_.I1)} inequalities at truncation {sys_.truncation}"
    )
    return EXIT_OK


def run_analyze(doc, params):
    """Full analysis of ``doc`` with the parameter dict of a report."""
    sys_ = _system(doc, params["truncation"])
    x0 = np.array(params["point"], dtype=float)
    acts = _require_feasible(sys_, x0, params["tolActive"])
    cone = problem.linearized_cone(sys_, x0, params["tolActive"])
    nbhd = cq.NeighborhoodSpec(tuple(x0), params["radius"], params["samples"], params["seed"])
    cqrep = cq.rcrcq_plus_check(
        sys_, x0, nbhd, params["tolRank"], params["tolSpan"], tol_active=params["tolActive"]
    )
    cp = tangent.CorrectorParams(**{rp.snake(k): v for k, v in params["corrector"].items()})
    ab = tangent.abadie_check(
        sys_,
        x0,
        cp,
        nbhd,
        cqrep,
        params["tolActive"],
        params["tolRank"],
        params["randomDirections"],
        params["seed"],
        params["angleTol"],
    )
    out = _header("analyze", params, doc)
    out["truncation"] = sys_.truncation
    out["labels"] = {"I0": list(sys_.I0), "I1": list(sys_.I1)}
    out["activeSet"] = rp.active_set_payload(acts)
    out["linearizedCone"] = rp.cone_payload(cone, sys_.n)
    interior = not sys_.I0 and not acts.active
    out["tangentCone"] = {
        "fullSpace": interior,
        "note": "x0 is interior to every constraint: T = Gamma = R^n"
        if interior
        else "sampled through the direction battery of the Abadie check",
    }
    out["rcrcqPlus"] = rp.cq_payload(cqrep)
    out["abadie"] = rp.abadie_payload(ab)
    if doc.objective is not None:
        sol = kkt.lagrange_multipliers(sys_, doc.objective, x0, params["tolResidual"], params["tolActive"])
        out["multipliers"] = rp.multipliers_payload(sol)
    out["multiplierSet"] = rp.jsonable(kkt.multiplier_set_closedness_note(sys_, x0, params["tolActive"]))
    out["summary"] = {
        "rcrcqPlus": cqrep.overall,
        "failingSubset": list(cqrep.witness.J) if cqrep.witness else None,
        "abadie": ab.verdict,
        "witness": rp.jsonable(ab.witness),
        "h1": ab.h1,
        "kkt": out["multipliers"]["verdict"] if "multipliers" in out else None,
        "truncation": sys_.truncation,
    }
    return out


def analyze_params(doc, args):
    x0 = _point(args.point, doc)
    return {
        "point": [float(v) for v in x0],
        "truncation": args.truncate or doc.truncation or problem.DEFAULT_TRUNCATION,
        "radius": args.radius,
        "samples": args.samples,
        "seed": args.seed if args.seed is not None else default_seed(),
        "tolActive": args.tol_active,
        "tolRank": args.tol_rank,
        "tolSpan": args.tol_span,
        "tolResidual": args.tol_residual,
        "randomDirections": args.directions,
        "angleTol": args.angle_tol,
        "corrector": rp.jsonable(tangent.CorrectorParams()),
    }


def cmd_analyze(args):
    doc = _load(args.file)
    params = analyze_params(doc, args)
    if params["samples"] < 8 or not params["radius"] > 0:
        raise CLIError("need --samples >= 8 and --radius > 0")
    _emit(run_analyze(doc, params), args.json)
    return EXIT_OK


def cmd_tangent(args):
    doc = _load(args.file)
    x0 = _point(args.point, doc)
    d = _point(args.direction, doc, "direction")
    if not np.any(d):
        raise CLIError("direction must be nonzero")
    seed = args.seed if args.seed is not None else default_seed()
    params = {
        "point": [float(v) for v in x0],
        "direction": [float(v) for v in d],
        "truncation": args.truncate or doc.truncation or problem.DEFAULT_TRUNCATION,
        "seed": seed,
        "tolActive": args.tol_active,
        "tolRank": args.tol_rank,
        "oracle": bool(args.oracle),
        "corrector": rp.jsonable(tangent.CorrectorParams()),
    }
    sys_ = _system(doc, params["truncation"])
    _require_feasible(sys_, x0, args.tol_active)
    cp = tangent.CorrectorParams()
    cert = tangent.tangency_test(sys_, x0, d, cp, args.tol_active, args.tol_rank, seed=seed)
    out = _header("tangent", params, doc)
    out["truncation"] = sys_.truncation
    out["certificate"] = rp.jsonable(cert)
    cone = problem.linearized_cone(sys_, x0, args.tol_active)
    out["h1"] = None
    if problem.cone_contains(cone, d, cp.cone_tol):
        out["h1"] = rp.jsonable(tangent.h1_check(sys_, x0, d, cp.cone_tol, args.tol_active))
    if args.oracle:
        orc = tangent.brute_force_tangent_oracle(sys_, x0, d, seed=seed, tol_active=args.tol_active)
        out["oracle"] = rp.jsonable(orc)
    _emit(out, args.json)
    return EXIT_OK


def cmd_kkt(args):
    doc = _load(args.file)
    if doc.objective is None:
        raise CLIError("the document has no objective")
    x0 = _point(args.point, doc)
    params = {
        "point": [float(v) for v in x0],
        "truncation": args.truncate or doc.truncation or problem.DEFAULT_TRUNCATION,
        "tolActive": args.tol_active,
        "tolResidual": args.tol_residual,
    }
    sys_ = _system(doc, params["truncation"])
    _require_feasible(sys_, x0, args.tol_active)
    sol = kkt.lagrange_multipliers(sys_, doc.objective, x0, args.tol_residual, args.tol_active)
    out = _header("kkt", params, doc)
    out["truncation"] = sys_.truncation
    out["multipliers"] = rp.multipliers_payload(sol)
    out["multiplierSet"] = rp.jsonable(kkt.multiplier_set_closedness_note(sys_, x0, args.tol_active))
    _emit(out, args.json)
    return EXIT_OK


def cmd_replay(args):
    import json

    try:
        with open(args.report) as fh:
            old = json.load(fh)
    except OSError as err:
        raise CLIError(f"cannot read {args.report}: {err.strerror}", EXIT_IO) from None
    except json.JSONDecodeError as err:
        raise CLIError(f"{args.report} is not valid JSON: {err}", EXIT_IO) from None
    if old.get("command") != "analyze":
        raise CLIError("only analyze reports can be replayed")
    try:
        doc = problem.parse_document(old["problem"])
    except problem.DocumentError as err:
        raise CLIError(str(err)) from None
    new = run_analyze(doc, old["parameters"])
    if args.json:
        _emit(new, args.json)
    same = rp.digest(new) == rp.digest(old)
    print(f"{'identical' if same else 'DIFFERENT'} sha256={rp.digest(new)}", file=sys.stderr)
    return EXIT_OK if same else EXIT_USAGE


def build_parser():
    p = argparse.ArgumentParser(prog="cqa", description="Constraint qualification analysis at a feasible point.")
    p.add_argument("--version", action="version", version=f"cqa {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a problem document")
    v.add_argument("file")
    v.set_defaults(func=cmd_validate)

    def common(sp):
        sp.add_argument("file")
        sp.add_argument("--point", required=True, help="comma-separated coordinates or a named document point")
        sp.add_argument("--truncate", type=int, default=None, help="family truncation N")
        sp.add_argument("--tol-active", type=float, default=problem.DEFAULT_ACTIVE_TOL)
        sp.add_argument("--json", default=None, help="write the report here instead of stdout")

    a = sub.add_parser("analyze", help="active set, cones, RCRCQ+, Abadie and multipliers")
    common(a)
    a.add_argument("--radius", type=float, default=0.1)
    a.add_argument("--samples", type=int, default=64)
    a.add_argument("--seed", type=int, default=None)
    a.add_argument("--tol-rank", type=float, default=numlin.DEFAULT_RANK_TOL)
    a.add_argument("--tol-span", type=float, default=cq.DEFAULT_SPAN_TOL)
    a.add_argument("--tol-residual", type=float, default=kkt.DEFAULT_RESIDUAL_TOL)
    a.add_argument("--directions", type=int, default=4, help="random linearized-cone directions")
    a.add_argument("--angle-tol", type=float, default=0.1)
    a.set_defaults(func=cmd_analyze)

    t = sub.add_parser("tangent", help="tangency certificate for one direction")
    common(t)
    t.add_argument("--direction", required=True)
    t.add_argument("--oracle", action="store_true", help="also run the brute-force tangent oracle")
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--tol-rank", type=float, default=numlin.DEFAULT_RANK_TOL)
    t.set_defaults(func=cmd_tangent)

    k = sub.add_parser("kkt", help="Lagrange multipliers at a point")
    common(k)
    k.add_argument("--tol-residual", type=float, default=kkt.DEFAULT_RESIDUAL_TOL)
    k.set_defaults(func=cmd_kkt)

    r = sub.add_parser("replay", help="re-run an analyze report from its embedded parameters")
    r.add_argument("report")
    r.add_argument("--json", default=None)
    r.set_defaults(func=cmd_replay)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except CLIError as err:
        print(f"cqa: {err}", file=sys.stderr)
        return err.code
    except problem.InfeasiblePointError as err:
        print(f"cqa: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ex.ExprError, problem.ProblemError) as err:
        print(f"cqa: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
