"""JSON payloads for analysis reports (lowerCamelCase keys)."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import re
import tempfile

import numpy as np


def camel(name):
    head, *rest = name.split("_")
    return head + "".join(part[:1].upper() + part[1:] for part in rest)


def snake(name):
    return re.sub(r"(?<!^)([A-Z])", lambda m: "_" + m.group(1).lower(), name)


def jsonable(obj):
    """Plain JSON data from dataclasses, arrays, tuples and numbers.

    Non-finite floats become ``null``.
    """
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {camel(f.name): jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x + 0.0 if math.isfinite(x) else None
    return obj


def active_set_payload(acts):
    return {
        "point": jsonable(acts.point),
        "tolerance": acts.tol,
        "verdict": acts.verdict,
        "active": list(acts.active),
        "inactive": list(acts.inactive),
        "violated": list(acts.violated),
        "slack": jsonable(acts.slack),
        "equalityResiduals": jsonable(acts.equality_residuals),
    }


def cone_payload(cone, n):
    rows = cone.rows
    full = rows.shape[0] == 0 or not np.any(np.abs(rows) > 0)
    return {
        "basePoint": jsonable(cone.point),
        "equalityLabels": list(cone.equality_labels),
        "equalityRows": jsonable(cone.equality_rows),
        "activeLabels": list(cone.active_labels),
        "activeRows": jsonable(cone.active_rows),
        "rowCount": int(rows.shape[0]),
        "fullSpace": bool(full),
        "dimension": n,
    }


def crc_payload(v):
    out = {
        "J": list(v.J),
        "J2": list(v.J2),
        "holds": v.holds,
        "centerRank": v.center_rank,
        "centerSingularValues": jsonable(v.center_profile.singular_values),
        "centerMarginal": v.center_profile.marginal,
        "sampleRanks": list(v.sample_ranks),
        "spanResidual": jsonable(v.span_residual),
        "witness": None,
    }
    if v.witness is not None:
        out["witness"] = jsonable(v.witness)
    return out


def cq_payload(rep):
    witness = rep.witness
    return {
        "overall": rep.overall,
        "coverage": rep.coverage,
        "point": jsonable(rep.point),
        "truncation": rep.truncation,
        "active": list(rep.active),
        "equalities": list(rep.equalities),
        "radius": rep.radius,
        "samples": rep.samples,
        "seed": rep.seed,
        "subsetCount": len(rep.verdicts),
        "failingSubsets": [list(v.J) for v in rep.failing],
        "witness": list(witness.J) if witness is not None else None,
        "subsets": [crc_payload(v) for v in rep.verdicts],
        "automaticConditions": list(rep.automatic_conditions),
        "notes": list(rep.notes),
    }


def certificate_payload(cert):
    return jsonable(cert)


def abadie_payload(rep):
    return {
        "verdict": rep.verdict,
        "witness": jsonable(rep.witness),
        "rcrcqPlus": rep.rcrcq_plus,
        "h1": rep.h1,
        "tangentInLinearized": rep.tangent_in_linearized,
        "directions": [jsonable(d) for d in rep.directions],
        "notes": list(rep.notes),
    }


def multipliers_payload(sol):
    return {
        "verdict": sol.verdict,
        "multipliers": jsonable(sol.multipliers),
        "residual": sol.residual,
        "tolerance": sol.tol,
        "pattern": jsonable(sol.pattern.classes),
    }


def dumps(report):
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def digest(report):
    return hashlib.sha256(json.dumps(report, sort_keys=True, allow_nan=False).encode()).hexdigest()


def write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".cqa-", suffix=".tmp")
    umask = os.umask(0)
    os.umask(umask)
    try:
        os.chmod(tmp, 0o666 & ~umask)
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
