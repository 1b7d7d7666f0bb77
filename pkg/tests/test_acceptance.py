"""Acceptance gate: one test per criterion, each at its stated tolerance.

``conftest.py`` prints one PASS/FAIL line per criterion at the end of the
run.
"""

import json
import math
import time

import numpy as np
import pytest

from cqa import cli, cq, kkt, numlin
from cqa import expr as ex
from cqa import problem as pb
from cqa import report as rp
from cqa import tangent as tg

from exprgen import central_difference, oracle, random_expression
from helpers import CORPUS, corpus, random_licq_system, system

pytestmark = pytest.mark.acceptance


def _analyze(tmp_path, name, point, N, seed=42, tag="a"):
    out = tmp_path / f"{tag}-{name}"
    argv = ["analyze", str(CORPUS / name), "--point", point, "--truncate", str(N), "--seed", str(seed), "--json", str(out)]
    assert cli.main(argv) == 0
    return json.loads(out.read_text()), out


def test_criterion_1_example72_reproduction(tmp_path):
    start = time.perf_counter()
    rep, _ = _analyze(tmp_path, "example72.json", "0,0", 6)
    c = rep["rcrcqPlus"]
    assert c["overall"] == "no" and c["witness"] == [1, 3]
    assert rep["parameters"]["tolRank"] == 1e-8
    sub = next(s for s in c["subsets"] if s["J"] == [1, 3])
    assert sub["holds"] == "no" and sub["centerRank"] == 1
    pts = cq.NeighborhoodSpec((0.0, 0.0), rep["parameters"]["radius"], rep["parameters"]["samples"], 42).points()
    off_axis = [r for p, r in zip(pts, sub["sampleRanks"]) if abs(p[1]) > 1e-12 and abs(p[0]) > 1e-12]
    assert off_axis and set(off_axis) == {2}
    ab = rep["abadie"]
    assert ab["verdict"] == "fails" and ab["witness"] == [1.0, 1.0] and ab["rcrcqPlus"] == "no"
    sys, _ = corpus("example72.json", 6)
    o = [tg.brute_force_tangent_oracle(sys, [0.0, 0.0], d, seed=42).verdict for d in ([1, 1], [1, 0], [0, 1])]
    assert o == ["reject", "accept", "accept"]
    assert time.perf_counter() - start < 5.0


def test_criterion_2_example71_reproduction():
    start = time.perf_counter()
    verdicts = []
    for N in (4, 6, 12):
        sys, _ = corpus("example71.json", N)
        cone = pb.linearized_cone(sys, [0.0])
        member = (pb.cone_contains(cone, [-1.0]), pb.cone_contains(cone, [1.0]))
        assert member == (True, False)
        rcr = cq.rcrcq_plus_check(sys, [0.0], cq.NeighborhoodSpec((0.0,)))
        h1 = tg.h1_check(sys, [0.0], [-1.0])
        cert = tg.tangency_test(sys, [0.0], [-1.0], seed=42)
        last = cert.ratios[-4:]
        assert all(a >= b for a, b in zip(last, last[1:])) and last[-1] <= 1e-3
        verdicts.append((member, rcr.overall, h1.verdict, cert.verdict))
    assert verdicts[0][1:] == ("yes", "verified", "tangent")
    assert len(set(verdicts)) == 1
    assert time.perf_counter() - start < 10.0


def test_criterion_3_ljusternik_bound():
    sys, _ = corpus("circle.json")
    x0 = np.array([1.0, 0.0])
    ratios = []
    for k in range(1, 6):
        xi = x0 + np.array([0.0, 10.0**-k])
        corr, _ = tg.ljusternik_corrector(sys, (1,), xi)
        ratios.append(np.linalg.norm(corr) / abs(sys[1].value(xi) - sys[1].value(x0)))
    assert all(abs(r - 0.5) <= 0.1 for r in ratios), ratios


def test_criterion_4_delta_identity():
    rng = np.random.default_rng(4)
    for _ in range(20):
        n = int(rng.integers(1, 11))
        r = int(rng.integers(1, min(5, n) + 1))
        while True:
            M = rng.normal(size=(r, n))
            if numlin.numerical_rank(M).rank == r:
                break
        x0 = rng.normal(size=n)
        eqs = {}
        for i in range(r):
            lin = " + ".join(f"({float(M[i, j])!r})*(x{j + 1} - ({float(x0[j])!r}))" for j in range(n))
            eqs[i + 1] = f"{lin} + 0.1*(x1 - ({float(x0[0])!r}))^2"
        sys, _ = system(n, eqs=eqs)
        J = tuple(range(1, r + 1))
        W = cq.w_matrix(sys, J, J, x0, x0)
        assert np.max(np.abs(W - np.eye(r))) <= 1e-8
        rep = numlin.split_check(sys.jacobian(x0, J))
        assert rep.row_dim + rep.null_dim == n and rep.concatenated_rank == n


def test_criterion_5_functional_dependence():
    sys, _ = corpus("dependence.json")
    rep = cq.functional_dependence_check(sys, (1, 2), (1,), (1.0, 0.0), step_count=50)
    assert len(rep.points) == 50
    assert max(abs(sys[2].value(p)) for p in rep.points) <= 1e-8


def test_criterion_6_gradient_correctness():
    rng = np.random.default_rng(6)
    checked = failures = 0
    while checked < 1000:
        n = int(rng.integers(1, 5))
        src, py = random_expression(rng, n, depth=int(rng.integers(1, 7)), index=True)
        x, i = rng.uniform(-2, 2, n), int(rng.integers(1, 9))
        try:
            val = oracle(py, x, i)
        except (ValueError, OverflowError, ZeroDivisionError):
            continue
        if not (math.isfinite(val) and abs(val) < 1e6):
            continue
        f = lambda y: oracle(py, y, i)  # noqa: E731
        fd, fd_fine = central_difference(f, x, 1e-6), central_difference(f, x, 1e-7)
        if np.any(np.abs(fd - fd_fine) > 1e-7 * np.maximum(1.0, np.abs(fd))):
            continue  # the difference quotient itself is not converged here
        g = ex.gradient(ex.parse(src, n=n, index_symbol="i"), x, i=i)
        failures += bool(np.any(np.abs(g - fd) / np.maximum(1.0, np.maximum(np.abs(g), np.abs(fd))) > 1e-5))
        checked += 1
    assert failures == 0


def test_criterion_7_oracle_equivalence_under_licq():
    start = time.perf_counter()
    disagreements, decided = [], 0
    for seed in range(10):
        sys, x0, dirs = random_licq_system(seed, directions=20)
        rows = np.vstack([sys.jacobian(x0, sys.I0), sys.jacobian(x0, pb.active_set(sys, x0).active)])
        assert numlin.numerical_rank(rows).rank == rows.shape[0]  # LICQ
        for d in dirs:
            o = tg.brute_force_tangent_oracle(sys, x0, d, seed=seed)
            if o.verdict == "abstain":
                continue
            decided += 1
            if (tg.tangency_test(sys, x0, d, seed=seed).verdict == "tangent") != o.accepted:
                disagreements.append((seed, tuple(d)))
    assert disagreements == [] and decided > 0
    assert time.perf_counter() - start < 60.0


def test_criterion_8_kkt():
    s, d = corpus("circle.json")
    assert abs(kkt.lagrange_multipliers(s, d.objective, [1.0, 0.0]).multipliers[1] + 0.5) <= 1e-8
    s, d = corpus("affine.json")
    sol = kkt.lagrange_multipliers(s, d.objective, [0.0, 0.5])
    assert abs(sol.multipliers[1] - 1.0) <= 1e-8
    raw = json.loads((CORPUS / "affine.json").read_text())
    raw["inequalities"].append({"label": 3, "expr": "-x1"})
    dup = pb.realize(pb.parse_document(raw))
    sol2 = kkt.lagrange_multipliers(dup, d.objective, [0.0, 0.5])
    assert sol2.verdict == sol.verdict == "KKT" and sol2.residual == sol.residual


def test_criterion_9_determinism(tmp_path):
    for name, point in (("example72.json", "0,0"), ("example71.json", "0")):
        a, pa = _analyze(tmp_path, name, point, 6, tag="first")
        b, pb_ = _analyze(tmp_path, name, point, 6, tag="second")
        assert rp.digest(a) == rp.digest(b)
        assert pa.read_bytes() == pb_.read_bytes()
