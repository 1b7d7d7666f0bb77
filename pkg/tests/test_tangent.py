import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqa import cq
from cqa import problem as pb
from cqa import tangent as tg

from helpers import CORPUS, corpus, random_licq_system, system

O2 = np.zeros(2)


# -- parameters -------------------------------------------------------------


def test_default_grid():
    grid = tg.CorrectorParams().grid
    assert len(grid) == 12 and grid[0] == 0.1
    assert all(a > b > 0 for a, b in zip(grid, grid[1:]))


def test_grid_must_decrease():
    with pytest.raises(ValueError):
        tg.CorrectorParams(factor=1.5)
    with pytest.raises(ValueError):
        tg.CorrectorParams(t0=0.0)


# -- refined active set -----------------------------------------------------


def test_refined_active_set_examples():
    s72, _ = corpus("example72.json", 6)
    assert tg.refined_active_set(s72, O2, [1.0, 1.0]) == (3, 4, 5, 6)
    assert tg.refined_active_set(s72, O2, [0.0, 0.0]) == (1, 2, 3, 4, 5, 6)
    s71, _ = corpus("example71.json", 6)
    assert tg.refined_active_set(s71, [0.0], [-1.0]) == ()


def test_refined_active_set_requires_cone_membership():
    s72, _ = corpus("example72.json", 6)
    with pytest.raises(tg.DirectionError):
        tg.refined_active_set(s72, O2, [-1.0, 1.0])


# -- corrector --------------------------------------------------------------


def test_corrector_circle_is_radial_projection():
    sys, _ = corpus("circle.json")
    xi = np.array([1.0, 0.1])
    corr, iters = tg.ljusternik_corrector(sys, (1,), xi)
    y = xi + corr
    assert abs(y @ y - 1.0) <= 1e-12
    np.testing.assert_allclose(corr, xi / np.linalg.norm(xi) - xi, atol=1e-12)
    assert np.linalg.norm(corr) == pytest.approx(0.0049876, abs=1e-7)
    assert np.linalg.norm(corr) / abs(sys[1].value(xi)) == pytest.approx(0.5, abs=0.01)
    assert iters >= 1


def test_corrector_is_idle_on_the_manifold():
    sys, _ = corpus("circle.json")
    corr, iters = tg.ljusternik_corrector(sys, (1,), np.array([0.6, 0.8]))
    assert iters == 0 and not np.any(corr)


def test_corrector_example71_even_constraint():
    # g_2(x) = -x^2 + x has its root at 0, so from -t the correction is t
    sys, _ = corpus("example71.json", 6)
    for t in (1e-1, 1e-3):
        corr, _ = tg.ljusternik_corrector(sys, (2,), np.array([-t]))
        assert abs(-t + corr[0]) <= 1e-12
        assert abs(corr[0]) <= 1.5 * abs(sys[2].value([-t]))


def test_corrector_rank_collapse():
    sys, _ = system(2, eqs={1: "x1^2 + x2^2"})
    with pytest.raises(tg.CorrectorError):
        tg.ljusternik_corrector(sys, (1,), np.array([0.0, 0.0]) + 0.0, target=np.array([-1.0]))


def _ljusternik_ratios(sys, J2, x0, offsets, target=None):
    out = []
    f0 = sys.values(x0, J2)
    for off in offsets:
        xi = x0 + off
        corr, _ = tg.ljusternik_corrector(sys, J2, xi, target=target)
        out.append(np.linalg.norm(corr) / np.linalg.norm(sys.values(xi, J2) - f0))
    return np.array(out)


def test_ljusternik_bound_on_circle():
    sys, _ = corpus("circle.json")
    x0 = np.array([1.0, 0.0])
    ratios = _ljusternik_ratios(sys, (1,), x0, [np.array([0.0, 10.0**-k]) for k in range(1, 6)])
    assert np.all((ratios >= 0.4) & (ratios <= 0.6))


@given(st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_ljusternik_bound_uniform_over_scales(seed):
    rng = np.random.default_rng(seed)
    sys, _ = system(3, eqs={1: "x1 + 0.5*x2^2 - 0.3*x3*x1", 2: "x2 - x3 + 0.4*sin(x1)"})
    x0 = np.zeros(3)
    u = rng.normal(size=3)
    u /= np.linalg.norm(u)
    M = sys.jacobian(x0, (1, 2))
    if np.linalg.norm(M @ u) < 0.2:  # stay away from tangent offsets
        return
    ratios = _ljusternik_ratios(sys, (1, 2), x0, [10.0**-k * u for k in range(1, 7)])
    assert ratios.max() <= 3.0
    assert ratios.max() / ratios.min() <= 3.0


# -- tangency test ----------------------------------------------------------


def test_tangency_example71_minus_one():
    sys, _ = corpus("example71.json", 6)
    cert = tg.tangency_test(sys, [0.0], [-1.0])
    assert cert.verdict == "tangent" and cert.J == ()
    assert cert.ratios[-1] <= 1e-3


def test_tangency_example72_diagonal_is_not_tangent():
    sys, _ = corpus("example72.json", 6)
    cert = tg.tangency_test(sys, O2, [1.0, 1.0])
    assert cert.verdict == "not-tangent"
    assert cert.J == (3, 4, 5, 6)


def test_tangency_example72_axes():
    sys, _ = corpus("example72.json", 6)
    for d in ([1.0, 0.0], [0.0, 1.0]):
        assert tg.tangency_test(sys, O2, d).verdict == "tangent"


def test_tangency_outside_linearized_cone():
    sys, _ = corpus("example72.json", 6)
    cert = tg.tangency_test(sys, O2, [-1.0, 0.5])
    assert cert.verdict == "not-tangent"


def test_tangency_zero_direction():
    sys, _ = corpus("circle.json")
    assert tg.tangency_test(sys, [1.0, 0.0], [0.0, 0.0]).verdict == "tangent"


def test_tangent_certificate_invariant():
    sys, _ = corpus("circle.json")
    p = tg.CorrectorParams()
    cert = tg.tangency_test(sys, [1.0, 0.0], [0.0, 1.0], p)
    assert cert.verdict == "tangent"
    last = cert.records[-4:]
    ratios = [r.ratio for r in last]
    assert all(a >= b for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] <= p.ratio_tol
    assert all(max(r.basis_residual, r.dependent_residual, r.inequality_violation) <= p.feas_tol for r in last)
    assert [r.t for r in cert.records] == list(p.grid)


def test_tangency_restores_dependent_constraints():
    sys, _ = corpus("dependence.json")
    cert = tg.tangency_test(sys, [1.0, 0.0], [0.0, -1.0])
    assert cert.verdict == "tangent"
    assert cert.J == (1, 2) and len(cert.J2) == 1
    assert all(r.dependent_residual <= 1e-9 for r in cert.records[-4:])


def test_tangency_with_empty_J_uses_direct_feasibility():
    sys, _ = corpus("affine.json")
    cert = tg.tangency_test(sys, [0.0, 0.5], [1.0, -1.0])
    assert cert.J == () and cert.verdict == "tangent"


@pytest.mark.parametrize(
    "name, x0, d",
    [
        ("example72.json", [0.0, 0.0], [1.0, 0.0]),
        ("example72.json", [0.0, 0.0], [1.0, 1.0]),
        ("example71.json", [0.0], [-1.0]),
        ("circle.json", [1.0, 0.0], [0.0, 1.0]),
        ("affine.json", [0.0, 0.5], [1.0, 0.3]),
    ],
)
def test_positive_homogeneity(name, x0, d):
    sys, _ = corpus(name, 6)
    a = tg.tangency_test(sys, x0, d).verdict
    b = tg.tangency_test(sys, x0, 2 * np.asarray(d)).verdict
    assert a == b


# -- (H1) -------------------------------------------------------------------


def test_h1_example71_verified():
    sys, _ = corpus("example71.json", 6)
    h = tg.h1_check(sys, [0.0], [-1.0])
    assert h.verdict == "verified"
    assert all(m < 0 for m in h.margins.values())
    assert "sufficient" in h.note


def test_h1_finite_system():
    sys, _ = corpus("affine.json")
    for d in ([1.0, 0.0], [1.0, -3.0], [0.0, 1.0]):
        assert tg.h1_check(sys, [0.0, 0.5], d).verdict == "verified-finite"


def test_h1_without_tail_bound_is_unverified():
    raw = json.loads((CORPUS / "example71.json").read_text())
    del raw["inequalities"][0]["family"]["tailBound"]
    sys, _ = system(1, ineqs=raw["inequalities"], indexSymbol="i", N=6)
    assert tg.h1_check(sys, [0.0], [-1.0]).verdict == "unverified"


def test_h1_refuted_tail_bound_is_unverified():
    # -1.5 bounds neither c_i = -1/i nor the slope -1 of the tail members
    raw = json.loads((CORPUS / "example71.json").read_text())
    raw["inequalities"][0]["family"]["tailBound"] = -1.5
    sys, _ = system(1, ineqs=raw["inequalities"], indexSymbol="i", N=6)
    assert tg.h1_check(sys, [0.0], [-1.0]).verdict == "unverified"


def test_h1_requires_cone_membership():
    sys, _ = corpus("example71.json", 6)
    with pytest.raises(tg.DirectionError):
        tg.h1_check(sys, [0.0], [1.0])


def test_h1_verified_invariant():
    sys, _ = corpus("example71.json", 6)
    h = tg.h1_check(sys, [0.0], [-1.0], tol_descent=1e-8, tol_slack=1e-8)
    acts = pb.active_set(sys, [0.0])
    assert h.verdict in ("verified", "verified-finite")
    assert all(h.margins[k] < -1e-8 for k in acts.active if k not in h.refined)
    assert all(acts.slack[k] < -1e-8 for k in acts.inactive)


# -- oracle -----------------------------------------------------------------


def test_oracle_example72():
    sys, _ = corpus("example72.json", 6)
    assert tg.brute_force_tangent_oracle(sys, O2, [1.0, 0.0]).verdict == "accept"
    assert tg.brute_force_tangent_oracle(sys, O2, [0.0, 1.0]).verdict == "accept"
    assert tg.brute_force_tangent_oracle(sys, O2, [1.0, 1.0]).verdict == "reject"


def test_oracle_half_space():
    sys, _ = system(3, ineqs={1: "-x1"})
    assert tg.brute_force_tangent_oracle(sys, np.zeros(3), [1.0, 0.0, 0.0]).accepted
    assert tg.brute_force_tangent_oracle(sys, np.zeros(3), [-1.0, 0.0, 0.0]).verdict == "reject"


def test_oracle_abstains_on_isolated_point():
    sys, _ = system(2, ineqs={1: "x1^2 + x2^2"})
    assert tg.brute_force_tangent_oracle(sys, O2, [1.0, 0.0]).verdict == "abstain"


def test_oracle_is_deterministic():
    sys, _ = corpus("circle.json")
    a = tg.brute_force_tangent_oracle(sys, [1.0, 0.0], [0.0, 1.0], seed=3)
    b = tg.brute_force_tangent_oracle(sys, [1.0, 0.0], [0.0, 1.0], seed=3)
    assert a == b


@pytest.mark.parametrize("seed", range(3))
def test_oracle_agrees_with_certificate_under_licq(seed):
    sys, x0, dirs = random_licq_system(seed, directions=9)
    for d in dirs:
        o = tg.brute_force_tangent_oracle(sys, x0, d, seed=seed)
        if o.verdict == "abstain":
            continue
        assert (tg.tangency_test(sys, x0, d, seed=seed).verdict == "tangent") == o.accepted


# -- Abadie -----------------------------------------------------------------


def test_abadie_example71_holds():
    sys, _ = corpus("example71.json", 6)
    rep = tg.abadie_check(sys, [0.0])
    assert rep.verdict == "holds-numerically"
    assert rep.rcrcq_plus == "yes" and rep.h1 == "verified"
    assert rep.tangent_in_linearized


def test_abadie_example72_fails():
    sys, _ = corpus("example72.json", 6)
    rep = tg.abadie_check(sys, O2)
    assert rep.verdict == "fails"
    np.testing.assert_allclose(np.asarray(rep.witness) / np.linalg.norm(rep.witness), [2**-0.5, 2**-0.5])
    assert rep.rcrcq_plus == "no"
    assert rep.tangent_in_linearized


def test_abadie_unconstrained():
    sys, _ = corpus("unconstrained.json")
    rep = tg.abadie_check(sys, [0.5, -0.25])
    assert rep.verdict == "holds-numerically"


def test_abadie_reuses_cq_report():
    sys, _ = corpus("example71.json", 6)
    spec = cq.NeighborhoodSpec((0.0,))
    cqr = cq.rcrcq_plus_check(sys, [0.0], spec)
    rep = tg.abadie_check(sys, [0.0], nbhd=spec, cq_report=cqr)
    assert rep.rcrcq_plus == cqr.overall


def test_abadie_infeasible_point():
    sys, _ = corpus("circle.json")
    with pytest.raises(pb.InfeasiblePointError):
        tg.abadie_check(sys, [2.0, 0.0])


@pytest.mark.parametrize("name, x0", [("example72.json", [0.0, 0.0]), ("circle.json", [1.0, 0.0]), ("affine.json", [0.0, 0.5])])
def test_oracle_accepted_directions_are_in_linearized_cone(name, x0):
    sys, _ = corpus(name, 6)
    rep = tg.abadie_check(sys, x0)
    cone = pb.linearized_cone(sys, x0)
    for r in rep.directions:
        if r.oracle is not None and r.oracle.accepted:
            assert pb.cone_contains(cone, r.direction, 1e-6)
    assert rep.tangent_in_linearized
