"""Empirical Ljusternik constant of the Gauss-Newton corrector.

    python3 scripts/ljusternik_bound.py

For each test system the corrector is started from x0 + delta*u for a
fixed offset direction u and delta = 1e-1 ... 1e-6; the table lists
|x(xi)| / |f(xi) - f(x0)|, which must stay below one constant K.
"""

import numpy as np

from cqa import problem, tangent

SYSTEMS = {
    "circle": (2, {1: "x1^2 + x2^2 - 1"}, (1, 0), (0, 1)),
    "sphere-plane": (3, {1: "x1^2 + x2^2 + x3^2 - 1", 2: "x1 - x3"}, (2**-0.5, 0, 2**-0.5), (0.3, 1, -0.2)),
    "curved": (3, {1: "x1 + 0.5*x2^2 - 0.3*x3*x1", 2: "x2 - x3 + 0.4*sin(x1)"}, (0, 0, 0), (1, 0.5, 2)),
}


def main():
    deltas = [10.0**-k for k in range(1, 7)]
    print(f"{'system':14s}" + "".join(f"{d:>10.0e}" for d in deltas) + f"{'K':>10s}")
    for name, (n, eqs, x0, u) in SYSTEMS.items():
        raw = {"version": "cqa/1", "n": n, "equalities": [{"label": k, "expr": e} for k, e in eqs.items()]}
        sys_ = problem.realize(problem.parse_document(raw))
        x0 = np.asarray(x0, dtype=float)
        u = np.asarray(u, dtype=float) / np.linalg.norm(u)
        labels = sys_.I0
        f0 = sys_.values(x0, labels)
        ratios = []
        for delta in deltas:
            xi = x0 + delta * u
            corr, _ = tangent.ljusternik_corrector(sys_, labels, xi)
            ratios.append(np.linalg.norm(corr) / np.linalg.norm(sys_.values(xi, labels) - f0))
        print(f"{name:14s}" + "".join(f"{r:10.4f}" for r in ratios) + f"{max(ratios):10.4f}")


if __name__ == "__main__":
    main()
