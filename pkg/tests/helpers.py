"""Small builders shared by the test modules."""

from pathlib import Path

from cqa import problem as pb

CORPUS = Path(__file__).resolve().parents[1] / "corpus"


def system(n, eqs=(), ineqs=(), objective=None, N=None, **extra):
    """Realize a system from ``{label: expr}`` dicts (or lists of raw entries)."""

    def entries(spec):
        if isinstance(spec, dict):
            return [{"label": k, "expr": v} for k, v in spec.items()]
        return list(spec)

    raw = {"version": "cqa/1", "n": n, "equalities": entries(eqs), "inequalities": entries(ineqs)}
    if objective is not None:
        raw["objective"] = objective
    raw.update(extra)
    d = pb.parse_document(raw)
    return pb.realize(d, N), d


def corpus(name, N=None):
    d = pb.load_document(CORPUS / name)
    return pb.realize(d, N), d


def random_licq_system(seed, directions=20):
    """Random quadratic system with LICQ at the origin and a direction battery.

    Returns ``(sys, x0, dirs)``.  Active constraints are
    ``a_i.x + x'Q_i x/2`` with linearly independent ``a_i`` (at most one of
    them an equality); one extra inequality is inactive with slack 1/2.
    Directions keep a margin of 0.2 from the boundary of the linearized cone
    except on faces, which are built exactly: inside, on a face, or outside.
    """
    import numpy as np

    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 4))
    k = int(rng.integers(1, n + 1))
    while True:
        A = rng.normal(size=(k, n))
        if np.linalg.svd(A, compute_uv=False)[-1] > 0.3:
            break
    A = A / np.linalg.norm(A, axis=1)[:, None]
    neq = int(rng.random() < 0.3) if k < n else 0

    def quad(a, scale):
        Q = rng.normal(size=(n, n)) * scale
        Q = (Q + Q.T) / 2
        lin = " + ".join(f"({float(a[j])!r})*x{j + 1}" for j in range(n))
        q = " + ".join(f"({float(Q[r, s]) / 2!r})*x{r + 1}*x{s + 1}" for r in range(n) for s in range(n))
        return f"{lin} + {q}"

    eqs = {i + 1: quad(A[i], 0.5) for i in range(neq)}
    ineqs = {i + 1: quad(A[i], 0.5) for i in range(neq, k)}
    ineqs[k + 1] = quad(rng.normal(size=n), 0.3) + " - 0.5"
    sys, _ = system(n, eqs=eqs, ineqs=ineqs)

    dirs = []
    pinv = np.linalg.pinv(A)
    while len(dirs) < directions:
        kind = len(dirs) % 3
        target = np.empty(k)
        target[:neq] = 0.0
        if kind == 0:  # interior of the linearized cone
            target[neq:] = -rng.uniform(0.2, 1.0, k - neq)
        elif kind == 1:  # a face: some active rows exactly zero
            target[neq:] = -rng.uniform(0.2, 1.0, k - neq) * (rng.random(k - neq) < 0.5)
        else:  # outside: one active row clearly positive, or an equality broken
            target[neq:] = -rng.uniform(0.2, 1.0, k - neq)
            target[int(rng.integers(0, k))] = rng.uniform(0.2, 1.0)
        null = np.eye(n) - pinv @ A
        d = pinv @ target + null @ rng.normal(size=n) * 0.5
        if np.linalg.norm(d) < 1e-3:
            continue
        d = d / np.linalg.norm(d)
        rows = A @ d
        # re-impose the margins after normalisation
        if kind != 2 and np.any(np.abs(rows[:neq]) > 1e-12):
            continue
        if kind == 2 and not (np.any(rows[neq:] > 0.1) or np.any(np.abs(rows[:neq]) > 0.1)):
            continue
        if kind == 0 and np.any(rows[neq:] > -0.1):
            continue
        dirs.append(d)
    return sys, np.zeros(n), dirs
