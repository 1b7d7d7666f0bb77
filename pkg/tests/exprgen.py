"""Random expression generator for property tests.

Every generated expression comes with an equivalent Python/``math`` source
that serves as an independent evaluation oracle.  Constructions are chosen to
stay inside the smooth domain of every function: logarithms and roots act on
``u^2 + c`` with ``c >= 0.5``, denominators are ``v^2 + c``.
"""

from __future__ import annotations

import math

import numpy as np


def _const(rng):
    v = round(float(rng.uniform(-3, 3)), 3)
    return (f"({v})", f"({v})")


def _leaf(rng, n, index):
    r = rng.random()
    if r < 0.6:
        k = int(rng.integers(1, n + 1))
        return (f"x{k}", f"x[{k - 1}]")
    if index and r < 0.7:
        return ("i", "i")
    return _const(rng)


def random_expression(rng, n, depth=3, index=False):
    """Return ``(source, python_source)`` for a random smooth expression."""
    if depth == 0 or rng.random() < 0.25:
        return _leaf(rng, n, index)
    kind = int(rng.integers(0, 11))
    a, pa = random_expression(rng, n, depth - 1, index)
    if kind <= 2:
        b, pb = random_expression(rng, n, depth - 1, index)
        op = "+-*"[kind]
        return (f"({a} {op} {b})", f"({pa} {op} {pb})")
    if kind == 3:
        b, pb = random_expression(rng, n, depth - 1, index)
        c = round(float(rng.uniform(0.5, 2)), 2)
        return (f"({a} / (({b})^2 + {c}))", f"({pa} / (({pb})**2 + {c}))")
    if kind == 4:
        return (f"(-{a})", f"(-{pa})")
    if kind == 5:
        k = int(rng.integers(2, 4))
        return (f"({a})^{k}", f"(({pa})**{k})")
    if kind == 6:
        c = round(float(rng.uniform(0.5, 2)), 2)
        r = round(float(rng.uniform(-1.5, 1.5)), 2)
        return (f"(({a})^2 + {c})^({r})", f"((({pa})**2 + {c})**({r}))")
    if kind == 7:
        fn = ["sin", "cos"][int(rng.integers(0, 2))]
        return (f"{fn}({a})", f"math.{fn}({pa})")
    if kind == 8:
        return (f"exp(sin({a}))", f"math.exp(math.sin({pa}))")
    c = round(float(rng.uniform(0.5, 2)), 2)
    fn = "log" if kind == 9 else "sqrt"
    return (f"{fn}(({a})^2 + {c})", f"math.{fn}(({pa})**2 + {c})")


def oracle(python_source, x, i=None):
    return float(eval(python_source, {"math": math, "x": list(map(float, x)), "i": i}))


def central_difference(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        step = h * max(1.0, abs(x[k]))
        e = np.zeros_like(x)
        e[k] = step
        g[k] = (f(x + e) - f(x - e)) / (2 * step)
    return g
