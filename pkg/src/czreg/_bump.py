"""The smooth bump ``exp(-1 / (1 - |y|^2))`` and its exact derivatives.

Derivatives are produced symbolically and compiled to numpy, so callers
never difference the profile numerically.
"""

from functools import lru_cache

import numpy as np
import sympy as sp

_Y = sp.symbols("y0 y1", real=True)


def _profile(dim):
    r2 = sum(v ** 2 for v in _Y[:dim])
    return sp.exp(-1 / (1 - r2))


def _masked(fn, dim):
    def evaluate(y):
        y = np.asarray(y, dtype=float)
        pts = y[..., None] if dim == 1 else y
        r2 = np.sum(pts ** 2, axis=-1)
        out = np.zeros(r2.shape)
        live = r2 < 1.0
        if np.any(live):
            args = [pts[..., i][live] for i in range(dim)]
            with np.errstate(over="ignore", invalid="ignore", under="ignore", divide="ignore"):
                vals = np.asarray(fn(*args), dtype=float)
            out[live] = np.where(np.isfinite(vals), vals, 0.0)
        return out

    return evaluate


@lru_cache(maxsize=None)
def bump_derivative(k, dim=1):
    """``d^k/dy^k`` of the one-dimensional bump (``dim`` must be 1)."""
    if dim != 1:
        raise ValueError("bump_derivative is one-dimensional")
    expr = sp.diff(_profile(1), _Y[0], k) if k else _profile(1)
    return _masked(sp.lambdify(_Y[:1], expr, "numpy"), 1)


def bump(y, dim=1):
    return bump_derivative(0)(y) if dim == 1 else compiled(_profile(2), 2)(y)


_compiled_cache = {}


def compiled(expr, dim):
    key = (sp.srepr(expr), dim)
    fn = _compiled_cache.get(key)
    if fn is None:
        fn = _masked(sp.lambdify(_Y[:dim], expr, "numpy"), dim)
        _compiled_cache[key] = fn
    return fn


def polynomial_times_bump(coeffs, indices, dim):
    """Symbolic ``(sum_beta c_beta y^beta) * bump(y)``."""
    poly = sum(
        sp.Float(c) * sp.Mul(*[_Y[i] ** a for i, a in enumerate(beta)])
        for c, beta in zip(coeffs, indices)
    )
    return poly * _profile(dim)


def derivative(expr, alpha):
    """Symbolic ``D^alpha expr``."""
    out = expr
    for i, a in enumerate(alpha):
        if a:
            out = sp.diff(out, _Y[i], a)
    return out
