"""Boyd weight functions built from powers and iterated logarithms.

A weight is an immutable expression tree over four node types:

* ``Power(u)`` is ``t ** u``;
* ``LogFactor(k, a)`` is ``L_k(t) ** a`` with ``L_1(t) = 1 + |log t|`` and
  ``L_{k+1}(t) = 1 + log L_k(t)``;
* ``Product(children)`` multiplies its children;
* ``Pow(child, q)`` raises a child to the power ``q``.

Every node equals 1 at ``t = 1``, so every expression is normalised. Because
each iterated-log factor is slowly varying, the Boyd indices of any
expression are both equal to the sum of its power exponents; the numeric path
recovers them from the dilation function and is kept as an independent check.

The textual grammar accepted by :func:`parse_weight` is::

    expr   := factor ('*' factor)*
    factor := atom ('^' number)?
    atom   := 't' | 'L' digits | '(' expr ')'

for example ``"t^0.5 * L2^0.5"``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    DomainError,
    IndeterminateError,
    IndexEstimationError,
    NoBandError,
    UnboundedDilationError,
    WeightParseError,
)

__all__ = [
    "BoydExpr",
    "Power",
    "LogFactor",
    "Product",
    "Pow",
    "BoydIndices",
    "DilationGrid",
    "parse_weight",
    "as_weight",
    "eval_weight",
    "iterated_log",
    "dilation",
    "indices",
    "admissible",
    "fractional_band",
    "power",
    "lil_weight",
]


def iterated_log(t, k):
    """Return ``log L_k(t)`` elementwise.

    ``L_k >= 1`` everywhere, so the logarithm is nonnegative and finite for
    every positive ``t``.
    """
    if k < 1:
        raise DomainError(f"iteration depth must be >= 1, got {k}")
    logt = np.log(t)
    value = np.log1p(np.abs(logt))
    for _ in range(k - 1):
        value = np.log1p(value)
    return value


class BoydExpr:
    """Base class of weight expressions.

    Subclasses implement :meth:`log_eval` and :meth:`canonical`. Instances
    are callable and support ``*`` and ``**``.
    """

    def log_eval(self, t):
        raise NotImplementedError

    def canonical(self):
        """Return ``(u, {k: a})``: total power exponent and log exponents."""
        raise NotImplementedError

    def __call__(self, t):
        return eval_weight(self, t)

    def __mul__(self, other):
        if not isinstance(other, BoydExpr):
            return NotImplemented
        left = self.children if isinstance(self, Product) else (self,)
        right = other.children if isinstance(other, Product) else (other,)
        return Product(left + right)

    def __pow__(self, q):
        return Pow(self, float(q))

    @property
    def exact_indices(self):
        u, _ = self.canonical()
        return BoydIndices(u, u, "exact", 0.0)

    @property
    def is_pure_power(self):
        _, logs = self.canonical()
        return not logs


@dataclass(frozen=True)
class Power(BoydExpr):
    u: float

    def log_eval(self, t):
        return self.u * np.log(t)

    def canonical(self):
        return float(self.u), {}

    def __str__(self):
        return f"t^{_fmt(self.u)}"


@dataclass(frozen=True)
class LogFactor(BoydExpr):
    k: int
    a: float

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise DomainError(f"LogFactor depth must be an integer >= 1, got {self.k}")

    def log_eval(self, t):
        return self.a * iterated_log(t, self.k)

    def canonical(self):
        return 0.0, ({int(self.k): float(self.a)} if self.a != 0 else {})

    def __str__(self):
        return f"L{self.k}^{_fmt(self.a)}"


@dataclass(frozen=True)
class Product(BoydExpr):
    children: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))

    def log_eval(self, t):
        total = np.zeros_like(np.asarray(t, dtype=float))
        for child in self.children:
            total = total + child.log_eval(t)
        return total

    def canonical(self):
        u = 0.0
        logs = {}
        for child in self.children:
            cu, clogs = child.canonical()
            u += cu
            for k, a in clogs.items():
                logs[k] = logs.get(k, 0.0) + a
        return u, {k: a for k, a in sorted(logs.items()) if a != 0}

    def __str__(self):
        if not self.children:
            return "t^0"
        return " * ".join(_wrap(c) for c in self.children)


@dataclass(frozen=True)
class Pow(BoydExpr):
    child: BoydExpr
    q: float

    def log_eval(self, t):
        return self.q * self.child.log_eval(t)

    def canonical(self):
        u, logs = self.child.canonical()
        return u * self.q, {k: a * self.q for k, a in logs.items() if a * self.q != 0}

    def __str__(self):
        return f"({self.child})^{_fmt(self.q)}"


def _fmt(x):
    x = float(x)
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _wrap(node):
    return f"({node})" if isinstance(node, Product) else str(node)


def _from_canonical(u, logs):
    parts = [Power(u)] if (u != 0 or not logs) else []
    parts += [LogFactor(k, a) for k, a in sorted(logs.items())]
    return parts[0] if len(parts) == 1 else Product(tuple(parts))


def lil_weight():
    """Weight with the Brownian modulus ``(t log log 1/t)^{1/2}`` as ``t -> 0``."""
    return Product((Power(0.5), LogFactor(2, 0.5)))


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<log>L\d+)|(?P<t>t)|(?P<op>[*^()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise WeightParseError(f"unexpected character {text[start]!r}", start)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, value, pos = self.take()
        if kind != "op" or value != op:
            raise WeightParseError(f"expected {op!r}, found {value or 'end of input'!r}", pos)

    def parse(self):
        node = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise WeightParseError(f"unexpected token {value!r}", pos)
        return node

    def expr(self):
        factors = [self.factor()]
        while self.peek()[0] == "op" and self.peek()[1] == "*":
            self.take()
            factors.append(self.factor())
        return factors[0] if len(factors) == 1 else Product(tuple(factors))

    def factor(self):
        node = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            kind, value, pos = self.take()
            if kind != "num":
                raise WeightParseError(f"expected a number after '^', found {value or 'end of input'!r}", pos)
            q = float(value)
            if isinstance(node, Power):
                node = Power(node.u * q)
            elif isinstance(node, LogFactor):
                node = LogFactor(node.k, node.a * q)
            else:
                node = Pow(node, q)
        return node

    def atom(self):
        kind, value, pos = self.take()
        if kind == "t":
            return Power(1.0)
        if kind == "log":
            k = int(value[1:])
            if k < 1:
                raise WeightParseError("log depth must be >= 1", pos)
            return LogFactor(k, 1.0)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise WeightParseError(f"expected 't', 'L<k>' or '(', found {value or 'end of input'!r}", pos)


def parse_weight(text):
    """Parse a weight such as ``"t^0.5 * L2^0.5"``.

    Examples
    --------
    >>> parse_weight("(t^0.5 * L1)^2").canonical()
    (1.0, {1: 2.0})
    >>> parse_weight("t^")
    Traceback (most recent call last):
    ...
    czreg.exceptions.WeightParseError: expected a number after '^', found 'end of input' (at position 2)

    Raises
    ------
    WeightParseError
        With the character position of the first offending token.
    """
    return _Parser(text).parse()


def as_weight(phi):
    """Coerce a string or expression to a :class:`BoydExpr`."""
    if isinstance(phi, BoydExpr):
        return phi
    if isinstance(phi, str):
        return parse_weight(phi)
    raise TypeError(f"expected a BoydExpr or weight string, got {type(phi).__name__}")


# ---------------------------------------------------------------- evaluation

def eval_weight(phi, t):
    """Evaluate ``phi`` at positive ``t`` (scalar or array)."""
    phi = as_weight(phi)
    arr = np.asarray(t, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("weights are defined for t > 0 only")
    value = np.exp(phi.log_eval(arr))
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class DilationGrid:
    """Geometric grid of ``s`` values used for the dilation supremum."""

    s_min: float = 1e-12
    s_max: float = 1e12
    n_points: int = 4096
    # decades added on each side to detect growth at the boundary
    probe_decades: float = 4.0
    growth_rtol: float = 0.05

    def points(self):
        return np.geomspace(self.s_min, self.s_max, self.n_points)


DEFAULT_GRID = DilationGrid()


def _log_dilation_on(phi, t, s, kinks=True):
    # rows: t values, columns: s values
    st = np.multiply.outer(t, s)
    out = np.max(phi.log_eval(st) - phi.log_eval(s)[None, :], axis=1)
    if kinks:
        # |log| factors have their kinks at s = 1 and s = 1/t
        out = np.maximum(out, phi.log_eval(t))
        out = np.maximum(out, -phi.log_eval(1.0 / t))
    return out


def dilation(phi, t, grid=DEFAULT_GRID, return_grid=False):
    """Dilation function ``sup_s phi(s t) / phi(s)``.

    Pure powers are handled in closed form. Otherwise the supremum is taken
    over ``grid`` (4096 geometric points on ``[1e-12, 1e12]`` by default),
    and the grid is then widened by ``grid.probe_decades`` on each side; a
    relative increase larger than ``grid.growth_rtol`` means the supremum is
    still growing at the boundary.

    Parameters
    ----------
    phi : BoydExpr or str
    t : float or array_like
        Positive dilation factors.
    grid : DilationGrid
    return_grid : bool
        Also return ``(s_min, s_max, n_points)`` of the grid used, or None
        for the closed form.

    Raises
    ------
    UnboundedDilationError
    """
    phi = as_weight(phi)
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(~(tt > 0)):
        raise DomainError("dilation is defined for t > 0 only")
    u, logs = phi.canonical()
    if not logs:
        out = tt ** u
        bounds = None
    else:
        s = grid.points()
        log_sup = _log_dilation_on(phi, tt, s)
        if not np.all(np.isfinite(log_sup)):
            raise UnboundedDilationError("non-finite dilation supremum")
        widen = 10.0 ** grid.probe_decades
        outer = np.concatenate([
            np.geomspace(grid.s_min / widen, grid.s_min, 64),
            np.geomspace(grid.s_max, grid.s_max * widen, 64),
        ])
        log_outer = _log_dilation_on(phi, tt, outer, kinks=False)
        if np.any(log_outer - log_sup > math.log1p(grid.growth_rtol)):
            raise UnboundedDilationError(
                f"dilation supremum still growing beyond s in [{grid.s_min:g}, {grid.s_max:g}]"
            )
        out = np.exp(log_sup)
        bounds = (grid.s_min, grid.s_max, grid.n_points)
    value = float(out[0]) if np.ndim(t) == 0 else out
    return (value, bounds) if return_grid else value


# ---------------------------------------------------------------- indices

@dataclass(frozen=True)
class BoydIndices:
    """Lower and upper Boyd indices with provenance."""

    lower: float
    upper: float
    method: str = "exact"
    uncertainty: float = 0.0

    def __post_init__(self):
        if self.method not in ("exact", "numeric"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.uncertainty < 0:
            raise ValueError("uncertainty must be nonnegative")
        if self.lower > self.upper + self.uncertainty:
            raise ValueError(f"lower index {self.lower} exceeds upper {self.upper}")

    def scaled(self, q):
        return BoydIndices(self.lower * q, self.upper * q, self.method, self.uncertainty * q)


LOWER_LADDER = 2.0 ** -np.arange(10, 41)
UPPER_LADDER = 2.0 ** np.arange(10, 41)


def _fit_index(phi, ladder, grid):
    log_t = np.log(ladder)
    log_bar = np.log(dilation(phi, ladder, grid=grid))
    if not np.all(np.isfinite(log_bar)):
        raise IndexEstimationError("dilation values are not finite on the index ladder")
    slope, intercept = np.polyfit(log_t, log_bar, 1)
    resid = log_bar - (slope * log_t + intercept)
    return float(slope), float(np.max(np.abs(resid)))


def indices(phi, method="exact", grid=DEFAULT_GRID):
    """Boyd indices of ``phi``.

    ``method="exact"`` uses the closed form (sum of power exponents).
    ``method="numeric"`` fits ``log dilation(t)`` against ``log t`` over
    ``t = 2^-10 .. 2^-40`` (lower) and ``2^10 .. 2^40`` (upper); the
    uncertainty is the largest fit residual.

    Examples
    --------
    >>> idx = indices("t^0.5 * L2^0.5")
    >>> idx.lower, idx.upper
    (0.5, 0.5)
    """
    phi = as_weight(phi)
    if method == "exact":
        return phi.exact_indices
    if method != "numeric":
        raise DomainError(f"method must be 'exact' or 'numeric', got {method!r}")
    try:
        lower, res_lo = _fit_index(phi, LOWER_LADDER, grid)
        upper, res_hi = _fit_index(phi, UPPER_LADDER, grid)
    except UnboundedDilationError as exc:
        raise IndexEstimationError(f"index estimation diverged: {exc}") from exc
    unc = max(res_lo, res_hi)
    if lower > upper + unc:
        raise IndexEstimationError(
            f"numeric lower index {lower:.6g} exceeds upper {upper:.6g} beyond uncertainty {unc:.3g}"
        )
    return BoydIndices(lower, upper, "numeric", unc)


def _threshold(p, d):
    return 0.0 if math.isinf(p) else -d / p


def admissible(phi, p, d, method="exact"):
    """Whether ``lower index > -d/p`` (the non-degeneracy condition).

    Raises
    ------
    IndeterminateError
        When the numeric uncertainty straddles the threshold.
    """
    if d not in (1, 2):
        raise DomainError(f"dimension must be 1 or 2, got {d}")
    p = float(p)
    if not p >= 1:
        raise DomainError(f"p must lie in [1, inf], got {p}")
    idx = indices(phi, method=method)
    thr = _threshold(p, d)
    if idx.lower - idx.uncertainty > thr:
        return True
    if idx.lower + idx.uncertainty <= thr:
        return False
    raise IndeterminateError(
        f"lower index {idx.lower:.6g} +/- {idx.uncertainty:.3g} straddles -d/p = {thr:.6g}"
    )


def fractional_band(phi, method="exact"):
    """The unique ``n >= 0`` with ``n < lower <= upper < n + 1``.

    Raises
    ------
    NoBandError
        For integer or band-straddling indices.
    """
    idx = indices(phi, method=method)
    n = math.floor(idx.lower)
    if n < 0 or not (n < idx.lower and idx.upper < n + 1):
        raise NoBandError(
            f"indices ({idx.lower:.6g}, {idx.upper:.6g}) do not sit strictly inside (n, n+1)"
        )
    return n


def power(phi, q):
    """Expression for ``phi ** q`` in canonical form; indices scale by ``q``."""
    q = float(q)
    if not q > 0:
        raise DomainError(f"q must be positive, got {q}")
    u, logs = as_weight(phi).canonical()
    return _from_canonical(u * q, {k: a * q for k, a in logs.items()})
