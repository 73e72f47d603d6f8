"""One-dimensional Whitney extension of jet fields.

A jet field attaches a polynomial ``P_x`` of degree ``n`` to every point of a
finite set ``E``. The complement of ``E`` inside
``U = [min E - margin, max E + margin]`` is tiled by dyadic Whitney intervals,
each tied to its nearest data point, and the extension blends those
polynomials with a smooth partition of unity:

    F(x) = sum_I theta_I(x) P_{s(I)}(x).

Because every interval in the half of a gap nearest to ``a`` is tied to
``a``, ``F`` coincides with ``P_a`` on a neighbourhood of each data point and
the jets are interpolated exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb

import numpy as np

from ._bump import bump_derivative
from .boyd import as_weight
from .exceptions import CompatibilityError, DomainError
from .lp_approx import PolyJet

__all__ = [
    "JetField",
    "WhitneyInterval",
    "Extension",
    "check_compatibility",
    "whitney_decompose",
    "extend",
    "verify_bound",
    "jet_field_from_function",
    "DILATION",
]

DILATION = 1.5
COMPAT_CAP = 10.0


@dataclass
class JetField:
    """Jets of common degree on a strictly increasing finite set.

    Parameters
    ----------
    points : array_like
        Strictly increasing sample of ``E``.
    jets : sequence of PolyJet
        One-dimensional jets; ``jets[i]`` is centred anywhere but describes
        ``P_{points[i]}``.
    phi : BoydExpr or str
        Weight used by the compatibility gate.
    bound : float
        The constant ``M``; the gate accepts ``C_comp <= cap * M / phi(1)``.
    """

    points: np.ndarray
    jets: list
    phi: object = "t^1"
    bound: float = 1.0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1)
        self.phi = as_weight(self.phi)
        if len(self.points) != len(self.jets):
            raise DomainError("one jet per point is required")
        if len(self.points) == 0:
            raise DomainError("a jet field needs at least one point")
        if not np.all(np.isfinite(self.points)):
            raise DomainError("points must be finite")
        if np.any(np.diff(self.points) <= 0):
            raise DomainError("points must be strictly increasing")
        degrees = {j.degree for j in self.jets}
        if len(degrees) != 1:
            raise DomainError("jets must share one degree")
        if any(j.dim != 1 for j in self.jets):
            raise DomainError("jets must be one-dimensional")
        if self.bound <= 0:
            raise DomainError("bound must be positive")
        self.jets = [j.recenter((x,)) for j, x in zip(self.jets, self.points)]

    @property
    def degree(self):
        return self.jets[0].degree

    def coefficient_table(self):
        """``(len(E), n + 1)`` array of Taylor coefficients at the data points."""
        return np.stack([j.coeffs for j in self.jets])

    def scaled(self, lam):
        return JetField(self.points, [j * lam for j in self.jets], self.phi, self.bound)


def jet_field_from_function(points, derivatives, degree, phi="t^1", bound=1.0):
    """Jet field from a callable ``derivatives(k, x)`` returning ``D^k f(x)``."""
    points = np.asarray(points, dtype=float)
    jets = [
        PolyJet((x,), degree, [derivatives(k, x) / math.factorial(k) for k in range(degree + 1)])
        for x in points
    ]
    return JetField(points, jets, phi, bound)


def _poly_derivatives(coeffs, center, x, order):
    """``D^j P(x)`` for ``j = 0..order`` of a centred 1-D polynomial."""
    x = np.asarray(x, dtype=float)
    dx = x - center
    out = []
    for j in range(order + 1):
        acc = np.zeros_like(dx)
        for k in range(len(coeffs) - 1, j - 1, -1):
            acc = acc * dx + coeffs[k] * math.perm(k, j)
        out.append(acc)
    return out


def check_compatibility(field, cap=None):
    """Measured Whitney compatibility constant of a jet field.

    ``C_comp = max |D^b(P_x - P_y)(y)| / (phi(|x - y|) |x - y|^{-b})`` over all
    ordered pairs and orders ``b <= n``.

    Returns
    -------
    (bool, float)
        Whether ``C_comp`` is within ``cap`` (default ``10 * M / phi(1)``),
        and ``C_comp``.
    """
    pts = field.points
    if len(pts) < 2:
        raise DomainError("compatibility needs at least two points")
    n = field.degree
    coeffs = field.coefficient_table()
    cap = COMPAT_CAP * field.bound / float(field.phi(1.0)) if cap is None else float(cap)
    dist = np.abs(pts[:, None] - pts[None, :])
    off = ~np.eye(len(pts), dtype=bool)
    phi_d = np.ones_like(dist)
    phi_d[off] = field.phi(dist[off])
    worst = 0.0
    for b in range(n + 1):
        # value of D^b P_x at y for all x (rows), y (columns)
        dPx_y = np.zeros_like(dist)
        diff = pts[None, :] - pts[:, None]
        for k in range(n, b - 1, -1):
            dPx_y = dPx_y * diff + coeffs[:, k][:, None] * math.perm(k, b)
        dPy_y = coeffs[:, b] * math.factorial(b)
        rem = np.abs(dPx_y - dPy_y[None, :])
        scale = phi_d * np.where(off, dist, 1.0) ** (-b)
        worst = max(worst, float(np.max(rem[off] / scale[off])))
    return worst <= cap, worst


@dataclass(frozen=True)
class WhitneyInterval:
    """A closed interval of the decomposition.

    ``anchor`` indexes the data point whose jet is used on the interval;
    ``terminal`` marks the residual cell adjacent to a data point, which is
    too short to split further and is not a Whitney cell in the strict sense.
    """

    lo: float
    hi: float
    anchor: int
    terminal: bool = False

    @property
    def length(self):
        return self.hi - self.lo

    @property
    def mid(self):
        return 0.5 * (self.lo + self.hi)


def _nearest(points, x):
    """Index of the closest point, ties to the left."""
    j = int(np.searchsorted(points, x))
    if j == 0:
        return 0
    if j == len(points):
        return len(points) - 1
    return j - 1 if x - points[j - 1] <= points[j] - x else j


def _side(points, a, length, direction, min_length, out):
    """Dyadic cells from ``a`` outward over ``length`` (direction +1 or -1), outermost first."""
    size = length / 2.0
    edge = length
    while size >= min_length:
        lo, hi = sorted((a + direction * (edge - size), a + direction * edge))
        out.append(WhitneyInterval(lo, hi, _nearest(points, 0.5 * (lo + hi))))
        edge -= size
        size /= 2.0
    if edge > 0:
        lo, hi = sorted((a, a + direction * edge))
        out.append(WhitneyInterval(lo, hi, _nearest(points, 0.5 * (lo + hi)), terminal=True))


def whitney_decompose(points, margin=1.0, min_length=None):
    """Whitney intervals tiling ``U \\ E`` with ``U = [min E - margin, max E + margin]``.

    Inside a gap ``(a, b)`` of length ``L`` the cells are
    ``[a + L 2^{-k-1}, a + L 2^{-k}]`` from the left end and their mirror
    images from the right, so that each cell's length equals its distance
    to ``E``. The outer margins are tiled the same way, outward from the
    extreme data points. Once cells would drop below ``min_length``
    (default ``1e-6 * |U|``), the remainder next to each data point becomes
    one terminal cell of length between ``min_length`` and twice that.

    Returns
    -------
    list of WhitneyInterval
        Sorted by position, covering ``U`` up to the data points.
    """
    pts = np.asarray(points, dtype=float).reshape(-1)
    if pts.size == 0:
        raise DomainError("need at least one point")
    if np.any(np.diff(pts) <= 0):
        raise DomainError("points must be strictly increasing")
    if margin <= 0:
        raise DomainError("margin must be positive")
    span = pts[-1] - pts[0] + 2 * margin
    min_length = 1e-6 * span if min_length is None else float(min_length)
    if min_length <= 0:
        raise DomainError("min_length must be positive")
    cells = []
    left = []
    _side(pts, pts[0], margin, -1, min_length, left)
    cells.extend(left)
    for a, b in zip(pts[:-1], pts[1:]):
        half = 0.5 * (b - a)
        lhs, rhs = [], []
        _side(pts, a, half, +1, min_length, lhs)
        _side(pts, b, half, -1, min_length, rhs)
        cells.extend(reversed(lhs))
        cells.extend(rhs)
    right = []
    _side(pts, pts[-1], margin, +1, min_length, right)
    cells.extend(reversed(right))
    return cells


class Extension:
    """Evaluator of the Whitney extension ``F`` and its derivatives.

    Instances are immutable after construction and safe to share between
    threads.
    """

    def __init__(self, field, cells, margin):
        self.field = field
        self.cells = tuple(cells)
        self.margin = float(margin)
        self.domain = (field.points[0] - margin, field.points[-1] + margin)
        self._lo = np.array([c.lo for c in cells])
        self._hi = np.array([c.hi for c in cells])
        self._mid = 0.5 * (self._lo + self._hi)
        self._half = DILATION * 0.5 * (self._hi - self._lo)
        self._anchor = np.array([c.anchor for c in cells])
        self._coeffs = field.coefficient_table()
        for arr in (self._lo, self._hi, self._mid, self._half, self._anchor, self._coeffs):
            arr.setflags(write=False)

    @property
    def degree(self):
        return self.field.degree

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.domain
        if np.any((x < lo - 1e-12) | (x > hi + 1e-12)):
            raise DomainError(f"evaluation outside U = [{lo}, {hi}]")
        return x

    def _near_cells(self, x):
        # dilated supports only reach adjacent cells, so three candidates suffice
        k = np.clip(np.searchsorted(self._lo, x, side="right") - 1, 0, len(self._lo) - 1)
        return np.stack([np.clip(k + s, 0, len(self._lo) - 1) for s in (-1, 0, 1)], axis=-1)

    def _psi(self, x, cand, order):
        """Derivatives ``0..order`` of the unnormalised bumps, shape (order+1, ..., 3)."""
        w = self._half[cand]
        y = (x[..., None] - self._mid[cand]) / w
        # duplicate candidates (clipped at the ends) must not be counted twice
        dup = np.zeros(cand.shape, dtype=bool)
        dup[..., 1] = cand[..., 1] == cand[..., 0]
        dup[..., 2] = (cand[..., 2] == cand[..., 1]) | (cand[..., 2] == cand[..., 0])
        out = []
        for j in range(order + 1):
            v = bump_derivative(j)(y) / w ** j
            out.append(np.where(dup, 0.0, v))
        return out

    def partition(self, x):
        """Values ``theta_I(x)`` of the normalised partition on the candidate cells.

        Returns ``(indices, theta)`` of shape ``x.shape + (3,)``.
        """
        x = self._check(x)
        cand = self._near_cells(x)
        psi = self._psi(x, cand, 0)[0]
        return cand, psi / psi.sum(axis=-1, keepdims=True)

    def derivatives(self, x, order=None):
        """``[F, F', ..., F^{(order)}]`` at ``x`` (``order`` defaults to ``n``)."""
        order = self.degree if order is None else int(order)
        if order < 0:
            raise DomainError("order must be >= 0")
        x = self._check(x)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        cand = self._near_cells(x)
        psi = self._psi(x, cand, order)
        anchors = self._anchor[cand]
        # expand around the jet of the cell holding x: where all nearby cells
        # share that anchor the correction vanishes identically
        ref = anchors[..., 1:2]
        centers = self.field.points[anchors]
        base = _poly_derivatives(np.moveaxis(self._coeffs[ref[..., 0]], -1, 0),
                                 self.field.points[ref[..., 0]], x, order)
        own = _poly_derivatives(np.moveaxis(self._coeffs[anchors], -1, 0), centers, x[..., None], order)
        shared = _poly_derivatives(np.moveaxis(self._coeffs[ref], -1, 0), self.field.points[ref],
                                   x[..., None], order)
        polys = [a - b for a, b in zip(own, shared)]
        S = [p.sum(axis=-1) for p in psi]
        # D^k of N = sum psi_I (P_I - P_ref) by Leibniz
        N = []
        for k in range(order + 1):
            acc = np.zeros(x.shape)
            for j in range(k + 1):
                acc = acc + comb(k, j) * np.sum(psi[j] * polys[k - j], axis=-1)
            N.append(acc)
        # G = N / S, differentiated through N = G S; F = P_ref + G
        G = []
        for k in range(order + 1):
            acc = N[k]
            for j in range(k):
                acc = acc - comb(k, j) * G[j] * S[k - j]
            G.append(acc / S[0])
        F = [b + g for b, g in zip(base, G)]
        return [float(v[0]) for v in F] if scalar else F

    def __call__(self, x, deriv=0):
        return self.derivatives(x, deriv)[deriv]


def extend(field, margin=1.0, min_length=None, cap=None):
    """Whitney extension of a compatible jet field.

    Raises
    ------
    CompatibilityError
        When the measured compatibility constant exceeds the gate; the
        measured value is attached.
    """
    if len(field.points) >= 2:
        ok, measured = check_compatibility(field, cap)
        if not ok:
            raise CompatibilityError(
                f"jet field is not compatible: C_comp = {measured:.6g}", measured
            )
    cells = whitney_decompose(field.points, margin, min_length)
    return Extension(field, cells, margin)


def _difference(values, k, order):
    """Forward difference ``Delta_h^order`` on a grid, with ``h = k`` steps."""
    m = len(values) - order * k
    if m <= 0:
        return np.empty(0)
    out = np.zeros(m)
    for j in range(order + 1):
        out += (-1) ** (order - j) * comb(order, j) * values[j * k: j * k + m]
    return out


def verify_bound(ext, phi, n, m, n_grid=4097, n_steps=256):
    """Empirical constant of ``|Delta_h^{m-n} D^n F(x)| <= C phi(|h|) |h|^{-n}``.

    ``x`` runs over a uniform grid of ``U`` with ``n_grid`` points and ``h``
    over about ``n_steps`` geometrically spaced multiples of the grid step,
    up to ``|U| / (m - n)``, so that ``[x, x + (m - n) h]`` stays in ``U``.

    Returns
    -------
    float
        The supremum over the sampled ``(x, h)``.
    """
    phi = as_weight(phi)
    n, m = int(n), int(m)
    if m <= n:
        raise DomainError("need m > n")
    if n > ext.degree:
        raise DomainError(f"the extension has degree {ext.degree} < n = {n}")
    lo, hi = ext.domain
    xs = np.linspace(lo, hi, int(n_grid))
    step = xs[1] - xs[0]
    G = ext.derivatives(xs, n)[n]
    order = m - n
    kmax = (len(xs) - 1) // order
    ks = np.unique(np.round(np.geomspace(1, kmax, int(n_steps))).astype(int))
    best = 0.0
    for k in ks:
        d = _difference(G, int(k), order)
        if d.size == 0:
            continue
        h = k * step
        best = max(best, float(np.max(np.abs(d))) / (float(phi(h)) * h ** (-n)))
    return best
