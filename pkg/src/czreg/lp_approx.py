"""Best polynomial approximation in L^p over balls of a sampled function.

The inner problem is ``min_P ||f - P||_{L^p(B(x, r))}`` over polynomials of
degree at most ``n``. Norms are Riemann sums in which each grid value
stands for its cell and is weighted by the part of that cell inside the
ball, so the quadrature varies continuously with the radius; sup norms use
the grid points in the closed ball.

Solvers by exponent:

* ``p = 2``: least squares through a QR factorisation of the design matrix
  written in the scaled monomials ``((g - x) / r)^alpha``.
* ``p = inf``: discrete Chebyshev approximation as a linear program (HiGHS);
  degree 0 has the closed form ``(max + min) / 2``.
* ``1 < p < inf``: iteratively reweighted least squares started from the
  ``p = 2`` solution, with an exact line search along each reweighted step so
  the objective never increases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import optimize

from .exceptions import (
    ConditioningError,
    DomainError,
    InsufficientSamplesError,
    IterationLimitError,
    OutsideWindowError,
)

__all__ = [
    "PolyJet",
    "BallSpec",
    "multi_indices",
    "eval_jet",
    "ball_samples",
    "lp_ball_norm",
    "best_poly",
    "IRLS_TOL",
    "IRLS_MAX_ITER",
]

IRLS_TOL = 1e-10
IRLS_MAX_ITER = 200
# tolerance used when deciding whether a grid point lies on the ball boundary
_EDGE_RTOL = 1e-9


def multi_indices(dim, degree):
    """Multi-indices with ``|alpha| <= degree`` in graded order."""
    if dim == 1:
        return [(k,) for k in range(degree + 1)]
    out = []
    for total in range(degree + 1):
        for i in range(total, -1, -1):
            out.append((i, total - i))
    return out


def _factorial_ratio(alpha, beta):
    # alpha! / (alpha - beta)!
    out = 1
    for a, b in zip(alpha, beta):
        for j in range(a - b + 1, a + 1):
            out *= j
    return out


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if dim == 1:
        return x[..., None] if (x.ndim == 0 or x.shape[-1] != 1) else x
    if x.shape[-1] != dim:
        raise DomainError(f"points need a trailing axis of length {dim}")
    return x


@dataclass
class PolyJet:
    """Polynomial in centred form ``sum_alpha c_alpha (x - center)^alpha``.

    ``coeffs`` follows :func:`multi_indices` order; ``c_alpha`` equals
    ``D^alpha P(center) / alpha!``.
    """

    center: tuple
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.center = tuple(float(c) for c in np.atleast_1d(self.center))
        self.degree = int(self.degree)
        if self.degree < 0:
            raise DomainError("degree must be >= 0")
        expected = len(multi_indices(self.dim, self.degree))
        coeffs = np.zeros(expected)
        given = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if given.size > expected:
            raise DomainError(f"{given.size} coefficients given for {expected} monomials")
        coeffs[: given.size] = given
        self.coeffs = coeffs

    @classmethod
    def zero(cls, center, degree):
        return cls(center, degree, [])

    @classmethod
    def from_mapping(cls, center, degree, mapping):
        center = tuple(np.atleast_1d(center))
        idx = multi_indices(len(center), degree)
        coeffs = [float(mapping.get(tuple(a), 0.0)) for a in idx]
        return cls(center, degree, coeffs)

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data["center"]), data["degree"], data["coeffs"])

    def to_dict(self):
        return {"center": list(self.center), "degree": self.degree, "coeffs": self.coeffs.tolist()}

    @property
    def dim(self):
        return len(self.center)

    @property
    def indices(self):
        return multi_indices(self.dim, self.degree)

    @property
    def mapping(self):
        return dict(zip(self.indices, self.coeffs.tolist()))

    def coeff(self, alpha):
        return self.mapping.get(tuple(alpha), 0.0)

    def derivative(self, beta, x):
        """``D^beta P`` evaluated at ``x``."""
        beta = tuple(np.atleast_1d(beta).astype(int))
        pts = _as_points(x, self.dim)
        diff = pts - np.asarray(self.center)
        out = np.zeros(pts.shape[:-1])
        for alpha, c in zip(self.indices, self.coeffs):
            if c == 0 or any(a < b for a, b in zip(alpha, beta)):
                continue
            term = np.full(pts.shape[:-1], c * _factorial_ratio(alpha, beta))
            for i, (a, b) in enumerate(zip(alpha, beta)):
                if a - b:
                    term = term * diff[..., i] ** (a - b)
            out = out + term
        return float(out) if out.ndim == 0 else out

    def recenter(self, center):
        """Same polynomial expanded around a new centre."""
        center = tuple(np.atleast_1d(center).astype(float))
        coeffs = []
        for alpha in self.indices:
            d = self.derivative(alpha, np.asarray(center) if self.dim > 1 else center[0])
            coeffs.append(d / math.prod(math.factorial(a) for a in alpha))
        return PolyJet(center, self.degree, coeffs)

    def __add__(self, other):
        if self.center != other.center:
            other = other.recenter(self.center)
        deg = max(self.degree, other.degree)
        a = PolyJet(self.center, deg, self.coeffs).coeffs
        b = PolyJet(self.center, deg, other.coeffs).coeffs
        return PolyJet(self.center, deg, a + b)

    def __mul__(self, lam):
        return PolyJet(self.center, self.degree, self.coeffs * float(lam))

    __rmul__ = __mul__


def eval_jet(jet, x):
    """Evaluate ``jet`` at ``x``.

    In one dimension ``x`` may be a scalar or any array of points; in two
    dimensions its trailing axis holds the coordinates.
    """
    return jet.derivative((0,) * jet.dim, x)


@dataclass(frozen=True)
class BallSpec:
    """Ball ``B(x, r)`` together with the integrability exponent ``p``."""

    x: tuple
    r: float
    p: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in np.atleast_1d(self.x)))
        object.__setattr__(self, "p", float(self.p))
        if not self.r > 0:
            raise DomainError(f"radius must be positive, got {self.r}")
        if not self.p >= 1:
            raise DomainError(f"p must lie in [1, inf], got {self.p}")


class BallSample(NamedTuple):
    """Grid points meeting a ball.

    ``weights`` are the volumes of the grid cells (side ``spacing``, centred
    on the points) that overlap the ball; ``inside`` marks points whose
    centre lies in the closed ball, the set used for sup norms.
    """

    coords: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    inside: np.ndarray


def _overlap_1d(g, h, lo, hi):
    return np.clip(np.minimum(g + 0.5 * h, hi) - np.maximum(g - 0.5 * h, lo), 0.0, None)


def _overlap_disc(mx, my, h, cx, cy, r, sub=16):
    # exact for interior/exterior cells, sub x sub midpoint sampling on the rim
    dx = np.abs(mx - cx)
    dy = np.abs(my - cy)
    far = np.hypot(dx + 0.5 * h, dy + 0.5 * h)
    near = np.hypot(np.maximum(dx - 0.5 * h, 0.0), np.maximum(dy - 0.5 * h, 0.0))
    weights = np.where(far <= r, h * h, 0.0)
    rim = (near < r) & (far > r)
    if rim.any():
        offs = (np.arange(sub) + 0.5) / sub - 0.5
        ox, oy = np.meshgrid(offs * h, offs * h, indexing="ij")
        px = mx[rim][:, None, None] + ox[None] - cx
        py = my[rim][:, None, None] + oy[None] - cy
        frac = np.mean(px ** 2 + py ** 2 <= r * r, axis=(1, 2))
        weights[rim] = frac * h * h
    return weights


def ball_samples(f, ball):
    """Grid points whose cells meet ``B(x, r)``, with overlap weights.

    Raises
    ------
    OutsideWindowError
        If the ball leaves the union of grid cells (the window widened by
        half a cell on each side).
    InsufficientSamplesError
        If no grid point lies in the closed ball.
    """
    x = np.asarray(ball.x, dtype=float)
    if x.size != f.dim:
        raise DomainError(f"ball centre has {x.size} coordinates, function has dim {f.dim}")
    h = f.spacing
    slack = _EDGE_RTOL * max(ball.r, h)
    if np.any(x - ball.r < f.lower - 0.5 * h - slack) or np.any(x + ball.r > f.upper + 0.5 * h + slack):
        raise OutsideWindowError(f"ball B({x.tolist()}, {ball.r:g}) leaves the sampled window")
    lo = np.ceil((x - ball.r - 0.5 * h - f.lower) / h).astype(int)
    hi = np.floor((x + ball.r + 0.5 * h - f.lower) / h).astype(int)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, np.asarray(f.shape) - 1)
    if np.any(hi < lo):
        raise InsufficientSamplesError("ball contains no grid point")
    if f.dim == 1:
        g = f.lower[0] + h * np.arange(lo[0], hi[0] + 1)
        weights = _overlap_1d(g, h, x[0] - ball.r, x[0] + ball.r)
        inside = np.abs(g - x[0]) <= ball.r + slack
        keep = (weights > 0) | inside
        sample = BallSample(g[keep][:, None], f.values[lo[0]: hi[0] + 1][keep], weights[keep], inside[keep])
    else:
        gx = f.lower[0] + h * np.arange(lo[0], hi[0] + 1)
        gy = f.lower[1] + h * np.arange(lo[1], hi[1] + 1)
        mx, my = np.meshgrid(gx, gy, indexing="ij")
        block = f.values[lo[0]: hi[0] + 1, lo[1]: hi[1] + 1]
        weights = _overlap_disc(mx, my, h, x[0], x[1], ball.r)
        inside = (mx - x[0]) ** 2 + (my - x[1]) ** 2 <= (ball.r + slack) ** 2
        keep = (weights > 0) | inside
        sample = BallSample(np.stack([mx[keep], my[keep]], axis=-1), block[keep], weights[keep], inside[keep])
    if not sample.inside.any():
        raise InsufficientSamplesError("ball contains no grid point")
    return sample


def _weighted_norm(values, p, weights, inside):
    values = np.abs(values)
    if math.isinf(p):
        v = values[inside]
        return float(v.max()) if v.size else 0.0
    if values.size == 0:
        return 0.0
    scale = values.max()
    if scale == 0:
        return 0.0
    return float(scale * np.sum(weights * (values / scale) ** p) ** (1.0 / p))


def lp_ball_norm(f, ball, jet=None):
    """Quadrature value of ``||f - P||_{L^p(B)}`` (``P = 0`` when ``jet`` is None).

    Each grid value stands for its cell and is weighted by the part of the
    cell inside the ball; ``p = inf`` takes the maximum over grid points in
    the closed ball.
    """
    s = ball_samples(f, ball)
    values = s.values
    if jet is not None:
        values = values - eval_jet(jet, s.coords if f.dim > 1 else s.coords[:, 0])
    return _weighted_norm(values, ball.p, s.weights, s.inside)


def _design(coords, center, r, idx):
    scaled = (coords - np.asarray(center)) / r
    cols = []
    for alpha in idx:
        col = np.ones(len(coords))
        for i, a in enumerate(alpha):
            if a:
                col = col * scaled[:, i] ** a
        cols.append(col)
    return np.stack(cols, axis=1)


def _lstsq(V, y, weights=None):
    if weights is not None:
        sw = np.sqrt(weights)
        V = V * sw[:, None]
        y = y * sw
    q, rmat = np.linalg.qr(V)
    diag = np.abs(np.diag(rmat))
    if diag.size == 0 or diag.min() <= 1e-12 * max(diag.max(), 1e-300):
        raise ConditioningError("rank-deficient design matrix")
    return np.linalg.solve(rmat, q.T @ y)


def _minimax_lp(V, y):
    m, k = V.shape
    cost = np.zeros(k + 1)
    cost[-1] = 1.0
    ones = np.ones((m, 1))
    a_ub = np.block([[V, -ones], [-V, -ones]])
    b_ub = np.concatenate([y, -y])
    bounds = [(None, None)] * k + [(0, None)]
    res = optimize.linprog(
        cost, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise ConditioningError(f"minimax linear program failed: {res.message}")
    return res.x[:k], res.x[-1]


def _min_norm_among_minimax(V, y, c0, level):
    # smallest-norm coefficients with max |y - V c| <= level
    cons = [
        {"type": "ineq", "fun": lambda c: level - (y - V @ c), "jac": lambda c: V},
        {"type": "ineq", "fun": lambda c: level + (y - V @ c), "jac": lambda c: -V},
    ]
    res = optimize.minimize(
        lambda c: 0.5 * c @ c, c0, jac=lambda c: c, constraints=cons, method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 500},
    )
    if res.success and np.max(np.abs(y - V @ res.x)) <= level * (1 + 1e-8) + 1e-14:
        return res.x
    return c0


def _objective(V, y, c, p, w):
    return float(np.sum(w * np.abs(y - V @ c) ** p))


def _irls(V, y, p, w, c0, tol, max_iter):
    c = c0
    obj = _objective(V, y, c, p, w)
    norm = obj ** (1.0 / p)
    for it in range(max_iter):
        res = y - V @ c
        absr = np.abs(res)
        if p < 2:
            floor = 1e-12 * max(absr.max(), 1e-300)
            reweight = np.maximum(absr, floor) ** (p - 2)
        else:
            reweight = absr ** (p - 2)
        try:
            target = _lstsq(V, y, w * reweight)
        except ConditioningError:
            # too many vanishing weights; take a plain least-squares correction
            target = c + _lstsq(V, res, w)
        step = target - c
        line = optimize.minimize_scalar(
            lambda a: _objective(V, y, c + a * step, p, w), bounds=(0.0, 2.0),
            method="bounded", options={"xatol": 1e-12},
        )
        alpha = line.x if line.fun <= obj else 0.0
        if alpha:
            c, obj = c + alpha * step, line.fun
        norm_new = obj ** (1.0 / p)
        change = abs(norm - norm_new) / max(norm, 1e-300)
        norm = norm_new
        small_step = alpha * np.linalg.norm(step) <= 1e-8 * max(np.linalg.norm(c), 1.0)
        if norm == 0 or (change < tol and small_step):
            return c, it + 1
    raise IterationLimitError(f"IRLS did not converge in {max_iter} iterations", last_iterate=c)


def best_poly(f, ball, n, tol=IRLS_TOL, max_iter=IRLS_MAX_ITER, tie_break=True):
    """Best degree-``n`` polynomial approximation of ``f`` on ``ball``.

    Parameters
    ----------
    f : SampledFunction
    ball : BallSpec
    n : int
        Maximal degree.
    tol, max_iter :
        IRLS stopping rule for ``1 < p < inf``: relative change of the
        residual below ``tol`` together with a negligible step, at most
        ``max_iter`` reweightings.
    tie_break : bool
        For ``p = inf`` in two dimensions, where minimisers need not be
        unique, re-solve for the smallest-norm coefficient vector among the
        optima. One-dimensional monomials satisfy the Haar condition, so the
        discrete minimax polynomial is already unique there.

    Returns
    -------
    (PolyJet, float)
        Jet centred at the ball centre and the attained residual norm.

    Raises
    ------
    InsufficientSamplesError, ConditioningError, IterationLimitError

    Examples
    --------
    >>> from czreg.signals import generate
    >>> f = generate("cusp", u=1.0, n=2001)
    >>> jet, res = best_poly(f, BallSpec((0.0,), 0.5, float("inf")), 0)
    >>> round(float(jet.coeffs[0]), 12), round(res, 12)
    (0.25, 0.25)
    """
    n = int(n)
    if n < 0:
        raise DomainError("degree must be >= 0")
    p = ball.p
    if p < 1.1:
        raise DomainError("p in [1, 1.1) is not supported by the IRLS solver")
    s = ball_samples(f, ball)
    idx = multi_indices(f.dim, n)
    if math.isinf(p):
        coords, y, w = s.coords[s.inside], s.values[s.inside], None
    else:
        coords, y, w = s.coords, s.values, s.weights
    if int(np.count_nonzero(s.inside)) < len(idx):
        raise InsufficientSamplesError(
            f"{int(np.count_nonzero(s.inside))} grid points in ball, degree {n} needs at least {len(idx)}"
        )
    center = ball.x
    radial = np.array([sum(a) for a in idx], dtype=float)
    scale = float(np.max(np.abs(y)))
    if scale == 0:
        return PolyJet.zero(center, n), 0.0
    ys = y / scale
    V = _design(coords, center, ball.r, idx)

    def finish(c):
        jet = PolyJet(center, n, c * scale / ball.r ** radial)
        resid = _weighted_norm(y - scale * (V @ c), p, w, np.ones(len(y), bool))
        return jet, resid

    if math.isinf(p):
        if n == 0:
            c = np.array([0.5 * (ys.max() + ys.min())])
        else:
            c, level = _minimax_lp(V, ys)
            if tie_break and f.dim > 1:
                c = _min_norm_among_minimax(V, ys, c, level)
        return finish(c)
    c = _lstsq(V, ys, w)
    if p != 2 and np.max(np.abs(ys - V @ c)) > 1e-14:
        try:
            c, _ = _irls(V, ys, p, w, c, tol, max_iter)
        except IterationLimitError as exc:
            jet, resid = finish(exc.last_iterate)
            raise IterationLimitError(str(exc), last_iterate=jet, residual=resid) from None
    return finish(c)
