"""Jets from derivatives of mollifications.

The kernel is ``K(y) = q(y) * bump(y)`` with ``q`` of degree ``n`` chosen so
that ``int y^alpha K(y) dy = delta_{alpha,0}`` for ``|alpha| <= n``; then
``K_eps * P = P`` for every polynomial of degree ``n`` and every ``eps``.
For ``f`` close to a polynomial ``P_x`` at ``x``,
``D^alpha (K_eps * f)(x) -> D^alpha P_x(x)`` as ``eps -> 0``, with error of
order ``eps^{-|alpha|} phi(eps)``.

On a grid, the convolution becomes a weighted sum whose weights are the
analytically differentiated kernel. By default those weights receive a small
correction (a polynomial times the bump, found from a linear system) so that
the discrete sums reproduce polynomials of degree ``n`` exactly, as the
continuous convolution does.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import integrate, special

from . import _bump
from .boyd import as_weight
from .exceptions import DomainError, ExtractionUnstableError, KernelConstructionError, OutsideWindowError
from .lp_approx import PolyJet, multi_indices

__all__ = [
    "MollifierKernel",
    "make_kernel",
    "default_epsilons",
    "extract_jet",
    "JetExtraction",
    "mollified_derivative",
]


def _radial_moment(k):
    # int_0^1 rho^k exp(-1/(1-rho^2)) d rho; the integrand is flat near 1, so
    # the requested tolerance sits below what roundoff allows
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(lambda t: t ** k * math.exp(-1.0 / (1.0 - t * t)) if t < 1 else 0.0,
                                0.0, 1.0, epsabs=1e-16, epsrel=1e-14, limit=200)
    return val


@lru_cache(maxsize=None)
def bump_moment(alpha):
    """``int y^alpha bump(|y|) dy`` over the unit ball (``len(alpha)`` = dim)."""
    if any(a % 2 for a in alpha):
        return 0.0
    if len(alpha) == 1:
        return 2.0 * _radial_moment(alpha[0])
    a, b = alpha
    angular = 2.0 * math.exp(special.gammaln((a + 1) / 2) + special.gammaln((b + 1) / 2)
                             - special.gammaln((a + b + 2) / 2))
    return angular * _radial_moment(a + b + 1)


@dataclass(frozen=True)
class MollifierKernel:
    """Polynomial-reproducing kernel supported in the closed unit ball."""

    degree: int
    dim: int
    indices: tuple
    q_coeffs: tuple
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def expression(self):
        return _bump.polynomial_times_bump(self.q_coeffs, self.indices, self.dim)

    def derivative(self, alpha):
        """Callable evaluating ``D^alpha K`` (exactly differentiated)."""
        alpha = tuple(int(a) for a in np.atleast_1d(alpha))
        fn = self._cache.get(alpha)
        if fn is None:
            fn = _bump.compiled(_bump.derivative(self.expression, alpha), self.dim)
            self._cache[alpha] = fn
        return fn

    def __call__(self, y):
        return self.derivative((0,) * self.dim)(y)

    def sup_derivative(self, alpha, n_grid=2001):
        """Grid estimate of ``sup |D^alpha K|``, the constant in the decay bound."""
        if self.dim == 1:
            y = np.linspace(-1, 1, n_grid)
        else:
            t = np.linspace(-1, 1, int(math.sqrt(n_grid)) + 1)
            y = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1)
        return float(np.max(np.abs(self.derivative(alpha)(y))))


@lru_cache(maxsize=None)
def make_kernel(n, d=1):
    """Kernel reproducing polynomials of degree ``<= n`` in dimension ``d``.

    Raises
    ------
    KernelConstructionError
        If the moment matrix is numerically singular.
    """
    if n < 0 or int(n) != n:
        raise DomainError(f"degree must be a nonnegative integer, got {n}")
    if d not in (1, 2):
        raise DomainError(f"dimension must be 1 or 2, got {d}")
    idx = multi_indices(d, int(n))
    mom = np.array([[bump_moment(tuple(a + b for a, b in zip(al, be))) for be in idx] for al in idx])
    if np.linalg.cond(mom) > 1e13:
        raise KernelConstructionError(f"moment matrix singular for n={n}, d={d}")
    rhs = np.zeros(len(idx))
    rhs[0] = 1.0
    coeffs = np.linalg.solve(mom, rhs)
    return MollifierKernel(int(n), d, tuple(idx), tuple(float(c) for c in coeffs))


def default_epsilons(f, x=None):
    """Dyadic ladder from ``256 h`` down to ``4 h``, clipped to the window around ``x``."""
    h = f.spacing
    eps = h * 2.0 ** np.arange(8, 1, -1)
    if x is not None:
        room = _room(f, x)
        eps = eps[eps <= room]
    return eps


def _room(f, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    return float(np.min(np.concatenate([x - f.lower, f.upper - x])))


def _support_samples(f, x, eps):
    h = f.spacing
    lo = np.maximum(np.ceil((x - eps - f.lower) / h).astype(int), 0)
    hi = np.minimum(np.floor((x + eps - f.lower) / h).astype(int), np.asarray(f.shape) - 1)
    if f.dim == 1:
        g = f.lower[0] + h * np.arange(lo[0], hi[0] + 1)
        return g[:, None], f.values[lo[0]: hi[0] + 1]
    gx = f.lower[0] + h * np.arange(lo[0], hi[0] + 1)
    gy = f.lower[1] + h * np.arange(lo[1], hi[1] + 1)
    mx, my = np.meshgrid(gx, gy, indexing="ij")
    block = f.values[lo[0]: hi[0] + 1, lo[1]: hi[1] + 1]
    keep = (mx - x[0]) ** 2 + (my - x[1]) ** 2 < eps * eps
    return np.stack([mx[keep], my[keep]], axis=-1), block[keep]


def _monomials(v, idx):
    return np.stack([np.prod(v ** np.asarray(b), axis=-1) for b in idx], axis=1)


def _weights(kernel, f, x, eps, alpha, coords, correct):
    d = f.dim
    h = f.spacing
    u = (x - coords) / eps
    arg = u[:, 0] if d == 1 else u
    w = eps ** (-d - sum(alpha)) * kernel.derivative(alpha)(arg) * h ** d
    if not correct:
        return w, 0.0
    idx = list(kernel.indices)
    v = -u
    mono = _monomials(v, idx)
    base = _bump.bump(arg, d) * h ** d
    gram = mono.T @ (base[:, None] * mono)
    rhs = -(mono.T @ w)
    k = idx.index(tuple(alpha))
    rhs[k] += math.prod(math.factorial(a) for a in alpha) * eps ** (-sum(alpha))
    lam = np.linalg.solve(gram, rhs)
    delta = base * (mono @ lam)
    size = float(np.sum(np.abs(delta)) / max(np.sum(np.abs(w)), 1e-300))
    return w + delta, size


def mollified_derivative(f, x, alpha, eps, kernel=None, degree=None, correct=True):
    """``D^alpha (K_eps * f)(x)`` by quadrature on the grid."""
    alpha = tuple(int(a) for a in np.atleast_1d(alpha))
    if kernel is None:
        kernel = make_kernel(sum(alpha) if degree is None else degree, f.dim)
    x = np.asarray(x, dtype=float).reshape(-1)
    if eps > _room(f, x) + 1e-12 * eps:
        raise OutsideWindowError(f"kernel support of radius {eps:g} leaves the window")
    coords, values = _support_samples(f, x, eps)
    w, _ = _weights(kernel, f, x, eps, alpha, coords, correct)
    return float(w @ values)


class JetExtraction(NamedTuple):
    jet: PolyJet
    diagnostics: dict


def _extrapolate(eps, vals, gamma, use=3):
    e = np.asarray(eps[-use:])
    v = np.asarray(vals[-use:])
    if len(e) < 2:
        return float(v[-1])
    A = np.stack([np.ones_like(e), e ** gamma], axis=1)
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    return float(coef[0])


def _unstable(vals, floor):
    diffs = np.abs(np.diff(vals))
    if diffs.size < 3:
        return False
    half = diffs.size // 2
    coarse, fine = diffs[:half], diffs[-half:]
    return bool(fine.max() > floor and fine.mean() > 2.0 * max(coarse.mean(), floor))


def extract_jet(f, x, n, epsilons=None, phi=None, correct=True, extrapolate=True):
    """Jet of ``f`` at ``x`` from mollified derivatives over a ladder of scales.

    Parameters
    ----------
    f : SampledFunction
    x : float or sequence
        Interior point.
    n : int
        Jet degree (kernel reproduces degree ``n``).
    epsilons : decreasing sequence, optional
        Defaults to :func:`default_epsilons`. The smallest must be at least
        three grid spacings.
    phi : BoydExpr or str, optional
        When given, the extrapolation exponent for ``D^alpha`` is
        ``lower_index(phi) - |alpha|`` (if positive); otherwise 1.
    correct : bool
        Apply the discrete moment correction to the quadrature weights.
    extrapolate : bool
        Report the fitted limit ``a`` of ``a + b eps^gamma`` over the three
        finest scales; otherwise the finest-scale value.

    Returns
    -------
    JetExtraction
        ``jet`` with coefficients ``D^alpha / alpha!`` and ``diagnostics``
        holding per-scale values.

    Raises
    ------
    ExtractionUnstableError
        If successive differences grow as ``eps`` shrinks.
    """
    n = int(n)
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != f.dim:
        raise DomainError("point dimension does not match the function")
    eps = np.asarray(default_epsilons(f, x) if epsilons is None else epsilons, dtype=float)
    if eps.size == 0:
        raise OutsideWindowError("no scale in the ladder fits inside the window at this point")
    if np.any(np.diff(eps) >= 0):
        raise DomainError("epsilons must be strictly decreasing")
    if eps[-1] < 3 * f.spacing * (1 - 1e-12):
        raise DomainError("smallest scale must be at least 3 grid spacings")
    if eps[0] > _room(f, x) * (1 + 1e-12):
        raise OutsideWindowError("largest scale leaves the window")
    kernel = make_kernel(n, f.dim)
    lower = as_weight(phi).exact_indices.lower if phi is not None else None
    idx = kernel.indices
    per_alpha = {a: [] for a in idx}
    corrections = []
    for e in eps:
        coords, values = _support_samples(f, x, e)
        worst = 0.0
        for a in idx:
            w, size = _weights(kernel, f, x, e, a, coords, correct)
            per_alpha[a].append(float(w @ values))
            worst = max(worst, size)
        corrections.append(worst)
    fscale = float(np.max(np.abs(f.values))) or 1.0
    coeffs, gammas, limits = [], {}, {}
    for a in idx:
        vals = per_alpha[a]
        order = sum(a)
        floor = 1e-9 * fscale * eps[-1] ** (-order)
        if _unstable(vals, floor):
            raise ExtractionUnstableError(
                f"D^{a} values do not settle as eps decreases",
                diagnostics={"epsilons": eps.tolist(), "values": {str(k): v for k, v in per_alpha.items()}},
            )
        gamma = lower - order if (lower is not None and lower - order > 0) else 1.0
        gammas[a] = gamma
        limit = _extrapolate(eps, vals, gamma) if extrapolate else vals[-1]
        limits[a] = limit
        coeffs.append(limit / math.prod(math.factorial(k) for k in a))
    jet = PolyJet(tuple(x), n, coeffs)
    diagnostics = {
        "epsilons": eps.tolist(),
        "values": {_key(a): per_alpha[a] for a in idx},
        "limits": {_key(a): limits[a] for a in idx},
        "gamma": {_key(a): gammas[a] for a in idx},
        "moment_correction": corrections,
        "kernel_sup": {_key(a): kernel.sup_derivative(a) for a in idx},
    }
    return JetExtraction(jet, diagnostics)


def _key(alpha):
    return ",".join(str(a) for a in alpha)
