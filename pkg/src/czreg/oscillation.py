"""Oscillation profiles and membership verdicts.

The oscillation profile of ``f`` at ``x`` is
``r -> r^{-d/p} ||f - P_r||_{L^p(B(x, r))}`` over a ladder of radii, where
``P_r`` is either the best polynomial on each ball (``policy="per-ball"``)
or one fixed jet (``policy="fixed-jet"``). Dividing by a weight ``phi(r)``
gives the ratio curve ``rho``; its maximum is the seminorm estimate, its
behaviour at the small end drives the verdicts.

Verdict rules, with ``slope`` the least-squares slope of ``log rho`` against
``log r`` over the smallest half of the valid radii:

* little-o (``verdict_t``): ``pass`` when ``slope >= delta`` and
  ``rho(r_min) <= tau * max rho``; ``fail`` when ``slope <= delta / 4`` and
  ``rho(r_min) >= (1 - tau) * max rho``; ``indeterminate`` otherwise.
  Residuals at or below ``zero_tol`` count as exact zeros and pass. For a
  degree above the hypothesis degree, ``max rho`` also runs over the ratio
  of the lower-degree profile, which dominates it.
* big-O (``verdict_T``): ``slope >= -delta``, or the largest ratio over the
  smallest half of the radii is at most ``growth_cap`` times the largest
  ratio over the coarse half. Bounded but log-periodic ratio curves (the
  Weierstrass type) have noisy slopes; the cap still rejects power growth
  whose exponent exceeds about ``2 log(growth_cap) / (L log 2)`` on an
  ``L``-level dyadic ladder.

A finite ladder cannot certify a limit, so ``indeterminate`` is a regular
outcome rather than an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from joblib import Parallel, delayed

from .boyd import admissible, as_weight
from .exceptions import CZRegError, DomainError
from .lp_approx import BallSpec, PolyJet, best_poly, lp_ball_norm

__all__ = [
    "OscillationProfile",
    "MembershipReport",
    "BatchResult",
    "PExponent",
    "default_radii",
    "profile",
    "ratios",
    "seminorm",
    "little_o_test",
    "big_o_test",
    "decay_stats",
    "p_exponent",
    "batch_membership",
    "DELTA",
    "TAU",
    "GROWTH_CAP",
]

DELTA = 0.05
TAU = 0.2
GROWTH_CAP = 2.5
MIN_RADII = 6
POLICIES = ("per-ball", "fixed-jet")


def default_radii(f, levels=12, min_cells=8):
    """Dyadic radii from a quarter of the window down, stopping at ``min_cells`` spacings."""
    top = f.extent / 4.0
    radii = top * 2.0 ** -np.arange(levels)
    return radii[radii >= min_cells * f.spacing * (1 - 1e-12)]


@dataclass
class OscillationProfile:
    """Normalised residuals ``r^{-d/p} ||f - P||`` over decreasing radii.

    Missing entries (a solver or sampling error at that radius) are NaN,
    with the message kept in ``errors``.
    """

    x: tuple
    p: float
    degree: int
    policy: str
    radii: np.ndarray
    residuals: np.ndarray
    dim: int = 1
    jets: list = field(default_factory=list)
    jet: PolyJet | None = None
    errors: dict = field(default_factory=dict)

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.residuals = np.asarray(self.residuals, dtype=float)
        if self.policy not in POLICIES:
            raise DomainError(f"policy must be one of {POLICIES}")
        if self.radii.shape != self.residuals.shape:
            raise DomainError("radii and residuals differ in length")
        if np.any(np.diff(self.radii) >= 0):
            raise DomainError("radii must be strictly decreasing")
        ok = self.residuals[np.isfinite(self.residuals)]
        if np.any(ok < 0):
            raise DomainError("residuals must be nonnegative")

    @property
    def valid(self):
        return np.isfinite(self.residuals)

    def truncated(self, k):
        """Profile restricted to the ``k`` largest radii."""
        jets = self.jets[:k] if self.jets else []
        errors = {r: e for r, e in self.errors.items() if r >= self.radii[k - 1]}
        return OscillationProfile(self.x, self.p, self.degree, self.policy, self.radii[:k],
                                  self.residuals[:k], self.dim, jets, self.jet, errors)


def _norm_factor(r, p, d):
    return 1.0 if math.isinf(p) else r ** (-d / p)


def profile(f, x, p, n, radii=None, policy="per-ball", jet=None):
    """Oscillation profile of ``f`` at ``x``.

    Parameters
    ----------
    f : SampledFunction
    x : float or sequence
    p : float
        Exponent in ``[1.1, inf]`` for the per-ball policy, ``[1, inf]`` for
        fixed jets.
    n : int
        Polynomial degree (per-ball); ignored for fixed jets beyond reporting.
    radii : decreasing sequence, optional
        Defaults to :func:`default_radii`.
    policy : {"per-ball", "fixed-jet"}
    jet : PolyJet
        Required for ``policy="fixed-jet"``.
    """
    p = float(p)
    x = tuple(float(v) for v in np.atleast_1d(x))
    radii = default_radii(f) if radii is None else np.asarray(radii, dtype=float)
    if policy not in POLICIES:
        raise DomainError(f"policy must be one of {POLICIES}")
    if policy == "fixed-jet" and jet is None:
        raise DomainError("the fixed-jet policy needs a jet")
    residuals = np.full(len(radii), np.nan)
    jets, errors = [], {}
    for i, r in enumerate(radii):
        ball = BallSpec(x, float(r), p)
        try:
            if policy == "per-ball":
                best, norm = best_poly(f, ball, n)
                jets.append(best)
            else:
                norm = lp_ball_norm(f, ball, jet)
            residuals[i] = _norm_factor(r, p, f.dim) * norm
        except CZRegError as exc:
            errors[float(r)] = f"{type(exc).__name__}: {exc}"
            if policy == "per-ball":
                jets.append(None)
    return OscillationProfile(x, p, int(n), policy, radii, residuals, f.dim, jets,
                              jet if policy == "fixed-jet" else None, errors)


def ratios(prof, phi):
    """``rho(r) = residual(r) / phi(r)`` (NaN where the residual is missing)."""
    phi = as_weight(phi)
    return prof.residuals / phi(prof.radii)


def seminorm(prof, phi):
    """Largest ratio over the probed radii.

    This is a lower bound for the supremum over all ``r > 0``.
    """
    rho = ratios(prof, phi)
    rho = rho[np.isfinite(rho)]
    return float(rho.max()) if rho.size else float("nan")


class DecayStats(NamedTuple):
    radii: np.ndarray
    rho: np.ndarray
    slope: float
    rho_min_radius: float
    rho_max: float
    exact_zero: bool
    growth: float


def decay_stats(prof, phi, zero_tol=1e-10):
    """Quantities behind the verdicts, computed on the valid radii.

    Raises
    ------
    DomainError
        With fewer than six valid radii.
    """
    ok = prof.valid
    if int(ok.sum()) < MIN_RADII:
        raise DomainError(f"need at least {MIN_RADII} valid radii, have {int(ok.sum())}")
    radii = prof.radii[ok]
    res = prof.residuals[ok]
    rho = res / as_weight(phi)(radii)
    small = slice(len(radii) - (len(radii) + 1) // 2, None)
    zero = res <= zero_tol
    exact_zero = bool(zero[-1] or np.all(zero[small]))
    sel_r, sel_rho = radii[small], rho[small]
    pos = sel_rho > 0
    if pos.sum() >= 2:
        slope = float(np.polyfit(np.log(sel_r[pos]), np.log(sel_rho[pos]), 1)[0])
    else:
        slope = float("inf")
    coarse = rho[: small.start].max() if small.start > 0 else rho[0]
    growth = float(sel_rho.max() / coarse) if coarse > 0 else float("inf")
    return DecayStats(radii, rho, slope, float(rho[-1]), float(rho.max()), exact_zero, growth)


def little_o_test(prof, phi, delta=DELTA, tau=TAU, zero_tol=1e-10, reference=None):
    """Finite-range test of ``rho(r) = o(1)``: ``"pass"``, ``"fail"`` or ``"indeterminate"``.

    ``reference`` is an optional lower-degree per-ball profile at the same
    point and radii. Its residuals dominate those of ``prof``, so its
    largest ratio is the natural scale for the amplitude conditions; using it
    keeps the verdicts monotone in the degree, as the spaces are.
    """
    st = decay_stats(prof, phi, zero_tol)
    if st.exact_zero:
        return "pass"
    scale = st.rho_max
    if reference is not None:
        ref = ratios(reference, phi)
        ref = ref[np.isfinite(ref)]
        if ref.size:
            scale = max(scale, float(ref.max()))
    if st.slope >= delta and st.rho_min_radius <= tau * scale:
        return "pass"
    if st.slope <= delta / 4 and st.rho_min_radius >= (1 - tau) * scale:
        return "fail"
    return "indeterminate"


def big_o_test(prof, phi, delta=DELTA, zero_tol=1e-10, growth_cap=GROWTH_CAP):
    """Finite-range test of ``rho(r) = O(1)``: no power-law growth as ``r`` shrinks."""
    st = decay_stats(prof, phi, zero_tol)
    return bool(st.exact_zero or st.slope >= -delta or st.growth <= growth_cap)


class PExponent(NamedTuple):
    value: float
    low: float
    high: float
    degree: int
    ceiling: bool
    exact: bool


def _slope_with_band(radii, res):
    lr, ly = np.log(radii), np.log(res)
    A = np.stack([lr, np.ones_like(lr)], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    if len(lr) > 2:
        resid = ly - A @ coef
        s2 = float(resid @ resid) / (len(lr) - 2)
        se = math.sqrt(s2 / float(np.sum((lr - lr.mean()) ** 2)))
    else:
        se = 0.0
    return float(coef[0]), 1.96 * se


def p_exponent_from_profiles(profiles, ramp_tol=0.25, zero_tol=1e-10):
    """p-exponent from per-ball profiles of increasing degree.

    The first degree ``n`` whose slope stays below ``n + 1 - ramp_tol`` is
    used; a degree whose residual is dominated by the next Taylor term sits
    at slope ``n + 1`` and is skipped. If every degree saturates, the last
    slope is returned with ``ceiling=True``.
    """
    last = None
    for prof in sorted(profiles, key=lambda q: q.degree):
        ok = prof.valid
        radii, res = prof.radii[ok], prof.residuals[ok]
        if len(radii) < MIN_RADII:
            raise DomainError(f"need at least {MIN_RADII} valid radii")
        if np.all(res <= zero_tol):
            last = PExponent(float("inf"), float("inf"), float("inf"), prof.degree, True, True)
            continue
        pos = res > zero_tol
        slope, band = _slope_with_band(radii[pos], res[pos])
        last = PExponent(slope, slope - band, slope + band, prof.degree, False, False)
        if slope < prof.degree + 1 - ramp_tol:
            return last
    if last is None:
        raise DomainError("no profiles given")
    return last._replace(ceiling=True)


def p_exponent(f, x, p, n_max, radii=None, ramp_tol=0.25):
    """Slope of ``log residual`` against ``log r`` with the degree ramped up to ``n_max``.

    Returns a :class:`PExponent`; exact polynomials give ``+inf`` with
    ``exact=True``, and a slope still saturated at ``n_max`` is flagged with
    ``ceiling=True``.
    """
    radii = default_radii(f) if radii is None else np.asarray(radii, dtype=float)
    if len(radii) < MIN_RADII:
        raise DomainError(f"need at least {MIN_RADII} radii")
    profiles = []
    for n in range(int(n_max) + 1):
        prof = profile(f, x, p, n, radii)
        profiles.append(prof)
        est = p_exponent_from_profiles(profiles[-1:], ramp_tol)
        if not est.ceiling:
            return est
    return p_exponent_from_profiles(profiles[-1:], ramp_tol)


@dataclass
class MembershipReport:
    """Per-point membership summary."""

    point: tuple
    seminorm: float
    verdict_T: bool
    verdict_t: str
    p_exponent: float
    ratios: list
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict_t not in ("pass", "fail", "indeterminate", "error"):
            raise DomainError(f"bad verdict {self.verdict_t!r}")

    def to_dict(self):
        return {
            "point": list(self.point),
            "seminorm": _num(self.seminorm),
            "verdict_T": self.verdict_T,
            "verdict_t": self.verdict_t,
            "p_exponent": _num(self.p_exponent),
            "ratios": [{"r": _num(r), "rho": _num(q)} for r, q in self.ratios],
        }


def _num(v):
    v = float(v)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


class BatchResult(NamedTuple):
    reports: list
    summary: dict


def _membership_one(f, x, p, phi, n, t_degree, radii, policy, jet, delta, tau, zero_tol):
    try:
        prof_T = profile(f, x, p, n, radii, policy, jet)
        prof_t = prof_T if (t_degree == n and policy == "per-ball") else profile(f, x, p, t_degree, radii)
        rho_t = ratios(prof_t, phi)
        verdict_T = big_o_test(prof_T, phi, delta, zero_tol)
        ref = prof_T if (policy == "per-ball" and t_degree > n) else None
        verdict_t = little_o_test(prof_t, phi, delta, tau, zero_tol, reference=ref)
        st = decay_stats(prof_t, phi, zero_tol)
        pexp = p_exponent_from_profiles([prof_T, prof_t] if policy == "per-ball" else [prof_t])
        per_scale = [
            little_o_test(prof_t.truncated(k), phi, delta, tau, zero_tol,
                          reference=None if ref is None else ref.truncated(k))
            for k in range(MIN_RADII, len(prof_t.radii) + 1)
            if int(prof_t.truncated(k).valid.sum()) >= MIN_RADII
        ]
        return MembershipReport(
            tuple(np.atleast_1d(x).tolist()),
            seminorm(prof_T, phi),
            verdict_T,
            verdict_t,
            pexp.value,
            list(zip(prof_t.radii.tolist(), rho_t.tolist())),
            {
                "slope": st.slope,
                "rho_T": ratios(prof_T, phi).tolist(),
                "verdict_t_n": little_o_test(prof_T, phi, delta, tau, zero_tol),
                "per_scale": per_scale,
                "p_exponent_degree": pexp.degree,
                "p_exponent_ceiling": pexp.ceiling,
                "errors": {**prof_T.errors, **prof_t.errors},
            },
        )
    except CZRegError as exc:
        return MembershipReport(
            tuple(np.atleast_1d(x).tolist()), float("nan"), False, "error", float("nan"), [],
            {"error": f"{type(exc).__name__}: {exc}"},
        )


def batch_membership(f, points, p, phi, n, radii=None, policy="per-ball", t_degree=None,
                     jets=None, delta=DELTA, tau=TAU, zero_tol=None, n_jobs=None):
    """Membership reports at many points plus an order-independent summary.

    ``verdict_T`` uses degree ``n``; ``verdict_t`` uses ``t_degree``
    (default ``n + 1``). Residuals below ``zero_tol`` (default
    ``1e-10 * max(1, max |f|)``) count as exact zeros. Per-point errors are
    recorded in the report and never abort the batch.
    """
    phi = as_weight(phi)
    if zero_tol is None:
        zero_tol = 1e-10 * max(1.0, float(np.max(np.abs(f.values))))
    p = float(p)
    if not admissible(phi, p, f.dim):
        raise DomainError(f"weight {phi} is not admissible for p={p}, d={f.dim}")
    t_degree = n + 1 if t_degree is None else int(t_degree)
    radii = default_radii(f) if radii is None else np.asarray(radii, dtype=float)
    pts = np.asarray(points, dtype=float)
    pts = pts.reshape(-1, 1) if f.dim == 1 else pts.reshape(-1, f.dim)
    order = np.lexsort(pts.T[::-1])
    pts = pts[order]
    if jets is not None:
        jets = [jets[i] for i in order]
    tasks = (
        delayed(_membership_one)(f, tuple(pt), p, phi, n, t_degree, radii, policy,
                                 None if jets is None else jets[i], delta, tau, zero_tol)
        for i, pt in enumerate(pts)
    )
    reports = Parallel(n_jobs=n_jobs, prefer="threads")(tasks)
    return BatchResult(reports, summarize(reports))


def summarize(reports):
    """Counts and fractions of verdicts, overall and per radius cut-off."""
    total = len(reports)
    verdicts = [r.verdict_t for r in reports]
    out = {
        "points": total,
        "t": {v: verdicts.count(v) / total if total else 0.0
              for v in ("pass", "fail", "indeterminate", "error")},
        "T_pass": sum(bool(r.verdict_T) for r in reports) / total if total else 0.0,
        "max_seminorm": _num(max((r.seminorm for r in reports if np.isfinite(r.seminorm)), default=float("nan"))),
    }
    depth = max((len(r.diagnostics.get("per_scale", [])) for r in reports), default=0)
    per_scale = []
    for k in range(depth):
        col = [r.diagnostics["per_scale"][k] for r in reports if len(r.diagnostics.get("per_scale", [])) > k]
        per_scale.append({v: col.count(v) / len(col) for v in ("pass", "fail", "indeterminate")})
    out["per_scale"] = per_scale
    return out
