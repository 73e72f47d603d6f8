"""Seeded, desk-scale experiments on sampled test functions.

Each experiment returns an :class:`ExperimentReport` whose JSON form depends
only on its parameters, so re-running with the same configuration gives
byte-identical output. Wall-clock time is kept on the object but not
serialised.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .boyd import as_weight, fractional_band, indices, lil_weight
from .exceptions import (
    CZRegError,
    DomainError,
    ExperimentInapplicableError,
    InvariantViolation,
)
from .lp_approx import PolyJet
from .oscillation import (
    DELTA,
    TAU,
    batch_membership,
    default_radii,
    little_o_test,
    profile,
    ratios,
    seminorm,
)
from .signals import SampledFunction, generate

__all__ = [
    "ExperimentReport",
    "probe_points",
    "exp_rademacher",
    "exp_brownian_lil",
    "exp_smooth_remark",
    "exp_inclusions",
    "default_suite",
    "EXPERIMENTS",
]


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, NaN to None, inf to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def _atomic_write_text(path, text):
    path = os.fspath(path)
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


@dataclass
class ExperimentReport:
    """Outcome of one experiment.

    ``rows`` holds the plot series written to CSV with columns
    ``series, point, r, rho``.
    """

    name: str
    parameters: dict
    summaries: dict
    verdicts: dict
    rows: list = field(default_factory=list)
    runtime: float = 0.0

    def to_dict(self):
        return _clean({
            "name": self.name,
            "version": __version__,
            "parameters": self.parameters,
            "summaries": self.summaries,
            "verdicts": self.verdicts,
        })

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["series", "point", "r", "rho"])
        for series, point, r, rho in self.rows:
            writer.writerow([series, repr(float(point)), repr(float(r)),
                             "" if not np.isfinite(rho) else repr(float(rho))])
        return buf.getvalue()

    def save(self, json_path, csv_path=None):
        _atomic_write_text(json_path, self.to_json())
        if csv_path is not None:
            _atomic_write_text(csv_path, self.to_csv())


def _signal(spec):
    if isinstance(spec, SampledFunction):
        return spec, dict(spec.meta)
    spec = dict(spec)
    return generate(**spec), spec


def probe_points(f, n_points, radii=None, lo=None, hi=None):
    """``n_points`` grid nodes, evenly spread where the largest ball fits.

    Points are snapped to the nearest sample so that fixed jets can use
    exact sample values; duplicates after snapping are dropped.
    """
    if f.dim != 1:
        raise DomainError("probe_points is one-dimensional")
    radii = default_radii(f) if radii is None else np.asarray(radii)
    rmax = float(np.max(radii))
    lo = f.lower[0] + rmax if lo is None else lo
    hi = f.upper[0] - rmax if hi is None else hi
    if hi < lo:
        raise DomainError("the window is too small for the requested radii")
    raw = np.linspace(lo, hi, int(n_points))
    idx = np.unique(np.round((raw - f.origin[0]) / f.spacing).astype(int))
    return f.origin[0] + idx * f.spacing


def _coarsest_small(nr):
    """Index of the coarsest radius in the small-scale half of a ladder of ``nr`` radii."""
    return nr - (nr + 1) // 2


def _decay_fraction(rho_rows, factor=1.0):
    """Share of curves whose finest ratio is below ``factor`` times the coarsest small-scale ratio."""
    hits = []
    for rho in rho_rows:
        rho = np.asarray(rho, dtype=float)
        ok = np.isfinite(rho)
        if ok.sum() < 2:
            continue
        rho = rho[ok]
        k = _coarsest_small(len(rho))
        hits.append(rho[-1] < factor * rho[k])
    return float(np.mean(hits)) if hits else float("nan")


def _quantiles(values):
    v = np.asarray([x for x in values if np.isfinite(x)], dtype=float)
    if v.size == 0:
        return {}
    q = np.percentile(v, [10, 25, 50, 75, 90])
    return {"min": v.min(), "q10": q[0], "q25": q[1], "median": q[2], "q75": q[3],
            "q90": q[4], "max": v.max(), "mean": v.mean()}


def _default_phi(meta):
    params = meta.get("params", {})
    if meta.get("generator") == "cusp" or meta.get("kind") == "cusp":
        return f"t^{params.get('u', meta.get('u', 0.6))}"
    if "holder_exponent" in meta:
        return f"t^{meta['holder_exponent']}"
    if meta.get("kind") == "weierstrass":
        return f"t^{-math.log(meta.get('a', 0.5)) / math.log(meta.get('b', 3))}"
    return "t^0.5"


def exp_rademacher(generator, p=2.0, phi=None, n=None, n_points=256, radii=None,
                   min_hypothesis=0.5, n_jobs=None):
    """Hypothesis and conclusion sides of the Rademacher-type theorem on one function.

    The hypothesis side checks ``verdict_T`` (degree ``n``) and the seminorm
    at every probe point; the conclusion side applies the little-o test at
    degree ``n + 1``. Per-scale fractions show how the verdicts evolve as
    more of the small radii are included.

    Parameters
    ----------
    generator : dict or SampledFunction
        Keyword arguments for :func:`czreg.signals.generate`, or a sample.
    p : float
        Exponent in ``(1, inf)``.
    phi : str or BoydExpr, optional
        Defaults to the generator's known Hölder weight.
    n : int, optional
        Must equal the fractional band of ``phi`` (the default).

    Raises
    ------
    ExperimentInapplicableError
        When fewer than ``min_hypothesis`` of the points satisfy the
        hypothesis side.
    """
    t0 = time.perf_counter()
    f, spec = _signal(generator)
    phi = as_weight(phi if phi is not None else _default_phi({**f.meta, **spec}))
    p = float(p)
    if not (1 < p < math.inf):
        raise DomainError(f"p must lie in (1, inf), got {p}")
    band = fractional_band(phi)
    n = band if n is None else int(n)
    if n != band:
        raise DomainError(f"n = {n} is not the fractional band {band} of {phi}")
    radii = default_radii(f) if radii is None else np.asarray(radii, dtype=float)
    pts = probe_points(f, n_points, radii)
    res = batch_membership(f, pts, p, phi, n, radii, n_jobs=n_jobs)
    reps = res.reports
    T_pass = float(np.mean([r.verdict_T for r in reps]))
    if T_pass < min_hypothesis:
        raise ExperimentInapplicableError(
            f"hypothesis side holds at only {T_pass:.1%} of points; f is not in T^p_phi on E"
        )
    rho_t = [[q for _, q in r.ratios] for r in reps]
    finest = res.summary["per_scale"][-1] if res.summary["per_scale"] else {}
    not_pass = [r.point[0] for r in reps if r.verdict_t != "pass"]
    fails = [r.point[0] for r in reps if r.verdict_t == "fail"]
    rows = []
    for r in reps:
        rows += [("T", r.point[0], rad, q) for rad, q in zip(radii, r.diagnostics.get("rho_T", []))]
        rows += [("t", r.point[0], rad, q) for rad, q in r.ratios]
    pass_by_scale = [s["pass"] for s in res.summary["per_scale"]]
    summaries = {
        "points": len(reps),
        "hypothesis": {
            "T_pass_fraction": T_pass,
            "seminorm": _quantiles([r.seminorm for r in reps]),
        },
        "conclusion": {
            "verdicts": res.summary["t"],
            "per_scale": res.summary["per_scale"],
            "fraction_not_pass_finest": 1.0 - finest.get("pass", 0.0) if finest else None,
            "fail_fraction": len(fails) / len(reps),
            "decay_fraction": _decay_fraction(rho_t),
            "pass_fraction_trend": (pass_by_scale[-1] - pass_by_scale[0]) if pass_by_scale else None,
        },
        "fail_points": fails,
        "not_pass_points": not_pass,
    }
    verdicts = {
        "hypothesis_all": all(r.verdict_T for r in reps),
        "fail_fraction_within_3_per_points": len(fails) <= 3,
    }
    params = {"generator": spec, "p": p, "phi": str(phi), "n": n, "n_points": len(pts),
              "radii": radii, "delta": DELTA, "tau": TAU}
    return ExperimentReport("rademacher", params, summaries, verdicts, rows,
                            time.perf_counter() - t0)


def _fixed_degree0(f, x, p, radii, phi):
    i = int(round((x - f.origin[0]) / f.spacing))
    jet = PolyJet((x,), 0, [f.values[i]])
    prof = profile(f, x, p, 0, radii, policy="fixed-jet", jet=jet)
    return seminorm(prof, phi), ratios(prof, phi)


def exp_brownian_lil(seed=0, n_samples=2 ** 20, p=2.0, p_lil=math.inf, n_points=512,
                     radii=None, n_jobs=None):
    """Iterated-logarithm behaviour of a Brownian path.

    With ``phi(t) = t^{1/2} L2(t)^{1/2}``:

    (a) the degree-0 fixed-jet statistic ``max_r rho(t0, r)`` (jet ``B(t0)``,
        exponent ``p_lil``), whose distribution over ``t0`` should sit near
        ``sqrt(2)`` for the sup norm;
    (b) degree-1 per-ball ratios at exponent ``p``, checked for decay.

    Tolerances: the iterated logarithm converges so slowly that only the
    window ``0.8 <= median <= 2.2`` is meaningful at ``2^20`` samples.
    """
    t0 = time.perf_counter()
    n_samples = int(n_samples)
    if n_samples < 2 ** 16:
        raise DomainError(f"need at least 2^16 samples, got {n_samples}")
    f = generate("brownian", n=n_samples, seed=seed)
    phi = lil_weight()
    radii = default_radii(f) if radii is None else np.asarray(radii, dtype=float)
    pts = probe_points(f, n_points, radii)
    lil = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_fixed_degree0)(f, float(x), p_lil, radii, phi) for x in pts
    )
    stat = [s for s, _ in lil]
    res = batch_membership(f, pts, p, phi, 0, radii, n_jobs=n_jobs)
    reps = res.reports
    rho1 = [[q for _, q in r.ratios] for r in reps]
    v0 = [r.diagnostics.get("verdict_t_n", "error") for r in reps]
    v1 = [r.verdict_t for r in reps]
    witnesses = sum(a == "fail" and b == "pass" for a, b in zip(v0, v1))
    rows = []
    for x, (_, rho) in zip(pts, lil):
        rows += [("lil_degree0", x, rad, q) for rad, q in zip(radii, rho)]
    for r in reps:
        rows += [("degree1", r.point[0], rad, q) for rad, q in r.ratios]
    summaries = {
        "points": len(pts),
        "lil_statistic": _quantiles(stat),
        "sqrt2": math.sqrt(2.0),
        "degree1_decay_fraction": _decay_fraction(rho1),
        "degree1_decay_fraction_0.7": _decay_fraction(rho1, 0.7),
        "verdicts_degree0": {v: v0.count(v) / len(v0) for v in ("pass", "fail", "indeterminate", "error")},
        "verdicts_degree1": {v: v1.count(v) / len(v1) for v in ("pass", "fail", "indeterminate", "error")},
        "strictness_witnesses": witnesses,
        "tolerances": "median of the degree-0 statistic in [0.8, 2.2]; the limsup sqrt(2) is "
                      "approached at an iterated-logarithm rate and refers to the sup norm",
    }
    median = summaries["lil_statistic"].get("median", float("nan"))
    verdicts = {
        "median_in_window": bool(0.8 <= median <= 2.2),
        "degree1_decay_at_least_60pct": bool(summaries["degree1_decay_fraction"] >= 0.6),
    }
    params = {"seed": int(seed), "n_samples": n_samples, "p": float(p), "p_lil": float(p_lil),
              "phi": str(phi), "n_points": len(pts), "radii": radii}
    return ExperimentReport("brownian_lil", params, summaries, verdicts, rows,
                            time.perf_counter() - t0)


def _upper_index(phi):
    return indices(phi).upper


def exp_smooth_remark(generator=None, phi="t^0.5", p=2.0, n=0, eta=0.1, n_points=65,
                      radii=None, n_jobs=None):
    """Smooth functions belong to the little-o space at degree ``n`` when ``b̄(phi) < n + 1``.

    Checks that every probe point passes and that the fitted small-scale
    slope of the ratio is at least ``n + 1 - b̄(phi) - eta``. Also records
    whether the measured p-exponent exceeds ``b̄(phi)`` everywhere, in which
    case the Rademacher-type statement holds trivially.
    """
    t0 = time.perf_counter()
    generator = {"kind": "sin"} if generator is None else generator
    f, spec = _signal(generator)
    phi = as_weight(phi)
    n = int(n)
    upper = _upper_index(phi)
    if not upper < n + 1:
        raise DomainError(f"need upper index {upper:.4g} < n + 1 = {n + 1}")
    radii = default_radii(f) if radii is None else np.asarray(radii, dtype=float)
    pts = probe_points(f, n_points, radii)
    res = batch_membership(f, pts, p, phi, n, radii, t_degree=n, n_jobs=n_jobs)
    reps = res.reports
    slopes = [r.diagnostics.get("slope", float("nan")) for r in reps]
    exact = [r.p_exponent == math.inf for r in reps]
    target = n + 1 - upper - eta
    pexp = [r.p_exponent for r in reps]
    all_pass = all(r.verdict_t == "pass" for r in reps)
    rows = [("t", r.point[0], rad, q) for r in reps for rad, q in r.ratios]
    summaries = {
        "points": len(reps),
        "verdicts": res.summary["t"],
        "upper_index": upper,
        "slope_target": target,
        "slope": _quantiles(slopes),
        "p_exponent": _quantiles(pexp),
        "exact_zero_points": int(sum(exact)),
    }
    finite_slopes = [s for s in slopes if np.isfinite(s)]
    verdicts = {
        "all_pass": all_pass,
        "slope_at_least_target": all(s >= target for s in finite_slopes),
        "vacuous_case_consistent": (not all(q > upper for q in pexp)) or all_pass,
    }
    params = {"generator": spec, "p": float(p), "phi": str(phi), "n": n, "eta": eta,
              "n_points": len(pts), "radii": radii}
    return ExperimentReport("smooth_remark", params, summaries, verdicts, rows,
                            time.perf_counter() - t0)


def default_suite(phi):
    """Generators spanning the regularity levels around ``phi``."""
    upper = _upper_index(as_weight(phi))
    return [
        {"kind": "cusp", "u": round(upper + 0.1, 10), "x0": 0.0},
        {"kind": "cusp", "u": round(upper - 0.1, 10), "x0": 0.0},
        {"kind": "poly", "coeffs": [0.5, -1.0, 2.0]},
        {"kind": "sin"},
        {"kind": "weierstrass", "a": 0.5, "b": 3},
        {"kind": "brownian", "n": 2 ** 16, "seed": 0},
    ]


LEVELS = ("t_upper_plus_eta", "t_phi_n", "t_phi_n1", "t_lower_minus_eta")


def _inclusion_point(f, x, p, phi, n, radii, phis, zero_tol):
    try:
        prof_n = profile(f, x, p, n, radii)
        prof_n1 = profile(f, x, p, n + 1, radii)
        levels = [(phis[0], prof_n, None), (phi, prof_n, None),
                  (phi, prof_n1, prof_n), (phis[1], prof_n1, prof_n)]
        verdicts = [little_o_test(prof, w, zero_tol=zero_tol, reference=ref)
                    for w, prof, ref in levels]
        return verdicts, ratios(prof_n, phi), ratios(prof_n1, phi)
    except CZRegError as exc:
        return [f"error: {exc}"] * 4, None, None


def exp_inclusions(suite=None, phi=None, p=2.0, n=None, eta=0.1, n_points=33, radii_levels=12,
                   n_jobs=None):
    """Verdict chain ``t_{b̄+eta} => t_{phi,n} => t_{phi,n+1} => t_{b-eta}`` over a suite.

    Levels one and two share the degree-``n`` per-ball profile, levels three
    and four the degree-``n + 1`` profile. A ``pass`` at one level must be a
    ``pass`` at every later level; a ``fail`` at level ``k`` together with a
    ``pass`` at level ``k + 1`` is counted as a strictness witness.

    Raises
    ------
    InvariantViolation
        If any implication fails at any probe point.
    """
    t0 = time.perf_counter()
    phi = as_weight(phi if phi is not None else lil_weight())
    band = fractional_band(phi)
    n = band if n is None else int(n)
    idx = indices(phi)
    phis = (as_weight(f"t^{idx.upper + eta}"), as_weight(f"t^{idx.lower - eta}"))
    suite = default_suite(phi) if suite is None else list(suite)
    per_gen, rows, violations = [], [], []
    witnesses = [0, 0, 0]
    for spec in suite:
        f, spec = _signal(spec)
        radii = default_radii(f, levels=radii_levels)
        pts = probe_points(f, n_points, radii)
        zero_tol = 1e-10 * max(1.0, float(np.max(np.abs(f.values))))
        out = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_inclusion_point)(f, float(x), float(p), phi, n, radii, phis, zero_tol)
            for x in pts
        )
        counts = {lv: {} for lv in LEVELS}
        gen_witness = [0, 0, 0]
        name = spec.get("kind", f.meta.get("generator", "f"))
        label = f"{name}" + "".join(f",{k}={spec[k]}" for k in sorted(spec) if k != "kind")
        for x, (verdicts, rho_n, rho_n1) in zip(pts, out):
            for lv, v in zip(LEVELS, verdicts):
                counts[lv][v] = counts[lv].get(v, 0) + 1
            for k in range(3):
                if verdicts[k] == "pass" and verdicts[k + 1] != "pass":
                    violations.append({"generator": label, "point": float(x), "level": k,
                                       "verdicts": verdicts})
                if verdicts[k] == "fail" and verdicts[k + 1] == "pass":
                    gen_witness[k] += 1
            if rho_n is not None:
                rows += [(f"{label}:n", x, r, q) for r, q in zip(radii, rho_n)]
                rows += [(f"{label}:n+1", x, r, q) for r, q in zip(radii, rho_n1)]
        witnesses = [a + b for a, b in zip(witnesses, gen_witness)]
        per_gen.append({"generator": spec, "label": label, "points": len(pts),
                        "counts": counts, "witnesses": gen_witness})
    if violations:
        raise InvariantViolation(
            f"{len(violations)} inclusion implications violated, first: {violations[0]}"
        )
    summaries = {"generators": per_gen, "witnesses": witnesses,
                 "levels": list(LEVELS),
                 "level_weights": [str(phis[0]), str(phi), str(phi), str(phis[1])]}
    verdicts = {"violations": 0, "middle_strictness_witnessed": witnesses[1] > 0}
    params = {"suite": [g["generator"] for g in per_gen], "phi": str(phi), "p": float(p), "n": n,
              "eta": eta, "n_points": n_points, "radii_levels": radii_levels}
    return ExperimentReport("inclusions", params, summaries, verdicts, rows,
                            time.perf_counter() - t0)


EXPERIMENTS = {
    "rademacher": exp_rademacher,
    "brownian-lil": exp_brownian_lil,
    "smooth-remark": exp_smooth_remark,
    "inclusions": exp_inclusions,
}
