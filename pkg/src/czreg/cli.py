"""Command-line entry point: ``czreg <subcommand> [options]``.

Exit status is 0 on success, 1 when an analysis step fails, and 2 for usage
errors (bad flags, unreadable inputs, malformed weights or files). Every
JSON output embeds the tool version and the effective configuration and is
written atomically; the same configuration yields the same bytes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from ._validation import check_degree, check_p
from .boyd import admissible, as_weight, dilation, fractional_band, indices
from .exceptions import (
    CZRegError,
    DomainError,
    FormatError,
    WeightParseError,
)
from .experiments import (
    EXPERIMENTS,
    _atomic_write_text,
    _clean,
    exp_brownian_lil,
    exp_inclusions,
    exp_rademacher,
    exp_smooth_remark,
)
from .jet_extract import extract_jet
from .lp_approx import PolyJet
from .oscillation import DELTA, TAU, batch_membership, default_radii
from .signals import KINDS, GridSpec, SampledFunction, generate, load, load_csv, save, save_csv
from .whitney import JetField, check_compatibility, extend, verify_bound

OUT_DIR_ENV = "CZREG_OUT_DIR"

FORMATS = """\
file formats:
  .szf    binary: 4-byte magic "SZF1", uint64 little-endian header length H,
          H bytes of UTF-8 JSON {dim, meta, origin, shape, spacing}, then the
          values as little-endian float64 in row-major order.
  .csv    first line "# szf " followed by the same JSON header, then one value
          per line (d=1) or one comma-separated grid row per line (d=2).
  report  JSON {tool, version, config, summary, reports}; each report is
          {point, seminorm, verdict_T, verdict_t, p_exponent, ratios: [{r, rho}]}.
  jets    JSON list of {x, coeffs, diagnostics} with coeffs[k] = D^k P(x) / k!;
          diagnostics hold the scales and per-scale values ("extend" reads x, coeffs).
  ratios  CSV with header "series,point,r,rho" (one row per point and radius).

environment:
  CZREG_OUT_DIR  directory for outputs whose path is not given explicitly
                 (default: the current directory).

exit status: 0 success, 1 analysis error, 2 usage error.
"""


class UsageError(Exception):
    """Raised for problems the user must fix in the invocation."""


@dataclass
class RunConfig:
    """Subcommand plus its effective, fully serialisable parameters."""

    command: str
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return _clean({"command": self.command, "params": self.params})


def _out_path(value, default_name):
    if value:
        return value
    return os.path.join(os.environ.get(OUT_DIR_ENV, "."), default_name)


def _parse_points(text):
    """``"a,b,c"`` for explicit points or ``"lo:hi:count"`` for an even spread."""
    try:
        if ":" in text:
            lo, hi, count = text.split(":")
            return np.linspace(float(lo), float(hi), int(count)).tolist()
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse points {text!r}; use 'a,b,c' or 'lo:hi:count'") from None


def _load_signal(path):
    if not os.path.exists(path):
        raise UsageError(f"input file not found: {path}")
    try:
        if path.endswith(".csv"):
            return load_csv(path)
        return load(path)
    except FormatError as exc:
        raise UsageError(f"malformed input {path}: {exc}") from None
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def _weight(text):
    try:
        return as_weight(text)
    except WeightParseError as exc:
        raise UsageError(f"invalid weight {text!r}: {exc}") from None


def _write_json(path, obj):
    _atomic_write_text(path, json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n")


def _envelope(cfg, summary, reports=None):
    out = {"tool": "czreg", "version": __version__, "config": cfg.to_dict(), "summary": summary}
    if reports is not None:
        out["reports"] = reports
    return out


# ---------------------------------------------------------------- subcommands

def cmd_generate(args):
    out = _out_path(args.out, f"{args.kind}.szf")
    params = {"kind": args.kind, "n": args.n, "seed": args.seed, "a": args.a, "b": args.b,
              "u": args.u, "x0": args.x0, "lo": args.lo, "hi": args.hi,
              "horizon": args.horizon, "terms": args.terms,
              "coeffs": [float(c) for c in args.coeffs.split(",")] if args.coeffs else [0.0]}
    f = generate(**params)
    if out.endswith(".csv"):
        save_csv(f, out)
    else:
        save(f, out)
    print(f"wrote {out} ({f.values.size} samples)")
    return 0


def _fixed_jets(f, pts, degree):
    jets = []
    for x in pts:
        try:
            if degree == 0:
                value = float(np.interp(x, f.grid.axis(0), f.values))
                jets.append(PolyJet((x,), 0, [value]))
            else:
                jets.append(extract_jet(f, x, degree).jet)
        except CZRegError:
            jets.append(None)
    return jets


def cmd_analyze(args):
    f = _load_signal(args.input)
    if f.dim != 1 and args.points is None:
        raise UsageError("--points is required for two-dimensional inputs")
    phi = _weight(args.phi)
    p = check_p(args.p)
    degree = check_degree(args.degree)
    radii = default_radii(f, levels=args.radii_levels)
    if args.points:
        pts = _parse_points(args.points)
    else:
        from .experiments import probe_points

        pts = probe_points(f, 65, radii).tolist()
    out = _out_path(args.out, "report.json")
    cfg = RunConfig("analyze", {
        "in": args.input, "p": p, "phi": str(phi), "degree": degree, "t_degree": args.t_degree,
        "policy": args.policy, "points": pts, "radii": radii, "delta": args.delta, "tau": args.tau,
        "out": out,
    })
    jets = None
    if args.policy == "fixed-jet":
        order = np.argsort(pts, kind="stable")
        jets = [None] * len(pts)
        for i, jet in zip(order, _fixed_jets(f, [pts[i] for i in order], degree)):
            jets[i] = jet
    res = batch_membership(f, pts, p, phi, degree, radii, args.policy, args.t_degree, jets,
                           args.delta, args.tau, n_jobs=args.jobs)
    _write_json(out, _envelope(cfg, res.summary, [r.to_dict() for r in res.reports]))
    t = res.summary["t"]
    print(f"wrote {out}: {len(res.reports)} points, pass {t['pass']:.3f}, fail {t['fail']:.3f}, "
          f"indeterminate {t['indeterminate']:.3f}, T {res.summary['T_pass']:.3f}")
    return 1 if t["error"] == 1.0 else 0


def _eps_ladder(f, eps_max, levels):
    if eps_max is None:
        return None
    if eps_max <= 0 or levels < 1:
        raise UsageError("--eps-max must be positive and --eps-levels at least 1")
    return (eps_max * 2.0 ** -np.arange(levels)).tolist()


def cmd_jet(args):
    f = _load_signal(args.input)
    degree = check_degree(args.degree)
    if args.x is None and args.points is None:
        raise UsageError("give --x or --points")
    pts = [args.x] if args.x is not None else _parse_points(args.points)
    eps = _eps_ladder(f, args.eps_max, args.eps_levels)
    out = _out_path(args.out, "jets.json")
    rows, failures = [], 0
    for x in pts:
        try:
            ex = extract_jet(f, x, degree, epsilons=eps, phi=args.phi)
            rows.append({"x": x, "coeffs": ex.jet.coeffs.tolist(), "diagnostics": ex.diagnostics})
        except CZRegError as exc:
            failures += 1
            print(f"jet at {x}: {type(exc).__name__}: {exc}", file=sys.stderr)
    _atomic_write_text(out, json.dumps(_clean(rows), sort_keys=True, indent=2, allow_nan=False) + "\n")
    print(f"wrote {out}: {len(rows)} jets")
    return 1 if failures else 0


def _read_jets(path, degree):
    if not os.path.exists(path):
        raise UsageError(f"jets file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        rows = sorted(((float(d["x"]), [float(c) for c in d["coeffs"]]) for d in data))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"malformed jets file {path}: {exc}") from None
    if not rows:
        raise UsageError("the jets file is empty")
    n = max(len(c) for _, c in rows) - 1 if degree is None else degree
    return [r[0] for r in rows], [PolyJet((x,), n, c[: n + 1]) for x, c in rows]


def cmd_extend(args):
    phi = _weight(args.phi)
    pts, jets = _read_jets(args.jets, args.degree)
    try:
        fld = JetField(pts, jets, phi, args.bound)
    except DomainError as exc:
        raise UsageError(f"invalid jet field: {exc}") from None
    ext = extend(fld, margin=args.margin)
    lo, hi = ext.domain
    grid = GridSpec.linspace(lo, hi, args.n)
    values = ext(grid.axis(0))
    meta = {"generator": "whitney", "params": {"jets": args.jets, "phi": str(phi),
                                               "degree": fld.degree, "margin": args.margin}}
    out = _out_path(args.out, "extension.szf")
    f = SampledFunction.from_grid(grid, values, meta)
    if out.endswith(".csv"):
        save_csv(f, out)
    else:
        save(f, out)
    print(f"wrote {out} ({args.n} samples on [{lo:g}, {hi:g}])")
    if args.verify:
        m = fld.degree + 1 if args.m is None else args.m
        if len(pts) >= 2:
            _, comp = check_compatibility(fld)
            print(f"C_comp = {comp:.6g}")
        C = verify_bound(ext, phi, fld.degree, m)
        print(f"C = {C:.6g}")
    return 0


def cmd_boyd(args):
    phi = _weight(args.phi)
    print(f"phi = {phi}")
    if args.indices or not (args.dilation or args.band or args.admissible):
        idx = indices(phi, method=args.method)
        print(f"lower = {idx.lower:.6g}")
        print(f"upper = {idx.upper:.6g}")
        print(f"uncertainty = {idx.uncertainty:.3g} ({idx.method})")
    for t in args.dilation or []:
        print(f"dilation({t:g}) = {float(dilation(phi, t)):.10g}")
    if args.band:
        print(f"band n = {fractional_band(phi, method=args.method)}")
    if args.admissible:
        p = check_p(args.admissible[0])
        d = int(args.admissible[1])
        print(f"admissible(p={p:g}, d={d}) = {admissible(phi, p, d, method=args.method)}")
    return 0


def cmd_experiment(args):
    name = args.name
    common = {"n_jobs": args.jobs}
    if name == "rademacher":
        gen = {"kind": args.kind, "n": args.n, "seed": args.seed, "a": args.a, "b": args.b,
               "u": args.u, "x0": args.x0}
        params = {"generator": gen, "p": check_p(args.p if args.p is not None else 2.0),
                  "phi": args.phi, "n": args.degree, "n_points": args.points or 256}
        runner = exp_rademacher
    elif name == "brownian-lil":
        params = {"seed": args.seed, "n_samples": args.n or 2 ** 20,
                  "p": check_p(args.p if args.p is not None else 2.0),
                  "n_points": args.points or 512}
        runner = exp_brownian_lil
    elif name == "smooth-remark":
        gen = {"kind": args.kind if args.kind != "weierstrass" else "sin", "n": args.n}
        params = {"generator": gen, "phi": args.phi or "t^0.5",
                  "p": check_p(args.p if args.p is not None else 2.0),
                  "n": args.degree or 0, "n_points": args.points or 65}
        runner = exp_smooth_remark
    else:
        params = {"phi": args.phi, "p": check_p(args.p if args.p is not None else 2.0),
                  "n": args.degree, "n_points": args.points or 33}
        runner = exp_inclusions
    if params.get("phi") is not None:
        params["phi"] = str(_weight(params["phi"]))
    out = _out_path(args.out, f"{name}.json")
    csv_path = args.csv or os.path.splitext(out)[0] + ".csv"
    report = runner(**params, **common)
    cfg = RunConfig("experiment", {"name": name, **params, "out": out, "csv": csv_path})
    payload = _envelope(cfg, report.summaries)
    payload["experiment"] = report.to_dict()
    _write_json(out, payload)
    _atomic_write_text(csv_path, report.to_csv())
    print(f"wrote {out} and {csv_path} ({report.runtime:.1f} s)")
    for key, val in sorted(report.verdicts.items()):
        print(f"  {key}: {val}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser():
    parser = argparse.ArgumentParser(
        prog="czreg",
        description="Weighted pointwise regularity of sampled functions.",
        epilog=FORMATS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"czreg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_text):
        return sub.add_parser(name, help=help_text, description=help_text, epilog=FORMATS,
                              formatter_class=argparse.RawDescriptionHelpFormatter)

    jobs_help = "worker threads (default: available CPUs)"
    default_jobs = os.cpu_count() or 1

    g = add("generate", "Generate a sampled test function.")
    g.add_argument("--kind", choices=KINDS, required=True, help="test function family")
    g.add_argument("--n", type=int, default=None, help="number of samples (default 16385)")
    g.add_argument("--seed", type=int, default=0, help="RNG seed for brownian (default 0)")
    g.add_argument("--a", type=float, default=0.5, help="weierstrass amplitude ratio (default 0.5)")
    g.add_argument("--b", type=int, default=3, help="weierstrass frequency ratio (default 3)")
    g.add_argument("--u", type=float, default=0.6, help="cusp exponent (default 0.6)")
    g.add_argument("--x0", type=float, default=0.0, help="cusp location / poly centre (default 0)")
    g.add_argument("--coeffs", default=None, help="poly Taylor coefficients 'c0,c1,...'")
    g.add_argument("--lo", type=float, default=None, help="window start")
    g.add_argument("--hi", type=float, default=None, help="window end")
    g.add_argument("--horizon", type=float, default=1.0, help="brownian time horizon (default 1)")
    g.add_argument("--terms", type=int, default=None, help="weierstrass terms (default: all resolved)")
    g.add_argument("--out", default=None, help="output path, .szf or .csv")
    g.set_defaults(func=cmd_generate)

    a = add("analyze", "Oscillation profiles and membership verdicts.")
    a.add_argument("--in", dest="input", required=True, help="input .szf or .csv")
    a.add_argument("--p", default="2", help="integrability exponent, number or 'inf' (default 2)")
    a.add_argument("--phi", default="t^0.5", help="weight, e.g. 't^0.5 * L2^0.5' (default t^0.5)")
    a.add_argument("--degree", type=int, default=0, help="hypothesis degree n (default 0)")
    a.add_argument("--t-degree", type=int, default=None, help="little-o degree (default n+1)")
    a.add_argument("--policy", choices=("per-ball", "fixed-jet"), default="per-ball",
                   help="residual policy (default per-ball)")
    a.add_argument("--points", default=None,
                   help="'a,b,c' or 'lo:hi:count'; write --points=-1,0 when the first value "
                        "is negative (default: 65 interior grid points)")
    a.add_argument("--radii-levels", type=int, default=12, help="dyadic radii (default 12)")
    a.add_argument("--delta", type=float, default=DELTA, help=f"slope threshold (default {DELTA})")
    a.add_argument("--tau", type=float, default=TAU, help=f"amplitude threshold (default {TAU})")
    a.add_argument("--out", default=None, help="report path (default report.json)")
    a.add_argument("--jobs", type=int, default=default_jobs, help=jobs_help)
    a.set_defaults(func=cmd_analyze)

    j = add("jet", "Extract jets by mollification.")
    j.add_argument("--in", dest="input", required=True, help="input .szf or .csv")
    j.add_argument("--x", type=float, default=None, help="a single extraction point")
    j.add_argument("--points", default=None, help="several points: 'a,b,c' or 'lo:hi:count' (--points=-1,0 for negative starts)")
    j.add_argument("--eps-max", type=float, default=None,
                   help="largest mollification scale (default 256 grid spacings)")
    j.add_argument("--eps-levels", type=int, default=7, help="dyadic scales below --eps-max (default 7)")
    j.add_argument("--degree", type=int, default=1, help="jet degree (default 1)")
    j.add_argument("--phi", default=None, help="weight steering the extrapolation exponent")
    j.add_argument("--out", default=None, help="jets JSON path (default jets.json)")
    j.set_defaults(func=cmd_jet)

    e = add("extend", "Whitney extension of a jet field.")
    e.add_argument("--jets", required=True, help="jets JSON: list of {x, coeffs}")
    e.add_argument("--phi", default="t^1", help="weight for the compatibility gate (default t^1)")
    e.add_argument("--degree", type=int, default=None, help="jet degree (default: from the file)")
    e.add_argument("--m", type=int, default=None, help="difference order for --verify (default n+1)")
    e.add_argument("--bound", type=float, default=1.0, help="the constant M (default 1)")
    e.add_argument("--margin", type=float, default=1.0, help="margin of U around the data (default 1)")
    e.add_argument("--n", type=int, default=4097, help="output samples on U (default 4097)")
    e.add_argument("--out", default=None, help="output .szf or .csv (default extension.szf)")
    e.add_argument("--verify", action="store_true", help="print C_comp and the measured bound C")
    e.set_defaults(func=cmd_extend)

    b = add("boyd", "Boyd weight algebra.")
    b.add_argument("--phi", required=True, help="weight expression")
    b.add_argument("--indices", action="store_true", help="print lower/upper indices")
    b.add_argument("--method", choices=("exact", "numeric"), default="exact",
                   help="index computation (default exact)")
    b.add_argument("--dilation", type=float, action="append", metavar="T",
                   help="print the dilation function at T (repeatable)")
    b.add_argument("--band", action="store_true", help="print the fractional band n")
    b.add_argument("--admissible", nargs=2, metavar=("P", "D"), help="check admissibility")
    b.set_defaults(func=cmd_boyd)

    x = add("experiment", "Run a seeded experiment.")
    x.add_argument("name", choices=sorted(EXPERIMENTS), help="experiment name")
    x.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    x.add_argument("--n", type=int, default=None, help="number of samples")
    x.add_argument("--kind", choices=KINDS, default="weierstrass", help="generator (rademacher)")
    x.add_argument("--a", type=float, default=0.5, help="weierstrass a (default 0.5)")
    x.add_argument("--b", type=int, default=3, help="weierstrass b (default 3)")
    x.add_argument("--u", type=float, default=0.6, help="cusp exponent (default 0.6)")
    x.add_argument("--x0", type=float, default=0.0, help="cusp location (default 0)")
    x.add_argument("--phi", default=None, help="weight (default depends on the experiment)")
    x.add_argument("--p", default=None, help="integrability exponent (default 2)")
    x.add_argument("--degree", type=int, default=None, help="degree n (default: fractional band)")
    x.add_argument("--points", type=int, default=None, help="number of probe points")
    x.add_argument("--out", default=None, help="report JSON path (default <name>.json)")
    x.add_argument("--csv", default=None, help="ratios CSV path (default: next to --out)")
    x.add_argument("--jobs", type=int, default=default_jobs, help=jobs_help)
    x.set_defaults(func=cmd_experiment)
    return parser


def parse_args(argv=None):
    args = build_parser().parse_args(argv)
    return args


def run(args):
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"czreg {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (WeightParseError, FormatError, DomainError) as exc:
        print(f"czreg {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except CZRegError as exc:
        print(f"czreg {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main(argv=None):
    args = parse_args(argv)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
