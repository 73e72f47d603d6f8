import json
import math

import numpy as np
import pytest

from czreg.exceptions import DomainError, ExperimentInapplicableError
from czreg.experiments import (
    ExperimentReport,
    default_suite,
    exp_brownian_lil,
    exp_inclusions,
    exp_rademacher,
    exp_smooth_remark,
    probe_points,
)
from czreg.signals import generate

CUSP = {"kind": "cusp", "u": 0.6, "n": 4097}


def test_probe_points_snap_to_grid():
    f = generate("sin", n=1025)
    pts = probe_points(f, 17)
    idx = (pts - f.origin[0]) / f.spacing
    np.testing.assert_allclose(idx, np.round(idx), atol=1e-9)
    assert pts.min() >= 0.25 - 1e-12 and pts.max() <= 0.75 + 1e-12
    with pytest.raises(DomainError):
        probe_points(f, 5, radii=[0.6])


def test_rademacher_on_cusp():
    rep = exp_rademacher(CUSP, n_points=21)
    s = rep.summaries
    assert s["hypothesis"]["T_pass_fraction"] == 1.0
    assert s["fail_points"] == [0.0]
    assert rep.verdicts["fail_fraction_within_3_per_points"]
    assert rep.parameters["n"] == 0


def test_rademacher_rejects_wrong_degree_and_p():
    with pytest.raises(DomainError):
        exp_rademacher(CUSP, n=1, n_points=5)
    with pytest.raises(DomainError):
        exp_rademacher(CUSP, p=math.inf, n_points=5)


def test_rademacher_inapplicable():
    # Brownian ratios against t^0.95 grow like r^-0.45: a factor ~5 over the small half of the ladder
    with pytest.raises(ExperimentInapplicableError):
        exp_rademacher({"kind": "brownian", "n": 2 ** 16 + 1}, phi="t^0.95", n_points=9)


def test_smooth_remark():
    rep = exp_smooth_remark({"kind": "sin", "n": 4097}, n_points=9)
    assert rep.verdicts["all_pass"]
    assert rep.verdicts["slope_at_least_target"]
    rep = exp_smooth_remark({"kind": "exp", "n": 4097}, phi="t^1.5 * L1", n=1, n_points=9)
    assert rep.verdicts["all_pass"]
    with pytest.raises(DomainError):
        exp_smooth_remark({"kind": "sin", "n": 1025}, phi="t^1.2", n=0)


def test_inclusions_small_suite():
    suite = [{"kind": "cusp", "u": 0.6, "n": 4097}, {"kind": "cusp", "u": 0.4, "n": 4097},
             {"kind": "sin", "n": 4097}]
    rep = exp_inclusions(suite, phi="t^0.5", n_points=9)
    assert rep.verdicts["violations"] == 0
    assert len(rep.summaries["generators"]) == 3


def test_default_suite_brackets_the_weight():
    suite = default_suite("t^0.5")
    us = sorted(g["u"] for g in suite if g["kind"] == "cusp")
    assert us == [0.4, 0.6]


def test_brownian_needs_enough_samples():
    with pytest.raises(DomainError):
        exp_brownian_lil(n_samples=2 ** 12)


def test_report_serialisation(tmp_path):
    rep = ExperimentReport("x", {"a": np.float64(1.5), "b": np.array([1, 2])},
                           {"nan": float("nan"), "inf": math.inf}, {"ok": np.bool_(True)},
                           rows=[("s", 0.5, 0.25, float("nan")), ("s", 0.5, 0.125, 2.0)], runtime=3.0)
    d = json.loads(rep.to_json())
    assert d["summaries"] == {"inf": "inf", "nan": None}
    assert d["parameters"]["b"] == [1, 2]
    assert "runtime" not in d
    lines = rep.to_csv().splitlines()
    assert lines[0] == "series,point,r,rho"
    assert lines[1] == "s,0.5,0.25,"
    rep.save(tmp_path / "r.json", tmp_path / "r.csv")
    assert (tmp_path / "r.json").read_text() == rep.to_json()


@pytest.mark.parametrize("run", [
    lambda jobs: exp_rademacher(CUSP, n_points=9, n_jobs=jobs),
    lambda jobs: exp_smooth_remark({"kind": "sin", "n": 2049}, n_points=5, n_jobs=jobs),
    lambda jobs: exp_inclusions([{"kind": "weierstrass", "n": 2049}], phi="t^0.5", n_points=5, n_jobs=jobs),
])
def test_deterministic_across_runs_and_threads(run):
    a, b, c = run(None), run(None), run(2)
    assert a.to_json() == b.to_json() == c.to_json()
    assert a.to_csv() == b.to_csv() == c.to_csv()


def test_smooth_remark_polynomial_has_zero_residual():
    rep = exp_smooth_remark({"kind": "poly", "coeffs": [1.0, -2.0], "n": 2049}, phi="t^0.5", n=1, n_points=5)
    assert rep.verdicts["all_pass"]
    assert rep.summaries["exact_zero_points"] == 5


def test_inclusion_levels_on_cusp_and_polynomial():
    suite = [{"kind": "cusp", "u": 0.6, "n": 4097}, {"kind": "poly", "coeffs": [0.5, -1.0, 2.0], "n": 4097}]
    rep = exp_inclusions(suite, phi="t^0.5", n_points=17)
    cusp, poly = rep.summaries["generators"]
    # the tip fails the t^(upper+eta) level and never fails the t^(lower-eta) level
    assert cusp["counts"]["t_upper_plus_eta"].get("fail", 0) == 1
    assert cusp["counts"]["t_lower_minus_eta"].get("fail", 0) == 0
    for level in poly["counts"].values():
        assert level == {"pass": 17}
