import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from czreg.exceptions import DomainError
from czreg.lp_approx import PolyJet
from czreg.oscillation import (
    DELTA,
    GROWTH_CAP,
    OscillationProfile,
    batch_membership,
    big_o_test,
    decay_stats,
    default_radii,
    little_o_test,
    p_exponent,
    profile,
    ratios,
    seminorm,
)
from czreg.signals import GridSpec, gen_callable, gen_cusp, gen_poly, generate

RADII = 0.25 * 2.0 ** -np.arange(10)


def _synthetic(res, radii=RADII, degree=0):
    return OscillationProfile((0.0,), 2.0, degree, "per-ball", radii, res)


# ---------------------------------------------------------------- verdict logic on synthetic curves

@given(st.floats(0.1, 2.0), st.floats(0.1, 10.0))
def test_power_decay_passes(s, amp):
    # rho(r) = amp * r^s relative to phi = t^1
    prof = _synthetic(amp * RADII ** (1 + s))
    if RADII[-1] ** s / RADII[0] ** s <= 0.2:
        assert little_o_test(prof, "t^1") == "pass"
    assert big_o_test(prof, "t^1")


@given(st.floats(0.1, 10.0))
def test_constant_ratio_fails_little_o(amp):
    prof = _synthetic(amp * RADII)
    assert little_o_test(prof, "t^1") == "fail"
    assert big_o_test(prof, "t^1")


@given(st.floats(0.3, 1.0))
def test_power_growth_fails_big_o(s):
    prof = _synthetic(RADII ** (1 - s))
    assert not big_o_test(prof, "t^1")
    assert little_o_test(prof, "t^1") == "fail"


def test_exact_zero_passes_both():
    prof = _synthetic(np.zeros(len(RADII)))
    assert little_o_test(prof, "t^0.5") == "pass"
    assert big_o_test(prof, "t^0.5")


def test_bounded_oscillating_ratio_is_big_o():
    # rises over the small half (negative slope) but stays within the coarse range
    wobble = np.array([1.3, 0.9, 1.2, 1.0, 1.1, 0.7, 0.8, 1.0, 1.2, 1.5])
    prof = _synthetic(RADII ** 0.5 * wobble)
    st_ = decay_stats(prof, "t^0.5")
    assert st_.slope < -DELTA
    assert st_.growth <= GROWTH_CAP
    assert big_o_test(prof, "t^0.5")


def test_reference_scale_blocks_false_fail():
    # degree-1 curve smaller than the degree-0 one but flat: with the reference it is not a fail
    low = _synthetic(0.01 * RADII, degree=1)
    ref = _synthetic(RADII, degree=0)
    assert little_o_test(low, "t^1") == "fail"
    assert little_o_test(low, "t^1", reference=ref) != "fail"


def test_too_few_radii():
    with pytest.raises(DomainError):
        decay_stats(_synthetic(RADII[:5], radii=RADII[:5]), "t^1")


def test_profile_validation():
    with pytest.raises(DomainError):
        OscillationProfile((0.0,), 2.0, 0, "per-ball", RADII[::-1], RADII)
    with pytest.raises(DomainError):
        OscillationProfile((0.0,), 2.0, 0, "per-ball", RADII, -RADII)
    with pytest.raises(DomainError):
        OscillationProfile((0.0,), 2.0, 0, "nearest", RADII, RADII)


def test_truncated():
    prof = _synthetic(RADII)
    cut = prof.truncated(6)
    assert len(cut.radii) == 6
    np.testing.assert_array_equal(cut.radii, RADII[:6])


# ---------------------------------------------------------------- profiles of sampled functions

@pytest.fixture(scope="module")
def cusp():
    return gen_cusp(0.0, 0.6, GridSpec.linspace(-1, 1, 2 ** 13 + 1))


def test_default_radii(cusp):
    r = default_radii(cusp)
    assert r[0] == pytest.approx(0.5)
    assert r[-1] >= 8 * cusp.spacing
    np.testing.assert_allclose(r[:-1] / r[1:], 2.0)


def test_cusp_profile_at_tip_is_self_similar(cusp):
    prof = profile(cusp, 0.0, math.inf, 0, default_radii(cusp))
    # best constant for r^u|y|^u on [-r, r] is r^u / 2
    np.testing.assert_allclose(prof.residuals, prof.radii ** 0.6 / 2, rtol=1e-3)
    assert seminorm(prof, "t^0.6") == pytest.approx(0.5, rel=1e-3)
    assert little_o_test(prof, "t^0.6") == "fail"


def test_fixed_jet_profile(cusp):
    jet = PolyJet((0.0,), 0, [0.0])
    prof = profile(cusp, 0.0, math.inf, 0, default_radii(cusp), "fixed-jet", jet)
    np.testing.assert_allclose(ratios(prof, "t^0.6"), 1.0, rtol=1e-3)
    with pytest.raises(DomainError):
        profile(cusp, 0.0, math.inf, 0, policy="fixed-jet")


def test_p_exponent_cusp_and_smooth(cusp):
    est = p_exponent(cusp, 0.0, 2.0, 2)
    assert est.value == pytest.approx(0.6, abs=0.02)
    assert est.degree == 0
    smooth = gen_callable(np.sin, GridSpec.linspace(0, 1, 4097))
    est = p_exponent(smooth, 0.5, 2.0, 1)
    # degree 0 saturates at slope 1, degree 1 at slope 2: ceiling flagged
    assert est.ceiling
    assert est.value == pytest.approx(2.0, abs=0.1)


def test_p_exponent_of_polynomial_is_exact():
    f = gen_poly(PolyJet((0.0,), 1, [1.0, 3.0]), GridSpec.linspace(0, 1, 4097))
    est = p_exponent(f, 0.5, 2.0, 1)
    assert est.exact and est.value == math.inf


# ---------------------------------------------------------------- batches

def test_batch_verdicts_on_cusp(cusp):
    pts = [-0.3, 0.0, 0.2]
    res = batch_membership(cusp, pts, math.inf, "t^0.6", 0, t_degree=0)
    verdicts = {r.point[0]: r.verdict_t for r in res.reports}
    assert verdicts[0.0] == "fail"
    assert verdicts[0.2] == "pass" and verdicts[-0.3] == "pass"
    assert res.summary["points"] == 3
    assert res.summary["T_pass"] == 1.0


@given(st.permutations([-0.4, -0.1, 0.0, 0.15, 0.3]))
def test_batch_summary_independent_of_order(order):
    f = gen_cusp(0.0, 0.6, GridSpec.linspace(-1, 1, 2049))
    a = batch_membership(f, order, 2.0, "t^0.6", 0)
    b = batch_membership(f, sorted(order), 2.0, "t^0.6", 0)
    assert a.summary == b.summary
    assert [r.to_dict() for r in a.reports] == [r.to_dict() for r in b.reports]


def test_batch_records_errors_without_aborting(cusp):
    res = batch_membership(cusp, [0.0, 0.999], 2.0, "t^0.6", 0)
    bad = [r for r in res.reports if r.verdict_t == "error"]
    good = [r for r in res.reports if r.verdict_t != "error"]
    assert len(bad) == 1 and bad[0].point == (0.999,)
    assert "error" in bad[0].diagnostics
    assert len(good) == 1


def test_batch_rejects_inadmissible_weight(cusp):
    with pytest.raises(DomainError):
        batch_membership(cusp, [0.0], 2.0, "t^-1", 0)


def test_batch_threads_match_serial(cusp):
    pts = np.linspace(-0.4, 0.4, 6)
    a = batch_membership(cusp, pts, 2.0, "t^0.6", 0)
    b = batch_membership(cusp, pts, 2.0, "t^0.6", 0, n_jobs=2)
    assert [r.to_dict() for r in a.reports] == [r.to_dict() for r in b.reports]


def test_report_json_form(cusp):
    rep = batch_membership(cusp, [0.0], 2.0, "t^0.6", 0).reports[0]
    d = rep.to_dict()
    assert set(d) == {"point", "seminorm", "verdict_T", "verdict_t", "p_exponent", "ratios"}
    assert all(set(q) == {"r", "rho"} for q in d["ratios"])


@pytest.mark.parametrize("kind,kw,phi", [
    ("weierstrass", {}, "t^0.63"),
    ("brownian", {"seed": 2}, "t^0.5 * L2^0.5"),
    ("cusp", {"u": 0.4}, "t^0.5"),
    ("sin", {}, "t^0.7"),
])
def test_verdict_invariants(kind, kw, phi):
    f = generate(kind, n=4097, **kw)
    pts = np.linspace(f.lower[0] + 0.3 * f.extent, f.upper[0] - 0.3 * f.extent, 15)
    for n_t in (0, 1):
        res = batch_membership(f, pts, 2.0, phi, 0, t_degree=n_t)
        for rep in res.reports:
            rho = np.array([q for _, q in rep.ratios])
            if rep.verdict_t == "pass":
                # little-o on the probed range implies big-O there
                assert rep.verdict_T
                assert rho[-1] <= 1e-9 or rho[-1] < rho[0]
            if rep.verdict_t == "fail":
                scale = max(rho.max(), max(rep.diagnostics["rho_T"]) if n_t > 0 else 0.0)
                assert rho[-1] >= (1 - 0.2) * scale
