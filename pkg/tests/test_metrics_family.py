import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ymh_lab.metrics_family import (
    collar_lambda,
    collar_profile,
    exponential_bound_check,
    family,
    smooth_step,
)


def test_flat_collar_closed_form():
    delta = np.exp(-3.0)
    m = collar_profile(delta, 61, "flat_one")
    assert m.T_half == pytest.approx(3.0, abs=1e-15)
    np.testing.assert_allclose(m.lambda_profile, delta**2 * np.exp(-m.t), rtol=1e-14)
    assert m.lambda_profile[30] == pytest.approx(np.exp(-6.0), rel=1e-14)
    assert m.bound_constant <= 1.0 + 1e-12


@pytest.mark.parametrize("bad", [0.0, 1.0, 1.5, -0.1])
def test_delta_out_of_range(bad):
    with pytest.raises(ValueError):
        collar_profile(bad, 33)


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        collar_profile(0.1, 33, "wiggly")


def test_bound_check_examples():
    T, delta = 4.0, np.exp(-4.0)
    t = np.linspace(-T, T, 81)
    assert exponential_bound_check(np.zeros(81), delta, T, t) == (0.0, True)
    c, ok = exponential_bound_check(delta * np.exp(np.abs(t) - T), delta, T, t)
    assert ok and c == pytest.approx(1.0, rel=1e-14)
    c, ok = exponential_bound_check(np.full(81, delta), delta, T, t)
    assert ok and c == pytest.approx(np.exp(T), rel=1e-14)


def test_constant_profile_constant_grows_across_family():
    cs = []
    for T in (2.0, 4.0, 6.0):
        d = np.exp(-T)
        cs.append(exponential_bound_check(np.full(41, d), d, T)[0])
    assert cs[0] < cs[1] < cs[2]


def test_flat_family_uniform_constant():
    fam = family([np.exp(-n) for n in range(2, 7)], 65, "flat_one")
    assert fam.bound_constant <= 1.0 + 1e-12
    for m in fam.members:
        assert m.T_half == -np.log(m.delta)
    doc = json.loads(fam.manifest())
    assert doc["chi_kind"] == "flat_one"
    np.testing.assert_allclose(doc["T_values"], [2, 3, 4, 5, 6], rtol=1e-14)


def test_single_member_family_matches_profile():
    fam = family([0.1], 33)
    one = collar_profile(0.1, 33)
    np.testing.assert_array_equal(fam.members[0].lambda_profile, one.lambda_profile)
    assert fam.bound_constant == one.bound_constant


def test_family_rejects_mixed_kinds_and_bad_order():
    with pytest.raises(ValueError):
        family([0.1, 0.05], 33, ["flat_one", "smooth_bump"])
    with pytest.raises(ValueError):
        family([0.05, 0.1], 33)
    with pytest.raises(ValueError):
        family([], 33)


def test_smooth_bump_is_symmetric_and_bounded():
    fam = family([np.exp(-n) for n in range(2, 7)], 65, "smooth_bump")
    for m in fam.members:
        np.testing.assert_allclose(m.lambda_profile, m.lambda_profile[::-1], rtol=1e-12)
        assert np.all(m.lambda_profile > 0)
    # inside the unit window psi(0) is the integral of 1 - step over [0, 1], which
    # is 1/2 because step(x) + step(1 - x) = 1
    for m in fam.members:
        assert m.bound_constant == pytest.approx(np.exp(0.5), rel=1e-8)


@pytest.mark.parametrize("T", [2.0, 5.0])
def test_smooth_bump_cutoff_is_one_far_out(T):
    delta = np.exp(-T)
    m = collar_profile(delta, 65, "smooth_bump")
    r = np.geomspace(delta**1.5, delta**1.5 * 50, 20)
    np.testing.assert_allclose(m.chi(r), 1.0, rtol=1e-12)


def test_smooth_bump_matches_metric_formula():
    T = 3.0
    delta = np.exp(-T)
    m = collar_profile(delta, 61, "smooth_bump")
    r = np.exp(-m.t) * delta**2
    np.testing.assert_allclose(m.lambda_profile**2, np.exp(-2 * m.t) * delta**4 * m.chi(r), rtol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3.0, 3.0))
def test_smooth_step_odd_and_bounded(x):
    assert smooth_step(np.array([x]))[0] == pytest.approx(-smooth_step(np.array([-x]))[0], abs=1e-15)
    assert abs(smooth_step(np.array([x]))[0]) <= 1.0


def test_profile_csv_header():
    text = collar_profile(0.2, 9).profile_csv()
    assert text.splitlines()[0] == "t,lambda"
    assert len(text.splitlines()) == 10


def test_lambda_requires_known_kind():
    with pytest.raises(ValueError):
        collar_lambda(np.zeros(3), 0.1, "other")
