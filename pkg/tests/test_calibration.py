import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import logsumexp

from chronofield.calibration import (CalibrationCurve, CalibrationError, CurveRangeError,
                                     DateTable, RadiocarbonDate, format_curve, interpolate_curve,
                                     likelihood_mode, load_curve, log_likelihood,
                                     log_likelihood_total, log_likelihood_vector, mu_sigma,
                                     synthetic_curve)


def identity_curve(lo=2000, hi=4000, error=0.0, kind="terrestrial"):
    grid = np.arange(lo, hi + 1)
    return CalibrationCurve(grid, grid.astype(float), np.full(len(grid), error), kind)


# --- load_curve ---------------------------------------------------------------

def test_load_three_rows():
    c = load_curve(b"0,10,5\n5,12,5\n10,20,6\n")
    assert len(c) == 3
    assert list(c.cal_age) == [0, 5, 10]
    assert list(c.c14_age) == [10, 12, 20]
    assert list(c.error) == [5, 5, 6]


def test_load_bad_row_names_line():
    with pytest.raises(CalibrationError, match="line 2"):
        load_curve("0,10,5\nabc,12,5\n")


def test_load_repeated_age_is_not_monotone():
    with pytest.raises(CalibrationError, match="monotone"):
        load_curve("0,10,5\n0,11,5\n")


def test_load_empty():
    with pytest.raises(CalibrationError, match="empty"):
        load_curve("# only a comment\n\n")


def test_load_tabs_comments_and_stream():
    text = "# cal\tc14\terr\n10\t20\t6\n5\t12\t5\n0\t10\t5\n"
    c = load_curve(io.BytesIO(text.encode()), kind="marine")
    assert c.kind == "marine"
    assert list(c.cal_age) == [0, 5, 10]      # decreasing file reversed
    assert list(c.c14_age) == [10, 12, 20]


def test_load_rejects_nonpositive_error():
    with pytest.raises(CalibrationError, match="line 1"):
        load_curve("0,10,0\n5,12,5\n")


def test_format_round_trip():
    c = load_curve("0,10,5\n5,12.5,5\n10,20,6\n")
    back = load_curve(format_curve(c))
    assert np.array_equal(back.cal_age, c.cal_age)
    assert np.allclose(back.c14_age, c.c14_age)


# --- interpolate_curve --------------------------------------------------------

def test_interpolation_linear():
    c = interpolate_curve(load_curve("0,10,4\n5,20,6\n"))
    assert len(c) == 6
    assert c.cal_age[2] == 2
    assert c.c14_age[2] == pytest.approx(14.0)
    assert c.error[2] == pytest.approx(4.8)


def test_interpolation_identity_on_unit_grid():
    c = load_curve("0,10,4\n1,11,4\n2,13,5\n")
    assert interpolate_curve(c) is c


def test_interpolation_constant():
    c = interpolate_curve(load_curve("0,10,4\n10,10,4\n"))
    assert len(c) == 11
    assert np.all(c.c14_age == 10)
    assert np.all(np.diff(c.cal_age) == 1)


def test_interpolation_needs_two_rows():
    with pytest.raises(CalibrationError):
        interpolate_curve(load_curve("0,10,4\n"))


# --- mu_sigma -----------------------------------------------------------------

def test_lookup_interpolated_value():
    c = interpolate_curve(load_curve("0,10,4\n5,20,6\n"))
    mu, sig = mu_sigma(c, 2)
    assert (mu, sig) == pytest.approx((14.0, 4.8))


def test_lookup_range_max_and_beyond():
    c = interpolate_curve(load_curve("0,10,4\n5,20,6\n"))
    assert mu_sigma(c, 5) == pytest.approx((20.0, 6.0))
    with pytest.raises(CurveRangeError):
        mu_sigma(c, 6)
    with pytest.raises(CurveRangeError):
        mu_sigma(c, -1)


def test_lookup_requires_unit_grid():
    with pytest.raises(CalibrationError):
        mu_sigma(load_curve("0,10,4\n5,20,6\n"), 0)


def test_lookup_rounds_to_integer_year():
    c = interpolate_curve(load_curve("0,10,4\n5,20,6\n"))
    assert mu_sigma(c, 2.4)[0] == pytest.approx(14.0)
    assert mu_sigma(c, 2.6)[0] == pytest.approx(16.0)


# --- dates and likelihood -----------------------------------------------------

def test_date_validation():
    with pytest.raises(CalibrationError, match="terrestrial, marine"):
        RadiocarbonDate("a", "p", 3000, 50, material="wood")
    with pytest.raises(CalibrationError):
        RadiocarbonDate("a", "p", 3000, 0)
    with pytest.raises(CalibrationError):
        RadiocarbonDate("a", "p", 3000, 50, material="marine", delta_r_sigma=-1)
    with pytest.raises(CalibrationError):
        RadiocarbonDate("a", "p", 3000, 50, delta_r=10)


def test_likelihood_exponent_vanishes():
    curves = {"terrestrial": identity_curve()}
    d = RadiocarbonDate("a", "p", 3000, 50)
    assert log_likelihood(d, 3000, curves) == pytest.approx(-0.5 * np.log(2500))


def test_likelihood_one_sigma():
    curves = {"terrestrial": identity_curve()}
    d = RadiocarbonDate("a", "p", 3000, 50)
    assert log_likelihood(d, 3050, curves) == pytest.approx(-0.5 * np.log(2500) - 0.5)


def test_marine_offset_matches_shifted_normal():
    curves = {"marine": identity_curve(kind="marine")}
    d = RadiocarbonDate("a", "p", 3030, 50, material="marine", delta_r=30)
    assert log_likelihood(d, 3000, curves) == pytest.approx(-0.5 * np.log(2500))
    # direct normal density with mean mu + delta_r, constant restored
    from scipy.stats import norm
    for theta in (2950, 3000, 3080):
        direct = norm.logpdf(3030, loc=theta + 30, scale=50) + 0.5 * np.log(2 * np.pi)
        assert log_likelihood(d, theta, curves) == pytest.approx(direct)


def test_reservoir_error_adds_in_quadrature():
    curves = {"marine": identity_curve(error=30.0, kind="marine")}
    d = RadiocarbonDate("a", "p", 3000, 40, material="marine", delta_r_sigma=0.0)
    d2 = RadiocarbonDate("a", "p", 3000, 40, material="marine", delta_r_sigma=20.0)
    assert log_likelihood(d, 3000, curves) == pytest.approx(-0.5 * np.log(40**2 + 30**2))
    assert log_likelihood(d2, 3000, curves) == pytest.approx(-0.5 * np.log(40**2 + 30**2 + 400))


def test_total_singleton_and_additivity():
    curves = {"terrestrial": identity_curve(error=10.0)}
    d = RadiocarbonDate("a", "p", 3000, 50)
    one = log_likelihood(d, 3000, curves)
    assert log_likelihood_total([3000], [d], curves) == pytest.approx(one)
    assert log_likelihood_total([3000, 3000], [d, d], curves) == pytest.approx(2 * one)


def test_total_matches_term_by_term():
    rng = np.random.default_rng(1)
    curve = interpolate_curve(synthetic_curve(1900, 3600, wiggle=40.0, error=12.0))
    marine = interpolate_curve(synthetic_curve(1900, 3600, kind="marine", offset=350.0))
    curves = {"terrestrial": curve, "marine": marine}
    dates = [RadiocarbonDate("a", "p", 2500, 30), RadiocarbonDate("b", "p", 2900, 45),
             RadiocarbonDate("c", "q", 3300, 25, "marine", 20.0, 15.0),
             RadiocarbonDate("d", "q", 2200, 60), RadiocarbonDate("e", "q", 3000, 35, "marine")]
    theta = rng.uniform(2000, 3500, 5)
    expected = 0.0
    for d, t in zip(dates, theta):
        c = curves[d.material]
        k = int(np.rint(t)) - c.cal_age[0]
        s2 = d.sigma_lab**2 + c.error[k] ** 2 + d.delta_r_sigma**2
        expected += -0.5 * np.log(s2) - (c.c14_age[k] + d.delta_r - d.y) ** 2 / (2 * s2)
    assert log_likelihood_total(theta, dates, curves) == pytest.approx(expected)
    assert log_likelihood_total(theta, DateTable(dates), curves) == pytest.approx(expected)


def test_total_length_mismatch_and_range():
    curves = {"terrestrial": identity_curve()}
    d = RadiocarbonDate("a", "p", 3000, 50)
    with pytest.raises(CalibrationError):
        log_likelihood_total([3000, 3001], [d], curves)
    with pytest.raises(CurveRangeError):
        log_likelihood_total([5000], [d], curves)


def test_likelihood_mode_identity_curve():
    curves = {"terrestrial": identity_curve()}
    d = RadiocarbonDate("a", "p", 3123, 50)
    assert likelihood_mode(d, curves, 2000, 4000) == 3123


# --- properties ---------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(y=st.floats(2100, 3900), sig=st.floats(5, 200), shift=st.floats(-500, 500))
def test_shift_invariance(y, sig, shift):
    base = interpolate_curve(synthetic_curve(2000, 4000, wiggle=30.0, error=20.0))
    moved = CalibrationCurve(base.cal_age, base.c14_age + shift, base.error)
    d = RadiocarbonDate("a", "p", y, sig)
    d2 = RadiocarbonDate("a", "p", y + shift, sig)
    for theta in (2100, 2999, 3900):
        assert log_likelihood(d, theta, {"terrestrial": base}) == pytest.approx(
            log_likelihood(d2, theta, {"terrestrial": moved}), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(y=st.integers(2050, 3950), sig=st.floats(1, 300))
def test_argmax_is_y_for_identity_curve(y, sig):
    curves = {"terrestrial": identity_curve()}
    d = RadiocarbonDate("a", "p", float(y), sig)
    grid = np.arange(2000, 4001)
    ll = log_likelihood_vector(grid, DateTable([d] * len(grid)), curves)
    assert grid[np.argmax(ll)] == y


@settings(max_examples=30, deadline=None)
@given(y=st.floats(1500, 4500), sig=st.floats(1, 300))
def test_likelihood_integrates_finite_positive(y, sig):
    curves = {"terrestrial": interpolate_curve(synthetic_curve(2000, 4000, error=10.0))}
    d = RadiocarbonDate("a", "p", y, sig)
    grid = np.arange(2000, 4001)
    # log of the sum, so far-off dates do not underflow to zero
    log_total = logsumexp(log_likelihood_vector(grid, DateTable([d] * len(grid)), curves))
    assert np.isfinite(log_total)
