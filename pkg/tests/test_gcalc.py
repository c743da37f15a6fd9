import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gbsde.errors import Error
from gbsde.gcalc import GCoefficients, g_eval, hjb_sup_form, reverse_holder_threshold

BAND = GCoefficients(0.5, 1.0)

finite_args = st.floats(
    min_value=-1e8, max_value=1e8, allow_nan=False, allow_infinity=False
)
bands = st.tuples(
    st.floats(min_value=1e-3, max_value=10.0),
    st.floats(min_value=1e-3, max_value=10.0),
).map(lambda p: GCoefficients(min(p), max(p)))


def test_band_construction_rejects_bad_values():
    with pytest.raises(Error):
        GCoefficients(0.0, 1.0)
    with pytest.raises(Error):
        GCoefficients(1.0, 0.5)
    with pytest.raises(Error):
        GCoefficients(0.5, math.inf)


def test_g_eval_closed_form_values():
    assert g_eval(BAND, 2.0) == 1.0
    assert g_eval(BAND, -2.0) == -0.25
    assert g_eval(BAND, 0.0) == 0.0
    assert g_eval(GCoefficients(0.3, 2.0), 0.0) == 0.0


def test_hjb_sup_form_values():
    assert hjb_sup_form(BAND, 2.0) == 1.0
    assert hjb_sup_form(BAND, -2.0) == -0.25
    degenerate = GCoefficients(0.7, 0.7)
    assert hjb_sup_form(degenerate, 3.0) == pytest.approx(0.735, abs=1e-15)


def test_non_finite_input_rejected():
    for bad in (math.nan, math.inf, -math.inf):
        with pytest.raises(Error):
            g_eval(BAND, bad)
        with pytest.raises(Error):
            hjb_sup_form(BAND, bad)


def test_reverse_holder_frozen_value():
    # high-precision evaluation of the closed form (30-digit arithmetic)
    assert reverse_holder_threshold(2.0) == pytest.approx(
        0.0494599930569250125246379076668, abs=1e-15
    )


def test_reverse_holder_near_singularity_and_tail():
    near_one = reverse_holder_threshold(1.0001)
    assert near_one > reverse_holder_threshold(2.0)
    assert near_one > 1.0
    tail = reverse_holder_threshold(1e6)
    assert 0.0 < tail < 1e-6


def test_reverse_holder_domain():
    for bad in (1.0, 0.5, -2.0, math.nan):
        with pytest.raises(Error):
            reverse_holder_threshold(bad)


@given(bands, finite_args, finite_args)
def test_monotone_with_nondegeneracy_gap(band, a, b):
    a, b = max(a, b), min(a, b)
    lhs = g_eval(band, a) - g_eval(band, b)
    floor = 0.5 * band.lo2 * (a - b)
    assert lhs >= floor - 1e-9 * (1.0 + abs(floor))


@given(bands, finite_args, finite_args)
def test_subadditive(band, a, b):
    if abs(a + b) > 1e8:
        return
    lhs = g_eval(band, a + b)
    rhs = g_eval(band, a) + g_eval(band, b)
    assert lhs <= rhs + 1e-9 * (1.0 + abs(rhs))


@given(bands, finite_args, st.floats(min_value=0.0, max_value=1e4))
def test_positively_homogeneous(band, a, lam):
    if abs(lam * a) > 1e12:
        return
    assert g_eval(band, lam * a) == pytest.approx(lam * g_eval(band, a), rel=1e-12, abs=1e-300)


@given(bands, finite_args)
def test_sup_form_matches_closed_form_exactly(band, a):
    assert hjb_sup_form(band, a) == g_eval(band, a)


@given(
    st.floats(min_value=1.000001, max_value=1e5),
    st.floats(min_value=1e-3, max_value=1e5),
)
def test_reverse_holder_strictly_decreasing(q, dq):
    # separation at least 1e-3 keeps the strict drop above float resolution
    assert reverse_holder_threshold(q + dq) < reverse_holder_threshold(q)
