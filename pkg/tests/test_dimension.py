import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from horolab import dimension as D
from horolab import funcspace, sl2
from horolab.averages import SamplingScheme, classify_good_batch, l2_decay_fit
from horolab.errors import ParameterError, ResourceError


# --- predicted bounds -------------------------------------------------------


def test_printed_constants():
    assert D.predicted_bound("spectral", 2, Fraction(1, 2)) == Fraction(11, 4)
    assert D.predicted_bound("spectral", 2, Fraction(25, 64)) == 3 - Fraction(25, 128)
    assert D.predicted_bound("gap_free", 2, Fraction(1, 5)) == Fraction(29, 10)
    assert float(3 - Fraction(25, 128)) == pytest.approx(2.8047, abs=1e-4)


def test_stated_spectral_recipe_saturates():
    for rate in (Fraction(1, 2), Fraction(25, 64), Fraction(1, 4)):
        assert D.predicted_bound("spectral", 2, rate, recipe="stated") == Fraction(11, 4)
    assert D.predicted_bound("spectral", 2, Fraction(1, 8), recipe="stated") == Fraction(23, 8)


def test_mixing_matches_printed_spectral():
    for rate in ("1/3", "1/2", "25/64", 0.7):
        assert D.predicted_bound("mixing", 3, rate) == D.predicted_bound("spectral", 3, rate)


def test_gap_free_floor_at_two():
    assert D.predicted_bound("gap_free", 1, 5) == 2
    assert D.predicted_bound("gap_free", 4, "1/2") == Fraction(23, 8)


def test_float_rates_are_read_as_decimals():
    assert D.predicted_bound("gap_free", 2, 0.2) == Fraction(29, 10)


@pytest.mark.parametrize(
    "args,kw",
    [
        (("chaos", 2, "1/2"), {}),
        (("mixing", 0, "1/2"), {}),
        (("mixing", 2.5, "1/2"), {}),
        (("mixing", 2, 0), {}),
        (("gap_free", 2, "-1/5"), {}),
        (("spectral", 2, "1/2"), {"recipe": "guess"}),
    ],
)
def test_predicted_bound_errors(args, kw):
    with pytest.raises(ParameterError):
        D.predicted_bound(*args, **kw)


@given(st.sampled_from(D.MODES), st.integers(1, 6), st.fractions(min_value=Fraction(1, 1000), max_value=10))
def test_predicted_bound_range(mode, d, rate):
    v = D.predicted_bound(mode, d, rate)
    assert 2 <= v < 3
    # a faster rate never makes the bound worse
    assert D.predicted_bound(mode, d, rate * 2) <= v


# --- packing ratio ----------------------------------------------------------


def test_packing_forms_agree_on_grid():
    worst = 0.0
    for d, g, a, e in itertools.product(range(1, 11), np.linspace(0, 1, 10), np.linspace(0, 1, 10), [0.0, 0.01, 0.3]):
        first, second = D.packing_ratio_forms(d, g, a, e)
        worst = max(worst, abs(first - second))
    assert worst < 1e-14


def test_packing_example_values():
    first, second = D.packing_ratio_forms(2, 0.1, 0.5, 0.01)
    assert abs(first - second) < 1e-14
    assert D.packing_ratio(2, 0, 0.5, 0) == pytest.approx(2.75, abs=1e-15)


def test_packing_limit():
    for d, a in ((1, 0.3), (2, 0.5), (3, 0.9)):
        assert abs(D.packing_ratio(d, 1e-7, a, 1e-7) - (3 - a / d)) < 1e-6


def test_packing_exact_rationals():
    assert D.packing_ratio(2, Fraction(0), Fraction(1, 2), Fraction(0)) == Fraction(11, 4)


def test_packing_monotone_in_gamma():
    gs = np.linspace(0, 2, 101)
    for d, a, e in itertools.product((1, 2, 3), (0.1, 0.5, 1.0), (0.0, 0.05)):
        v = np.array([D.packing_ratio(d, g, a, e) for g in gs])
        assert np.all(np.diff(v) > 0)


def test_packing_rejects_negative():
    with pytest.raises(ParameterError):
        D.packing_ratio(2, -0.1, 0.5, 0)
    with pytest.raises(ParameterError):
        D.packing_ratio(0, 0.1, 0.5, 0)


# --- good measure -----------------------------------------------------------


def test_good_measure_example():
    val = D.good_measure_bound(1e4, 0.05, 0.5, 0.01)
    assert abs(val - (1 - 10 ** (4 * -0.89))) < 1e-12
    assert 1 - val == pytest.approx(2.754e-4, rel=1e-3)


def test_good_measure_vacuous_and_clamped():
    assert D.good_measure_bound(100, 0.3, 0.3, 0) == 0.0
    assert D.good_measure_bound(100, 0.5, 0.1, 0) == 0.0
    assert 0 < D.good_measure_bound(100, 0.1, 0.4, 0) < 1
    with pytest.raises(ParameterError):
        D.good_measure_bound(1, 0.1, 0.4, 0)


@given(st.integers(2, 10**6), st.floats(0, 1), st.floats(0, 1), st.floats(0, 0.2))
def test_good_measure_in_unit_interval(N, g, a, e):
    assert 0.0 <= D.good_measure_bound(N, g, a, e) <= 1.0


# --- grids and box counts ---------------------------------------------------


SUB_BOX = dict(x_range=(-0.5, 0.5), y_range=(1.0, 2.0), theta_range=(0.0, 1.0))


@pytest.mark.parametrize(
    "kw",
    [
        dict(SUB_BOX, delta=0.0),
        dict(SUB_BOX, delta=0.1, x_range=(0.2, 0.2)),
        dict(SUB_BOX, delta=0.1, x_range=(-0.7, 0.5)),
        dict(SUB_BOX, delta=0.1, y_range=(0.5, 2.0)),
        dict(SUB_BOX, delta=0.1, y_range=(1.0, 80.0)),
        dict(SUB_BOX, delta=0.1, theta_range=(0.0, 7.0)),
    ],
)
def test_grid_validation(kw):
    with pytest.raises(ParameterError):
        D.GridSpec(**kw)


def test_grid_shape_and_centres():
    g = D.GridSpec(delta=0.1, **dict(SUB_BOX, y_range=(0.9, 1.9)))
    assert g.shape() == (10, 10, 10)
    z, th, idx = g.centers()
    assert z.size == th.size == len(idx) <= 1000
    assert all(sl2.in_fundamental_domain(complex(w)) for w in z)
    # the centres below the unit circle are dropped
    assert z.size < 1000


def test_box_count_zero_function():
    g = D.GridSpec(delta=0.1, **SUB_BOX)
    est = D.box_count_bad(funcspace.zero(), 64, 0.05, g, SamplingScheme.squares())
    assert est.bad == 0 and est.good == est.total
    assert math.isnan(est.ratio)


def test_box_count_absurd_gamma(band):
    g = D.GridSpec(delta=0.1, **SUB_BOX)
    est = D.box_count_bad(band, 64, 50.0, g, SamplingScheme.squares())
    assert est.bad == est.total
    assert est.ratio == pytest.approx(-math.log(est.total) / math.log(0.1))


def test_box_count_budget(band):
    g = D.GridSpec(delta=0.01, **SUB_BOX)
    with pytest.raises(ResourceError):
        D.box_count_bad(band, 64, 0.05, g, SamplingScheme.squares(), budget=10_000)


def test_box_count_three_probe_needs_seed(band):
    g = D.GridSpec(delta=0.2, **SUB_BOX)
    with pytest.raises(ParameterError):
        D.box_count_bad(band, 64, 0.05, g, SamplingScheme.squares(), mode="three")


def test_three_probe_dominates_centre(band):
    g = D.GridSpec(delta=0.1, **SUB_BOX)
    centre = D.box_count_bad(band, 64, 0.4, g, SamplingScheme.squares())
    three = D.box_count_bad(band, 64, 0.4, g, SamplingScheme.squares(), mode="three", rng=5)
    assert np.all(three.flags >= centre.flags)
    assert three.bad <= centre.bad
    again = D.box_count_bad(band, 64, 0.4, g, SamplingScheme.squares(), mode="three", rng=5)
    assert np.array_equal(again.flags, three.flags)


def test_box_count_flags_match_direct_classification(band):
    g = D.GridSpec(delta=0.25, **SUB_BOX)
    est = D.box_count_bad(band, 32, 0.3, g, SamplingScheme.squares(), chunk=7)
    z, th, _ = g.centers()
    flags, _ = classify_good_batch(band, z, th, 32, 0.3, SamplingScheme.squares())
    assert np.array_equal(est.flags, flags)


def test_box_count_band_self_consistent(band, rng):
    N, gamma, delta = 256, 0.05, 0.05
    scheme = SamplingScheme.squares()
    fit = l2_decay_fit(band, scheme, [16, 32, 64, 128, 256], 4000, rng)
    alpha2 = max(fit.alpha, 0.0)
    g = D.GridSpec(delta=delta, **SUB_BOX)
    est = D.box_count_bad(band, N, gamma, g, scheme, alpha2=alpha2)
    allowed = 1.0 - D.good_measure_bound(N, gamma, alpha2, 0.0)
    assert est.bad_fraction <= allowed + 3 * est.bad_fraction_stderr
    assert est.packing == pytest.approx(D.packing_ratio(2, gamma, alpha2, 0.0))


# --- isolation --------------------------------------------------------------


def test_isolation_zero_function(rng):
    rep = D.isolation_probe(funcspace.zero(), sl2.PointX.identity(), 128, 0.05, 50, rng)
    assert rep.fraction == 1.0
    assert rep.gamma_prime == math.inf and not rep.vacuous


def test_isolation_identity_point(band, rng):
    N, gamma = 128, 0.05
    rep = D.isolation_probe(band, sl2.PointX.identity(), N, gamma, 100, rng)
    assert rep.fraction == 1.0
    assert rep.max_distance < rep.radius == pytest.approx(N ** (-4 - gamma))
    # 3 ||f||_Lip exceeds N^gamma here, so the implication holds for trivial reasons
    assert rep.vacuous and rep.gamma_prime < 0


def test_isolation_non_vacuous_regime(band, rng):
    small = funcspace.TestFunction(lambda z, th: 0.01 * band.evaluate(z, th), lip=0.01 * band.lip,
                                   sup=0.01 * band.sup, flow_lip=0.01 * band.flow_lip)
    rep = D.isolation_probe(small, sl2.PointX.identity(), 128, 0.05, 100, rng)
    assert rep.gamma_prime > 0 and not rep.vacuous
    assert rep.fraction == 1.0


def test_isolation_rejects_bad_base(band, rng):
    with pytest.raises(ParameterError):
        D.isolation_probe(band, sl2.PointX.identity(), 128, 40.0, 10, rng)


@given(st.integers(0, 2**32 - 1), st.floats(1e-12, 1e-3))
def test_perturbation_is_small_and_unimodular(seed, radius):
    h = D._random_perturbation(np.random.default_rng(seed), radius)
    assert abs(h[0] * h[3] - h[1] * h[2] - 1) < 1e-12
    assert np.linalg.norm(h - np.array([1.0, 0, 0, 1.0])) < radius
