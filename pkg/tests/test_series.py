from fractions import Fraction

import pytest
import sympy as sp

from chern_weil.core.errors import SeriesError
from chern_weil.core.series import (
    PowerSeries, ahat_series, exp_series, hirzebruch_series, polynomial_series, taylor, todd_series,
    transform_series
)


def test_exp_series():
    assert exp_series(4).as_fractions() == [1, 1, Fraction(1, 2), Fraction(1, 6), Fraction(1, 24)]


def test_todd_series():
    assert todd_series(4).as_fractions() == [1, Fraction(1, 2), Fraction(1, 12), 0, Fraction(-1, 720)]


def test_ahat_series():
    assert ahat_series(2).as_fractions() == [1, Fraction(-1, 24), Fraction(7, 5760)]


def test_hirzebruch_series():
    assert hirzebruch_series(2).as_fractions() == [1, Fraction(1, 3), Fraction(-1, 45)]


def test_reciprocal_and_division():
    one_minus_x = PowerSeries.of([1, -1, 0, 0])
    assert one_minus_x.reciprocal().as_fractions() == [1, 1, 1, 1]
    assert (exp_series(3) / exp_series(3)).as_fractions() == [1, 0, 0, 0]
    with pytest.raises(SeriesError):
        PowerSeries.of([0, 1]).reciprocal()


def test_sqrt():
    square = PowerSeries.of([1, 2, 1, 0])
    assert square.sqrt().as_fractions() == [1, 1, 0, 0]
    root = PowerSeries.of([1, 1, 0, 0]).sqrt()
    assert (root * root).as_fractions() == [1, 1, 0, 0]
    with pytest.raises(SeriesError):
        PowerSeries.of([4, 1]).sqrt()


def test_compose():
    # exp(x)^2 == exp(2x)
    doubled = exp_series(4).compose(PowerSeries.of([0, 2, 0, 0, 0]))
    assert doubled.as_fractions() == (exp_series(4) * exp_series(4)).as_fractions()
    with pytest.raises(SeriesError):
        exp_series(2).compose(PowerSeries.of([1, 1, 0]))


def test_substitute_square_and_parts():
    series = PowerSeries.of([1, 2, 3])
    assert series.substitute_square().as_fractions() == [1, 0, 2, 0, 3]
    assert series.odd_part().as_fractions() == [0, 2, 0]
    assert series.even_part().as_fractions() == [1, 0, 3]
    assert series.rescale(2).as_fractions() == [1, 4, 12]


def test_polynomial_series_pads_and_truncates():
    assert polynomial_series([1, 2], 3).as_fractions() == [1, 2, 0, 0]
    assert polynomial_series([1, 2, 3, 4], 1).as_fractions() == [1, 2]


def test_taylor_matches_closed_forms():
    assert taylor("exp(x)", 4).as_fractions() == exp_series(4).as_fractions()
    assert taylor("x/(1 - exp(-x))", 4).as_fractions() == todd_series(4).as_fractions()
    assert taylor("(sqrt(z)/2)/sinh(sqrt(z)/2)", 2).as_fractions() == ahat_series(2).as_fractions()
    assert taylor("1 + x^2", 3).coefficients() == [1, 0, 1, 0]


def test_taylor_keeps_exact_irrational_coefficients():
    series = taylor("exp(pi*x)", 2)
    assert not series.is_rational()
    assert series[1] == sp.pi
    with pytest.raises(SeriesError):
        series.as_fractions()


def test_taylor_rejects_bad_functions():
    with pytest.raises(SeriesError):
        taylor("1/x", 2)
    with pytest.raises(SeriesError):
        taylor("x*y", 2)


def test_transform_complex_classes_use_series_directly():
    assert transform_series(exp_series(3), "multiplicative", "complex", 2) == [1, 1, Fraction(1, 2)]
    assert transform_series(exp_series(3), "additive", "complex", 3) == exp_series(3).as_fractions()


def test_transform_real_multiplicative():
    # g(x) = 1 + x gives f(x) = sqrt(1 + x^2)
    coefficients = transform_series(PowerSeries.of([1, 1, 0]), "multiplicative", "real", 4)
    assert coefficients == [1, 0, Fraction(1, 2), 0, Fraction(-1, 8)]
    with pytest.raises(SeriesError):
        transform_series(PowerSeries.of([2, 1]), "multiplicative", "real", 2)


def test_transform_real_additive():
    coefficients = transform_series(PowerSeries.of([0, 1, 0]), "additive", "real", 2)
    assert coefficients == [0, 0, Fraction(1, 2)]
    with pytest.raises(SeriesError):
        transform_series(PowerSeries.of([1, 1]), "additive", "real", 2)


def test_transform_pfaffian_keeps_odd_part():
    assert transform_series(PowerSeries.of([0, 1, 0]), "pfaffian", "real", 1) == [0, 1]
    assert transform_series(PowerSeries.of([1, 0, 1]), "pfaffian", "real", 2) == [0, 0, 0]
    with pytest.raises(SeriesError):
        transform_series(PowerSeries.of([1]), "characteristic", "real", 1)


def _random_series(rng, order, constant=None):
    coeffs = [Fraction(rng.randint(-5, 5), rng.randint(1, 5)) for _ in range(order + 1)]
    if constant is not None:
        coeffs[0] = Fraction(constant)
    return PowerSeries.of(coeffs)


def test_sqrt_squares_back_on_random_series(rng):
    for _ in range(50):
        series = _random_series(rng, rng.randint(1, 8), constant=1)
        root = series.sqrt()
        assert root[0] == 1
        assert (root * root).as_fractions() == series.as_fractions()


def test_multiplication_is_commutative_and_associative(rng):
    for _ in range(50):
        order = rng.randint(0, 6)
        a, b, c = (_random_series(rng, order) for _ in range(3))
        assert (a * b).as_fractions() == (b * a).as_fractions()
        assert ((a * b) * c).as_fractions() == (a * (b * c)).as_fractions()
