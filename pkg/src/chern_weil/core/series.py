"""
Truncated power series with exact coefficients.

Coefficients are Fractions whenever they are rational and sympy constants
otherwise (e.g. when a user function has transcendental Taylor coefficients).
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Union

import sympy as sp

from chern_weil.core.errors import SeriesError, SymbolicError
from chern_weil.core.symexpr import ExprLike, as_expr, canonicalize

logger = logging.getLogger(__name__)

Coefficient = Union[Fraction, sp.Expr]

CLASS_TYPES = ("multiplicative", "additive", "pfaffian")

VARIABLE = sp.Symbol("x")


def _normalize(c) -> Coefficient:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, int):
        return Fraction(c)
    value = canonicalize(c)
    if value.is_Rational:
        return Fraction(int(value.p), int(value.q))
    return value


def _is_zero(c: Coefficient) -> bool:
    return c == 0


@dataclass(frozen=True)
class PowerSeries:
    """c_0 + c_1 x + ... + c_K x^K + O(x^(K+1))."""
    coeffs: tuple

    def __post_init__(self):
        if not self.coeffs:
            raise SeriesError("A power series needs at least one coefficient")
        object.__setattr__(self, "coeffs", tuple(_normalize(c) for c in self.coeffs))

    @staticmethod
    def of(coeffs: Sequence) -> 'PowerSeries':
        return PowerSeries(tuple(coeffs))

    @staticmethod
    def constant(value, order: int) -> 'PowerSeries':
        return PowerSeries((value,) + (0,) * order)

    @staticmethod
    def variable(order: int) -> 'PowerSeries':
        return PowerSeries(tuple([0, 1] + [0] * (order - 1))[:order + 1])

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def __getitem__(self, k: int) -> Coefficient:
        return self.coeffs[k] if k <= self.order else Fraction(0)

    def truncate(self, order: int) -> 'PowerSeries':
        return PowerSeries(tuple(self[k] for k in range(order + 1)))

    def is_rational(self) -> bool:
        return all(isinstance(c, Fraction) for c in self.coeffs)

    def as_fractions(self) -> List[Fraction]:
        if not self.is_rational():
            raise SeriesError("Series has non-rational coefficients")
        return list(self.coeffs)

    # --- arithmetic ---

    def __add__(self, other: 'PowerSeries') -> 'PowerSeries':
        order = min(self.order, other.order)
        return PowerSeries(tuple(self[k] + other[k] for k in range(order + 1)))

    def __neg__(self) -> 'PowerSeries':
        return PowerSeries(tuple(-c for c in self.coeffs))

    def __sub__(self, other: 'PowerSeries') -> 'PowerSeries':
        return self + (-other)

    def scale(self, factor) -> 'PowerSeries':
        factor = _normalize(factor)
        return PowerSeries(tuple(factor * c for c in self.coeffs))

    def __mul__(self, other: Union['PowerSeries', int, Fraction]) -> 'PowerSeries':
        if not isinstance(other, PowerSeries):
            return self.scale(other)
        order = min(self.order, other.order)
        return PowerSeries(tuple(
            sum((self[i] * other[k - i] for i in range(k + 1)), Fraction(0)) for k in range(order + 1)
        ))

    def __rmul__(self, other) -> 'PowerSeries':
        return self.scale(other)

    def reciprocal(self) -> 'PowerSeries':
        if _is_zero(self[0]):
            raise SeriesError("Reciprocal of a series with zero constant term")
        inverse_c0 = _normalize(1 / as_expr(self[0])) if not isinstance(self[0], Fraction) else 1 / self[0]
        out = [inverse_c0]
        for n in range(1, self.order + 1):
            total = sum((self[k] * out[n - k] for k in range(1, n + 1)), Fraction(0))
            out.append(_normalize(-inverse_c0 * total))
        return PowerSeries(tuple(out))

    def __truediv__(self, other: 'PowerSeries') -> 'PowerSeries':
        return self * other.reciprocal()

    def sqrt(self) -> 'PowerSeries':
        """Square root of a series with constant term 1."""
        if self[0] != 1:
            raise SeriesError(f"Square root needs constant term 1, got {self[0]}")
        out = [Fraction(1)]
        for n in range(1, self.order + 1):
            total = sum((out[k] * out[n - k] for k in range(1, n)), Fraction(0))
            out.append(_normalize((self[n] - total) / 2))
        return PowerSeries(tuple(out))

    def power(self, k: int) -> 'PowerSeries':
        result = PowerSeries.constant(1, self.order)
        for _ in range(k):
            result = result * self
        return result

    def compose(self, inner: 'PowerSeries') -> 'PowerSeries':
        """self(inner(x)), for inner without constant term."""
        if not _is_zero(inner[0]):
            raise SeriesError("Composition needs an inner series without constant term")
        order = min(self.order, inner.order)
        inner = inner.truncate(order)
        result = PowerSeries.constant(self[order], order)
        for k in range(order - 1, -1, -1):
            result = result * inner + PowerSeries.constant(self[k], order)
        return result

    def rescale(self, factor) -> 'PowerSeries':
        """f(a x)."""
        factor = _normalize(factor)
        return PowerSeries(tuple(c * factor ** k for k, c in enumerate(self.coeffs)))

    def substitute_square(self) -> 'PowerSeries':
        """g(x^2), doubling the order."""
        out = []
        for c in self.coeffs:
            out.extend([c, Fraction(0)])
        return PowerSeries(tuple(out[:-1]))

    def odd_part(self) -> 'PowerSeries':
        return PowerSeries(tuple(c if k % 2 else Fraction(0) for k, c in enumerate(self.coeffs)))

    def even_part(self) -> 'PowerSeries':
        return PowerSeries(tuple(Fraction(0) if k % 2 else c for k, c in enumerate(self.coeffs)))

    def coefficients(self) -> List[Coefficient]:
        return list(self.coeffs)

    def is_zero(self) -> bool:
        return all(_is_zero(c) for c in self.coeffs)

    def __str__(self):
        return "[" + ", ".join(str(c) for c in self.coeffs) + "]"


# --- exact builders ---

def exp_series(order: int) -> PowerSeries:
    return PowerSeries(tuple(Fraction(1, math.factorial(k)) for k in range(order + 1)))


def sinhc_series(order: int) -> PowerSeries:
    """sinh(u)/u as a series in z = u^2."""
    return PowerSeries(tuple(Fraction(1, math.factorial(2 * k + 1)) for k in range(order + 1)))


def cosh_series(order: int) -> PowerSeries:
    """cosh(u) as a series in z = u^2."""
    return PowerSeries(tuple(Fraction(1, math.factorial(2 * k)) for k in range(order + 1)))


def tanhc_series(order: int) -> PowerSeries:
    """tanh(u)/u as a series in z = u^2."""
    return sinhc_series(order) / cosh_series(order)


def ahat_series(order: int) -> PowerSeries:
    """(sqrt(z)/2) / sinh(sqrt(z)/2) in z."""
    return sinhc_series(order).rescale(Fraction(1, 4)).reciprocal()


def hirzebruch_series(order: int) -> PowerSeries:
    """sqrt(z) / tanh(sqrt(z)) in z."""
    return tanhc_series(order).reciprocal()


def todd_series(order: int) -> PowerSeries:
    """z / (1 - exp(-z))."""
    quotient = PowerSeries(tuple(Fraction((-1) ** k, math.factorial(k + 1)) for k in range(order + 1)))
    return quotient.reciprocal()


def polynomial_series(coeffs: Sequence, order: int) -> PowerSeries:
    padded = list(coeffs)[:order + 1] + [0] * max(0, order + 1 - len(coeffs))
    return PowerSeries(tuple(padded))


# --- Taylor expansion of user functions ---

def taylor(g: ExprLike, order: int, variable: Optional[sp.Symbol] = None) -> PowerSeries:
    """Taylor coefficients of g at 0 up to x^order."""
    expr = as_expr(g)
    if variable is None:
        free = sorted(expr.free_symbols, key=str)
        if len(free) > 1:
            raise SeriesError(f"Function {expr} depends on more than one variable")
        variable = free[0] if free else VARIABLE
    try:
        expansion = sp.series(expr, variable, 0, order + 1).removeO()
    except (ValueError, NotImplementedError, TypeError, ZeroDivisionError) as e:
        raise SeriesError(f"Cannot expand {expr} at 0: {e}") from e
    expansion = sp.expand(expansion)
    coeffs = [sp.Integer(0)] * (order + 1)
    for term in sp.Add.make_args(expansion):
        if term == 0:
            continue
        coeff, power = term.as_independent(variable, as_Add=False)
        if power == 1:
            k = 0
        else:
            base, exponent = power.as_base_exp()
            if base != variable or not exponent.is_Integer:
                raise SeriesError(f"{expr} is not analytic at 0 (term {term})")
            k = int(exponent)
        if k < 0:
            raise SeriesError(f"{expr} has a pole at 0")
        if k <= order:
            coeffs[k] += coeff
    try:
        return PowerSeries(tuple(coeffs))
    except SymbolicError as e:
        raise SeriesError(f"Cannot expand {expr} at 0: {e}") from e


def transform_series(series: PowerSeries, class_type: str, field: str, order: int) -> List[Coefficient]:
    """
    Coefficients c_0..c_order of the function f applied to the normalized
    curvature, derived from the defining series g.
    """
    if class_type not in CLASS_TYPES:
        raise SeriesError(f"Unknown class type '{class_type}'")
    if class_type == "pfaffian":
        f = series.truncate(order).odd_part() if series.order >= order else series.odd_part()
        if f.is_zero():
            logger.warning("Odd part of the defining function vanishes; the class is zero")
        return [f[k] for k in range(order + 1)]
    if field == "complex":
        return [series[k] for k in range(order + 1)]
    if class_type == "multiplicative":
        if series[0] != 1:
            raise SeriesError(f"Real multiplicative classes need g(0) = 1, got {series[0]}")
        f = series.substitute_square().sqrt()
        return [f[k] for k in range(order + 1)]
    if series[0] != 0:
        raise SeriesError(f"Real additive classes need g(0) = 0, got {series[0]}")
    f = series.substitute_square().scale(Fraction(1, 2))
    return [f[k] for k in range(order + 1)]
