from abc import ABC, abstractmethod
from typing import Any, Dict, List, Sequence, TYPE_CHECKING

import sympy as sp

from chern_weil.core.series import Coefficient, PowerSeries, transform_series
from chern_weil.core.symexpr import canonicalize

if TYPE_CHECKING:
    from chern_weil.core.base.context import ComputationContext

Matrix = Sequence[Sequence[Any]]


def ring_zero(sample: Any) -> Any:
    if hasattr(sample, "zero_like"):
        return sample.zero_like()
    if isinstance(sample, sp.Basic):
        return sp.Integer(0)
    return 0 * sample


def ring_one(sample: Any) -> Any:
    if hasattr(sample, "one_like"):
        return sample.one_like()
    if isinstance(sample, sp.Basic):
        return sp.Integer(1)
    return type(sample)(1)


def ring_is_zero(value: Any) -> bool:
    if hasattr(value, "is_zero") and callable(value.is_zero):
        return value.is_zero()
    if isinstance(value, sp.Basic):
        return canonicalize(value) == 0
    return value == 0


def is_skew(matrix: Matrix) -> bool:
    n = len(matrix)
    for i in range(n):
        if len(matrix[i]) != n:
            return False
        for j in range(i, n):
            if not ring_is_zero(matrix[i][j] + matrix[j][i]):
                return False
    return True


class InvariantPolynomial(ABC):
    """
    Abstract base class for the invariant polynomials a characteristic
    class is built on (trace, determinant, Pfaffian).
    """

    @abstractmethod
    def get_type_id(self) -> str:
        """Returns the class type this polynomial serves ('additive', ...)."""
        pass

    @abstractmethod
    def get_display_name(self) -> str:
        pass

    @abstractmethod
    def evaluate(self, matrix: Matrix) -> Any:
        """Evaluates the polynomial on a square matrix over a commutative ring."""
        pass

    def epsilon(self) -> sp.Expr:
        """Normalization constant: curvature enters as Omega / (2 pi epsilon)."""
        return sp.I

    def validate(self, matrix: Matrix, context: 'ComputationContext' = None):
        """Raises when the polynomial cannot be evaluated on `matrix`."""
        pass

    def coefficients(self, series: PowerSeries, field: str, order: int) -> List[Coefficient]:
        return transform_series(series, self.get_type_id(), field, order)

    def to_dict(self) -> Dict[str, Any]:
        return {"type": self.get_type_id()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'InvariantPolynomial':
        return cls()

    def __repr__(self):
        return f"{type(self).__name__}()"
