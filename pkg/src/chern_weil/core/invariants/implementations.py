from typing import Any, List

import sympy as sp

from chern_weil.core.base.invariant import (
    InvariantPolynomial, Matrix, is_skew, ring_is_zero, ring_one, ring_zero
)
from chern_weil.core.errors import CharClassError

# Cofactor expansion up to this size, division-free elimination above
LAPLACE_LIMIT = 4


def _first_entry(matrix: Matrix) -> Any:
    return matrix[0][0]


def _minor(matrix: Matrix, row: int, col: int) -> List[List[Any]]:
    return [[v for j, v in enumerate(r) if j != col] for i, r in enumerate(matrix) if i != row]


def laplace_det(matrix: Matrix) -> Any:
    n = len(matrix)
    if n == 1:
        return matrix[0][0]
    if n == 2:
        return matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0]
    total = ring_zero(_first_entry(matrix))
    for j in range(n):
        entry = matrix[0][j]
        if ring_is_zero(entry):
            continue
        term = entry * laplace_det(_minor(matrix, 0, j))
        total = total + term if j % 2 == 0 else total - term
    return total


def berkowitz_det(matrix: Matrix) -> Any:
    """Division-free determinant through the characteristic polynomial."""
    n = len(matrix)
    one = ring_one(_first_entry(matrix))
    zero = ring_zero(_first_entry(matrix))
    poly = [one]
    for k in range(n):
        row = matrix[k][:k]
        column = [matrix[i][k] for i in range(k)]
        block = [r[:k] for r in matrix[:k]]
        toeplitz = [one, -matrix[k][k]]
        vector = column
        for _ in range(k):
            product = zero
            for a, b in zip(row, vector):
                product = product + a * b
            toeplitz.append(-product)
            vector = [_sum_row(block[i], vector, zero) for i in range(k)]
        poly = [
            _accumulate([toeplitz[i - j] * poly[j] for j in range(min(i, k) + 1) if i - j < len(toeplitz)], zero)
            for i in range(k + 2)
        ]
    return poly[n] if n % 2 == 0 else -poly[n]


def _sum_row(row: List[Any], vector: List[Any], zero: Any) -> Any:
    total = zero
    for a, b in zip(row, vector):
        total = total + a * b
    return total


def _accumulate(terms: List[Any], zero: Any) -> Any:
    total = zero
    for t in terms:
        total = total + t
    return total


def pfaffian(matrix: Matrix) -> Any:
    """Signed sum over perfect matchings, expanded along the first row."""
    n = len(matrix)
    if n == 0:
        return 1
    if n % 2:
        return ring_zero(_first_entry(matrix))
    if n == 2:
        return matrix[0][1]
    total = ring_zero(_first_entry(matrix))
    for j in range(1, n):
        entry = matrix[0][j]
        if ring_is_zero(entry):
            continue
        keep = [k for k in range(n) if k not in (0, j)]
        rest = [[matrix[a][b] for b in keep] for a in keep]
        term = entry * pfaffian(rest)
        total = total + term if j % 2 == 1 else total - term
    return total


class TraceInvariant(InvariantPolynomial):
    def get_type_id(self) -> str:
        return "additive"

    def get_display_name(self) -> str:
        return "trace"

    def evaluate(self, matrix: Matrix) -> Any:
        total = ring_zero(_first_entry(matrix))
        for i in range(len(matrix)):
            total = total + matrix[i][i]
        return total


class DeterminantInvariant(InvariantPolynomial):
    def get_type_id(self) -> str:
        return "multiplicative"

    def get_display_name(self) -> str:
        return "determinant"

    def evaluate(self, matrix: Matrix) -> Any:
        if len(matrix) <= LAPLACE_LIMIT:
            return laplace_det(matrix)
        return berkowitz_det(matrix)


class PfaffianInvariant(InvariantPolynomial):
    def get_type_id(self) -> str:
        return "pfaffian"

    def get_display_name(self) -> str:
        return "Pfaffian"

    def epsilon(self) -> sp.Expr:
        return sp.Integer(1)

    def validate(self, matrix: Matrix, context=None):
        if len(matrix) % 2:
            raise CharClassError(f"Pfaffian needs an even-sized matrix, got {len(matrix)}")
        if not is_skew(matrix):
            raise CharClassError("Pfaffian needs a skew-symmetric curvature matrix")

    def evaluate(self, matrix: Matrix) -> Any:
        return pfaffian(matrix)
