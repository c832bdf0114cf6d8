"""
Differential forms in components.

A form stores, per coframe, a sparse map from strictly increasing index
tuples to canonical coefficients. Components in other coframes are derived
on demand through the coframe change matrices and cached.
"""
import logging
from itertools import combinations
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import sympy as sp

from chern_weil.core.errors import FormError, GeometryError, SymbolicError
from chern_weil.core.geometry import Chart, Manifold, ScalarField
from chern_weil.core.symexpr import (
    ExprLike, as_expr, canonicalize, differentiate, equal_sym, to_latex, to_text
)

logger = logging.getLogger(__name__)

Indices = Tuple[int, ...]
Components = Dict[Indices, sp.Expr]

WEDGE = "∧"


class Coframe:
    """
    A coframe on the domain of `chart`. For abstract coframes the linking
    matrix P holds the dual frame vectors in coordinate components:
    frame vector i = sum_j P[j, i] d/dx^j (column i).
    """

    def __init__(self, name: str, chart: Chart, labels: Sequence[str], linking: Optional[sp.Matrix],
                 kind: str = "abstract", latex_labels: Optional[Sequence[str]] = None):
        self.name = name
        self.chart = chart
        self.labels = list(labels)
        self.latex_labels = list(latex_labels) if latex_labels else list(labels)
        self.kind = kind
        self.linking = linking
        self._inverse: Optional[sp.Matrix] = None
        self._changes: Dict['Coframe', sp.Matrix] = {}

    @staticmethod
    def coordinate(chart: Chart) -> 'Coframe':
        labels = [f"d{c}" for c in chart.coord_names]
        latex = [f"\\mathrm{{d}}{sp.latex(c)}" for c in chart.coords]
        n = len(chart.coords)
        return Coframe(f"{chart.name}.coframe", chart, labels, sp.eye(n), "coordinate", latex)

    @staticmethod
    def abstract(name: str, chart: Chart, vectors: Optional[Sequence[Sequence[ExprLike]]] = None,
                 labels: Optional[Sequence[str]] = None) -> 'Coframe':
        """`vectors[i]` lists the coordinate components of frame vector i."""
        n = chart.manifold.dim
        start = chart.manifold.start_index
        labels = labels or [f"{name}^{i + start}" for i in range(n)]
        latex = [f"{sp.latex(sp.Symbol(name))}^{{{i + start}}}" for i in range(n)]
        linking = None
        if vectors is not None:
            if len(vectors) != n or any(len(v) != n for v in vectors):
                raise FormError(f"Coframe '{name}' needs {n} frame vectors of {n} components")
            linking = sp.Matrix(n, n, lambda j, i: canonicalize(vectors[i][j]))
            if canonicalize(linking.det(method="berkowitz")) == 0:
                raise FormError(f"Frame vectors of '{name}' are linearly dependent")
        return Coframe(name, chart, labels, linking, "abstract", latex)

    @property
    def manifold(self) -> Manifold:
        return self.chart.manifold

    @property
    def dim(self) -> int:
        return self.chart.manifold.dim

    @property
    def is_coordinate(self) -> bool:
        return self.kind == "coordinate"

    def frame_matrix(self) -> sp.Matrix:
        if self.linking is None:
            raise FormError(f"Coframe '{self.name}' has no linking matrix to the coordinate frame")
        return self.linking

    def inverse_matrix(self) -> sp.Matrix:
        """Rows give the dual covectors in coordinate components."""
        if self._inverse is None:
            self._inverse = _canonical_matrix(self.frame_matrix().inv(method="ADJ"))
        return self._inverse

    def covector(self, i: int) -> 'DiffForm':
        """The i-th coframe element as a 1-form in this coframe."""
        return DiffForm(self.manifold, 1, {self: {(i,): sp.Integer(1)}})

    def __repr__(self):
        return f"Coframe({self.name})"


def _canonical_matrix(m: sp.Matrix) -> sp.Matrix:
    return m.applyfunc(canonicalize)


def coframe_change_matrix(source: Coframe, target: Coframe) -> sp.Matrix:
    """
    Q with target frame vectors f_i = sum_j Q[j, i] e_j in terms of the source
    frame, expressed in the coordinates of the target chart.
    """
    if source is target:
        return sp.eye(source.dim)
    if target in source._changes:
        return source._changes[target]

    source_inverse = source.inverse_matrix()
    target_matrix = target.frame_matrix()
    if source.chart is target.chart:
        change = source_inverse * target_matrix
    else:
        try:
            transition = source.manifold.transition(target.chart, source.chart)
        except GeometryError as e:
            raise FormError(f"Cannot relate coframes {source.name} and {target.name}: {e}") from e
        moved = source_inverse.xreplace(transition.substitution())
        change = moved * transition.jacobian() * target_matrix
    change = _canonical_matrix(change)
    source._changes[target] = change
    return change


def _sort_indices(indices: Sequence[int]) -> Tuple[int, Indices]:
    """Sign of the sorting permutation (0 on repeated index) and the sorted tuple."""
    items = list(indices)
    if len(set(items)) != len(items):
        return 0, ()
    sign = 1
    for i in range(len(items)):
        for j in range(len(items) - 1 - i):
            if items[j] > items[j + 1]:
                items[j], items[j + 1] = items[j + 1], items[j]
                sign = -sign
    return sign, tuple(items)


def _merge_sign(first: Indices, second: Indices) -> int:
    inversions = sum(1 for i in first for j in second if i > j)
    return -1 if inversions % 2 else 1


def _clean(comps: Dict[Indices, sp.Expr]) -> Components:
    out = {}
    for key, value in comps.items():
        value = canonicalize(value)
        if value != 0:
            out[key] = value
    return out


def _convert(comps: Components, degree: int, source: Coframe, target: Coframe) -> Components:
    substitution = {}
    if source.chart is not target.chart:
        try:
            substitution = source.manifold.transition(target.chart, source.chart).substitution()
        except GeometryError as e:
            raise FormError(f"Cannot relate coframes {source.name} and {target.name}: {e}") from e
    if degree == 0:
        return _clean({key: value.xreplace(substitution) for key, value in comps.items()})
    change = coframe_change_matrix(source, target)
    n = source.dim
    minors: Dict[Tuple[Indices, Indices], sp.Expr] = {}
    out: Dict[Indices, sp.Expr] = {}
    for rows, value in comps.items():
        moved = value.xreplace(substitution) if substitution else value
        for cols in combinations(range(n), degree):
            key = (rows, cols)
            if key not in minors:
                minors[key] = change.extract(list(rows), list(cols)).det(method="berkowitz")
            if minors[key] != 0:
                out[cols] = out.get(cols, 0) + moved * minors[key]
    return _clean(out)


class DiffForm:
    # Key for coordinate-free constants (degree 0 only)
    ANY = None

    def __init__(self, manifold: Manifold, degree: int,
                 comps: Optional[Dict[Optional[Coframe], Dict[Sequence[int], ExprLike]]] = None,
                 name: Optional[str] = None, latex_name: Optional[str] = None):
        if degree < 0:
            raise FormError(f"Negative degree {degree}")
        self.manifold = manifold
        self.degree = degree
        self.name = name
        self.latex_name = latex_name or name
        self._comps: Dict[Optional[Coframe], Components] = {}
        # Coframes whose components were converted from another coframe
        self._derived: List[Optional[Coframe]] = []
        for coframe, values in (comps or {}).items():
            self._comps.setdefault(coframe, {})
            for indices, value in values.items():
                self._store(coframe, indices, value)

    # --- construction ---

    @staticmethod
    def constant(manifold: Manifold, value: ExprLike) -> 'DiffForm':
        return DiffForm(manifold, 0, {DiffForm.ANY: {(): value}})

    @staticmethod
    def zero(manifold: Manifold, degree: int) -> 'DiffForm':
        return DiffForm(manifold, degree)

    @staticmethod
    def scalar(chart: Chart, value: ExprLike) -> 'DiffForm':
        return DiffForm(chart.manifold, 0, {chart.coframe(): {(): value}})

    def set_comp(self, coframe: Optional[Coframe], indices: Sequence[int], value: ExprLike):
        for stale in self._derived:
            self._comps.pop(stale, None)
        self._derived = []
        self._store(coframe, indices, value)

    def _store(self, coframe: Optional[Coframe], indices: Sequence[int], value: ExprLike):
        if coframe is None and self.degree != 0:
            raise FormError("Only 0-forms may be coframe independent")
        if len(indices) != self.degree:
            raise FormError(f"{self.degree}-form component needs {self.degree} indices, got {tuple(indices)}")
        if self.degree > self.manifold.dim:
            return
        if any(i < 0 or i >= self.manifold.dim for i in indices):
            raise FormError(f"Index out of range in {tuple(indices)}")
        sign, key = _sort_indices(indices)
        value = canonicalize(as_expr(value))
        comps = self._comps.setdefault(coframe, {})
        if sign == 0:
            if value != 0:
                raise FormError(f"Repeated index in {tuple(indices)} with nonzero value")
            return
        if value == 0:
            comps.pop(key, None)
        else:
            comps[key] = canonicalize(sign * value)

    # --- component access ---

    def coframes(self) -> List[Optional[Coframe]]:
        return list(self._comps)

    def is_zero(self) -> bool:
        return all(not comps for comps in self._comps.values())

    def comp(self, coframe: Optional[Coframe]) -> Components:
        if coframe in self._comps:
            return self._comps[coframe]
        if self.is_zero():
            return {}
        if DiffForm.ANY in self._comps:
            return self._comps[DiffForm.ANY]
        if coframe is None:
            raise FormError(f"Form {self.name or ''} depends on a coframe")
        sources = sorted((c for c in self._comps if c is not None),
                         key=lambda c: (c.chart is not coframe.chart, not c.is_coordinate))
        errors = []
        for source in sources:
            try:
                converted = _convert(self._comps[source], self.degree, source, coframe)
            except (FormError, GeometryError, SymbolicError) as e:
                errors.append(str(e))
                continue
            self._comps[coframe] = converted
            self._derived.append(coframe)
            return converted
        raise FormError(f"Cannot express form {self.name or ''} in coframe {coframe.name}: {'; '.join(errors)}")

    def __getitem__(self, key) -> sp.Expr:
        coframe, indices = key
        sign, sorted_key = _sort_indices(indices)
        return canonicalize(sign * self.comp(coframe).get(sorted_key, sp.Integer(0)))

    def restrict(self, coframe: Coframe) -> 'DiffForm':
        return DiffForm(self.manifold, self.degree, {coframe: dict(self.comp(coframe))}, self.name, self.latex_name)

    # --- algebra ---

    def _aligned(self, other: 'DiffForm') -> List[Optional[Coframe]]:
        if self.manifold is not other.manifold:
            raise FormError("Forms live on different manifolds")
        frames = [c for c in self._comps if c is not None and self._comps[c]]
        frames += [c for c in other._comps if c is not None and other._comps[c] and c not in frames]
        if not frames:
            return [DiffForm.ANY]
        return frames

    def _binary(self, other: 'DiffForm', degree: int, op) -> 'DiffForm':
        result = DiffForm(self.manifold, degree)
        for coframe in self._aligned(other):
            comps = _clean(op(self.comp(coframe), other.comp(coframe)))
            if coframe is None and degree > 0:
                continue
            result._comps[coframe] = comps
        return result

    def __add__(self, other: 'DiffForm') -> 'DiffForm':
        other = self._lift(other)
        if other.degree != self.degree:
            raise FormError(f"Cannot add forms of degree {self.degree} and {other.degree}")

        def add(a, b):
            out = dict(a)
            for k, v in b.items():
                out[k] = out.get(k, 0) + v
            return out
        return self._binary(other, self.degree, add)

    def __radd__(self, other):
        return self._lift(other) + self

    def __neg__(self) -> 'DiffForm':
        result = DiffForm(self.manifold, self.degree)
        result._comps = {c: {k: -v for k, v in comps.items()} for c, comps in self._comps.items()}
        return result

    def __sub__(self, other: 'DiffForm') -> 'DiffForm':
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def _lift(self, other: Any) -> 'DiffForm':
        if isinstance(other, DiffForm):
            return other
        if self.degree != 0:
            raise FormError("Only 0-forms combine with scalars")
        return DiffForm.constant(self.manifold, as_expr(other))

    def scale(self, factor: Union[ExprLike, ScalarField]) -> 'DiffForm':
        if isinstance(factor, ScalarField):
            return self._scale_by_field(factor)
        factor = as_expr(factor)
        result = DiffForm(self.manifold, self.degree)
        result._comps = {c: _clean({k: factor * v for k, v in comps.items()}) for c, comps in self._comps.items()}
        return result

    def _scale_by_field(self, field: ScalarField) -> 'DiffForm':
        if field.manifold is not self.manifold:
            raise FormError("Scalar field lives on another manifold")
        result = DiffForm(self.manifold, self.degree)
        for coframe, comps in self._comps.items():
            if coframe is DiffForm.ANY:
                for chart in field.charts():
                    value = field.expr(chart)
                    result._comps[chart.coframe()] = _clean({k: value * v for k, v in comps.items()})
                continue
            value = field.expr(coframe.chart)
            result._comps[coframe] = _clean({k: value * v for k, v in comps.items()})
        return result

    def copy(self, name: Optional[str] = None) -> 'DiffForm':
        result = DiffForm(self.manifold, self.degree, name=name or self.name, latex_name=self.latex_name)
        result._comps = {c: dict(comps) for c, comps in self._comps.items()}
        result._derived = list(self._derived)
        return result

    def wedge(self, other: 'DiffForm') -> 'DiffForm':
        degree = self.degree + other.degree
        if degree > self.manifold.dim or self.is_zero() or other.is_zero():
            return DiffForm(self.manifold, degree)

        def product(a: Components, b: Components) -> Dict[Indices, sp.Expr]:
            out: Dict[Indices, sp.Expr] = {}
            for i, x in a.items():
                for j, y in b.items():
                    if set(i) & set(j):
                        continue
                    key = tuple(sorted(i + j))
                    out[key] = out.get(key, 0) + _merge_sign(i, j) * x * y
            return out
        return self._binary(other, degree, product)

    def __mul__(self, other: Any) -> 'DiffForm':
        if isinstance(other, MixedForm):
            return NotImplemented
        if isinstance(other, DiffForm):
            return self.wedge(other)
        return self.scale(other)

    def __rmul__(self, other: Any) -> 'DiffForm':
        return self.scale(other)

    def exterior_derivative(self) -> 'DiffForm':
        result = DiffForm(self.manifold, self.degree + 1)
        if self.degree + 1 > self.manifold.dim:
            return result
        charts: List[Chart] = []
        for c in self._comps:
            if c is not None and self._comps[c] and c.chart not in charts:
                charts.append(c.chart)
        for chart in charts:
            coframe = chart.coframe()
            out: Dict[Indices, sp.Expr] = {}
            for indices, value in self.comp(coframe).items():
                for j, coord in enumerate(chart.coords):
                    if j in indices:
                        continue
                    partial = differentiate(value, coord)
                    if partial == 0:
                        continue
                    sign = -1 if sum(1 for i in indices if i < j) % 2 else 1
                    key = tuple(sorted(indices + (j,)))
                    out[key] = out.get(key, 0) + sign * partial
            result._comps[coframe] = _clean(out)
        return result

    def d(self) -> 'DiffForm':
        return self.exterior_derivative()

    def equals(self, other: 'DiffForm', **kwargs) -> bool:
        if self.degree != other.degree:
            return False
        difference = self - other
        for coframe in difference.coframes():
            for value in difference.comp(coframe).values():
                if not equal_sym(value, 0, **kwargs):
                    return False
        return True

    # --- output ---

    def _pick_coframe(self, coframe: Optional[Coframe]) -> Optional[Coframe]:
        if coframe is not None:
            return coframe
        for c in self._comps:
            if c is not None:
                return c
        return None

    def display(self, coframe: Optional[Coframe] = None) -> str:
        coframe = self._pick_coframe(coframe)
        comps = self.comp(coframe)
        if not comps:
            return "0"
        terms = []
        for indices in sorted(comps):
            coef = to_text(comps[indices])
            if not indices:
                terms.append(coef)
                continue
            basis = WEDGE.join(coframe.labels[i] for i in indices)
            if coef == "1":
                terms.append(basis)
            elif coef == "-1":
                terms.append(f"-{basis}")
            elif comps[indices].is_Add:
                terms.append(f"({coef}) {basis}")
            else:
                terms.append(f"{coef} {basis}")
        return " + ".join(terms)

    def display_latex(self, coframe: Optional[Coframe] = None) -> str:
        coframe = self._pick_coframe(coframe)
        comps = self.comp(coframe)
        if not comps:
            return "0"
        terms = []
        for indices in sorted(comps):
            coef = to_latex(comps[indices])
            if not indices:
                terms.append(coef)
                continue
            basis = " \\wedge ".join(coframe.latex_labels[i] for i in indices)
            if comps[indices].is_Add:
                coef = f"\\left({coef}\\right)"
            terms.append(basis if coef == "1" else f"{coef} {basis}")
        return " + ".join(terms)

    def to_json(self, coframe: Optional[Coframe] = None) -> Dict[str, str]:
        coframe = self._pick_coframe(coframe)
        return {",".join(str(i) for i in k): to_text(v) for k, v in sorted(self.comp(coframe).items())}

    def __repr__(self):
        return f"DiffForm({self.name or ''}, degree={self.degree}: {self.display() if self._comps else '0'})"


def one_form(coframe: Coframe, components: Sequence[ExprLike], name: Optional[str] = None) -> DiffForm:
    if len(components) != coframe.dim:
        raise FormError(f"1-form needs {coframe.dim} components")
    return DiffForm(coframe.manifold, 1, {coframe: {(i,): c for i, c in enumerate(components)}}, name)


class MixedForm:
    """Formal sum of forms of degrees 0..dim."""

    def __init__(self, manifold: Manifold, parts: Optional[Sequence[DiffForm]] = None,
                 name: Optional[str] = None, latex_name: Optional[str] = None):
        self.manifold = manifold
        self.name = name
        self.latex_name = latex_name or name
        n = manifold.dim
        given = list(parts or [])
        self.parts: List[DiffForm] = []
        for k in range(n + 1):
            if k < len(given) and given[k] is not None:
                if given[k].degree != k:
                    raise FormError(f"Mixed form slot {k} holds a {given[k].degree}-form")
                self.parts.append(given[k])
            else:
                self.parts.append(DiffForm(manifold, k))

    @staticmethod
    def constant(manifold: Manifold, value: ExprLike) -> 'MixedForm':
        return MixedForm(manifold, [DiffForm.constant(manifold, value)])

    @staticmethod
    def of(form: DiffForm) -> 'MixedForm':
        parts: List[Optional[DiffForm]] = [None] * (form.manifold.dim + 1)
        if form.degree <= form.manifold.dim:
            parts[form.degree] = form
        return MixedForm(form.manifold, parts)

    def zero_like(self) -> 'MixedForm':
        return MixedForm(self.manifold)

    def one_like(self) -> 'MixedForm':
        return MixedForm.constant(self.manifold, 1)

    def __getitem__(self, degree: int) -> DiffForm:
        return self.parts[degree]

    def component(self, degree: int) -> DiffForm:
        return self.parts[degree]

    def is_zero(self) -> bool:
        return all(p.is_zero() for p in self.parts)

    def _lift(self, other: Any) -> 'MixedForm':
        if isinstance(other, MixedForm):
            return other
        if isinstance(other, DiffForm):
            return MixedForm.of(other)
        return MixedForm.constant(self.manifold, as_expr(other))

    def __add__(self, other: Any) -> 'MixedForm':
        other = self._lift(other)
        return MixedForm(self.manifold, [a + b for a, b in zip(self.parts, other.parts)])

    def __radd__(self, other: Any) -> 'MixedForm':
        return self + other

    def __neg__(self) -> 'MixedForm':
        return MixedForm(self.manifold, [-p for p in self.parts])

    def __sub__(self, other: Any) -> 'MixedForm':
        return self + (-self._lift(other))

    def __rsub__(self, other: Any) -> 'MixedForm':
        return self._lift(other) - self

    def scale(self, factor: Union[ExprLike, ScalarField]) -> 'MixedForm':
        return MixedForm(self.manifold, [p.scale(factor) for p in self.parts])

    def copy(self, name: Optional[str] = None) -> 'MixedForm':
        return MixedForm(self.manifold, [p.copy() for p in self.parts], name or self.name, self.latex_name)

    def wedge(self, other: 'MixedForm') -> 'MixedForm':
        other = self._lift(other)
        n = self.manifold.dim
        parts = []
        for k in range(n + 1):
            total = DiffForm(self.manifold, k)
            for i in range(k + 1):
                a, b = self.parts[i], other.parts[k - i]
                if a.is_zero() or b.is_zero():
                    continue
                total = total + a.wedge(b)
            parts.append(total)
        return MixedForm(self.manifold, parts)

    def __mul__(self, other: Any) -> 'MixedForm':
        if isinstance(other, (MixedForm, DiffForm)):
            return self.wedge(other)
        return self.scale(other)

    def __rmul__(self, other: Any) -> 'MixedForm':
        if isinstance(other, DiffForm):
            return MixedForm.of(other).wedge(self)
        return self.scale(other)

    def exterior_derivative(self) -> 'MixedForm':
        parts: List[Optional[DiffForm]] = [None]
        parts += [p.exterior_derivative() for p in self.parts[:-1]]
        return MixedForm(self.manifold, parts)

    def d(self) -> 'MixedForm':
        return self.exterior_derivative()

    def set_restriction(self, other: 'MixedForm'):
        """Adopts the components `other` holds, e.g. the result on another frame domain."""
        for mine, theirs in zip(self.parts, other.parts):
            for coframe in theirs.coframes():
                mine._comps[coframe] = dict(theirs._comps[coframe])

    def coframes(self) -> List[Coframe]:
        seen: List[Coframe] = []
        for p in self.parts:
            for c in p.coframes():
                if c is not None and c not in seen:
                    seen.append(c)
        return seen

    def equals(self, other: 'MixedForm', **kwargs) -> bool:
        other = self._lift(other)
        return all(a.equals(b, **kwargs) for a, b in zip(self.parts, other.parts))

    def display_expansion(self, coframe: Optional[Coframe] = None) -> str:
        coframe = coframe or next(iter(self.coframes()), None)
        return " + ".join(f"[{p.display(coframe)}]_{k}" for k, p in enumerate(self.parts))

    def display_latex(self, coframe: Optional[Coframe] = None) -> str:
        coframe = coframe or next(iter(self.coframes()), None)
        return " + ".join(f"\\left[ {p.display_latex(coframe)} \\right]_{{{k}}}" for k, p in enumerate(self.parts))

    def to_json(self, coframe: Optional[Coframe] = None) -> Dict[str, Dict[str, str]]:
        coframe = coframe or next(iter(self.coframes()), None)
        return {str(k): p.to_json(coframe) for k, p in enumerate(self.parts)}

    def __repr__(self):
        return f"MixedForm({self.name or ''}: {self.display_expansion()})"
