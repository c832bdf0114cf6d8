import logging
import re
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple, TYPE_CHECKING, Union

import numpy as np
import sympy as sp

from chern_weil.core.errors import EvaluationError, GeometryError, SymbolicError
from chern_weil.core.symexpr import (
    ExprLike, as_expr, canonicalize, compile_numeric, equal_sym, eval_numeric, is_zero, to_text
)

if TYPE_CHECKING:
    from chern_weil.core.forms import Coframe

logger = logging.getLogger(__name__)

STRUCTURES = ("differentiable", "Riemannian", "Lorentzian")


@dataclass(eq=False)
class Subset:
    """An open subset of a manifold, known only by name and containment."""
    name: str
    manifold: 'Manifold'
    parents: Set[str] = field(default_factory=set)
    # Names of subsets whose union this subset is
    union_of: Tuple[str, ...] = ()

    def is_within(self, other: 'Subset') -> bool:
        return self.manifold.is_within(self.name, other.name)

    def __repr__(self):
        return f"Subset({self.name})"


_RELATION_RE = re.compile(r"(!=|<=|>=|==|<|>)")
_RELATIONS: Dict[str, Callable] = {
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
}


@dataclass
class Restriction:
    """A coordinate predicate such as ``x^2 + y^2 != 0``."""
    lhs: sp.Expr
    op: str
    rhs: sp.Expr

    @staticmethod
    def parse(text: str) -> 'Restriction':
        parts = _RELATION_RE.split(text, maxsplit=1)
        if len(parts) != 3:
            raise GeometryError(f"Restriction needs a relation (!=, <, <=, >, >=, ==): '{text}'")
        return Restriction(as_expr(parts[0].strip()), parts[1], as_expr(parts[2].strip()))

    def holds(self, values: Dict[str, float]) -> bool:
        try:
            lhs = eval_numeric(self.lhs, values)
            rhs = eval_numeric(self.rhs, values)
        except EvaluationError:
            return False
        if self.op == "!=":
            return abs(lhs - rhs) > 1e-12
        if self.op == "==":
            return abs(lhs - rhs) <= 1e-12
        return _RELATIONS[self.op](lhs.real, rhs.real)

    def mask(self, coords: Sequence[sp.Symbol], arrays: Sequence[np.ndarray]) -> np.ndarray:
        lhs = np.broadcast_to(compile_numeric(self.lhs, coords)(*arrays), np.shape(arrays[0]))
        rhs = np.broadcast_to(compile_numeric(self.rhs, coords)(*arrays), np.shape(arrays[0]))
        if self.op == "!=":
            return np.abs(lhs - rhs) > 1e-12
        if self.op == "==":
            return np.abs(lhs - rhs) <= 1e-12
        return _RELATIONS[self.op](np.real(lhs), np.real(rhs))

    def __str__(self):
        return f"{to_text(self.lhs)} {self.op} {to_text(self.rhs)}"


class Chart:
    def __init__(self, name: str, manifold: 'Manifold', domain: Subset, coords: Sequence[str],
                 restrictions: Sequence[Restriction] = ()):
        self.name = name
        self.manifold = manifold
        self.domain = domain
        self.coords: Tuple[sp.Symbol, ...] = tuple(sp.Symbol(c) for c in coords)
        self.restrictions = list(restrictions)
        self._coframe: Optional['Coframe'] = None

    @property
    def coord_names(self) -> List[str]:
        return [c.name for c in self.coords]

    def coframe(self) -> 'Coframe':
        """Coordinate coframe (dx^1, ..., dx^n) of this chart."""
        if self._coframe is None:
            from chern_weil.core.forms import Coframe
            self._coframe = Coframe.coordinate(self)
        return self._coframe

    def contains(self, values: Sequence[ExprLike]) -> bool:
        try:
            numeric = {c.name: eval_numeric(as_expr(v), {}) for c, v in zip(self.coords, values)}
        except EvaluationError:
            # Symbolic coordinates cannot be tested
            return True
        return all(r.holds(numeric) for r in self.restrictions)

    def __repr__(self):
        return f"Chart({self.name}: {', '.join(self.coord_names)})"


class TransitionMap:
    """
    Coordinate change from `source` to `target` on the overlap `intersection`:
    target coordinates as expressions in the source coordinates.
    """

    def __init__(self, source: Chart, target: Chart, exprs: Sequence[sp.Expr], intersection: Optional[Subset]):
        self.source = source
        self.target = target
        self.exprs: Tuple[sp.Expr, ...] = tuple(exprs)
        self.intersection = intersection
        self.inverse: Optional['TransitionMap'] = None

    def __call__(self, values: Sequence[ExprLike]) -> Tuple[sp.Expr, ...]:
        mapping = dict(zip(self.source.coords, [as_expr(v) for v in values]))
        return tuple(canonicalize(e.xreplace(mapping)) for e in self.exprs)

    def substitution(self) -> Dict[sp.Symbol, sp.Expr]:
        """Target coordinates mapped to their source-chart expressions."""
        return dict(zip(self.target.coords, self.exprs))

    def jacobian(self) -> sp.Matrix:
        """d(target_i)/d(source_j), in source coordinates."""
        n = len(self.exprs)
        return sp.Matrix(n, n, lambda i, j: canonicalize(sp.diff(self.exprs[i], self.source.coords[j])))

    def pull(self, expr: ExprLike) -> sp.Expr:
        """Re-expresses a target-chart expression in source coordinates."""
        return canonicalize(as_expr(expr).xreplace(self.substitution()))

    def display(self) -> str:
        return "\n".join(f"{c} = {to_text(e)}" for c, e in zip(self.target.coord_names, self.exprs))

    def __repr__(self):
        return f"TransitionMap({self.source.name} -> {self.target.name})"


class Manifold:
    def __init__(self, name: str, dim: int, structure: str = "differentiable", start_index: int = 0):
        if dim < 1:
            raise GeometryError(f"Manifold dimension must be positive, got {dim}")
        if structure not in STRUCTURES:
            raise GeometryError(f"Unknown structure '{structure}', expected one of {STRUCTURES}")
        self.name = name
        self.dim = dim
        self.structure = structure
        self.start_index = start_index
        self.subsets: Dict[str, Subset] = {name: Subset(name, self)}
        self.charts: Dict[str, Chart] = {}
        self.transitions: Dict[Tuple[str, str], TransitionMap] = {}
        self._frozen = False

    def __repr__(self):
        return f"Manifold({self.name}, dim={self.dim}, {self.structure})"

    @property
    def whole(self) -> Subset:
        return self.subsets[self.name]

    def _check_mutable(self):
        if self._frozen:
            raise GeometryError(f"Manifold '{self.name}' is frozen")

    def freeze(self):
        self._frozen = True

    # --- Subsets ---

    def subset(self, name: str) -> Subset:
        if name not in self.subsets:
            raise GeometryError(f"Unknown subset '{name}' of {self.name}")
        return self.subsets[name]

    def open_subset(self, name: str, within: Optional[Union[str, Subset]] = None) -> Subset:
        self._check_mutable()
        if name in self.subsets:
            raise GeometryError(f"Subset '{name}' already exists")
        parent = self.whole if within is None else self._resolve(within)
        subset = Subset(name, self, {parent.name})
        self.subsets[name] = subset
        return subset

    def declare_union(self, a: Union[str, Subset], b: Union[str, Subset],
                      target: Optional[Union[str, Subset]] = None) -> Subset:
        """Records that `target` (default: the whole manifold) is the union of a and b."""
        self._check_mutable()
        sa, sb = self._resolve(a), self._resolve(b)
        union = self.whole if target is None else self._resolve(target)
        union.union_of = (sa.name, sb.name)
        return union

    def declare_intersection(self, name: str, a: Union[str, Subset], b: Union[str, Subset]) -> Subset:
        self._check_mutable()
        sa, sb = self._resolve(a), self._resolve(b)
        if name in self.subsets:
            subset = self.subsets[name]
            subset.parents |= {sa.name, sb.name}
            return subset
        subset = Subset(name, self, {sa.name, sb.name})
        self.subsets[name] = subset
        return subset

    def is_within(self, inner: str, outer: str) -> bool:
        if inner == outer or outer == self.name:
            return True
        seen = set()
        stack = [inner]
        while stack:
            current = stack.pop()
            if current == outer:
                return True
            if current in seen:
                continue
            seen.add(current)
            stack.extend(self.subsets[current].parents)
        return False

    def _resolve(self, subset: Union[str, Subset]) -> Subset:
        if isinstance(subset, Subset):
            if subset.manifold is not self:
                raise GeometryError(f"Subset '{subset.name}' belongs to another manifold")
            return subset
        return self.subset(subset)

    # --- Charts ---

    def chart(self, name: str, coords: Sequence[str], domain: Optional[Union[str, Subset]] = None,
              restrictions: Sequence[Union[str, Restriction]] = ()) -> Chart:
        self._check_mutable()
        if name in self.charts:
            raise GeometryError(f"Chart '{name}' already exists")
        if len(coords) != self.dim:
            raise GeometryError(f"Chart '{name}' needs {self.dim} coordinates, got {len(coords)}")
        if len(set(coords)) != len(coords):
            raise GeometryError(f"Chart '{name}' repeats a coordinate name")
        taken = {c for other in self.charts.values() for c in other.coord_names}.intersection(coords)
        if taken:
            raise GeometryError(f"Chart '{name}' reuses coordinate names of another chart: {', '.join(sorted(taken))}")
        parsed = [r if isinstance(r, Restriction) else Restriction.parse(r) for r in restrictions]
        chart = Chart(name, self, self.whole if domain is None else self._resolve(domain), coords, parsed)
        self.charts[name] = chart
        return chart

    def get_chart(self, chart: Union[str, Chart]) -> Chart:
        if isinstance(chart, Chart):
            return chart
        if chart not in self.charts:
            raise GeometryError(f"Unknown chart '{chart}' on {self.name}")
        return self.charts[chart]

    def default_chart(self) -> Chart:
        if not self.charts:
            raise GeometryError(f"Manifold '{self.name}' has no chart")
        return next(iter(self.charts.values()))

    def add_transition(self, source: Union[str, Chart], target: Union[str, Chart],
                       exprs: Sequence[ExprLike], inverse: Sequence[ExprLike],
                       intersection: Optional[Union[str, Subset]] = None) -> TransitionMap:
        self._check_mutable()
        src, dst = self.get_chart(source), self.get_chart(target)
        if len(exprs) != self.dim or len(inverse) != self.dim:
            raise GeometryError(f"Transition {src.name} -> {dst.name} needs {self.dim} expressions each way")
        overlap = None if intersection is None else self._resolve(intersection)
        if overlap is not None and not (overlap.is_within(src.domain) and overlap.is_within(dst.domain)):
            raise GeometryError(f"Overlap '{overlap.name}' is not inside both chart domains")

        forward = TransitionMap(src, dst, [canonicalize(e) for e in exprs], overlap)
        backward = TransitionMap(dst, src, [canonicalize(e) for e in inverse], overlap)
        forward.inverse, backward.inverse = backward, forward
        self._check_round_trip(forward)
        self._check_round_trip(backward)

        self.transitions[(src.name, dst.name)] = forward
        self.transitions[(dst.name, src.name)] = backward
        logger.debug(f"Registered transition {src.name} <-> {dst.name}")
        return forward

    def _check_round_trip(self, transition: TransitionMap):
        inverse = transition.inverse
        for coord, back in zip(transition.source.coords, inverse.exprs):
            composed = back.xreplace(dict(zip(transition.target.coords, transition.exprs)))
            try:
                ok = is_zero(composed - coord)
            except SymbolicError:
                ok = False
            if not ok and not equal_sym(composed, coord):
                raise GeometryError(
                    f"Transition {transition.source.name} -> {transition.target.name} "
                    f"does not invert: {coord} -> {to_text(composed)}")

    def transition(self, source: Union[str, Chart], target: Union[str, Chart]) -> TransitionMap:
        src, dst = self.get_chart(source), self.get_chart(target)
        key = (src.name, dst.name)
        if key not in self.transitions:
            raise GeometryError(f"No transition from chart '{src.name}' to '{dst.name}'")
        return self.transitions[key]

    def has_transition(self, source: Union[str, Chart], target: Union[str, Chart]) -> bool:
        return (self.get_chart(source).name, self.get_chart(target).name) in self.transitions

    # --- Points and fields ---

    def point(self, coords: Sequence[ExprLike], chart: Union[str, Chart, None] = None,
              name: Optional[str] = None) -> 'Point':
        c = self.default_chart() if chart is None else self.get_chart(chart)
        if len(coords) != self.dim:
            raise GeometryError(f"Point needs {self.dim} coordinates")
        values = tuple(canonicalize(v) for v in coords)
        if not c.contains(values):
            raise GeometryError(f"Point {[to_text(v) for v in values]} violates the restrictions of {c.name}")
        return Point(self, c, values, name)

    def scalar_field(self, exprs: Dict[Union[str, Chart], ExprLike], name: Optional[str] = None) -> 'ScalarField':
        return ScalarField(self, {self.get_chart(k).name: canonicalize(v) for k, v in exprs.items()}, name)


@dataclass
class Point:
    manifold: Manifold
    chart: Chart
    coords: Tuple[sp.Expr, ...]
    name: Optional[str] = None

    def coordinates(self, chart: Union[str, Chart, None] = None) -> Tuple[sp.Expr, ...]:
        target = self.chart if chart is None else self.manifold.get_chart(chart)
        if target is self.chart:
            return self.coords
        values = self.manifold.transition(self.chart, target)(self.coords)
        if not target.contains(values):
            raise GeometryError(f"Point {self.name or ''} lies outside chart '{target.name}'")
        return values

    def bindings(self, chart: Union[str, Chart, None] = None) -> Dict[str, sp.Expr]:
        target = self.chart if chart is None else self.manifold.get_chart(chart)
        return {c.name: v for c, v in zip(target.coords, self.coordinates(target))}

    def __repr__(self):
        label = self.name or "p"
        return f"{label}({', '.join(to_text(v) for v in self.coords)})"


def field_on_overlap(f: ExprLike, source: Chart, target: Chart) -> sp.Expr:
    """Expression of a scalar, given in `source` coordinates, in `target` coordinates."""
    if source is target:
        return canonicalize(f)
    transition = source.manifold.transition(target, source)
    return transition.pull(f)


class ScalarField:
    def __init__(self, manifold: Manifold, exprs: Dict[str, sp.Expr], name: Optional[str] = None):
        self.manifold = manifold
        self.exprs = dict(exprs)
        self.name = name

    def __repr__(self):
        body = "; ".join(f"{c}: {to_text(e)}" for c, e in self.exprs.items())
        return f"ScalarField({self.name or ''} {body})"

    def charts(self) -> List[Chart]:
        return [self.manifold.get_chart(c) for c in self.exprs]

    def display(self) -> str:
        label = self.name or "f"
        lines = [f"{label}: {self.manifold.name} -> R"]
        for chart in self.charts():
            coords = ", ".join(chart.coord_names)
            lines.append(f"  ({coords}) |-> {to_text(self.exprs[chart.name])}")
        return "\n".join(lines)

    def expr(self, chart: Union[str, Chart]) -> sp.Expr:
        target = self.manifold.get_chart(chart)
        if target.name in self.exprs:
            return self.exprs[target.name]
        for source_name, e in self.exprs.items():
            if self.manifold.has_transition(target, source_name):
                value = field_on_overlap(e, self.manifold.get_chart(source_name), target)
                self.exprs[target.name] = value
                return value
        raise GeometryError(f"Scalar field {self.name or ''} has no expression reachable from chart '{target.name}'")

    def add_expr(self, chart: Union[str, Chart], e: ExprLike):
        self.exprs[self.manifold.get_chart(chart).name] = canonicalize(e)

    def add_expr_by_continuation(self, chart: Union[str, Chart], overlap: Optional[Union[str, Subset]] = None):
        target = self.manifold.get_chart(chart)
        for source_name, e in list(self.exprs.items()):
            if self.manifold.has_transition(target, source_name):
                transition = self.manifold.transition(target, source_name)
                if overlap is not None and transition.intersection is not None \
                        and not self.manifold._resolve(overlap).is_within(transition.intersection):
                    continue
                self.exprs[target.name] = field_on_overlap(e, self.manifold.get_chart(source_name), target)
                return self.exprs[target.name]
        raise GeometryError(f"Cannot continue {self.name or 'field'} to chart '{target.name}'")

    def check_consistency(self) -> bool:
        names = list(self.exprs)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                if not self.manifold.has_transition(b, a):
                    continue
                moved = field_on_overlap(self.exprs[a], self.manifold.get_chart(a), self.manifold.get_chart(b))
                if not equal_sym(moved, self.exprs[b]):
                    raise GeometryError(f"Scalar field {self.name or ''} disagrees between charts {a} and {b}")
        return True

    def at(self, point: Point) -> sp.Expr:
        chart = point.chart if point.chart.name in self.exprs else self.charts()[0]
        bindings = dict(zip(chart.coords, point.coordinates(chart)))
        return canonicalize(self.expr(chart).xreplace(bindings))

    def _combine(self, other: Union['ScalarField', ExprLike], op: Callable) -> 'ScalarField':
        if isinstance(other, ScalarField):
            exprs = {c: canonicalize(op(e, other.expr(c))) for c, e in self.exprs.items()}
        else:
            value = as_expr(other)
            exprs = {c: canonicalize(op(e, value)) for c, e in self.exprs.items()}
        return ScalarField(self.manifold, exprs)

    def __add__(self, other):
        return self._combine(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a - b)

    def __mul__(self, other):
        return self._combine(other, lambda a, b: a * b)

    def __truediv__(self, other):
        return self._combine(other, lambda a, b: a / b)

    def __neg__(self):
        return ScalarField(self.manifold, {c: -e for c, e in self.exprs.items()}, self.name)
