import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import sympy as sp

from chern_weil.core.errors import BundleError, FormError, GeometryError, SymbolicError
from chern_weil.core.forms import Coframe
from chern_weil.core.geometry import Chart, Manifold, Point, ScalarField, Subset, field_on_overlap
from chern_weil.core.symexpr import ExprLike, as_expr, canonicalize, to_latex, to_text

logger = logging.getLogger(__name__)

FIELDS = ("real", "complex")


class LocalFrame:
    """
    Local frame (e_1, ..., e_n) of a bundle over `domain`. Section components
    relative to the frame are expressed in the coordinates of `chart`.
    """

    def __init__(self, name: str, bundle: 'VectorBundle', domain: Subset, chart: Chart,
                 labels: Optional[Sequence[str]] = None, coframe: Optional[Coframe] = None):
        self.name = name
        self.bundle = bundle
        self.domain = domain
        self.chart = chart
        start = bundle.base.start_index
        self.labels = list(labels) if labels else [f"{name}_{i + start}" for i in range(bundle.rank)]
        # Dual coframe for frames of the tangent bundle
        self.coframe = coframe

    def __repr__(self):
        return f"LocalFrame({self.name} on {self.domain.name})"


class FrameChange:
    """`target = source . matrix`, i.e. target_i = sum_j matrix[j, i] source_j."""

    def __init__(self, source: LocalFrame, target: LocalFrame, matrix: sp.Matrix, chart: Chart,
                 inverse: Optional[sp.Matrix] = None):
        self.source = source
        self.target = target
        self.matrix = matrix
        self.chart = chart
        self.inverse = inverse if inverse is not None else matrix.inv(method="ADJ").applyfunc(canonicalize)

    def det(self) -> ScalarField:
        value = canonicalize(self.matrix.det(method="berkowitz"))
        return ScalarField(self.chart.manifold, {self.chart.name: value}, f"det({self.source.name}->{self.target.name})")

    def __repr__(self):
        rows = "; ".join(", ".join(to_text(e) for e in self.matrix.row(i)) for i in range(self.matrix.rows))
        return f"FrameChange({self.source.name} -> {self.target.name}: [{rows}])"


class VectorBundle:
    def __init__(self, base: Manifold, rank: int, field: str = "complex", name: str = "E",
                 latex_name: Optional[str] = None):
        if rank < 1:
            raise BundleError(f"Bundle rank must be positive, got {rank}")
        if field not in FIELDS:
            raise BundleError(f"Unknown field '{field}', expected one of {FIELDS}")
        self.base = base
        self.rank = rank
        self.field = field
        self.name = name
        self.latex_name = latex_name or name
        self.frames: Dict[str, LocalFrame] = {}
        self.changes: Dict[Tuple[str, str], FrameChange] = {}
        self.is_tangent = False

    def __repr__(self):
        return f"VectorBundle({self.name} -> {self.base.name}, rank {self.rank}, {self.field})"

    # --- frames ---

    def local_frame(self, name: str, domain: Optional[Union[str, Subset]] = None,
                    chart: Optional[Union[str, Chart]] = None, labels: Optional[Sequence[str]] = None) -> LocalFrame:
        if name in self.frames:
            raise BundleError(f"Frame '{name}' already exists on {self.name}")
        subset = self.base.whole if domain is None else self.base._resolve(domain)
        if chart is None:
            chart = next((c for c in self.base.charts.values() if c.domain is subset), None) \
                or self.base.default_chart()
        frame = LocalFrame(name, self, subset, self.base.get_chart(chart), labels)
        self.frames[name] = frame
        return frame

    def get_frame(self, frame: Union[str, LocalFrame]) -> LocalFrame:
        if isinstance(frame, LocalFrame):
            if frame.bundle is not self:
                raise BundleError(f"Frame '{frame.name}' belongs to another bundle")
            return frame
        if frame not in self.frames:
            raise BundleError(f"Unknown frame '{frame}' on {self.name}")
        return self.frames[frame]

    def set_frame_change(self, source: Union[str, LocalFrame], target: Union[str, LocalFrame],
                         matrix: Union[sp.Matrix, Sequence[Sequence[ExprLike]]],
                         chart: Optional[Union[str, Chart]] = None) -> FrameChange:
        """Declares target = source . matrix on the overlap of the two frame domains."""
        src, dst = self.get_frame(source), self.get_frame(target)
        g = matrix if isinstance(matrix, sp.Matrix) else sp.Matrix([[as_expr(e) for e in row] for row in matrix])
        if g.shape != (self.rank, self.rank):
            raise BundleError(f"Frame change needs a {self.rank}x{self.rank} matrix, got {g.shape}")
        g = g.applyfunc(canonicalize)
        where = self._matrix_chart(g, src, dst, chart)
        try:
            det = canonicalize(g.det(method="berkowitz"))
        except SymbolicError as e:
            raise BundleError(f"Frame change {src.name} -> {dst.name} is not well defined: {e}") from e
        if det == 0:
            raise BundleError(f"Frame change {src.name} -> {dst.name} is singular")

        forward = FrameChange(src, dst, g, where)
        backward = FrameChange(dst, src, forward.inverse, where, inverse=g)
        identity = (g * forward.inverse).applyfunc(canonicalize)
        if identity != sp.eye(self.rank):
            raise BundleError(f"Frame change {src.name} -> {dst.name} does not invert")
        self.changes[(src.name, dst.name)] = forward
        self.changes[(dst.name, src.name)] = backward
        logger.debug(f"Registered {forward}")
        return forward

    def _matrix_chart(self, g: sp.Matrix, src: LocalFrame, dst: LocalFrame,
                      chart: Optional[Union[str, Chart]]) -> Chart:
        if chart is not None:
            return self.base.get_chart(chart)
        names = {s.name for s in g.free_symbols}
        for candidate in (src.chart, dst.chart):
            if names <= set(candidate.coord_names):
                return candidate
        return src.chart

    def frame_change(self, source: Union[str, LocalFrame], target: Union[str, LocalFrame]) -> FrameChange:
        key = (self.get_frame(source).name, self.get_frame(target).name)
        if key not in self.changes:
            raise BundleError(f"No frame change from '{key[0]}' to '{key[1]}'")
        return self.changes[key]

    # --- sections ---

    def section(self, name: str, comps: Dict[Union[str, LocalFrame], Sequence[ExprLike]],
                latex_name: Optional[str] = None) -> 'Section':
        section = Section(self, name, latex_name)
        for frame, values in comps.items():
            section.add_comp(frame, values)
        return section

    def trivialization(self, name: str, domain: Optional[Union[str, Subset]] = None,
                       chart: Optional[Union[str, Chart]] = None) -> 'Trivialization':
        return Trivialization(self, name, domain, chart)

    # --- tangent bundle ---

    @staticmethod
    def tangent_bundle(manifold: Manifold) -> 'VectorBundle':
        existing = getattr(manifold, "_tangent_bundle", None)
        if existing is not None:
            return existing
        bundle = VectorBundle(manifold, manifold.dim, "real", f"T{manifold.name}")
        bundle.is_tangent = True
        manifold._tangent_bundle = bundle
        return bundle

    def coordinate_frame(self, chart: Union[str, Chart]) -> LocalFrame:
        if not self.is_tangent:
            raise BundleError(f"{self.name} is not a tangent bundle")
        c = self.base.get_chart(chart)
        name = f"{c.name}.frame"
        if name in self.frames:
            return self.frames[name]
        frame = LocalFrame(name, self, c.domain, c, [f"d/d{x}" for x in c.coord_names], c.coframe())
        self.frames[name] = frame
        for other in list(self.frames.values()):
            if other is frame or other.coframe is None or not other.coframe.is_coordinate:
                continue
            if self.base.has_transition(c, other.chart):
                # d/dy^m = sum_j dx^j/dy^m d/dx^j
                jacobian = self.base.transition(c, other.chart).jacobian()
                self.set_frame_change(other, frame, jacobian, chart=c)
        return frame

    def abstract_frame(self, name: str, chart: Union[str, Chart],
                       vectors: Sequence[Sequence[ExprLike]], labels: Optional[Sequence[str]] = None) -> LocalFrame:
        """`vectors[i]` are the coordinate components of frame vector i."""
        if not self.is_tangent:
            raise BundleError(f"{self.name} is not a tangent bundle")
        c = self.base.get_chart(chart)
        try:
            coframe = Coframe.abstract(name, c, vectors)
        except FormError as e:
            raise BundleError(str(e)) from e
        frame = LocalFrame(name, self, c.domain, c, labels, coframe)
        self.frames[name] = frame
        self.set_frame_change(self.coordinate_frame(c), frame, coframe.frame_matrix(), chart=c)
        return frame


def _term(coefficient: sp.Expr, label: str) -> str:
    if coefficient == 1:
        return label
    if coefficient == -1:
        return f"-{label}"
    text = to_text(coefficient)
    return f"({text}) {label}" if coefficient.is_Add else f"{text} {label}"


@dataclass
class FiberVector:
    frame: LocalFrame
    point: Point
    comps: Tuple[sp.Expr, ...]
    name: Optional[str] = None

    def display(self) -> str:
        terms = [_term(c, label) for c, label in zip(self.comps, self.frame.labels) if c != 0]
        body = " + ".join(terms) if terms else "0"
        return f"{self.name}({self.point.name or 'p'}) = {body}" if self.name else body

    def display_latex(self) -> str:
        terms = [f"{to_latex(c)} {label}" for c, label in zip(self.comps, self.frame.labels) if c != 0]
        return " + ".join(terms) if terms else "0"

    def __eq__(self, other):
        if not isinstance(other, FiberVector):
            return NotImplemented
        return self.frame is other.frame and all(
            canonicalize(a - b) == 0 for a, b in zip(self.comps, other.comps))


class Section:
    def __init__(self, bundle: VectorBundle, name: str, latex_name: Optional[str] = None):
        self.bundle = bundle
        self.name = name
        self.latex_name = latex_name or name
        # Components in frame.chart coordinates, per frame
        self._comps: Dict[str, Tuple[sp.Expr, ...]] = {}

    def __repr__(self):
        parts = "; ".join(f"{f}: ({', '.join(to_text(e) for e in c)})" for f, c in self._comps.items())
        return f"Section({self.name} {parts})"

    def frames(self) -> List[LocalFrame]:
        return [self.bundle.frames[name] for name in self._comps]

    def add_comp(self, frame: Union[str, LocalFrame], values: Sequence[ExprLike]):
        f = self.bundle.get_frame(frame)
        if len(values) != self.bundle.rank:
            raise BundleError(f"Section needs {self.bundle.rank} components, got {len(values)}")
        self._comps[f.name] = tuple(canonicalize(v) for v in values)

    def comp(self, frame: Union[str, LocalFrame]) -> Tuple[sp.Expr, ...]:
        """Components in `frame`, converted through a registered frame change when needed."""
        f = self.bundle.get_frame(frame)
        if f.name in self._comps:
            return self._comps[f.name]
        for source_name, values in self._comps.items():
            key = (source_name, f.name)
            if key not in self.bundle.changes:
                continue
            change = self.bundle.changes[key]
            source = self.bundle.frames[source_name]
            moved = sp.Matrix([field_on_overlap(v, source.chart, change.chart) for v in values])
            # target = source . g  =>  c_target = g^-1 c_source
            converted = change.inverse * moved
            return tuple(field_on_overlap(canonicalize(c), change.chart, f.chart) for c in converted)
        raise BundleError(f"Section {self.name} cannot be expressed in frame '{f.name}'")

    def display(self, frame: Union[str, LocalFrame, None] = None) -> str:
        f = self.frames()[0] if frame is None else self.bundle.get_frame(frame)
        terms = [_term(c, label) for c, label in zip(self.comp(f), f.labels) if c != 0]
        return f"{self.name} = {' + '.join(terms) if terms else '0'}"

    def add_comp_by_continuation(self, frame: Union[str, LocalFrame],
                                 overlap: Optional[Union[str, Subset]] = None) -> Tuple[sp.Expr, ...]:
        """
        Extends the section to the domain of `frame` using its expression on the
        overlap; the result has to be well defined on the whole frame domain.
        """
        f = self.bundle.get_frame(frame)
        try:
            values = self.comp(f)
        except (SymbolicError, GeometryError) as e:
            raise BundleError(f"Continuation of {self.name} to '{f.name}' is not well defined: {e}") from e
        if overlap is not None:
            self.bundle.base._resolve(overlap)
        self._comps[f.name] = values
        return values

    def at(self, point: Point, frame: Optional[Union[str, LocalFrame]] = None) -> FiberVector:
        if frame is None:
            candidates = [f for f in self.frames() if point.chart.domain.is_within(f.domain)]
            if not candidates:
                raise BundleError(f"Point {point} lies outside the domain of {self.name}")
            f = candidates[0]
        else:
            f = self.bundle.get_frame(frame)
        if not point.chart.domain.is_within(f.domain) and not self.bundle.base.has_transition(point.chart, f.chart):
            raise BundleError(f"Point {point} lies outside the domain of frame '{f.name}'")
        try:
            coords = point.coordinates(f.chart)
        except (GeometryError, SymbolicError) as e:
            raise BundleError(f"Point {point} lies outside the domain of frame '{f.name}': {e}") from e
        bindings = dict(zip(f.chart.coords, coords))
        try:
            values = tuple(canonicalize(v.xreplace(bindings)) for v in self.comp(f))
        except SymbolicError as e:
            raise BundleError(f"Section {self.name} is singular at {point}: {e}") from e
        return FiberVector(f, point, values, self.name)

    def _combine(self, other: 'Section', sign: int, name: Optional[str]) -> 'Section':
        if other.bundle is not self.bundle:
            raise BundleError("Sections of different bundles")
        result = Section(self.bundle, name or f"{self.name}{'+' if sign > 0 else '-'}{other.name}")
        names = list(self._comps) + [n for n in other._comps if n not in self._comps]
        for frame_name in names:
            try:
                mine, theirs = self.comp(frame_name), other.comp(frame_name)
            except BundleError:
                continue
            result._comps[frame_name] = tuple(canonicalize(a + sign * b) for a, b in zip(mine, theirs))
        if not result._comps:
            raise BundleError(f"Sections {self.name} and {other.name} share no frame")
        return result

    def __add__(self, other: 'Section') -> 'Section':
        return self._combine(other, 1, None)

    def __sub__(self, other: 'Section') -> 'Section':
        return self._combine(other, -1, None)

    def scale(self, factor: Union[ExprLike, ScalarField], name: Optional[str] = None) -> 'Section':
        result = Section(self.bundle, name or self.name)
        for frame_name, comps in self._comps.items():
            if isinstance(factor, ScalarField):
                value = factor.expr(self.bundle.frames[frame_name].chart)
            else:
                value = as_expr(factor)
            result._comps[frame_name] = tuple(canonicalize(value * c) for c in comps)
        return result

    def __rmul__(self, factor: Union[ExprLike, ScalarField]) -> 'Section':
        return self.scale(factor)

    def restrict(self, frame: Union[str, LocalFrame]) -> 'Section':
        """The section on the domain of `frame` only."""
        f = self.bundle.get_frame(frame)
        result = Section(self.bundle, self.name, self.latex_name)
        result._comps[f.name] = self.comp(f)
        return result


class Trivialization:
    """A local trivialization; its frame is the pullback of the standard basis."""

    def __init__(self, bundle: VectorBundle, name: str, domain: Optional[Union[str, Subset]] = None,
                 chart: Optional[Union[str, Chart]] = None):
        self.bundle = bundle
        self.name = name
        labels = [f"({name}^*e_{i + bundle.base.start_index})" for i in range(bundle.rank)]
        self._frame = bundle.local_frame(name, domain, chart, labels)

    def frame(self) -> LocalFrame:
        return self._frame

    def transition_map(self, other: 'Trivialization', matrix: Union[sp.Matrix, Sequence[Sequence[ExprLike]]],
                       chart: Optional[Union[str, Chart]] = None) -> FrameChange:
        """Declares that components change as c_other = matrix . c_self on the overlap."""
        return self.bundle.set_frame_change(other.frame(), self.frame(), matrix, chart)

    def __repr__(self):
        return f"Trivialization({self.name})"
