import logging
import random
import time
from typing import Dict, List, Optional, Sequence, Tuple, Union

import sympy as sp

from chern_weil.core.bundle import FrameChange, LocalFrame, VectorBundle
from chern_weil.core.errors import ConnectionFormError, FormError, GeometryError
from chern_weil.core.forms import Coframe, DiffForm, coframe_change_matrix, one_form
from chern_weil.core.geometry import Chart, Manifold, Point, ScalarField
from chern_weil.core.symexpr import ExprLike, as_expr, canonicalize, equal_sym, to_text

logger = logging.getLogger(__name__)

FormMatrix = List[List[DiffForm]]

SIGNATURES = ("Riemannian", "Lorentzian")


class CurvatureMatrix:
    """n x n matrix of 2-forms on one frame domain."""

    def __init__(self, frame: LocalFrame, entries: FormMatrix):
        self.frame = frame
        self.entries = entries

    @property
    def size(self) -> int:
        return len(self.entries)

    def __getitem__(self, key: Tuple[int, int]) -> DiffForm:
        i, j = key
        return self.entries[i][j]

    def rows(self) -> FormMatrix:
        return self.entries

    def is_skew(self) -> bool:
        n = self.size
        for i in range(n):
            for j in range(i, n):
                if not (self.entries[i][j] + self.entries[j][i]).is_zero():
                    return False
        return True


class BundleConnection:
    """
    Connection given by its matrices of 1-forms, with nabla e_j = sum_i e_i (x) omega^i_j
    (the row index is the upper one).
    """

    def __init__(self, bundle: VectorBundle, name: str = "nabla", latex_name: Optional[str] = None):
        self.bundle = bundle
        self.name = name
        self.latex_name = latex_name or "\\nabla"
        self._forms: Dict[str, Dict[Tuple[int, int], DiffForm]] = {}
        self._curvature: Dict[str, CurvatureMatrix] = {}

    def __repr__(self):
        return f"BundleConnection({self.name} on {self.bundle.name}, frames={list(self._forms)})"

    def frames(self) -> List[LocalFrame]:
        return [self.bundle.frames[name] for name in self._forms]

    def _check_indices(self, i: int, j: int):
        n = self.bundle.rank
        if not (0 <= i < n and 0 <= j < n):
            raise ConnectionFormError(f"Index ({i}, {j}) out of range for rank {n}")

    def set_connection_form(self, i: int, j: int, form: DiffForm, frame: Union[str, LocalFrame]):
        self._check_indices(i, j)
        if form.degree != 1:
            raise ConnectionFormError(f"Connection forms are 1-forms, got degree {form.degree}")
        f = self.bundle.get_frame(frame)
        self._forms.setdefault(f.name, {})[(i, j)] = form
        self._curvature.pop(f.name, None)

    def declare_frame(self, frame: Union[str, LocalFrame]):
        """Registers a frame whose connection forms all vanish."""
        self._forms.setdefault(self.bundle.get_frame(frame).name, {})

    def connection_form(self, i: int, j: int, frame: Union[str, LocalFrame]) -> DiffForm:
        self._check_indices(i, j)
        f = self.bundle.get_frame(frame)
        if f.name not in self._forms:
            raise ConnectionFormError(f"No connection forms in frame '{f.name}'")
        return self._forms[f.name].get((i, j)) or DiffForm(self.bundle.base, 1)

    def connection_matrix(self, frame: Union[str, LocalFrame]) -> FormMatrix:
        n = self.bundle.rank
        return [[self.connection_form(i, j, frame) for j in range(n)] for i in range(n)]

    def add_frame_by_change(self, change: FrameChange):
        """Computes the connection forms in change.target from those in change.source."""
        transformed = connection_change_frame(self, change)
        self._forms[change.target.name] = {
            (i, j): transformed[i][j] for i in range(len(transformed)) for j in range(len(transformed))
            if not transformed[i][j].is_zero()
        }
        self._curvature.pop(change.target.name, None)

    def curvature_matrix(self, frame: Union[str, LocalFrame]) -> CurvatureMatrix:
        f = self.bundle.get_frame(frame)
        if f.name in self._curvature:
            return self._curvature[f.name]
        started = time.time()
        omega = self.connection_matrix(f)
        n = self.bundle.rank
        entries: FormMatrix = []
        for i in range(n):
            row = []
            for j in range(n):
                value = omega[i][j].exterior_derivative()
                for k in range(n):
                    if omega[i][k].is_zero() or omega[k][j].is_zero():
                        continue
                    value = value + omega[i][k].wedge(omega[k][j])
                row.append(value)
            entries.append(row)
        result = CurvatureMatrix(f, entries)
        self._curvature[f.name] = result
        logger.debug(f"Curvature of {self.name} in {f.name} computed in {time.time() - started:.2f}s")
        return result

    def curvature(self, frame: Union[str, LocalFrame]) -> CurvatureMatrix:
        return self.curvature_matrix(frame)

    def curvature_form(self, i: int, j: int, frame: Union[str, LocalFrame]) -> DiffForm:
        self._check_indices(i, j)
        return self.curvature_matrix(frame)[i, j]


def _scalar_times(value: sp.Expr, form: DiffForm, coframe: Coframe) -> DiffForm:
    if value == 0 or form.is_zero():
        return DiffForm(form.manifold, form.degree)
    return form.restrict(coframe).scale(value)


def connection_change_frame(connection: BundleConnection, change: FrameChange) -> FormMatrix:
    """omega' = g^-1 dg + g^-1 omega g for target = source . g."""
    n = connection.bundle.rank
    chart = change.chart
    coframe = chart.coframe()
    g, g_inv = change.matrix, change.inverse
    omega = connection.connection_matrix(change.source)
    dg = [[DiffForm.scalar(chart, g[i, j]).exterior_derivative() for j in range(n)] for i in range(n)]

    result: FormMatrix = []
    for i in range(n):
        row = []
        for j in range(n):
            total = DiffForm(connection.bundle.base, 1)
            for k in range(n):
                total = total + _scalar_times(g_inv[i, k], dg[k][j], coframe)
                for l in range(n):
                    factor = canonicalize(g_inv[i, k] * g[l, j])
                    total = total + _scalar_times(factor, omega[k][l], coframe)
            row.append(total)
        result.append(row)
    return result


def curvature_change_frame(curvature: CurvatureMatrix, change: FrameChange) -> FormMatrix:
    """Omega' = g^-1 Omega g."""
    n = curvature.size
    coframe = change.chart.coframe()
    result: FormMatrix = []
    for i in range(n):
        row = []
        for j in range(n):
            total = DiffForm(change.chart.manifold, 2)
            for k in range(n):
                for l in range(n):
                    factor = canonicalize(change.inverse[i, k] * change.matrix[l, j])
                    total = total + _scalar_times(factor, curvature[k, l], coframe)
            row.append(total)
        result.append(row)
    return result


class Metric:
    """Symmetric bilinear form given by component matrices per coframe."""

    def __init__(self, manifold: Manifold, name: str = "g", signature: str = "Riemannian"):
        if signature not in SIGNATURES:
            raise ConnectionFormError(f"Unknown signature '{signature}'")
        self.manifold = manifold
        self.name = name
        self.signature = signature
        self._comps: Dict[Coframe, sp.Matrix] = {}
        self._derived: List[Coframe] = []

    def __repr__(self):
        return f"Metric({self.name} on {self.manifold.name}, coframes={[c.name for c in self._comps]})"

    def set_comp(self, coframe: Coframe, i: int, j: int, value: ExprLike):
        n = self.manifold.dim
        matrix = self._comps.setdefault(coframe, sp.zeros(n, n))
        value = canonicalize(as_expr(value))
        matrix[i, j] = value
        matrix[j, i] = value
        self._drop_derived(coframe)

    def set_matrix(self, coframe: Coframe, matrix: Union[sp.Matrix, Sequence[Sequence[ExprLike]]]):
        m = matrix if isinstance(matrix, sp.Matrix) else sp.Matrix([[as_expr(e) for e in row] for row in matrix])
        n = self.manifold.dim
        if m.shape != (n, n):
            raise ConnectionFormError(f"Metric needs a {n}x{n} matrix")
        m = m.applyfunc(canonicalize)
        if (m - m.T).applyfunc(canonicalize) != sp.zeros(n, n):
            raise ConnectionFormError(f"Metric {self.name} is not symmetric")
        self._comps[coframe] = m
        self._drop_derived(coframe)

    def _drop_derived(self, keep: Coframe):
        for stale in self._derived:
            if stale is not keep:
                self._comps.pop(stale, None)
        self._derived = []

    def coframes(self) -> List[Coframe]:
        return list(self._comps)

    def comp(self, coframe: Coframe) -> sp.Matrix:
        if coframe in self._comps:
            return self._comps[coframe]
        sources = sorted(self._comps, key=lambda c: c.chart is not coframe.chart)
        for source in sources:
            try:
                change = coframe_change_matrix(source, coframe)
                matrix = self._comps[source]
                if source.chart is not coframe.chart:
                    substitution = self.manifold.transition(coframe.chart, source.chart).substitution()
                    matrix = matrix.xreplace(substitution)
            except (FormError, GeometryError):
                continue
            converted = (change.T * matrix * change).applyfunc(canonicalize)
            self._comps[coframe] = converted
            self._derived.append(coframe)
            return converted
        raise ConnectionFormError(f"Metric {self.name} cannot be expressed in coframe {coframe.name}")

    def __getitem__(self, key) -> sp.Expr:
        coframe, i, j = key
        return self.comp(coframe)[i, j]

    def inverse(self, coframe: Coframe) -> sp.Matrix:
        return self.comp(coframe).inv(method="ADJ").applyfunc(canonicalize)

    def evaluate(self, u: Sequence[ExprLike], v: Sequence[ExprLike], coframe: Coframe) -> sp.Expr:
        g = self.comp(coframe)
        a = sp.Matrix([as_expr(x) for x in u])
        b = sp.Matrix([as_expr(x) for x in v])
        return canonicalize((a.T * g * b)[0, 0])

    def charts(self) -> List[Chart]:
        seen: List[Chart] = []
        for coframe in self._comps:
            if coframe.chart not in seen:
                seen.append(coframe.chart)
        return seen

    def conformal(self, factor: ScalarField, name: Optional[str] = None) -> 'Metric':
        """factor * g, on every coframe where g is given directly."""
        scaled = Metric(self.manifold, name or f"{self.name}'", self.signature)
        for coframe, matrix in self._comps.items():
            if coframe in self._derived:
                continue
            value = factor.expr(coframe.chart)
            scaled.set_matrix(coframe, (matrix * value).applyfunc(canonicalize))
        return scaled

    def display(self, coframe: Optional[Coframe] = None) -> str:
        coframe = coframe or next(iter(self._comps))
        g = self.comp(coframe)
        n = self.manifold.dim
        terms = []
        for i in range(n):
            for j in range(n):
                if g[i, j] == 0:
                    continue
                basis = f"{coframe.labels[i]}⊗{coframe.labels[j]}"
                text = to_text(g[i, j])
                terms.append(basis if text == "1" else f"-{basis}" if text == "-1" else f"({text}) {basis}")
        return f"{self.name} = {' + '.join(terms) if terms else '0'}"


class SmoothMap:
    def __init__(self, source: Manifold, target: Manifold, name: str = "f"):
        self.source = source
        self.target = target
        self.name = name
        self._exprs: Dict[Tuple[str, str], Tuple[sp.Expr, ...]] = {}

    def __repr__(self):
        return f"SmoothMap({self.name}: {self.source.name} -> {self.target.name})"

    def add_expr(self, source_chart: Union[str, Chart], target_chart: Union[str, Chart],
                 exprs: Sequence[ExprLike]):
        src = self.source.get_chart(source_chart)
        dst = self.target.get_chart(target_chart)
        if len(exprs) != self.target.dim:
            raise ConnectionFormError(f"Map {self.name} needs {self.target.dim} coordinate expressions")
        self._exprs[(src.name, dst.name)] = tuple(canonicalize(e) for e in exprs)

    def pairs(self) -> List[Tuple[Chart, Chart]]:
        return [(self.source.get_chart(s), self.target.get_chart(t)) for s, t in self._exprs]

    def expr(self, source_chart: Union[str, Chart], target_chart: Union[str, Chart]) -> Tuple[sp.Expr, ...]:
        key = (self.source.get_chart(source_chart).name, self.target.get_chart(target_chart).name)
        if key not in self._exprs:
            raise ConnectionFormError(f"Map {self.name} has no expression for charts {key}")
        return self._exprs[key]

    def jacobian(self, source_chart: Union[str, Chart], target_chart: Union[str, Chart]) -> sp.Matrix:
        """J[a, i] = d f^a / d x^i."""
        exprs = self.expr(source_chart, target_chart)
        coords = self.source.get_chart(source_chart).coords
        return sp.Matrix(len(exprs), len(coords), lambda a, i: canonicalize(sp.diff(exprs[a], coords[i])))

    def check_consistency(self, rng: Optional[random.Random] = None) -> bool:
        """Compares the chart expressions pairwise on overlaps by sampling."""
        pairs = self.pairs()
        for a, (src_a, dst_a) in enumerate(pairs):
            for src_b, dst_b in pairs[a + 1:]:
                source_related = src_a is src_b or self.source.has_transition(src_a, src_b)
                target_related = dst_a is dst_b or self.target.has_transition(dst_a, dst_b)
                if not (source_related and target_related):
                    continue
                moved = self.expr(src_a, dst_a)
                if dst_a is not dst_b:
                    moved = self.target.transition(dst_a, dst_b)(moved)
                pulled = {} if src_a is src_b else self.source.transition(src_a, src_b).substitution()
                for k, value in enumerate(self.expr(src_b, dst_b)):
                    if not equal_sym(moved[k], value.xreplace(pulled), rng=rng):
                        raise ConnectionFormError(
                            f"Map {self.name} disagrees between {src_a.name}->{dst_a.name} "
                            f"and {src_b.name}->{dst_b.name} in coordinate {dst_b.coord_names[k]}"
                        )
        return True

    def __call__(self, point: Point) -> Point:
        for src, dst in self.pairs():
            if src is point.chart:
                bindings = dict(zip(src.coords, point.coords))
                values = [canonicalize(e.xreplace(bindings)) for e in self.expr(src, dst)]
                return self.target.point(values, dst)
        raise ConnectionFormError(f"Map {self.name} has no expression on chart '{point.chart.name}'")


def pullback_metric(h: Metric, f: SmoothMap, name: Optional[str] = None) -> Metric:
    if h.manifold is not f.target:
        raise ConnectionFormError(f"Metric {h.name} does not live on the target of {f.name}")
    g = Metric(f.source, name or f"{f.name}^*{h.name}", h.signature)
    for src, dst in f.pairs():
        substitution = dict(zip(dst.coords, f.expr(src, dst)))
        target_matrix = h.comp(dst.coframe()).xreplace(substitution)
        jacobian = f.jacobian(src, dst)
        g.set_matrix(src.coframe(), (jacobian.T * target_matrix * jacobian).applyfunc(canonicalize))
    if not g.coframes():
        raise ConnectionFormError(f"Map {f.name} has no chart expressions")
    return g


def christoffel_symbols(g: Metric, chart: Chart) -> List[List[List[sp.Expr]]]:
    """gamma[k][i][j] = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)."""
    coords = chart.coords
    n = len(coords)
    metric = g.comp(chart.coframe())
    inverse = g.inverse(chart.coframe())
    derivative = [[[canonicalize(sp.diff(metric[i, j], coords[k])) for k in range(n)]
                   for j in range(n)] for i in range(n)]
    gamma = [[[sp.Integer(0)] * n for _ in range(n)] for _ in range(n)]
    for k in range(n):
        for i in range(n):
            for j in range(i, n):
                total = sum(inverse[k, l] * (derivative[j][l][i] + derivative[i][l][j] - derivative[i][j][l])
                            for l in range(n))
                value = canonicalize(total / 2)
                gamma[k][i][j] = value
                gamma[k][j][i] = value
    return gamma


def levi_civita(g: Metric, name: Optional[str] = None,
                charts: Optional[Sequence[Union[str, Chart]]] = None) -> BundleConnection:
    """
    Levi-Civita connection of `g` on the tangent bundle, in the coordinate
    frame of every chart where g is known: omega^j_i = Gamma^j_{ki} dx^k.
    """
    started = time.time()
    bundle = VectorBundle.tangent_bundle(g.manifold)
    connection = BundleConnection(bundle, name or f"nabla_{g.name}")
    targets = [g.manifold.get_chart(c) for c in charts] if charts else g.charts()
    n = g.manifold.dim
    for chart in targets:
        gamma = christoffel_symbols(g, chart)
        frame = bundle.coordinate_frame(chart)
        connection.declare_frame(frame)
        for j in range(n):
            for i in range(n):
                form = one_form(chart.coframe(), [gamma[j][k][i] for k in range(n)])
                if not form.is_zero():
                    connection.set_connection_form(j, i, form, frame)
    logger.info(f"Levi-Civita connection of {g.name} computed in {time.time() - started:.2f}s")
    return connection
