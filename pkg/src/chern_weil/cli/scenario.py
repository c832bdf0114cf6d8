"""
Scenario files: a line-oriented sectioned format.

    # comment
    [chart.stereoN]
    manifold = S2
    coords = x, y

Values that continue on indented lines are joined to the previous key.
Sections are executed top to bottom; every named object must be declared
before it is used.
"""
import dataclasses
import logging
import re
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import sympy as sp

from chern_weil.core.base.context import ComputationContext
from chern_weil.core.basic_models import IntegrationResult
from chern_weil.core.bundle import LocalFrame, Section, Trivialization, VectorBundle
from chern_weil.core.charclass import CharacteristicForm, CharClass, char_class
from chern_weil.core.connection import (
    BundleConnection, Metric, SmoothMap, levi_civita, pullback_metric
)
from chern_weil.core.errors import ChernWeilError, ExpressionSyntaxError, ScenarioError
from chern_weil.core.forms import Coframe, one_form
from chern_weil.core.geometry import Chart, Manifold, Point
from chern_weil.core.quadrature import IntegrationTask, integrate_top_form
from chern_weil.core.symexpr import (
    as_expr, compile_numeric, declare_function, display_name, to_text
)

logger = logging.getLogger(__name__)

_HEADER_RE = re.compile(r"^\[([A-Za-z_]+)(?:\.([^\]\s]+))?\]$")
_ENTRY_RE = re.compile(r"^\d+\s*,\s*\d+$")
_YES = {"yes", "true", "1", "on"}

# Derivative orders registered for numeric implementations of opaque functions
NUMERIC_DERIVATIVES = 4


def split_top(text: str, separator: str = ",") -> List[str]:
    """Splits at separators outside parentheses."""
    parts, depth, current = [], 0, []
    for char in text:
        if char == "(":
            depth += 1
        elif char == ")":
            depth -= 1
        if char == separator and depth == 0:
            parts.append("".join(current).strip())
            current = []
        else:
            current.append(char)
    tail = "".join(current).strip()
    if tail or parts:
        parts.append(tail)
    return [p for p in parts if p != ""]


@dataclass
class ScenarioSection:
    kind: str
    name: Optional[str]
    line: int
    entries: Dict[str, Tuple[str, int]] = field(default_factory=dict)

    @property
    def label(self) -> str:
        return f"{self.kind}.{self.name}" if self.name else self.kind

    def fail(self, message: str, key: Optional[str] = None) -> ScenarioError:
        line = self.entries[key][1] if key in self.entries else self.line
        return ScenarioError(message, line, self.label)

    def has(self, key: str) -> bool:
        return key in self.entries

    def get(self, key: str, default: Optional[str] = None) -> Optional[str]:
        return self.entries[key][0] if key in self.entries else default

    def require(self, key: str) -> str:
        if key not in self.entries:
            raise self.fail(f"missing key '{key}'")
        return self.entries[key][0]

    def flag(self, key: str) -> bool:
        return self.get(key, "no").lower() in _YES

    def integer(self, key: str, default: Optional[int] = None) -> int:
        text = self.get(key)
        if text is None:
            if default is None:
                raise self.fail(f"missing key '{key}'")
            return default
        try:
            return int(text)
        except ValueError:
            raise self.fail(f"'{key}' must be an integer, got '{text}'", key)

    def names(self, key: str) -> List[str]:
        return split_top(self.require(key))

    def expr(self, key: str, text: Optional[str] = None) -> sp.Expr:
        source = self.require(key) if text is None else text
        try:
            return as_expr(source)
        except ExpressionSyntaxError as e:
            raise self.fail(f"{e} in '{source}'", key) from e

    def exprs(self, key: str) -> List[sp.Expr]:
        return [self.expr(key, part) for part in split_top(self.require(key))]

    def matrix(self, key: str) -> List[List[sp.Expr]]:
        """Rows separated by ';', entries by ','."""
        return [[self.expr(key, part) for part in split_top(row)] for row in split_top(self.require(key), ";")]

    def indexed(self) -> List[Tuple[Tuple[int, int], str, str]]:
        out = []
        for key in self.entries:
            if _ENTRY_RE.match(key):
                i, j = (int(p) for p in key.split(","))
                out.append(((i, j), key, self.entries[key][0]))
        return out


KINDS = (
    "manifold", "subset", "union", "chart", "transition", "function", "bundle", "frame",
    "frame_change", "trivialization", "trivialization_map", "section", "section_sum", "point",
    "evaluate", "map", "metric", "connection", "curvature", "class", "compute",
)


def parse_scenario(text: str) -> List[ScenarioSection]:
    sections: List[ScenarioSection] = []
    current: Optional[ScenarioSection] = None
    last_key: Optional[str] = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if line[0].isspace() and current is not None and last_key is not None:
            value, first = current.entries[last_key]
            current.entries[last_key] = (f"{value} {line.strip()}", first)
            continue
        line = line.strip()
        match = _HEADER_RE.match(line)
        if match:
            kind, name = match.groups()
            if kind not in KINDS:
                raise ScenarioError(f"unknown section kind '{kind}'", number, f"{kind}.{name}" if name else kind)
            current = ScenarioSection(kind, name, number)
            sections.append(current)
            last_key = None
            continue
        if current is None:
            raise ScenarioError("entry outside of any section", number)
        if "=" not in line:
            raise ScenarioError(f"expected 'key = value', got '{line}'", number, current.label)
        key, value = (part.strip() for part in line.split("=", 1))
        key = re.sub(r"\s+", "", key) if _ENTRY_RE.match(key.replace(" ", "")) else key
        if key in current.entries:
            raise ScenarioError(f"duplicate key '{key}'", number, current.label)
        current.entries[key] = (value, number)
        last_key = key
    return sections


@dataclass
class Outcome:
    """One rendered result of a scenario section."""
    section: str
    kind: str
    text: str
    latex: str = ""
    data: Dict[str, Any] = field(default_factory=dict)
    form: Optional[CharacteristicForm] = None
    coframe: Optional[Coframe] = None
    integral: Optional[IntegrationResult] = None


class ScenarioRunner:
    def __init__(self, context: Optional[ComputationContext] = None, long: bool = False,
                 tolerance: Optional[float] = None):
        self.context = context or ComputationContext()
        self.long = long
        self.tolerance = tolerance
        self.manifolds: Dict[str, Manifold] = {}
        self.charts: Dict[str, Chart] = {}
        self.bundles: Dict[str, VectorBundle] = {}
        self.frames: Dict[str, LocalFrame] = {}
        self.trivializations: Dict[str, Trivialization] = {}
        self.sections: Dict[str, Section] = {}
        self.points: Dict[str, Point] = {}
        self.maps: Dict[str, SmoothMap] = {}
        self.metrics: Dict[str, Metric] = {}
        self.connections: Dict[str, BundleConnection] = {}
        self.classes: Dict[str, CharClass] = {}
        self.forms: Dict[str, Outcome] = {}
        self.outcomes: List[Outcome] = []
        self._handlers: Dict[str, Callable[[ScenarioSection], None]] = {
            kind: getattr(self, f"_build_{kind}") for kind in KINDS
        }

    # --- driver ---

    def run(self, sections: List[ScenarioSection]) -> List[Outcome]:
        started = time.time()
        logger.info(f"Starting scenario with {len(sections)} sections...")
        for section in sections:
            logger.debug(f"Executing [{section.label}] (line {section.line})")
            try:
                self._handlers[section.kind](section)
            except ScenarioError:
                raise
            except ChernWeilError as e:
                e.section = section.label
                e.line = section.line
                raise
        logger.info(f"Finished scenario in {time.time() - started:.2f}s")
        return self.outcomes

    def run_text(self, text: str) -> List[Outcome]:
        return self.run(parse_scenario(text))

    # --- lookups ---

    def _lookup(self, table: Dict[str, Any], what: str, name: str, section: ScenarioSection, key: str):
        if name not in table:
            raise section.fail(f"unknown {what} '{name}'", key)
        return table[name]

    def _manifold(self, section: ScenarioSection) -> Manifold:
        if section.has("manifold"):
            return self._lookup(self.manifolds, "manifold", section.require("manifold"), section, "manifold")
        if not self.manifolds:
            raise section.fail("no manifold declared yet")
        return next(iter(self.manifolds.values()))

    def _chart(self, section: ScenarioSection, key: str, name: Optional[str] = None) -> Chart:
        return self._lookup(self.charts, "chart", name or section.require(key), section, key)

    def _bundle(self, section: ScenarioSection) -> VectorBundle:
        if section.has("bundle"):
            return self._lookup(self.bundles, "bundle", section.require("bundle"), section, "bundle")
        if not self.bundles:
            raise section.fail("no bundle declared yet")
        return next(iter(self.bundles.values()))

    def _frame(self, section: ScenarioSection, key: str, name: Optional[str] = None) -> LocalFrame:
        return self._lookup(self.frames, "frame", name or section.require(key), section, key)

    def _coframe(self, section: ScenarioSection, key: str) -> Coframe:
        """A chart name gives its coordinate coframe; a tangent frame gives its dual coframe."""
        name = section.require(key)
        if name in self.charts:
            return self.charts[name].coframe()
        frame = self.frames.get(name)
        if frame is None or frame.coframe is None:
            raise section.fail(f"'{name}' is neither a chart nor a tangent frame", key)
        return frame.coframe

    def _offset(self, manifold: Manifold, section: ScenarioSection, key: str, i: int, j: int) -> Tuple[int, int]:
        start = manifold.start_index
        if i < start or j < start:
            raise section.fail(f"indices start at {start}", key)
        return i - start, j - start

    def _emit(self, section: ScenarioSection, kind: str, text: str, latex: str = "", **data) -> Outcome:
        outcome = Outcome(section.label, kind, text, latex or text, data)
        self.outcomes.append(outcome)
        return outcome

    # --- geometry ---

    def _build_manifold(self, section: ScenarioSection):
        name = section.name or section.get("name", "M")
        if name in self.manifolds:
            raise section.fail(f"manifold '{name}' already declared")
        self.manifolds[name] = Manifold(
            name, section.integer("dim"), section.get("structure", "differentiable"),
            section.integer("start_index", 0),
        )

    def _build_subset(self, section: ScenarioSection):
        manifold = self._manifold(section)
        manifold.open_subset(section.name, section.get("within"))

    def _build_union(self, section: ScenarioSection):
        manifold = self._manifold(section)
        parts = section.names("of")
        if len(parts) != 2:
            raise section.fail("a union needs exactly two subsets", "of")
        target = None if section.name in (None, manifold.name) else section.name
        manifold.declare_union(parts[0], parts[1], target)

    def _build_chart(self, section: ScenarioSection):
        if section.name in self.charts:
            raise section.fail(f"chart '{section.name}' already declared")
        manifold = self._manifold(section)
        restrictions = split_top(section.get("restrictions", ""), ";")
        chart = manifold.chart(section.name, section.names("coords"), section.get("domain"), restrictions)
        self.charts[chart.name] = chart

    def _build_transition(self, section: ScenarioSection):
        source = self._chart(section, "from")
        target = self._chart(section, "to")
        manifold = source.manifold
        overlap = section.get("intersection")
        if overlap is not None and overlap not in manifold.subsets:
            manifold.declare_intersection(overlap, source.domain, target.domain)
        transition = manifold.add_transition(source, target, section.exprs("exprs"), section.exprs("inverse"), overlap)
        if section.flag("display"):
            self._emit(section, "transition", transition.display(),
                       map={c: to_text(e) for c, e in zip(target.coord_names, transition.exprs)})

    def _build_function(self, section: ScenarioSection):
        arity = section.integer("arity", 1)
        try:
            declare_function(section.name, arity)
        except ChernWeilError as e:
            raise section.fail(str(e), "arity") from e
        if not section.has("numeric"):
            return
        if arity != 1:
            raise section.fail("numeric implementations are supported for unary functions", "numeric")
        variable = sp.Symbol(section.get("variable", "x"))
        model = section.expr("numeric")
        for order in range(NUMERIC_DERIVATIVES + 1):
            key = display_name(section.name, (order,))
            self.context.fn_impls[key] = compile_numeric(sp.diff(model, variable, order), [variable])

    # --- bundles ---

    def _build_bundle(self, section: ScenarioSection):
        manifold = self._lookup(self.manifolds, "manifold", section.require("base"), section, "base") \
            if section.has("base") else self._manifold(section)
        if section.flag("tangent"):
            bundle = VectorBundle.tangent_bundle(manifold)
        else:
            bundle = VectorBundle(manifold, section.integer("rank"), section.get("field", "complex"),
                                  section.name or "E", section.get("latex"))
        self.bundles[section.name or bundle.name] = bundle

    def _build_frame(self, section: ScenarioSection):
        bundle = self._bundle(section)
        if section.has("coordinate"):
            frame = bundle.coordinate_frame(self._chart(section, "coordinate"))
        elif section.has("vectors"):
            frame = bundle.abstract_frame(section.name, self._chart(section, "chart"), section.matrix("vectors"),
                                          split_top(section.get("labels", "")) or None)
        else:
            chart = self._chart(section, "chart") if section.has("chart") else None
            frame = bundle.local_frame(section.name, section.get("domain"), chart,
                                       split_top(section.get("labels", "")) or None)
        self.frames[section.name] = frame
        self.frames.setdefault(frame.name, frame)

    def _build_frame_change(self, section: ScenarioSection):
        bundle = self._bundle(section)
        chart = self._chart(section, "chart") if section.has("chart") else None
        change = bundle.set_frame_change(self._frame(section, "from"), self._frame(section, "to"),
                                         section.matrix("matrix"), chart)
        if section.flag("show_det"):
            self._emit_det(section, change)

    def _build_trivialization(self, section: ScenarioSection):
        bundle = self._bundle(section)
        chart = self._chart(section, "chart") if section.has("chart") else None
        trivialization = bundle.trivialization(section.name, section.get("domain"), chart)
        self.trivializations[section.name] = trivialization
        self.frames[section.name] = trivialization.frame()

    def _build_trivialization_map(self, section: ScenarioSection):
        first = self._lookup(self.trivializations, "trivialization", section.require("from"), section, "from")
        second = self._lookup(self.trivializations, "trivialization", section.require("to"), section, "to")
        chart = self._chart(section, "chart") if section.has("chart") else None
        change = first.transition_map(second, section.matrix("matrix"), chart)
        if section.flag("show_det"):
            self._emit_det(section, change)

    def _emit_det(self, section: ScenarioSection, change):
        det = change.det()
        manifold = change.chart.manifold
        values = {}
        for chart in manifold.charts.values():
            if chart is change.chart or manifold.has_transition(chart, change.chart):
                values[chart.name] = det.expr(chart)
        lines = [f"det({change.source.name} -> {change.target.name}):"]
        lines += [f"  ({', '.join(manifold.get_chart(c).coord_names)}) |-> {to_text(e)}" for c, e in values.items()]
        self._emit(section, "det", "\n".join(lines), det={c: to_text(e) for c, e in values.items()})

    def _build_section(self, section: ScenarioSection):
        bundle = self._bundle(section)
        result = bundle.section(section.name, {self._frame(section, "frame"): section.exprs("components")},
                                section.get("latex"))
        for target in split_top(section.get("continue", "")):
            frame_name, _, overlap = target.partition("@")
            result.add_comp_by_continuation(self._frame(section, "continue", frame_name), overlap or None)
        self.sections[section.name] = result
        self._emit_section(section, result)

    def _build_section_sum(self, section: ScenarioSection):
        terms = [self._lookup(self.sections, "section", n, section, "of") for n in section.names("of")]
        if len(terms) < 2:
            raise section.fail("a sum needs at least two sections", "of")
        subtract = section.get("operation", "sum") == "difference"
        total = terms[0]
        for term in terms[1:]:
            total = total - term if subtract else total + term
        total.name = section.name
        self.sections[section.name] = total
        self._emit_section(section, total)

    def _emit_section(self, section: ScenarioSection, value: Section):
        for name in split_top(section.get("display", "")):
            frame = self._frame(section, "display", name)
            self._emit(section, "section", value.display(frame),
                       frame=frame.name, components=[to_text(c) for c in value.comp(frame)])

    def _build_point(self, section: ScenarioSection):
        chart = self._chart(section, "chart")
        self.points[section.name] = chart.manifold.point(section.exprs("coords"), chart, section.name)

    def _build_evaluate(self, section: ScenarioSection):
        value = self._lookup(self.sections, "section", section.require("section"), section, "section")
        point = self._lookup(self.points, "point", section.require("point"), section, "point")
        frame = self._frame(section, "frame") if section.has("frame") else None
        vector = value.at(point, frame)
        self._emit(section, "fiber", vector.display(), vector.display_latex(),
                   frame=vector.frame.name, components=[to_text(c) for c in vector.comps])

    # --- metrics and connections ---

    def _build_map(self, section: ScenarioSection):
        source = self._lookup(self.manifolds, "manifold", section.require("source"), section, "source")
        target = self._lookup(self.manifolds, "manifold", section.require("target"), section, "target")
        smooth = SmoothMap(source, target, section.name)
        for key in section.entries:
            if "->" not in key:
                continue
            src, dst = (part.strip() for part in key.split("->", 1))
            smooth.add_expr(self._chart(section, key, src), self._chart(section, key, dst), section.exprs(key))
        if section.flag("check"):
            smooth.check_consistency(self.context.rng)
        if not smooth.pairs():
            raise section.fail("a map needs at least one 'chart -> chart = exprs' entry")
        self.maps[section.name] = smooth

    def _build_metric(self, section: ScenarioSection):
        if section.has("pullback"):
            h = self._lookup(self.metrics, "metric", section.require("pullback"), section, "pullback")
            along = self._lookup(self.maps, "map", section.require("along"), section, "along")
            metric = pullback_metric(h, along, section.name)
        elif section.has("conformal"):
            base = self._lookup(self.metrics, "metric", section.require("conformal"), section, "conformal")
            chart = self._chart(section, "chart")
            factor = chart.manifold.scalar_field({chart: section.expr("factor")}, "factor")
            metric = base.conformal(factor, section.name)
        else:
            manifold = self._manifold(section)
            metric = Metric(manifold, section.name, section.get("signature", "Riemannian"))
            coframe = self._coframe(section, "coframe")
            entries = section.indexed()
            if not entries:
                raise section.fail("a metric needs 'i,j = expr' entries")
            for (i, j), key, _ in entries:
                a, b = self._offset(manifold, section, key, i, j)
                metric.set_comp(coframe, a, b, section.expr(key))
        self.metrics[section.name] = metric
        if section.flag("display"):
            coframe = self._coframe(section, "display_coframe") if section.has("display_coframe") else None
            self._emit(section, "metric", metric.display(coframe))

    def _build_connection(self, section: ScenarioSection):
        if section.has("levi_civita"):
            g = self._lookup(self.metrics, "metric", section.require("levi_civita"), section, "levi_civita")
            charts = [self._chart(section, "charts", n) for n in split_top(section.get("charts", ""))]
            connection = levi_civita(g, section.name, charts or None)
            if section.has("latex"):
                connection.latex_name = section.get("latex")
            tangent = connection.bundle
            self.bundles.setdefault(tangent.name, tangent)
            for frame in connection.frames():
                self.frames.setdefault(frame.name, frame)
        else:
            bundle = self._bundle(section)
            connection = BundleConnection(bundle, section.name, section.get("latex"))
            frame = self._frame(section, "frame")
            coframe = self._coframe(section, "coframe")
            connection.declare_frame(frame)
            for (i, j), key, _ in section.indexed():
                a, b = self._offset(bundle.base, section, key, i, j)
                connection.set_connection_form(a, b, one_form(coframe, section.exprs(key)), frame)
        for step in split_top(section.get("extend", "")):
            source, _, target = (part.strip() for part in step.partition("->"))
            change = connection.bundle.frame_change(self._frame(section, "extend", source),
                                                    self._frame(section, "extend", target))
            connection.add_frame_by_change(change)
        self.connections[section.name] = connection

    def _build_curvature(self, section: ScenarioSection):
        connection = self._lookup(self.connections, "connection", section.require("connection"), section, "connection")
        frame = self._frame(section, "frame")
        coframe = self._coframe(section, "display") if section.has("display") else None
        curvature = connection.curvature_matrix(frame)
        start = connection.bundle.base.start_index
        lines, data = [], {}
        for i in range(curvature.size):
            for j in range(curvature.size):
                label = f"Omega^{i + start}_{j + start}"
                lines.append(f"{label} = {curvature[i, j].display(coframe)}")
                data[f"{i + start},{j + start}"] = curvature[i, j].to_json(coframe)
        self._emit(section, "curvature", "\n".join(lines), frame=frame.name, entries=data)

    # --- characteristic classes ---

    def _build_class(self, section: ScenarioSection):
        bundle = self._bundle(section)
        if section.has("predefined"):
            result = char_class(bundle, predefined=section.require("predefined"),
                                name=section.get("name"), latex_name=section.get("latex"))
        else:
            result = char_class(bundle, section.require("type"), section.expr("function"),
                                section.get("name", section.name), section.get("latex"))
        self.classes[section.name] = result
        self._emit(section, "class", result.describe(), **result.to_dict())

    def _build_compute(self, section: ScenarioSection):
        if section.flag("long") and not self.long:
            logger.warning(f"Skipping [{section.label}]; pass --long to run it")
            self._emit(section, "skipped", "skipped (long computation, pass --long)")
            return
        cls = self._lookup(self.classes, "class", section.require("class"), section, "class")
        connection = self._lookup(self.connections, "connection", section.require("connection"),
                                  section, "connection")
        frames = [self._frame(section, "frames", n) for n in split_top(section.get("frames", ""))]
        context = dataclasses.replace(self.context, frames=[f.name for f in frames] or None)
        override = None
        if section.get("override") == "curvature":
            targets = frames or connection.frames()
            override = {f: connection.curvature_matrix(f) for f in targets}
        elif section.has("override"):
            raise section.fail("override must be 'curvature'", "override")
        form = cls.get_form(connection, override, context)
        coframe = self._coframe(section, "display") if section.has("display") else None
        outcome = self._emit(
            section, "form", f"{form.name} = {form.display_expansion(coframe)}",
            f"{form.latex_name} = {form.display_latex(coframe)}",
            name=form.name, components=form.to_json(coframe),
        )
        outcome.form = form
        outcome.coframe = coframe
        self.forms[section.name] = outcome
        if section.has("integrate"):
            bounds = split_top(section.require("bounds"), ";")
            tolerance = float(section.get("tolerance")) if section.has("tolerance") else self.tolerance
            self.integrate(section.name, section.require("integrate"), bounds, tolerance,
                           section.get("method", "gauss"))

    def integrate(self, name: str, chart_name: str, bounds: List[str], tolerance: Optional[float] = None,
                  method: str = "gauss") -> IntegrationResult:
        """Integrates the top-degree part of a computed form."""
        outcome = self.forms.get(name) or next((o for o in self.forms.values() if o.data.get("name") == name), None)
        if outcome is None:
            raise ScenarioError(f"no computed form named '{name}'")
        if chart_name not in self.charts:
            raise ScenarioError(f"unknown chart '{chart_name}'", section=outcome.section)
        chart = self.charts[chart_name]
        top = outcome.form[chart.manifold.dim]
        task = IntegrationTask.from_bounds(top, chart, bounds, tolerance=tolerance, method=method,
                                           context=self.context)
        result = integrate_top_form(task)
        outcome.integral = result
        outcome.data["integral"] = result.to_dict()
        return result
