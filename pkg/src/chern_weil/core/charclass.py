import logging
import threading
import time
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import sympy as sp

from chern_weil.core.base.context import ComputationContext
from chern_weil.core.base.invariant import InvariantPolynomial
from chern_weil.core.basic_models import ClassDescriptor
from chern_weil.core.bundle import LocalFrame, VectorBundle
from chern_weil.core.config import config
from chern_weil.core.connection import BundleConnection, CurvatureMatrix, FormMatrix
from chern_weil.core.errors import (
    BundleError, CharClassError, EvaluationError, FormError, GluingConflictError, SeriesError
)
from chern_weil.core.forms import DiffForm, MixedForm
from chern_weil.core.invariants.factory import InvariantFactory
from chern_weil.core.series import (
    CLASS_TYPES, Coefficient, PowerSeries, ahat_series, exp_series, hirzebruch_series,
    polynomial_series, taylor, todd_series
)
from chern_weil.core.symexpr import (
    ExprLike, as_expr, canonical_equal, canonicalize, eval_numeric, to_latex, to_text
)

logger = logging.getLogger(__name__)

PREDEFINED: Dict[str, ClassDescriptor] = {
    "Chern": ClassDescriptor("Chern", "complex", "multiplicative", "1 + x", "c", "c"),
    "ChernChar": ClassDescriptor("ChernChar", "complex", "additive", "exp(x)", "ch", "\\mathrm{ch}"),
    "Todd": ClassDescriptor("Todd", "complex", "multiplicative", "x/(1 - exp(-x))", "Td", "\\mathrm{Td}"),
    "Pontryagin": ClassDescriptor("Pontryagin", "real", "multiplicative", "1 + x", "p", "p"),
    "AHat": ClassDescriptor("AHat", "real", "multiplicative", "sqrt(x)/(2*sinh(sqrt(x)/2))", "A^", "\\hat{A}"),
    "Hirzebruch": ClassDescriptor("Hirzebruch", "real", "multiplicative", "sqrt(x)/tanh(sqrt(x))", "L", "L"),
    "Euler": ClassDescriptor("Euler", "real", "pfaffian", "x", "e", "e"),
}

# Exact series in z for the predefined functions; no symbolic sqrt involved
_EXACT_SERIES: Dict[str, Callable[[int], PowerSeries]] = {
    "Chern": lambda order: polynomial_series([1, 1], order),
    "ChernChar": exp_series,
    "Todd": todd_series,
    "Pontryagin": lambda order: polynomial_series([1, 1], order),
    "AHat": ahat_series,
    "Hirzebruch": hirzebruch_series,
    "Euler": lambda order: polynomial_series([0, 1], order),
}

_ALIASES = {d.symbol.lower(): key for key, d in PREDEFINED.items()}
_ALIASES.update({key.lower(): key for key in PREDEFINED})
_ALIASES.update({"a-hat": "AHat", "ahat": "AHat", "l": "Hirzebruch", "chern_character": "ChernChar"})


def resolve_predefined(name: str) -> ClassDescriptor:
    key = _ALIASES.get(name.lower())
    if key is None:
        raise CharClassError(f"Unknown predefined class '{name}', expected one of {sorted(PREDEFINED)}")
    return PREDEFINED[key]


class CharacteristicForm(MixedForm):
    """Mixed form representing a characteristic class for one connection, glued over frame domains."""

    def __init__(self, char_class: 'CharClass', connection: BundleConnection):
        bundle = char_class.bundle
        super().__init__(
            bundle.base,
            name=f"{char_class.name}({bundle.name}, {connection.name})",
            latex_name=f"{char_class.latex_name}\\left({bundle.latex_name}, {connection.latex_name}\\right)",
        )
        self.char_class = char_class
        self.connection = connection
        self.frames: List[str] = []

    def degree(self, k: int) -> DiffForm:
        if not 0 <= k <= self.manifold.dim:
            raise CharClassError(f"{self.name} has no degree-{k} part on a {self.manifold.dim}-manifold")
        return self.parts[k]

    def glue(self, local: MixedForm, frame: LocalFrame, context: ComputationContext):
        """Adds the result on one frame domain, checking agreement with what is already known."""
        for k, (mine, theirs) in enumerate(zip(self.parts, local.parts)):
            for coframe in theirs.coframes():
                incoming = theirs.comp(coframe)
                if coframe in mine.coframes():
                    self._check_agreement(k, mine.comp(coframe), incoming, coframe, frame, context)
                    continue
                for known in [c for c in mine.coframes() if c is not None and coframe is not None]:
                    if known.chart is coframe.chart or not known.manifold.has_transition(known.chart, coframe.chart):
                        continue
                    try:
                        moved = theirs.comp(known)
                    except FormError:
                        continue
                    self._check_agreement(k, mine.comp(known), moved, known, frame, context)
                mine._comps[coframe] = dict(incoming)
        self.frames.append(frame.name)

    def _check_agreement(self, degree, existing, incoming, coframe, frame, context: ComputationContext):
        for key in set(existing) | set(incoming):
            a = existing.get(key, sp.Integer(0))
            b = incoming.get(key, sp.Integer(0))
            verdict = context.equal(a, b)
            if not verdict:
                raise GluingConflictError(
                    f"{self.name}: degree-{degree} component {key} in "
                    f"{coframe.name if coframe else 'constant'} disagrees on frame '{frame.name}': "
                    f"{to_text(a)} vs {to_text(b)}")


class CharClass:
    def __init__(self, bundle: VectorBundle, class_type: str, function: ExprLike, name: str,
                 latex_name: Optional[str] = None, predefined: Optional[str] = None):
        if class_type not in CLASS_TYPES:
            raise CharClassError(f"Unknown class type '{class_type}', expected one of {CLASS_TYPES}")
        if class_type == "pfaffian":
            if bundle.field != "real":
                raise CharClassError("Pfaffian classes need a real bundle")
            if bundle.rank % 2:
                raise CharClassError(f"Pfaffian classes need even rank, got {bundle.rank}")
        self.bundle = bundle
        self.class_type = class_type
        self.g = as_expr(function)
        self.name = name
        self.latex_name = latex_name or name
        self.predefined = predefined
        self.invariant: InvariantPolynomial = InvariantFactory.create(class_type)
        self.order = bundle.base.dim // 2
        self._coefficients: Optional[List[Coefficient]] = None
        self._forms: Dict[Tuple[BundleConnection, Tuple[str, ...]], CharacteristicForm] = {}
        self._lock = threading.Lock()

    def __repr__(self):
        return f"CharClass({self.name}, {self.class_type}, {self.bundle.name})"

    def function(self) -> sp.Expr:
        return self.g

    def epsilon(self) -> sp.Expr:
        return self.invariant.epsilon()

    def series(self) -> PowerSeries:
        if self.predefined in _EXACT_SERIES:
            return _EXACT_SERIES[self.predefined](self.order)
        return taylor(self.g, self.order)

    def coefficients(self) -> List[Coefficient]:
        """Coefficients of f, the function applied to Omega / (2 pi epsilon)."""
        if self._coefficients is None:
            try:
                self._coefficients = self.invariant.coefficients(self.series(), self.bundle.field, self.order)
            except SeriesError as e:
                raise CharClassError(f"Class {self.name}: {e}") from e
        return self._coefficients

    def describe(self) -> str:
        field = "Complex" if self.bundle.field == "complex" else "Real"
        return (f"Characteristic class {self.name} of {self.class_type} type "
                f"associated with {to_text(self.g)} on the {field} vector bundle "
                f"{self.bundle.name} -> {self.bundle.base.name} of rank {self.bundle.rank}")

    def to_dict(self):
        return {
            "name": self.name,
            "latex_name": self.latex_name,
            "class_type": self.class_type,
            "function": to_text(self.g),
            "bundle": self.bundle.name,
            "coefficients": [str(c) for c in self.coefficients()],
        }

    # --- evaluation ---

    def get_form(self, connection: BundleConnection,
                 curvature_override: Optional[Dict[Union[str, LocalFrame], Union[CurvatureMatrix, FormMatrix]]] = None,
                 context: Optional[ComputationContext] = None) -> CharacteristicForm:
        if connection.bundle is not self.bundle:
            raise CharClassError(f"Connection {connection.name} is not on bundle {self.bundle.name}")
        context = context or ComputationContext()
        wanted = tuple(context.frames) if context.frames else ()
        key = (connection, wanted)
        with self._lock:
            if curvature_override is None and config.CLASSES_CACHE and key in self._forms:
                return self._forms[key]

            started = time.time()
            logger.info(f"Starting {self.name} form of {self.bundle.name} with {connection.name}...")
            matrices = self._curvatures(connection, curvature_override, wanted)
            result = CharacteristicForm(self, connection)
            reference = matrices[0][0]
            for frame, entries in matrices:
                local = self.evaluate_on(entries)
                if self.class_type == "pfaffian":
                    self.invariant.validate(entries, context)
                    if self._orientation_sign(reference, frame, context) < 0:
                        local = -local
                result.glue(local, frame, context)
            elapsed = time.time() - started
            context.record(result.name, elapsed)
            logger.info(f"Finished {result.name} in {elapsed:.2f}s")

            if curvature_override is None:
                self._forms[key] = result
            return result

    def _curvatures(self, connection, override, wanted) -> List[Tuple[LocalFrame, FormMatrix]]:
        out = []
        if override is not None:
            for frame, matrix in override.items():
                f = self.bundle.get_frame(frame)
                entries = matrix.rows() if isinstance(matrix, CurvatureMatrix) else matrix
                if len(entries) != self.bundle.rank or any(len(r) != self.bundle.rank for r in entries):
                    raise CharClassError(f"Curvature matrix for '{f.name}' must be {self.bundle.rank}x{self.bundle.rank}")
                out.append((f, entries))
        else:
            for f in connection.frames():
                if wanted and f.name not in wanted:
                    continue
                out.append((f, connection.curvature_matrix(f).rows()))
        if not out:
            raise CharClassError(f"No frames to evaluate {self.name} on")
        return out

    def _orientation_sign(self, reference: LocalFrame, frame: LocalFrame, context: ComputationContext) -> int:
        """
        Sign of det of the change from `reference` to `frame`, sampled on the chart of the change.
        The Pfaffian picks up this sign under a frame change, so frames of opposite
        orientation are flipped before gluing.
        """
        if frame.name == reference.name:
            return 1
        try:
            change = self.bundle.frame_change(reference, frame)
        except BundleError:
            logger.debug(f"No frame change {reference.name} -> {frame.name}, keeping local orientation")
            return 1
        det = canonicalize(change.matrix.det(method="berkowitz"))
        signs = set()
        for _ in range(config.EQUAL_SYM_TRIALS):
            values = [context.rng.uniform(config.SAMPLE_LOW, config.SAMPLE_HIGH) for _ in change.chart.coords]
            if not change.chart.contains(values):
                continue
            try:
                value = eval_numeric(det, dict(zip(change.chart.coord_names, values)), context.fn_impls)
            except EvaluationError:
                continue
            if abs(value) < config.DENOMINATOR_REJECT:
                continue
            signs.add(1 if value.real > 0 else -1)
        if len(signs) > 1:
            raise CharClassError(f"Frames {reference.name} and {frame.name} do not induce compatible orientations")
        return signs.pop() if signs else 1

    def evaluate_on(self, curvature: FormMatrix) -> MixedForm:
        """Evaluates the invariant polynomial on f(Omega / (2 pi epsilon)) on one frame domain."""
        manifold = self.bundle.base
        n = self.bundle.rank
        factor = 1 / (2 * sp.pi * self.epsilon())
        normalized = [[MixedForm.of(curvature[i][j].scale(factor)) for j in range(n)] for i in range(n)]
        return self.invariant.evaluate(functional_calculus(self.coefficients(), normalized, manifold))


def _identity(manifold, n: int) -> List[List[MixedForm]]:
    return [[MixedForm.constant(manifold, 1 if i == j else 0) for j in range(n)] for i in range(n)]


def _matmul(a: List[List[MixedForm]], b: List[List[MixedForm]], manifold) -> List[List[MixedForm]]:
    n = len(a)
    out = []
    for i in range(n):
        row = []
        for j in range(n):
            total = MixedForm(manifold)
            for k in range(n):
                if a[i][k].is_zero() or b[k][j].is_zero():
                    continue
                total = total + a[i][k].wedge(b[k][j])
            row.append(total)
        out.append(row)
    return out


def functional_calculus(coefficients: Sequence[Coefficient], matrix: List[List[MixedForm]],
                        manifold) -> List[List[MixedForm]]:
    """sum_k c_k X^k for a matrix X of even forms; powers beyond the top degree vanish."""
    n = len(matrix)
    power = _identity(manifold, n)
    result = [[power[i][j].scale(as_expr(coefficients[0])) for j in range(n)] for i in range(n)]
    for k in range(1, len(coefficients)):
        power = _matmul(power, matrix, manifold)
        c = as_expr(coefficients[k])
        if c == 0:
            continue
        result = [[result[i][j] + power[i][j].scale(c) for j in range(n)] for i in range(n)]
    return result


_registry_lock = threading.Lock()
_registry: Dict[Tuple[int, str, str, str], CharClass] = {}


def char_class(bundle: VectorBundle, class_type: Optional[str] = None, function: Optional[ExprLike] = None,
               name: Optional[str] = None, latex_name: Optional[str] = None,
               predefined: Optional[str] = None) -> CharClass:
    """Returns the unique CharClass for (bundle, type, function, name)."""
    key_name = None
    if predefined is not None:
        descriptor = resolve_predefined(predefined)
        if descriptor.field != bundle.field:
            raise CharClassError(f"{descriptor.name} is defined for {descriptor.field} bundles, "
                                 f"{bundle.name} is {bundle.field}")
        class_type = descriptor.class_type
        function = descriptor.function
        name = name or descriptor.symbol
        latex_name = latex_name or descriptor.latex
        key_name = descriptor.name
    if class_type is None or function is None or name is None:
        raise CharClassError("A class needs a type, a function and a name, or a predefined name")
    g = as_expr(function)
    key = (id(bundle), class_type, to_text(g), name)
    with _registry_lock:
        existing = _registry.get(key)
        if existing is not None and existing.bundle is bundle:
            return existing
        created = CharClass(bundle, class_type, g, name, latex_name, key_name)
        _registry[key] = created
        return created
