import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from chern_weil.core.base.context import ComputationContext
from chern_weil.core.basic_models import AxisBounds, IntegrationResult
from chern_weil.core.config import config
from chern_weil.core.errors import EvaluationError, FormError, QuadratureError
from chern_weil.core.forms import DiffForm
from chern_weil.core.geometry import Chart
from chern_weil.core.symexpr import compile_numeric

logger = logging.getLogger(__name__)

METHODS = ("gauss", "adaptive")

# Upper bound on tensor grid size
MAX_GRID_POINTS = 2 ** 22


class _Axis:
    """Maps a quadrature variable on a finite interval to one coordinate axis."""

    def __init__(self, bounds: AxisBounds):
        self.bounds = bounds
        low, high = bounds.low, bounds.high
        if math.isfinite(low) and math.isfinite(high):
            self.kind = "finite"
            self.interval = (low, high)
        elif math.isfinite(low):
            self.kind = "upper"
            self.interval = (0.0, math.pi / 2)
        elif math.isfinite(high):
            self.kind = "lower"
            self.interval = (-math.pi / 2, 0.0)
        else:
            self.kind = "infinite"
            self.interval = (-math.pi / 2, math.pi / 2)

    def map(self, t):
        """Coordinate values and Jacobian factors for quadrature variable t."""
        if self.kind == "finite":
            return t, np.ones_like(t)
        secant = 1.0 / np.cos(t) ** 2
        offset = {"upper": self.bounds.low, "lower": self.bounds.high, "infinite": 0.0}[self.kind]
        return offset + np.tan(t), secant

    def rule(self, nodes: int) -> Tuple[np.ndarray, np.ndarray]:
        t, w = leggauss(nodes)
        low, high = self.interval
        half = (high - low) / 2
        return low + half * (t + 1), w * half


@dataclass
class IntegrationTask:
    form: DiffForm
    chart: Chart
    bounds: List[AxisBounds]
    tolerance: Optional[float] = None
    method: str = "gauss"
    context: ComputationContext = field(default_factory=ComputationContext)

    @staticmethod
    def from_bounds(form: DiffForm, chart: Chart, texts: Sequence[str], **kwargs) -> 'IntegrationTask':
        try:
            bounds = [AxisBounds.parse(t) for t in texts]
        except ValueError as e:
            raise QuadratureError(str(e)) from e
        return IntegrationTask(form, chart, bounds, **kwargs)

    def ordered_bounds(self) -> List[AxisBounds]:
        by_axis = {b.axis: b for b in self.bounds}
        unknown = set(by_axis) - set(self.chart.coord_names)
        if unknown:
            raise QuadratureError(f"Bounds for unknown axes {sorted(unknown)} of chart {self.chart.name}")
        missing = [c for c in self.chart.coord_names if c not in by_axis]
        if missing:
            raise QuadratureError(f"Missing bounds for axes {missing}")
        return [by_axis[c] for c in self.chart.coord_names]

    def run(self) -> IntegrationResult:
        return integrate_top_form(self)


def _integrand(task: IntegrationTask) -> Optional[Callable]:
    n = task.chart.manifold.dim
    if task.form.degree != n:
        raise QuadratureError(f"Only top-degree forms can be integrated, got degree {task.form.degree} on dim {n}")
    try:
        comps = task.form.comp(task.chart.coframe())
    except FormError as e:
        raise QuadratureError(f"Form cannot be expressed in chart {task.chart.name}: {e}") from e
    coefficient = comps.get(tuple(range(n)))
    if coefficient is None:
        return None
    try:
        return compile_numeric(coefficient, task.chart.coords, task.context.fn_impls)
    except EvaluationError as e:
        raise QuadratureError(str(e)) from e


def _mask(task: IntegrationTask, coords: Sequence[np.ndarray]) -> np.ndarray:
    mask = np.ones(np.shape(coords[0]), dtype=bool)
    for restriction in task.chart.restrictions:
        mask &= restriction.mask(task.chart.coords, coords)
    return mask


def _real_value(total: complex, tolerance: float) -> float:
    if abs(total.imag) > max(tolerance, 1e-9 * abs(total.real)):
        raise QuadratureError(f"Integral is not real: {total}")
    return total.real


def _tensor_gauss(task: IntegrationTask, axes: List[_Axis], function: Callable, nodes: int) -> complex:
    rules = [axis.rule(nodes) for axis in axes]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    weights = np.ones_like(grids[0])
    for k, (_, w) in enumerate(rules):
        shape = [1] * len(axes)
        shape[k] = nodes
        weights = weights * w.reshape(shape)
    coords = []
    for axis, grid in zip(axes, grids):
        value, jacobian = axis.map(grid)
        coords.append(value)
        weights = weights * jacobian
    with np.errstate(all="ignore"):
        values = np.broadcast_to(np.asarray(function(*coords), dtype=complex), grids[0].shape)
    mask = _mask(task, coords)
    values = values[mask]
    if not np.all(np.isfinite(values)):
        raise QuadratureError("Integrand is not finite at a quadrature node")
    products = (values * weights[mask]).ravel()
    return complex(math.fsum(products.real), math.fsum(products.imag))


def _gauss(task: IntegrationTask, axes: List[_Axis], function: Callable, tolerance: float) -> IntegrationResult:
    nodes = config.QUAD_NODES
    previous = _tensor_gauss(task, axes, function, nodes)
    while True:
        nodes *= 2
        if nodes > config.QUAD_MAX_NODES or nodes ** len(axes) > MAX_GRID_POINTS:
            raise QuadratureError(f"No convergence to {tolerance} with {nodes // 2} nodes per axis "
                                  f"(last estimate {previous})")
        current = _tensor_gauss(task, axes, function, nodes)
        error = abs(current - previous)
        logger.debug(f"{nodes} nodes per axis: {current} (change {error:.3e})")
        if error <= tolerance * max(1.0, abs(current)):
            return IntegrationResult(_real_value(current, tolerance), error, nodes, "gauss")
        previous = current


def _adaptive(task: IntegrationTask, axes: List[_Axis], function: Callable, tolerance: float) -> IntegrationResult:
    def part(selector):
        def scalar(*ts):
            coords = []
            factor = 1.0
            for axis, t in zip(axes, ts):
                value, jacobian = axis.map(np.asarray(t))
                coords.append(value)
                factor *= float(jacobian)
            if not bool(_mask(task, coords)):
                return 0.0
            return float(selector(complex(function(*coords)))) * factor
        return scalar

    ranges = [axis.interval for axis in axes]
    options = {"epsabs": tolerance, "epsrel": tolerance}
    real, real_error = integrate.nquad(part(lambda z: z.real), ranges, opts=options)
    imag, imag_error = integrate.nquad(part(lambda z: z.imag), ranges, opts=options)
    value = _real_value(complex(real, imag), max(tolerance, imag_error))
    return IntegrationResult(value, real_error, 0, "adaptive")


def integrate_top_form(task: IntegrationTask) -> IntegrationResult:
    """Integrates a top-degree form over a coordinate box of task.chart."""
    if task.method not in METHODS:
        raise QuadratureError(f"Unknown quadrature method '{task.method}', expected one of {METHODS}")
    tolerance = task.tolerance if task.tolerance is not None else config.QUAD_TOLERANCE
    axes = [_Axis(b) for b in task.ordered_bounds()]
    function = _integrand(task)
    if function is None:
        return IntegrationResult(0.0, 0.0, 0, task.method)

    started = time.time()
    logger.info(f"Starting {task.method} quadrature of {task.form.name or 'form'} over chart {task.chart.name}...")
    if task.method == "gauss":
        result = _gauss(task, axes, function, tolerance)
    else:
        result = _adaptive(task, axes, function, tolerance)
    logger.info(f"Finished in {time.time() - started:.2f}s: {result.value} (error {result.error:.2e})")
    return result
