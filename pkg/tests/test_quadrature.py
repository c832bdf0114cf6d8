import math

import numpy as np
import pytest

from chern_weil.core.base.context import ComputationContext
from chern_weil.core.basic_models import AxisBounds
from chern_weil.core.errors import QuadratureError
from chern_weil.core.forms import DiffForm, one_form
from chern_weil.core.geometry import Manifold
from chern_weil.core.quadrature import IntegrationTask, integrate_top_form

PLANE = ["x=-inf..inf", "y=-inf..inf"]


@pytest.fixture
def plane():
    m = Manifold("R2", 2)
    return m.chart("X", ["x", "y"])


@pytest.fixture
def line():
    m = Manifold("R", 1)
    return m.chart("X", ["x"])


def _top(chart, coefficient):
    return DiffForm(chart.manifold, chart.manifold.dim, {chart.coframe(): {tuple(range(chart.manifold.dim)): coefficient}})


def test_zero_form_integrates_to_zero(plane):
    result = integrate_top_form(IntegrationTask.from_bounds(DiffForm(plane.manifold, 2), plane, PLANE))
    assert result.value == 0.0
    assert result.nodes == 0


def test_box_area(plane):
    task = IntegrationTask.from_bounds(_top(plane, 1), plane, ["x=0..1", "y=0..2"])
    assert task.run().value == pytest.approx(2.0, abs=1e-12)


def test_tautological_density_integrates_to_one(plane):
    form = _top(plane, "1/(pi*(1 + x^2 + y^2)^2)")
    result = integrate_top_form(IntegrationTask.from_bounds(form, plane, PLANE))
    assert result.value == pytest.approx(1.0, abs=1e-4)
    assert result.method == "gauss"
    assert result.nodes >= 128


def test_whole_line_shorthand(plane):
    assert AxisBounds.parse("x=inf") == AxisBounds("x", -math.inf, math.inf)
    assert AxisBounds.parse(" y = inf ") == AxisBounds("y", -math.inf, math.inf)
    form = _top(plane, "1/(pi*(1 + x^2 + y^2)^2)")
    result = IntegrationTask.from_bounds(form, plane, ["x=inf", "y=-inf..inf"]).run()
    assert result.value == pytest.approx(1.0, abs=1e-4)


def test_sphere_euler_density_integrates_to_two(plane):
    form = _top(plane, "2/(pi*(1 + x^2 + y^2)^2)")
    result = integrate_top_form(IntegrationTask.from_bounds(form, plane, PLANE, tolerance=1e-6))
    assert result.value == pytest.approx(2.0, abs=1e-5)


def test_linearity(plane):
    a = _top(plane, "exp(-x^2 - y^2)")
    b = _top(plane, "1/(1 + x^2 + y^2)^2")
    sum_value = integrate_top_form(IntegrationTask.from_bounds(a + b, plane, PLANE)).value
    separate = sum(integrate_top_form(IntegrationTask.from_bounds(f, plane, PLANE)).value for f in (a, b))
    assert sum_value == pytest.approx(separate, rel=1e-5)
    assert sum_value == pytest.approx(2 * math.pi, rel=1e-5)


def test_half_line(line):
    task = IntegrationTask.from_bounds(_top(line, "1/(1 + x^2)"), line, ["x=0..inf"])
    assert task.run().value == pytest.approx(math.pi / 2, rel=1e-5)


def test_adaptive_method(line):
    task = IntegrationTask.from_bounds(_top(line, "x^2"), line, ["x=0..1"], method="adaptive")
    result = task.run()
    assert result.method == "adaptive"
    assert result.value == pytest.approx(1 / 3, rel=1e-6)

    task = IntegrationTask.from_bounds(_top(line, "1/(pi*(1 + x^2))"), line, ["x=-inf..inf"], method="adaptive")
    assert task.run().value == pytest.approx(1.0, rel=1e-5)


def test_chart_restrictions_mask_the_box():
    m = Manifold("H", 1)
    chart = m.chart("half", ["x"], restrictions=["x > 0"])
    task = IntegrationTask.from_bounds(_top(chart, 1), chart, ["x=-1..1"])
    assert task.run().value == pytest.approx(1.0, abs=1e-9)


def test_opaque_functions_need_implementations(line):
    form = _top(line, "B'(x)")
    with pytest.raises(QuadratureError):
        IntegrationTask.from_bounds(form, line, ["x=0..1"]).run()
    context = ComputationContext(fn_impls={"B'": np.cos})
    task = IntegrationTask.from_bounds(form, line, ["x=0..1"], context=context)
    assert task.run().value == pytest.approx(math.sin(1.0), rel=1e-8)


def test_non_top_degree_is_rejected(plane):
    form = one_form(plane.coframe(), ["x", "y"])
    with pytest.raises(QuadratureError, match="top-degree"):
        IntegrationTask.from_bounds(form, plane, PLANE).run()


def test_complex_integral_is_rejected(plane):
    with pytest.raises(QuadratureError, match="not real"):
        IntegrationTask.from_bounds(_top(plane, "I"), plane, ["x=0..1", "y=0..1"]).run()


@pytest.mark.parametrize("bounds", [
    ["x=1..0", "y=0..1"],
    ["x=0..1"],
    ["x=0..1", "q=0..1"],
    ["x0..1", "y=0..1"],
    ["x=3", "y=0..1"],
])
def test_bad_bounds(plane, bounds):
    with pytest.raises(QuadratureError):
        IntegrationTask.from_bounds(_top(plane, 1), plane, bounds).run()


def test_unknown_method(plane):
    with pytest.raises(QuadratureError, match="method"):
        IntegrationTask.from_bounds(_top(plane, 1), plane, PLANE, method="montecarlo").run()


def test_divergent_integral_does_not_converge(line):
    with pytest.raises(QuadratureError, match="No convergence"):
        IntegrationTask.from_bounds(_top(line, "1/x^2"), line, ["x=0..1"]).run()


def test_tighter_tolerance_refines_the_estimate(line):
    form = _top(line, "exp(-x^2)")
    exact = math.sqrt(math.pi)
    results = [IntegrationTask.from_bounds(form, line, ["x=inf"], tolerance=t).run() for t in (1e-3, 1e-6, 1e-10)]
    nodes = [r.nodes for r in results]
    assert nodes == sorted(nodes)
    deviations = [abs(r.value - exact) for r in results]
    assert deviations[-1] <= deviations[0] + 1e-14
    for result, tolerance in zip(results, (1e-3, 1e-6, 1e-10)):
        assert result.error <= tolerance * max(1.0, abs(result.value))
        assert abs(result.value - exact) <= 10 * tolerance * exact


def test_integral_is_linear_on_random_polynomials(plane, np_rng):
    cf = plane.coframe()
    for _ in range(5):
        a, b = (int(c) for c in np_rng.integers(-4, 5, size=2))
        first = DiffForm(plane.manifold, 2, {cf: {(0, 1): f"{a}*x^2*y + 1"}})
        second = DiffForm(plane.manifold, 2, {cf: {(0, 1): f"{b}*x*y^2 - y"}})
        box = ["x=0..1", "y=-1..2"]
        whole = IntegrationTask.from_bounds(first + second, plane, box).run()
        parts = [IntegrationTask.from_bounds(f, plane, box).run() for f in (first, second)]
        assert whole.value == pytest.approx(sum(p.value for p in parts), abs=whole.error + sum(p.error for p in parts) + 1e-12)
