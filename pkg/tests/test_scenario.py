import pytest
import sympy as sp

from chern_weil.cli.scenario import ScenarioRunner, parse_scenario, split_top
from chern_weil.core.base.context import ComputationContext
from chern_weil.core.errors import GeometryError, ScenarioError
from chern_weil.core.symexpr import canonical_equal, parse
from conftest import read_scenario

x, y = sp.symbols("x y")

BAD_TRANSITION = """
[manifold.M]
dim = 1

[chart.a]
coords = u

[chart.b]
coords = v

[transition.t]
from = a
to = b
exprs = 2*u
inverse = v
"""


def _run(name, **kwargs):
    return ScenarioRunner(ComputationContext.seeded(0), **kwargs).run_text(read_scenario(name))


def _by_section(outcomes):
    found = {}
    for outcome in outcomes:
        found.setdefault(outcome.section, []).append(outcome)
    return found


def test_split_top_respects_parentheses():
    assert split_top("f(x, y), 2, (a, b)") == ["f(x, y)", "2", "(a, b)"]
    assert split_top("x=0..1; y=0..2", ";") == ["x=0..1", "y=0..2"]
    assert split_top("") == []


def test_parse_joins_continuation_lines():
    sections = parse_scenario("# header\n[frame.E]\nvectors = 1, 0;\n    0, 1\nchart = X  # trailing\n")
    assert len(sections) == 1
    assert sections[0].label == "frame.E"
    assert sections[0].get("vectors") == "1, 0; 0, 1"
    assert sections[0].get("chart") == "X"
    assert sections[0].entries["chart"][1] == 5


def test_parse_normalizes_index_keys():
    section = parse_scenario("[metric.g]\n1 , 2 = x\n")[0]
    assert section.indexed() == [((1, 2), "1,2", "x")]


@pytest.mark.parametrize("text, line, message", [
    ("[widget.w]\n", 1, "unknown section kind"),
    ("dim = 2\n", 1, "outside of any section"),
    ("[manifold.M]\ndim 2\n", 2, "key = value"),
    ("[manifold.M]\ndim = 2\ndim = 3\n", 3, "duplicate key"),
])
def test_parse_errors_carry_line_numbers(text, line, message):
    with pytest.raises(ScenarioError, match=message) as info:
        parse_scenario(text)
    assert info.value.line == line


def test_unknown_reference_points_at_the_key():
    text = "[manifold.M]\ndim = 2\n\n[chart.X]\nmanifold = N\ncoords = x, y\n"
    with pytest.raises(ScenarioError, match="unknown manifold 'N'") as info:
        ScenarioRunner().run_text(text)
    assert info.value.section == "chart.X"
    assert info.value.line == 5


def test_bad_expression_is_a_scenario_error():
    text = "[manifold.M]\ndim = 1\n[chart.X]\ncoords = x\n[point.p]\nchart = X\ncoords = 2*+\n"
    with pytest.raises(ScenarioError) as info:
        ScenarioRunner().run_text(text)
    assert info.value.line == 7


def test_engine_errors_are_tagged_with_the_section():
    with pytest.raises(GeometryError, match="does not invert") as info:
        ScenarioRunner().run_text(BAD_TRANSITION)
    assert info.value.section == "transition.t"
    assert info.value.line == 11


def test_metric_indices_respect_start_index():
    text = "[manifold.M]\ndim = 2\nstart_index = 1\n[chart.X]\ncoords = x, y\n[metric.g]\ncoframe = X\n0,0 = 1\n"
    with pytest.raises(ScenarioError, match="indices start at 1"):
        ScenarioRunner().run_text(text)


def test_moebius_scenario():
    found = _by_section(_run("moebius.scn"))

    det = found["trivialization_map.transf"][0]
    assert det.kind == "det"
    assert det.data["det"]["hu"] == "u"
    assert canonical_equal(parse(det.data["det"]["hv"]), 1 / sp.Symbol("v"))

    sigma_frames = [o.data["frame"] for o in found["section.sigma"]]
    assert sigma_frames == ["psiU", "psiV"]
    sigma_v = found["section.sigma"][1].data["components"][0]
    v = sp.Symbol("v")
    assert canonical_equal(parse(sigma_v), (v - 1) / (v ** 2 + 1))

    assert found["evaluate.sigma_p"][0].data["components"] == ["1"]
    assert found["evaluate.tau_p"][0].data["components"] == ["-1"]
    assert found["evaluate.sum_p"][0].data["components"] == ["0"]
    assert found["evaluate.sigma_p"][0].text == "sigma(p) = (psiU^*e_1)"


def test_minkowski_chern_character():
    found = _by_section(_run("minkowski_ch.scn"))
    assert found["class.ch"][0].kind == "class"
    outcome = found["compute.ch"][0]
    assert outcome.kind == "form"
    components = outcome.data["components"]
    assert components["0"] == {"": "1"}
    assert components["1"] == {}
    assert canonical_equal(parse(components["2"]["0,1"]), parse("A'(t)") / (2 * sp.pi))
    assert outcome.form is not None and outcome.integral is None


def test_tautological_chern_class_integrates_to_one():
    outcome = _by_section(_run("tautological_chern.scn"))["compute.c"][0]
    z, zbar = sp.symbols("z zbar")
    assert canonical_equal(parse(outcome.data["components"]["2"]["0,1"]), sp.I / (2 * sp.pi * (1 + z * zbar) ** 2))
    assert outcome.integral.value == pytest.approx(1.0, abs=1e-4)
    assert outcome.data["integral"]["method"] == "gauss"


def test_round_sphere_euler_class():
    found = _by_section(_run("s2_euler.scn"))
    assert found["metric.g"][0].kind == "metric"
    curvature = found["curvature.Omega_N"][0]
    assert set(curvature.data["entries"]) == {"1,1", "1,2", "2,1", "2,2"}
    assert canonical_equal(parse(curvature.data["entries"]["1,2"]["0,1"]), 4 / (1 + x ** 2 + y ** 2) ** 2)

    outcome = found["compute.euler"][0]
    assert canonical_equal(parse(outcome.data["components"]["2"]["0,1"]), 2 / (sp.pi * (1 + x ** 2 + y ** 2) ** 2))
    assert outcome.integral.value == pytest.approx(2.0, abs=1e-4)


def test_conformal_sphere_keeps_euler_characteristic():
    outcome = _by_section(_run("s2_euler_conformal.scn"))["compute.euler2"][0]
    assert not canonical_equal(parse(outcome.data["components"]["2"]["0,1"]),
                               2 / (sp.pi * (1 + x ** 2 + y ** 2) ** 2))
    assert outcome.integral.value == pytest.approx(2.0, abs=1e-2)


def test_long_computation_is_skipped_by_default():
    text = read_scenario("minkowski_ch.scn").rstrip() + "\nlong = yes\n"
    found = _by_section(ScenarioRunner(ComputationContext.seeded(0)).run_text(text))
    assert found["compute.ch"][0].kind == "skipped"
    assert found["compute.ch"][0].form is None
    assert found["class.ch"][0].data["class_type"] == "additive"


@pytest.mark.long
def test_berger_ahat_top_degree():
    outcome = _by_section(_run("berger_ahat.scn", long=True))["compute.ahat"][0]
    expected = parse("(4*(a(t)^3 - a(t))*a'(t) - a'(t)*a''(t))/(24*pi^2)")
    assert canonical_equal(parse(outcome.data["components"]["4"]["0,1,2,3"]), expected)


def test_runner_integrate_lookup_errors():
    runner = ScenarioRunner(ComputationContext.seeded(0))
    runner.run_text(read_scenario("minkowski_ch.scn"))
    with pytest.raises(ScenarioError, match="no computed form"):
        runner.integrate("missing", "X", ["t=0..1", "x=0..1"])
    with pytest.raises(ScenarioError, match="unknown chart"):
        runner.integrate("ch", "Y", ["t=0..1", "x=0..1"])
