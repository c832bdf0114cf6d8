from itertools import combinations

import pytest
import sympy as sp

from chern_weil.core.errors import FormError
from chern_weil.core.forms import Coframe, DiffForm, MixedForm, coframe_change_matrix, one_form
from chern_weil.core.geometry import Manifold
from chern_weil.core.symexpr import canonical_equal

x, y, z = sp.symbols("x y z")


@pytest.fixture
def plane():
    m = Manifold("R2", 2)
    m.chart("X", ["x", "y"])
    return m


@pytest.fixture
def space():
    m = Manifold("R3", 3)
    m.chart("X", ["x", "y", "z"])
    return m


def _mixed(manifold, coframe):
    a = MixedForm(manifold, [
        DiffForm.scalar(coframe.chart, "x^2"),
        one_form(coframe, ["y", "2*x"]),
        DiffForm(manifold, 2, {coframe: {(0, 1): "4*x^3"}}),
    ])
    b = MixedForm(manifold, [
        DiffForm.scalar(coframe.chart, 2),
        one_form(coframe, ["x", "y"]),
    ])
    return a, b


def test_repeated_covector_wedges_to_zero(plane):
    dx = plane.get_chart("X").coframe().covector(0)
    assert dx.wedge(dx).is_zero()


def test_one_form_wedge(plane):
    cf = plane.get_chart("X").coframe()
    a = one_form(cf, ["y", "2*x"])
    b = one_form(cf, ["x", "y"])
    assert canonical_equal(a.wedge(b)[cf, (0, 1)], y ** 2 - 2 * x ** 2)
    assert canonical_equal(a.wedge(b)[cf, (1, 0)], 2 * x ** 2 - y ** 2)


def test_wedge_matches_antisymmetrization(space, np_rng):
    cf = space.get_chart("X").coframe()
    monomials = [x, y, z, x * y, y * z, x * z, sp.Integer(1)]

    def random_poly():
        coeffs = np_rng.integers(-3, 4, size=len(monomials))
        return sum((int(c) * m for c, m in zip(coeffs, monomials)), sp.Integer(0))

    for _ in range(3):
        a = [random_poly() for _ in range(3)]
        b = [random_poly() for _ in range(3)]
        product = one_form(cf, a).wedge(one_form(cf, b))
        for i, j in combinations(range(3), 2):
            assert canonical_equal(product[cf, (i, j)], a[i] * b[j] - a[j] * b[i])


def test_wedge_of_mixed_forms(plane):
    cf = plane.get_chart("X").coframe()
    a, b = _mixed(plane, cf)

    ab = a.wedge(b)
    assert canonical_equal(ab[0][cf, ()], 2 * x ** 2)
    assert canonical_equal(ab[1][cf, (0,)], x ** 3 + 2 * y)
    assert canonical_equal(ab[1][cf, (1,)], x ** 2 * y + 4 * x)
    assert canonical_equal(ab[2][cf, (0, 1)], 8 * x ** 3 - 2 * x ** 2 + y ** 2)

    ba = b.wedge(a)
    assert canonical_equal(ba[2][cf, (0, 1)], 8 * x ** 3 + 2 * x ** 2 - y ** 2)


def test_unit_of_mixed_algebra(plane):
    cf = plane.get_chart("X").coframe()
    a, _ = _mixed(plane, cf)
    assert a.wedge(a.one_like()).equals(a)
    assert (a * 1).equals(a)


def test_exterior_derivative_of_mixed_form(plane):
    cf = plane.get_chart("X").coframe()
    a, _ = _mixed(plane, cf)
    da = a.d()
    assert da[0].is_zero()
    assert canonical_equal(da[1][cf, (0,)], 2 * x)
    assert da[1][cf, (1,)] == 0
    assert da[2][cf, (0, 1)] == 1
    assert da.d().is_zero()
    assert da.display_expansion(cf) == "[0]_0 + [2*x dx]_1 + [dx∧dy]_2"


def test_d_squared_vanishes(space):
    chart = space.get_chart("X")
    f = DiffForm.scalar(chart, "sin(x*y) + z^3*x")
    assert f.d().d().is_zero()
    omega = one_form(chart.coframe(), ["y*z", "x^2", "exp(z)"])
    assert omega.d().d().is_zero()


def test_graded_commutativity_and_leibniz(space):
    cf = space.get_chart("X").coframe()
    a = one_form(cf, ["y", "x*z", "1"])
    b = DiffForm(space, 2, {cf: {(0, 1): "z", (1, 2): "x*y"}})
    assert a.wedge(b).equals(b.wedge(a))
    c = one_form(cf, ["z^2", "0", "x"])
    assert a.wedge(c).equals(-c.wedge(a))

    lhs = a.wedge(b).d()
    rhs = a.d().wedge(b) - a.wedge(b.d())
    assert lhs.equals(rhs)


def test_components_are_antisymmetric(plane):
    cf = plane.get_chart("X").coframe()
    form = DiffForm(plane, 2)
    form.set_comp(cf, (1, 0), "x")
    assert form[cf, (0, 1)] == -x
    with pytest.raises(FormError):
        form.set_comp(cf, (0, 0), 1)
    with pytest.raises(FormError):
        form.set_comp(cf, (0,), 1)
    with pytest.raises(FormError):
        form.set_comp(cf, (0, 2), 1)


def test_adding_mismatched_degrees_fails(plane):
    cf = plane.get_chart("X").coframe()
    with pytest.raises(FormError):
        one_form(cf, ["x", "y"]) + DiffForm.scalar(cf.chart, 1)


def test_identity_linking_keeps_components(plane):
    chart = plane.get_chart("X")
    same = Coframe.abstract("e", chart, [["1", "0"], ["0", "1"]])
    form = one_form(chart.coframe(), ["x", "y^2"])
    assert form.comp(same) == {(0,): x, (1,): y ** 2}


def test_unrelated_charts_cannot_convert():
    m = Manifold("R2", 2)
    m.chart("cart", ["x", "y"])
    m.chart("polar", ["r", "th"], restrictions=["r > 0"])
    form = DiffForm(m, 2, {m.get_chart("cart").coframe(): {(0, 1): 1}})
    with pytest.raises(FormError, match="Cannot express"):
        form.comp(m.get_chart("polar").coframe())


def test_coframe_round_trip_on_three_space(space):
    chart = space.get_chart("X")
    cf = chart.coframe()
    e = Coframe.abstract("e", chart, [["1", "0", "0"], ["x", "1", "0"], ["0", "y", "2"]])
    original = DiffForm(space, 2, {e: {(0, 1): "x*z", (0, 2): "1", (1, 2): "y - z"}})
    in_coordinates = original.comp(cf)
    back = DiffForm(space, 2, {cf: dict(in_coordinates)})
    for key in [(0, 1), (0, 2), (1, 2)]:
        assert canonical_equal(back[e, key], original[e, key])


def test_coframe_change_matrix_is_inverse_pair(space):
    chart = space.get_chart("X")
    e = Coframe.abstract("e", chart, [["1", "0", "0"], ["x", "1", "0"], ["0", "y", "2"]])
    forward = coframe_change_matrix(chart.coframe(), e)
    backward = coframe_change_matrix(e, chart.coframe())
    assert (forward * backward).applyfunc(sp.simplify) == sp.eye(3)


def test_dependent_frame_vectors_are_rejected(plane):
    with pytest.raises(FormError, match="linearly dependent"):
        Coframe.abstract("bad", plane.get_chart("X"), [["1", "x"], ["2", "2*x"]])


def test_scale_by_scalar_field(plane):
    chart = plane.get_chart("X")
    f = plane.scalar_field({chart: "x + y"})
    form = one_form(chart.coframe(), ["1", "x"]).scale(f)
    assert form[chart.coframe(), (0,)] == x + y
    assert canonical_equal(form[chart.coframe(), (1,)], x ** 2 + x * y)

    constant = DiffForm.constant(plane, 2).scale(f)
    assert canonical_equal(constant[chart.coframe(), ()], 2 * x + 2 * y)


def test_copy_is_independent(plane):
    cf = plane.get_chart("X").coframe()
    form = one_form(cf, ["x", "y"], name="a")
    twin = form.copy("b")
    twin.set_comp(cf, (0,), 0)
    assert form[cf, (0,)] == x
    assert twin.name == "b"


def test_json_and_latex_output(plane):
    cf = plane.get_chart("X").coframe()
    a, _ = _mixed(plane, cf)
    assert a.to_json(cf) == {"0": {"": "x^2"}, "1": {"0": "y", "1": "2*x"}, "2": {"0,1": "4*x^3"}}
    assert "\\wedge" in a[2].display_latex(cf)


def test_set_restriction_adopts_other_coframes(plane):
    cf = plane.get_chart("X").coframe()
    other = plane.chart("Y", ["s", "t"])
    a, _ = _mixed(plane, cf)
    elsewhere = MixedForm.of(DiffForm.scalar(other, "s*t"))
    a.set_restriction(elsewhere)
    assert a[0][other.coframe(), ()] == sp.Symbol("s") * sp.Symbol("t")
    assert a[0][cf, ()] == x ** 2
    assert a[2][cf, (0, 1)] == 4 * x ** 3


def _random_poly(np_rng, symbols):
    monomials = [sp.Integer(1)] + list(symbols) + [a * b for a, b in combinations(symbols, 2)] + [s ** 2 for s in symbols]
    coeffs = np_rng.integers(-3, 4, size=len(monomials))
    return sum((int(c) * m for c, m in zip(coeffs, monomials)), sp.Integer(0))


def _random_form(np_rng, manifold, degree):
    chart = manifold.get_chart("X")
    if degree == 0:
        return DiffForm.scalar(chart, _random_poly(np_rng, chart.coords))
    comps = {key: _random_poly(np_rng, chart.coords) for key in combinations(range(manifold.dim), degree)}
    return DiffForm(manifold, degree, {chart.coframe(): comps})


def _random_mixed(np_rng, manifold):
    return MixedForm(manifold, [_random_form(np_rng, manifold, k) for k in range(manifold.dim + 1)])


@pytest.mark.parametrize("manifold_name", ["plane", "space"])
def test_graded_commutativity_on_random_pairs(manifold_name, np_rng, request):
    manifold = request.getfixturevalue(manifold_name)
    for _ in range(100):
        k, l = (int(d) for d in np_rng.integers(0, manifold.dim + 1, size=2))
        a, b = _random_form(np_rng, manifold, k), _random_form(np_rng, manifold, l)
        assert a.wedge(b).equals(b.wedge(a).scale((-1) ** (k * l)))


@pytest.mark.parametrize("manifold_name", ["plane", "space"])
def test_d_squared_vanishes_in_every_degree(manifold_name, np_rng, request):
    manifold = request.getfixturevalue(manifold_name)
    for degree in range(manifold.dim + 1):
        for _ in range(10):
            assert _random_form(np_rng, manifold, degree).d().d().is_zero()


def test_graded_leibniz_on_random_forms(space, np_rng):
    for _ in range(30):
        k, l = (int(d) for d in np_rng.integers(0, 3, size=2))
        a, b = _random_form(np_rng, space, k), _random_form(np_rng, space, l)
        rhs = a.d().wedge(b) + a.wedge(b.d()).scale((-1) ** k)
        assert a.wedge(b).d().equals(rhs)


def test_mixed_wedge_is_associative(plane, space, np_rng):
    for manifold in (plane, space):
        for _ in range(10):
            a, b, c = (_random_mixed(np_rng, manifold) for _ in range(3))
            assert a.wedge(b).wedge(c).equals(a.wedge(b.wedge(c)))


def _random_unitriangular(np_rng, chart):
    """Upper triangular with nonzero constant diagonal, so invertible everywhere."""
    n = len(chart.coords)
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            if j < i:
                row.append(0)
            elif j == i:
                row.append(int(np_rng.choice([-2, -1, 1, 2])))
            else:
                row.append(_random_poly(np_rng, chart.coords))
        rows.append(row)
    return rows


def test_coframe_changes_compose(space, np_rng):
    chart = space.get_chart("X")
    for k in range(5):
        e = Coframe.abstract(f"e{k}", chart, _random_unitriangular(np_rng, chart))
        f = Coframe.abstract(f"f{k}", chart, _random_unitriangular(np_rng, chart))
        first = coframe_change_matrix(chart.coframe(), e)
        second = coframe_change_matrix(e, f)
        direct = coframe_change_matrix(chart.coframe(), f)
        assert (first * second - direct).applyfunc(sp.simplify) == sp.zeros(3)


def test_coframe_changes_compose_across_charts():
    m = Manifold("R2", 2)
    m.chart("X", ["x", "y"])
    m.chart("Y", ["s", "t"])
    m.chart("Z", ["u", "v"])
    m.add_transition("X", "Y", ["x + 2*y", "y"], ["s - 2*t", "t"])
    m.add_transition("Y", "Z", ["s", "3*t - s"], ["u", "(u + v)/3"])
    m.add_transition("X", "Z", ["x + 2*y", "y - x"], ["(u - 2*v)/3", "(u + v)/3"])
    a, b, c = (m.get_chart(name).coframe() for name in ("X", "Y", "Z"))
    composed = coframe_change_matrix(a, b) * coframe_change_matrix(b, c)
    assert (composed - coframe_change_matrix(a, c)).applyfunc(sp.simplify) == sp.zeros(2)
