import json

import pandas as pd
import pytest
from openpyxl import load_workbook

from chern_weil.cli import app
from chern_weil.cli.render import render
from chern_weil.cli.scenario import ScenarioRunner
from chern_weil.core.base.context import ComputationContext
from conftest import read_scenario, scenario_path


def _write(tmp_path, text, name="case.scn"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_json_output_is_deterministic(capsys):
    argv = ["--scenario", scenario_path("minkowski_ch.scn"), "--output", "json"]
    assert app.main(argv) == app.EXIT_OK
    first = capsys.readouterr().out
    assert app.main(argv) == app.EXIT_OK
    second = capsys.readouterr().out
    assert first == second

    document = json.loads(first)
    assert document["scenario"].endswith("minkowski_ch.scn")
    kinds = [r["kind"] for r in document["results"]]
    assert kinds == ["class", "form"]
    assert all("data" not in r for r in document["results"])
    form = document["results"][1]
    assert form["section"] == "compute.ch"
    assert form["components"]["0"] == {"": "1"}


def test_text_output(capsys):
    assert app.main(["--scenario", scenario_path("moebius.scn")]) == app.EXIT_OK
    out = capsys.readouterr().out
    assert "[evaluate.sigma_p]\nsigma(p) = (psiU^*e_1)" in out
    assert "[trivialization_map.transf]\ndet(" in out


def test_latex_output(capsys):
    assert app.main(["--scenario", scenario_path("minkowski_ch.scn"), "--output", "latex"]) == app.EXIT_OK
    out = capsys.readouterr().out
    assert "% [compute.ch]" in out
    assert "\\[" in out


def test_integrate_flag(capsys):
    argv = ["--scenario", scenario_path("tautological_chern.scn"), "--output", "json",
            "--integrate", "c", "--chart", "c_cart", "--bounds", "x=-inf..inf", "--bounds", "y=-inf..inf",
            "--method", "adaptive"]
    assert app.main(argv) == app.EXIT_OK
    form = json.loads(capsys.readouterr().out)["results"][-1]
    assert form["integral"]["method"] == "adaptive"
    assert form["integral"]["value"] == pytest.approx(1.0, abs=1e-4)


def test_integrate_needs_chart_and_bounds(capsys):
    argv = ["--scenario", scenario_path("minkowski_ch.scn"), "--integrate", "ch"]
    assert app.main(argv) == app.EXIT_INPUT
    assert "--chart" in capsys.readouterr().err


def test_missing_file(tmp_path, capsys):
    assert app.main(["--scenario", str(tmp_path / "nope.scn")]) == app.EXIT_INPUT
    assert capsys.readouterr().err.startswith("error [cli]: cannot read scenario")


def test_syntax_error_exit_code(tmp_path, capsys):
    path = _write(tmp_path, "[manifold.M]\ndim 2\n")
    assert app.main(["--scenario", path]) == app.EXIT_INPUT
    err = capsys.readouterr().err
    assert "error [cli]" in err
    assert "line 2" in err


def test_engine_failure_exit_code(tmp_path, capsys):
    text = "[manifold.M]\ndim = 1\n[chart.a]\ncoords = u\n[chart.b]\ncoords = v\n" \
           "[transition.t]\nfrom = a\nto = b\nexprs = 2*u\ninverse = v\n"
    assert app.main(["--scenario", _write(tmp_path, text)]) == app.EXIT_FAILURE
    err = capsys.readouterr().err
    assert "section [transition.t], line 7" in err
    assert "does not invert" in err


def test_export_workbook(tmp_path, capsys):
    target = tmp_path / "euler.xlsx"
    argv = ["--scenario", scenario_path("tautological_chern.scn"), "--export", str(target)]
    assert app.main(argv) == app.EXIT_OK
    capsys.readouterr()

    sheets = pd.read_excel(target, sheet_name=None, dtype=str)
    assert set(sheets) == {"compute.c", "Integrals"}
    components = sheets["compute.c"]
    assert list(components.columns) == ["Degree", "Indices", "Component"]
    assert "0,1" in components["Indices"].tolist()

    integrals = pd.read_excel(target, sheet_name="Integrals")
    assert integrals.loc[0, "Section"] == "compute.c"
    assert integrals.loc[0, "Value"] == pytest.approx(1.0, abs=1e-4)

    ws = load_workbook(target)["Integrals"]
    assert ws["A1"].font.bold


def test_render_text_includes_integrals():
    runner = ScenarioRunner(ComputationContext.seeded(0))
    outcomes = runner.run_text(read_scenario("tautological_chern.scn"))
    text = render(outcomes, "text")
    assert "[compute.c]" in text
    assert "integral = " in text
    assert outcomes[-1].integral.value == pytest.approx(1.0, abs=1e-4)
