import json
from typing import Any, List

from chern_weil.cli.scenario import Outcome
from chern_weil.core.config import config

FORMATS = ("text", "json", "latex")


def _integral_text(outcome: Outcome) -> str:
    result = outcome.integral
    precision = config.JSON_PRECISION
    return f"integral = {result.value:.{precision}f} ± {result.error:.2e} ({result.method}, {result.nodes} nodes)"


def render_text(outcomes: List[Outcome]) -> str:
    blocks = []
    for outcome in outcomes:
        lines = [f"[{outcome.section}]", outcome.text]
        if outcome.integral is not None:
            lines.append(_integral_text(outcome))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def render_latex(outcomes: List[Outcome]) -> str:
    lines = []
    for outcome in outcomes:
        lines.append(f"% [{outcome.section}]")
        if outcome.kind in ("form", "fiber"):
            lines.append(f"\\[ {outcome.latex} \\]")
        else:
            lines.extend(f"% {line}" for line in outcome.text.splitlines())
        if outcome.integral is not None:
            lines.append(f"\\[ \\int {outcome.data.get('name', '')} = {_rounded(outcome.integral.value)} \\]")
    return "\n".join(lines) + "\n"


def _rounded(value: Any) -> Any:
    if isinstance(value, float):
        return float(f"{value:.{config.JSON_PRECISION}g}")
    if isinstance(value, dict):
        return {k: _rounded(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_rounded(v) for v in value]
    return value


def render_json(outcomes: List[Outcome], scenario: str = "") -> str:
    results = [{"section": o.section, "kind": o.kind, "text": o.text, **_rounded(o.data)} for o in outcomes]
    return json.dumps({"scenario": scenario, "results": results}, indent=4, ensure_ascii=False) + "\n"


def render(outcomes: List[Outcome], output: str, scenario: str = "") -> str:
    if output == "json":
        return render_json(outcomes, scenario)
    if output == "latex":
        return render_latex(outcomes)
    return render_text(outcomes)
