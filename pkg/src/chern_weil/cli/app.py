import argparse
import logging
import sys
from typing import List, Optional

from chern_weil.cli.export import export_workbook
from chern_weil.cli.render import FORMATS, render
from chern_weil.cli.scenario import ScenarioRunner, parse_scenario
from chern_weil.core.base.context import ComputationContext
from chern_weil.core.errors import ChernWeilError, ExpressionSyntaxError, ScenarioError
from chern_weil.core.quadrature import METHODS

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chern_weil",
        description="Computes characteristic forms of vector bundles with connection from a scenario file.",
    )
    parser.add_argument("--scenario", required=True, help="scenario file (.scn)")
    parser.add_argument("--output", choices=FORMATS, default="text")
    parser.add_argument("--integrate", metavar="FORM", help="integrate the top-degree part of a computed form")
    parser.add_argument("--chart", help="chart to integrate in")
    parser.add_argument("--bounds", action="append", default=[], metavar="AXIS=LO..HI|AXIS=inf",
                        help="integration bounds per axis, e.g. x=0..1 or x=inf for the whole line (repeatable)")
    parser.add_argument("--method", choices=METHODS, default="gauss")
    parser.add_argument("--tolerance", type=float, help="quadrature tolerance")
    parser.add_argument("--seed", type=int, default=0, help="seed for probabilistic equality checks")
    parser.add_argument("--long", action="store_true", help="run computations marked long")
    parser.add_argument("--export", metavar="FILE.xlsx", help="write form components and integrals to Excel")
    parser.add_argument("--verbose", action="store_true")
    return parser


def _diagnostic(error: ChernWeilError) -> str:
    if isinstance(error, ScenarioError):
        return f"error [{error.module}]: {error}"
    where = []
    if getattr(error, "section", None):
        where.append(f"section [{error.section}]")
    if getattr(error, "line", None) is not None:
        where.append(f"line {error.line}")
    prefix = f"{', '.join(where)}: " if where else ""
    return f"error [{error.module}]: {prefix}{error}"


def run(args: argparse.Namespace) -> int:
    try:
        with open(args.scenario, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        print(f"error [cli]: cannot read scenario: {e}", file=sys.stderr)
        return EXIT_INPUT

    runner = ScenarioRunner(ComputationContext.seeded(args.seed), long=args.long, tolerance=args.tolerance)
    try:
        outcomes = runner.run(parse_scenario(text))
        if args.integrate:
            if not args.chart or not args.bounds:
                raise ScenarioError("--integrate needs --chart and --bounds")
            runner.integrate(args.integrate, args.chart, args.bounds, args.tolerance, args.method)
    except (ScenarioError, ExpressionSyntaxError) as e:
        print(_diagnostic(e), file=sys.stderr)
        return EXIT_INPUT
    except ChernWeilError as e:
        print(_diagnostic(e), file=sys.stderr)
        return EXIT_FAILURE

    sys.stdout.write(render(outcomes, args.output, args.scenario))
    if args.export:
        export_workbook(outcomes, args.export)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s: %(message)s",
    )
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
