"""
Main entry point for the QPL semantics toolkit.
"""

import argparse
import sys
from typing import List, Optional

from src.language.gates import GateTable
from src.models.errors import (
    InvariantViolationError,
    NonMonotoneIterationError,
    NotCompletelyPositiveError,
    ParseError,
    TypeCheckError,
)
from src.models.report import Picture
from src.models.tolerance import Tolerance
from src.services.program_service import DEMOS, ProgramService, strict_failure
from src.services.report_service import ReportService
from src.utils.config import get_config
from src.utils.logger import get_logger

EXIT_OK = 0
EXIT_USER_ERROR = 2
EXIT_NOT_CONVERGED = 3
EXIT_INVARIANT = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="QPL semantics toolkit - denote quantum programs as CP-map matrices, run and verify them"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument(
            "--tol",
            type=float,
            default=None,
            help="Kleene convergence tolerance eps_fix (uses config default if not specified)",
        )
        sub.add_argument(
            "--max-iter",
            type=int,
            default=None,
            help="Cap on Kleene iterations for loops and recursion (uses config default if not specified)",
        )
        sub.add_argument("--gates", type=str, default=None, help="YAML file with additional gate definitions")
        sub.add_argument("--seed", type=int, default=None, help="Seed for sampled checks (default: config)")
        sub.add_argument("--output", type=str, default=None, help="Write the JSON report to this file")

    run = subparsers.add_parser("run", help="Run a program in the Schrödinger and/or Heisenberg picture")
    run.add_argument("file", help="QPL source file")
    run.add_argument(
        "--input",
        type=str,
        default=None,
        help="Input state, e.g. '0:0.5;1:0.5' or '0:[[1,0],[0,0]]' (default: all variables 0)",
    )
    run.add_argument(
        "--post",
        type=str,
        default=None,
        help="Postcondition for the Heisenberg picture, same format (default: the unit effect)",
    )
    run.add_argument(
        "--picture",
        type=str,
        default=Picture.SCHRODINGER.value,
        choices=[p.value for p in Picture],
        help="Picture(s) to evaluate (default: schrodinger)",
    )
    run.add_argument(
        "--strict",
        action="store_true",
        help="Exit with status 3 when a loop or recursion did not converge",
    )
    common(run)

    check = subparsers.add_parser("check", help="Verify CP, trace and duality invariants")
    target = check.add_mutually_exclusive_group(required=True)
    target.add_argument("file", nargs="?", help="QPL source file")
    target.add_argument("--arrow", type=str, default=None, help="JSON arrow dump to verify instead of a program")
    check.add_argument("--samples", type=int, default=None, help="Random state/effect pairs for the duality check")
    check.add_argument("--dump", type=str, default=None, help="Also write the program's arrow dump here")
    common(check)

    demo = subparsers.add_parser("demo", help="Run a bundled program against its closed form")
    demo.add_argument("name", choices=list(DEMOS), help="Demo to run")
    common(demo)

    return parser


def _tolerance(args: argparse.Namespace) -> Tolerance:
    config = get_config()
    eps_fix = args.tol if args.tol is not None else config.eps_fix
    return Tolerance(eps_psd=config.eps_psd, eps_eq=config.eps_eq, eps_fix=eps_fix)


def cmd_run(args: argparse.Namespace, service: ProgramService, report_service: ReportService) -> int:
    """Denote and run a program file; exit 3 on non-convergence under --strict."""
    report = service.run_program(args.file, args.input, Picture(args.picture), args.post)
    print(report_service.render_run(report))
    if args.output:
        print(f"\nReport written to: {report_service.write_run_report(report, args.output)}")
    if args.strict and strict_failure(report.loops):
        get_logger("main").error(f"{args.file}: non-convergence in strict mode")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_check(args: argparse.Namespace, service: ProgramService, report_service: ReportService) -> int:
    """Verify a program's denotation or an arrow dump; exit 4 on any failed check."""
    if args.arrow:
        report = service.check_dump(args.arrow, args.samples, args.seed)
    else:
        arrow = service.denote_file(args.file)
        if args.dump:
            print(f"Arrow dump written to: {report_service.write_arrow_dump(arrow, args.dump)}")
        report = service.check_arrow(arrow, args.file, args.samples, args.seed)
    print(report_service.render_check(report))
    if args.output:
        print(f"\nReport written to: {report_service.write_check_report(report, args.output)}")
    return EXIT_OK if report.passed else EXIT_INVARIANT


def cmd_demo(args: argparse.Namespace, service: ProgramService, report_service: ReportService) -> int:
    report = service.demo(args.name, args.seed)
    print(report_service.render_run(report))
    if args.output:
        print(f"\nReport written to: {report_service.write_run_report(report, args.output)}")
    return EXIT_OK if report.expectation and report.expectation.get("matches") else EXIT_INVARIANT


COMMANDS = {"run": cmd_run, "check": cmd_check, "demo": cmd_demo}


def main(argv: Optional[List[str]] = None) -> int:
    """Main function: dispatch to run, check or demo and map errors to exit codes."""
    args = build_parser().parse_args(argv)
    logger = get_logger("main")

    try:
        tol = _tolerance(args)
        gates = GateTable(tol)
        if args.gates:
            gates.load_file(args.gates)
        report_service = ReportService()
        service = ProgramService(gates=gates, tol=tol, max_iter=args.max_iter, report_service=report_service)
        logger.info(f"Starting {args.command}")
        return COMMANDS[args.command](args, service, report_service)

    except (ParseError, TypeCheckError) as e:
        subject = getattr(args, "file", None) or getattr(args, "name", "")
        logger.error(f"{subject}:{e}")
        print(f"{subject}:{e}", file=sys.stderr)
        return EXIT_USER_ERROR
    except (InvariantViolationError, NonMonotoneIterationError, NotCompletelyPositiveError) as e:
        logger.error(f"Invariant violation: {e}")
        print(f"Invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ValueError, OSError) as e:
        logger.error(f"Error: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USER_ERROR
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        print(f"Unexpected error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
