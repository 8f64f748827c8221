"""QPL front end: parser, typechecker, gate table and denotational evaluator."""

from .evaluator import Evaluator, denote, run, wp_run
from .gates import GateTable
from .parser import parse
from .typechecker import TypeChecker, typecheck

__all__ = ["Evaluator", "GateTable", "TypeChecker", "denote", "parse", "run", "typecheck", "wp_run"]
