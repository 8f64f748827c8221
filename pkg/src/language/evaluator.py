"""
Denotational evaluator: a typechecked program becomes an arrow from the
signature of its input context to the signature of its output context.

Contexts are tensor products of the variable types, left to right. Every
statement that touches particular variables first moves them into place with
an explicit wire permutation and moves them back afterwards.
"""

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.language.gates import GateTable
from src.language.typechecker import TypeChecker
from src.models.errors import TypeCheckError
from src.models.program import (
    Abort,
    ApplyUnitary,
    Assign,
    BuiltinCall,
    Call,
    Discard,
    If,
    Literal,
    Measure,
    NewVar,
    ProcDef,
    Program,
    QType,
    Seq,
    Skip,
    Stmt,
    TypingContext,
    VarRef,
    While,
)
from src.models.report import IterationReport
from src.models.signature import (
    BlockKey,
    Side,
    Signature,
    combine_all_keys,
    split_all_keys,
    tensor_all,
    unit,
)
from src.models.tolerance import Tolerance, resolve_tolerance
from src.services import qcat
from src.services.classical_embed import NAT_BUILTINS, deterministic_arrow, nat_key
from src.services.cpmap import KrausMap
from src.services.qcat import EffectVector, QArrow, StateVector
from src.utils.logger import get_logger


def _value_of(qtype: QType, key: BlockKey) -> int:
    return key[0] if qtype == QType.NAT else key


def _key_of(qtype: QType, value: int) -> BlockKey:
    return nat_key(value) if qtype == QType.NAT else value


def _inverse(order: Sequence[int]) -> List[int]:
    inv = [0] * len(order)
    for position, source in enumerate(order):
        inv[source] = position
    return inv


def loop_reports(arrow: QArrow) -> List[IterationReport]:
    """Kleene reports of an arrow without repetitions."""
    seen, reports = set(), []
    for report in arrow.iterations:
        if id(report) not in seen:
            seen.add(id(report))
            reports.append(report)
    return reports


class Evaluator:
    """
    Computes denotations of statements and programs.

    Args:
        gates: Gate table for unitary statements
        tol: Tolerance (configured default when None)
        max_iter: Kleene iteration cap for loops and recursion
    """

    def __init__(
        self,
        gates: Optional[GateTable] = None,
        tol: Optional[Tolerance] = None,
        max_iter: Optional[int] = None,
    ):
        self.logger = get_logger("evaluator")
        self.gates = gates or GateTable(tol)
        self.tol = resolve_tolerance(tol)
        self.max_iter = max_iter
        self.procs: Dict[str, QArrow] = {}
        self.proc_params: Dict[str, TypingContext] = {}

    # ------------------------------------------------------------------
    # Programs
    # ------------------------------------------------------------------

    def denote_program(self, program: Program) -> QArrow:
        """
        Typecheck and denote a whole program.

        Raises:
            TypeCheckError: If the program is ill-typed
        """
        typing = TypeChecker(self.gates).check_program(program)
        self.proc_params = dict(typing.procs)
        self.procs = {}
        if program.procs:
            self._solve_procedures(program.procs)
        arrow, outputs = self.denote(program.body, typing.inputs)
        if outputs != typing.outputs:
            raise TypeCheckError(f"Evaluator reached context {outputs}, typechecker {typing.outputs}")
        self.logger.info(f"Denotation {arrow.source} -> {arrow.target} computed")
        return arrow

    def _solve_procedures(self, procs: Sequence[ProcDef]) -> None:
        names = [p.name for p in procs]
        endpoints = [(self.proc_params[n].signature(),) * 2 for n in names]

        def functional(current: List[QArrow]) -> List[QArrow]:
            self.procs = dict(zip(names, current))
            return [self.denote(p.body, self.proc_params[p.name])[0] for p in procs]

        solved = qcat.least_fixed_point(functional, endpoints, self.tol, self.max_iter)
        self.procs = dict(zip(names, solved))
        report = solved[0].iterations[-1]
        self.logger.info(
            f"Procedures {', '.join(names)} solved after {report.iterations} step(s) "
            f"(converged={report.converged})"
        )

    # ------------------------------------------------------------------
    # Statements
    # ------------------------------------------------------------------

    def denote(self, stmt: Stmt, ctx: TypingContext) -> Tuple[QArrow, TypingContext]:
        """Arrow of ``stmt`` run in ``ctx`` and the context it ends in."""
        sig = ctx.signature()
        if isinstance(stmt, Seq):
            arrow, current = qcat.identity(sig), ctx
            for inner in stmt.body:
                step, current = self.denote(inner, current)
                arrow = qcat.compose(step, arrow, self.tol)
            return arrow, current
        if isinstance(stmt, Skip):
            return qcat.identity(sig), ctx
        if isinstance(stmt, Abort):
            return qcat.zero_arrow(sig, sig), ctx
        if isinstance(stmt, NewVar):
            return self._new(stmt, ctx)
        if isinstance(stmt, Discard):
            return self._discard(stmt, ctx)
        if isinstance(stmt, ApplyUnitary):
            return self._unitary(stmt, ctx), ctx
        if isinstance(stmt, Assign):
            return self._assign(stmt, ctx), ctx
        if isinstance(stmt, Measure):
            return self._measure(stmt, ctx)
        if isinstance(stmt, If):
            return self._if(stmt, ctx)
        if isinstance(stmt, While):
            return self._while(stmt, ctx), ctx
        if isinstance(stmt, Call):
            return self._call(stmt, ctx), ctx
        raise TypeCheckError(f"Cannot denote {type(stmt).__name__}", stmt.line, stmt.column)

    def _to_front(self, ctx: TypingContext, names: Sequence[str]):
        """Wire permutations moving ``names`` (in order) to the front and back again."""
        factors = ctx.factor_signatures()
        front = [ctx.index(n) for n in names]
        order = front + [i for i in range(len(factors)) if i not in front]
        permuted = [factors[i] for i in order]
        forward = qcat.wire_permutation(factors, order)
        backward = qcat.wire_permutation(permuted, _inverse(order))
        rest = tensor_all(permuted[len(front):])
        return forward, backward, permuted[: len(front)], rest

    def _conjugate(self, ctx: TypingContext, names: Sequence[str], local: QArrow) -> QArrow:
        """σ⁻¹ ∘ (local ⊗ id_rest) ∘ σ with σ moving ``names`` to the front."""
        forward, backward, _, rest = self._to_front(ctx, names)
        middle = qcat.tensor_arrow(local, qcat.identity(rest), self.tol)
        return qcat.compose_all([forward, middle, backward], self.tol)

    def _prepare(self, qtype: QType) -> QArrow:
        """unit → type, preparing the value 0 (|0⟩ for qbit)."""
        if qtype == QType.QBIT:
            _, iota, _ = qcat.qbit_structure()
            return qcat.compose(iota, self._point(QType.BIT, 0), self.tol)
        return self._point(qtype, 0)

    def _point(self, qtype: QType, value: int) -> QArrow:
        return deterministic_arrow(unit(), qtype.signature, lambda _: _key_of(qtype, value))

    def _erase(self, qtype: QType) -> QArrow:
        """type → unit, the trace (discarding) map."""
        sig = qtype.signature

        def column(key: BlockKey):
            dim = sig.block_dim(key)
            return {0: KrausMap(dim, 1, [np.eye(dim)[k : k + 1] for k in range(dim)])}

        return QArrow(sig, unit(), column_factory=column)

    def _new(self, stmt: NewVar, ctx: TypingContext) -> Tuple[QArrow, TypingContext]:
        arrow = qcat.tensor_arrow(qcat.identity(ctx.signature()), self._prepare(stmt.type), self.tol)
        return arrow, ctx.appended(stmt.name, stmt.type)

    def _discard(self, stmt: Discard, ctx: TypingContext) -> Tuple[QArrow, TypingContext]:
        factors = ctx.factor_signatures()
        idx = ctx.index(stmt.name)
        order = [i for i in range(len(factors)) if i != idx] + [idx]
        rest = tensor_all([factors[i] for i in order[:-1]])
        erase = qcat.tensor_arrow(qcat.identity(rest), self._erase(ctx.type_of(stmt.name)), self.tol)
        arrow = qcat.compose(erase, qcat.wire_permutation(factors, order), self.tol)
        return arrow, ctx.without(stmt.name)

    def _unitary(self, stmt: ApplyUnitary, ctx: TypingContext) -> QArrow:
        lifted = qcat.unitary_lift(self.gates[stmt.gate], self.tol)
        return self._conjugate(ctx, stmt.args, lifted)

    def _assign(self, stmt: Assign, ctx: TypingContext) -> QArrow:
        expr = stmt.expr
        sources: List[str] = []
        if isinstance(expr, VarRef):
            sources = [expr.name]
        elif isinstance(expr, BuiltinCall):
            sources = list(expr.args)
        names = [stmt.name] + [n for n in sources if n != stmt.name]
        types = [ctx.type_of(n) for n in names]
        factors = [t.signature for t in types]

        def key_map(key: BlockKey) -> BlockKey:
            values = {
                n: _value_of(t, k) for n, t, k in zip(names, types, split_all_keys(factors, key))
            }
            if isinstance(expr, Literal):
                new = expr.value
            elif isinstance(expr, VarRef):
                new = values[expr.name]
            else:
                new = NAT_BUILTINS[expr.name](*[values[a] for a in expr.args])
            values[stmt.name] = new
            return combine_all_keys(factors, [_key_of(t, values[n]) for n, t in zip(names, types)])

        front = tensor_all(factors)
        return self._conjugate(ctx, names, deterministic_arrow(front, front, key_map))

    def _split_on_bit(self, ctx: TypingContext, name: str, measure: bool):
        """
        Arrow ctx → R⊕R splitting on the value of ``name`` (measured first when
        ``measure``), plus the two retagging arrows R → ctx' restoring the
        variable as a bit holding 0 or 1.
        """
        factors = ctx.factor_signatures()
        idx = ctx.index(name)
        order = [i for i in range(len(factors)) if i != idx] + [idx]
        rest = tensor_all([factors[i] for i in order[:-1]])
        bit = QType.BIT.signature
        steps = [qcat.wire_permutation(factors, order)]
        if measure:
            _, _, p = qcat.qbit_structure()
            steps.append(qcat.tensor_arrow(qcat.identity(rest), p, self.tol))
        steps.append(qcat.distributivity(rest, unit(), unit()))
        split = qcat.compose_all(steps, self.tol)

        branch_ctx = ctx.retyped(name, QType.BIT)
        restore = qcat.wire_permutation(
            [factors[i] for i in order[:-1]] + [bit], _inverse(order)
        )
        retag = [
            qcat.compose(
                restore,
                qcat.tensor_arrow(qcat.identity(rest), self._point(QType.BIT, v), self.tol),
                self.tol,
            )
            for v in (0, 1)
        ]
        return split, retag, branch_ctx

    def _measure(self, stmt: Measure, ctx: TypingContext) -> Tuple[QArrow, TypingContext]:
        split, (retag0, retag1), branch_ctx = self._split_on_bit(ctx, stmt.name, measure=True)
        then_arrow, after = self.denote(stmt.then_branch, branch_ctx)
        else_arrow, _ = self.denote(stmt.else_branch, branch_ctx)
        merge = qcat.copair(
            qcat.compose(then_arrow, retag0, self.tol),
            qcat.compose(else_arrow, retag1, self.tol),
        )
        return qcat.compose(merge, split, self.tol), after

    def _if(self, stmt: If, ctx: TypingContext) -> Tuple[QArrow, TypingContext]:
        split, (retag0, retag1), _ = self._split_on_bit(ctx, stmt.name, measure=False)
        then_arrow, after = self.denote(stmt.then_branch, ctx)
        else_arrow, _ = self.denote(stmt.else_branch, ctx)
        merge = qcat.copair(
            qcat.compose(else_arrow, retag0, self.tol),
            qcat.compose(then_arrow, retag1, self.tol),
        )
        return qcat.compose(merge, split, self.tol), after

    def loop_arrow(self, stmt: While, ctx: TypingContext) -> QArrow:
        """
        The loop body f : Γ⊕Γ → Γ⊕Γ whose trace over Γ is the while statement.
        Left summands are entry and exit, right summands the loop state.
        """
        sig = ctx.signature()
        split, (retag0, retag1), _ = self._split_on_bit(ctx, stmt.name, measure=False)
        body, _ = self.denote(stmt.body, ctx)
        route = qcat.compose(
            qcat.copair(
                qcat.compose(qcat.injection(sig, sig, Side.LEFT), retag0, self.tol),
                qcat.compose_all([retag1, body, qcat.injection(sig, sig, Side.RIGHT)], self.tol),
            ),
            split,
            self.tol,
        )
        return qcat.copair(route, route)

    def _while(self, stmt: While, ctx: TypingContext) -> QArrow:
        arrow = qcat.trace(self.loop_arrow(stmt, ctx), ctx.signature(), self.tol, self.max_iter)
        report = arrow.iterations[-1]
        self.logger.debug(
            f"while {stmt.name} at {stmt.line}:{stmt.column}: {report.iterations} step(s), "
            f"converged={report.converged}"
        )
        return arrow

    def _call(self, stmt: Call, ctx: TypingContext) -> QArrow:
        return self._conjugate(ctx, stmt.args, self.procs[stmt.proc])


# ============================================================================
# Module-level entry points
# ============================================================================

def denote(
    program: Program,
    gates: Optional[GateTable] = None,
    tol: Optional[Tolerance] = None,
    max_iter: Optional[int] = None,
) -> QArrow:
    return Evaluator(gates, tol, max_iter).denote_program(program)


def run(
    program: Program,
    state: StateVector,
    gates: Optional[GateTable] = None,
    tol: Optional[Tolerance] = None,
    max_iter: Optional[int] = None,
) -> StateVector:
    """Schrödinger run: the output state of ``program`` on ``state``."""
    return qcat.apply(denote(program, gates, tol, max_iter), state, tol)


def wp_run(
    program: Program,
    post: EffectVector,
    gates: Optional[GateTable] = None,
    tol: Optional[Tolerance] = None,
    max_iter: Optional[int] = None,
    keys: Optional[Sequence[BlockKey]] = None,
) -> EffectVector:
    """Heisenberg run: the weakest precondition of ``post``."""
    return qcat.wp(denote(program, gates, tol, max_iter), post, keys, tol)


def input_signature(program: Program) -> Signature:
    """Signature of the declared input context."""
    ctx = TypingContext()
    for param in program.inputs:
        ctx = ctx.appended(param.name, param.type)
    return ctx.signature()


__all__ = [
    "Evaluator",
    "denote",
    "input_signature",
    "loop_reports",
    "run",
    "wp_run",
]
