"""
Typechecker: linear typing contexts threaded through statements.

Variables are used linearly: a qbit is never duplicated, a discarded variable
is gone, and both branches of a conditional must end in the same context.
"""

from typing import Dict, List, Optional

from src.language.gates import GateTable
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
    Node,
    Program,
    ProgramTyping,
    QType,
    Seq,
    Skip,
    StatementTyping,
    Stmt,
    TypingContext,
    VarRef,
    While,
)
from src.services.classical_embed import NAT_BUILTINS
from src.utils.logger import get_logger


def _error(message: str, node: Node) -> TypeCheckError:
    return TypeCheckError(message, node.line, node.column)


class TypeChecker:
    """
    Computes the output context of every statement from its input context.

    Args:
        gates: Gate table used to check gate names and arities
    """

    def __init__(self, gates: Optional[GateTable] = None):
        self.logger = get_logger("typechecker")
        self.gates = gates or GateTable()
        self.procs: Dict[str, TypingContext] = {}
        self.annotations: List[StatementTyping] = []
        self.discarded: set = set()

    def check_program(self, program: Program) -> ProgramTyping:
        """
        Typecheck procedures and the main body.

        Raises:
            TypeCheckError: On the first typing violation, with its position
        """
        self.annotations = []
        self.discarded = set()
        self.procs = {}
        for proc in program.procs:
            if proc.name in self.procs:
                raise _error(f"Procedure {proc.name!r} defined twice", proc)
            self.procs[proc.name] = self._param_context(proc.params, f"procedure {proc.name}")

        for proc in program.procs:
            params = self.procs[proc.name]
            after = self.transfer(proc.body, params)
            if after != params:
                raise _error(
                    f"Procedure {proc.name!r} must end in its parameter context {params}, got {after}",
                    proc,
                )

        inputs = self._param_context(program.inputs, "input")
        outputs = self.transfer(program.body, inputs)
        self.logger.debug(f"Typechecked program {inputs} -> {outputs}")
        return ProgramTyping(
            inputs=inputs, outputs=outputs, procs=dict(self.procs), statements=list(self.annotations)
        )

    def _param_context(self, params, what: str) -> TypingContext:
        ctx = TypingContext()
        for param in params:
            if param.name in ctx:
                raise _error(f"Duplicate {what} variable {param.name!r}", param)
            if what.startswith("procedure") and param.type == QType.NAT:
                raise _error(f"Procedure parameters must have finite types, {param.name!r} is nat", param)
            ctx = ctx.appended(param.name, param.type)
        return ctx

    # ------------------------------------------------------------------
    # Statements
    # ------------------------------------------------------------------

    def transfer(self, stmt: Stmt, ctx: TypingContext) -> TypingContext:
        """Output context of ``stmt`` run in ``ctx``; records an annotation."""
        after = self._transfer(stmt, ctx)
        if not isinstance(stmt, Seq):
            self.annotations.append(
                StatementTyping(
                    kind=stmt.kind,
                    line=stmt.line,
                    column=stmt.column,
                    before=ctx,
                    after=after,
                    source=str(ctx.signature()),
                    target=str(after.signature()),
                )
            )
        return after

    def _transfer(self, stmt: Stmt, ctx: TypingContext) -> TypingContext:
        if isinstance(stmt, Seq):
            for inner in stmt.body:
                ctx = self.transfer(inner, ctx)
            return ctx
        if isinstance(stmt, (Skip, Abort)):
            return ctx
        if isinstance(stmt, NewVar):
            if stmt.name in ctx:
                raise _error(f"Variable {stmt.name!r} is already declared", stmt)
            self.discarded.discard(stmt.name)
            return ctx.appended(stmt.name, stmt.type)
        if isinstance(stmt, Discard):
            self._require(stmt.name, ctx, stmt)
            self.discarded.add(stmt.name)
            return ctx.without(stmt.name)
        if isinstance(stmt, ApplyUnitary):
            return self._unitary(stmt, ctx)
        if isinstance(stmt, Assign):
            return self._assign(stmt, ctx)
        if isinstance(stmt, Measure):
            self._require(stmt.name, ctx, stmt, QType.QBIT)
            branch_ctx = ctx.retyped(stmt.name, QType.BIT)
            return self._branches(stmt, branch_ctx)
        if isinstance(stmt, If):
            self._require(stmt.name, ctx, stmt, QType.BIT)
            return self._branches(stmt, ctx)
        if isinstance(stmt, While):
            self._require(stmt.name, ctx, stmt, QType.BIT)
            after = self.transfer(stmt.body, ctx)
            if after != ctx:
                raise _error(f"Loop body must preserve the context {ctx}, got {after}", stmt)
            return ctx
        if isinstance(stmt, Call):
            return self._call(stmt, ctx)
        raise _error(f"Unknown statement {type(stmt).__name__}", stmt)

    def _require(self, name: str, ctx: TypingContext, node: Node, qtype: Optional[QType] = None) -> QType:
        if name not in ctx:
            if name in self.discarded:
                raise _error(f"Variable {name!r} was discarded", node)
            raise _error(f"Unbound variable {name!r}", node)
        actual = ctx.type_of(name)
        if qtype is not None and actual != qtype:
            raise _error(f"Variable {name!r} has type {actual.value}, expected {qtype.value}", node)
        return actual

    def _branches(self, stmt, ctx: TypingContext) -> TypingContext:
        then_ctx = self.transfer(stmt.then_branch, ctx)
        else_ctx = self.transfer(stmt.else_branch, ctx)
        if then_ctx != else_ctx:
            raise _error(f"Branches end in different contexts: {then_ctx} vs {else_ctx}", stmt)
        return then_ctx

    def _distinct(self, names, node: Node) -> None:
        if len(set(names)) != len(names):
            raise _error(f"Variables {', '.join(names)} are not distinct", node)

    def _unitary(self, stmt: ApplyUnitary, ctx: TypingContext) -> TypingContext:
        if stmt.gate not in self.gates:
            raise _error(f"Unknown gate {stmt.gate!r}", stmt)
        self._distinct(stmt.args, stmt)
        self._distinct(stmt.targets, stmt)
        for name in stmt.args:
            self._require(name, ctx, stmt, QType.QBIT)
        for name in stmt.targets:
            if name not in stmt.args:
                raise _error(f"Target {name!r} is not an argument of {stmt.gate}", stmt)
        arity = self.gates.arity(stmt.gate)
        if arity != len(stmt.args):
            raise _error(f"Gate {stmt.gate} acts on {arity} qbit(s), got {len(stmt.args)}", stmt)
        return ctx

    def _assign(self, stmt: Assign, ctx: TypingContext) -> TypingContext:
        target = self._require(stmt.name, ctx, stmt)
        if not target.is_classical:
            raise _error(f"Cannot assign to qbit {stmt.name!r}; use a unitary", stmt)
        expr = stmt.expr
        if isinstance(expr, Literal):
            if target.size is not None and expr.value >= target.size:
                raise _error(f"Value {expr.value} does not fit type {target.value}", expr)
        elif isinstance(expr, VarRef):
            source = self._require(expr.name, ctx, expr)
            if source != target:
                raise _error(f"Cannot assign {source.value} {expr.name!r} to {target.value} {stmt.name!r}", expr)
        elif isinstance(expr, BuiltinCall):
            builtin = NAT_BUILTINS.get(expr.name)
            if builtin is None:
                raise _error(f"Unknown builtin {expr.name!r}", expr)
            if len(expr.args) != builtin.arity:
                raise _error(f"{expr.name} takes {builtin.arity} argument(s), got {len(expr.args)}", expr)
            self._distinct(expr.args, expr)
            for name in expr.args:
                self._require(name, ctx, expr, QType.NAT)
            result = QType.NAT if not builtin.result.is_finite else QType.BIT
            if result != target:
                raise _error(f"{expr.name} returns {result.value}, {stmt.name!r} is {target.value}", expr)
        return ctx

    def _call(self, stmt: Call, ctx: TypingContext) -> TypingContext:
        params = self.procs.get(stmt.proc)
        if params is None:
            raise _error(f"Unknown procedure {stmt.proc!r}", stmt)
        if len(stmt.args) != len(params):
            raise _error(f"{stmt.proc} takes {len(params)} argument(s), got {len(stmt.args)}", stmt)
        self._distinct(stmt.args, stmt)
        for name, qtype in zip(stmt.args, params.types):
            self._require(name, ctx, stmt, qtype)
        return ctx


def typecheck(program: Program, gates: Optional[GateTable] = None) -> ProgramTyping:
    """Typecheck a parsed program; see :class:`TypeChecker`."""
    return TypeChecker(gates).check_program(program)
