"""
Abstract syntax and typing contexts of QPL programs.
"""

from __future__ import annotations

from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

from src.models.signature import Signature, nat, tensor_all


class QType(str, Enum):
    """Types of program variables."""

    BIT = "bit"
    TRIT = "trit"
    QBIT = "qbit"
    NAT = "nat"

    @property
    def signature(self) -> Signature:
        if self == QType.BIT:
            return Signature.finite(1, 1)
        if self == QType.TRIT:
            return Signature.finite(1, 1, 1)
        if self == QType.QBIT:
            return Signature.finite(2)
        return nat()

    @property
    def is_classical(self) -> bool:
        return self != QType.QBIT

    @property
    def size(self) -> Optional[int]:
        """Number of values of a finite classical type (None for qbit and nat)."""
        return {QType.BIT: 2, QType.TRIT: 3}.get(self)


class Node(BaseModel):
    """Base of all syntax nodes; carries the source position."""

    model_config = ConfigDict(frozen=True)

    line: int = 0
    column: int = 0


# ============================================================================
# Expressions (right-hand sides of classical assignment)
# ============================================================================

class Literal(Node):
    value: int = Field(..., ge=0)


class VarRef(Node):
    name: str


class BuiltinCall(Node):
    name: str
    args: Tuple[str, ...] = ()


Expr = Union[Literal, VarRef, BuiltinCall]


# ============================================================================
# Statements
# ============================================================================

class Skip(Node):
    kind: str = "skip"


class Abort(Node):
    kind: str = "abort"


class NewVar(Node):
    kind: str = "new"
    type: QType
    name: str


class Discard(Node):
    kind: str = "discard"
    name: str


class ApplyUnitary(Node):
    kind: str = "unitary"
    targets: Tuple[str, ...]
    gate: str
    args: Tuple[str, ...]


class Assign(Node):
    kind: str = "assign"
    name: str
    expr: Expr


class Measure(Node):
    kind: str = "measure"
    name: str
    then_branch: "Seq"
    else_branch: "Seq"


class If(Node):
    kind: str = "if"
    name: str
    then_branch: "Seq"
    else_branch: "Seq"


class While(Node):
    kind: str = "while"
    name: str
    body: "Seq"


class Call(Node):
    kind: str = "call"
    proc: str
    args: Tuple[str, ...] = ()


Stmt = Union[Skip, Abort, NewVar, Discard, ApplyUnitary, Assign, Measure, If, While, Call, "Seq"]


class Seq(Node):
    kind: str = "seq"
    body: Tuple[Stmt, ...] = ()


class Param(Node):
    name: str
    type: QType


class ProcDef(Node):
    name: str
    params: Tuple[Param, ...] = ()
    body: Seq


class Program(Node):
    """Input header, procedure definitions, then the main statement sequence."""

    inputs: Tuple[Param, ...] = ()
    procs: Tuple[ProcDef, ...] = ()
    body: Seq = Field(default_factory=Seq)

    def proc(self, name: str) -> Optional[ProcDef]:
        for p in self.procs:
            if p.name == name:
                return p
        return None

    def node_count(self) -> int:
        """Statements in the main body, counted recursively."""
        return _count(self.body)


def _count(stmt: Stmt) -> int:
    if isinstance(stmt, Seq):
        return sum(_count(s) for s in stmt.body)
    if isinstance(stmt, (Measure, If)):
        return 1 + _count(stmt.then_branch) + _count(stmt.else_branch)
    if isinstance(stmt, While):
        return 1 + _count(stmt.body)
    return 1


Measure.model_rebuild()
If.model_rebuild()
While.model_rebuild()
Seq.model_rebuild()
ProcDef.model_rebuild()
Program.model_rebuild()


# ============================================================================
# Typing contexts
# ============================================================================

class TypingContext(BaseModel):
    """Ordered variable bindings; denotes the tensor of the variable types, left to right."""

    model_config = ConfigDict(frozen=True)

    entries: Tuple[Tuple[str, QType], ...] = ()

    @classmethod
    def of(cls, *entries: Tuple[str, QType]) -> "TypingContext":
        return cls(entries=tuple(entries))

    @property
    def names(self) -> List[str]:
        return [name for name, _ in self.entries]

    @property
    def types(self) -> List[QType]:
        return [t for _, t in self.entries]

    def __contains__(self, name: object) -> bool:
        return name in self.names

    def __len__(self) -> int:
        return len(self.entries)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def type_of(self, name: str) -> QType:
        return self.entries[self.index(name)][1]

    def factor_signatures(self) -> List[Signature]:
        return [t.signature for t in self.types]

    def signature(self) -> Signature:
        return tensor_all(self.factor_signatures())

    def appended(self, name: str, qtype: QType) -> "TypingContext":
        return TypingContext(entries=self.entries + ((name, qtype),))

    def without(self, name: str) -> "TypingContext":
        return TypingContext(entries=tuple(e for e in self.entries if e[0] != name))

    def retyped(self, name: str, qtype: QType) -> "TypingContext":
        return TypingContext(entries=tuple((n, qtype if n == name else t) for n, t in self.entries))

    def __str__(self) -> str:
        return "(" + ", ".join(f"{n}:{t.value}" for n, t in self.entries) + ")"


class StatementTyping(BaseModel):
    """Input/output context of one statement."""

    kind: str
    line: int
    column: int
    before: TypingContext
    after: TypingContext
    source: str = Field(..., description="Input signature")
    target: str = Field(..., description="Output signature")


class ProgramTyping(BaseModel):
    """Result of typechecking: program contexts plus per-statement annotations."""

    inputs: TypingContext
    outputs: TypingContext
    procs: Dict[str, TypingContext] = Field(default_factory=dict, description="Procedure parameter contexts")
    statements: List[StatementTyping] = Field(default_factory=list)
