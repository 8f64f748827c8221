"""
Tokenizer and recursive-descent parser for QPL source text.

Grammar:

    program  := {"input" param {"," param} ";"} {procdef} [stmts]
    procdef  := "proc" ident "(" [param {"," param}] ")" block
    param    := ident ":" type
    type     := "bit" | "trit" | "qbit" | "nat"
    stmts    := stmt {";" stmt} [";"]
    block    := "{" [stmts] "}"
    stmt     := "skip" | "abort" | "new" type ident | "discard" ident
              | ident {"," ident} "*=" ident "(" idents ")"
              | ident ":=" expr
              | "measure" ident "then" block "else" block
              | "if" ident ["then"] block "else" block
              | "while" ident "do" block
              | "call" ident "(" [idents] ")"
    expr     := integer | ident | ident "(" [idents] ")"

Comments run from ``#`` to the end of the line.
"""

import re
from dataclasses import dataclass
from typing import List, Optional, Tuple

from src.models.errors import ParseError
from src.models.program import (
    Abort,
    ApplyUnitary,
    Assign,
    BuiltinCall,
    Call,
    Discard,
    Expr,
    If,
    Literal,
    Measure,
    NewVar,
    Param,
    ProcDef,
    Program,
    QType,
    Seq,
    Skip,
    Stmt,
    VarRef,
    While,
)
from src.utils.logger import get_logger

logger = get_logger("parser")

KEYWORDS = {
    "input", "proc", "skip", "abort", "new", "discard", "measure", "then", "else",
    "if", "while", "do", "call", "bit", "trit", "qbit", "nat",
}

_TOKEN_SPEC = [
    ("COMMENT", r"#[^\n]*"),
    ("NEWLINE", r"\n"),
    ("SPACE", r"[ \t\r]+"),
    ("NUMBER", r"\d+"),
    ("IDENT", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("OP", r"\*=|:=|[;,:(){}]"),
    ("ERROR", r"."),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{name}>{pattern})" for name, pattern in _TOKEN_SPEC))

# Deepest accepted block nesting
MAX_NESTING = 100


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(source: str) -> List[Token]:
    """
    Split source text into tokens with 1-based positions.

    Raises:
        ParseError: On a character that starts no token
    """
    tokens: List[Token] = []
    line, line_start = 1, 0
    for match in _TOKEN_RE.finditer(source):
        kind, text = match.lastgroup, match.group()
        column = match.start() - line_start + 1
        if kind == "NEWLINE":
            line += 1
            line_start = match.end()
            continue
        if kind in ("SPACE", "COMMENT"):
            continue
        if kind == "ERROR":
            raise ParseError(f"Unexpected character {text!r}", line, column)
        if kind == "IDENT" and text in KEYWORDS:
            kind = "KEYWORD"
        tokens.append(Token(kind, text, line, column))
    tokens.append(Token("EOF", "", line, len(source) - line_start + 1))
    return tokens


class Parser:
    """Recursive-descent parser over a token list."""

    def __init__(self, source: str):
        self.tokens = tokenize(source)
        self.pos = 0
        self.depth = 0

    # ------------------------------------------------------------------
    # Token helpers
    # ------------------------------------------------------------------

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def _peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def _at(self, text: str) -> bool:
        return self.current.kind in ("OP", "KEYWORD") and self.current.text == text

    def _advance(self) -> Token:
        token = self.current
        if token.kind != "EOF":
            self.pos += 1
        return token

    def _error(self, message: str, token: Optional[Token] = None) -> ParseError:
        token = token or self.current
        found = "end of input" if token.kind == "EOF" else repr(token.text)
        return ParseError(f"{message}, found {found}", token.line, token.column)

    def _expect(self, text: str) -> Token:
        if not self._at(text):
            raise self._error(f"Expected {text!r}")
        return self._advance()

    def _ident(self) -> Token:
        if self.current.kind != "IDENT":
            raise self._error("Expected an identifier")
        return self._advance()

    def _type(self) -> QType:
        token = self.current
        if token.kind == "KEYWORD" and token.text in {t.value for t in QType}:
            self._advance()
            return QType(token.text)
        raise self._error("Expected a type (bit, trit, qbit or nat)")

    def _ident_list(self, closing: str) -> Tuple[str, ...]:
        names: List[str] = []
        if self._at(closing):
            return ()
        names.append(self._ident().text)
        while self._at(","):
            self._advance()
            names.append(self._ident().text)
        return tuple(names)

    # ------------------------------------------------------------------
    # Grammar
    # ------------------------------------------------------------------

    def parse_program(self) -> Program:
        start = self.current
        inputs: List[Param] = []
        while self._at("input"):
            self._advance()
            inputs.append(self._param())
            while self._at(","):
                self._advance()
                inputs.append(self._param())
            self._expect(";")

        procs: List[ProcDef] = []
        while self._at("proc"):
            procs.append(self._procdef())

        body = self._stmts(closing="EOF")
        if self.current.kind != "EOF":
            raise self._error("Expected ';' or end of input")
        return Program(
            inputs=tuple(inputs), procs=tuple(procs), body=body, line=start.line, column=start.column
        )

    def _param(self) -> Param:
        name = self._ident()
        self._expect(":")
        return Param(name=name.text, type=self._type(), line=name.line, column=name.column)

    def _procdef(self) -> ProcDef:
        keyword = self._expect("proc")
        name = self._ident().text
        self._expect("(")
        params: List[Param] = []
        if not self._at(")"):
            params.append(self._param())
            while self._at(","):
                self._advance()
                params.append(self._param())
        self._expect(")")
        body = self._block()
        return ProcDef(name=name, params=tuple(params), body=body, line=keyword.line, column=keyword.column)

    def _block(self) -> Seq:
        opening = self._expect("{")
        if self.depth >= MAX_NESTING:
            raise ParseError(f"Blocks nested deeper than {MAX_NESTING}", opening.line, opening.column)
        self.depth += 1
        body = self._stmts(closing="}")
        self._expect("}")
        self.depth -= 1
        return body

    def _stmts(self, closing: str) -> Seq:
        start = self.current
        stmts: List[Stmt] = []

        def at_end() -> bool:
            return self.current.kind == "EOF" if closing == "EOF" else self._at(closing)

        while not at_end():
            stmts.append(self._stmt())
            if self._at(";"):
                self._advance()
                continue
            if not at_end():
                raise self._error("Expected ';'")
        return Seq(body=tuple(stmts), line=start.line, column=start.column)

    def _stmt(self) -> Stmt:
        token = self.current
        pos = {"line": token.line, "column": token.column}

        if token.kind == "KEYWORD":
            word = token.text
            if word == "skip":
                self._advance()
                return Skip(**pos)
            if word == "abort":
                self._advance()
                return Abort(**pos)
            if word == "new":
                self._advance()
                qtype = self._type()
                return NewVar(type=qtype, name=self._ident().text, **pos)
            if word == "discard":
                self._advance()
                return Discard(name=self._ident().text, **pos)
            if word == "measure":
                self._advance()
                name = self._ident().text
                self._expect("then")
                then_branch = self._block()
                self._expect("else")
                return Measure(name=name, then_branch=then_branch, else_branch=self._block(), **pos)
            if word == "if":
                self._advance()
                name = self._ident().text
                if self._at("then"):
                    self._advance()
                then_branch = self._block()
                self._expect("else")
                return If(name=name, then_branch=then_branch, else_branch=self._block(), **pos)
            if word == "while":
                self._advance()
                name = self._ident().text
                self._expect("do")
                return While(name=name, body=self._block(), **pos)
            if word == "call":
                self._advance()
                proc = self._ident().text
                self._expect("(")
                args = self._ident_list(")")
                self._expect(")")
                return Call(proc=proc, args=args, **pos)
            raise self._error("Unexpected keyword")

        if token.kind == "IDENT":
            targets = [self._advance().text]
            while self._at(","):
                self._advance()
                targets.append(self._ident().text)
            if self._at("*="):
                self._advance()
                gate = self._ident().text
                self._expect("(")
                args = self._ident_list(")")
                self._expect(")")
                return ApplyUnitary(targets=tuple(targets), gate=gate, args=args, **pos)
            if self._at(":=") and len(targets) == 1:
                self._advance()
                return Assign(name=targets[0], expr=self._expr(), **pos)
            raise self._error("Expected '*=' or ':='")

        raise self._error("Expected a statement")

    def _expr(self) -> Expr:
        token = self.current
        pos = {"line": token.line, "column": token.column}
        if token.kind == "NUMBER":
            self._advance()
            return Literal(value=int(token.text), **pos)
        if token.kind == "IDENT":
            self._advance()
            if self._at("("):
                self._advance()
                args = self._ident_list(")")
                self._expect(")")
                return BuiltinCall(name=token.text, args=args, **pos)
            return VarRef(name=token.text, **pos)
        raise self._error("Expected a number, a variable or a builtin call")


def parse(source: str) -> Program:
    """
    Parse QPL source text.

    Raises:
        ParseError: With line and column of the offending token
    """
    program = Parser(source).parse_program()
    logger.debug(f"Parsed program: {len(program.procs)} procedure(s), {program.node_count()} statement(s)")
    return program
