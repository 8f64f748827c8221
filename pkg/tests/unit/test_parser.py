"""
Unit tests for the QPL parser.

Tests:
- Tokenizing with positions and comments
- Every statement form and expression form
- Input headers and procedure definitions
- Positioned syntax errors
"""

import pytest

from src.language.parser import MAX_NESTING, parse, tokenize
from src.models.errors import ParseError
from src.models.program import (
    ApplyUnitary,
    Assign,
    BuiltinCall,
    Call,
    Discard,
    If,
    Literal,
    Measure,
    NewVar,
    QType,
    Seq,
    Skip,
    VarRef,
    While,
)


@pytest.mark.unit
class TestTokenizer:
    """Token kinds and positions."""

    def test_positions_are_one_based(self):
        tokens = tokenize("new qbit q;\n  q *= H(q)")

        assert (tokens[0].text, tokens[0].line, tokens[0].column) == ("new", 1, 1)
        star = next(t for t in tokens if t.text == "*=")
        assert (star.line, star.column) == (2, 5)
        assert tokens[-1].kind == "EOF"

    def test_keywords_are_recognized(self):
        kinds = [t.kind for t in tokenize("while b do")]

        assert kinds == ["KEYWORD", "IDENT", "KEYWORD", "EOF"]

    def test_comments_are_skipped(self):
        tokens = tokenize("skip # ignore * everything\nabort")

        assert [t.text for t in tokens if t.kind != "EOF"] == ["skip", "abort"]

    def test_unexpected_character(self):
        with pytest.raises(ParseError) as exc:
            tokenize("skip;\n  @")

        assert (exc.value.line, exc.value.column) == (2, 3)


@pytest.mark.unit
class TestStatements:
    """Statement forms."""

    def test_new_discard_skip(self):
        body = parse("new qbit q; skip; discard q").body.body

        assert isinstance(body[0], NewVar) and body[0].type == QType.QBIT
        assert isinstance(body[1], Skip)
        assert isinstance(body[2], Discard) and body[2].name == "q"

    def test_unitary_with_several_targets(self):
        (stmt,) = parse("a, b *= CNOT(a, b)").body.body

        assert isinstance(stmt, ApplyUnitary)
        assert stmt.targets == ("a", "b")
        assert stmt.gate == "CNOT"
        assert stmt.args == ("a", "b")

    def test_measure_branches(self):
        (stmt,) = parse("measure q then { skip } else { discard q; new qbit q }").body.body

        assert isinstance(stmt, Measure)
        assert len(stmt.then_branch.body) == 1
        assert len(stmt.else_branch.body) == 2

    def test_if_with_and_without_then(self):
        with_then = parse("if b then { skip } else { abort }").body.body[0]
        without = parse("if b { skip } else { abort }").body.body[0]

        assert isinstance(with_then, If) and isinstance(without, If)
        assert [s.kind for s in with_then.then_branch.body] == ["skip"]
        assert [s.kind for s in without.else_branch.body] == ["abort"]

    def test_while(self):
        (stmt,) = parse("while b do { b := 0 }").body.body

        assert isinstance(stmt, While)
        assert isinstance(stmt.body.body[0], Assign)

    def test_call(self):
        (stmt,) = parse("call flip(b)").body.body

        assert isinstance(stmt, Call)
        assert stmt.proc == "flip" and stmt.args == ("b",)

    @pytest.mark.parametrize(
        "source,expected_type",
        [
            ("b := 1", Literal),
            ("b := c", VarRef),
            ("n := succ(n)", BuiltinCall),
            ("z := add(x, y)", BuiltinCall),
        ],
    )
    def test_expressions(self, source, expected_type):
        (stmt,) = parse(source).body.body

        assert isinstance(stmt.expr, expected_type)

    def test_trailing_semicolon_and_empty_blocks(self):
        program = parse("measure q then { } else { skip; };")

        assert isinstance(program.body.body[0].then_branch, Seq)
        assert program.body.body[0].then_branch.body == ()

    def test_empty_program(self):
        assert parse("").body.body == ()

    def test_statement_positions(self):
        program = parse("skip;\n\n  discard q")

        assert (program.body.body[1].line, program.body.body[1].column) == (3, 3)


@pytest.mark.unit
class TestProgramStructure:
    """Input headers and procedures."""

    def test_input_header(self):
        program = parse("input x: nat, y: nat;\ninput q: qbit;\nskip")

        assert [(p.name, p.type) for p in program.inputs] == [
            ("x", QType.NAT),
            ("y", QType.NAT),
            ("q", QType.QBIT),
        ]

    def test_procedure_definition(self):
        program = parse("proc flip(b: bit) { call flip(b) }\nnew bit b")

        proc = program.proc("flip")
        assert proc is not None
        assert [p.name for p in proc.params] == ["b"]
        assert program.proc("missing") is None
        assert program.node_count() == 1

    def test_bundled_programs_parse(self, programs_dir):
        for path in sorted(programs_dir.glob("*.qpl")):
            program = parse(path.read_text(encoding="utf-8"))
            assert program.node_count() >= 1, path.name


@pytest.mark.unit
class TestSyntaxErrors:
    """Positioned errors."""

    def test_missing_semicolon(self):
        with pytest.raises(ParseError) as exc:
            parse("new qbit q\nq *= H(q)")

        assert (exc.value.line, exc.value.column) == (2, 1)
        assert "Expected ';'" in exc.value.message
        assert str(exc.value).startswith("2:1: ")

    def test_missing_else(self):
        with pytest.raises(ParseError) as exc:
            parse("measure q then { skip }")

        assert "Expected 'else'" in exc.value.message
        assert "end of input" in exc.value.message

    def test_keyword_as_variable(self):
        with pytest.raises(ParseError) as exc:
            parse("new qbit while")

        assert exc.value.column == 10

    def test_unknown_type(self):
        with pytest.raises(ParseError):
            parse("new int x")

    def test_assignment_needs_single_target(self):
        with pytest.raises(ParseError):
            parse("a, b := 1")

    def test_unclosed_block(self):
        with pytest.raises(ParseError):
            parse("while b do { skip")

    def test_deep_nesting_is_a_positioned_error(self):
        source = "while b do { " * 600 + "skip" + " }" * 600

        with pytest.raises(ParseError) as exc:
            parse(source)

        # the first block past the limit opens at column 13 * MAX_NESTING + 12
        assert (exc.value.line, exc.value.column) == (1, 13 * MAX_NESTING + 12)
        assert "nested deeper" in exc.value.message

    def test_nesting_at_the_limit(self):
        source = "while b do { " * MAX_NESTING + "skip" + " }" * MAX_NESTING

        program = parse(source)
        assert program.node_count() == MAX_NESTING + 1
