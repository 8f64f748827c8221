"""
Unit tests for the denotational evaluator.

Tests:
- Denotations of the primitive statements
- Wire placement for unitaries, assignment and branching
- Measurement, classical branching and loops (finite and over nat)
- Recursive procedures and the unrolling chain of a loop
- Schrödinger and Heisenberg runs agreeing
"""

import numpy as np
import pytest

from src.language.evaluator import Evaluator, denote, input_signature, loop_reports, run, wp_run
from src.language.parser import parse
from src.models.errors import TypeCheckError
from src.models.signature import Signature, nat
from src.services import classical_embed as ce
from src.services import qcat
from src.services.qcat import EffectVector, StateVector

COIN_BODY = "new qbit c; c *= H(c); measure c then { discard c; b := 0 } else { discard c; b := 1 }"


def _unrolled(k: int) -> str:
    """k-fold unrolling of the coin loop, ending in abort."""
    if k == 0:
        return "abort"
    return f"if b then {{ {COIN_BODY}; {_unrolled(k - 1)} }} else {{ skip }}"


def _ket(n: int, index: int) -> np.ndarray:
    rho = np.zeros((n, n))
    rho[index, index] = 1.0
    return rho


def _run_source(source: str, state: StateVector) -> StateVector:
    return run(parse(source), state)


def _empty() -> StateVector:
    return StateVector.point(Signature.finite(1), 0)


@pytest.mark.unit
class TestPrimitives:
    """skip, abort, new, discard."""

    def test_skip_is_identity(self):
        arrow = denote(parse("input q: qbit; skip"))

        assert qcat.max_choi_distance(arrow, qcat.identity(Signature.finite(2))) <= 1e-12


    @pytest.mark.parametrize(
        "body",
        [
            "q *= H(q)",
            "measure q then { b := 1 } else { skip }",
            "if b then { q *= X(q) } else { abort }",
            "new qbit c; c, q *= CNOT(c, q); discard c",
        ],
    )
    def test_skip_is_a_unit_for_sequencing(self, body):
        header = "input q: qbit, b: bit;"
        plain = denote(parse(f"{header} {body}"))

        for variant in (f"skip; {body}", f"{body}; skip", f"skip; {body}; skip; skip"):
            assert qcat.max_choi_distance(denote(parse(f"{header} {variant}")), plain) <= 1e-12


    def test_abort_is_bottom(self):
        arrow = denote(parse("input q: qbit; abort"))

        assert not list(arrow.blocks())

    def test_new_qbit_is_ket_zero(self):
        out = _run_source("new qbit q", _empty())

        assert np.allclose(out.part(0), _ket(2, 0))

    def test_new_bit_is_zero(self):
        out = _run_source("new bit b", _empty())

        assert out.weights() == {0: pytest.approx(1.0)}

    def test_discard_is_trace(self, rng):
        arrow = denote(parse("input q: qbit; discard q"))

        assert arrow.target == Signature.finite(1)
        assert qcat.is_trace_preserving(arrow)

    def test_discard_keeps_other_variables(self):
        out = _run_source("new bit a; new qbit q; a := 1; discard a", _empty())

        assert out.signature == Signature.finite(2)
        assert np.allclose(out.part(0), _ket(2, 0))


@pytest.mark.unit
class TestWirePlacement:
    """Statements acting on variables in the middle of the context."""

    def test_unitary_on_second_wire(self):
        state = StateVector(Signature.finite(4), {0: _ket(4, 0)})
        out = _run_source("input p: qbit, q: qbit; q *= X(q)", state)

        assert np.allclose(out.part(0), _ket(4, 1))

    def test_cnot_with_swapped_arguments(self):
        # p = 0, q = 1; q controls p
        state = StateVector(Signature.finite(4), {0: _ket(4, 1)})
        out = _run_source("input p: qbit, q: qbit; q, p *= CNOT(q, p)", state)

        assert np.allclose(out.part(0), _ket(4, 3))

    def test_copy_between_bits(self):
        # keys of bit⊗bit are 2·b + c
        state = StateVector.point(Signature.finite(1, 1, 1, 1), 2)
        out = _run_source("input b: bit, c: bit; c := b", state)

        assert out.weights() == {3: pytest.approx(1.0)}

    def test_literal_assignment(self):
        state = StateVector.from_weights(Signature.finite(1, 1, 1), {0: 0.5, 1: 0.5})
        out = _run_source("input t: trit; t := 2", state)

        assert out.weights() == {2: pytest.approx(1.0)}

    def test_nat_builtin_assignment(self):
        state = ce.product_state([ce.nat_distribution({2: 1.0}), ce.nat_distribution({3: 1.0})])
        out = run(parse("input x: nat, y: nat; x := add(x, y)"), state)

        assert out.weights() == {(5, 3, 0): pytest.approx(1.0)}

    def test_nat_add_program(self, programs_dir):
        program = parse((programs_dir / "nat_add.qpl").read_text())
        state = ce.product_state([ce.nat_distribution({2: 1.0}), ce.nat_distribution({3: 1.0})])

        assert ce.nat_weights(run(program, state)) == {5: pytest.approx(1.0)}

    def test_input_signature(self):
        program = parse("input x: nat, q: qbit; skip")

        assert input_signature(program) == Signature.nat_like(1, (2,))
        assert input_signature(parse("skip")) == Signature.finite(1)


@pytest.mark.unit
class TestBranching:
    """measure and if."""

    def test_hadamard_then_measure_is_fair(self, programs_dir):
        out = run(parse((programs_dir / "hadamard_measure.qpl").read_text()), _empty())

        assert out.signature == Signature.finite(1, 1)
        assert out.weights() == {0: pytest.approx(0.5), 1: pytest.approx(0.5)}

    def test_measure_and_reprepare_is_dephasing(self):
        program = parse(
            "input q: qbit;\n"
            "measure q then { discard q; new qbit q } else { discard q; new qbit q; q *= X(q) }"
        )

        assert qcat.max_choi_distance(denote(program), qcat.dephasing()) <= 1e-12

    def test_then_branch_runs_on_outcome_zero(self):
        state = StateVector(Signature.finite(2), {0: _ket(2, 0)})
        out = _run_source("input q: qbit; new bit r; measure q then { r := 1 } else { skip }", state)

        # context (q: bit, r: bit); q = 0, r = 1
        assert out.weights() == {1: pytest.approx(1.0)}

    def test_if_runs_then_branch_on_one(self):
        source = "input b: bit, q: qbit; if b then { q *= X(q) } else { skip }"
        # keys of bit⊗qbit: 0 for b = 0, 1 for b = 1
        on = _run_source(source, StateVector(Signature.finite(2, 2), {1: _ket(2, 0)}))
        off = _run_source(source, StateVector(Signature.finite(2, 2), {0: _ket(2, 0)}))

        assert np.allclose(on.part(1), _ket(2, 1))
        assert np.allclose(off.part(0), _ket(2, 0))

    def test_branch_denotations_are_trace_preserving(self):
        arrow = denote(parse("input q: qbit; measure q then { q := 1 } else { skip }"))

        assert qcat.is_trace_preserving(arrow)


@pytest.mark.unit
class TestLoops:
    """while as a trace."""

    def test_coin_terminates_almost_surely(self, programs_dir):
        arrow = denote(parse((programs_dir / "coin.qpl").read_text()))
        out = qcat.apply(arrow, _empty())
        (report,) = loop_reports(arrow)

        assert out.total_weight == pytest.approx(1.0, abs=1e-9)
        assert report.converged
        assert 30 <= report.iterations <= 40

    def test_infinite_loop_is_bottom(self):
        arrow = denote(parse("new bit b; b := 1; while b do { skip }; discard b"))
        (report,) = loop_reports(arrow)

        assert qcat.apply(arrow, _empty()).total_weight == 0.0
        assert report.converged

    def test_loop_not_entered(self):
        out = _run_source("new bit b; while b do { abort }; discard b", _empty())

        assert out.total_weight == pytest.approx(1.0)

    def test_iteration_cap_gives_under_approximation(self, programs_dir):
        program = parse((programs_dir / "coin.qpl").read_text())
        arrow = Evaluator(max_iter=5).denote_program(program)
        (report,) = loop_reports(arrow)

        assert not report.converged
        assert qcat.apply(arrow, _empty()).total_weight < 1.0

    def test_coin_counter_is_geometric(self, programs_dir):
        out = run(parse((programs_dir / "coin_counter.qpl").read_text()), _empty())
        weights = ce.nat_weights(out)

        assert out.signature == nat()
        assert sorted(weights) == list(range(len(weights)))
        for n in range(21):
            assert weights[n] == pytest.approx(2.0 ** -(n + 1), abs=1e-9)
        assert out.total_weight == pytest.approx(1.0, abs=1e-8)

    def test_unrolling_is_an_ascending_chain_below_the_loop(self):
        loop = denote(parse(f"input b: bit; while b do {{ {COIN_BODY} }}"))
        chain = [denote(parse(f"input b: bit; {_unrolled(k)}")) for k in range(8)]

        for prev, nxt in zip(chain, chain[1:]):
            assert qcat.cp_leq_arrow(prev, nxt)
        for arrow in chain:
            assert qcat.cp_leq_arrow(arrow, loop)

    def test_unrolling_approaches_the_loop(self):
        loop = denote(parse(f"input b: bit; while b do {{ {COIN_BODY} }}"))
        deep = denote(parse(f"input b: bit; {_unrolled(40)}"))

        assert qcat.max_choi_distance(deep, loop) <= 1e-9


@pytest.mark.unit
class TestProcedures:
    """Recursive procedures as least fixed points."""

    def test_recursive_coin_matches_loop(self, programs_dir):
        arrow = denote(parse((programs_dir / "coin_recursive.qpl").read_text()))
        out = qcat.apply(arrow, _empty())

        assert out.weights() == {0: pytest.approx(1.0, abs=1e-9)}
        assert any(r.kind == "recursion" and r.converged for r in loop_reports(arrow))

    def test_non_recursive_procedure(self):
        source = "input a: qbit, q: qbit;\nproc flip(q: qbit) { q *= X(q) }\ncall flip(q)"
        state = StateVector(Signature.finite(4), {0: _ket(4, 0)})

        assert np.allclose(_run_source(source, state).part(0), _ket(4, 1))

    def test_diverging_procedure_is_bottom(self):
        arrow = denote(parse("proc f(b: bit) { call f(b) }\nnew bit b; call f(b); discard b"))

        assert qcat.apply(arrow, _empty()).total_weight == 0.0


@pytest.mark.unit
class TestPictures:
    """Heisenberg runs agree with Schrödinger runs."""

    def test_wp_of_outcome(self, programs_dir):
        program = parse((programs_dir / "hadamard_measure.qpl").read_text())
        post = EffectVector(Signature.finite(1, 1), {0: [[1.0]]})

        pre = wp_run(program, post)
        assert pre.part(0)[0, 0].real == pytest.approx(0.5)

    def test_duality_on_random_inputs(self, rng):
        program = parse(
            "input q: qbit, b: bit;\n"
            "q *= H(q);\n"
            "if b then { q *= T(q) } else { skip };\n"
            "measure q then { skip } else { b := 0 }"
        )
        arrow = denote(program)
        for _ in range(10):
            state = qcat.random_state(arrow.source, rng)
            effect = qcat.random_effect(arrow.target, rng)
            assert qcat.duality_residual(arrow, state, effect) <= 1e-9

    def test_unknown_gate_is_a_type_error(self):
        with pytest.raises(TypeCheckError):
            denote(parse("new qbit q; q *= FOO(q)"))
