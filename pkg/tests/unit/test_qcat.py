"""
Unit tests for the semantic category.

Tests:
- Category laws (identity, associativity, bi-strictness)
- Coproducts, tensor and the coherence isomorphisms
- Trace-nonincrease and its Heisenberg reading
- Kleene trace and Conway fixed point, including monotonicity failures
- States, effects, wp and the Schrödinger/Heisenberg duality
"""

import numpy as np
import pytest

from src.models.errors import (
    InvariantViolationError,
    NonMonotoneIterationError,
    NotUnitaryError,
    ShapeError,
    SignatureMismatchError,
    UnsupportedSignatureError,
)
from src.models.report import Picture
from src.models.signature import Side, Signature, direct_sum, nat, tensor
from src.services import matrix_core as mc
from src.services import qcat
from src.services.cpmap import KrausMap
from src.services.qcat import EffectVector, QArrow, StateVector

ONE = Signature.finite(1)


def _weight(w: float) -> KrausMap:
    return KrausMap(1, 1, [np.array([[np.sqrt(w)]])])


@pytest.fixture
def coin_loop() -> QArrow:
    """f : 1⊕1 → 1⊕1 entering the loop, then leaving or staying with probability 1/2."""
    return QArrow(
        direct_sum(ONE, ONE),
        direct_sum(ONE, ONE),
        columns={0: {1: _weight(1.0)}, 1: {0: _weight(0.5), 1: _weight(0.5)}},
    )


@pytest.fixture
def coin_step() -> QArrow:
    """g : 1 → 1⊕1 with probability 1/2 on each side."""
    return QArrow(ONE, direct_sum(ONE, ONE), columns={0: {0: _weight(0.5), 1: _weight(0.5)}})


def _weight_of(arrow: QArrow, out=0, key=0) -> float:
    return float(arrow.block(out, key).choi.matrix[0, 0].real)


@pytest.mark.unit
class TestCategoryLaws:
    """Identities, composition and sums."""

    def test_identity_is_neutral(self, random_arrow, random_pair):
        for _ in range(10):
            s, t = random_pair()
            f = random_arrow(s, t)

            assert qcat.max_choi_distance(qcat.compose(qcat.identity(t), f), f) <= 1e-10
            assert qcat.max_choi_distance(qcat.compose(f, qcat.identity(s)), f) <= 1e-10

    def test_composition_is_associative(self, random_arrow, small_signatures):
        a, b, c, d = small_signatures[1], small_signatures[3], small_signatures[4], small_signatures[2]
        f, g, h = random_arrow(a, b), random_arrow(b, c), random_arrow(c, d)

        left = qcat.compose(h, qcat.compose(g, f))
        right = qcat.compose(qcat.compose(h, g), f)
        assert qcat.max_choi_distance(left, right) <= 1e-10

    def test_compose_all_is_diagrammatic(self, random_arrow):
        s, t = Signature.finite(2), Signature.finite(1, 1)
        f, g = random_arrow(s, t), random_arrow(t, s)

        assert qcat.max_choi_distance(qcat.compose_all([f, g]), qcat.compose(g, f)) <= 1e-12

    def test_zero_is_bistrict(self, random_arrow):
        s, t = Signature.finite(2, 1), Signature.finite(1, 2)
        f = random_arrow(s, t)

        assert not list(qcat.compose(f, qcat.zero_arrow(s, s)).blocks())
        assert not list(qcat.compose(qcat.zero_arrow(t, t), f).blocks())

    def test_compose_rejects_mismatch(self, random_arrow):
        f = random_arrow(Signature.finite(2), Signature.finite(1))

        with pytest.raises(SignatureMismatchError):
            qcat.compose(f, f)

    def test_add_of_halves(self, random_arrow):
        f = random_arrow(Signature.finite(2), Signature.finite(1, 1))
        half = qcat.scale_arrow(f, 0.5)

        assert qcat.max_choi_distance(qcat.add([half, half]), f) <= 1e-10

    def test_block_shape_validated(self):
        with pytest.raises(ShapeError):
            QArrow(ONE, Signature.finite(2), columns={0: {0: KrausMap.identity(1)}})


@pytest.mark.unit
class TestCoproductsAndTensor:
    """Injections, copairing, ⊗ and the coherence isomorphisms."""

    def test_copair_after_injections(self, random_arrow):
        s, t, u = Signature.finite(2), Signature.finite(1, 1), Signature.finite(1, 2)
        f, g = random_arrow(s, u), random_arrow(t, u)
        pair = qcat.copair(f, g)

        left = qcat.compose(pair, qcat.injection(s, t, Side.LEFT))
        right = qcat.compose(pair, qcat.injection(s, t, Side.RIGHT))
        assert qcat.max_choi_distance(left, f) <= 1e-12
        assert qcat.max_choi_distance(right, g) <= 1e-12

    def test_copair_of_injections_is_identity(self, small_signatures):
        for s, t in [(small_signatures[1], small_signatures[3]), (Signature.finite(2), Signature.finite(1, 2))]:
            pair = qcat.copair(qcat.injection(s, t, Side.LEFT), qcat.injection(s, t, Side.RIGHT))

            assert pair.source == direct_sum(s, t)
            assert qcat.max_choi_distance(pair, qcat.identity(direct_sum(s, t))) <= 1e-12

    def test_coproduct_swap_is_involutive(self):
        s, t = Signature.finite(2), Signature.finite(1, 3)
        there = qcat.copair(qcat.injection(t, s, Side.RIGHT), qcat.injection(t, s, Side.LEFT))
        back = qcat.copair(qcat.injection(s, t, Side.RIGHT), qcat.injection(s, t, Side.LEFT))

        assert there.target == direct_sum(t, s)
        assert qcat.max_choi_distance(qcat.compose(back, there), qcat.identity(direct_sum(s, t))) <= 1e-12
        assert qcat.max_choi_distance(qcat.compose(there, back), qcat.identity(direct_sum(t, s))) <= 1e-12


    def test_codiagonal_merges(self):
        x = Signature.finite(2)
        nabla = qcat.codiagonal(x)

        assert nabla.source == direct_sum(x, x)
        assert qcat.is_trace_preserving(nabla)

    def test_tensor_is_functorial(self, random_arrow):
        a, b = Signature.finite(2), Signature.finite(1, 1)
        f, g = random_arrow(a, b), random_arrow(b, a)
        f2, g2 = random_arrow(b, b), random_arrow(b, a)

        lhs = qcat.compose(qcat.tensor_arrow(g, g2), qcat.tensor_arrow(f, f2))
        rhs = qcat.tensor_arrow(qcat.compose(g, f), qcat.compose(g2, f2))
        assert qcat.max_choi_distance(lhs, rhs) <= 1e-10

    def test_distributivity_round_trip(self):
        a, b, c = Signature.finite(1, 2), Signature.finite(2), Signature.finite(1, 1)
        there = qcat.distributivity(a, b, c)
        back = qcat.distributivity_inverse(a, b, c)

        round_trip = qcat.compose(back, there)
        assert qcat.max_choi_distance(round_trip, qcat.identity(there.source)) <= 1e-12

    def test_distributivity_is_natural(self, random_arrow):
        a, b, c = Signature.finite(2), Signature.finite(1), Signature.finite(1, 1)
        h = random_arrow(a, a)

        # (h⊗id)⊕(h⊗id) ∘ δ = δ ∘ h⊗id
        lhs = qcat.compose(
            qcat.direct_sum_arrow(
                qcat.tensor_arrow(h, qcat.identity(b)), qcat.tensor_arrow(h, qcat.identity(c))
            ),
            qcat.distributivity(a, b, c),
        )
        rhs = qcat.compose(
            qcat.distributivity(a, b, c), qcat.tensor_arrow(h, qcat.identity(direct_sum(b, c)))
        )
        assert qcat.max_choi_distance(lhs, rhs) <= 1e-10

    def test_wire_swap(self):
        q = qcat.qbit()
        swap = qcat.wire_permutation([q, q], [1, 0])
        zero_one = np.kron(np.diag([1.0, 0.0]), np.diag([0.0, 1.0]))

        out = qcat.apply(swap, StateVector(swap.source, {0: zero_one}))
        assert np.allclose(out.part(0), np.kron(np.diag([0.0, 1.0]), np.diag([1.0, 0.0])))

    def test_wire_permutation_moves_blocks(self):
        bit, q = qcat.bit(), qcat.qbit()
        perm = qcat.wire_permutation([bit, q], [1, 0])

        assert perm.source == Signature.finite(2, 2)
        assert perm.target == tensor(q, bit)
        assert qcat.is_trace_preserving(perm)

    def test_wire_permutation_rejects_non_permutation(self):
        with pytest.raises(ValueError):
            qcat.wire_permutation([qcat.qbit(), qcat.qbit()], [0, 0])


@pytest.mark.unit
class TestQuantumStructure:
    """qbit, measurement, preparation and unitaries."""

    def test_measure_after_prepare_is_identity(self):
        _, iota, p = qcat.qbit_structure()

        assert qcat.max_choi_distance(qcat.compose(p, iota), qcat.identity(qcat.bit())) <= 1e-12

    def test_dephasing_kills_coherences(self):
        plus = np.full((2, 2), 0.5)

        out = qcat.apply(qcat.dephasing(), StateVector(qcat.qbit(), {0: plus}))
        assert np.allclose(out.part(0), np.eye(2) / 2)

    def test_unitary_lift(self):
        h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
        lift = qcat.unitary_lift(h)

        assert qcat.is_trace_preserving(lift)
        out = qcat.apply(lift, StateVector(lift.source, {0: np.diag([1.0, 0.0])}))
        assert np.allclose(out.part(0), np.full((2, 2), 0.5))

    def test_unitary_lift_rejects_non_unitary(self):
        with pytest.raises(NotUnitaryError):
            qcat.unitary_lift(np.array([[1, 1], [0, 1]]))

    def test_unitary_lift_needs_power_of_two(self):
        with pytest.raises(ShapeError):
            qcat.unitary_lift(np.eye(3))


@pytest.mark.unit
class TestTraceConditions:
    """Trace-nonincrease, its Heisenberg reading and invariant checking."""

    def test_random_arrows_are_trace_nonincreasing(self, random_arrow, random_pair):
        for _ in range(20):
            s, t = random_pair()
            assert qcat.is_trace_nonincreasing(random_arrow(s, t))

    def test_trace_preserving_generator(self, random_arrow):
        f = random_arrow(Signature.finite(2, 1), Signature.finite(1, 2), trace_preserving=True)

        assert qcat.is_trace_preserving(f)

    def test_dualize_is_involutive_and_flips_picture(self, random_arrow):
        f = random_arrow(Signature.finite(2, 1), Signature.finite(1, 2, 1), sparsity=0.3)
        dual = qcat.dualize(f)

        assert dual.picture == Picture.HEISENBERG
        assert (dual.source, dual.target) == (f.target, f.source)
        twice = qcat.dualize(dual)
        assert twice.picture == Picture.SCHRODINGER
        assert qcat.max_choi_distance(twice, f) == 0.0

    def test_dual_of_trace_nonincreasing_is_subunital(self, random_arrow):
        f = random_arrow(Signature.finite(2), Signature.finite(1, 1), trace_preserving=True)

        assert qcat.is_subunital(qcat.dualize(f))
        assert qcat.is_unital(qcat.dualize(f))

    def test_overweight_arrow_fails_both_readings(self):
        f = qcat.scale_arrow(qcat.identity(Signature.finite(2)), 1.5)

        assert not qcat.is_trace_nonincreasing(f)
        assert not qcat.is_subunital(qcat.dualize(f))

    def test_dualize_rejects_nat(self):
        with pytest.raises(UnsupportedSignatureError):
            qcat.dualize(qcat.identity(nat()))

    def test_invariant_check_on_compose(self, invariant_checks):
        s = Signature.finite(2)
        overweight = qcat.scale_arrow(qcat.identity(s), 1.5)

        with pytest.raises(InvariantViolationError):
            qcat.compose(qcat.identity(s), overweight)


    def test_invariant_check_on_nat_trace(self, invariant_checks, tol):
        n = nat()
        enter = qcat.injection(n, n, Side.RIGHT)
        heavy_exit = qcat.scale_arrow(qcat.injection(n, n, Side.LEFT), 1.5)
        traced = qcat.trace(qcat.copair(enter, heavy_exit), n, tol)

        with pytest.raises(InvariantViolationError):
            qcat.apply(traced, StateVector.point(n, (2, 0)), tol)


    def test_no_check_by_default(self, monkeypatch):
        monkeypatch.delenv("QPL_CHECK_INVARIANTS", raising=False)
        s = Signature.finite(2)
        overweight = qcat.scale_arrow(qcat.identity(s), 1.5)

        assert qcat.compose(qcat.identity(s), overweight).source == s


@pytest.mark.unit
class TestKleene:
    """Trace, Conway fixed point and least fixed points."""

    def test_trace_chain_is_ascending(self, coin_loop):
        chain = qcat.kleene_trace_chain(coin_loop, ONE)
        weights = [_weight_of(next(chain)[0]) for _ in range(6)]

        # the first iterate cannot exit yet
        assert weights[0] == pytest.approx(0.0)
        for n, w in enumerate(weights[1:], start=2):
            assert w == pytest.approx(1 - 2 ** -(n - 1))

    def test_fair_coin_chain_is_geometric(self):
        # entry and loop-back columns both exit or loop with probability 1/2
        fair = QArrow(
            direct_sum(ONE, ONE),
            direct_sum(ONE, ONE),
            columns={0: {0: _weight(0.5), 1: _weight(0.5)}, 1: {0: _weight(0.5), 1: _weight(0.5)}},
        )
        chain = qcat.kleene_trace_chain(fair, ONE)

        for n in range(1, 21):
            entry, _ = next(chain)
            assert abs(_weight_of(entry) - (1 - 2.0**-n)) <= 1e-12


    def test_trace_of_coin_converges_to_one(self, coin_loop, tol):
        result = qcat.trace(coin_loop, ONE, tol)
        report = result.iterations[-1]

        assert _weight_of(result) == pytest.approx(1.0, abs=1e-9)
        assert report.converged
        assert 30 <= report.iterations <= 40
        assert report.min_slack >= -1e-9

    def test_trace_without_exit_is_bottom(self, tol):
        loop = QArrow(
            direct_sum(ONE, ONE),
            direct_sum(ONE, ONE),
            columns={0: {1: _weight(1.0)}, 1: {1: _weight(1.0)}},
        )
        result = qcat.trace(loop, ONE, tol)

        assert not list(result.blocks())
        assert result.iterations[-1].converged
        assert result.iterations[-1].iterations <= 2

    def test_trace_hits_iteration_cap(self, coin_loop, tol):
        result = qcat.trace(coin_loop, ONE, tol, max_iter=5)
        report = result.iterations[-1]

        assert not report.converged
        assert report.iterations == 5
        assert _weight_of(result) < 1.0

    def test_trace_of_direct_sum_vanishes(self, random_arrow, tol):
        a, b, x = Signature.finite(2), Signature.finite(1, 1), Signature.finite(1)
        h = random_arrow(a, b)
        k = QArrow(x, x, columns={0: {0: _weight(0.3)}})

        result = qcat.trace(qcat.direct_sum_arrow(h, k), x, tol)
        assert qcat.max_choi_distance(result, h) <= 1e-10

    def test_trace_is_natural_in_output(self, coin_loop, random_arrow, tol):
        u = random_arrow(ONE, Signature.finite(2, 1))

        lhs = qcat.trace(
            qcat.compose(qcat.direct_sum_arrow(u, qcat.identity(ONE)), coin_loop), ONE, tol
        )
        rhs = qcat.compose(u, qcat.trace(coin_loop, ONE, tol))
        assert qcat.max_choi_distance(lhs, rhs) <= 1e-8


    def test_nat_trace_report_before_and_after_columns(self, tol):
        n = nat()
        stay_or_leave = qcat.add(
            [
                qcat.scale_arrow(qcat.injection(n, n, Side.LEFT), 0.5),
                qcat.scale_arrow(qcat.injection(n, n, Side.RIGHT), 0.5),
            ]
        )
        traced = qcat.trace(qcat.copair(qcat.injection(n, n, Side.RIGHT), stay_or_leave), n, tol)
        report = traced.iterations[-1]

        assert report.converged and report.columns == 0

        out = qcat.apply(traced, StateVector.point(n, (3, 0)), tol)
        assert out.total_weight == pytest.approx(1.0, abs=1e-9)
        assert report.columns == 1 and report.converged


    def test_trace_rejects_wrong_loop_object(self, coin_loop):
        with pytest.raises(SignatureMismatchError):
            qcat.trace(coin_loop, Signature.finite(2))

    def test_fix_satisfies_conway_equation(self, coin_step, tol):
        fixed = qcat.fix(coin_step, tol)
        unfolded = qcat.compose(qcat.copair(qcat.identity(ONE), fixed), coin_step)

        assert _weight_of(fixed) == pytest.approx(1.0, abs=1e-9)
        assert qcat.max_choi_distance(fixed, unfolded) <= 1e-9


    def test_fix_of_constant_body(self, random_arrow, tol):
        # g = κ₁∘h never re-enters the loop
        x, a = Signature.finite(2, 1), Signature.finite(1, 2)
        h = random_arrow(x, a)
        g = qcat.compose(qcat.injection(a, x, Side.LEFT), h)

        fixed = qcat.fix(g, tol)
        assert qcat.max_choi_distance(fixed, h) <= 1e-12
        assert fixed.iterations[-1].converged

    def test_fix_of_identity_body_is_bottom(self, tol):
        x, a = Signature.finite(2), Signature.finite(1)
        fixed = qcat.fix(qcat.injection(a, x, Side.RIGHT), tol)

        assert fixed.source == x and fixed.target == a
        assert qcat.max_choi_distance(fixed, qcat.zero_arrow(x, a)) == 0.0
        assert fixed.iterations[-1].converged


    def test_fix_chain_is_ascending(self, coin_step):
        chain = qcat.kleene_fix_chain(coin_step)
        arrows = [next(chain) for _ in range(5)]

        for prev, nxt in zip(arrows, arrows[1:]):
            assert qcat.cp_leq_arrow(prev, nxt)

    def test_least_fixed_point_rejects_decreasing_iterates(self, tol):
        calls = []

        def functional(current):
            calls.append(1)
            if len(calls) == 1:
                return [qcat.identity(ONE)]
            return [qcat.zero_arrow(ONE, ONE)]

        with pytest.raises(NonMonotoneIterationError):
            qcat.least_fixed_point(functional, [(ONE, ONE)], tol)

    def test_least_fixed_point_of_halving(self, tol):
        # F(x) = 1/2 + x/2 on 1 → 1
        def functional(current):
            return [qcat.add([qcat.scale_arrow(qcat.identity(ONE), 0.5), qcat.scale_arrow(current[0], 0.5)])]

        (result,) = qcat.least_fixed_point(functional, [(ONE, ONE)], tol)
        assert _weight_of(result) == pytest.approx(1.0, abs=1e-9)
        assert result.iterations[-1].kind == "recursion"

    def test_lub_chain(self, coin_step):
        chain = qcat.kleene_fix_chain(coin_step)
        arrows = [next(chain) for _ in range(60)]

        lub = qcat.lub_chain(arrows)
        assert lub.iterations[0].converged
        assert lub.block(0, 0).choi_backed
        assert _weight_of(lub) == pytest.approx(1.0, abs=1e-9)

    def test_lub_chain_rejects_non_chain(self):
        with pytest.raises(NonMonotoneIterationError):
            qcat.lub_chain([qcat.identity(ONE), qcat.zero_arrow(ONE, ONE)])


@pytest.mark.unit
class TestStatesAndEffects:
    """apply, wp and their duality."""

    def test_state_trace_bound(self):
        with pytest.raises(InvariantViolationError):
            StateVector.from_weights(qcat.bit(), {0: 0.7, 1: 0.7})

    def test_state_blocks_must_be_positive(self):
        with pytest.raises(InvariantViolationError):
            StateVector(qcat.qbit(), {0: np.diag([1.0, -0.5])})

    def test_effect_blocks_bounded(self):
        with pytest.raises(InvariantViolationError):
            EffectVector(qcat.qbit(), {0: 1.5 * np.eye(2)})

    def test_apply_on_nat_state_requires_matching_signature(self):
        with pytest.raises(SignatureMismatchError):
            qcat.apply(qcat.identity(nat()), StateVector.point(qcat.bit(), 0))

    def test_duality_on_random_arrows(self, random_arrow, random_pair, rng):
        for _ in range(20):
            s, t = random_pair()
            f = random_arrow(s, t, sparsity=0.2)
            state = qcat.random_state(s, rng)
            effect = qcat.random_effect(t, rng)

            assert qcat.duality_residual(f, state, effect) <= 1e-9

    def test_wp_is_monotone(self, random_arrow, rng):
        s, t = Signature.finite(2, 1), Signature.finite(1, 2)
        f = random_arrow(s, t)
        small = qcat.random_effect(t, rng)
        large = EffectVector(t, {k: (small.part(k) + np.eye(t.block_dim(k))) / 2 for k in t.keys()})

        pre_small, pre_large = qcat.wp(f, small), qcat.wp(f, large)
        for key in s.keys():
            assert mc.loewner_leq(pre_small.part(key), pre_large.part(key))

    def test_wp_of_truth_is_unit_image(self, random_arrow):
        f = random_arrow(Signature.finite(2), Signature.finite(1, 1))
        pre = qcat.wp(f, qcat.unit_effect(f.target))

        assert np.allclose(pre.part(0), qcat.column_unit_image(f, 0))

    def test_wp_on_nat_needs_keys(self):
        with pytest.raises(UnsupportedSignatureError):
            qcat.wp(qcat.identity(nat()), qcat.unit_effect(nat()))

    def test_pairing_of_measurement(self):
        _, _, p = qcat.qbit_structure()
        state = StateVector(qcat.qbit(), {0: np.diag([0.25, 0.75])})
        outcome_one = EffectVector(qcat.bit(), {1: [[1.0]]})

        assert qcat.pairing(state, qcat.wp(p, outcome_one)) == pytest.approx(0.75)
        assert qcat.pairing(qcat.apply(p, state), outcome_one) == pytest.approx(0.75)
