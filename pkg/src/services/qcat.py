"""
The semantic category: arrows are matrices of CP block maps between signatures.

Block (i, j) of an arrow maps the j-th source block to the i-th target block in
the Schrödinger orientation. Arrows are stored column-wise and only nonzero
blocks are kept. Columns of arrows with a Finite source are built eagerly;
columns over a NatLike source are built on first use and memoized.
"""

from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.models.errors import (
    InvariantViolationError,
    NonMonotoneIterationError,
    ShapeError,
    SignatureMismatchError,
    UnsupportedSignatureError,
)
from src.models.report import IterationReport, Picture
from src.models.signature import (
    BlockKey,
    BlockPermutation,
    Side,
    Signature,
    combine_all_keys,
    combine_keys,
    direct_sum,
    distributivity_inverse_key,
    distributivity_key,
    inject_key,
    split_all_keys,
    split_direct_sum,
    split_key,
    summand_of,
    tensor,
    tensor_all,
)
from src.models.tolerance import Tolerance, resolve_tolerance
from src.services import cpmap as cp
from src.services import matrix_core as mc
from src.services.cpmap import KrausMap
from src.services.matrix_core import CMatrix
from src.utils.config import get_config
from src.utils.logger import get_logger

logger = get_logger("qcat")

Column = Dict[BlockKey, KrausMap]
ColumnFactory = Callable[[BlockKey], Mapping[BlockKey, KrausMap]]


class QArrow:
    """
    Arrow source → target of the semantic category.

    Args:
        source: Source signature
        target: Target signature
        columns: Explicit columns, source key → {target key: block}
        column_factory: Builds the column of a source key on demand
        picture: Presentation of the blocks (Heisenberg after :func:`dualize`)
        iterations: Kleene reports of the loops and fixed points inside
    """

    def __init__(
        self,
        source: Signature,
        target: Signature,
        columns: Optional[Mapping[BlockKey, Mapping[BlockKey, KrausMap]]] = None,
        column_factory: Optional[ColumnFactory] = None,
        picture: Picture = Picture.SCHRODINGER,
        iterations: Optional[Sequence[IterationReport]] = None,
    ):
        self.source = source
        self.target = target
        self.picture = picture
        self.iterations: List[IterationReport] = list(iterations or [])
        self._factory = column_factory
        self._columns: Dict[BlockKey, Column] = {}

        for key, column in (columns or {}).items():
            self._columns[key] = self._validated(key, column)
        if source.is_finite:
            for key in source.keys():
                if key not in self._columns:
                    self.column(key)

    def _validated(self, key: BlockKey, column: Mapping[BlockKey, KrausMap]) -> Column:
        in_dim = self.source.block_dim(key)
        result: Column = {}
        for out, block in column.items():
            if not self.target.is_valid_key(out):
                raise SignatureMismatchError(f"Invalid target key {out!r} for {self.target}")
            if block.in_dim != in_dim or block.out_dim != self.target.block_dim(out):
                raise ShapeError(
                    f"Block {out!r}<-{key!r} is M_{block.in_dim} -> M_{block.out_dim}, "
                    f"expected M_{in_dim} -> M_{self.target.block_dim(out)}"
                )
            if not block.is_zero:
                result[out] = block
        return result

    def column(self, key: BlockKey) -> Column:
        """Nonzero blocks of the column of ``key`` (materialized on first use)."""
        cached = self._columns.get(key)
        if cached is not None:
            return cached
        if not self.source.is_valid_key(key):
            raise SignatureMismatchError(f"Invalid source key {key!r} for {self.source}")
        built = self._factory(key) if self._factory is not None else {}
        column = self._validated(key, built)
        self._columns[key] = column
        return column

    def block(self, out: BlockKey, key: BlockKey) -> KrausMap:
        """Block (out, key); the zero map when absent."""
        found = self.column(key).get(out)
        if found is not None:
            return found
        return KrausMap.zero(self.source.block_dim(key), self.target.block_dim(out))

    def materialized_keys(self) -> List[BlockKey]:
        return list(self._columns.keys())

    def blocks(self) -> Iterator[Tuple[BlockKey, BlockKey, KrausMap]]:
        """(target key, source key, block) over the materialized nonzero blocks."""
        for key, column in self._columns.items():
            for out, block in column.items():
                yield out, key, block

    @property
    def is_finite(self) -> bool:
        return self.source.is_finite and self.target.is_finite

    def with_iterations(self, iterations: Sequence[IterationReport]) -> "QArrow":
        """Same arrow carrying a different list of Kleene reports."""
        return QArrow(
            self.source,
            self.target,
            columns=self._columns,
            column_factory=self._factory,
            picture=self.picture,
            iterations=iterations,
        )

    def __repr__(self) -> str:
        count = sum(len(c) for c in self._columns.values())
        return f"QArrow({self.source} -> {self.target}, {count} blocks, {self.picture.value})"


def _guarded(arrow: QArrow) -> QArrow:
    """Re-check trace-nonincrease when invariant checking is switched on."""
    if get_config().check_invariants and not is_trace_nonincreasing(arrow):
        raise InvariantViolationError(f"{arrow} is not trace-nonincreasing")
    return arrow


def _require_same_endpoints(f: QArrow, g: QArrow) -> None:
    if f.source != g.source or f.target != g.target:
        raise SignatureMismatchError(
            f"Arrows {f.source}->{f.target} and {g.source}->{g.target} have different endpoints"
        )


# ============================================================================
# Category structure
# ============================================================================

def identity(s: Signature) -> QArrow:
    return QArrow(s, s, column_factory=lambda key: {key: KrausMap.identity(s.block_dim(key))})


def zero_arrow(s: Signature, t: Signature) -> QArrow:
    """The least arrow ⊥ : s → t."""
    return QArrow(s, t)


def compose(g: QArrow, f: QArrow, tol: Optional[Tolerance] = None) -> QArrow:
    """
    g ∘ f, block (i, j) = Σ_p g_ip ∘ f_pj.

    Raises:
        SignatureMismatchError: If f.target differs from g.source
    """
    if f.target != g.source:
        raise SignatureMismatchError(f"Cannot compose {g.source}->{g.target} after {f.source}->{f.target}")

    def column(key: BlockKey) -> Column:
        acc: Dict[BlockKey, List[KrausMap]] = {}
        for mid, f_block in f.column(key).items():
            for out, g_block in g.column(mid).items():
                acc.setdefault(out, []).append(cp.compose(g_block, f_block, tol))
        return {out: cp.add(maps, tol) for out, maps in acc.items()}

    return _guarded(
        QArrow(f.source, g.target, column_factory=column, iterations=f.iterations + g.iterations)
    )


def compose_all(arrows: Sequence[QArrow], tol: Optional[Tolerance] = None) -> QArrow:
    """Diagrammatic composite: ``arrows[0]`` runs first."""
    if not arrows:
        raise ValueError("compose_all needs at least one arrow")
    result = arrows[0]
    for arrow in arrows[1:]:
        result = compose(arrow, result, tol)
    return result


def add(arrows: Sequence[QArrow], tol: Optional[Tolerance] = None) -> QArrow:
    """Blockwise sum of arrows with equal endpoints."""
    if not arrows:
        raise ValueError("add needs at least one arrow")
    first = arrows[0]
    for other in arrows[1:]:
        _require_same_endpoints(first, other)

    def column(key: BlockKey) -> Column:
        acc: Dict[BlockKey, List[KrausMap]] = {}
        for arrow in arrows:
            for out, block in arrow.column(key).items():
                acc.setdefault(out, []).append(block)
        return {out: cp.add(maps, tol) for out, maps in acc.items()}

    iterations = [report for arrow in arrows for report in arrow.iterations]
    return QArrow(first.source, first.target, column_factory=column, iterations=iterations)


def scale_arrow(f: QArrow, factor: float) -> QArrow:
    """factor · f for factor ≥ 0."""
    return QArrow(
        f.source,
        f.target,
        column_factory=lambda key: {out: cp.scale(b, factor) for out, b in f.column(key).items()},
        iterations=f.iterations,
    )


# ============================================================================
# Coproducts
# ============================================================================

def injection(s: Signature, t: Signature, side: Side) -> QArrow:
    """κ_left : s → s⊕t or κ_right : t → s⊕t."""
    part = s if side == Side.LEFT else t
    total = direct_sum(s, t)
    return QArrow(
        part,
        total,
        column_factory=lambda key: {inject_key(s, t, side, key): KrausMap.identity(part.block_dim(key))},
    )


def copair(f: QArrow, g: QArrow) -> QArrow:
    """[f, g] : s⊕t → u for f : s → u and g : t → u."""
    if f.target != g.target:
        raise SignatureMismatchError(f"copair needs a shared target, got {f.target} and {g.target}")
    s, t = f.source, g.source

    def column(key: BlockKey) -> Column:
        side, inner = summand_of(s, t, key)
        return dict((f if side == Side.LEFT else g).column(inner))

    return _guarded(
        QArrow(direct_sum(s, t), f.target, column_factory=column, iterations=f.iterations + g.iterations)
    )


def codiagonal(x: Signature) -> QArrow:
    """∇ = [id, id] : x⊕x → x."""
    return copair(identity(x), identity(x))


def direct_sum_arrow(f: QArrow, g: QArrow) -> QArrow:
    """f ⊕ g = [κ₁∘f, κ₂∘g]."""
    left = compose(injection(f.target, g.target, Side.LEFT), f)
    right = compose(injection(f.target, g.target, Side.RIGHT), g)
    return copair(left, right)


# ============================================================================
# Tensor and coherence isomorphisms
# ============================================================================

def tensor_arrow(f: QArrow, g: QArrow, tol: Optional[Tolerance] = None) -> QArrow:
    """f ⊗ g with blocks f_ij ⊗ g_i'j' in the lexicographic order of :func:`tensor`."""
    source = tensor(f.source, g.source)
    target = tensor(f.target, g.target)

    def column(key: BlockKey) -> Column:
        key_f, key_g = split_key(f.source, g.source, key)
        result: Column = {}
        for out_f, block_f in f.column(key_f).items():
            for out_g, block_g in g.column(key_g).items():
                out = combine_keys(f.target, g.target, out_f, out_g)
                result[out] = cp.tensor(block_f, block_g, tol)
        return result

    return _guarded(QArrow(source, target, column_factory=column, iterations=f.iterations + g.iterations))


def reindex(source: Signature, target: Signature, key_map: Callable[[BlockKey], BlockKey]) -> QArrow:
    """Arrow moving each source block unchanged to the block ``key_map(key)``."""

    def column(key: BlockKey) -> Column:
        out = key_map(key)
        dim = source.block_dim(key)
        if target.block_dim(out) != dim:
            raise ShapeError(f"Block {key!r} of {source} cannot move to {out!r} of {target}")
        return {out: KrausMap.identity(dim)}

    return QArrow(source, target, column_factory=column)


def permutation_arrow(perm: BlockPermutation) -> QArrow:
    return reindex(perm.source, perm.target, perm.apply)


def distributivity(a: Signature, b: Signature, c: Signature) -> QArrow:
    """a⊗(b⊕c) → (a⊗b)⊕(a⊗c)."""
    return reindex(
        tensor(a, direct_sum(b, c)),
        direct_sum(tensor(a, b), tensor(a, c)),
        lambda key: distributivity_key(a, b, c, key),
    )


def distributivity_inverse(a: Signature, b: Signature, c: Signature) -> QArrow:
    """(a⊗b)⊕(a⊗c) → a⊗(b⊕c)."""
    return reindex(
        direct_sum(tensor(a, b), tensor(a, c)),
        tensor(a, direct_sum(b, c)),
        lambda key: distributivity_inverse_key(a, b, c, key),
    )


def _factor_permutation(dims: Sequence[int], order: Sequence[int]) -> CMatrix:
    """Unitary sending ⊗_k C^{dims[k]} to ⊗_m C^{dims[order[m]]}."""
    n = len(dims)
    total = int(np.prod(dims)) if dims else 1
    if n < 2:
        return np.eye(total)
    grid = np.eye(total).reshape(tuple(dims) + tuple(dims))
    axes = list(order) + [n + k for k in range(n)]
    return np.transpose(grid, axes).reshape(total, total)


def wire_permutation(factors: Sequence[Signature], order: Sequence[int]) -> QArrow:
    """
    Symmetry isomorphism ⊗_k factors[k] → ⊗_m factors[order[m]].

    Args:
        factors: Tensor factors of the source, left to right
        order: order[m] is the source position of the m-th target factor
    """
    factors = list(factors)
    order = list(order)
    if sorted(order) != list(range(len(factors))):
        raise ValueError(f"Not a permutation of {len(factors)} factors: {order}")
    permuted = [factors[i] for i in order]
    source = tensor_all(factors)
    target = tensor_all(permuted)

    def column(key: BlockKey) -> Column:
        keys = split_all_keys(factors, key)
        dims = [sig.block_dim(k) for sig, k in zip(factors, keys)]
        out = combine_all_keys(permuted, [keys[i] for i in order])
        dim = source.block_dim(key)
        return {out: KrausMap(dim, dim, (_factor_permutation(dims, order),))}

    return QArrow(source, target, column_factory=column)


# ============================================================================
# Order, distances and trace conditions
# ============================================================================

def _shared_keys(f: QArrow, g: QArrow) -> List[BlockKey]:
    keys = list(f.materialized_keys())
    keys += [k for k in g.materialized_keys() if k not in f._columns]
    return keys


def cp_leq_arrow(f: QArrow, g: QArrow, tol: Optional[Tolerance] = None) -> bool:
    """f ⊑ g blockwise (on the materialized columns for NatLike sources)."""
    _require_same_endpoints(f, g)
    for key in _shared_keys(f, g):
        outs = set(f.column(key)) | set(g.column(key))
        for out in outs:
            if not cp.cp_leq(f.block(out, key), g.block(out, key), tol):
                return False
    return True


def order_slack(f: QArrow, g: QArrow, tol: Optional[Tolerance] = None) -> float:
    """Smallest Choi eigenvalue of g − f over all blocks (≥ 0 up to noise when f ⊑ g)."""
    _require_same_endpoints(f, g)
    slack = 0.0
    for key in _shared_keys(f, g):
        for out in set(f.column(key)) | set(g.column(key)):
            diff = g.block(out, key).choi.matrix - f.block(out, key).choi.matrix
            slack = min(slack, mc.min_eigenvalue(diff, tol))
    return slack


def max_choi_distance(f: QArrow, g: QArrow) -> float:
    """Largest max-entry difference between corresponding Choi blocks."""
    _require_same_endpoints(f, g)
    distance = 0.0
    for key in _shared_keys(f, g):
        for out in set(f.column(key)) | set(g.column(key)):
            distance = max(distance, cp.choi_distance(f.block(out, key), g.block(out, key)))
    return distance


def column_unit_image(f: QArrow, key: BlockKey) -> CMatrix:
    """Σ_i (f_ij)*(1) for the column j = key."""
    dim = f.source.block_dim(key)
    total = np.zeros((dim, dim), dtype=complex)
    for block in f.column(key).values():
        total += cp.heisenberg_unit_image(block)
    return total


def is_trace_nonincreasing(f: QArrow, tol: Optional[Tolerance] = None) -> bool:
    """Every column satisfies Σ_i (f_ij)*(1) ≤ 1."""
    for key in f.materialized_keys():
        dim = f.source.block_dim(key)
        if not mc.loewner_leq(column_unit_image(f, key), np.eye(dim), tol):
            return False
    return True


def is_trace_preserving(f: QArrow, tol: Optional[Tolerance] = None) -> bool:
    """Every column satisfies Σ_i (f_ij)*(1) = 1."""
    tol = resolve_tolerance(tol)
    for key in f.materialized_keys():
        dim = f.source.block_dim(key)
        if mc.max_entry(column_unit_image(f, key) - np.eye(dim)) > tol.eps_eq:
            return False
    return True


def row_unit_image(f: QArrow, out: BlockKey) -> CMatrix:
    """Σ_j f_ij(1) for the row i = out; the unit image of a Heisenberg-presented map."""
    if not f.source.is_finite:
        raise UnsupportedSignatureError("Row sums need a Finite source")
    dim = f.target.block_dim(out)
    total = np.zeros((dim, dim), dtype=complex)
    for key in f.source.keys():
        block = f.column(key).get(out)
        if block is not None:
            total += cp.apply_schrodinger(block, np.eye(block.in_dim))
    return total


def is_subunital(f: QArrow, tol: Optional[Tolerance] = None) -> bool:
    """For an arrow in Heisenberg presentation: the image of 1 is ≤ 1 in every block."""
    if not f.target.is_finite:
        raise UnsupportedSignatureError("is_subunital needs a Finite target")
    return all(
        mc.loewner_leq(row_unit_image(f, out), np.eye(f.target.block_dim(out)), tol)
        for out in f.target.keys()
    )


def is_unital(f: QArrow, tol: Optional[Tolerance] = None) -> bool:
    """For an arrow in Heisenberg presentation: the image of 1 is 1."""
    tol = resolve_tolerance(tol)
    if not f.target.is_finite:
        raise UnsupportedSignatureError("is_unital needs a Finite target")
    return all(
        mc.max_entry(row_unit_image(f, out) - np.eye(f.target.block_dim(out))) <= tol.eps_eq
        for out in f.target.keys()
    )


# ============================================================================
# Kleene iteration: trace, Conway fixed point, recursion
# ============================================================================

def _monotone_step(prev: QArrow, nxt: QArrow, tol: Tolerance, kind: str) -> float:
    if not cp_leq_arrow(prev, nxt, tol):
        slack = order_slack(prev, nxt, tol)
        raise NonMonotoneIterationError(f"{kind} iterate decreased (Choi eigenvalue {slack:.3e})")
    return order_slack(prev, nxt, tol)


def _split_loop(f: QArrow, loop: Signature) -> Tuple[Signature, Signature]:
    try:
        return split_direct_sum(f.source, loop), split_direct_sum(f.target, loop)
    except SignatureMismatchError as e:
        raise SignatureMismatchError(
            f"Cannot trace {f.source}->{f.target} over loop object {loop}: {e}"
        ) from e


def kleene_trace_chain(
    f: QArrow, loop: Signature, tol: Optional[Tolerance] = None
) -> Iterator[Tuple[QArrow, QArrow]]:
    """
    Iterates (S_n∘κ₁, S_n∘κ₂) for n = 1, 2, ... where S_0 = ⊥ and
    S_{n+1} = [id_B, S_n∘κ₂]∘f, for f : A⊕X → B⊕X with X = ``loop``.
    """
    a, b = _split_loop(f, loop)
    entry = compose(f, injection(a, loop, Side.LEFT), tol)
    body = compose(f, injection(a, loop, Side.RIGHT), tol)
    id_b = identity(b)
    back = zero_arrow(loop, b)
    while True:
        step = copair(id_b, back)
        current = compose(step, entry, tol)
        back = compose(step, body, tol)
        yield current, back


def trace(
    f: QArrow,
    loop: Signature,
    tol: Optional[Tolerance] = None,
    max_iter: Optional[int] = None,
) -> QArrow:
    """
    Trace Tr(f) : A → B of f : A⊕X → B⊕X over X = ``loop``.

    Finite arrows run the Kleene chain of :func:`kleene_trace_chain`, checking
    monotonicity at each step and stopping once S_n stops moving (max-entry
    Choi change ≤ eps_fix). NatLike arrows are traced column by column on
    demand, propagating a finitely supported frontier through the loop.

    Non-convergence within ``max_iter`` is not an error: the last iterate
    under-approximates the trace and its report says ``converged=False``.

    Raises:
        NonMonotoneIterationError: If an iterate is not above its predecessor
        SignatureMismatchError: If f does not decompose over ``loop``
    """
    tol = resolve_tolerance(tol)
    max_iter = max_iter or get_config().max_iter
    if f.is_finite:
        return _trace_finite(f, loop, tol, max_iter)
    return _trace_forward(f, loop, tol, max_iter)


def _trace_finite(f: QArrow, loop: Signature, tol: Tolerance, max_iter: int) -> QArrow:
    a, b = _split_loop(f, loop)
    report = IterationReport(kind="trace")
    prev, prev_back = zero_arrow(a, b), zero_arrow(loop, b)
    for n, (current, back) in enumerate(kleene_trace_chain(f, loop, tol), start=1):
        slack = min(
            _monotone_step(prev, current, tol, "trace"),
            _monotone_step(prev_back, back, tol, "trace"),
        )
        delta = max(max_choi_distance(prev, current), max_choi_distance(prev_back, back))
        report.iterations = n
        report.last_delta = delta
        report.min_slack = min(report.min_slack, slack)
        logger.debug(f"trace over {loop}: step {n}, delta {delta:.3e}")
        prev, prev_back = current, back
        if delta <= tol.eps_fix:
            report.converged = True
            break
        if n >= max_iter:
            logger.warning(f"trace over {loop} did not converge in {max_iter} steps (delta {delta:.3e})")
            break
    return _guarded(prev.with_iterations(f.iterations + [report]))


def _column_mass(column: Mapping[BlockKey, KrausMap]) -> float:
    return max((mc.max_entry(m.choi.matrix) for m in column.values()), default=0.0)


def _same_column(a: Mapping[BlockKey, KrausMap], b: Mapping[BlockKey, KrausMap], eps: float) -> bool:
    if set(a) != set(b):
        return False
    return all(cp.choi_distance(a[k], b[k]) <= eps for k in a)


def _trace_forward(f: QArrow, loop: Signature, tol: Tolerance, max_iter: int) -> QArrow:
    a, b = _split_loop(f, loop)
    # no column materialized yet, so nothing has been truncated
    report = IterationReport(kind="trace", converged=True)
    check = get_config().check_invariants

    def column(key: BlockKey) -> Column:
        col_report = IterationReport(kind="trace")
        exits: Column = {}
        frontier: Dict[BlockKey, List[KrausMap]] = {}
        for out, block in f.column(inject_key(a, loop, Side.LEFT, key)).items():
            side, inner = summand_of(b, loop, out)
            if side == Side.LEFT:
                exits[inner] = block
            else:
                frontier.setdefault(inner, []).append(block)
        current = {x: cp.add(maps, tol) for x, maps in frontier.items()}

        for step in range(1, max_iter + 1):
            delta = 0.0
            nxt: Dict[BlockKey, List[KrausMap]] = {}
            for x, reached in current.items():
                for out, block in f.column(inject_key(a, loop, Side.RIGHT, x)).items():
                    term = cp.compose(block, reached, tol)
                    if term.is_zero:
                        continue
                    side, inner = summand_of(b, loop, out)
                    if side == Side.LEFT:
                        delta = max(delta, mc.max_entry(term.choi.matrix))
                        exits[inner] = cp.add([exits[inner], term], tol) if inner in exits else term
                    else:
                        nxt.setdefault(inner, []).append(term)
            following = {x: cp.add(maps, tol) for x, maps in nxt.items()}
            unchanged = _same_column(current, following, tol.eps_fix)
            current = following
            col_report.iterations = step
            col_report.last_delta = delta
            if delta <= tol.eps_fix and (_column_mass(current) <= tol.eps_fix or unchanged):
                col_report.converged = True
                break
        if not col_report.converged:
            logger.warning(f"trace over {loop}: column {key!r} did not converge in {max_iter} steps")
        logger.debug(f"trace over {loop}: column {key!r} after {col_report.iterations} steps")
        report.absorb(col_report)
        if check:
            dim = a.block_dim(key)
            unit_image = sum((cp.heisenberg_unit_image(block) for block in exits.values()), np.zeros((dim, dim)))
            if not mc.loewner_leq(unit_image, np.eye(dim), tol):
                raise InvariantViolationError(f"Trace column {key!r} over {loop} is not trace-nonincreasing")
        return exits

    return _guarded(QArrow(a, b, column_factory=column, iterations=f.iterations + [report]))


def kleene_fix_chain(g: QArrow, tol: Optional[Tolerance] = None) -> Iterator[QArrow]:
    """Iterates F_{n+1} = [id_A, F_n]∘g from F_0 = ⊥, for g : X → A⊕X."""
    x = g.source
    a = split_direct_sum(g.target, x)
    id_a = identity(a)
    current = zero_arrow(x, a)
    while True:
        current = compose(copair(id_a, current), g, tol)
        yield current


def fix(g: QArrow, tol: Optional[Tolerance] = None, max_iter: Optional[int] = None) -> QArrow:
    """
    Conway fixed point Fix(g) : X → A of g : X → A⊕X.

    Satisfies Fix(g) = [id_A, Fix(g)]∘g up to eps_fix; NatLike arrows are
    routed through the trace as Tr(g∘∇).
    """
    tol = resolve_tolerance(tol)
    max_iter = max_iter or get_config().max_iter
    if not g.is_finite:
        return trace(compose(g, codiagonal(g.source), tol), g.source, tol, max_iter)

    report = IterationReport(kind="fix")
    prev = zero_arrow(g.source, split_direct_sum(g.target, g.source))
    for n, current in enumerate(kleene_fix_chain(g, tol), start=1):
        report.min_slack = min(report.min_slack, _monotone_step(prev, current, tol, "fix"))
        delta = max_choi_distance(prev, current)
        report.iterations = n
        report.last_delta = delta
        prev = current
        if delta <= tol.eps_fix:
            report.converged = True
            break
        if n >= max_iter:
            logger.warning(f"fix did not converge in {max_iter} steps (delta {delta:.3e})")
            break
    return _guarded(prev.with_iterations(g.iterations + [report]))


def least_fixed_point(
    functional: Callable[[List[QArrow]], Sequence[QArrow]],
    endpoints: Sequence[Tuple[Signature, Signature]],
    tol: Optional[Tolerance] = None,
    max_iter: Optional[int] = None,
    kind: str = "recursion",
) -> List[QArrow]:
    """
    Joint least fixed point of a monotone functional on a tuple of hom-sets.

    Args:
        functional: Maps the current tuple of arrows to the next one
        endpoints: (source, target) of each component
        tol: Tolerance (configured default when None)
        max_iter: Iteration cap (configured default when None)
        kind: Label recorded in the iteration report

    Returns:
        The converged tuple; each arrow carries the reports of the loops in its
        last iterate followed by the shared iteration report
    """
    tol = resolve_tolerance(tol)
    max_iter = max_iter or get_config().max_iter
    report = IterationReport(kind=kind)
    current = [zero_arrow(s, t) for s, t in endpoints]
    latest = current
    for n in range(1, max_iter + 1):
        nxt = list(functional(current))
        if len(nxt) != len(current):
            raise SignatureMismatchError("Functional changed the number of components")
        slack, delta = 0.0, 0.0
        for prev, new in zip(current, nxt):
            slack = min(slack, _monotone_step(prev, new, tol, kind))
            delta = max(delta, max_choi_distance(prev, new))
        report.iterations = n
        report.last_delta = delta
        report.min_slack = min(report.min_slack, slack)
        # approximants re-enter the functional without their reports
        latest = nxt
        current = [arrow.with_iterations([]) for arrow in nxt]
        logger.debug(f"{kind}: step {n}, delta {delta:.3e}")
        if delta <= tol.eps_fix:
            report.converged = True
            break
    if not report.converged:
        logger.warning(f"{kind} did not converge in {max_iter} steps (delta {report.last_delta:.3e})")
    return [arrow.with_iterations([*arrow.iterations, report]) for arrow in latest]


def lub_chain(chain: Sequence[QArrow], tol: Optional[Tolerance] = None) -> QArrow:
    """
    Supremum of an ascending chain as the entrywise Choi limit.

    The last element is taken once successive differences fall below eps_fix;
    the result is rebuilt from its Choi blocks and flagged Choi-backed.

    Raises:
        NonMonotoneIterationError: If the input is not a ⊑-chain
    """
    tol = resolve_tolerance(tol)
    if not chain:
        raise ValueError("lub_chain needs a nonempty chain")
    report = IterationReport(kind="lub", iterations=len(chain))
    for prev, nxt in zip(chain, chain[1:]):
        report.min_slack = min(report.min_slack, _monotone_step(prev, nxt, tol, "lub"))
    if len(chain) > 1:
        report.last_delta = max_choi_distance(chain[-2], chain[-1])
    report.converged = report.last_delta <= tol.eps_fix
    if not report.converged:
        logger.warning(f"lub_chain: chain still moving by {report.last_delta:.3e}")
    last = chain[-1]
    columns = {
        key: {out: KrausMap.from_choi(block.choi, tol) for out, block in last.column(key).items()}
        for key in last.materialized_keys()
    }
    return QArrow(last.source, last.target, columns=columns, iterations=[report])


# ============================================================================
# Quantum structure
# ============================================================================

def qbit() -> Signature:
    return Signature.finite(2)


def bit() -> Signature:
    return Signature.finite(1, 1)


def qbit_structure() -> Tuple[Signature, QArrow, QArrow]:
    """
    The qbit object with ι : bit → qbit (prepare |0⟩ or |1⟩) and
    p : qbit → bit (computational-basis measurement); p∘ι = id_bit.
    """
    ket0 = np.array([[1.0], [0.0]])
    ket1 = np.array([[0.0], [1.0]])
    iota = QArrow(
        bit(),
        qbit(),
        columns={0: {0: KrausMap(1, 2, (ket0,))}, 1: {0: KrausMap(1, 2, (ket1,))}},
    )
    p = QArrow(
        qbit(),
        bit(),
        columns={0: {0: KrausMap(2, 1, (ket0.T,)), 1: KrausMap(2, 1, (ket1.T,))}},
    )
    return qbit(), iota, p


def dephasing() -> QArrow:
    """ι∘p: keeps the diagonal of a qbit state."""
    _, iota, p = qbit_structure()
    return compose(iota, p)


def unitary_lift(u: CMatrix, tol: Optional[Tolerance] = None) -> QArrow:
    """
    Single-block arrow ρ ↦ uρu† on qbit^⊗n, i.e. x ↦ u†xu on effects.

    Raises:
        NotUnitaryError: If u is not unitary within eps_eq
        ShapeError: If the size of u is not a power of two
    """
    block = KrausMap.from_unitary(u, tol)
    size = block.in_dim
    if size & (size - 1):
        raise ShapeError(f"Gate size {size} is not a power of two")
    sig = Signature.finite(size)
    return QArrow(sig, sig, columns={0: {0: block}})


def dualize(f: QArrow) -> QArrow:
    """
    Heisenberg presentation: block (j, i) is the adjoint-Kraus map of f_ij.

    Involutive on Kraus data and flips the recorded picture.

    Raises:
        UnsupportedSignatureError: For NatLike endpoints
    """
    if not f.is_finite:
        raise UnsupportedSignatureError("dualize is defined for Finite signatures only")
    columns: Dict[BlockKey, Column] = {}
    for out, key, block in f.blocks():
        columns.setdefault(out, {})[key] = cp.dualize(block)
    picture = Picture.HEISENBERG if f.picture == Picture.SCHRODINGER else Picture.SCHRODINGER
    return QArrow(f.target, f.source, columns=columns, picture=picture, iterations=f.iterations)


# ============================================================================
# States and effects
# ============================================================================

class StateVector:
    """
    Sub-normalized state: a finitely supported family of positive blocks
    with total trace ≤ 1.
    """

    def __init__(
        self,
        signature: Signature,
        parts: Mapping[BlockKey, CMatrix],
        tol: Optional[Tolerance] = None,
    ):
        tol = resolve_tolerance(tol)
        self.signature = signature
        self.parts: Dict[BlockKey, CMatrix] = {}
        for key, part in parts.items():
            dim = signature.block_dim(key)
            matrix = mc.as_cmatrix(part)
            if matrix.shape != (dim, dim):
                raise ShapeError(f"State block {key!r} must be {dim}x{dim}, got {matrix.shape}")
            if not mc.is_psd(matrix, tol):
                raise InvariantViolationError(f"State block {key!r} is not positive")
            if np.any(matrix):
                self.parts[key] = matrix
        total = self.total_weight
        if total > 1.0 + tol.eps_eq * max(1, len(self.parts)):
            raise InvariantViolationError(f"State has total trace {total:.12f} > 1")

    @classmethod
    def from_weights(
        cls, signature: Signature, weights: Mapping[BlockKey, float], tol: Optional[Tolerance] = None
    ) -> "StateVector":
        """Classical distribution over 1×1 blocks."""
        return cls(signature, {k: [[w]] for k, w in weights.items()}, tol)

    @classmethod
    def point(cls, signature: Signature, key: BlockKey) -> "StateVector":
        """Point mass on a 1×1 block."""
        return cls.from_weights(signature, {key: 1.0})

    @property
    def total_weight(self) -> float:
        return float(sum(np.trace(p).real for p in self.parts.values()))

    @property
    def support(self) -> List[BlockKey]:
        return list(self.parts.keys())

    def part(self, key: BlockKey) -> CMatrix:
        found = self.parts.get(key)
        if found is not None:
            return found
        dim = self.signature.block_dim(key)
        return np.zeros((dim, dim), dtype=complex)

    def weights(self) -> Dict[BlockKey, float]:
        return {k: float(np.trace(p).real) for k, p in self.parts.items()}

    def __repr__(self) -> str:
        return f"StateVector({self.signature}, support={self.support})"


class EffectVector:
    """
    Predicate: effects 0 ≤ q_i ≤ 1 per block. Blocks not listed are
    ``default`` times the identity.
    """

    def __init__(
        self,
        signature: Signature,
        parts: Mapping[BlockKey, CMatrix],
        default: float = 0.0,
        tol: Optional[Tolerance] = None,
    ):
        tol = resolve_tolerance(tol)
        if not -tol.eps_eq <= default <= 1.0 + tol.eps_eq:
            raise InvariantViolationError(f"Default effect value {default} outside [0, 1]")
        self.signature = signature
        self.default = default
        self.parts: Dict[BlockKey, CMatrix] = {}
        for key, part in parts.items():
            dim = signature.block_dim(key)
            matrix = mc.as_cmatrix(part)
            if matrix.shape != (dim, dim):
                raise ShapeError(f"Effect block {key!r} must be {dim}x{dim}, got {matrix.shape}")
            if not mc.is_effect(matrix, tol):
                raise InvariantViolationError(f"Effect block {key!r} is not in [0, 1]")
            self.parts[key] = matrix

    def part(self, key: BlockKey) -> CMatrix:
        found = self.parts.get(key)
        if found is not None:
            return found
        return self.default * np.eye(self.signature.block_dim(key), dtype=complex)

    def __repr__(self) -> str:
        return f"EffectVector({self.signature}, {len(self.parts)} blocks, default={self.default})"


def unit_effect(s: Signature) -> EffectVector:
    """The truth predicate 1."""
    return EffectVector(s, {}, default=1.0)


def apply(f: QArrow, state: StateVector, tol: Optional[Tolerance] = None) -> StateVector:
    """Schrödinger action: out_i = Σ_j f_ij(in_j)."""
    if state.signature != f.source:
        raise SignatureMismatchError(f"State over {state.signature} does not fit arrow from {f.source}")
    out: Dict[BlockKey, CMatrix] = {}
    for key, rho in state.parts.items():
        for target, block in f.column(key).items():
            image = cp.apply_schrodinger(block, rho)
            out[target] = out[target] + image if target in out else image
    return StateVector(f.target, out, tol)


def wp(
    f: QArrow,
    post: EffectVector,
    keys: Optional[Sequence[BlockKey]] = None,
    tol: Optional[Tolerance] = None,
) -> EffectVector:
    """
    Heisenberg action (weakest precondition): pre_j = Σ_i f_ij*(post_i).

    Args:
        f: The arrow
        post: Postcondition over f.target
        keys: Source blocks to evaluate; required for NatLike sources
        tol: Tolerance

    Raises:
        InvariantViolationError: If a computed block is not an effect
    """
    if post.signature != f.target:
        raise SignatureMismatchError(f"Effect over {post.signature} does not fit arrow into {f.target}")
    if keys is None:
        if not f.source.is_finite:
            raise UnsupportedSignatureError("wp over a NatLike source needs explicit keys")
        keys = list(f.source.keys())
    parts: Dict[BlockKey, CMatrix] = {}
    for key in keys:
        dim = f.source.block_dim(key)
        total = np.zeros((dim, dim), dtype=complex)
        for out, block in f.column(key).items():
            total += cp.apply_heisenberg(block, post.part(out))
        parts[key] = total
    try:
        return EffectVector(f.source, parts, tol=tol)
    except InvariantViolationError as e:
        raise InvariantViolationError(f"wp left the effects of {f.source}; arrow not subunital ({e})") from e


def pairing(state: StateVector, effect: EffectVector) -> float:
    """Σ_i Re tr(q_i ρ_i): probability that the state satisfies the predicate."""
    if state.signature != effect.signature:
        raise SignatureMismatchError("State and effect live over different signatures")
    return float(sum(mc.trace_pairing(effect.part(k), rho).real for k, rho in state.parts.items()))


def duality_residual(
    f: QArrow, state: StateVector, effect: EffectVector, tol: Optional[Tolerance] = None
) -> float:
    """Relative gap between ⟨wp(f, q), ρ⟩ and ⟨q, apply(f, ρ)⟩."""
    lhs = pairing(state, wp(f, effect, keys=state.support, tol=tol))
    rhs = pairing(apply(f, state, tol), effect)
    return abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))


# ============================================================================
# Random generators
# ============================================================================

def random_state(
    s: Signature, rng: np.random.Generator, keys: Optional[Sequence[BlockKey]] = None
) -> StateVector:
    """Random normalized state over the given (or all Finite) blocks."""
    if keys is None:
        keys = list(s.keys())
    if not keys:
        return StateVector(s, {})
    weights = rng.dirichlet(np.ones(len(keys)))
    parts = {k: w * cp.random_density(s.block_dim(k), rng) for k, w in zip(keys, weights)}
    return StateVector(s, parts)


def random_effect(s: Signature, rng: np.random.Generator) -> EffectVector:
    """Random effect on every block of a Finite signature."""
    return EffectVector(s, {k: cp.random_effect(s.block_dim(k), rng) for k in s.keys()})


def random_arrow(
    source: Signature,
    target: Signature,
    rng: np.random.Generator,
    trace_preserving: bool = False,
    sparsity: float = 0.0,
) -> QArrow:
    """
    Random trace-nonincreasing arrow between Finite signatures.

    Each column splits a total strength (1 when ``trace_preserving``) among
    its target blocks; blocks are dropped with probability ``sparsity``.
    """
    columns: Dict[BlockKey, Column] = {}
    targets = list(target.keys())
    for key in source.keys():
        if not targets:
            columns[key] = {}
            continue
        kept = [t for t in targets if trace_preserving or rng.uniform() >= sparsity] or [targets[0]]
        total = 1.0 if trace_preserving else rng.uniform(0.1, 1.0)
        shares = rng.dirichlet(np.ones(len(kept))) * total
        columns[key] = {
            t: cp.random_kraus_map(source.block_dim(key), target.block_dim(t), rng, strength=float(w))
            for t, w in zip(kept, shares)
        }
    return QArrow(source, target, columns=columns)
