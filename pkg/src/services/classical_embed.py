"""
Classical data inside the semantic category.

Finite sets become commutative signatures (1, ..., 1) and functions become
deterministic arrows moving point masses. Natural numbers live in the NatLike
signature ``nat``; built-in functions on them are lazy index maps whose
columns are produced only for the indices a state actually reaches.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Hashable, Mapping, Optional, Sequence, Tuple

from src.models.classical import ClassicalFn, FinSet
from src.models.errors import SignatureMismatchError
from src.models.signature import (
    BlockKey,
    BlockPermutation,
    Signature,
    combine_keys,
    nat,
    split_all_keys,
    tensor,
    tensor_all,
)
from src.services.qcat import QArrow, StateVector, reindex
from src.utils.logger import get_logger

logger = get_logger("classical_embed")


def ell_infty(s: FinSet) -> Signature:
    """ℓ∞(S): one 1×1 block per element."""
    return Signature.finite(*([1] * len(s)))


def deterministic_arrow(
    source: Signature, target: Signature, key_map: Callable[[BlockKey], BlockKey]
) -> QArrow:
    """
    Arrow sending the point mass at ``key`` to the point mass at ``key_map(key)``.

    Only 1×1 source blocks are allowed; the arrow is lazy over NatLike sources.
    """

    def check(key: BlockKey) -> BlockKey:
        if source.block_dim(key) != 1:
            raise SignatureMismatchError(f"Deterministic arrows act on classical blocks, {key!r} is quantum")
        return key_map(key)

    return reindex(source, target, check)


def ell_infty_arrow(f: ClassicalFn) -> QArrow:
    """ℓ∞(f): point mass at j goes to point mass at f(j); trace-preserving."""
    return deterministic_arrow(ell_infty(f.domain), ell_infty(f.codomain), lambda j: f.mapping[j])


def product_iso(s: FinSet, t: FinSet) -> BlockPermutation:
    """ℓ∞(S) ⊗ ℓ∞(T) ≅ ℓ∞(S×T), (i, j) ↦ |T|·i + j."""
    source = tensor(ell_infty(s), ell_infty(t))
    target = ell_infty(s.product(t))
    mapping = tuple(i * len(t) + j for i in range(len(s)) for j in range(len(t)))
    return BlockPermutation(source=source, target=target, mapping=mapping)


def faithfulness_witness(f: ClassicalFn, g: ClassicalFn) -> Optional[Hashable]:
    """
    A domain element where ℓ∞(f) and ℓ∞(g) differ, or None when the arrows agree.

    Raises:
        ValueError: If f and g have different domains or codomains
    """
    if f.domain != g.domain or f.codomain != g.codomain:
        raise ValueError("faithfulness_witness compares functions with equal domain and codomain")
    arrow_f, arrow_g = ell_infty_arrow(f), ell_infty_arrow(g)
    for j, label in enumerate(f.domain.elements):
        if set(arrow_f.column(j)) != set(arrow_g.column(j)):
            return label
    return None


# ============================================================================
# Natural numbers
# ============================================================================

def nat_power(arity: int) -> Signature:
    """nat^⊗arity (the unit for arity 0)."""
    return tensor_all([nat()] * arity)


def nat_key(*values: int) -> BlockKey:
    """Block key of the point (values...) in nat^⊗len(values)."""
    return (*values, 0)


@dataclass(frozen=True)
class NatBuiltin:
    """
    Classical function symbol on natural numbers.

    Attributes:
        name: Name used in source programs
        arity: Number of nat arguments
        fn: Index function on the arguments
        result: ``nat`` or a finite classical result such as ``bit``
    """

    name: str
    arity: int
    fn: Callable[..., int]
    result: Signature

    def arrow(self) -> QArrow:
        """Lazy deterministic arrow nat^⊗arity → result."""
        source = nat_power(self.arity)
        factors = [nat()] * self.arity

        def key_map(key: BlockKey) -> BlockKey:
            args = [k[0] for k in split_all_keys(factors, key)] if self.arity else []
            value = self.fn(*args)
            return nat_key(value) if not self.result.is_finite else value

        return deterministic_arrow(source, self.result, key_map)

    def __call__(self, *args: int) -> int:
        return self.fn(*args)


def _bit() -> Signature:
    return Signature.finite(1, 1)


NAT_BUILTINS: Dict[str, NatBuiltin] = {
    b.name: b
    for b in (
        NatBuiltin("succ", 1, lambda n: n + 1, nat()),
        NatBuiltin("pred", 1, lambda n: max(n - 1, 0), nat()),
        NatBuiltin("add", 2, lambda m, n: m + n, nat()),
        NatBuiltin("mul", 2, lambda m, n: m * n, nat()),
        NatBuiltin("iszero", 1, lambda n: int(n == 0), _bit()),
        NatBuiltin("eq", 2, lambda m, n: int(m == n), _bit()),
    )
}


def nat_builtin(name: str, fn: Callable[..., int], arity: int = 1, result: Optional[Signature] = None) -> NatBuiltin:
    """Register a nat built-in and return it."""
    builtin = NatBuiltin(name, arity, fn, result or nat())
    NAT_BUILTINS[name] = builtin
    logger.debug(f"Registered nat builtin {name}/{arity}")
    return builtin


def nat_distribution(weights: Mapping[int, float]) -> StateVector:
    """Finitely supported distribution over nat."""
    return StateVector.from_weights(nat(), {nat_key(n): w for n, w in weights.items()})


def nat_weights(state: StateVector) -> Dict[int, float]:
    """Inverse of :func:`nat_distribution` for states over ``nat``."""
    if state.signature != nat():
        raise SignatureMismatchError(f"Expected a state over nat, got {state.signature}")
    return {key[0]: w for key, w in sorted(state.weights().items())}


def product_state(states: Sequence[StateVector]) -> StateVector:
    """Product of classical states, in the tensor order of their signatures."""
    signature = Signature.finite(1)
    parts: Dict[BlockKey, float] = {0: 1.0}
    for state in states:
        merged: Dict[BlockKey, float] = {}
        for key, weight in parts.items():
            for other, w in state.weights().items():
                merged[combine_keys(signature, state.signature, key, other)] = weight * w
        signature = tensor(signature, state.signature)
        parts = merged
    return StateVector.from_weights(signature, parts)


def point_masses(state: StateVector) -> Tuple[Tuple[BlockKey, float], ...]:
    """Support and weights of a classical state, in key order."""
    return tuple(sorted(state.weights().items()))
