"""
Objects of the semantic category: finite direct sums of matrix algebras.

A Finite signature ``(n1, ..., nk)`` stands for M_n1 ⊕ ... ⊕ M_nk. A NatLike
signature stands for countably many copies of a finite *fiber*, indexed by
``rank`` natural numbers; plain ``nat`` is rank 1 over the fiber ``(1,)``.

Block keys are plain ints for Finite signatures and tuples
``(nu_1, ..., nu_rank, k)`` for NatLike ones. Composite indices are
lexicographic with the left factor major (NatLike factors are always major).
"""

from __future__ import annotations

from enum import Enum
from typing import Iterable, List, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.models.errors import SignatureMismatchError, UnsupportedSignatureError

BlockKey = Union[int, Tuple[int, ...]]


class SignatureKind(str, Enum):
    """Finite block list or countable (nat-indexed) family of blocks."""

    FINITE = "finite"
    NAT_LIKE = "nat_like"


class Side(str, Enum):
    """Summand selector for direct sums."""

    LEFT = "left"
    RIGHT = "right"


class Signature(BaseModel):
    """
    Dimension signature of a finite-dimensional W*-algebra (or its nat-indexed
    countable generalization).
    """

    model_config = ConfigDict(frozen=True)

    kind: SignatureKind = Field(SignatureKind.FINITE, description="Finite or NatLike")
    blocks: Tuple[int, ...] = Field((), description="Block dimensions (Finite only)")
    rank: int = Field(0, ge=0, description="Number of natural-number indices (NatLike only)")
    fiber: Tuple[int, ...] = Field((), description="Blocks repeated per nat index (NatLike only)")

    @model_validator(mode="after")
    def _check_shape(self) -> "Signature":
        if self.kind == SignatureKind.FINITE:
            if any(n < 1 for n in self.blocks):
                raise ValueError(f"Block dimensions must be positive: {self.blocks}")
            if self.rank != 0 or self.fiber:
                raise ValueError("Finite signatures carry no rank or fiber")
        else:
            if self.blocks:
                raise ValueError("NatLike signatures have an empty explicit block list")
            if self.rank < 1 or not self.fiber:
                raise ValueError("NatLike signatures need rank >= 1 and a nonempty fiber")
            if any(n < 1 for n in self.fiber):
                raise ValueError(f"Fiber dimensions must be positive: {self.fiber}")
        return self

    @classmethod
    def finite(cls, *blocks: int) -> "Signature":
        """Finite signature from block dimensions."""
        return cls(kind=SignatureKind.FINITE, blocks=tuple(blocks))

    @classmethod
    def nat_like(cls, rank: int = 1, fiber: Sequence[int] = (1,)) -> "Signature":
        """Countable signature: ``rank`` nat indices over ``fiber``."""
        return cls(kind=SignatureKind.NAT_LIKE, rank=rank, fiber=tuple(fiber))

    @property
    def is_finite(self) -> bool:
        return self.kind == SignatureKind.FINITE

    @property
    def is_zero(self) -> bool:
        """The zero object (empty direct sum)."""
        return self.is_finite and not self.blocks

    @property
    def local_blocks(self) -> Tuple[int, ...]:
        """Block list of a Finite signature, fiber of a NatLike one."""
        return self.blocks if self.is_finite else self.fiber

    @property
    def block_count(self) -> int:
        if not self.is_finite:
            raise UnsupportedSignatureError(f"{self} has infinitely many blocks")
        return len(self.blocks)

    def keys(self) -> range:
        """All block keys of a Finite signature."""
        return range(self.block_count)

    def is_valid_key(self, key: BlockKey) -> bool:
        if self.is_finite:
            return isinstance(key, int) and 0 <= key < len(self.blocks)
        return (
            isinstance(key, tuple)
            and len(key) == self.rank + 1
            and all(isinstance(v, int) and v >= 0 for v in key)
            and key[-1] < len(self.fiber)
        )

    def block_dim(self, key: BlockKey) -> int:
        """Matrix size of the block with the given key."""
        if not self.is_valid_key(key):
            raise SignatureMismatchError(f"Invalid block key {key!r} for signature {self}")
        return self.blocks[key] if self.is_finite else self.fiber[key[-1]]

    def nat_part(self, key: BlockKey) -> Tuple[int, ...]:
        return () if self.is_finite else tuple(key[:-1])

    def local_index(self, key: BlockKey) -> int:
        return key if self.is_finite else key[-1]

    def make_key(self, nat_part: Sequence[int], local: int) -> BlockKey:
        return local if self.is_finite else (*nat_part, local)

    def __str__(self) -> str:
        if self.is_finite:
            return "(" + ",".join(str(n) for n in self.blocks) + ")"
        head = "nat" if self.rank == 1 else f"nat^{self.rank}"
        if self.fiber == (1,):
            return head
        return head + "*(" + ",".join(str(n) for n in self.fiber) + ")"


class BlockPermutation(BaseModel):
    """Dimension-preserving bijection between the blocks of two Finite signatures."""

    model_config = ConfigDict(frozen=True)

    source: Signature
    target: Signature
    mapping: Tuple[int, ...] = Field(..., description="mapping[source_block] = target_block")

    @model_validator(mode="after")
    def _check_bijection(self) -> "BlockPermutation":
        if not (self.source.is_finite and self.target.is_finite):
            raise ValueError("Block permutations relate Finite signatures only")
        n = len(self.source.blocks)
        if len(self.target.blocks) != n or len(self.mapping) != n:
            raise ValueError("Permutation size does not match signatures")
        if sorted(self.mapping) != list(range(n)):
            raise ValueError(f"Not a bijection: {self.mapping}")
        for src, tgt in enumerate(self.mapping):
            if self.source.blocks[src] != self.target.blocks[tgt]:
                raise ValueError(f"Block {src} -> {tgt} changes dimension")
        return self

    def apply(self, index: int) -> int:
        return self.mapping[index]

    def inverse(self) -> "BlockPermutation":
        inv = [0] * len(self.mapping)
        for src, tgt in enumerate(self.mapping):
            inv[tgt] = src
        return BlockPermutation(source=self.target, target=self.source, mapping=tuple(inv))

    def then(self, other: "BlockPermutation") -> "BlockPermutation":
        """Apply ``self`` first, then ``other``."""
        if self.target != other.source:
            raise SignatureMismatchError("Permutations do not compose")
        return BlockPermutation(
            source=self.source,
            target=other.target,
            mapping=tuple(other.mapping[t] for t in self.mapping),
        )

    @property
    def is_identity(self) -> bool:
        return all(src == tgt for src, tgt in enumerate(self.mapping))


# ============================================================================
# Distinguished objects
# ============================================================================

def unit() -> Signature:
    """Monoidal unit I = C."""
    return Signature.finite(1)


def zero() -> Signature:
    """Zero object (empty direct sum)."""
    return Signature.finite()


def nat() -> Signature:
    """Classical natural numbers, the direct sum of countably many C."""
    return Signature.nat_like(1, (1,))


# ============================================================================
# Direct sum
# ============================================================================

def direct_sum(a: Signature, b: Signature) -> Signature:
    """Direct sum: concatenation of block lists (fibers, for NatLike of equal rank)."""
    if a.is_zero:
        return b
    if b.is_zero:
        return a
    if a.is_finite and b.is_finite:
        return Signature.finite(*a.blocks, *b.blocks)
    if not a.is_finite and not b.is_finite and a.rank == b.rank:
        return Signature.nat_like(a.rank, a.fiber + b.fiber)
    raise UnsupportedSignatureError(f"Direct sum {a} + {b} is not representable")


def direct_sum_all(signatures: Iterable[Signature]) -> Signature:
    result = zero()
    for s in signatures:
        result = direct_sum(result, s)
    return result


def inject_key(a: Signature, b: Signature, side: Side, key: BlockKey) -> BlockKey:
    """Key of a summand block inside ``direct_sum(a, b)``."""
    if a.is_zero or b.is_zero:
        return key
    if side == Side.LEFT:
        return key
    offset = len(a.local_blocks)
    if b.is_finite:
        return offset + key
    return (*key[:-1], offset + key[-1])


def summand_of(a: Signature, b: Signature, key: BlockKey) -> Tuple[Side, BlockKey]:
    """Inverse of :func:`inject_key`: which summand a block of ``a ⊕ b`` belongs to."""
    if a.is_zero:
        return Side.RIGHT, key
    if b.is_zero:
        return Side.LEFT, key
    offset = len(a.local_blocks)
    local = key if a.is_finite else key[-1]
    if local < offset:
        return Side.LEFT, key
    if a.is_finite:
        return Side.RIGHT, key - offset
    return Side.RIGHT, (*key[:-1], local - offset)


def split_direct_sum(total: Signature, right: Signature) -> Signature:
    """Find ``left`` with ``direct_sum(left, right) == total``."""
    if right.is_zero:
        return total
    if total.is_finite and right.is_finite:
        k = len(right.blocks)
        if len(total.blocks) >= k and total.blocks[len(total.blocks) - k:] == right.blocks:
            return Signature.finite(*total.blocks[: len(total.blocks) - k])
    elif not total.is_finite and not right.is_finite and total.rank == right.rank:
        k = len(right.fiber)
        if len(total.fiber) >= k and total.fiber[len(total.fiber) - k:] == right.fiber:
            prefix = total.fiber[: len(total.fiber) - k]
            return Signature.nat_like(total.rank, prefix) if prefix else zero()
    raise SignatureMismatchError(f"{total} does not decompose as ? + {right}")


# ============================================================================
# Tensor
# ============================================================================

def tensor(a: Signature, b: Signature) -> Signature:
    """Spatial tensor: blocks n_i * m_j, lexicographic with ``a`` major."""
    if a.is_zero or b.is_zero:
        return zero()
    local = tuple(x * y for x in a.local_blocks for y in b.local_blocks)
    rank = a.rank + b.rank
    if rank == 0:
        return Signature.finite(*local)
    return Signature.nat_like(rank, local)


def tensor_all(signatures: Iterable[Signature]) -> Signature:
    """Left fold of :func:`tensor`, starting from the unit."""
    result = unit()
    for s in signatures:
        result = tensor(result, s)
    return result


def combine_keys(a: Signature, b: Signature, key_a: BlockKey, key_b: BlockKey) -> BlockKey:
    """Key of block (key_a, key_b) inside ``tensor(a, b)``."""
    local = a.local_index(key_a) * len(b.local_blocks) + b.local_index(key_b)
    nat_part = a.nat_part(key_a) + b.nat_part(key_b)
    return local if not nat_part else (*nat_part, local)


def split_key(a: Signature, b: Signature, key: BlockKey) -> Tuple[BlockKey, BlockKey]:
    """Inverse of :func:`combine_keys`."""
    local = key if isinstance(key, int) else key[-1]
    nat_part = () if isinstance(key, int) else tuple(key[:-1])
    i, j = divmod(local, len(b.local_blocks))
    key_a = a.make_key(nat_part[: a.rank], i)
    key_b = b.make_key(nat_part[a.rank:], j)
    return key_a, key_b


def combine_all_keys(factors: Sequence[Signature], keys: Sequence[BlockKey]) -> BlockKey:
    """Key of a block of ``tensor_all(factors)`` from per-factor keys."""
    acc_sig = unit()
    acc_key: BlockKey = 0
    for sig, key in zip(factors, keys):
        acc_key = combine_keys(acc_sig, sig, acc_key, key)
        acc_sig = tensor(acc_sig, sig)
    return acc_key


def split_all_keys(factors: Sequence[Signature], key: BlockKey) -> List[BlockKey]:
    """Inverse of :func:`combine_all_keys`."""
    prefixes = [unit()]
    for sig in factors:
        prefixes.append(tensor(prefixes[-1], sig))
    keys: List[BlockKey] = []
    for idx in range(len(factors) - 1, -1, -1):
        key, last = split_key(prefixes[idx], factors[idx], key)
        keys.append(last)
    keys.reverse()
    return keys


# ============================================================================
# Distributivity
# ============================================================================

def distributivity_key(a: Signature, b: Signature, c: Signature, key: BlockKey) -> BlockKey:
    """Image of a block of a⊗(b⊕c) in (a⊗b)⊕(a⊗c)."""
    key_a, key_bc = split_key(a, direct_sum(b, c), key)
    side, inner = summand_of(b, c, key_bc)
    factor = b if side == Side.LEFT else c
    combined = combine_keys(a, factor, key_a, inner)
    return inject_key(tensor(a, b), tensor(a, c), side, combined)


def distributivity_inverse_key(a: Signature, b: Signature, c: Signature, key: BlockKey) -> BlockKey:
    """Image of a block of (a⊗b)⊕(a⊗c) in a⊗(b⊕c)."""
    side, inner = summand_of(tensor(a, b), tensor(a, c), key)
    factor = b if side == Side.LEFT else c
    key_a, key_f = split_key(a, factor, inner)
    key_bc = inject_key(b, c, side, key_f)
    return combine_keys(a, direct_sum(b, c), key_a, key_bc)


def distributivity_iso(a: Signature, b: Signature, c: Signature) -> BlockPermutation:
    """The block bijection a⊗(b⊕c) ≅ (a⊗b)⊕(a⊗c) for Finite signatures."""
    for s in (a, b, c):
        if not s.is_finite:
            raise UnsupportedSignatureError("distributivity_iso takes Finite signatures")
    source = tensor(a, direct_sum(b, c))
    target = direct_sum(tensor(a, b), tensor(a, c))
    mapping = tuple(distributivity_key(a, b, c, k) for k in source.keys())
    return BlockPermutation(source=source, target=target, mapping=mapping)


def total_dim(a: Signature) -> int:
    """Vector-space dimension of the algebra: sum of squared block sizes."""
    if not a.is_finite:
        raise UnsupportedSignatureError(f"{a} is infinite-dimensional")
    return sum(n * n for n in a.blocks)
