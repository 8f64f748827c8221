"""
Completely positive maps M_n → M_m on a single block.

Maps are held in Kraus form E(ρ) = Σ_k A_k ρ A_k† (Schrödinger orientation);
the Choi matrix is derived on demand and cached. The Choi convention is
Σ_ij E(e_ij) ⊗ e_ij with the output factor major, so Choi[(a,i),(b,j)] = E(e_ij)[a,b].
"""

from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

from src.models.errors import NotCompletelyPositiveError, ShapeError
from src.models.tolerance import Tolerance, resolve_tolerance
from src.services import matrix_core as mc
from src.services.matrix_core import CMatrix
from src.utils.logger import get_logger

logger = get_logger("cpmap")


class ChoiMatrix:
    """Choi matrix of a linear map M_n → M_m; CP iff the matrix is positive."""

    def __init__(self, in_dim: int, out_dim: int, matrix: CMatrix):
        size = in_dim * out_dim
        matrix = mc.as_cmatrix(matrix)
        if matrix.shape != (size, size):
            raise ShapeError(
                f"Choi matrix of a map M_{in_dim} -> M_{out_dim} must be {size}x{size}, "
                f"got {matrix.shape}"
            )
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.matrix = matrix

    @property
    def tensor4(self) -> np.ndarray:
        """The matrix viewed as C[a, i, b, j]."""
        return self.matrix.reshape(self.out_dim, self.in_dim, self.out_dim, self.in_dim)

    def apply(self, rho: CMatrix) -> CMatrix:
        """Choi-application formula E(ρ)[a,b] = Σ_ij ρ[i,j] C[a,i,b,j]."""
        if rho.shape != (self.in_dim, self.in_dim):
            raise ShapeError(f"Expected a {self.in_dim}x{self.in_dim} input, got {rho.shape}")
        return mc.as_cmatrix(np.einsum("aibj,ij->ab", self.tensor4, rho))

    def apply_heisenberg(self, x: CMatrix) -> CMatrix:
        """Dual action, determined by tr(E*(x)·ρ) = tr(x·E(ρ))."""
        if x.shape != (self.out_dim, self.out_dim):
            raise ShapeError(f"Expected a {self.out_dim}x{self.out_dim} effect, got {x.shape}")
        return mc.as_cmatrix(np.einsum("ba,aibj->ji", x, self.tensor4))

    def heisenberg_unit_image(self) -> CMatrix:
        """E*(1), read off the Choi matrix by a partial trace over the output."""
        return self.apply_heisenberg(np.eye(self.out_dim))

    def min_eigenvalue(self, tol: Optional[Tolerance] = None) -> float:
        return mc.min_eigenvalue(self.matrix, tol)

    def is_cp(self, tol: Optional[Tolerance] = None) -> bool:
        return mc.is_psd(self.matrix, tol)

    def to_kraus(self, tol: Optional[Tolerance] = None) -> "KrausMap":
        """
        Kraus decomposition from the spectral decomposition of the Choi matrix.

        Raises:
            NotCompletelyPositiveError: If the Choi matrix is not positive
        """
        tol = resolve_tolerance(tol)
        if not self.is_cp(tol):
            raise NotCompletelyPositiveError(
                f"Choi matrix has min eigenvalue {self.min_eigenvalue(tol):.3e}"
            )
        values, vectors = np.linalg.eigh(mc.hermitian_part(self.matrix, tol))
        ops = [
            np.sqrt(val) * vectors[:, idx].reshape(self.out_dim, self.in_dim)
            for idx, val in enumerate(values)
            if val > 0.0
        ]
        return KrausMap(self.in_dim, self.out_dim, ops, choi_backed=True, choi=self)

    def __sub__(self, other: "ChoiMatrix") -> "ChoiMatrix":
        return ChoiMatrix(self.in_dim, self.out_dim, self.matrix - other.matrix)

    def __repr__(self) -> str:
        return f"ChoiMatrix(M_{self.in_dim} -> M_{self.out_dim})"


class KrausMap:
    """
    CP map M_n → M_m given by Kraus operators (each m×n).

    An empty Kraus list is the zero map. Maps produced from a Choi matrix are
    flagged ``choi_backed``.
    """

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        kraus: Iterable[CMatrix] = (),
        choi_backed: bool = False,
        choi: Optional[ChoiMatrix] = None,
    ):
        if in_dim < 1 or out_dim < 1:
            raise ShapeError("Block dimensions must be positive")
        ops = tuple(mc.as_cmatrix(a) for a in kraus)
        for a in ops:
            if a.shape != (out_dim, in_dim):
                raise ShapeError(
                    f"Kraus operator of shape {a.shape} does not fit M_{in_dim} -> M_{out_dim}"
                )
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.kraus = ops
        self.choi_backed = choi_backed
        if choi is not None:
            self.__dict__["choi"] = choi

    @classmethod
    def zero(cls, in_dim: int, out_dim: int) -> "KrausMap":
        return cls(in_dim, out_dim, ())

    @classmethod
    def identity(cls, n: int) -> "KrausMap":
        return cls(n, n, (np.eye(n),))

    @classmethod
    def from_unitary(cls, u: CMatrix, tol: Optional[Tolerance] = None) -> "KrausMap":
        u = mc.require_unitary(u, tol)
        return cls(u.shape[1], u.shape[0], (u,))

    @classmethod
    def from_choi(cls, choi: ChoiMatrix, tol: Optional[Tolerance] = None) -> "KrausMap":
        return choi.to_kraus(tol)

    @property
    def is_zero(self) -> bool:
        return not self.kraus

    @cached_property
    def choi(self) -> ChoiMatrix:
        size = self.in_dim * self.out_dim
        if not self.kraus:
            return ChoiMatrix(self.in_dim, self.out_dim, np.zeros((size, size)))
        vecs = np.stack([a.reshape(-1) for a in self.kraus])
        return ChoiMatrix(self.in_dim, self.out_dim, vecs.T @ np.conj(vecs))

    def __repr__(self) -> str:
        tag = ", choi-backed" if self.choi_backed else ""
        return f"KrausMap(M_{self.in_dim} -> M_{self.out_dim}, {len(self.kraus)} ops{tag})"


# ============================================================================
# Representations and application
# ============================================================================

def kraus_to_choi(k: KrausMap) -> ChoiMatrix:
    return k.choi


def apply_schrodinger(k: KrausMap, rho: CMatrix) -> CMatrix:
    """Σ_k A_k ρ A_k†."""
    if rho.shape != (k.in_dim, k.in_dim):
        raise ShapeError(f"Expected a {k.in_dim}x{k.in_dim} state, got {rho.shape}")
    out = np.zeros((k.out_dim, k.out_dim), dtype=complex)
    for a in k.kraus:
        out += a @ rho @ np.conj(a).T
    return mc.as_cmatrix(out)


def apply_heisenberg(k: KrausMap, effect: CMatrix) -> CMatrix:
    """Σ_k A_k† x A_k."""
    if effect.shape != (k.out_dim, k.out_dim):
        raise ShapeError(f"Expected a {k.out_dim}x{k.out_dim} effect, got {effect.shape}")
    out = np.zeros((k.in_dim, k.in_dim), dtype=complex)
    for a in k.kraus:
        out += np.conj(a).T @ effect @ a
    return mc.as_cmatrix(out)


def heisenberg_unit_image(k: KrausMap) -> CMatrix:
    """Σ_k A_k† A_k, the Heisenberg image of 1."""
    out = np.zeros((k.in_dim, k.in_dim), dtype=complex)
    for a in k.kraus:
        out += np.conj(a).T @ a
    return mc.as_cmatrix(out)


def duality_residual(k: KrausMap, s: CMatrix, t: CMatrix) -> float:
    """
    Relative residual of tr(E*(s)·t) = tr(s·E(t)).

    Args:
        k: The map E
        s: Observable on the output side (m×m)
        t: State on the input side (n×n)
    """
    lhs = mc.trace_pairing(apply_heisenberg(k, s), t)
    rhs = mc.trace_pairing(s, apply_schrodinger(k, t))
    return abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))


def duality_check(k: KrausMap, s: CMatrix, t: CMatrix, tol: Optional[Tolerance] = None) -> bool:
    tol = resolve_tolerance(tol)
    return duality_residual(k, s, t) <= tol.eps_eq


# ============================================================================
# Algebra of maps
# ============================================================================

def compress(k: KrausMap, tol: Optional[Tolerance] = None) -> KrausMap:
    """Re-derive a minimal Kraus set once the list outgrows in·out operators."""
    if len(k.kraus) <= k.in_dim * k.out_dim:
        return k
    reduced = k.choi.to_kraus(tol)
    return KrausMap(k.in_dim, k.out_dim, reduced.kraus, choi_backed=k.choi_backed)


def compose(g: KrausMap, f: KrausMap, tol: Optional[Tolerance] = None) -> KrausMap:
    """g ∘ f with Kraus set {B_l A_k}; bi-strict."""
    if f.out_dim != g.in_dim:
        raise ShapeError(f"Cannot compose M_{g.in_dim}->M_{g.out_dim} after M_{f.in_dim}->M_{f.out_dim}")
    if f.is_zero or g.is_zero:
        return KrausMap.zero(f.in_dim, g.out_dim)
    ops = [op for op in (b @ a for b in g.kraus for a in f.kraus) if np.any(op)]
    if not ops:
        return KrausMap.zero(f.in_dim, g.out_dim)
    return compress(KrausMap(f.in_dim, g.out_dim, ops), tol)


def tensor(f: KrausMap, g: KrausMap, tol: Optional[Tolerance] = None) -> KrausMap:
    """f ⊗ g with Kraus set {A_k ⊗ B_l}; zero absorbs."""
    in_dim, out_dim = f.in_dim * g.in_dim, f.out_dim * g.out_dim
    if f.is_zero or g.is_zero:
        return KrausMap.zero(in_dim, out_dim)
    ops = [np.kron(a, b) for a in f.kraus for b in g.kraus]
    return compress(KrausMap(in_dim, out_dim, ops), tol)


def add(maps: Sequence[KrausMap], tol: Optional[Tolerance] = None) -> KrausMap:
    """Pointwise sum; the Kraus lists concatenate."""
    if not maps:
        raise ShapeError("add() needs at least one map")
    first = maps[0]
    for m in maps[1:]:
        if (m.in_dim, m.out_dim) != (first.in_dim, first.out_dim):
            raise ShapeError("Cannot add maps of different shapes")
    nonzero = [m for m in maps if not m.is_zero]
    if len(nonzero) == 1:
        return nonzero[0]
    ops = [a for m in nonzero for a in m.kraus]
    return compress(KrausMap(first.in_dim, first.out_dim, ops), tol)


def scale(k: KrausMap, factor: float) -> KrausMap:
    """factor · E for factor ≥ 0."""
    if factor < 0:
        raise ValueError("CP maps can only be scaled by nonnegative factors")
    if factor == 0:
        return KrausMap.zero(k.in_dim, k.out_dim)
    root = np.sqrt(factor)
    return KrausMap(k.in_dim, k.out_dim, [root * a for a in k.kraus], choi_backed=k.choi_backed)


def dualize(k: KrausMap) -> KrausMap:
    """Kraus-level adjoint A_k ↦ A_k†; an exact involution."""
    return KrausMap(k.out_dim, k.in_dim, [np.conj(a).T for a in k.kraus], choi_backed=k.choi_backed)


# ============================================================================
# Order and classification
# ============================================================================

def is_cp(c: ChoiMatrix, tol: Optional[Tolerance] = None) -> bool:
    return c.is_cp(tol)


def cp_leq(f: KrausMap, g: KrausMap, tol: Optional[Tolerance] = None) -> bool:
    """f ⊑ g iff g − f is completely positive."""
    if (f.in_dim, f.out_dim) != (g.in_dim, g.out_dim):
        raise ShapeError("cp_leq needs maps with the same dimensions")
    return mc.is_psd(g.choi.matrix - f.choi.matrix, tol)


def choi_distance(f: KrausMap, g: KrausMap) -> float:
    """Max-entry distance between Choi matrices."""
    if (f.in_dim, f.out_dim) != (g.in_dim, g.out_dim):
        raise ShapeError("choi_distance needs maps with the same dimensions")
    return mc.max_entry_distance(f.choi.matrix, g.choi.matrix)


def is_subunital(k: KrausMap, tol: Optional[Tolerance] = None) -> bool:
    """Heisenberg image of 1 is ≤ 1 (equivalently, trace-nonincreasing)."""
    return mc.loewner_leq(heisenberg_unit_image(k), np.eye(k.in_dim), tol)


def is_unital(k: KrausMap, tol: Optional[Tolerance] = None) -> bool:
    """Heisenberg image of 1 equals 1 (equivalently, trace-preserving)."""
    tol = resolve_tolerance(tol)
    return mc.max_entry(heisenberg_unit_image(k) - np.eye(k.in_dim)) <= tol.eps_eq


def is_trace_nonincreasing(
    k: KrausMap, rng: np.random.Generator, samples: int = 50, tol: Optional[Tolerance] = None
) -> bool:
    """Schrödinger-side test: tr E(ρ) ≤ tr ρ on random states."""
    tol = resolve_tolerance(tol)
    for _ in range(samples):
        rho = random_density(k.in_dim, rng)
        if np.trace(apply_schrodinger(k, rho)).real > 1.0 + tol.eps_eq:
            return False
    return True


def is_trace_preserving(
    k: KrausMap, rng: np.random.Generator, samples: int = 50, tol: Optional[Tolerance] = None
) -> bool:
    tol = resolve_tolerance(tol)
    for _ in range(samples):
        rho = random_density(k.in_dim, rng)
        if abs(np.trace(apply_schrodinger(k, rho)).real - 1.0) > tol.eps_eq:
            return False
    return True


def transpose_choi(n: int) -> ChoiMatrix:
    """Choi matrix of the (positive, not CP) transpose map on M_n: the swap."""
    swap = np.zeros((n * n, n * n))
    for a in range(n):
        for i in range(n):
            swap[a * n + i, i * n + a] = 1.0
    return ChoiMatrix(n, n, swap)


def amplify(choi: ChoiMatrix, n: int, x: CMatrix) -> CMatrix:
    """(id_{M_n} ⊗ E)(x) for x in M_n ⊗ M_in, computed from the Choi matrix."""
    size = n * choi.in_dim
    if x.shape != (size, size):
        raise ShapeError(f"Expected a {size}x{size} input, got {x.shape}")
    x4 = np.asarray(x).reshape(n, choi.in_dim, n, choi.in_dim)
    y = np.einsum("piqj,aibj->paqb", x4, choi.tensor4)
    return mc.as_cmatrix(y.reshape(n * choi.out_dim, n * choi.out_dim))


def is_n_positive(
    choi: ChoiMatrix,
    n: int,
    rng: np.random.Generator,
    samples: int = 20,
    tol: Optional[Tolerance] = None,
) -> bool:
    """
    Sampled test of positivity of the n-fold amplification id_n ⊗ E.

    Always includes the maximally entangled projector on min(n, in_dim) levels,
    which is the decisive witness for the transpose map.
    """
    d = min(n, choi.in_dim)
    omega = np.zeros(n * choi.in_dim, dtype=complex)
    for i in range(d):
        omega[i * choi.in_dim + i] = 1.0
    witnesses = [np.outer(omega, np.conj(omega))]
    witnesses += [random_density(n * choi.in_dim, rng) for _ in range(samples)]
    return all(mc.is_psd(amplify(choi, n, w), tol) for w in witnesses)


# ============================================================================
# Random generators
# ============================================================================

def random_density(n: int, rng: np.random.Generator) -> CMatrix:
    """Random density matrix (trace one) on M_n."""
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = g @ np.conj(g).T
    return mc.as_cmatrix(rho / np.trace(rho).real)


def random_effect(n: int, rng: np.random.Generator) -> CMatrix:
    """Random effect 0 ≤ x ≤ 1 on M_n."""
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    h = g @ np.conj(g).T
    return mc.as_cmatrix(h / max(1.0, mc.spectral_norm(h)) * rng.uniform(0.2, 1.0))


def random_kraus_map(
    in_dim: int,
    out_dim: int,
    rng: np.random.Generator,
    n_kraus: Optional[int] = None,
    strength: Optional[float] = None,
) -> KrausMap:
    """
    Random CP subunital map.

    The Kraus set is normalized to a channel and then scaled by ``strength``
    (uniform in (0, 1] when omitted), so Σ A†A = strength · 1.
    """
    # fewer than ceil(in/out) operators leave Σ A†A singular
    fewest = -(-in_dim // out_dim)
    if n_kraus is not None and n_kraus < fewest:
        raise ValueError(f"A map M_{in_dim} -> M_{out_dim} needs at least {fewest} Kraus operators")
    count = n_kraus or int(rng.integers(fewest, in_dim * out_dim + 1))
    ops = [
        rng.normal(size=(out_dim, in_dim)) + 1j * rng.normal(size=(out_dim, in_dim))
        for _ in range(count)
    ]
    gram = sum(np.conj(a).T @ a for a in ops)
    values, vectors = np.linalg.eigh(gram)
    inv_root = vectors @ np.diag(1.0 / np.sqrt(values)) @ np.conj(vectors).T
    s = rng.uniform(0.05, 1.0) if strength is None else strength
    return KrausMap(in_dim, out_dim, [np.sqrt(s) * a @ inv_root for a in ops])
