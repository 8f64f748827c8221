"""
Pytest configuration and shared fixtures for the test suite.

This module provides:
- Tolerance and seeded random number generator fixtures
- Random CP maps, arrows, states and effects over small signatures
- Paths to the bundled programs and a helper for writing ad-hoc ones
- Test environment setup (output directory, invariant checking)
"""

from pathlib import Path
from typing import Callable, List

import numpy as np
import pytest

from src.models.signature import Signature
from src.models.tolerance import Tolerance
from src.services import cpmap as cp
from src.services import qcat
from src.services.cpmap import KrausMap
from src.services.qcat import QArrow

PROJECT_ROOT = Path(__file__).parent.parent


# ============================================================================
# Numerical Fixtures
# ============================================================================

@pytest.fixture
def tol() -> Tolerance:
    """Default tolerance triple (1e-9, 1e-9, 1e-10)."""
    return Tolerance()


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator so every sampled test is reproducible."""
    return np.random.default_rng(20240611)


# ============================================================================
# Random Maps and Arrows
# ============================================================================

SMALL_SIGNATURES: List[Signature] = [
    Signature.finite(1),
    Signature.finite(2),
    Signature.finite(1, 1),
    Signature.finite(2, 1),
    Signature.finite(1, 2, 1),
]


@pytest.fixture
def small_signatures() -> List[Signature]:
    """Finite signatures with at most three blocks and total dimension at most 6."""
    return list(SMALL_SIGNATURES)


@pytest.fixture
def random_map(rng: np.random.Generator) -> Callable[..., KrausMap]:
    """Factory for random CP subunital block maps M_n -> M_m."""

    def make(in_dim: int, out_dim: int, strength=None) -> KrausMap:
        return cp.random_kraus_map(in_dim, out_dim, rng, strength=strength)

    return make


@pytest.fixture
def random_arrow(rng: np.random.Generator) -> Callable[..., QArrow]:
    """Factory for random trace-nonincreasing arrows between Finite signatures."""

    def make(source: Signature, target: Signature, trace_preserving: bool = False, sparsity: float = 0.0) -> QArrow:
        return qcat.random_arrow(source, target, rng, trace_preserving=trace_preserving, sparsity=sparsity)

    return make


@pytest.fixture
def random_pair(rng: np.random.Generator, small_signatures: List[Signature]) -> Callable[[], tuple]:
    """Factory for a random (source, target) pair drawn from the small signatures."""

    def make() -> tuple:
        i, j = rng.integers(0, len(small_signatures), size=2)
        return small_signatures[int(i)], small_signatures[int(j)]

    return make


# ============================================================================
# Programs
# ============================================================================

@pytest.fixture
def programs_dir() -> Path:
    """Directory of the bundled QPL programs."""
    return PROJECT_ROOT / "programs"


@pytest.fixture
def write_program(tmp_path: Path) -> Callable[[str, str], Path]:
    """Write QPL source text to a temporary file and return its path."""

    def write(source: str, name: str = "program.qpl") -> Path:
        path = tmp_path / name
        path.write_text(source, encoding="utf-8")
        return path

    return write


# ============================================================================
# Test Environment Setup
# ============================================================================

@pytest.fixture
def test_output_dir(tmp_path: Path) -> Path:
    """
    Create a temporary output directory for test reports.

    Args:
        tmp_path: Pytest's temporary directory fixture

    Returns:
        Path to test output directory
    """
    output_dir = tmp_path / "reports"
    output_dir.mkdir(parents=True, exist_ok=True)
    return output_dir


@pytest.fixture
def invariant_checks(monkeypatch: pytest.MonkeyPatch) -> None:
    """Re-check trace-nonincrease after every arrow constructor."""
    monkeypatch.setenv("QPL_CHECK_INVARIANTS", "true")
