"""
Report models: Kleene iteration metadata, run reports and check reports.
Serialized by the report service as JSON (complex numbers as [re, im]).
"""

from __future__ import annotations

from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field
from typing_extensions import TypedDict


class Picture(str, Enum):
    """Which presentation an arrow's blocks (or a run) are given in."""

    SCHRODINGER = "schrodinger"
    HEISENBERG = "heisenberg"
    BOTH = "both"


class IterationReport(BaseModel):
    """Outcome of one Kleene chain (a loop trace or a fixed point)."""

    kind: str = Field("trace", description="trace, fix, recursion or lub")
    iterations: int = Field(0, ge=0, description="Number of Kleene steps taken")
    converged: bool = Field(False, description="Successive iterates within eps_fix")
    last_delta: float = Field(0.0, ge=0.0, description="Max-entry Choi change of the last step")
    min_slack: float = Field(
        0.0, description="Smallest eigenvalue seen in the monotonicity checks (0 when unchecked)"
    )
    columns: int = Field(0, ge=0, description="Columns materialized on demand (NatLike loops)")

    def absorb(self, other: "IterationReport") -> None:
        """Fold a per-column report into this aggregate."""
        self.iterations = max(self.iterations, other.iterations)
        self.converged = (self.converged or self.columns == 0) and other.converged
        self.last_delta = max(self.last_delta, other.last_delta)
        self.min_slack = min(self.min_slack, other.min_slack)
        self.columns += 1


class BlockDumpDict(TypedDict):
    """One block of an arrow dump."""

    row: Any
    col: Any
    in_dim: int
    out_dim: int
    choi: List[List[List[float]]]


class ArrowDumpDict(TypedDict, total=False):
    """Serialized arrow: header then per-block Choi matrices."""

    source: List[int]
    target: List[int]
    picture: str
    iterations: List[Dict[str, Any]]
    blocks: List[BlockDumpDict]


class CheckItem(BaseModel):
    """Single verification outcome."""

    name: str
    passed: bool
    detail: str = ""
    value: Optional[float] = None


class CheckReport(BaseModel):
    """Result of the ``check`` command."""

    subject: str = Field(..., description="Program path or arrow dump path")
    source: str = Field(..., description="Source signature")
    target: str = Field(..., description="Target signature")
    items: List[CheckItem] = Field(default_factory=list)
    seed: int = 0

    @property
    def passed(self) -> bool:
        return all(item.passed for item in self.items)

    def add(self, name: str, passed: bool, detail: str = "", value: Optional[float] = None) -> None:
        self.items.append(CheckItem(name=name, passed=passed, detail=detail, value=value))


class RunReport(BaseModel):
    """Result of the ``run`` and ``demo`` commands."""

    program: str = Field(..., description="Program path or demo name")
    input: str = Field("", description="Input state description")
    picture: Picture = Picture.SCHRODINGER
    source: str = ""
    target: str = ""
    output_state: Optional[Dict[str, Any]] = None
    output_effect: Optional[Dict[str, Any]] = None
    total_weight: Optional[float] = None
    loops: List[IterationReport] = Field(default_factory=list)
    converged: bool = True
    duality_residual: Optional[float] = None
    expectation: Optional[Dict[str, Any]] = None
    wall_time: float = Field(0.0, ge=0.0, description="Seconds")
