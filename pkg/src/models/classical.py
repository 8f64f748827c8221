"""
Finite sets and total functions between them, the classical data embedded
into the semantic category through the l-infinity functor.
"""

from __future__ import annotations

from typing import Any, Callable, Hashable, List, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class FinSet(BaseModel):
    """Finite set with an ordered list of distinct labels."""

    model_config = ConfigDict(frozen=True)

    elements: Tuple[Hashable, ...] = Field(..., description="Distinct element labels")

    @field_validator("elements")
    @classmethod
    def validate_distinct(cls, v: Tuple[Hashable, ...]) -> Tuple[Hashable, ...]:
        if len(set(v)) != len(v):
            raise ValueError(f"FinSet labels must be distinct: {v}")
        return v

    @classmethod
    def of_size(cls, n: int) -> "FinSet":
        """The set {0, ..., n-1}."""
        return cls(elements=tuple(range(n)))

    def __len__(self) -> int:
        return len(self.elements)

    def index(self, label: Hashable) -> int:
        return self.elements.index(label)

    def product(self, other: "FinSet") -> "FinSet":
        """Cartesian product with lexicographic order (left factor major)."""
        return FinSet(elements=tuple((s, t) for s in self.elements for t in other.elements))


class ClassicalFn(BaseModel):
    """Total function between finite sets, stored as an index table."""

    model_config = ConfigDict(frozen=True)

    domain: FinSet
    codomain: FinSet
    mapping: Tuple[int, ...] = Field(..., description="mapping[i] = codomain index of domain[i]")

    @model_validator(mode="after")
    def validate_total(self) -> "ClassicalFn":
        if len(self.mapping) != len(self.domain):
            raise ValueError("Function table must cover the whole domain")
        for i in self.mapping:
            if not 0 <= i < len(self.codomain):
                raise ValueError(f"Codomain index {i} out of range")
        return self

    @classmethod
    def from_callable(cls, domain: FinSet, codomain: FinSet, fn: Callable[[Any], Any]) -> "ClassicalFn":
        """Tabulate a label-level function."""
        return cls(
            domain=domain,
            codomain=codomain,
            mapping=tuple(codomain.index(fn(x)) for x in domain.elements),
        )

    @classmethod
    def identity(cls, s: FinSet) -> "ClassicalFn":
        return cls(domain=s, codomain=s, mapping=tuple(range(len(s))))

    def __call__(self, label: Hashable) -> Hashable:
        return self.codomain.elements[self.mapping[self.domain.index(label)]]

    def then(self, other: "ClassicalFn") -> "ClassicalFn":
        """Composite ``other ∘ self``."""
        if self.codomain != other.domain:
            raise ValueError("Functions do not compose")
        return ClassicalFn(
            domain=self.domain,
            codomain=other.codomain,
            mapping=tuple(other.mapping[i] for i in self.mapping),
        )

    def product(self, other: "ClassicalFn") -> "ClassicalFn":
        """``self × other`` on product sets."""
        width = len(other.codomain)
        return ClassicalFn(
            domain=self.domain.product(other.domain),
            codomain=self.codomain.product(other.codomain),
            mapping=tuple(i * width + j for i in self.mapping for j in other.mapping),
        )


def all_functions(domain: FinSet, codomain: FinSet) -> List[ClassicalFn]:
    """Every function domain → codomain (|codomain|^|domain| of them)."""
    tables: List[Tuple[int, ...]] = [()]
    for _ in range(len(domain)):
        tables = [t + (i,) for t in tables for i in range(len(codomain))]
    return [ClassicalFn(domain=domain, codomain=codomain, mapping=t) for t in tables]
