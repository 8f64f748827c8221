"""
Numerical tolerance model.

The exact order statements of the semantics are realized numerically; this
triple is the single place where slack is configured.
"""

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field


class Tolerance(BaseModel):
    """Slack used by positivity, equality and Kleene convergence tests."""

    model_config = ConfigDict(frozen=True)

    eps_psd: float = Field(1e-9, ge=0.0, description="Relative eigenvalue slack")
    eps_eq: float = Field(1e-9, ge=0.0, description="Entrywise equality slack")
    eps_fix: float = Field(1e-10, ge=0.0, description="Kleene convergence slack")

    @classmethod
    def from_config(cls) -> "Tolerance":
        """Build the tolerance triple from the application configuration."""
        from src.utils.config import get_config

        config = get_config()
        return cls(eps_psd=config.eps_psd, eps_eq=config.eps_eq, eps_fix=config.eps_fix)


def resolve_tolerance(tol: Optional[Tolerance]) -> Tolerance:
    """Return ``tol`` or the configured default when ``tol`` is None."""
    return tol if tol is not None else Tolerance.from_config()
