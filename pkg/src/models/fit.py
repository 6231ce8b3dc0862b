"""
Estimation report models.
"""

from pydantic import BaseModel, Field, model_validator


class FitReport(BaseModel):
    """Outcome of one maximum-likelihood optimization."""

    name: str = Field(description="Which parameter block was fitted")
    parameters: list[float] = Field(description="Final parameter vector")
    neg_loglik: float = Field(description="Final negative log-likelihood")
    iterations: int = Field(ge=0)
    converged: bool
    grad_norm: float = Field(ge=0, description="Infinity norm of the final gradient")
    gtol: float = Field(gt=0)
    nugget_joint: bool = Field(
        default=True, description="Nugget estimated jointly with the field parameters"
    )
    loglik_trace: list[float] = Field(default_factory=list)
    message: str = ""

    @model_validator(mode="after")
    def validate_convergence(self) -> "FitReport":
        """A converged fit must have a small gradient."""
        if self.converged and self.grad_norm > self.gtol:
            raise ValueError("Converged flag requires gradient norm below tolerance")
        return self
