"""
Report models shared by the inequality verifiers.

Reports are pydantic models so that the CLI can emit them as JSON without a
separate serialization layer.
"""

from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator


class InequalityReport(BaseModel):
    """
    Empirical record of a sampled inequality check.

    worst_ratio is the max over samples of LHS / (RHS without its constant);
    constants holds named empirical constants (C(delta), C_H, ...).
    Analytic constants are never asserted, only these measured ones.
    """

    model_config = ConfigDict(populate_by_name=True)

    name: str
    samples: int = Field(ge=0)
    worst_ratio: float = Field(ge=0.0)
    fitted_exponent: Optional[float] = None
    passed: bool = Field(alias="pass")
    seed: Optional[int] = None
    config: Dict[str, Any] = Field(default_factory=dict)
    constants: Dict[str, float] = Field(default_factory=dict)
    notes: List[str] = Field(default_factory=list)
    series: Dict[str, List[float]] = Field(default_factory=dict)

    @field_validator("worst_ratio")
    @classmethod
    def _finite_ratio(cls, value: float) -> float:
        if not np.isfinite(value):
            raise ValueError("worst_ratio must be finite")
        return float(value)

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True)

    def summary_line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        exponent = "" if self.fitted_exponent is None else f", exponent={self.fitted_exponent:.4f}"
        return f"[{status}] {self.name}: samples={self.samples}, worst_ratio={self.worst_ratio:.4g}{exponent}"


def clamp_ratio(value: float) -> float:
    """Map NaN/inf ratios to the largest float so a failing check still yields a report."""
    value = float(value)
    if np.isfinite(value):
        return max(value, 0.0)
    return float(np.finfo(float).max)
