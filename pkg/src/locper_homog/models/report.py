"""
Verification and convergence reports.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

CHECK_STATUSES = ("pass", "fail", "inconclusive")


@dataclass
class CheckReport:
    """Outcome of one verification check."""

    check_id: str
    status: str
    measured: float
    tolerance: float
    provenance: str
    runtime_seconds: float = 0.0
    details: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.status not in CHECK_STATUSES:
            raise ValueError(f"status must be one of {CHECK_STATUSES}, got '{self.status}'")

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    @classmethod
    def compare(cls, check_id: str, measured: float, tolerance: float, provenance: str,
                **details: Any) -> "CheckReport":
        """Pass when measured <= tolerance; non-finite measurements fail."""
        measured = float(measured)
        status = "pass" if np.isfinite(measured) and measured <= tolerance else "fail"
        return cls(check_id, status, measured, float(tolerance), provenance, details=dict(details))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "check_id": self.check_id,
            "status": self.status,
            "measured": self.measured,
            "tolerance": self.tolerance,
            "provenance": self.provenance,
            "runtime_seconds": self.runtime_seconds,
            "details": self.details,
        }

    def __repr__(self) -> str:
        return f"<CheckReport(check_id='{self.check_id}', status='{self.status}', measured={self.measured:.3e})>"


@dataclass
class ConvergenceReport:
    """Errors between direct and homogenized solutions along an epsilon ladder."""

    rows: List[Dict[str, Any]] = field(default_factory=list)
    status: str = "complete"
    timings: Dict[str, float] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)

    COLUMNS = ("epsilon", "resolution", "l2_error", "h1_error", "relative_l2_error", "relative_h1_error",
               "direct_h1_norm")

    @property
    def budget_exceeded(self) -> bool:
        return self.status == "budget_exceeded"

    def _sorted_errors(self, column: str) -> np.ndarray:
        ordered = sorted(self.rows, key=lambda row: -row["epsilon"])
        return np.array([row[column] for row in ordered])

    def is_monotone(self, column: str = "l2_error") -> bool:
        """Strict decrease as epsilon decreases."""
        errors = self._sorted_errors(column)
        return bool(errors.size >= 2 and np.all(np.diff(errors) < 0.0))

    def final_error(self, column: str = "l2_error") -> Optional[float]:
        errors = self._sorted_errors(column)
        return float(errors[-1]) if errors.size else None

    def norm_band(self, column: str = "direct_h1_norm") -> Optional[float]:
        """max / min of a column over the ladder."""
        values = self._sorted_errors(column)
        if values.size == 0 or np.min(values) <= 0.0:
            return None
        return float(np.max(values) / np.min(values))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.rows, columns=list(self.COLUMNS))
        return frame.sort_values("epsilon", ascending=False, ignore_index=True)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status,
            "rows": self.rows,
            "monotone_l2": self.is_monotone("l2_error") if len(self.rows) >= 2 else None,
            "timings": self.timings,
            "metadata": self.metadata,
        }
