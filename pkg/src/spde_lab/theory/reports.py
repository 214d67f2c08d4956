"""Verdicts and report records shared by the oracles."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field, is_dataclass


class Verdict(str, enum.Enum):
    BLOWUP_PREDICTED = "BlowupPredicted"
    GLOBAL_PREDICTED = "GlobalPredicted"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class ThresholdReport:
    name: str
    hypotheses: dict
    threshold: float
    observed: float
    verdict: Verdict
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return jsonable(self)


def jsonable(obj):
    """Recursively convert reports to JSON-safe values (inf/nan become strings)."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return {k: jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if hasattr(obj, "tolist"):
        return jsonable(obj.tolist())
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    return obj
