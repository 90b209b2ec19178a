"""Verdict labels and the certificate-carrying result record."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any


class Label(str, enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    BOUNDARY = "boundary"
    INCONCLUSIVE = "inconclusive"
    EMPIRICALLY_STABLE = "empirically_stable"
    EMPIRICALLY_UNSTABLE = "empirically_unstable"
    CONFLICT = "conflict"


@dataclass
class Verdict:
    """Outcome of one classification method.

    ``certificate`` holds the evidence backing the label (sup hitting time,
    separating vectors, U-set witness, escape slopes, ...); ``metadata``
    records the settings and interpretation choices that produced it.
    """

    label: Label
    method: str
    certificate: dict[str, Any] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def is_stable(self) -> bool:
        return self.label in (Label.STABLE, Label.EMPIRICALLY_STABLE)

    @property
    def is_unstable(self) -> bool:
        return self.label in (Label.UNSTABLE, Label.EMPIRICALLY_UNSTABLE)

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label.value,
            "method": self.method,
            "certificate": _jsonable(self.certificate),
            "metadata": _jsonable(self.metadata),
        }


def _jsonable(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, enum.Enum):
        return obj.value
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    return obj
