"""Sensitivity report container."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hedges import HedgeFunction

CONSTRAINTS = ("none", "M", "m1", "M_m1")
METRICS = ("adapted", "standard")


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


@dataclass
class SensitivityReport:
    constraint: str
    metric: str
    p: float
    value: float
    stderr: float = 0.0
    hedges: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.constraint not in CONSTRAINTS:
            raise ValueError(f"constraint must be one of {CONSTRAINTS}")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if not (np.isfinite(self.value) and self.value >= 0.0):
            raise ValueError("sensitivity must be finite and nonnegative")

    @property
    def label(self):
        return f"{self.metric}/{self.constraint}"

    def hedge(self, name="h") -> HedgeFunction:
        return self.hedges[name]

    def to_dict(self, with_hedges=True):
        out = {
            "constraint": self.constraint,
            "metric": self.metric,
            "p": float(self.p),
            "value": float(self.value),
            "stderr": float(self.stderr),
            "diagnostics": _plain(self.diagnostics),
        }
        if with_hedges:
            out["hedges"] = {k: h.to_dict() for k, h in self.hedges.items()}
        return out
