"""Residual summaries shared by the operator checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ResidualReport:
    """Per-sample residual vectors of some operator along a path.

    ``values`` has shape ``(len(s), ...)``; ``sup`` is the max-abs over
    everything.  ``extras`` carries scalar side results (named residuals,
    auxiliary norms).
    """

    name: str
    s: np.ndarray
    values: np.ndarray
    extras: dict = field(default_factory=dict)

    @property
    def sup(self) -> float:
        v = np.asarray(self.values)
        return float(np.max(np.abs(v))) if v.size else 0.0

    @property
    def sup_per_component(self) -> np.ndarray:
        v = np.abs(np.asarray(self.values))
        if v.ndim < 2:
            return v
        return v.reshape(v.shape[0], -1).max(axis=0)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "samples": int(np.size(self.s)),
            "sup": self.sup,
            "sup_per_component": [float(c) for c in np.atleast_1d(self.sup_per_component)],
            **{k: _jsonable(v) for k, v in self.extras.items()},
        }


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v
