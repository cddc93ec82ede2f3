"""Result containers shared by both SINR engines and the harness."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SinrBreakdown:
    """Signal and the four disturbance powers; fields may be scalars or per-UE arrays."""

    eta_s: np.ndarray | float
    eta_1: np.ndarray | float
    eta_2: np.ndarray | float
    eta_3: np.ndarray | float
    eta_w: np.ndarray | float

    @property
    def denominator(self):
        return self.eta_1 + self.eta_2 + self.eta_3 + self.eta_w

    @property
    def sinr(self):
        return self.eta_s / self.denominator

    def select(self, k: int) -> "SinrBreakdown":
        return SinrBreakdown(*(float(np.asarray(v)[k]) for v in
                               (self.eta_s, self.eta_1, self.eta_2, self.eta_3, self.eta_w)))


def to_db(x):
    with np.errstate(divide="ignore", invalid="ignore"):
        return 10.0 * np.log10(x)


@dataclass
class ExperimentResult:
    """Averaged SINR (linear) on a time or velocity axis, one column per UE."""

    engine: str
    axis_name: str  # "time_index" or "velocity_kmh"
    axis: list
    sinr: np.ndarray  # (len(axis), K) linear
    metadata: dict = field(default_factory=dict)
    per_drop: np.ndarray | None = None  # (drops, len(axis), K) linear, not emitted

    @property
    def probe_times(self) -> list:
        return list(self.axis)

    @property
    def mean_sinr(self) -> np.ndarray:
        return self.sinr.mean(axis=1)

    @property
    def sinr_db(self) -> np.ndarray:
        return to_db(self.sinr)

    @property
    def mean_sinr_db(self) -> np.ndarray:
        return to_db(self.mean_sinr)

    @property
    def flagged(self) -> list:
        """Axis points whose dB values are not finite."""
        bad = ~np.isfinite(self.sinr_db).all(axis=1) | ~np.isfinite(self.mean_sinr_db)
        return [self.axis[i] for i in np.flatnonzero(bad)]
