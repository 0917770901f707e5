from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Z95 = 1.959963984540054


@dataclass
class EstimatorResult:
    """Per-event-time estimates from one estimator on one dataset.

    Event time -1 (the last year before adoption) is the reference period and
    never appears; event time 0 does not exist. Failed fits carry ``converged=False`` and may be empty.
    """

    estimator_id: str
    event_times: np.ndarray
    estimate: np.ndarray
    se: np.ndarray
    converged: bool = True
    diagnostics: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.event_times = np.asarray(self.event_times, dtype=int)
        self.estimate = np.asarray(self.estimate, dtype=float)
        self.se = np.asarray(self.se, dtype=float)
        bad = {0, -1} & set(self.event_times.tolist())
        if bad:
            raise ValueError(f"event time {min(bad)} cannot be reported (0 does not exist, -1 is the reference)")
        order = np.argsort(self.event_times, kind="stable")
        self.event_times = self.event_times[order]
        self.estimate = self.estimate[order]
        self.se = self.se[order]

    @property
    def ci_low(self) -> np.ndarray:
        return self.estimate - Z95 * self.se

    @property
    def ci_high(self) -> np.ndarray:
        return self.estimate + Z95 * self.se

    def at(self, j: int) -> tuple[float, float, float, float]:
        """``(estimate, se, ci_low, ci_high)`` at event time ``j``; NaNs if absent."""
        idx = np.flatnonzero(self.event_times == j)
        if idx.size == 0:
            return (np.nan,) * 4
        i = idx[0]
        return float(self.estimate[i]), float(self.se[i]), float(self.ci_low[i]), float(self.ci_high[i])

    def estimates_for(self, event_times) -> np.ndarray:
        return np.array([self.at(j)[0] for j in event_times])

    @classmethod
    def failed(cls, estimator_id: str, reason: str) -> "EstimatorResult":
        return cls(estimator_id, [], [], [], converged=False, diagnostics=[reason])
