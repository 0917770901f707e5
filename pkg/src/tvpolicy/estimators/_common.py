from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..panel import PanelDataset, TreatmentSchedule, calendar_year


class DesignError(ValueError):
    """The data cannot identify the requested estimator."""


@dataclass
class Long:
    """Row-major long view of a balanced panel with integer codes."""

    unit: np.ndarray
    time: np.ndarray
    y: np.ndarray
    x: np.ndarray
    event_time: np.ndarray  # float, NaN for never-treated units
    adoption: np.ndarray  # per row, NaN for never-treated units
    n_units: int
    n_times: int

    @property
    def treated(self) -> np.ndarray:
        return np.nan_to_num(self.event_time, nan=0.0) >= 1

    @property
    def ever_treated(self) -> np.ndarray:
        return ~np.isnan(self.adoption)


def to_long(data: PanelDataset, schedule: TreatmentSchedule) -> Long:
    S, T = data.n_states, data.n_years
    et = schedule.event_time_matrix(data)
    adopt = schedule.adoption_array(data)
    return Long(
        unit=np.repeat(np.arange(S), T),
        time=np.tile(np.arange(T), S),
        y=data.outcome.ravel().astype(float),
        x=data.covariate.ravel().astype(float),
        event_time=et.ravel(),
        adoption=np.repeat(adopt, T),
        n_units=S,
        n_times=T,
    )


def require_controls(schedule: TreatmentSchedule, data: PanelDataset) -> None:
    adopt = schedule.adoption_array(data)
    if np.all(np.isnan(adopt)):
        raise DesignError("no treated states")
    if not np.any(np.isnan(adopt)):
        raise DesignError("no never-treated control states")


def cohort_shares(adoption_by_unit: np.ndarray, years, event_times) -> dict[int, dict[int, float]]:
    """Cohort shares at each event time among cohorts observed there.

    ``adoption_by_unit`` holds one adoption year (or NaN) per unit. A cohort
    adopting in ``e`` is observed at event time ``j`` if that event time's
    calendar year is in the panel. Shares are proportional to cohort size.
    """
    years = set(int(y) for y in years)
    sizes: dict[int, int] = {}
    for a in adoption_by_unit[~np.isnan(adoption_by_unit)]:
        sizes[int(a)] = sizes.get(int(a), 0) + 1
    out: dict[int, dict[int, float]] = {}
    for j in event_times:
        present = {e: n for e, n in sizes.items() if int(calendar_year(e, j)) in years}
        total = sum(present.values())
        if total:
            out[int(j)] = {e: n / total for e, n in sorted(present.items())}
    return out
