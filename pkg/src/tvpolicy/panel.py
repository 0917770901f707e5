"""Balanced state-year panels, treatment schedules and event-time bookkeeping.

A :class:`PanelDataset` stores its values as dense ``(state, year)`` matrices.
Every estimator in the package works on these matrices directly, so the
balanced layout is enforced once here, at load time.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("state", "year", "crude_rate", "unemployment_rate")
DEFAULT_YEARS = tuple(range(1999, 2017))


class PanelLoadError(ValueError):
    """Raised when a panel file cannot be turned into a valid dataset."""


@dataclass(frozen=True)
class PanelObservation:
    state: str
    year: int
    outcome: float
    covariate: float
    treated: bool = False


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "\n".join(self.violations)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Balanced panel of outcomes, one covariate and treatment flags.

    Attributes
    ----------
    states : tuple of str
        Unit ids in row order.
    years : tuple of int
        Contiguous calendar years in column order.
    outcome, covariate : ndarray, shape (n_states, n_years)
        Overdose deaths per 100k and unemployment rate per 100.
    treated : ndarray of bool, shape (n_states, n_years)
        Policy-in-effect indicator.
    """

    states: tuple[str, ...]
    years: tuple[int, ...]
    outcome: np.ndarray
    covariate: np.ndarray
    treated: np.ndarray = None  # type: ignore[assignment]
    _index: dict = field(default=None, repr=False, compare=False)  # type: ignore[assignment]

    def __post_init__(self):
        shape = (len(self.states), len(self.years))
        treated = self.treated
        if treated is None:
            treated = np.zeros(shape, dtype=bool)
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        object.__setattr__(self, "years", tuple(int(y) for y in self.years))
        object.__setattr__(self, "outcome", _readonly(np.asarray(self.outcome, dtype=float)))
        object.__setattr__(self, "covariate", _readonly(np.asarray(self.covariate, dtype=float)))
        object.__setattr__(self, "treated", _readonly(np.asarray(treated, dtype=bool)))
        for name in ("outcome", "covariate", "treated"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if len(set(self.states)) != len(self.states):
            raise ValueError("duplicate state ids")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.states)})

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_years(self) -> int:
        return len(self.years)

    def state_index(self, state: str) -> int:
        try:
            return self._index[state]
        except KeyError:
            raise KeyError(f"unknown state {state!r}") from None

    @property
    def observations(self) -> Iterator[PanelObservation]:
        for i, s in enumerate(self.states):
            for t, y in enumerate(self.years):
                yield PanelObservation(
                    s, y, float(self.outcome[i, t]), float(self.covariate[i, t]), bool(self.treated[i, t])
                )

    def replace(self, **changes) -> "PanelDataset":
        kw = dict(
            states=self.states,
            years=self.years,
            outcome=self.outcome,
            covariate=self.covariate,
            treated=self.treated,
        )
        kw.update(changes)
        return PanelDataset(**kw)

    def to_frame(self):
        import pandas as pd

        return pd.DataFrame(
            {
                "state": np.repeat(self.states, self.n_years),
                "year": np.tile(self.years, self.n_states),
                "crude_rate": self.outcome.ravel(),
                "unemployment_rate": self.covariate.ravel(),
                "treated": self.treated.ravel(),
            }
        )


@dataclass(frozen=True)
class TreatmentSchedule:
    """Adoption year per state; ``None`` marks a never-treated state."""

    adoption_year: Mapping[str, Optional[int]]

    def adopters(self) -> list[str]:
        return [s for s, a in self.adoption_year.items() if a is not None]

    def never_treated(self) -> list[str]:
        return [s for s, a in self.adoption_year.items() if a is None]

    def adoption_array(self, data: PanelDataset) -> np.ndarray:
        """Adoption year per dataset row as floats, NaN for never-treated."""
        out = np.full(data.n_states, np.nan)
        for s, a in self.adoption_year.items():
            if a is not None:
                out[data.state_index(s)] = a
        return out

    def event_time_matrix(self, data: PanelDataset) -> np.ndarray:
        """Event times as a float ``(state, year)`` matrix, NaN for never-treated rows."""
        adopt = self.adoption_array(data)
        return _event_time(np.asarray(data.years, dtype=float)[None, :], adopt[:, None])

    def treated_matrix(self, data: PanelDataset) -> np.ndarray:
        et = self.event_time_matrix(data)
        return np.nan_to_num(et, nan=0.0) >= 1

    def validate(self, data: PanelDataset) -> None:
        lo, hi = data.years[0], data.years[-1]
        for s, a in self.adoption_year.items():
            data.state_index(s)
            if a is not None and not lo <= a <= hi:
                raise ValueError(f"adoption year {a} for {s} outside {lo}-{hi}")
        if not any(self.adoption_year.get(s) is None for s in data.states):
            raise ValueError("schedule has no never-treated states")

    @classmethod
    def from_treated(cls, data: PanelDataset) -> "TreatmentSchedule":
        """Recover a schedule from the dataset's absorbing treatment flags."""
        adopt: dict[str, Optional[int]] = {}
        for i, s in enumerate(data.states):
            idx = np.flatnonzero(data.treated[i])
            adopt[s] = data.years[idx[0]] if idx.size else None
        return cls(adopt)


@dataclass(frozen=True)
class EventWindow:
    """Event-time bins: leads at or below ``min_lead`` and lags at or above ``max_lag`` share a dummy."""

    min_lead: int = -13
    max_lag: int = 18

    def __post_init__(self):
        if not (self.min_lead < -1 and self.max_lag >= 5):
            raise ValueError(f"invalid event window ({self.min_lead}, {self.max_lag})")

    @classmethod
    def covering(cls, data: PanelDataset) -> "EventWindow":
        """Window wide enough that no bin pools more than one event time."""
        span = data.n_years
        return cls(min_lead=min(-(span - 1), -2), max_lag=max(span, 5))

    def clip(self, et: np.ndarray) -> np.ndarray:
        return np.clip(et, self.min_lead, self.max_lag)


def _event_time(year, adopt):
    # no event time 0: the adoption year is 1 and the year before it is -1
    d = year - adopt
    return np.where(d >= 0, d + 1, d)


def calendar_year(adopt, j):
    """Inverse of the event-time map: calendar year of event time ``j`` for adoption year ``adopt``."""
    j = np.asarray(j)
    if np.any(j == 0):
        raise ValueError("event time 0 does not exist")
    return np.where(j > 0, adopt + j - 1, adopt + j)


def event_time(state: str, year: int, schedule: TreatmentSchedule) -> Optional[int]:
    """Years relative to adoption: 1 is the first treated year and -1 the year before; ``None`` if never treated."""
    if state not in schedule.adoption_year:
        raise KeyError(f"unknown state {state!r}")
    adopt = schedule.adoption_year[state]
    if adopt is None:
        return None
    return int(_event_time(int(year), int(adopt)))


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise PanelLoadError(f"row {line}: cannot parse {column}={text!r}") from None
    if not math.isfinite(value):
        raise PanelLoadError(f"row {line}: non-finite {column}={text!r}")
    return value


def _parse_int(text: str, line: int, column: str) -> int:
    try:
        return int(text)
    except (TypeError, ValueError):
        try:
            value = float(text)
        except (TypeError, ValueError):
            raise PanelLoadError(f"row {line}: cannot parse {column}={text!r}") from None
        if value != int(value):
            raise PanelLoadError(f"row {line}: non-integer {column}={text!r}") from None
        return int(value)


def validate_panel(data: PanelDataset | Iterable[PanelObservation]) -> ValidationReport:
    """Collect balance, sign, gap and absorbing-treatment violations.

    Accepts either a dataset or a loose collection of observations so that
    unbalanced inputs can be diagnosed before a dataset is built.
    """
    obs = list(data.observations) if isinstance(data, PanelDataset) else list(data)
    problems: list[str] = []
    if not obs:
        return ValidationReport(("no observations",))

    seen: dict[tuple[str, int], int] = {}
    for o in obs:
        key = (o.state, o.year)
        seen[key] = seen.get(key, 0) + 1
    for (s, y), n in sorted(seen.items()):
        if n > 1:
            problems.append(f"duplicate: {s} {y} appears {n} times")

    states = sorted({o.state for o in obs})
    years = sorted({o.year for o in obs})
    full_years = range(years[0], years[-1] + 1)
    for y in full_years:
        if y not in set(years):
            problems.append(f"year gap: no observations in {y}")
    for s in states:
        for y in full_years:
            if (s, y) not in seen:
                problems.append(f"unbalanced: {s} missing {y}")

    for o in obs:
        if o.outcome < 0:
            problems.append(f"negative outcome: {o.state} {o.year} ({o.outcome})")
        if o.covariate < 0:
            problems.append(f"negative covariate: {o.state} {o.year} ({o.covariate})")

    by_state: dict[str, list[PanelObservation]] = {}
    for o in obs:
        by_state.setdefault(o.state, []).append(o)
    for s, rows in by_state.items():
        flags = [o.treated for o in sorted(rows, key=lambda o: o.year)]
        if any(a and not b for a, b in zip(flags, flags[1:])):
            problems.append(f"non-absorbing treatment: {s}")

    return ValidationReport(tuple(problems))


def dataset_from_observations(obs: Sequence[PanelObservation]) -> PanelDataset:
    report = validate_panel(obs)
    if not report.ok:
        raise PanelLoadError(str(report))
    states = sorted({o.state for o in obs})
    years = sorted({o.year for o in obs})
    si = {s: i for i, s in enumerate(states)}
    yi = {y: j for j, y in enumerate(years)}
    shape = (len(states), len(years))
    y_arr, x_arr, d_arr = np.empty(shape), np.empty(shape), np.zeros(shape, dtype=bool)
    for o in obs:
        i, j = si[o.state], yi[o.year]
        y_arr[i, j], x_arr[i, j], d_arr[i, j] = o.outcome, o.covariate, o.treated
    return PanelDataset(tuple(states), tuple(years), y_arr, x_arr, d_arr)


def load_panel_csv(path: str | Path) -> PanelDataset:
    """Read a ``state,year,crude_rate,unemployment_rate`` CSV into a validated panel.

    An optional ``treated`` column (0/1) is honoured; any other extra column
    is ignored with a warning.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if header and missing:
            raise PanelLoadError(f"{path}: missing column(s) {', '.join(missing)}")
        extra = [c for c in header if c not in REQUIRED_COLUMNS and c != "treated"]
        if extra:
            logger.warning("%s: ignoring extra column(s) %s", path, ", ".join(extra))

        obs: list[PanelObservation] = []
        seen: dict[tuple[str, int], int] = {}
        for line, row in enumerate(reader, start=2):
            state = (row.get("state") or "").strip()
            if not state:
                raise PanelLoadError(f"row {line}: empty state")
            year = _parse_int(row["year"], line, "year")
            if (state, year) in seen:
                raise PanelLoadError(
                    f"row {line}: duplicate ({state}, {year}), first seen on row {seen[state, year]}"
                )
            seen[state, year] = line
            treated = False
            if "treated" in row and row["treated"] not in (None, ""):
                treated = bool(_parse_int(row["treated"], line, "treated"))
            obs.append(
                PanelObservation(
                    state,
                    year,
                    _parse_float(row["crude_rate"], line, "crude_rate"),
                    _parse_float(row["unemployment_rate"], line, "unemployment_rate"),
                    treated,
                )
            )
    if not obs:
        raise PanelLoadError(f"{path}: no observations")
    return dataset_from_observations(obs)


def write_panel_csv(data: PanelDataset, path: str | Path, include_treated: bool = False) -> None:
    """Write a panel in the loader's schema; floats use shortest round-trip repr."""
    cols = list(REQUIRED_COLUMNS) + (["treated"] if include_treated else [])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for o in data.observations:
            row = [o.state, o.year, repr(o.outcome), repr(o.covariate)]
            if include_treated:
                row.append(int(o.treated))
            w.writerow(row)
