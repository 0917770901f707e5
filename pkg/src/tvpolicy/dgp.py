"""Simulated policies: staggered random adoption and time-varying effects.

Effects are percentage reductions of the observed rate, indexed by years
since adoption (1 = first year in effect) and held at the year-5 value
afterwards.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .panel import PanelDataset, TreatmentSchedule

DEFAULT_ADOPTION_RANGE = (2002, 2011)


class Scenario(str, enum.Enum):
    RAMP_UP = "RampUp"
    RAMP_DOWN = "RampDown"
    TEMPORARY = "Temporary"
    INCONSISTENT = "Inconsistent"
    NULL = "Null"

    @classmethod
    def parse(cls, name: "str | Scenario") -> "Scenario":
        if isinstance(name, Scenario):
            return name
        key = str(name).replace("_", "").replace("-", "").replace(" ", "").lower()
        for s in cls:
            if s.value.lower() == key:
                return s
        raise ValueError(f"unknown scenario {name!r}; expected one of {[s.value for s in cls]}")


EFFECT_SCENARIOS = (Scenario.RAMP_UP, Scenario.RAMP_DOWN, Scenario.TEMPORARY, Scenario.INCONSISTENT)

_FULL = 25.0 / 3.0  # ramp peak chosen so the five-year mean is 5%

_PROFILES = {
    Scenario.RAMP_UP: tuple(_FULL * f for f in (0.2, 0.4, 0.6, 0.8, 1.0)),
    Scenario.RAMP_DOWN: tuple(_FULL * f for f in (1.0, 0.8, 0.6, 0.4, 0.2)),
    Scenario.TEMPORARY: (5.0, 10.0, 7.5, 2.5, 0.0),
    Scenario.INCONSISTENT: (5.0, 9.0, 3.0, 4.0, 4.0),
    Scenario.NULL: (0.0, 0.0, 0.0, 0.0, 0.0),
}


@dataclass(frozen=True)
class EffectProfile:
    """Percent reductions for post-adoption years 1..5; later years reuse year 5."""

    percents: tuple[float, float, float, float, float]

    def __post_init__(self):
        if len(self.percents) != 5:
            raise ValueError("an effect profile has exactly five entries")
        if any(not 0.0 <= p <= 10.0 for p in self.percents):
            raise ValueError("effect percents must lie in [0, 10]")

    def percent_at(self, k):
        """Percent effect at event time(s) ``k``; zero before adoption."""
        k = np.asarray(k)
        p = np.asarray(self.percents)
        idx = np.clip(np.nan_to_num(k, nan=0).astype(int), 1, 5) - 1
        return np.where(np.nan_to_num(k, nan=0) >= 1, p[idx], 0.0)


def effect_profile(scenario: "Scenario | str") -> EffectProfile:
    return EffectProfile(_PROFILES[Scenario.parse(scenario)])


@dataclass(frozen=True)
class TruthTable:
    """True additive effects of one simulated world.

    ``effect`` holds ``Y* - Y`` per (state, year), zero for untreated cells;
    ``by_event_time`` maps event time to the average over treated cells.
    ``outcome_sd`` is the standard deviation of the untreated input outcomes,
    the divisor for standardised bias.
    """

    scenario: Scenario
    effect: np.ndarray
    by_event_time: dict
    outcome_sd: float

    def truth(self, k: int) -> float:
        return self.by_event_time.get(k, np.nan)


def draw_treatment(
    data: PanelDataset,
    n_treated: int,
    rng: np.random.Generator,
    adoption_range: tuple[int, int] = DEFAULT_ADOPTION_RANGE,
) -> TreatmentSchedule:
    """Pick ``n_treated`` states uniformly without replacement and give each a uniform adoption year."""
    if not 1 <= n_treated < data.n_states:
        raise ValueError(
            f"n_treated must be between 1 and {data.n_states - 1} so a never-treated pool remains (got {n_treated})"
        )
    lo, hi = adoption_range
    if lo > hi or lo < data.years[0] or hi > data.years[-1]:
        raise ValueError(f"adoption range {adoption_range} outside panel years {data.years[0]}-{data.years[-1]}")
    chosen = rng.choice(data.n_states, size=n_treated, replace=False)
    years = rng.integers(lo, hi + 1, size=n_treated)
    adopt: dict[str, Optional[int]] = {s: None for s in data.states}
    for i, y in zip(chosen, years):
        adopt[data.states[i]] = int(y)
    return TreatmentSchedule(adopt)


def apply_effects(
    data: PanelDataset, schedule: TreatmentSchedule, profile: EffectProfile, scenario: Scenario = Scenario.NULL
) -> tuple[PanelDataset, TruthTable]:
    """Scale treated outcomes by ``1 - p_k/100`` and record the additive truths."""
    et = schedule.event_time_matrix(data)
    pct = profile.percent_at(et)
    treated = np.nan_to_num(et, nan=0.0) >= 1
    y_new = data.outcome * (1.0 - pct / 100.0)
    y_new = np.where(treated, y_new, data.outcome)
    effect = y_new - data.outcome
    by_k = {}
    for k in np.unique(et[treated]).astype(int):
        by_k[int(k)] = float(effect[et == k].mean())
    sd = float(np.std(data.outcome[~data.treated], ddof=1))
    out = data.replace(outcome=y_new, treated=treated)
    return out, TruthTable(Scenario.parse(scenario), effect, by_k, sd)


def synthesize_states(
    data: PanelDataset,
    n_new: int,
    rng: np.random.Generator,
    noise_sd: float = 0.05,
    prefix: str = "SYN",
) -> PanelDataset:
    """Append ``n_new`` synthetic states built from resampled donor trajectories.

    Each synthetic state copies a random donor's outcome and covariate series,
    multiplies them by independent lognormal noise (log-sd ``noise_sd``) and
    smooths with a centred 3-point moving average (2-point at the ends).
    """
    if n_new < 1:
        raise ValueError("n_new must be at least 1")
    donors = rng.integers(0, data.n_states, size=n_new)
    shape = (n_new, data.n_years)
    y = data.outcome[donors] * np.exp(rng.normal(0.0, noise_sd, shape))
    x = data.covariate[donors] * np.exp(rng.normal(0.0, noise_sd, shape))
    y, x = _smooth3(y), _smooth3(x)
    taken = set(data.states)
    names, i = [], 1
    while len(names) < n_new:
        name = f"{prefix}{i:04d}"
        if name not in taken:
            names.append(name)
        i += 1
    return PanelDataset(
        data.states + tuple(names),
        data.years,
        np.vstack([data.outcome, np.maximum(y, 0.0)]),
        np.vstack([data.covariate, np.maximum(x, 0.0)]),
        np.vstack([data.treated, np.zeros(shape, dtype=bool)]),
    )


def _smooth3(a: np.ndarray) -> np.ndarray:
    if a.shape[1] < 3:
        return a.copy()
    out = np.empty_like(a)
    out[:, 1:-1] = (a[:, :-2] + a[:, 1:-1] + a[:, 2:]) / 3.0
    out[:, 0] = (a[:, 0] + a[:, 1]) / 2.0
    out[:, -1] = (a[:, -2] + a[:, -1]) / 2.0
    return out
