"""Stand-in state overdose panel for running the study without the vital-statistics file.

The series are generated, not observed. They are shaped after published
national drug-overdose death rates (per 100k, 1999-2016) and the national
unemployment rate, with state heterogeneity in level, growth and
acceleration, persistent idiosyncratic shocks, and Poisson death counts
drawn from approximate 2010 state populations so small states are noisier.
"""

from __future__ import annotations

import numpy as np

from .panel import DEFAULT_YEARS, PanelDataset

# approximate 2010 resident population, millions
STATE_POPULATION = {
    "Alabama": 4.78, "Alaska": 0.71, "Arizona": 6.39, "Arkansas": 2.92, "California": 37.25,
    "Colorado": 5.03, "Connecticut": 3.57, "Delaware": 0.90, "Florida": 18.80, "Georgia": 9.69,
    "Hawaii": 1.36, "Idaho": 1.57, "Illinois": 12.83, "Indiana": 6.48, "Iowa": 3.05,
    "Kansas": 2.85, "Kentucky": 4.34, "Louisiana": 4.53, "Maine": 1.33, "Maryland": 5.77,
    "Massachusetts": 6.55, "Michigan": 9.88, "Minnesota": 5.30, "Mississippi": 2.97, "Missouri": 5.99,
    "Montana": 0.99, "Nebraska": 1.83, "Nevada": 2.70, "New Hampshire": 1.32, "New Jersey": 8.79,
    "New Mexico": 2.06, "New York": 19.38, "North Carolina": 9.54, "North Dakota": 0.67, "Ohio": 11.54,
    "Oklahoma": 3.75, "Oregon": 3.83, "Pennsylvania": 12.70, "Rhode Island": 1.05, "South Carolina": 4.63,
    "South Dakota": 0.81, "Tennessee": 6.35, "Texas": 25.15, "Utah": 2.76, "Vermont": 0.63,
    "Virginia": 8.00, "Washington": 6.72, "West Virginia": 1.85, "Wisconsin": 5.69, "Wyoming": 0.56,
}

# national drug-overdose deaths per 100k, 1999-2016
NATIONAL_RATE = np.array(
    [6.1, 6.2, 6.8, 8.2, 8.9, 9.4, 10.1, 11.5, 11.9, 11.9, 11.9, 12.3, 13.2, 13.1, 13.8, 14.7, 16.3, 19.8]
)
# national unemployment rate, percent, 1999-2016
NATIONAL_UNEMPLOYMENT = np.array(
    [4.2, 4.0, 4.7, 5.8, 6.0, 5.5, 5.1, 4.6, 4.6, 5.8, 9.3, 9.6, 8.9, 8.1, 7.4, 6.2, 5.3, 4.9]
)


def make_standin_panel(seed: int = 20240809) -> PanelDataset:
    rng = np.random.default_rng(seed)
    states = tuple(STATE_POPULATION)
    years = np.asarray(DEFAULT_YEARS)
    S, T = len(states), years.size
    pop = np.array([STATE_POPULATION[s] for s in states]) * 1e6

    level = rng.normal(0.0, 0.35, S)
    growth = rng.normal(0.0, 0.25, S)  # log-points per decade
    accel = rng.normal(0.0, 0.20, S)  # extra log-points per 4 years after 2012
    shocks = np.zeros((S, T))
    shocks[:, 0] = rng.normal(0.0, 0.06, S)
    for t in range(1, T):
        shocks[:, t] = 0.6 * shocks[:, t - 1] + rng.normal(0.0, 0.06, S)
    trend = growth[:, None] * (years - 2007.5)[None, :] / 10.0
    trend += accel[:, None] * np.maximum(years - 2012, 0)[None, :] / 4.0
    rate = NATIONAL_RATE[None, :] * np.exp(level[:, None] + trend + shocks - 0.5 * 0.35**2)
    deaths = rng.poisson(rate * pop[:, None] / 1e5)
    crude = np.round(deaths / pop[:, None] * 1e5, 2)

    offset = rng.normal(0.0, 0.9, S)
    amplitude = np.exp(rng.normal(0.0, 0.25, S))
    unemp = 5.0 + offset[:, None] + amplitude[:, None] * (NATIONAL_UNEMPLOYMENT - 5.0)[None, :]
    unemp += rng.normal(0.0, 0.25, (S, T))
    unemp = np.round(np.clip(unemp, 2.0, None), 1)

    return PanelDataset(states, tuple(int(y) for y in years), crude, unemp)
