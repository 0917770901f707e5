"""Group-time doubly robust DID with dynamic (event-time) aggregation.

For every adoption cohort ``g`` and post year ``t``, the effect ATT(g, t)
compares the cohort's outcome change from ``g - 1`` to ``t`` with that of
never-treated states. It combines a linear outcome regression for the change
among controls with a logit propensity score for cohort membership, both on
the base-year covariate. Event-time effects average ATT(g, g + j - 1) across
cohorts by cohort size. Standard errors come from the influence function,
summed within states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import SeparationError, logistic_fit
from ..panel import PanelDataset, TreatmentSchedule
from ._common import require_controls
from .result import EstimatorResult


@dataclass
class GroupTimeATT:
    cohort: int
    year: int
    att: float
    influence: np.ndarray  # length n_units, full-sample scale, zero outside the comparison


def dr_att_panel(delta_y: np.ndarray, D: np.ndarray, Z: np.ndarray, ps_coef: np.ndarray):
    """Doubly robust ATT for a two-period panel and its influence function.

    ``delta_y`` are outcome changes, ``D`` the treated indicator, ``Z`` the
    covariate design (intercept first) and ``ps_coef`` fitted logit
    coefficients. The influence function is scaled so that
    ``att - truth ~ mean(influence)``.
    """
    n = D.size
    ps = 1.0 / (1.0 + np.exp(-(Z @ ps_coef)))
    ps = np.minimum(ps, 1 - 1e-6)

    ctrl = 1.0 - D
    ZtZ = (Z * ctrl[:, None]).T @ Z
    or_coef = np.linalg.lstsq(ZtZ, (Z * ctrl[:, None]).T @ delta_y, rcond=None)[0]
    resid = delta_y - Z @ or_coef

    w_treat = D
    w_cont = ps * ctrl / (1.0 - ps)
    att_treat = w_treat * resid
    att_cont = w_cont * resid
    eta_treat = att_treat.mean() / w_treat.mean()
    eta_cont = att_cont.mean() / w_cont.mean()
    att = eta_treat - eta_cont

    # estimation effect of the outcome regression
    lin_ols = (ctrl * resid)[:, None] * Z @ np.linalg.pinv(ZtZ / n)
    # estimation effect of the propensity score
    W = ps * (1 - ps)
    hess = np.linalg.pinv((Z * W[:, None]).T @ Z / n)
    lin_ps = ((D - ps)[:, None] * Z) @ hess

    inf_treat = att_treat - w_treat * eta_treat
    inf_treat -= lin_ols @ (w_treat[:, None] * Z).mean(axis=0)
    inf_treat /= w_treat.mean()

    inf_cont = att_cont - w_cont * eta_cont
    inf_cont += lin_ps @ ((w_cont * (resid - eta_cont))[:, None] * Z).mean(axis=0)
    inf_cont -= lin_ols @ (w_cont[:, None] * Z).mean(axis=0)
    inf_cont /= w_cont.mean()

    return float(att), inf_treat - inf_cont


def group_time_effects(
    data: PanelDataset, schedule: TreatmentSchedule, include_covariate: bool = True
) -> tuple[list[GroupTimeATT], list[str]]:
    require_controls(schedule, data)
    adopt = schedule.adoption_array(data)
    never = np.isnan(adopt)
    years = list(data.years)
    N = data.n_states
    out: list[GroupTimeATT] = []
    diags: list[str] = []
    for g in sorted(int(a) for a in np.unique(adopt[~never])):
        if g - 1 not in years:
            diags.append(f"cohort {g}: no base year {g - 1} in panel, dropped")
            continue
        b = years.index(g - 1)
        sub = never | (adopt == g)
        D = (adopt[sub] == g).astype(float)
        Z = np.ones((int(sub.sum()), 1))
        if include_covariate:
            Z = np.column_stack([Z, data.covariate[sub, b]])
        try:
            ps_coef = logistic_fit(Z, D)
        except SeparationError:
            diags.append(f"cohort {g}: propensity score separated, covariate dropped from it")
            Zp = Z[:, :1]
            ps_coef = np.concatenate([logistic_fit(Zp, D), np.zeros(Z.shape[1] - 1)])
        n_sub = D.size
        for t in range(years.index(g), len(years)):
            dy = data.outcome[sub, t] - data.outcome[sub, b]
            att, inf = dr_att_panel(dy, D, Z, ps_coef)
            full = np.zeros(N)
            full[sub] = inf * (N / n_sub)
            out.append(GroupTimeATT(g, years[t], att, full))
    return out, diags


def did_staggered_cs(
    data: PanelDataset, schedule: TreatmentSchedule, include_covariate: bool = True
) -> EstimatorResult:
    cells, diags = group_time_effects(data, schedule, include_covariate)
    adopt = schedule.adoption_array(data)
    N = data.n_states
    p_g = {int(g): float(np.mean(adopt == g)) for g in np.unique(adopt[~np.isnan(adopt)])}
    member = {g: (adopt == g).astype(float) for g in p_g}

    by_j: dict[int, list[GroupTimeATT]] = {}
    for c in cells:
        by_j.setdefault(c.year - c.cohort + 1, []).append(c)

    js, est, se = [], [], []
    for j in sorted(by_j):
        cs = by_j[j]
        S = sum(p_g[c.cohort] for c in cs)
        w = np.array([p_g[c.cohort] / S for c in cs])
        atts = np.array([c.att for c in cs])
        phi = sum(wk * c.influence for wk, c in zip(w, cs))
        # estimation effect of the cohort-size weights
        dev = sum(member[c.cohort] - p_g[c.cohort] for c in cs)
        for c, att in zip(cs, atts):
            wif = (member[c.cohort] - p_g[c.cohort]) / S - dev * p_g[c.cohort] / S**2
            phi = phi + wif * att
        js.append(j)
        est.append(float(w @ atts))
        se.append(float(np.sqrt(np.sum(phi**2)) / N))
    return EstimatorResult("DID-SA", js, est, se, True, diags)
