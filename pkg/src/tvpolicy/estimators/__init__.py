"""The seven event-time policy-effect estimators behind one calling convention."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..panel import EventWindow, PanelDataset, TreatmentSchedule
from ._common import DesignError
from .ar_debiased import ar_debiased
from .ascm import ascm_staggered
from .event_study import did_event_study, did_interaction_weighted
from .imputation import did_imputation, did_two_stage
from .result import Z95, EstimatorResult
from .staggered_cs import did_staggered_cs

__all__ = [
    "ESTIMATORS",
    "DID_FAMILY",
    "DesignError",
    "EstimatorOptions",
    "EstimatorResult",
    "Z95",
    "ar_debiased",
    "ascm_staggered",
    "did_event_study",
    "did_imputation",
    "did_interaction_weighted",
    "did_staggered_cs",
    "did_two_stage",
    "run_estimator",
]


@dataclass(frozen=True)
class EstimatorOptions:
    nu: float = 0.5
    ridge_lambda: float = 1.0
    k_lags: int = 1
    l_lags: int = 5
    bootstrap_reps: int = 200
    include_covariate: bool = True
    ascm_jackknife: bool = True
    window: Optional[EventWindow] = None


def _es(d, s, o, rng):
    return did_event_study(d, s, o.window, o.include_covariate)


def _ar(d, s, o, rng):
    return ar_debiased(d, s, o.k_lags, o.l_lags, o.include_covariate)


def _ascm(d, s, o, rng):
    return ascm_staggered(d, s, o.nu, o.ridge_lambda, o.include_covariate, o.ascm_jackknife)


def _sa(d, s, o, rng):
    return did_staggered_cs(d, s, o.include_covariate)


def _ht(d, s, o, rng):
    return did_interaction_weighted(d, s, o.window, o.include_covariate)


def _2s(d, s, o, rng):
    return did_two_stage(d, s, o.window, o.include_covariate, o.bootstrap_reps, rng)


def _imp(d, s, o, rng):
    return did_imputation(d, s, o.window, o.include_covariate, o.bootstrap_reps, rng)


ESTIMATORS: dict[str, Callable] = {
    "DID-ES": _es,
    "AR-DB": _ar,
    "ASCM": _ascm,
    "DID-SA": _sa,
    "DID-HT": _ht,
    "DID-2S": _2s,
    "DID-IMP": _imp,
}
DID_FAMILY = ("DID-ES", "DID-SA", "DID-HT", "DID-2S", "DID-IMP")


def run_estimator(
    estimator_id: str,
    data: PanelDataset,
    schedule: TreatmentSchedule,
    options: EstimatorOptions = EstimatorOptions(),
    rng: Optional[np.random.Generator] = None,
) -> EstimatorResult:
    """Run one estimator; any failure becomes a flagged result instead of an exception."""
    fn = ESTIMATORS[estimator_id]
    rng = rng if rng is not None else np.random.default_rng(0)
    try:
        res = fn(data, schedule, options, rng)
    except Exception as err:  # noqa: BLE001 - a failed fit is data, not a crash
        return EstimatorResult.failed(estimator_id, f"{type(err).__name__}: {err}")
    res.estimator_id = estimator_id
    return res
