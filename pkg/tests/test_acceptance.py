"""Acceptance gate. Each test prints one PASS/FAIL line, repeated in the terminal summary.

Criteria 3, 4 and 6 run full Monte Carlo studies (about 15 minutes in total on one core).
"""

import csv
import itertools
import math

import numpy as np
import pytest

from conftest import canonical_2x2, random_panel
from tvpolicy.estimators import DID_FAMILY, EstimatorOptions, run_estimator
from tvpolicy.estimators.ar_debiased import ar_debiased
from tvpolicy.estimators.imputation import did_imputation, did_two_stage
from tvpolicy.harness import SimulationConfig, raw_rows, read_raw_csv, run_replicate, run_study
from tvpolicy.metrics import empirical_se, rmse
from tvpolicy.numerics import cluster_robust_vcov, ols, simplex_weights
from tvpolicy.summary import average, by_event_time
from test_estimators import _ar_panel

SEED = 20240809
ALL = ("DID-ES", "AR-DB", "ASCM", "DID-SA", "DID-HT", "DID-2S", "DID-IMP")
SCENARIOS = ["RampUp", "RampDown", "Temporary", "Inconsistent"]
NO_X = EstimatorOptions(include_covariate=False)

pytestmark = pytest.mark.slow


def _grid_objective(A, b, n=100):
    best = np.inf
    for i, j in itertools.product(range(n + 1), repeat=2):
        if i + j <= n:
            w = np.array([i, j, n - i - j]) / n
            best = min(best, float(np.sum((b - A @ w) ** 2)))
    return best


def test_criterion_1_oracles(verdict):
    X = np.ones((4, 1))
    V = cluster_robust_vcov(ols(X, [1.0, 1.0, 3.0, 3.0]), X, ["a", "a", "b", "b"], cr1=False)
    se = math.sqrt(V[0, 0])
    ok_cr0 = abs(se - math.sqrt(0.5)) <= 1e-10

    gaps = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        A, b = rng.normal(size=(5, 3)), rng.normal(size=5)
        gaps.append(abs(simplex_weights(A, b).objective - _grid_objective(A, b)))
    ok_simplex = max(gaps) <= 1e-3

    errs = []
    for seed in range(3):
        data, sched, tau = _ar_panel(np.random.default_rng(seed + 7))
        res = ar_debiased(data, sched)
        errs.append(np.max(np.abs(res.estimates_for(range(1, 7)) - tau)) if res.converged else np.inf)
    ok_ar = max(errs) <= 1e-6

    worst = 0.0
    rng = np.random.default_rng(1)
    for _ in range(200):
        v = rng.normal(rng.normal(0, 5), rng.uniform(0.1, 10), size=int(rng.integers(2, 500)))
        t = rng.normal(0, 5)
        lhs = rmse(v, t) ** 2
        rhs = empirical_se(v) ** 2 + (v.mean() - t) ** 2
        worst = max(worst, abs(lhs - rhs) / max(1.0, lhs))
    ok_id = worst <= 1e-12

    verdict(
        "criterion 1 oracles",
        ok_cr0 and ok_simplex and ok_ar and ok_id,
        f"CR0 SE {se:.10f} (tol 1e-10) {ok_cr0}; simplex max grid gap {max(gaps):.2e} (tol 1e-3) {ok_simplex}; "
        f"AR-DB noiseless max error {max(errs):.2e} (tol 1e-6) {ok_ar}; rmse identity {worst:.1e} (tol 1e-12) {ok_id}",
    )


def _one_cohort_panel(seed):
    rng = np.random.default_rng(seed)
    S, T = int(rng.integers(6, 16)), int(rng.integers(3, 10))
    adopt = 2000 + int(rng.integers(1, T))
    treated = rng.choice(S, size=int(rng.integers(1, S)), replace=False)
    return random_panel(rng, S, T, {int(i): adopt for i in treated})


def test_criterion_2_estimator_equivalence(verdict):
    gaps, single_pre, within = [], [], []
    for seed in range(20):
        data, sched = _one_cohort_panel(seed)
        res = {e: run_estimator(e, data, sched, NO_X) for e in DID_FAMILY}
        js = sorted(set.intersection(*(set(r.event_times.tolist()) for r in res.values())))
        est = np.array([[res[e].at(j)[0] for j in js] for e in DID_FAMILY])
        gap = float(np.max(est.max(axis=0) - est.min(axis=0)))
        gaps.append(gap)
        # ES, SA, HT difference against the last pre-year; 2S, IMP against all pre-years
        within.append(max(np.ptp(est[:3], axis=0).max(), np.ptp(est[3:], axis=0).max()))
        adopt = next(a for a in sched.adoption_year.values() if a is not None)
        if adopt - data.years[0] == 1:
            single_pre.append(gap)
    ok_agree = max(gaps) <= 1e-6

    data, sched = canonical_2x2()
    imp = did_imputation(data, sched, include_covariate=False, n_boot=0).at(1)[0]
    two = did_two_stage(data, sched, include_covariate=False, n_boot=0).at(1)[0]
    ok_2x2 = imp == -3.0 and two == -3.0

    n_fail = sum(g > 1e-6 for g in gaps)
    verdict(
        "criterion 2 estimator equivalence",
        ok_agree and ok_2x2,
        f"max spread across five DID estimators {max(gaps):.2e} (tol 1e-6), {n_fail}/20 panels exceed; "
        f"panels with one pre-period: {len(single_pre)}, max spread {max(single_pre, default=0.0):.1e}; "
        f"max spread within (ES, SA, HT) and (2S, IMP) {max(within):.1e}; "
        f"2x2 IMP {imp!r} 2S {two!r}",
    )


def test_criterion_3_null_calibration(verdict, tmp_path):
    cfg = SimulationConfig(data="standin", seed=SEED, scenarios=["Null"], replicates=200)
    out = run_study(cfg, tmp_path)
    recs = [r["record"] for r in read_raw_csv(out.raw_path)]
    worst_z, where = 0.0, ""
    for e in ALL:
        for j in range(1, 6):
            v = np.array([r.estimate for r in recs if r.estimator_id == e and r.event_time == j and r.converged])
            z = abs(v.mean()) / (v.std(ddof=1) / math.sqrt(v.size))
            if z > worst_z:
                worst_z, where = z, f"{e} j={j}"
    cov = average(out.metrics[25], "coverage")
    fam = {e: cov[e] for e in DID_FAMILY}
    ok_mean = worst_z <= 3.0
    ok_cov = all(0.85 <= c <= 0.99 for c in fam.values())
    verdict(
        "criterion 3 null calibration",
        ok_mean and ok_cov,
        f"largest |mean|/MCSE {worst_z:.2f} at {where} (limit 3); DID coverage "
        + ", ".join(f"{e} {c:.3f}" for e, c in fam.items())
        + " (range [0.85, 0.99])",
    )


@pytest.fixture(scope="module")
def rank_study(tmp_path_factory):
    cfg = SimulationConfig(data="standin", seed=SEED, scenarios=SCENARIOS, replicates=200)
    return run_study(cfg, tmp_path_factory.mktemp("rank"))


def _argext(d, fn):
    return fn(d, key=d.get)


def test_criterion_4_rank_orderings(verdict, rank_study):
    rows = rank_study.metrics[25]
    bias = average(rows, "std_abs_bias")
    se = average(rows, "emp_se")
    cov = average(rows, "coverage")
    down = average(rows, "rmse", scenarios=["RampDown"])
    others = lambda d, e: [v for k, v in d.items() if k != e]

    a = bias["ASCM"] < min(others(bias, "ASCM")) and bias["AR-DB"] > max(others(bias, "AR-DB"))
    b = se["AR-DB"] < min(others(se, "AR-DB")) and se["ASCM"] > max(others(se, "ASCM"))
    c = cov["ASCM"] > 0.95 and cov["AR-DB"] < 0.85
    d = down["ASCM"] < min(others(down, "ASCM")) and down["DID-2S"] > max(others(down, "DID-2S"))
    curves = {e: by_event_time(rows, "abs_bias", "RampDown", e) for e in DID_FAMILY}
    mono = {e: all(x < y for x, y in zip(v, v[1:])) for e, v in curves.items()}
    e_ok = all(mono.values())

    fmt = lambda dd: ", ".join(f"{k} {v:.3f}" for k, v in sorted(dd.items(), key=lambda kv: kv[1]))
    verdict(
        "criterion 4 rank orderings",
        a and b and c and d and e_ok,
        f"(a) {a} std abs bias [{fmt(bias)}]; (b) {b} emp SE [{fmt(se)}]; "
        f"(c) {c} coverage ASCM {cov['ASCM']:.3f} AR-DB {cov['AR-DB']:.3f}; "
        f"(d) {d} RampDown RMSE [{fmt(down)}]; "
        f"(e) {e_ok} RampDown abs bias increasing: "
        + ", ".join(f"{k} {v}" for k, v in mono.items()),
    )


def test_criterion_5_determinism(verdict, tmp_path):
    base = dict(data="standin", seed=SEED, scenarios=SCENARIOS, replicates=4)
    one = run_study(SimulationConfig(**base, threads=1), tmp_path / "t1")
    eight = run_study(SimulationConfig(**base, threads=8), tmp_path / "t8")
    names = ["raw.csv", "metrics_nt25.csv"]
    same = all((tmp_path / "t1" / n).read_bytes() == (tmp_path / "t8" / n).read_bytes() for n in names)

    with open(one.raw_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    key = lambda r: (r["scenario"], int(r["n_treated"]), int(r["replicate"]))
    keys = sorted({key(r) for r in rows})
    dropped = [keys[i] for i in np.random.default_rng(0).choice(len(keys), 10, replace=False)]
    removed = [list(r.values()) for r in rows if key(r) in dropped]
    cfg = SimulationConfig(**base)
    redone = [row for sc, nt, rep in dropped for row in raw_rows(run_replicate(cfg, sc, nt, rep))]
    ok_rerun = sorted(redone) == sorted(removed) and len(removed) == 10 * 7 * 5
    verdict(
        "criterion 5 determinism",
        same and ok_rerun,
        f"threads 1 vs 8 byte-identical raw and metrics {same}; 10 deleted replicates reproduced "
        f"({len(removed)} rows) {ok_rerun}",
    )


def test_criterion_6_sample_size(verdict, tmp_path, rank_study):
    cfg = SimulationConfig(
        data="standin",
        seed=SEED,
        scenarios=SCENARIOS,
        replicates=50,
        n_treated=[100],
        extra_states=150,
        estimators=["ASCM"],
        ascm_jackknife=False,
    )
    out = run_study(cfg, tmp_path)
    state_years = out.manifest["panel"]["states"] * (out.manifest["panel"]["years"][1] - out.manifest["panel"]["years"][0] + 1)
    big = average(out.metrics[100], "std_abs_bias")["ASCM"]
    base = average(rank_study.metrics[25], "std_abs_bias")["ASCM"]
    ok = big < base and state_years >= 500
    verdict(
        "criterion 6 sample size",
        ok,
        f"ASCM std abs bias {big:.4f} with 100 treated of {out.manifest['panel']['states']} states "
        f"({state_years} state-years) vs {base:.4f} with 25 treated",
    )
