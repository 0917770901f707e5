"""Simulation study driver.

Every replicate is identified by ``(scenario, n_treated, replicate)``. Its
random stream is a pure function of that tuple and the master seed, so
results do not depend on worker count or scheduling and any replicate can be
re-run on its own.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import tempfile
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dgp import EFFECT_SCENARIOS, Scenario, TruthTable, apply_effects, draw_treatment, effect_profile, synthesize_states
from .estimators import ESTIMATORS, EstimatorOptions, EstimatorResult, run_estimator
from .metrics import EVENT_TIMES, MetricsRow, ReplicateRecord, aggregate, records_from_result, write_metrics_csv
from .panel import PanelDataset, load_panel_csv
from .standin import make_standin_panel

RAW_COLUMNS = (
    "scenario",
    "estimator",
    "n_treated",
    "replicate",
    "event_time",
    "estimate",
    "se",
    "ci_low",
    "ci_high",
    "truth",
    "converged",
    "outcome_sd",
)
STANDIN = "standin"
MASK64 = (1 << 64) - 1


@dataclass
class SimulationConfig:
    """One simulation study. ``data`` is a panel CSV path or ``"standin"``."""

    data: str
    seed: int
    scenarios: list[str] = field(default_factory=lambda: [s.value for s in EFFECT_SCENARIOS])
    n_treated: list[int] = field(default_factory=lambda: [25])
    replicates: int = 1000
    estimators: list[str] = field(default_factory=lambda: list(ESTIMATORS))
    adoption_range: tuple[int, int] = (2002, 2011)
    extra_states: int = 0
    nu: float = 0.5
    ridge_lambda: float = 1.0
    k_lags: int = 1
    l_lags: int = 5
    bootstrap_reps: int = 200
    ascm_jackknife: bool = True
    threads: int = 1
    out: str = "results"

    def __post_init__(self):
        self.scenarios = [Scenario.parse(s).value for s in self.scenarios]
        self.n_treated = [int(n) for n in self.n_treated]
        self.estimators = list(self.estimators)
        self.adoption_range = (int(self.adoption_range[0]), int(self.adoption_range[1]))
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed <= MASK64:
            raise ValueError(f"seed must be an integer in [0, 2**64), got {self.seed!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            raise ValueError(f"unknown estimator {unknown[0]!r}; known: {', '.join(ESTIMATORS)}")
        if not self.estimators:
            raise ValueError("at least one estimator is required")
        if not self.scenarios or not self.n_treated:
            raise ValueError("scenarios and n_treated must be non-empty")
        if any(n < 1 for n in self.n_treated):
            raise ValueError("n_treated entries must be positive")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        if self.extra_states < 0:
            raise ValueError("extra_states must be non-negative")

    def options(self) -> EstimatorOptions:
        return EstimatorOptions(
            nu=self.nu,
            ridge_lambda=self.ridge_lambda,
            k_lags=self.k_lags,
            l_lags=self.l_lags,
            bootstrap_reps=self.bootstrap_reps,
            ascm_jackknife=self.ascm_jackknife,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["adoption_range"] = list(self.adoption_range)
        return d


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(master_seed: int, scenario, n_treated: int, replicate_index: int) -> int:
    """64-bit seed for one replicate: splitmix64 chained over the tuple fields.

    The scenario enters through CRC-32 of its name, which is stable across
    processes (unlike ``hash``).
    """
    h = _splitmix64(int(master_seed) & MASK64)
    for part in (zlib.crc32(Scenario.parse(scenario).value.encode()), int(n_treated), int(replicate_index)):
        h = _splitmix64(h ^ (part & MASK64))
    return h


def _estimator_rng(seed: int, estimator_id: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(estimator_id.encode())]))


def load_study_data(config: SimulationConfig) -> PanelDataset:
    data = make_standin_panel() if config.data == STANDIN else load_panel_csv(config.data)
    if config.extra_states:
        rng = np.random.default_rng(_splitmix64(config.seed ^ 0x5EED))
        data = synthesize_states(data, config.extra_states, rng)
    return data


@dataclass
class ReplicateResult:
    scenario: str
    n_treated: int
    replicate: int
    seed: int
    truth: TruthTable
    results: list[EstimatorResult]

    def records(self) -> list[ReplicateRecord]:
        return [rec for res in self.results for rec in records_from_result(res, self.truth, EVENT_TIMES)]


def run_replicate(
    config: SimulationConfig, scenario, n_treated: int, replicate_index: int, data: Optional[PanelDataset] = None
) -> ReplicateResult:
    """Draw treatment, apply the scenario's effects and run every configured estimator."""
    data = data if data is not None else load_study_data(config)
    scenario = Scenario.parse(scenario)
    seed = derive_seed(config.seed, scenario, n_treated, replicate_index)
    rng = np.random.default_rng(seed)
    schedule = draw_treatment(data, n_treated, rng, config.adoption_range)
    panel, truth = apply_effects(data, schedule, effect_profile(scenario), scenario)
    opts = config.options()
    results = [run_estimator(e, panel, schedule, opts, _estimator_rng(seed, e)) for e in config.estimators]
    return ReplicateResult(scenario.value, n_treated, replicate_index, seed, truth, results)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def raw_rows(rep: ReplicateResult) -> list[list[str]]:
    """Raw-CSV rows (as strings) for one replicate, in estimator then event-time order."""
    return [
        [
            _fmt(v)
            for v in (
                rep.scenario,
                r.estimator_id,
                rep.n_treated,
                rep.replicate,
                r.event_time,
                float(r.estimate),
                float(r.se),
                float(r.ci_low),
                float(r.ci_high),
                float(r.truth),
                bool(r.converged),
                float(r.outcome_sd),
            )
        ]
        for r in rep.records()
    ]


def read_raw_csv(path) -> list[dict]:
    """Raw results grouped as dicts with typed fields, in file order."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in RAW_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing column {missing[0]!r}")
        num = lambda s: float(s) if s != "" else float("nan")
        rows = []
        for row in reader:
            rows.append(
                dict(
                    scenario=row["scenario"],
                    n_treated=int(row["n_treated"]),
                    replicate=int(row["replicate"]),
                    record=ReplicateRecord(
                        row["estimator"],
                        int(row["event_time"]),
                        num(row["estimate"]),
                        num(row["se"]),
                        num(row["ci_low"]),
                        num(row["ci_high"]),
                        num(row["truth"]),
                        row["converged"] == "true",
                        num(row["outcome_sd"]),
                    ),
                )
            )
    return rows


def metrics_from_raw(rows: Sequence[dict]) -> dict[int, list[MetricsRow]]:
    """Metrics tables keyed by ``n_treated``; scenario and estimator order follow first appearance."""
    groups: dict[int, dict[str, list[ReplicateRecord]]] = {}
    for r in rows:
        groups.setdefault(r["n_treated"], {}).setdefault(r["scenario"], []).append(r["record"])
    return {nt: [row for sc, recs in by_sc.items() for row in aggregate(recs, sc)] for nt, by_sc in groups.items()}


def metrics_filename(n_treated: int) -> str:
    return f"metrics_nt{n_treated}.csv"


# worker-process state: data is loaded once per process
_WORKER: dict = {}


def _init_worker(config_dict: dict) -> None:
    cfg = SimulationConfig(**config_dict)
    _WORKER["config"] = cfg
    _WORKER["data"] = load_study_data(cfg)


def _task(key: tuple[str, int, int]) -> tuple[list[list[str]], list[tuple[str, bool]]]:
    rep = run_replicate(_WORKER["config"], *key, data=_WORKER["data"])
    return raw_rows(rep), [(r.estimator_id, bool(r.converged)) for r in rep.results]


def _check_writable(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=out):
            pass
    except OSError as err:
        raise OSError(f"output directory {out} is not writable: {err}") from err


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class StudyOutput:
    raw_path: Path
    metrics_paths: dict[int, Path]
    manifest_path: Path
    metrics: dict[int, list[MetricsRow]]
    manifest: dict


def study_keys(config: SimulationConfig) -> list[tuple[str, int, int]]:
    return [(sc, nt, r) for nt in config.n_treated for sc in config.scenarios for r in range(config.replicates)]


def run_study(config: SimulationConfig, out_dir=None, progress=None) -> StudyOutput:
    """Run every replicate, then write ``raw.csv``, one metrics CSV per treated count and ``manifest.json``."""
    out = Path(out_dir if out_dir is not None else config.out)
    _check_writable(out)
    t0 = time.perf_counter()
    data = load_study_data(config)
    too_many = [n for n in config.n_treated if n >= data.n_states]
    if too_many:
        raise ValueError(f"n_treated {too_many[0]} leaves no never-treated states among {data.n_states}")

    keys = study_keys(config)
    if config.threads == 1:
        _WORKER.update(config=config, data=data)
        outputs = map(_task, keys)
        pool = None
    else:
        pool = ProcessPoolExecutor(config.threads, initializer=_init_worker, initargs=(config.to_dict(),))
        outputs = pool.map(_task, keys, chunksize=max(1, len(keys) // (8 * config.threads)))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RAW_COLUMNS)
    failures: dict[str, dict[str, int]] = {}
    try:
        for i, (rows, status) in enumerate(outputs):
            writer.writerows(rows)
            sc = keys[i][0]
            for est_id, ok in status:
                cell = failures.setdefault(sc, {}).setdefault(est_id, 0)
                failures[sc][est_id] = cell + (not ok)
            if progress is not None:
                progress(i + 1, len(keys))
    finally:
        if pool is not None:
            pool.shutdown()

    raw_path = out / "raw.csv"
    raw_path.write_text(buf.getvalue(), encoding="utf-8")
    metrics = metrics_from_raw(read_raw_csv(raw_path))
    metrics_paths = {}
    for nt in config.n_treated:
        p = out / metrics_filename(nt)
        write_metrics_csv(metrics.get(nt, []), p)
        metrics_paths[nt] = p

    manifest = {
        "config": config.to_dict(),
        "panel": {"states": data.n_states, "years": [data.years[0], data.years[-1]]},
        "failures": failures,
        "wall_clock_seconds": round(time.perf_counter() - t0, 3),
        "checksums": {p.name: _sha256(p) for p in [raw_path, *metrics_paths.values()]},
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return StudyOutput(raw_path, metrics_paths, manifest_path, metrics, manifest)
