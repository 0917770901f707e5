"""Null scenario: every estimator's mean should sit near zero and DID intervals should cover.

    python scripts/run_null_calibration.py --replicates 200
"""

import argparse

import numpy as np

from tvpolicy.harness import SimulationConfig, read_raw_csv, run_study
from tvpolicy.summary import report


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--data", default="standin")
    ap.add_argument("--replicates", type=int, default=200)
    ap.add_argument("--seed", type=int, default=20240809)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="results/null")
    args = ap.parse_args()
    cfg = SimulationConfig(data=args.data, seed=args.seed, scenarios=["Null"], replicates=args.replicates, threads=args.threads)
    res = run_study(cfg, args.out)
    print(report(res.metrics[25]))
    print("\nmean estimate / MCSE by event time")
    recs = [r["record"] for r in read_raw_csv(res.raw_path) if r["record"].converged]
    for e in cfg.estimators:
        z = []
        for j in range(1, 6):
            v = np.array([r.estimate for r in recs if r.estimator_id == e and r.event_time == j])
            z.append(v.mean() / (v.std(ddof=1) / np.sqrt(v.size)))
        print(f"{e:<8}", " ".join(f"{x:+.2f}" for x in z))


if __name__ == "__main__":
    main()
