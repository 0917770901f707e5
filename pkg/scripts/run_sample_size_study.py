"""ASCM bias with many synthetic states and 100 treated, against the 25-treated baseline.

Synthetic states are appended to the panel (150 by default, 2,700 extra
state-years) and the four effect scenarios are re-run for the synthetic
control estimator only, without its jackknife since only bias is compared.

    python scripts/run_sample_size_study.py --baseline results/rank_order/metrics_nt25.csv
"""

import argparse
from pathlib import Path

from tvpolicy.harness import SimulationConfig, run_study
from tvpolicy.metrics import read_metrics_csv
from tvpolicy.summary import average


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--data", default="standin")
    ap.add_argument("--replicates", type=int, default=50)
    ap.add_argument("--extra-states", type=int, default=150)
    ap.add_argument("--n-treated", type=int, default=100)
    ap.add_argument("--seed", type=int, default=20240809)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--baseline", default="results/rank_order/metrics_nt25.csv")
    ap.add_argument("--out", default="results/sample_size")
    args = ap.parse_args()

    cfg = SimulationConfig(
        data=args.data,
        seed=args.seed,
        replicates=args.replicates,
        n_treated=[args.n_treated],
        extra_states=args.extra_states,
        estimators=["ASCM"],
        ascm_jackknife=False,
        threads=args.threads,
    )
    res = run_study(cfg, args.out)
    big = average(res.metrics[args.n_treated], "std_abs_bias")["ASCM"]
    print(f"ASCM standardized abs bias, {args.n_treated} treated of {50 + args.extra_states} states: {big:.4f}")
    if Path(args.baseline).exists():
        base = average(read_metrics_csv(args.baseline), "std_abs_bias")["ASCM"]
        print(f"baseline ({args.baseline}): {base:.4f}; ratio {big / base:.3f}")


if __name__ == "__main__":
    main()
