"""Write the generated stand-in state panel to CSV.

    python scripts/make_standin_panel.py data/standin_panel.csv --seed 20240809
"""

import argparse
from pathlib import Path

from tvpolicy.panel import write_panel_csv
from tvpolicy.standin import make_standin_panel


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("out", nargs="?", default="data/standin_panel.csv")
    ap.add_argument("--seed", type=int, default=20240809)
    args = ap.parse_args()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data = make_standin_panel(args.seed)
    write_panel_csv(data, out)
    print(f"wrote {out}: {data.n_states} states, {data.years[0]}-{data.years[-1]}")


if __name__ == "__main__":
    main()
