"""Recruitment strategies on a population with complementary per-department skills.

    python scripts/selection_gap.py [--queries 500] [--agents 4] [--seed 0]
"""

import argparse
import time

from expertroute.evaluation import summary_table
from expertroute.experiments import run_selection_gap


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--queries", type=int, default=500)
    ap.add_argument("--agents", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    t0 = time.perf_counter()
    reports = run_selection_gap(n_test=args.queries, n_agents=args.agents, seed=args.seed)
    print(summary_table(list(reports.values())))
    print(f"({time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    main()
