#!/usr/bin/env python3
"""Convergence-order study for all solvers on delta data.

Deterministic solvers are measured against the closed-form terminal state;
stochastic solvers against the analytic terminal moments with 10^6
trajectories.  Pass --stochastic to include the (slower) weak-order runs.
"""

from __future__ import annotations

import argparse
import os

from difftaylor.orders import deterministic_order, stochastic_order
from difftaylor.schedules import fit_tanh_schedule


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--halvings", type=int, default=6)
    ap.add_argument("--stochastic", action="store_true",
                    help="also run the Monte Carlo weak-order study (~90s)")
    ap.add_argument("--batch", type=int, default=1_000_000)
    args = ap.parse_args()

    sched = fit_tanh_schedule(1e-4, 0.99, 1.0)
    print(f"{'solver':<16}{'moment':<8}{'slope':>8}{'r^2':>10}")
    for solver in ("euler", "heun", "taylor2", "taylor3", "rk4"):
        est = deterministic_order(solver, sched, n0=8, halvings=args.halvings)
        print(f"{solver:<16}{'path':<8}{est.slope:>8.3f}{est.r2:>10.5f}")

    if args.stochastic:
        sto_sched = fit_tanh_schedule(1e-4, 0.8, 1.0)
        workers = os.cpu_count() or 1
        for solver in ("euler_maruyama", "ito_taylor"):
            ests = stochastic_order(solver, sto_sched, batch=args.batch,
                                    workers=workers)
            for moment, est in ests.items():
                print(f"{solver:<16}{moment:<8}{est.slope:>8.3f}{est.r2:>10.5f}")


if __name__ == "__main__":
    main()
