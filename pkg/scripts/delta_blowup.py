#!/usr/bin/env python3
"""Invariant-line escape table for the bare multi-saddle.

Runs the (k, l, n) grid, compares measured escape times with the closed
form, and optionally writes a trajectory CSV plus a gnuplot overlay.
"""

import argparse
from pathlib import Path

from bnflab.experiments import DeltaOptions, delta_experiment, delta_plot_script
from bnflab.flows import trajectory_to_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pairs", default="1,2;2,3;3,2",
                    help="semicolon list of k,l pairs")
    ap.add_argument("--n", default="1,2,3", help="comma list of start indices")
    ap.add_argument("--rel-tol", type=float, default=1e-6)
    ap.add_argument("--out", type=Path, help="directory for CSV + plot script")
    args = ap.parse_args()

    pairs = [tuple(int(x) for x in p.split(",")) for p in args.pairs.split(";")]
    ns = [int(x) for x in args.n.split(",")]
    opts = DeltaOptions(rel_tol=args.rel_tol)
    print(f"{'k':>3} {'l':>3} {'n':>3} {'measured':>18} {'closed form':>18} "
          f"{'rel err':>10} {'transverse':>11} verdict")
    for k, l in pairs:
        for n in ns:
            rep = delta_experiment(k, l, n, opts)
            t_meas = rep.measured["escape_time"]
            t_pred = rep.predicted["escape_time"]
            rel = abs(t_meas - t_pred) / t_pred
            print(f"{k:>3} {l:>3} {n:>3} {t_meas:>18.12f} {t_pred:>18.12f} "
                  f"{rel:>10.2e} {rep.measured['max_transverse_ratio']:>11.2e} "
                  f"{'PASS' if rep.verdict else 'FAIL'}")
            if args.out:
                args.out.mkdir(parents=True, exist_ok=True)
                stem = f"delta_k{k}l{l}_n{n}"
                (args.out / f"{stem}.csv").write_text(
                    trajectory_to_csv(rep.trajectories[0]))
                (args.out / f"{stem}.gp").write_text(
                    delta_plot_script(rep, f"{stem}.csv"))


if __name__ == "__main__":
    main()
