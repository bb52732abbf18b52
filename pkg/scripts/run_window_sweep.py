#!/usr/bin/env python3
"""Sweep the analysis window on the hysteretic synthetic suite.

The planted transitions last 40 frames, so the sweep should peak at a
mid-sized window: short windows cannot read the slope columns the
region routing depends on, long ones blur them across segments.
"""

import argparse
import sys
import time

from epistate.benchmark import sweep_trial


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--windows", default="5,10,20,40,60,80,100",
                    help="comma-separated window sizes")
    ap.add_argument("--k", type=int, default=5, help="CV folds")
    ap.add_argument("--sessions", type=int, default=12)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args(argv)

    windows = tuple(int(w) for w in args.windows.split(","))
    t0 = time.time()
    rep = sweep_trial(args.seed, windows=windows, k=args.k,
                      n_sessions=args.sessions, jobs=args.jobs)
    for w, mean, std in rep.sweep:
        mark = " <-- best" if w == rep.best_window else ""
        print(f"window {w:4d}  coerr {mean:.4f} +- {std:.4f}{mark}")
    print(f"best window {rep.best_window}  [{time.time() - t0:.1f}s]")
    return 0


if __name__ == "__main__":
    sys.exit(main())
