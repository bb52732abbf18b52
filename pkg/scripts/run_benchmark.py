#!/usr/bin/env python3
"""Run the synthetic benchmark suites and print per-seed results.

Two gates share the ablation suite: cross-validated CoERR of the
region-gated model, and its advantage over the ungated arm on the same
folds. The classifier gate trains the region forest at low noise and
reports held-out one-vs-rest AUC per region. Every number is
deterministic given the seed list.
"""

import argparse
import statistics
import sys
import time

from epistate.benchmark import ablation_trial, classifier_trial


def run_ablation(seeds, k, jobs):
    deltas, means = [], []
    for seed in seeds:
        t0 = time.time()
        rep = ablation_trial(seed, k=k, jobs=jobs)
        deltas.append(rep.delta_percent)
        means.append(rep.mean)
        print(f"seed {seed:3d}  with {rep.mean:.4f}  without {rep.without_mean:.4f}"
              f"  delta {rep.delta_percent:+.2f}%  [{time.time() - t0:.1f}s]",
              flush=True)
    print(f"median CoERR {statistics.median(means):.4f}  "
          f"median delta {statistics.median(deltas):+.2f}%")
    return statistics.median(means), statistics.median(deltas)


def run_classifier(seeds, jobs):
    per_region = {}
    for seed in seeds:
        t0 = time.time()
        aucs = classifier_trial(seed, jobs=jobs)
        for region, auc in aucs.items():
            per_region.setdefault(region, []).append(auc)
        row = "  ".join(f"{r} {v:.3f}" for r, v in sorted(aucs.items()))
        print(f"seed {seed:3d}  {row}  [{time.time() - t0:.1f}s]", flush=True)
    medians = {r: statistics.median(v) for r, v in per_region.items()}
    print("medians  " + "  ".join(f"{r} {v:.3f}" for r, v in sorted(medians.items())))
    return medians


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--suite", choices=("ablation", "classifier", "both"),
                    default="both")
    ap.add_argument("--seeds", type=int, default=10,
                    help="number of trial seeds, 0..seeds-1")
    ap.add_argument("--k", type=int, default=10, help="CV folds per trial")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args(argv)

    seeds = range(args.seeds)
    ok = True
    if args.suite in ("classifier", "both"):
        print("== region classifier suite ==")
        medians = run_classifier(seeds, args.jobs)
        ok &= all(v >= 0.90 for v in medians.values())
    if args.suite in ("ablation", "both"):
        print("== ablation suite ==")
        med_coerr, med_delta = run_ablation(seeds, args.k, args.jobs)
        ok &= med_coerr >= 0.80 and med_delta >= 0.0
    print("overall:", "ok" if ok else "BELOW TARGET")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
