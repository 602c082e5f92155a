#!/usr/bin/env python3
"""Monte Carlo check of the closed-form accuracy and purity predictions.

Three sweeps, each comparing a simulated quantity against its formula:

1. noisy-test agreement for symmetric and asymmetric transition matrices
   over an epsilon grid, using a label-corruption draw and an independent
   oracle prediction draw per sample;
2. cross-validation selection purity/recall against the epsilon closed
   forms at a few noise levels;
3. per-class purity/recall for random diagonally-dominant matrices
   against the general T-based expressions.

Prints the worst absolute deviation per sweep and exits nonzero when any
exceeds its tolerance assuming the default sample counts.
"""

import argparse
import sys
import warnings

import numpy as np

from labelnoise.data import LabeledDataset
from labelnoise.learners import OracleLearner, oracle_factory
from labelnoise.noise import (
    asymmetric_matrix,
    corrupt_labels,
    random_diagonal_dominant,
    symmetric_matrix,
)
from labelnoise.selection import ncv, selection_metrics
from labelnoise.theory import lp_lr_general, theory_point


def oracle_dataset(T, c, n, seed, d=2):
    """Balanced synthetic set whose labels and predictions both follow T."""
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((n, d))
    true = np.repeat(np.arange(c), n // c)
    observed = corrupt_labels(true, T, seed + 1)
    D = LabeledDataset(features=features, observed_labels=observed,
                       ids=np.arange(n, dtype=np.int64), c=c, true_labels=true)
    return D, OracleLearner(T, seed=seed + 2)


def sweep_agreement(kind, c, n, seed0, grid):
    worst = 0.0
    for i, eps in enumerate(grid):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            T = (symmetric_matrix(c, eps) if kind == "symmetric"
                 else asymmetric_matrix(c, eps))
            point = theory_point(kind, c, eps)
        D, oracle = oracle_dataset(T, c, n, seed0 + i)
        acc = float(np.mean(oracle.predict_labels(D.features, true_labels=D.true_labels)
                            == D.observed_labels))
        worst = max(worst, abs(acc - point.accuracy))
    return worst


def sweep_selection(kind, c, n, seed0, eps_values):
    worst = 0.0
    for i, eps in enumerate(eps_values):
        T = symmetric_matrix(c, eps) if kind == "symmetric" else asymmetric_matrix(c, eps)
        point = theory_point(kind, c, eps)
        D, _ = oracle_dataset(T, c, n, seed0 + 10 * i)
        result = ncv(D, oracle_factory(T), seed=seed0 + 10 * i + 5)
        m = selection_metrics(result.selected, D)
        worst = max(worst, abs(m.lp - point.lp), abs(m.lr - point.lr))
    return worst


def sweep_random_matrices(trials, c, n, seed0):
    worst = 0.0
    for t in range(trials):
        T = random_diagonal_dominant(c, seed=seed0 + t)
        lp_i, lr_i = lp_lr_general(T)
        D, _ = oracle_dataset(T, c, n, seed0 + 1000 + t)
        result = ncv(D, oracle_factory(T), seed=seed0 + 3000 + t)
        m = selection_metrics(result.selected, D)
        worst = max(worst, float(np.max(np.abs(m.lp_i - lp_i))),
                    float(np.max(np.abs(m.lr_i - lr_i))))
    return worst


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--classes", type=int, default=10)
    parser.add_argument("--samples", type=int, default=100_000)
    parser.add_argument("--grid-points", type=int, default=17)
    parser.add_argument("--matrix-trials", type=int, default=10)
    parser.add_argument("--matrix-classes", type=int, default=5)
    parser.add_argument("--seed", type=int, default=20240)
    args = parser.parse_args(argv)

    c, n = args.classes, args.samples
    grid = np.linspace(0.05, 0.85, args.grid_points)
    checks = [
        ("symmetric agreement", sweep_agreement("symmetric", c, n, args.seed, grid), 0.01),
        ("asymmetric agreement",
         sweep_agreement("asymmetric", c, n, args.seed + 100, grid), 0.01),
        ("symmetric lp/lr", sweep_selection("symmetric", c, n, args.seed + 200, [0.2, 0.5]), 0.01),
        ("asymmetric lp/lr", sweep_selection("asymmetric", c, n, args.seed + 300, [0.2, 0.4]), 0.01),
        ("random T per-class lp/lr",
         sweep_random_matrices(args.matrix_trials, args.matrix_classes,
                               (n // args.matrix_classes) * args.matrix_classes,
                               args.seed + 400), 0.02),
    ]

    failed = False
    for name, dev, tol in checks:
        status = "ok" if dev <= tol else "FAIL"
        failed = failed or dev > tol
        print("%-28s max deviation %.5f  (tol %.3f)  %s" % (name, dev, tol, status))
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
