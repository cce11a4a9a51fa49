"""Command-line entry points.

Subcommands: ``simulate`` (write a synthetic instance), ``fit`` (estimate a
model from counts and features), ``predict`` (expected observed counts and
rates from a saved model), ``eval`` (factor and weight errors against a
known truth), and ``cv`` (cross-validated comparison against the baseline
methods).  Exit codes: 0 success, 2 parse or validation error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .core import FitConfig, sample_network
from .cv import METHODS, run_cv
from .fitter import NumericalError, fit
from .io import (
    ModelFile,
    ParseError,
    load_counts,
    load_features,
    load_matrix_csv,
    load_vector_csv,
    save_counts_csv,
    save_features_csv,
    save_matrix_csv,
    save_vector_csv,
)
from .metrics import alpha_mse, factor_mse
from .synthgen import SynthConfig, generate_instance

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


def _cmd_simulate(args):
    ss = np.random.SeedSequence(args.seed)
    gen_seed, sample_seed = (int(s) for s in ss.generate_state(2))
    config = SynthConfig(
        n_rows=args.rows,
        n_cols=args.cols,
        rank=args.rank,
        n_features=args.features,
        gamma=args.gamma,
        target_max_p=args.max_p,
        seed=gen_seed,
        constant_p=args.constant_p,
    )
    factors, alpha, features, detection = generate_instance(config)
    _, data = sample_network(factors, detection, sample_seed)

    os.makedirs(args.out, exist_ok=True)
    save_counts_csv(os.path.join(args.out, "counts.csv"), data.counts, data.observed_mask)
    save_features_csv(os.path.join(args.out, "features.csv"), features)
    save_matrix_csv(os.path.join(args.out, "truth_u.csv"), factors.u)
    save_matrix_csv(os.path.join(args.out, "truth_v.csv"), factors.v)
    save_vector_csv(os.path.join(args.out, "truth_alpha.csv"), alpha)
    print(f"wrote {args.rows}x{args.cols} instance to {args.out}")
    return EXIT_OK


def _cmd_fit(args):
    data = load_counts(args.counts)
    features = load_features(
        args.features, data.n_rows, data.n_cols, observed_mask=data.observed_mask
    )
    config = FitConfig(
        rank=args.rank,
        rho=args.rho,
        max_outer=args.max_outer,
        outer_tol=args.tol,
        admm_tol=args.admm_tol,
        epsilon=args.epsilon,
        seed=args.seed,
        impute_missing=args.impute_missing,
    )
    result = fit(data, features, config)
    ModelFile.from_fit_result(result).save(args.out)
    status = "converged" if result.converged else "iteration cap reached"
    print(
        f"{status} after {result.n_outer} outer iterations, "
        f"objective {result.objective_trace[-1]!r}; model written to {args.out}"
    )
    return EXIT_OK


def _cmd_predict(args):
    model = ModelFile.load(args.model)
    lam = model.to_factor_model().rates()
    yhat = np.clip(model.p, 0.0, 1.0) * lam
    os.makedirs(args.out, exist_ok=True)
    save_matrix_csv(os.path.join(args.out, "yhat.csv"), yhat)
    save_matrix_csv(os.path.join(args.out, "lambda_hat.csv"), lam)
    print(f"wrote yhat.csv and lambda_hat.csv to {args.out}")
    return EXIT_OK


def _cmd_eval(args):
    model = ModelFile.load(args.model)
    truth_u = load_matrix_csv(args.truth_u)
    truth_v = load_matrix_csv(args.truth_v)
    truth_alpha = load_vector_csv(args.truth_alpha)
    mse_u = factor_mse(truth_u, model.u)
    mse_v = factor_mse(truth_v, model.v)
    mse_a = alpha_mse(truth_alpha, model.alpha)
    print("metric,value")
    print(f"factor_mse_u,{mse_u!r}")
    print(f"factor_mse_v,{mse_v!r}")
    print(f"factor_mse_mean,{(0.5 * (mse_u + mse_v))!r}")
    print(f"alpha_mse,{mse_a!r}")
    return EXIT_OK


def _cmd_cv(args):
    ranks = [int(r) for r in args.ranks.split(",") if r.strip()]
    if not ranks:
        raise ValueError("--ranks must list at least one rank")
    methods = args.method.split(",") if args.method else None
    run_cv(
        args.counts,
        args.features,
        ranks,
        args.folds,
        args.seed,
        args.out,
        methods=methods,
        max_iter=args.max_iter,
    )
    print(f"wrote cross-validation results to {args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nmix",
        description=(
            "Link prediction for bipartite count networks under imperfect "
            "detection: a low-rank Poisson rate model observed through "
            "feature-driven binomial thinning."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write a synthetic ground-truth instance")
    sim.add_argument("--rows", type=int, required=True)
    sim.add_argument("--cols", type=int, required=True)
    sim.add_argument("--rank", type=int, required=True)
    sim.add_argument("--features", type=int, required=True)
    sim.add_argument("--gamma", type=float, required=True)
    sim.add_argument("--max-p", type=float, default=0.9)
    sim.add_argument("--constant-p", type=float, default=None,
                     help="use one constant detection probability for every pair")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="output directory")
    sim.set_defaults(func=_cmd_simulate)

    fit_cmd = sub.add_parser("fit", help="fit the model to counts and features")
    fit_cmd.add_argument("--counts", required=True)
    fit_cmd.add_argument("--features", required=True)
    fit_cmd.add_argument("--rank", type=int, required=True)
    fit_cmd.add_argument("--rho", type=float, default=1.0)
    fit_cmd.add_argument("--max-outer", type=int, default=500)
    fit_cmd.add_argument("--tol", type=float, default=1e-6)
    fit_cmd.add_argument("--admm-tol", type=float, default=1e-6)
    fit_cmd.add_argument("--epsilon", type=float, default=1e-12)
    fit_cmd.add_argument("--impute-missing", action="store_true")
    fit_cmd.add_argument("--seed", type=int, default=0)
    fit_cmd.add_argument("--out", required=True, help="model file path")
    fit_cmd.set_defaults(func=_cmd_fit)

    predict = sub.add_parser("predict", help="expected counts and rates from a model")
    predict.add_argument("--model", required=True)
    predict.add_argument("--out", required=True, help="output directory")
    predict.set_defaults(func=_cmd_predict)

    ev = sub.add_parser("eval", help="factor/weight errors against a known truth")
    ev.add_argument("--truth-u", required=True)
    ev.add_argument("--truth-v", required=True)
    ev.add_argument("--truth-alpha", required=True)
    ev.add_argument("--model", required=True)
    ev.set_defaults(func=_cmd_eval)

    cv = sub.add_parser("cv", help="cross-validated method comparison")
    cv.add_argument("--counts", required=True)
    cv.add_argument("--features", required=True)
    cv.add_argument("--ranks", required=True, help="comma-separated ranks")
    cv.add_argument("--folds", type=int, default=10)
    cv.add_argument("--method", default=None,
                    help=f"comma-separated subset of {', '.join(METHODS)}")
    cv.add_argument("--max-iter", type=int, default=200)
    cv.add_argument("--seed", type=int, default=0)
    cv.add_argument("--out", required=True, help="results CSV path")
    cv.set_defaults(func=_cmd_cv)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
