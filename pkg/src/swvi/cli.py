"""Command-line entry point: ``swvi fit-toy | fit-logistic | sw-eval | diagnose``.

Exit codes: 0 success, 2 validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import baselines, data, families, streams, targets
from .engine import NumericalError, OptimizerConfig, SwviConfig, detect_stationarity, run_swvi
from .mcmc import KernelConfig
from .sliced import sample_projections, sliced_wasserstein

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
OUTPUT_SEED = 99  # stream index for samples written after a fit


class _Formatter(argparse.ArgumentDefaultsHelpFormatter, argparse.RawDescriptionHelpFormatter):
    pass


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


def _int_list(text):
    return tuple(int(s) for s in text.split(",") if s.strip())


def _add_kernel_flags(p, kind, rwmh_std=2.5, ula_step=1e-4):
    g = p.add_argument_group("transition kernel")
    g.add_argument("--kernel", choices=("rwmh", "ula", "hmc"), default=kind,
                   help="MCMC kernel applied to every chain each iteration")
    g.add_argument("--rwmh-std", type=_positive_float, default=rwmh_std,
                   help="random-walk proposal standard deviation")
    g.add_argument("--ula-step", type=_positive_float, default=ula_step,
                   help="Langevin step size")
    g.add_argument("--hmc-step", type=_positive_float, default=0.05, help="leapfrog step size")
    g.add_argument("--hmc-leapfrogs", type=_positive_int, default=10,
                   help="leapfrog steps per HMC trajectory")


def _add_fit_flags(p, particles, iters, warmup, lr):
    g = p.add_argument_group("optimization")
    g.add_argument("--particles", "-n", type=_positive_int, default=particles,
                   help="number of parallel chains and variational samples")
    g.add_argument("--projections", "-m", type=_positive_int, default=100,
                   help="projection directions per SW evaluation")
    g.add_argument("--order", "-p", type=float, default=1.0, help="Wasserstein order p")
    g.add_argument("--iters", "-T", type=_nonneg_int, default=iters, help="total iterations T")
    g.add_argument("--warmup", "-L", type=_nonneg_int, default=warmup,
                   help="warm-up lag L (MCMC only before it)")
    g.add_argument("--lr", type=float, default=lr, help="learning rate")
    g.add_argument("--optimizer", choices=("adam", "sgd"), default="adam", help="update rule")
    g.add_argument("--beta1", type=float, default=0.9, help="Adam first-moment decay")
    g.add_argument("--beta2", type=float, default=0.999, help="Adam second-moment decay")
    g.add_argument("--adam-eps", type=float, default=1e-8, help="Adam denominator offset")
    g.add_argument("--frozen-projections", action="store_true",
                   help="draw one projection set for the whole run")
    g.add_argument("--stationarity-window", type=_positive_int, default=25,
                   help="trailing-mean width for burn-in detection")
    g.add_argument("--stationarity-tol", type=_positive_float, default=0.02,
                   help="relative-change tolerance for burn-in detection")
    g.add_argument("--seed", type=int, default=0, help="master seed")
    g.add_argument("--record-wall-time", action="store_true",
                   help="fill the wall_ms trace column (makes trace.csv non-reproducible)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", default=None,
                   help="JSON run configuration whose keys set option defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swvi", description="Sliced Wasserstein variational inference.",
        formatter_class=_Formatter,
        epilog="Environment: SWVI_THREADS caps worker threads (0 or unset = all cores).")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("fit-toy", formatter_class=_Formatter,
                       help="fit a variational family to a 2-D toy target")
    p.add_argument("--target", choices=("gaussian", "gmm"), default="gaussian",
                   help="target family")
    p.add_argument("--spec", default=None,
                   help="JSON target spec; built-in toy target when omitted")
    p.add_argument("--family", choices=families.KINDS, default="fullcov",
                   help="variational family")
    p.add_argument("--hidden", type=_int_list, default=(64, 64),
                   help="mlp hidden widths, comma separated")
    p.add_argument("--activation", choices=families.ACTIVATIONS, default="tanh",
                   help="mlp hidden activation")
    p.add_argument("--samples", type=_positive_int, default=5000,
                   help="final variational samples written to samples.csv")
    p.add_argument("--with-kl-baseline", action="store_true",
                   help="also fit the reverse-KL (ELBO) baseline")
    p.add_argument("--kl-iters", type=_positive_int, default=2000, help="ELBO iterations")
    p.add_argument("--kl-lr", type=float, default=0.01, help="ELBO learning rate")
    p.add_argument("--kl-samples", type=_positive_int, default=500,
                   help="Monte Carlo samples per ELBO gradient")
    _add_kernel_flags(p, "rwmh", rwmh_std=2.5)
    _add_fit_flags(p, particles=500, iters=800, warmup=50, lr=0.02)
    p.set_defaults(func=cmd_fit_toy)

    p = sub.add_parser("fit-logistic", formatter_class=_Formatter,
                       help="Bayesian logistic regression on a CSV dataset")
    p.add_argument("--data", required=True, help="comma-delimited dataset")
    p.add_argument("--label-column", default="-1",
                   help="label column index (negative counts from the end) or header name")
    p.add_argument("--positive-label", default="1", help="label token mapped to class 1")
    p.add_argument("--delimiter", default=",", help="field delimiter")
    p.add_argument("--one-vs-rest", action="store_true",
                   help="accept multi-class labels (positive token vs the rest)")
    p.add_argument("--test-fraction", type=float, default=0.2, help="held-out fraction")
    p.add_argument("--seeds", type=_positive_int, default=5,
                   help="repetitions; seeds run from --seed upward")
    p.add_argument("--family", choices=("meanfield", "fullcov"), default="meanfield",
                   help="variational family (Gaussian kinds)")
    p.add_argument("--init-log-std", type=float, default=0.0,
                   help="initial log standard deviation of the family")
    p.add_argument("--posterior-samples", type=_positive_int, default=32,
                   help="weight samples averaged for predictions")
    p.add_argument("--no-kl-baseline", action="store_true", help="skip the ELBO baseline")
    p.add_argument("--kl-iters", type=_positive_int, default=1000, help="ELBO iterations")
    p.add_argument("--kl-lr", type=float, default=0.01, help="ELBO learning rate")
    p.add_argument("--kl-samples", type=_positive_int, default=100,
                   help="Monte Carlo samples per ELBO gradient")
    _add_kernel_flags(p, "ula", ula_step=1e-4)
    _add_fit_flags(p, particles=100, iters=1000, warmup=100, lr=0.01)
    p.set_defaults(func=cmd_fit_logistic)

    p = sub.add_parser("sw-eval", formatter_class=_Formatter,
                       help="sliced Wasserstein distance between two sample files")
    p.add_argument("x", help="first sample CSV (one point per line)")
    p.add_argument("y", help="second sample CSV")
    p.add_argument("--projections", "-m", type=_positive_int, default=100,
                   help="projection directions")
    p.add_argument("--order", "-p", type=float, default=1.0, help="Wasserstein order p")
    p.add_argument("--seed", type=int, default=0, help="projection seed")
    p.add_argument("--exact", action="store_true",
                   help=f"also print exact OT by enumeration (n <= {baselines.EXACT_OT_MAX_N})")
    p.add_argument("--sinkhorn", type=_positive_float, default=None, metavar="EPS",
                   help="also print the Sinkhorn divergence at this regularization")
    p.add_argument("--sinkhorn-iters", type=_positive_int, default=10000,
                   help="Sinkhorn iteration cap")
    p.set_defaults(func=cmd_sw_eval)

    p = sub.add_parser("diagnose", formatter_class=_Formatter,
                       help="burn-in index of a trace.csv")
    p.add_argument("trace", help="trace.csv written by a fit")
    p.add_argument("--window", type=int, default=25, help="trailing-mean width")
    p.add_argument("--tol", type=float, default=0.02, help="relative-change tolerance")
    p.add_argument("--start", type=_nonneg_int, default=0, help="first index scanned")
    p.set_defaults(func=cmd_diagnose)
    return parser


# -- helpers -----------------------------------------------------------------

def _swvi_config(args, seed) -> SwviConfig:
    kernel = KernelConfig(args.kernel, args.rwmh_std, args.ula_step, args.hmc_step,
                          args.hmc_leapfrogs)
    opt = OptimizerConfig(args.optimizer, args.beta1, args.beta2, args.adam_eps)
    return SwviConfig(iterations=args.iters, warmup_lag=args.warmup,
                      particles=args.particles, projections=args.projections,
                      order=args.order, learning_rate=args.lr, optimizer=opt,
                      kernel=kernel, resample_projections=not args.frozen_projections,
                      seed=seed, stationarity_window=args.stationarity_window,
                      stationarity_tol=args.stationarity_tol)


def _echo(args) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v)
            for k, v in sorted(vars(args).items()) if k != "func"}


def _toy_target(args):
    if args.target == "gaussian":
        spec = data.load_target_spec(args.spec, "gaussian") if args.spec else targets.toy_gaussian()
        return targets.gaussian_target(spec), spec
    spec = data.load_target_spec(args.spec, "gmm") if args.spec else targets.toy_mixture()
    return targets.mixture_target(spec), spec


def _initial_family(kind, dim, args, seed):
    if kind == "meanfield":
        return families.meanfield(np.zeros(dim), getattr(args, "init_log_std", 0.0))
    if kind == "fullcov":
        return families.fullcov(np.zeros(dim), log_diag=getattr(args, "init_log_std", 0.0))
    return families.mlp(dim, streams.stream(seed, streams.INIT, 1), hidden=args.hidden,
                        activation=args.activation)


# -- commands ------------------------------------------------------------------

def cmd_fit_toy(args) -> int:
    if args.iters < 1:
        raise ValueError("--iters must be >= 1")
    target, _ = _toy_target(args)
    family = _initial_family(args.family, target.dim, args, args.seed)
    cfg = _swvi_config(args, args.seed)
    trace = run_swvi(target, family, cfg)
    out = args.out
    data.write_trace(trace, out, include_timing=args.record_wall_time,
                     extra={"cli": _echo(args)})
    final = families.forward(trace.params, args.samples,
                             streams.stream(args.seed, streams.FAMILY, OUTPUT_SEED)).cloud
    data.write_cloud(os.path.join(out, "samples.csv"), final)
    data.write_cloud(os.path.join(out, "chain.csv"), trace.cloud)
    print(f"swvi: final sw_loss {trace.records[-1].sw_loss:.6g}, "
          f"burn-in index {trace.stationarity}")
    if args.with_kl_baseline:
        if args.family == "mlp":
            raise ValueError("the KL baseline needs a Gaussian family")
        kl = baselines.run_elbo_vi(target, family, args.kl_iters, args.kl_lr, args.kl_samples,
                                   args.seed, cfg.optimizer)
        kdir = os.path.join(out, "kl_baseline")
        os.makedirs(kdir, exist_ok=True)
        with open(os.path.join(kdir, "trace.csv"), "w") as fh:
            fh.write("iter,neg_elbo\n")
            for t, v in enumerate(kl.neg_elbo):
                fh.write(f"{t},{data.fmt(v)}\n")
        data.write_json(os.path.join(kdir, "summary.json"), {"params": kl.params.to_json()})
        final = families.forward(kl.params, args.samples,
                                 streams.stream(args.seed, streams.ELBO, OUTPUT_SEED)).cloud
        data.write_cloud(os.path.join(kdir, "samples.csv"), final)
        print(f"kl-vi: final negative ELBO {kl.neg_elbo[-1]:.6g}")
    return EXIT_OK


def _accuracy(params, features, labels, n_samples, seed) -> float:
    W = families.forward(params, n_samples, streams.stream(seed, streams.FAMILY, OUTPUT_SEED)).cloud
    prob = targets.predict_logistic(W, features)
    return float(np.mean((prob > 0.5) == (labels == 1)))


def cmd_fit_logistic(args) -> int:
    if args.iters < 1:
        raise ValueError("--iters must be >= 1")
    ds = data.load_csv(args.data, args.label_column, args.positive_label, args.delimiter,
                       one_vs_rest=args.one_vs_rest)
    rows = {"swvi": [], "kl_vi": []}
    for seed in range(args.seed, args.seed + args.seeds):
        train, test = data.split(ds, args.test_fraction, seed)
        if np.unique(train.labels).size < 2:
            raise ValueError(f"seed {seed}: training split contains a single class")
        spec = targets.LogisticPosteriorSpec(train.features, train.labels)
        target = targets.logistic_posterior(spec)
        family = _initial_family(args.family, target.dim, args, seed)
        trace = run_swvi(target, family, _swvi_config(args, seed))
        data.write_trace(trace, os.path.join(args.out, f"seed_{seed}"),
                         include_timing=args.record_wall_time)
        rows["swvi"].append(_accuracy(trace.params, test.features, test.labels,
                                      args.posterior_samples, seed))
        if not args.no_kl_baseline:
            kl = baselines.run_elbo_vi(target, family, args.kl_iters, args.kl_lr,
                                       args.kl_samples, seed)
            rows["kl_vi"].append(_accuracy(kl.params, test.features, test.labels,
                                           args.posterior_samples, seed))
    report = {
        "dataset": {"path": args.data, "n": ds.n, "d": ds.d,
                    "positive_rate": float(ds.labels.mean())},
        "seeds": list(range(args.seed, args.seed + args.seeds)),
        "cli": _echo(args),
    }
    for name, accs in rows.items():
        if accs:
            report[name] = {"accuracy": accs, "mean": float(np.mean(accs)),
                            "std": float(np.std(accs))}
            print(f"{name}: test accuracy {np.mean(accs):.3f} +- {np.std(accs):.3f}")
    os.makedirs(args.out, exist_ok=True)
    data.write_json(os.path.join(args.out, "report.json"), report)
    return EXIT_OK


def cmd_sw_eval(args) -> int:
    x = data.read_cloud(args.x)
    y = data.read_cloud(args.y)
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    if args.exact and x.shape[0] > baselines.EXACT_OT_MAX_N:
        raise ValueError(f"--exact enumerates permutations and needs n <= "
                         f"{baselines.EXACT_OT_MAX_N}, got n={x.shape[0]}")
    proj = sample_projections(x.shape[1], args.projections,
                              streams.stream(args.seed, streams.PROJECTIONS), str(args.seed))
    print(f"sw {sliced_wasserstein(x, y, proj, args.order).value!r}")
    if args.exact:
        print(f"exact_ot {baselines.exact_ot(x, y, args.order)!r}")
    if args.sinkhorn is not None:
        res = baselines.sinkhorn_divergence(
            x, y, baselines.SinkhornConfig(args.sinkhorn, args.sinkhorn_iters))
        flag = "" if res.converged else " (unconverged)"
        print(f"sinkhorn {res.value!r}{flag}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    losses = data.read_trace(args.trace)["sw_loss"]
    m = detect_stationarity(losses, args.window, args.tol, start=args.start)
    print("not stationary" if m is None else f"burn-in index {m}")
    return EXIT_OK


def _apply_config(parser, argv):
    """Re-parse with defaults taken from ``--config`` when it is given."""
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if not path:
        return args
    sub = parser._subparsers._group_actions[0].choices[args.command]
    allowed = [a.dest for a in sub._actions if a.dest not in ("help", "config")]
    doc = data.load_run_config(path, allowed)
    sub.set_defaults(**doc)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        streams.worker_count()
        return args.func(args)
    except NumericalError as exc:
        print(f"swvi: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"swvi: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"swvi: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
