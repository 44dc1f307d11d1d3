"""Command-line front end for the experiments.

Each subcommand writes into ``--out`` (created if missing). ``--format``
selects CSV tables, ``report.json``, or both. The JSON report holds every
parameter and the seed, so a run can be regenerated from it.

Exit status is 0 on success, 1 when a run completes but its check fails
(``check-equivalence``, ``fig1``), and 2 on invalid input or numerical
failure.
"""

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import p_of_theta
from .closed_form import solve_closed_form
from .exceptions import DropoutMFError
from .experiments import (
    FIG1_SIZES,
    FIG1_THETAS,
    ExperimentReport,
    SyntheticSpec,
    _provenance,
    generate_synthetic,
    numerical_rank,
    run_check_equivalence,
    run_fig1,
    run_fig3,
    run_reconstruct,
)
from .matrix_core import read_matrix_csv, svd
from .objective import DropoutConfig
from .trainer import Constant, Diminishing, TrainConfig, train_deterministic, train_dropout

EQUIVALENCE_TOLERANCE = 1e-10


def _common(parser, iters=None, lr=True):
    parser.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--format", choices=("csv", "json", "both"), default="both")
    if iters is not None:
        parser.add_argument("--iters", type=int, default=iters, help=f"iterations (default: {iters})")
    if lr:
        parser.add_argument("--lr", type=float, default=None, help="initial step size eps0")
        parser.add_argument("--tau", type=float, default=None, help="plateau of the eps0/(1+(t-1)/tau) schedule")


def _data_args(parser):
    parser.add_argument("--input", type=Path, default=None, help="CSV matrix; synthetic data if omitted")
    parser.add_argument("--m", type=int, default=100)
    parser.add_argument("--n", type=int, default=100)
    parser.add_argument("--rank", type=int, default=10, help="rank of the synthetic signal")
    parser.add_argument("--signal-std", type=float, default=0.1)
    parser.add_argument("--noise-std", type=float, default=0.0)


def build_parser():
    parser = argparse.ArgumentParser(prog="dropoutmf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-equivalence", help="enumerated expectation vs deterministic objective")
    _common(p, lr=False)
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--max-m", type=int, default=8)
    p.add_argument("--max-n", type=int, default=8)
    p.add_argument("--max-d", type=int, default=12)
    p.add_argument("--theta", type=float, nargs="+", default=[0.1, 0.5, 0.9])

    p = sub.add_parser("train", help="single dropout (or deterministic) training run")
    _common(p, iters=10000)
    _data_args(p)
    p.add_argument("--d", type=int, default=10, help="number of factor columns")
    rate = p.add_mutually_exclusive_group()
    rate.add_argument("--theta", type=float, default=None, help="fixed retain probability (default 0.5)")
    rate.add_argument("--p", type=float, default=None, help="adaptive rate: theta = theta(d) at this p")
    p.add_argument("--solver", choices=("sgd", "gd"), default="sgd")
    p.add_argument("--schedule", choices=("diminishing", "constant"), default="diminishing")
    p.add_argument("--ema-decay", type=float, default=0.99)
    p.add_argument("--init-std", type=float, default=0.1)
    p.add_argument("--block", type=int, default=0, help="alternating U/V block length (0 = joint)")

    p = sub.add_parser("closed-form", help="solve the squared-nuclear-norm problem and dump the spectrum")
    _common(p, lr=False)
    _data_args(p)
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--theta", type=float, default=None, help="with --d, recover p by inverting theta(d)")
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--rank-cutoff", type=float, default=1e-3)

    p = sub.add_parser("fig1", help="stochastic vs deterministic traces over a (theta, d) grid")
    _common(p, iters=10000)
    p.add_argument("--theta", type=float, nargs="+", default=list(FIG1_THETAS))
    p.add_argument("--d", type=int, nargs="+", default=list(FIG1_SIZES))
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--ema-decay", type=float, default=0.999)
    p.add_argument("--tolerance", type=float, default=0.05)
    p.add_argument("--trace-stride", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("fig3", help="spectra of fixed-rate, adaptive-rate and closed-form solutions")
    _common(p, iters=400000)
    p.add_argument("--p", type=float, default=0.9)
    p.add_argument("--theta", type=float, default=None, help="fixed retain probability (default: p)")
    p.add_argument("--d", type=int, nargs="+", default=[20])
    p.add_argument("--init", choices=("random", "svd"), default="random")
    p.add_argument("--rank-cutoff", type=float, default=1e-3)
    p.add_argument("--noise-std", type=float, default=0.01)

    p = sub.add_parser("reconstruct", help="dropout factorization of a CSV matrix vs the closed form")
    _common(p, lr=False)
    p.add_argument("input", type=Path, help="CSV matrix, one row per line")
    p.add_argument("--theta", type=float, nargs="+", default=[0.5, 0.8])
    p.add_argument("--d", type=int, default=40)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--block", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--max-rows", type=int, default=2000)
    return parser


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def _wants(args, kind):
    return args.format in (kind, "both")


def _load_data(args):
    if args.input is not None:
        return read_matrix_csv(args.input)
    spec = SyntheticSpec(m=args.m, n=args.n, true_rank=args.rank, signal_std=args.signal_std,
                         noise_std=args.noise_std, seed=args.seed)
    return generate_synthetic(spec)


def _data_params(args):
    if args.input is not None:
        return {"input": str(args.input)}
    return {"m": args.m, "n": args.n, "rank": args.rank, "signal_std": args.signal_std,
            "noise_std": args.noise_std}


def _schedule_kwargs(args):
    out = {}
    if args.lr is not None:
        out["eps0"] = args.lr
    if args.tau is not None:
        out["tau"] = args.tau
    return out


def _spectrum_rows(columns):
    width = max(len(c) for c in columns.values())
    for i in range(width):
        yield [i + 1] + [float(c[i]) if i < len(c) else "" for c in columns.values()]


def cmd_check_equivalence(args):
    report = run_check_equivalence(n_instances=args.instances, max_m=args.max_m, max_n=args.max_n,
                                   max_d=args.max_d, thetas=tuple(args.theta), seed=args.seed)
    rows = report.results["instances"]
    if _wants(args, "csv"):
        keys = ["m", "n", "d", "theta", "exact", "deterministic", "relative_error"]
        _write_csv(args.out / "equivalence.csv", keys, ([r[k] for k in keys] for r in rows))
    ok = report.results["max_relative_error"] <= EQUIVALENCE_TOLERANCE
    report.results["passed"] = ok
    print(f"max relative error {report.results['max_relative_error']:.3e} over {len(rows)} instances")
    return report, 0 if ok else 1


def cmd_train(args):
    t0 = time.perf_counter()
    X = _load_data(args)
    if args.p is not None:
        dropout = DropoutConfig.adaptive(args.p)
    else:
        dropout = DropoutConfig.fixed(0.5 if args.theta is None else args.theta)
    if args.schedule == "constant":
        if args.lr is None:
            raise SystemExit("dropoutmf train: --schedule constant needs --lr")
        schedule = Constant(args.lr)
    else:
        schedule = Diminishing(**_schedule_kwargs(args))
    config = TrainConfig(n_components=args.d, dropout=dropout, iterations=args.iters, schedule=schedule,
                         init_std=args.init_std, ema_decay=args.ema_decay, alternating_block=args.block)
    trainer = train_dropout if args.solver == "sgd" else train_deterministic
    result = trainer(X, config, rng=args.seed)
    sigma = svd(result.final_factors.product()).sigma
    if _wants(args, "csv"):
        result.to_csv(args.out / "trace.csv")
        _write_csv(args.out / "spectrum.csv", ["index", "data", "product"],
                   _spectrum_rows({"data": svd(X).sigma, "product": sigma}))
    report = ExperimentReport(
        experiment="train",
        parameters={"seed": args.seed, "solver": args.solver, **_data_params(args), **config.to_dict()},
        results={**result.to_dict(), "spectrum": sigma.tolist(),
                 "final_deterministic": float(result.deterministic_trace[-1])},
        provenance=_provenance(args.seed, t0),
    ).check_finite()
    print(f"theta={result.theta:.6g} final deterministic objective {result.deterministic_trace[-1]:.6g}")
    return report, 0


def cmd_closed_form(args):
    t0 = time.perf_counter()
    if args.p is not None:
        p = args.p
    elif args.theta is not None and args.d is not None:
        p = p_of_theta(args.theta, args.d)
    else:
        raise SystemExit("dropoutmf closed-form: give --p, or both --theta and --d")
    X = _load_data(args)
    sol = solve_closed_form(X, p)
    if _wants(args, "csv"):
        _write_csv(args.out / "spectrum.csv", ["index", "data", "closed_form"],
                   _spectrum_rows({"data": sol.sigma, "closed_form": sol.shrunk_sigma}))
    report = ExperimentReport(
        experiment="closed-form",
        parameters={"seed": args.seed, "p": p, "theta": args.theta, "d": args.d,
                    "rank_cutoff": args.rank_cutoff, **_data_params(args)},
        results={"mu": sol.mu, "d_bar": sol.d_bar, "gamma": sol.gamma,
                 "data_spectrum": sol.sigma.tolist(), "spectrum": sol.shrunk_sigma.tolist(),
                 "numerical_rank": numerical_rank(sol.shrunk_sigma, args.rank_cutoff)},
        provenance=_provenance(args.seed, t0),
    ).check_finite()
    print(f"p={p:.6g} mu={sol.mu:.6g} d_bar={sol.d_bar}")
    return report, 0


def cmd_fig1(args):
    sched = _schedule_kwargs(args)
    report = run_fig1(theta_list=tuple(args.theta), d_list=tuple(args.d), iterations=args.iters,
                      seed=args.seed, m=args.m, n=args.n, tolerance=args.tolerance,
                      ema_decay=args.ema_decay, eps0=sched.get("eps0"), tau=sched.get("tau", 1000.0),
                      trace_stride=args.trace_stride, n_jobs=args.jobs)
    cells = report.results["cells"]
    if _wants(args, "csv"):
        rows = []
        for c in cells:
            tr = c["trace"]
            rows.extend(zip([c["theta"]] * len(tr["iteration"]), [c["d"]] * len(tr["iteration"]),
                            tr["iteration"], tr["stochastic"], tr["ema"], tr["deterministic"]))
        _write_csv(args.out / "trace.csv", ["theta", "d", "iteration", "stochastic", "ema", "deterministic"], rows)
        keys = ["theta", "d", "final_ema", "final_deterministic", "relative_gap", "tracks"]
        _write_csv(args.out / "summary.csv", keys, ([c[k] for k in keys] for c in cells))
    for c in cells:
        print(f"theta={c['theta']:<4} d={c['d']:<4} gap={c['relative_gap']:.4f} "
              f"{'tracks' if c['tracks'] else 'DOES NOT TRACK'}")
    return report, 0 if report.results["all_track"] else 1


def cmd_fig3(args):
    sched = _schedule_kwargs(args)
    report = run_fig3(p=args.p, d_list=tuple(args.d), seed=args.seed, theta_fixed=args.theta,
                      iterations=args.iters, eps0=sched.get("eps0"), tau=sched.get("tau", 200.0),
                      rank_cutoff=args.rank_cutoff, noise_std=args.noise_std, init=args.init)
    res = report.results
    if _wants(args, "csv"):
        columns = {"data": res["data_spectrum"], "closed_form": res["closed_form"]["spectrum"]}
        for run in res["runs"]:
            columns[f"fixed_d{run['d']}"] = run["fixed"]["spectrum"]
            columns[f"adaptive_d{run['d']}"] = run["adaptive"]["spectrum"]
        _write_csv(args.out / "spectrum.csv", ["index", *columns], _spectrum_rows(columns))
    print(f"closed form: d_bar={res['closed_form']['d_bar']} mu={res['closed_form']['mu']:.6g}")
    for run in res["runs"]:
        print(f"d={run['d']}: fixed rank {run['fixed']['numerical_rank']}, "
              f"adaptive rank {run['adaptive']['numerical_rank']}, "
              f"adaptive distance {run['adaptive']['relative_distance_to_closed_form']:.3e}")
    return report, 0


def cmd_reconstruct(args):
    report = run_reconstruct(args.input, thetas=tuple(args.theta), d=args.d, epochs=args.epochs,
                             alternating_block=args.block, lr=args.lr, seed=args.seed,
                             max_rows=args.max_rows)
    runs = report.results["runs"]
    if _wants(args, "csv"):
        keys = ["theta", "p", "d_bar", "mu", "mse_dropout", "mse_closed_form", "mse_gap", "relative_distance"]
        _write_csv(args.out / "reconstruct.csv", keys, ([r[k] for k in keys] for r in runs))
    for r in runs:
        print(f"theta={r['theta']} p={r['p']:.6g} mse dropout {r['mse_dropout']:.4e} "
              f"closed form {r['mse_closed_form']:.4e} gap {r['mse_gap']:.4e}")
    return report, 0


COMMANDS = {
    "check-equivalence": cmd_check_equivalence,
    "train": cmd_train,
    "closed-form": cmd_closed_form,
    "fig1": cmd_fig1,
    "fig3": cmd_fig3,
    "reconstruct": cmd_reconstruct,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        report, status = COMMANDS[args.command](args)
    except (DropoutMFError, ValueError, OSError) as exc:
        print(f"dropoutmf {args.command}: {exc}", file=sys.stderr)
        return 2
    if _wants(args, "json"):
        payload = report.to_dict()
        payload["command"] = args.command
        _write_json(args.out / "report.json", payload)
    return status


if __name__ == "__main__":
    sys.exit(main())
