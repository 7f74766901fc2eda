"""Command-line interface: ``offmoo <generate|estimate|optimize|verify|sweep|plot>``.

Exit status is 0 on success and 1 on any failed cell, failed check or
input error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .benchmarks import make_problem
from .errors import ConfigurationError, DataError, MethodError, NumericError, ParseError, ValidationError
from .estimators import ConfidenceConfig, OfflineData, estimate
from .experiments import ExperimentConfig
from .hypervolume import HypervolumeMethod
from .logged_data import generate, load, save
from .optimize import GradientConfig, Objective, optimize_policies
from .policy import LoggingPolicy, load_policies, save_policies
from .verification import run_suite

log = logging.getLogger("offmoo")

_ESTIMATORS = {
    "ips": "ips",
    "clipped": "clipped_ips",
    "pess": "pessimistic",
    "dm": "dm",
    "dr": "dr",
    "snips": "snips",
}
_EXPECTED = (ConfigurationError, DataError, MethodError, NumericError, ParseError, ValidationError, OSError)


def _cmd_generate(args) -> int:
    problem = make_problem(args.problem, args.d, args.m, args.num_actions, args.problem_seed)
    ds = generate(problem, LoggingPolicy(problem, args.epsilon), args.n, args.sigma, args.seed)
    save(ds, args.out)
    log.info("wrote %d records to %s", ds.n, args.out)
    return 0


def _cmd_estimate(args) -> int:
    ds = load(args.data)
    data = OfflineData.build(ds)
    policies = load_policies(args.policy_file)
    if policies.dim != data.features.shape[-1]:
        raise ValidationError(f"policies have dimension {policies.dim}, the problem needs {data.features.shape[-1]}")
    sigma = ds.sigma if args.sigma is None else args.sigma
    cfg = ConfidenceConfig(args.beta, sigma)
    clip = np.inf if args.clip_M is None else args.clip_M
    result = estimate(data, policies.thetas, _ESTIMATORS[args.estimator], cfg, clip)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["policy", "objective", "value", "width"])
    for k in range(len(policies)):
        for i in range(ds.m):
            writer.writerow([k, i, repr(float(result.values[k, i])), repr(float(result.widths[k, i]))])
    return 0


def _cmd_optimize(args) -> int:
    ds = load(args.data)
    data = OfflineData.build(ds)
    sigma = ds.sigma if args.sigma is None else args.sigma
    hv = HypervolumeMethod.default_for(ds.m) if args.hv is None else HypervolumeMethod.parse(args.hv)
    objective = Objective.make(
        args.objective, data, ConfidenceConfig(args.beta, sigma), hv, np.random.default_rng(args.seed)
    )
    config = GradientConfig(
        iterations=args.iters,
        learning_rate=args.lr,
        restarts=args.restarts,
        init_scale=args.init_scale,
        seed=args.seed,
    )
    result = optimize_policies(objective, args.K, config)
    save_policies(result.policies, args.out)
    print(f"objective={result.value!r} restart={result.restart}")
    return 0


def _cmd_verify(args) -> int:
    rows = run_suite(scale=args.scale, seed=args.seed)
    width = max(len(r.name) for r in rows)
    for r in rows:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.detail}")
    return 0 if all(r.passed for r in rows) else 1


def _sweep_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    overrides = {
        "problem": args.problem,
        "d": args.d,
        "m": args.m,
        "n_values": args.n,
        "k_values": args.K,
        "epsilons": args.epsilon,
        "methods": args.methods,
        "runs": args.runs,
        "seed": args.seed,
        "sigma": args.sigma,
        "beta": args.beta,
        "hv": args.hv,
        "reference_pool": args.reference_pool,
        "iterations": args.iters,
        "learning_rate": args.lr,
        "restarts": args.restarts,
        "output_dir": args.out_dir,
        "record_time": False if args.no_time else None,
    }
    return config.with_overrides(**overrides)


def _cmd_sweep(args) -> int:
    config = _sweep_config(args)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(config.to_ini())
    rows = experiments.run_sweep(config, out / "results.csv", workers=args.workers)
    failed = [r for r in rows if r.status != "ok"]
    print(f"{len(rows)} cells, {len(failed)} failed; results in {out / 'results.csv'}")
    return 1 if failed else 0


def _cmd_plot(args) -> int:
    experiments.emit_plot(args.csv, args.x, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="offmoo", description="Offline multi-objective policy optimization.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="log a dataset under the Pareto-front logging policy")
    p.add_argument("--problem", default="ZDT1")
    p.add_argument("--d", type=int, default=6)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--num-actions", type=int, default=20)
    p.add_argument("--problem-seed", type=int, default=0, help="seed of the action discretization")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("estimate", help="estimate per-objective values of stored policies")
    p.add_argument("--data", required=True)
    p.add_argument("--policy-file", required=True)
    p.add_argument("--estimator", choices=sorted(_ESTIMATORS), default="ips")
    p.add_argument("--beta", type=float, default=0.2)
    p.add_argument("--sigma", type=float, default=None, help="noise scale (default: the dataset's)")
    p.add_argument("--clip-M", type=float, default=None, help="clipping level for --estimator clipped")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("optimize", help="maximize the hypervolume of K softmax policies")
    p.add_argument("--data", required=True)
    p.add_argument("--objective", default="pess", help="true, mean, pess or ehvi:<N>")
    p.add_argument("--K", type=int, default=10)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--init-scale", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beta", type=float, default=0.2)
    p.add_argument("--sigma", type=float, default=None, help="noise scale (default: the dataset's)")
    p.add_argument("--hv", default=None, help="exact2d, incl-excl or scalarized:<N>")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("verify", help="run the randomized bound checks")
    p.add_argument("--scale", type=float, default=1.0, help="multiplier on the instance counts")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("sweep", help="recovered-hypervolume sweep over n, K and epsilon")
    p.add_argument("--config", help="INI file of key = value entries")
    p.add_argument("--problem")
    p.add_argument("--d")
    p.add_argument("--m")
    p.add_argument("--n", help="comma-separated dataset sizes")
    p.add_argument("--K", help="comma-separated policy-set sizes")
    p.add_argument("--epsilon", help="comma-separated logging mixing weights")
    p.add_argument("--methods", help="comma-separated subset of random,meanHVI,pessHVI,ehvi")
    p.add_argument("--runs")
    p.add_argument("--seed")
    p.add_argument("--sigma")
    p.add_argument("--beta")
    p.add_argument("--hv")
    p.add_argument("--reference-pool")
    p.add_argument("--iters")
    p.add_argument("--lr")
    p.add_argument("--restarts")
    p.add_argument("--out-dir")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-time", action="store_true", help="write 0 seconds so reruns are byte-identical")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("plot", help="SVG line chart of a sweep CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--x", choices=("n", "K", "epsilon"), default="n")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except _EXPECTED as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
