"""Command-line interface.

Subcommands: ``train``, ``lambda-search``, ``eval``, ``verify``, ``bench``.
Every run produces a report with the same envelope: the resolved
configuration (sufficient to reproduce the run), the results, artifact
paths, and timing.  ``--json`` prints it to stdout; ``--report PATH``
writes it to a file.

Exit codes are stable: 0 success, 1 failed verification check, 2 bad
configuration or flags, 3 data/model file problems, 4 training divergence,
5 degenerate metric denominator.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import __version__, kernels, solver, verify
from .data import load_dist, load_mlsvm, single_point_dist, random_discrete
from .errors import (
    ConfigError,
    DataError,
    DegenerateDenominatorError,
    DivergenceError,
    MmoError,
    NoValidCandidateError,
)
from .losses import CostCoefficients, SurrogateParams, gamma_from, prepare_costs
from .metrics import AVERAGING_MODES, empirical_metric, preset
from .models import load_model, save_model
from .solver import SearchConfig, TrainConfig

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4
EXIT_DEGENERATE = 5

_ENVELOPE_PROPS = {
    "command": {"type": "string"},
    "version": {"type": "string"},
    "config": {"type": "object"},
    "results": {"type": "object"},
    "artifacts": {"type": "object"},
    "timing": {"type": "object"},
}

#: JSON-schema for every report envelope this CLI emits.
REPORT_SCHEMA = {
    "type": "object",
    "properties": _ENVELOPE_PROPS,
    "required": ["command", "version", "config", "results", "artifacts", "timing"],
}


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and (obj != obj or obj in (float("inf"), float("-inf"))):
        return repr(obj)
    return obj


def _envelope(command, config, results, artifacts, started):
    return _to_jsonable(
        {
            "command": command,
            "version": __version__,
            "config": config,
            "results": results,
            "artifacts": artifacts,
            "timing": {"seconds": time.perf_counter() - started},
        }
    )


def _emit(report, args):
    if getattr(args, "report", None):
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if getattr(args, "json", False):
        print(json.dumps(report, indent=2, sort_keys=True))


def _add_common(p):
    p.add_argument("--json", action="store_true", help="print the JSON report to stdout")
    p.add_argument("--report", help="write the JSON report to this path")
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness (default 0)")


def _add_train_flags(p):
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument(
        "--optimizer", choices=["gd", "adaptive-moments"], default="adaptive-moments"
    )
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--opt-eps", type=float, default=1e-8)


def _add_metric_flags(p, averaging_choices=AVERAGING_MODES):
    p.add_argument(
        "--metric",
        required=True,
        choices=["f1", "jaccard", "precision", "accuracy"],
    )
    p.add_argument("--averaging", choices=list(averaging_choices), default="micro")


def _train_config(args):
    return TrainConfig(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        tau=args.tau,
        optimizer=args.optimizer.replace("-", "_"),
        beta1=args.beta1,
        beta2=args.beta2,
        eps=args.opt_eps,
    )


def _train_config_echo(args):
    return {
        "learning_rate": args.learning_rate,
        "batch_size": args.batch_size,
        "epochs": args.epochs,
        "tau": args.tau,
        "optimizer": args.optimizer,
        "beta1": args.beta1,
        "beta2": args.beta2,
        "opt_eps": args.opt_eps,
        "seed": args.seed,
    }


def cmd_train(args) -> int:
    started = time.perf_counter()
    if args.strategy == "fixed-lambda" and args.lam is None:
        raise ConfigError("--strategy fixed-lambda requires --lambda")
    ds = load_mlsvm(args.data)
    spec = preset(args.metric, ds.l, args.averaging)
    cfg = _train_config(args)
    results: dict = {}
    if args.strategy == "ema":
        search = SearchConfig(
            strategy="ema", ema_gamma=args.ema_gamma, ema_lambda0=args.lambda0
        )
        model, report = solver.train_ema(ds, spec, cfg, search)
        results["chosen_lambda"] = report.chosen_lambda
        results["lambda_trace"] = report.lambda_trace
    else:
        gamma = gamma_from(spec.alpha, spec.beta, args.lam)
        epoch_losses: list = []
        model = solver.train_surrogate(ds, gamma, cfg, epoch_losses=epoch_losses)
        results["lambda"] = args.lam
        results["epoch_losses"] = epoch_losses
    save_model(model, args.out)
    try:
        results["train_metric"] = empirical_metric(ds.Y, model.predict_matrix(ds.X), spec)
    except DegenerateDenominatorError:
        results["train_metric"] = None

    config = {
        "data": args.data,
        "metric": args.metric,
        "averaging": args.averaging,
        "strategy": args.strategy,
        "lambda": args.lam,
        "ema_gamma": args.ema_gamma,
        "lambda0": args.lambda0,
        "out": args.out,
        **_train_config_echo(args),
    }
    report_path = args.report or f"{args.out}.report.json"
    args.report = report_path
    env = _envelope("train", config, results, {"model": args.out, "report": report_path}, started)
    _emit(env, args)
    if not args.json:
        print(f"trained model written to {args.out} (report: {report_path})")
    return EXIT_OK


def cmd_lambda_search(args) -> int:
    started = time.perf_counter()
    cfg = _train_config(args)
    config = {
        "strategy": args.strategy,
        "metric": args.metric,
        "averaging": args.averaging,
        "lambda_min": args.lambda_min,
        "lambda_max": args.lambda_max,
        "epsilon": args.epsilon,
        "epsilon_m": args.epsilon_m,
        "data": args.data,
        "val": args.val,
        "dist": args.dist,
        "out": args.out,
        **_train_config_echo(args),
    }
    artifacts = {}
    if args.strategy == "oracle":
        if not args.dist:
            raise ConfigError("--strategy oracle requires --dist")
        dist = load_dist(args.dist)
        spec = preset(args.metric, dist.l, args.averaging)
        search = SearchConfig(
            lambda_min=args.lambda_min,
            lambda_max=args.lambda_max,
            epsilon=args.epsilon,
            strategy="oracle_bisect",
        )
        lam, report = solver.lambda_oracle_bisect(dist, spec, search)
        results = {"search": report.to_dict()}
    else:
        if not args.data:
            raise ConfigError(f"--strategy {args.strategy} requires --data")
        ds = load_mlsvm(args.data)
        spec = preset(args.metric, ds.l, args.averaging)
        if args.strategy == "cv":
            if not args.val:
                raise ConfigError("--strategy cv requires --val")
            val = load_mlsvm(args.val)
            search = SearchConfig(
                lambda_min=args.lambda_min,
                lambda_max=args.lambda_max,
                epsilon=args.epsilon if args.epsilon is not None else 0.1,
                epsilon_m=args.epsilon_m,
                strategy="cv_grid",
            )
            model, report = solver.lambda_cv_grid(ds, val, spec, cfg, search)
        else:  # surrogate-bs
            search = SearchConfig(
                lambda_min=args.lambda_min,
                lambda_max=args.lambda_max,
                epsilon=args.epsilon,
                epsilon_m=args.epsilon_m,
                strategy="surrogate_bisect",
            )
            model, report = solver.lambda_surrogate_bisect(ds, spec, cfg, search)
        results = {"search": report.to_dict()}
        if args.out:
            save_model(model, args.out)
            artifacts["model"] = args.out
    env = _envelope("lambda-search", config, results, artifacts, started)
    _emit(env, args)
    if not args.json:
        sr = results["search"]
        print(
            f"strategy {sr['strategy']}: chosen lambda {sr['chosen_lambda']:.6f} "
            f"after {sr['iterations']} candidates ({sr['termination_reason']})"
        )
    return EXIT_OK


def cmd_eval(args) -> int:
    started = time.perf_counter()
    model = load_model(args.model)
    ds = load_mlsvm(args.data)
    if model.l != ds.l or model.d != ds.d:
        raise ConfigError(
            f"model dims (l={model.l}, d={model.d}) do not match data (l={ds.l}, d={ds.d})"
        )
    preds = model.predict_matrix(ds.X)
    modes = list(AVERAGING_MODES) if args.averaging == "all" else [args.averaging]
    values = {}
    for mode in modes:
        spec = preset(args.metric, ds.l, mode)
        values[mode] = empirical_metric(
            ds.Y, preds, spec, skip_degenerate=args.skip_degenerate
        )
    config = {
        "model": args.model,
        "data": args.data,
        "metric": args.metric,
        "averaging": args.averaging,
        "skip_degenerate": args.skip_degenerate,
        "seed": args.seed,
    }
    env = _envelope("eval", config, {"metrics": values}, {}, started)
    _emit(env, args)
    if not args.json:
        for mode, v in values.items():
            print(f"{args.metric}/{mode}: {v:.6f}")
    return EXIT_OK


def _parse_l_list(raw):
    try:
        return tuple(int(tok) for tok in str(raw).split(","))
    except ValueError as exc:
        raise ConfigError(f"bad --l value {raw!r}: {exc}") from exc


def _verify_suite(args):
    """Distributions for the equivalence/sign checks."""
    if args.dist:
        return [("file", load_dist(args.dist))]
    suite = [("canonical-0.8", single_point_dist([0.8]))]
    count = args.trials if args.trials is not None else 50
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(args.seed, i)))
        support = int(rng.integers(1, 4))
        l = int(rng.integers(1, 3))
        suite.append((f"random-{i}", random_discrete(support, l, (args.seed, i, 1))))
    return suite


def cmd_verify(args) -> int:
    started = time.perf_counter()
    checks = (
        ["factorization", "gradient", "equiv", "sign", "bound", "runtime"]
        if args.check == "all"
        else [args.check]
    )
    reports = []
    for name in checks:
        if name == "factorization":
            reports.append(
                verify.check_factorization(
                    trials=args.trials if args.trials is not None else 200, seed=args.seed
                )
            )
        elif name == "gradient":
            reports.append(
                verify.check_gradient(
                    trials=args.trials if args.trials is not None else 1000, seed=args.seed
                )
            )
        elif name in ("equiv", "sign"):
            worst = None
            total = 0
            for label, dist in _verify_suite(args):
                preset_name = "f1" if total % 2 == 0 else "jaccard"
                spec = preset(preset_name, dist.l, "micro")
                rep = (
                    verify.check_equivalence(dist, spec)
                    if name == "equiv"
                    else verify.check_sign_agreement(dist, spec)
                )
                rep.info["distribution"] = label
                total += 1
                if worst is None or rep.max_violation > worst.max_violation:
                    worst = rep
            worst.trials = total
            reports.append(worst)
        elif name == "bound":
            l_values = _parse_l_list(args.l) if args.l else (1,)
            for l in l_values:
                reports.append(
                    verify.check_regret_bound(
                        l,
                        args.tau,
                        trials=args.trials
                        if args.trials is not None
                        else (10000 if l == 1 else 500),
                        seed=args.seed,
                    )
                )
        elif name == "runtime":
            l_list = _parse_l_list(args.l) if args.l else (64, 256, 1024, 4096)
            reports.append(verify.check_runtime_scaling(l_list=l_list, seed=args.seed))
        else:
            raise ConfigError(f"unknown check {name!r}")

    config = {
        "check": args.check,
        "seed": args.seed,
        "trials": args.trials,
        "tau": args.tau,
        "l": args.l,
        "dist": args.dist,
    }
    results = {"checks": [r.to_dict() for r in reports]}
    env = _envelope("verify", config, results, {}, started)
    _emit(env, args)
    all_passed = all(r.passed for r in reports)
    if not args.json:
        for r in reports:
            status = "PASS" if r.passed else "FAIL"
            print(
                f"check {r.check}: {status} "
                f"(max violation {r.max_violation:.3e}, tolerance {r.tolerance:.3e}, "
                f"{r.trials} trials)"
            )
    return EXIT_OK if all_passed else EXIT_VERIFY_FAIL


def cmd_bench(args) -> int:
    started = time.perf_counter()
    l_list = _parse_l_list(args.l) if args.l else (16, 128, 1024)
    backends = list(kernels.available_backends())
    rng = np.random.default_rng(args.seed)
    rows = []
    for l in l_list:
        gamma = CostCoefficients(gamma=rng.uniform(-1.0, 1.0, size=(l, 4)))
        costs = prepare_costs(gamma, SurrogateParams(tau=args.tau))
        y = rng.choice([-1, 1], size=(args.batch, l)).astype(np.int8)
        cp, cm = costs.marginals_for(y)
        scores = rng.uniform(-3.0, 3.0, size=(args.batch, l))
        row = {"l": l, "batch": args.batch}
        for name in backends:
            backend = kernels.get_backend(name)
            backend.batch_loss_grad(cp, cm, scores, args.tau)  # warm up
            samples = []
            for _ in range(args.repeats):
                t0 = time.perf_counter()
                backend.batch_loss_grad(cp, cm, scores, args.tau)
                samples.append(time.perf_counter() - t0)
            row[name] = float(np.median(samples))
        if "compiled" in row and "python" in row and row["compiled"] > 0:
            row["speedup"] = row["python"] / row["compiled"]
        rows.append(row)
    config = {
        "l": list(l_list),
        "batch": args.batch,
        "repeats": args.repeats,
        "tau": args.tau,
        "seed": args.seed,
        "active_backend": kernels.backend_name(),
    }
    env = _envelope("bench", config, {"rows": rows, "backends": backends}, {}, started)
    _emit(env, args)
    if not args.json:
        print(f"active backend: {kernels.backend_name()}")
        for row in rows:
            parts = [f"l={row['l']:>5}"]
            for name in backends:
                parts.append(f"{name}={row[name] * 1e6:.1f}us")
            if "speedup" in row:
                parts.append(f"speedup={row['speedup']:.1f}x")
            print("  ".join(parts))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmo",
        description="Train and verify multi-label classifiers that optimize "
        "linear-fractional metrics via cost-sensitive surrogate losses.",
    )
    parser.add_argument("--version", action="version", version=f"mmo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on an .mlsvm dataset")
    p.add_argument("--data", required=True)
    _add_metric_flags(p)
    p.add_argument("--strategy", choices=["ema", "fixed-lambda"], default="ema")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--ema-gamma", type=float, default=0.7)
    p.add_argument("--lambda0", type=float, default=0.5)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("lambda-search", help="select lambda by search")
    p.add_argument("--strategy", required=True, choices=["oracle", "surrogate-bs", "cv"])
    p.add_argument("--data")
    p.add_argument("--val")
    p.add_argument("--dist")
    _add_metric_flags(p)
    p.add_argument("--lambda-min", type=float, default=0.0)
    p.add_argument("--lambda-max", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--epsilon-m", type=float, default=1e-2)
    p.add_argument("--out")
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_lambda_search)

    p = sub.add_parser("eval", help="evaluate a model file on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    _add_metric_flags(p, averaging_choices=list(AVERAGING_MODES) + ["all"])
    p.add_argument("--skip-degenerate", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run numerical verification checks")
    p.add_argument(
        "--check",
        required=True,
        choices=["factorization", "gradient", "equiv", "sign", "bound", "runtime", "all"],
    )
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--l", default=None, help="label count (comma list for runtime/bound)")
    p.add_argument("--dist", default=None, help="distribution file for equiv/sign")
    _add_common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="compare kernel backends")
    p.add_argument("--l", default=None, help="comma list of label counts")
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--repeats", type=int, default=25)
    p.add_argument("--tau", type=float, default=0.0)
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (DegenerateDenominatorError, NoValidCandidateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (DataError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MmoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
