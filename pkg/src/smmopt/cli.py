"""Command-line entry point: generate, train, dict, rates, compare.

Thin dispatch over the library modules.  Every text artifact starts with
a `#` comment echoing the effective configuration and seed; rate-check
output is JSON with the configuration under a top-level "config" key.
Exit codes: 0 success, 1 configuration/input error, 2 numerical failure.
"""

import argparse
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from .config import (ConfigError, build_solver_config, format_config,
                     load_effective_config)
from .data_io import (generate_synthetic_logreg, parse_libsvm,
                      serialize_libsvm, write_metrics)
from .dictlearn import (DictConfig, extract_patches, read_dict, read_patches,
                        read_pgm, run_dict, whiten_patches, write_dict)
from .harness import (Problem, check_cor32, check_prop31, check_prop33,
                      check_stability, surrogate_property_suite)
from .losses import LOSS_KINDS, ProblemConstants, lipschitz_constant
from .prox import L1
from .solvers import SOLVERS, NumericalFailure, StabilityViolation, run

__all__ = ["build_arg_parser", "run_cli", "entry"]

RATE_CHECKS = ("prop31", "cor32", "prop33", "stability", "surrogates")


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as ConfigError (exit code 1)."""

    def error(self, message):
        raise ConfigError(message)


def build_arg_parser():
    parser = _Parser(prog="smmopt",
                     description="Stochastic majorization-minimization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("--p", type=int, required=True, help="feature dimension")
    g.add_argument("--n", type=int, required=True, help="sample count")
    g.add_argument("--k-true", type=int, default=0, help="ground-truth nonzeros")
    g.add_argument("--noise", type=float, default=0.0, help="label flip probability")
    g.add_argument("--density", type=float, default=0.1, help="nonzero fraction per sample")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--name", default=None, help="dataset name")
    g.add_argument("--out", required=True, help="output path (text format)")

    t = sub.add_parser("train", help="run one solver on a dataset")
    t.add_argument("--solver", choices=SOLVERS, default=None,
                   help="overrides solver.kind from the config")
    t.add_argument("--data", required=True, help="training data (text format)")
    t.add_argument("--test-data", default=None)
    t.add_argument("--config", default=None, help="key = value config file")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", default=None,
                   help="config override (repeatable)")
    t.add_argument("--normalize", action="store_true",
                   help="scale samples to unit l2-norm")
    t.add_argument("--zero-to-minus-one", action="store_true",
                   help="map 0 labels to -1")
    t.add_argument("--out", default=None, help="metrics CSV path")
    t.add_argument("--model-out", default=None, help="final iterate path")
    t.add_argument("--timing", action="store_true",
                   help="record wall-clock times (breaks byte-reproducibility)")

    d = sub.add_parser("dict", help="learn a dictionary from patches")
    d.add_argument("--patches", default=None, help="binary patch file")
    d.add_argument("--images", default=None, help="directory of P5 PGM images")
    d.add_argument("--patch-size", type=int, default=20,
                   help="patch side when extracting from images")
    d.add_argument("--whiten", action="store_true", help="ZCA-whiten the patch set")
    d.add_argument("--k", type=int, required=True, help="number of atoms")
    d.add_argument("--lambda1", type=float, default=0.15)
    d.add_argument("--lambda2", type=float, default=0.01)
    d.add_argument("--gamma1", type=float, default=0.0)
    d.add_argument("--gamma2", type=float, default=0.0)
    d.add_argument("--tile", type=int, default=2, help="group tile side")
    d.add_argument("--minibatch", type=int, default=100)
    d.add_argument("--epochs", type=int, default=1)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--init-dict", default=None, help="initial dictionary file")
    d.add_argument("--out", default=None, help="metrics CSV path")
    d.add_argument("--dict-out", default=None, help="learned dictionary path")
    d.add_argument("--timing", action="store_true")

    r = sub.add_parser("rates", help="run a convergence/stability/property check")
    r.add_argument("--check", choices=RATE_CHECKS, required=True)
    r.add_argument("--seeds", type=int, default=20)
    r.add_argument("--out", default=None, help="JSON report path (default stdout)")
    r.add_argument("--p", type=int, default=50)
    r.add_argument("--n", type=int, default=10000)
    r.add_argument("--density", type=float, default=0.1)
    r.add_argument("--k-true", type=int, default=10)
    r.add_argument("--noise", type=float, default=0.05)
    r.add_argument("--data-seed", type=int, default=0)
    r.add_argument("--reg-lambda", type=float, default=0.01)
    r.add_argument("--ridge-mu", type=float, default=0.1,
                   help="ridge weight (prop33 only)")
    r.add_argument("--gamma", type=float, default=1.0)
    r.add_argument("--horizon", type=int, default=10000)
    r.add_argument("--n-max", type=int, default=10000)
    r.add_argument("--trials", type=int, default=10000,
                   help="surrogate-suite trials per kind")
    r.add_argument("--l-scale", type=float, default=1.0,
                   help="curvature scale for the suite (0.5 = negative control)")
    r.add_argument("--loss", choices=LOSS_KINDS, default="logistic")
    r.add_argument("--suite-seed", type=int, default=0)

    c = sub.add_parser("compare", help="seed-averaged solver comparison CSV")
    c.add_argument("--configs", nargs="+", required=True,
                   help="one config file per solver setup")
    c.add_argument("--data", required=True)
    c.add_argument("--test-data", default=None)
    c.add_argument("--seeds", type=int, default=1)
    c.add_argument("--epochs", default="1,2,3,4,5,10,25",
                   help="comma-separated epoch checkpoints")
    c.add_argument("--normalize", action="store_true")
    c.add_argument("--zero-to-minus-one", action="store_true")
    c.add_argument("--out", required=True)
    c.add_argument("--timing", action="store_true")

    return parser


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _kv_line(pairs):
    return " ".join(f"{k}={v}" for k, v in pairs)


def cmd_generate(args):
    data, _ = generate_synthetic_logreg(args.p, args.n, args.k_true, args.noise,
                                        args.seed, density=args.density,
                                        name=args.name)
    comment = "# config: generate " + _kv_line([
        ("p", args.p), ("n", args.n), ("k_true", args.k_true),
        ("noise", args.noise), ("density", args.density), ("seed", args.seed)])
    with open(args.out, "w") as fh:
        fh.write(comment + "\n")
        serialize_libsvm(data, fh)
    print(f"wrote {data.n} samples, dimension {data.p}, to {args.out}")
    return 0


def _load_train_test(data_path, test_path, zero_labels, normalize):
    train = parse_libsvm(data_path, zero_to_minus_one=zero_labels,
                         normalize=normalize)
    test = None
    if test_path:
        test = parse_libsvm(test_path, zero_to_minus_one=zero_labels,
                            normalize=normalize)
    return train, test


def _output_theta(rec, averaging):
    return {"none": rec.theta, "geometric": rec.theta_geo,
            "normalized": rec.theta_norm}[averaging]


def _write_model(path, theta, comment):
    with open(path, "w") as fh:
        fh.write(comment + "\n")
        fh.write(f"{theta.size}\n")
        for i in np.flatnonzero(theta):
            fh.write(f"{i} {theta[i]:.17g}\n")


def cmd_train(args):
    cfg = load_effective_config(args.config, args.set)
    if args.solver:
        cfg["solver.kind"] = args.solver
    if args.normalize:
        cfg["data.normalize"] = True
    if args.zero_to_minus_one:
        cfg["data.zero_labels"] = True
    train, test = _load_train_test(args.data, args.test_data,
                                   cfg.get("data.zero_labels", False),
                                   cfg.get("data.normalize", False))
    sc = build_solver_config(cfg, train)
    sc.record_time = bool(args.timing)
    rec = run(sc, train, test)
    echo = dict(cfg)
    echo["solver.seed"] = sc.seed
    comment = "config: " + format_config(echo)
    if args.out:
        write_metrics(rec.rows, args.out, header_comment=comment)
    if args.model_out:
        _write_model(args.model_out, _output_theta(rec, sc.averaging),
                     "# " + comment)
    theta = _output_theta(rec, sc.averaging)
    print(f"{sc.solver}: {len(rec.rows)} metric rows, "
          f"{int(np.count_nonzero(theta))} nonzeros")
    for msg in rec.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    return 0


def _load_patch_matrix(args):
    if args.patches and args.images:
        raise ConfigError("pass --patches or --images, not both")
    if args.patches:
        return read_patches(args.patches)
    if args.images:
        files = sorted(f for f in os.listdir(args.images)
                       if f.lower().endswith(".pgm"))
        if not files:
            raise ConfigError(f"no .pgm files in {args.images!r}")
        chunks = [extract_patches(read_pgm(os.path.join(args.images, f)),
                                  args.patch_size)
                  for f in files]
        return np.vstack(chunks)
    raise ConfigError("dict needs --patches or --images")


def cmd_dict(args):
    signals = _load_patch_matrix(args)
    if args.whiten:
        signals = whiten_patches(signals)
    init = read_dict(args.init_dict) if args.init_dict else None
    dcfg = DictConfig(K=args.k, lam1=args.lambda1, lam2=args.lambda2,
                      gamma1=args.gamma1, gamma2=args.gamma2, tile=args.tile,
                      minibatch=args.minibatch, epochs=args.epochs,
                      seed=args.seed, record_time=args.timing)
    rec = run_dict(dcfg, signals, init_dict=init)
    comment = "config: dict " + _kv_line([
        ("k", args.k), ("lambda1", args.lambda1), ("lambda2", args.lambda2),
        ("gamma1", args.gamma1), ("gamma2", args.gamma2), ("tile", args.tile),
        ("minibatch", args.minibatch), ("epochs", args.epochs),
        ("whiten", args.whiten), ("seed", args.seed)])
    if args.out:
        write_metrics(rec.rows, args.out, header_comment=comment)
    if args.dict_out:
        write_dict(args.dict_out, rec.D, header_comment=comment)
    print(f"dict: {signals.shape[0]} patches, {int(np.count_nonzero(rec.D))} "
          f"nonzero dictionary entries")
    for msg in rec.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    return 0


def cmd_rates(args):
    reg = L1(args.reg_lambda) if args.reg_lambda > 0 else None
    if args.check == "surrogates":
        rep = surrogate_property_suite(loss_kind=args.loss, reg=reg,
                                       trials=args.trials, seed=args.suite_seed,
                                       l_scale=args.l_scale)
        payload = {"check": "surrogates", "pass": rep.passed,
                   "trials": rep.trials, "failures": rep.failures,
                   "worst": rep.worst}
        knobs = [("loss", args.loss), ("reg_lambda", args.reg_lambda),
                 ("trials", args.trials), ("suite_seed", args.suite_seed),
                 ("l_scale", args.l_scale)]
    else:
        mu = args.ridge_mu if args.check == "prop33" else 0.0
        data, _ = generate_synthetic_logreg(args.p, args.n, args.k_true,
                                            args.noise, args.data_seed,
                                            density=args.density)
        L = max(lipschitz_constant("logistic", data.sample(i))
                for i in range(data.n))
        problem = Problem(train=data, reg=reg, loss_kind="logistic",
                          constants=ProblemConstants(L=L, mu=mu))
        if args.check == "prop31":
            bc = check_prop31(problem, args.gamma, args.horizon, args.seeds)
        elif args.check == "cor32":
            bc = check_cor32(problem, args.gamma, args.n_max, args.seeds)
        elif args.check == "prop33":
            bc = check_prop33(problem, args.seeds)
        else:
            bc = check_stability(problem, args.gamma, args.horizon, args.seeds)
        payload = bc.to_json_dict()
        knobs = [("p", args.p), ("n", args.n), ("density", args.density),
                 ("k_true", args.k_true), ("noise", args.noise),
                 ("data_seed", args.data_seed), ("reg_lambda", args.reg_lambda),
                 ("ridge_mu", mu), ("gamma", args.gamma),
                 ("horizon", args.horizon), ("n_max", args.n_max),
                 ("seeds", args.seeds)]
    payload["config"] = dict(knobs)
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def _epoch_iterations(solver, n_train, minibatch):
    """How many recorded iterations one epoch checkpoint corresponds to."""
    if solver in ("fista", "batch_dc"):
        return 1
    return math.ceil(n_train / minibatch)


def cmd_compare(args):
    try:
        epoch_list = sorted({int(t) for t in args.epochs.split(",") if t.strip()})
    except ValueError as exc:
        raise ConfigError(f"bad --epochs list: {exc}") from exc
    if not epoch_list or epoch_list[0] < 1:
        raise ConfigError("--epochs needs positive integers")
    train, test = _load_train_test(args.data, args.test_data,
                                   args.zero_to_minus_one, args.normalize)
    out_rows = []
    echoes = []
    for path in args.configs:
        cfg = load_effective_config(path, None)
        sc = build_solver_config(cfg, train)
        sc.record_time = bool(args.timing)
        ipe = _epoch_iterations(sc.solver, train.n, sc.minibatch)
        eval_at = tuple(e * ipe for e in epoch_list)
        sc.epochs = max(epoch_list)
        if sc.solver == "batch_dc":
            sc.dc_rounds = max(epoch_list)
        sc.eval_at = eval_at
        echoes.append(f"{os.path.basename(path)}[{format_config(cfg)}]")
        sums = {n: np.zeros(4) for n in eval_at}
        counts = {n: 0 for n in eval_at}
        for seed in range(args.seeds):
            rec = run(replace(sc, seed=seed), train, test)
            for row in rec.rows:
                if row.iteration in sums:
                    sums[row.iteration] += (row.train_obj, row.test_obj,
                                            row.nnz, row.elapsed_s)
                    counts[row.iteration] += 1
        for e, n in zip(epoch_list, eval_at):
            if counts[n] == 0:
                print(f"warning: {path}: no record at epoch {e}", file=sys.stderr)
                continue
            avg = sums[n] / counts[n]
            out_rows.append((sc.solver, e, avg[0], avg[1], avg[2], avg[3]))
    comment = ("# config: compare seeds={} data={} | {}"
               .format(args.seeds, os.path.basename(args.data),
                       " | ".join(echoes)))
    with open(args.out, "w") as fh:
        fh.write(comment + "\n")
        fh.write("solver,epochs,train_obj,test_obj,nnz,elapsed_s\n")
        for solver, e, tr, te, nnz, el in out_rows:
            fh.write(f"{solver},{e},{tr:.17g},{te:.17g},{nnz:.17g},{el:.17g}\n")
    print(f"wrote {len(out_rows)} comparison rows to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

_DISPATCH = {
    "generate": cmd_generate,
    "train": cmd_train,
    "dict": cmd_dict,
    "rates": cmd_rates,
    "compare": cmd_compare,
}


def run_cli(argv=None):
    """Parse and dispatch; returns the process exit code."""
    try:
        args = build_arg_parser().parse_args(argv)
        return _DISPATCH[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalFailure, StabilityViolation) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def entry():
    sys.exit(run_cli())
