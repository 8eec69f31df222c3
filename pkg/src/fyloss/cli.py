"""Command line interface.

Exit codes: 0 on success, 2 on domain, parameter or parse errors, 3 when a
solver does not converge.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np
import scipy.sparse as sp

from . import bench, data_io, learn
from .entropies import EntropySpec, Family
from .errors import FYError, NoConvergence
from .losses import loss_value
from .margin import margin_report
from .prediction import predict
from .specs import PRESETS, FyLossSpec, entropy_loss

EXIT_OK, EXIT_DOMAIN, EXIT_NO_CONVERGENCE = 0, 2, 3
GLOBAL_DEFAULTS = {"seed": 0, "tol": 1e-9, "output": None, "format": "json"}


class UsageError(Exception):
    pass


def _floats(text):
    try:
        return np.array([float(v) for v in text.replace(",", " ").split()])
    except ValueError:
        raise UsageError(f"cannot parse numbers from {text!r}") from None


def _entropy_from_args(family, param):
    family = Family(family)
    if family is Family.SHANNON:
        return EntropySpec(family)
    key = {Family.TSALLIS: "alpha", Family.NORM: "q",
           Family.SQUARED_NORM: "q", Family.RENYI: "beta"}[family]
    if param is None:
        raise UsageError(f"--param is required for {family.value}")
    return EntropySpec(family, **{key: param})


def build_spec(args, alpha=None) -> FyLossSpec:
    """Loss from ``--spec`` (JSON), ``--entropy/--param`` or ``--loss/--alpha``."""
    if getattr(args, "spec", None):
        return FyLossSpec.from_json(args.spec)
    if getattr(args, "entropy", None):
        param = args.param
        if param is None and args.entropy == "tsallis":
            param = args.alpha[0] if isinstance(args.alpha, list) else args.alpha
        spec = entropy_loss(_entropy_from_args(args.entropy, param))
    else:
        name = args.loss
        if name not in PRESETS:
            raise UsageError(f"unknown loss {name!r}; choose from {sorted(PRESETS)}")
        if name == "tsallis":
            a = alpha if alpha is not None else (args.alpha[0] if isinstance(args.alpha, list)
                                                 else args.alpha)
            spec = PRESETS[name](a)
        else:
            spec = PRESETS[name]()
    method = getattr(args, "method", None)
    return spec.with_solver(tolerance=args.tol, method=method)


def _add_loss_args(p, multi_alpha=False):
    p.add_argument("--loss", default="tsallis", help="preset: " + ", ".join(sorted(PRESETS)))
    if multi_alpha:
        p.add_argument("--alpha", type=float, nargs="+", default=[1.5])
    else:
        p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--entropy", choices=[f.value for f in Family],
                   help="build the loss from an entropy instead of a preset")
    p.add_argument("--param", type=float, help="alpha, q or beta for --entropy")
    p.add_argument("--spec", help="loss specification as JSON")
    p.add_argument("--method", "--solver", dest="method",
                   choices=["closed_form", "bisect", "brent", "pg", "sort"])


# --------------------------------------------------------------------------
# output

def _cell(v):
    if isinstance(v, (list, dict)):
        return json.dumps(v)
    return v


def _finite(obj):
    """Replace non-finite floats by strings so the output is strict JSON."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else str(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def render(obj, fmt):
    if fmt == "json":
        return json.dumps(_finite(obj), indent=2, allow_nan=False) + "\n"
    rows = obj if isinstance(obj, list) else [obj]
    rows = [{k: _cell(v) for k, v in row.items()} for row in rows]
    return bench.to_csv(rows)


def emit(args, obj, fmt=None):
    text = render(obj, fmt or args.format)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# subcommands

def _vector(args, positional, option, name):
    text = getattr(args, option) or getattr(args, positional)
    if text is None:
        raise UsageError(f"missing {name}")
    return _floats(text)


def cmd_predict(args):
    spec = build_spec(args)
    res = predict(spec, _vector(args, "theta", "scores", "scores"), label=args.label)
    emit(args, res.to_dict())


def cmd_loss(args):
    spec = build_spec(args)
    ev = loss_value(spec, _vector(args, "theta", "scores", "scores"),
                    _vector(args, "y", "target", "target"))
    emit(args, ev.to_dict())


def cmd_margin(args):
    if args.entropy:
        ent = EntropySpec.from_json(args.entropy)
    else:
        ent = _entropy_from_args(args.family, args.param)
    rep = margin_report(ent, args.d, args.grid, args.trials, args.seed)
    out = {"entropy": ent.to_dict(), "d": args.d}
    out.update(rep.to_dict())
    emit(args, out)


def _load_raw(path, one_based):
    if path.endswith(".json"):
        return data_io.load_raw_json(path)
    return data_io.parse_multilabel(path, one_based=one_based)


def cmd_train(args):
    raw = _load_raw(args.data, args.one_based)
    train_raw, val_raw, _ = data_io.split(raw, args.split, args.seed)
    tr = data_io.preprocess(train_raw)
    va = data_io.preprocess(val_raw, tr.feature_stats, "validation") if val_raw.n else None
    opt = learn.OptimizerConfig(max_iterations=args.max_iter)
    alphas = args.alpha if args.loss == "tsallis" and not (args.spec or args.entropy) else [None]
    results, best = [], None
    for a in alphas:
        spec = build_spec(args, alpha=a)
        for lam in args.lam:
            model = learn.fit(spec, lam, tr.X, tr.Y, opt, stats=tr.feature_stats)
            score = learn.evaluate(model, (va or tr).X, (va or tr).Y)
            results.append({"alpha": a, "lambda": lam, "status": model.train_log.status,
                            "iterations": len(model.train_log.entries) - 1,
                            **score.to_dict()})
            if best is None or score.mean_js < best[0]:
                best = (score.mean_js, model)
    model = best[1]
    if args.model_out:
        model.save(args.model_out)
    emit(args, {"selected": {"loss_spec": model.loss_spec.to_dict(), "lambda": model.lam},
                "grid": results} if args.format == "json" else results)


def cmd_eval(args):
    model = learn.LinearModel.load(args.model)
    raw = _load_raw(args.data, args.one_based)
    ds = data_io.preprocess(raw, model.stats, "test")
    emit(args, learn.evaluate(model, ds.X, ds.Y).to_dict())


def cmd_bench(args):
    records = bench.bench_solvers(args.dims, args.trials, args.seed, args.alpha,
                                  args.warmup, args.repeats, time_budget=args.budget)
    expected = len(args.dims) * args.trials * len(bench.SOLVERS)
    rows = [r.to_dict() for r in records]
    if args.summary:
        rows = bench.summarize(records)
    if args.format == "json":
        emit(args, {"partial": len(records) < expected, "records": rows})
    else:
        emit(args, rows)


def _raw_from_dense(X, Y):
    labels = [{int(k): float(Y[i, k]) for k in np.flatnonzero(Y[i])} for i in range(len(Y))]
    return data_io.RawDataset(sp.csr_matrix(X), tuple(labels), Y.shape[1])


def cmd_synth(args):
    X, Y = learn.synthetic_proportions(args.seed, args.n, args.p, args.d,
                                       args.doc_length, args.labels_mean)
    raw = _raw_from_dense(X, Y)
    lines = "\n".join(data_io.format_lines(raw)) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(lines)
    else:
        sys.stdout.write(lines)


def cmd_sweep(args):
    grid = np.linspace(args.tmin, args.tmax, args.num)
    rows = bench.sweep_curves(args.family, args.params, grid)
    emit(args, rows, fmt=args.format if args.format_given else "csv")


def cmd_data_stats(args):
    raw = _load_raw(args.path, args.one_based)
    emit(args, data_io.dataset_summary(raw))


# --------------------------------------------------------------------------
# parser

def make_parser():
    # global flags are accepted before or after the subcommand; SUPPRESS keeps
    # a subparser from overwriting a value given earlier
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--tol", type=float, default=argparse.SUPPRESS,
                        help="solver tolerance (default 1e-9)")
    common.add_argument("--output", default=argparse.SUPPRESS,
                        help="write results here instead of stdout")
    common.add_argument("--format", choices=["json", "csv"], default=argparse.SUPPRESS)
    parser = argparse.ArgumentParser(prog="fyloss", description="Fenchel-Young losses",
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    add = sub.add_parser

    def sub_add(name, **kw):
        return add(name, parents=[common], **kw)

    sub.add_parser = sub_add

    p = sub.add_parser("predict", help="regularized prediction for one score vector")
    p.add_argument("theta", nargs="?", help="scores, comma or space separated")
    p.add_argument("--scores", help="same as the positional scores")
    p.add_argument("--label", type=int, help="true class (hinge loss only)")
    _add_loss_args(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("loss", help="loss, gradient and prediction")
    p.add_argument("theta", nargs="?", help="scores")
    p.add_argument("y", nargs="?", help="target")
    p.add_argument("--scores", help="same as the positional scores")
    p.add_argument("--target", help="same as the positional target")
    _add_loss_args(p)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("margin", help="closed-form, brute-force and empirical margin")
    p.add_argument("--entropy", help='entropy as JSON, e.g. {"family": "tsallis", "alpha": 2}')
    p.add_argument("--family", choices=[f.value for f in Family], default="tsallis")
    p.add_argument("--param", type=float, default=1.5)
    p.add_argument("--dim", "--d", dest="d", type=int, default=3)
    p.add_argument("--grid", type=int, default=100_000)
    p.add_argument("--trials", type=int, default=20)
    p.set_defaults(func=cmd_margin)

    p = sub.add_parser("train", help="fit a linear model, tuning alpha and lambda")
    p.add_argument("data", help="multi-label text file (or RawDataset JSON)")
    p.add_argument("--one-based", action="store_true")
    p.add_argument("--lam", type=float, nargs="+", default=[1.0])
    p.add_argument("--split", type=float, nargs=3, default=[0.6, 0.2, 0.2])
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--model-out", help="save the selected model as JSON")
    _add_loss_args(p, multi_alpha=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="mean JS divergence and squared error of a saved model")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--one-based", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time bisection, Brent and projected gradient")
    p.add_argument("--dims", type=int, nargs="+", default=list(bench.DEFAULT_DIMS))
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--budget", type=float, help="wall-clock budget in seconds")
    p.add_argument("--summary", action="store_true", help="median and 99%% interval per solver")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="write a synthetic label-proportion dataset")
    p.add_argument("--n", type=int, default=1400)
    p.add_argument("--p", type=int, default=50)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--doc-length", type=float, default=50.0)
    p.add_argument("--labels-mean", type=float, default=1.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="binary prediction, entropy and loss curves")
    p.add_argument("--family", choices=[f.value for f in Family], default="tsallis")
    p.add_argument("--params", type=float, nargs="+", default=[1.0, 1.5, 2.0])
    p.add_argument("--tmin", type=float, default=-3.0)
    p.add_argument("--tmax", type=float, default=3.0)
    p.add_argument("--num", type=int, default=601)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("data", help="dataset utilities")
    dsub = p.add_subparsers(dest="data_command", required=True)
    q = dsub.add_parser("stats", help="n, p, d and average labels per sample",
                        parents=[common])
    q.add_argument("path")
    q.add_argument("--one-based", action="store_true")
    q.set_defaults(func=cmd_data_stats)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    args.format_given = hasattr(args, "format")
    for name, value in GLOBAL_DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, value)
    try:
        args.func(args)
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (FYError, UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
