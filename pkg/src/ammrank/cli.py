"""``ammrank`` command line: gen, featurize, train, predict, evaluate, cv."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import benchmarks as bench
from .amm_model import TrainConfig
from .core import (RankedDataset, format_ranking, parse_ranked_dataset, read_feature_rows,
                   serialize_ranked_dataset)
from .data_pipeline import (SyntheticConfig, build_dataset, generate_synthetic, read_demographics,
                            read_events, write_demographics, write_events)
from .metrics import evaluate

NU_FLAGS = {"constant": "constant", "inverse-rank": "inverse_rank"}


class CliError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _write_manifest(out: Path, command: str, args: argparse.Namespace, seconds: float,
                    inputs: dict, outputs: dict, config: dict | None = None,
                    extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "algorithm": getattr(args, "algo", None),
        "seed": args.seed,
        "config": config or {},
        "inputs": {k: str(v) for k, v in inputs.items() if v is not None},
        "outputs": {k: str(v) for k, v in outputs.items()},
        "seconds": round(seconds, 3),
        "argv": sys.argv[1:],
    }
    if extra:
        manifest.update(extra)
    path = Path(str(out) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_dataset(path) -> RankedDataset:
    with open(path) as fh:
        return parse_ranked_dataset(fh)


def _train_config(args) -> TrainConfig:
    return TrainConfig(lam=args.lam, epochs=args.epochs, seed=args.seed,
                       max_weights_per_class=args.max_weights, prune_period=args.prune_period,
                       prune_threshold=args.prune_threshold, nu_mode=NU_FLAGS[args.nu],
                       l2_normalize=not args.no_normalize)


def _ib_pool(args) -> bench.IbPool:
    if not args.train:
        raise CliError("--algo ib-mal needs --train <dataset>")
    cfg = _train_config(args)
    return bench.fit("ib-mal", _load_dataset(args.train), cfg, k=args.k,
                     subsample=args.subsample)


def _load_model(args):
    if args.model:
        with open(args.model) as fh:
            return bench.load(fh)
    if args.algo == "ib-mal":
        return _ib_pool(args)
    raise CliError("need --model, or --algo ib-mal with --train")


def _check_dims(model, L: int | None, d: int) -> None:
    if L is not None and model.L != L:
        raise CliError(f"label count mismatch: model L={model.L}, data L={L}")
    model_d = getattr(model, "d", None)
    if model_d is None and isinstance(model, bench.IbPool):
        model_d = model.pool.X.shape[1]
    if model_d is not None and model_d != d:
        raise CliError(f"dimension mismatch: model d={model_d}, data d={d}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> None:
    start = time.perf_counter()
    cfg = SyntheticConfig(n_users=args.users, L=args.L, alpha=args.alpha, horizon=args.horizon,
                          n_prototypes=args.prototypes, noise=args.noise, seed=args.seed)
    log, demographics = generate_synthetic(cfg)
    out = Path(args.out)
    events, demo = Path(f"{out}.events.tsv"), Path(f"{out}.demographics.tsv")
    with open(events, "w") as fh:
        write_events(log, fh)
    with open(demo, "w") as fh:
        write_demographics(demographics, fh)
    _write_manifest(out, "gen", args, time.perf_counter() - start, {},
                    {"events": events, "demographics": demo}, cfg.as_dict(),
                    {"n_users": cfg.n_users, "n_events": len(log)})
    print(f"users={cfg.n_users} events={len(log)} -> {events}, {demo}")


def cmd_featurize(args) -> None:
    if args.t_features >= args.t_labels:
        raise CliError(f"--t-features ({args.t_features}) must be < --t-labels ({args.t_labels})")
    start = time.perf_counter()
    with open(args.events) as fh:
        log = read_events(fh, args.L)
    with open(args.demographics) as fh:
        demographics = read_demographics(fh)
    users, ds = build_dataset(log, demographics, args.t_features, args.t_labels,
                              include_adv=args.adv, alpha=args.alpha,
                              min_categories=args.min_categories)
    with open(args.out, "w") as fh:
        serialize_ranked_dataset(ds, fh)
    config = {"t_features": args.t_features, "t_labels": args.t_labels, "adv": args.adv,
              "alpha": args.alpha, "min_categories": args.min_categories, "L": ds.L}
    _write_manifest(Path(args.out), "featurize", args, time.perf_counter() - start,
                    {"events": args.events, "demographics": args.demographics},
                    {"dataset": args.out}, config,
                    {"d": ds.d, "n_retained": len(ds), "users": [int(u) for u in users]})
    print(f"L={ds.L} d={ds.d} retained={len(ds)} -> {args.out}")


def cmd_train(args) -> None:
    cfg = _train_config(args)
    train = _load_dataset(args.data)
    start = time.perf_counter()
    model = bench.fit(args.algo, train, cfg)
    seconds = time.perf_counter() - start
    with open(args.out, "w") as fh:
        bench.save(model, fh)
    extra = {"train_seconds": round(seconds, 3)}
    if hasattr(model, "counts"):
        extra["weights_per_class"] = [int(c) for c in model.counts]
    _write_manifest(Path(args.out), "train", args, seconds, {"data": args.data},
                    {"model": args.out}, cfg.as_dict(), extra)
    print(f"trained {args.algo} on {len(train)} instances in {seconds:.2f}s -> {args.out}")


def cmd_predict(args) -> None:
    start = time.perf_counter()
    model = _load_model(args)
    with open(args.data) as fh:
        X, L, d = read_feature_rows(fh)
    _check_dims(model, L, d)
    preds = bench.predict(model, X)
    text = "".join(format_ranking(r) + "\n" for r in preds.tolist())
    if args.out:
        Path(args.out).write_text(text)
        _write_manifest(Path(args.out), "predict", args, time.perf_counter() - start,
                        {"model": args.model, "train": args.train, "data": args.data},
                        {"predictions": args.out}, {"k": args.k, "subsample": args.subsample})
    else:
        sys.stdout.write(text)


def _read_predictions(path, L: int) -> list[list[int]]:
    preds = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                preds.append([int(a) for a in line.split(",")])
            except ValueError:
                raise CliError(f"{path}:{lineno}: bad ranking {line.strip()!r}") from None
            if sorted(preds[-1]) != list(range(1, L + 1)):
                raise CliError(f"{path}:{lineno}: not a full ranking of 1..{L}")
    return preds


def cmd_evaluate(args) -> None:
    start = time.perf_counter()
    test = _load_dataset(args.data)
    if args.predictions:
        preds = _read_predictions(args.predictions, test.L)
        if len(preds) != len(test):
            raise CliError(f"{len(preds)} predictions for {len(test)} test instances")
    else:
        model = _load_model(args)
        _check_dims(model, test.L, test.d)
        preds = bench.predict(model, test.X).tolist()
    report = evaluate(preds, test.rankings, test.L, args.topk_max)
    out = Path(args.out)
    txt, csv = Path(f"{out}.txt"), Path(f"{out}.csv")
    with open(txt, "w") as fh:
        report.write_text(fh)
    with open(csv, "w") as fh:
        report.write_csv(fh)
    _write_manifest(out, "evaluate", args, time.perf_counter() - start,
                    {"model": args.model, "predictions": args.predictions, "train": args.train,
                     "data": args.data}, {"report": txt, "curve": csv},
                    {"topk_max": report.k_max})
    print(f"dis_error={report.dis_error:.6f} n_test={report.n_test} -> {txt}, {csv}")


def cmd_cv(args) -> None:
    start = time.perf_counter()
    ds = _load_dataset(args.data)
    if args.folds < 2:
        raise CliError("--folds must be at least 2")
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    cfg = _train_config(args)
    summary = bench.cross_validate(ds, algos, cfg, folds=args.folds,
                                   lambda_grid=args.lambda_grid, k=args.k,
                                   subsample=args.subsample, k_max=args.topk_max,
                                   jobs=args.jobs)
    out = Path(args.out)
    csv, txt = Path(f"{out}.csv"), Path(f"{out}.txt")
    with open(csv, "w") as fh:
        summary.write_csv(fh)
    with open(txt, "w") as fh:
        summary.write_table(fh)
    folds = [{"algo": f.algo, "fold": f.fold, "lambda": f.lam,
              "dis_error": f.report.dis_error, "seconds": round(f.seconds, 3)}
             for f in summary.folds]
    _write_manifest(out, "cv", args, time.perf_counter() - start, {"data": args.data},
                    {"table": txt, "csv": csv},
                    dict(cfg.as_dict(), folds=args.folds, algos=algos,
                         lambda_grid=args.lambda_grid), {"folds": folds})
    summary.write_table(sys.stdout)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=float, default=1e-5,
                   help="regularization strength (default 1e-5)")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--nu", choices=sorted(NU_FLAGS), default="constant",
                   help="rank importance: constant 1 or 1/position")
    p.add_argument("--max-weights", type=int, default=20, help="weights per class cap")
    p.add_argument("--prune-period", type=int, default=None,
                   help="SGD steps between prunes (default 10*d, 0 disables)")
    p.add_argument("--prune-threshold", type=float, default=1e-8)
    p.add_argument("--no-normalize", action="store_true",
                   help="do not L2-normalize feature vectors")


def _add_ib_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train", help="training dataset (ib-mal neighbour pool)")
    p.add_argument("--k", type=int, default=10, help="ib-mal neighbours")
    p.add_argument("--subsample", type=int, default=100_000, help="ib-mal pool size")


def build_parser() -> argparse.ArgumentParser:
    # --seed is accepted before or after the subcommand; SUPPRESS keeps the
    # subcommand default from overwriting a value given up front
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="random seed (default 0)")

    parser = argparse.ArgumentParser(prog="ammrank", description=__doc__)
    parser.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic event corpus")
    p.add_argument("--users", type=int, default=10_000)
    p.add_argument("--L", type=int, default=10, help="number of categories")
    p.add_argument("--alpha", type=float, default=0.98)
    p.add_argument("--horizon", type=int, default=120)
    p.add_argument("--prototypes", type=int, default=4)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--out", default="synthetic", help="output prefix")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("featurize", parents=[common], help="event log -> ranked dataset")
    p.add_argument("--events", required=True)
    p.add_argument("--demographics", required=True)
    p.add_argument("--t-features", type=int, required=True)
    p.add_argument("--t-labels", type=int, required=True)
    p.add_argument("--L", type=int, default=None, help="number of categories (default: max seen)")
    p.add_argument("--adv", action="store_true", help="include ad-view features")
    p.add_argument("--min-categories", type=int, default=3)
    p.add_argument("--alpha", type=float, default=0.98)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--data", required=True)
    p.add_argument("--algo", choices=bench.TRAINABLE, required=True)
    _add_train_flags(p)
    p.add_argument("--out", required=True, help="model file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="predict rankings")
    p.add_argument("--data", required=True, help="feature file (labels optional)")
    p.add_argument("--model")
    p.add_argument("--algo", choices=("ib-mal",))
    _add_ib_flags(p)
    _add_train_flags(p)
    p.add_argument("--out", help="predictions file (default stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="score predictions on a test set")
    p.add_argument("--data", required=True, help="test dataset")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model")
    src.add_argument("--predictions")
    src.add_argument("--algo", choices=("ib-mal",))
    _add_ib_flags(p)
    _add_train_flags(p)
    p.add_argument("--topk-max", type=int, default=10)
    p.add_argument("--out", required=True, help="report prefix (.txt and .csv)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cv", parents=[common], help="k-fold comparison of algorithms")
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--algos", default=",".join(bench.ALGORITHMS))
    p.add_argument("--lambda-grid", type=_floats, default=None,
                   help="comma-separated lambdas tuned on an inner held-out slice")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--topk-max", type=int, default=10)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--subsample", type=int, default=100_000)
    _add_train_flags(p)
    p.add_argument("--out", default="cv", help="output prefix (.csv and .txt)")
    p.set_defaults(func=cmd_cv)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (CliError, ValueError, OSError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"ammrank {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
