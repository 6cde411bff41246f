"""Command-line entry point: ``qsmih <command> [options]``.

Option precedence, lowest first: built-in defaults, ``--manifest`` (a previous
run's manifest), ``--config`` (``key = value`` lines), explicit flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .benchmarks import ablation_ordering, blob_benchmark, run_ablation
from .data import DatasetFormatError, Standardizer, apply_standardizer, fit_standardizer, load_dataset, save_dataset
from .encoder import CheckpointFormatError, load_encoder, save_encoder
from .evaluation import evaluate_codes, write_report
from .gradcheck import SUITES, run_gradcheck
from .hamming import CodeFormatError, binarize, distances, knn_query, load_codes, radius_query, save_codes
from .trainer import DegenerateLabelsError, TrainConfig, encode_dataset, train

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2
MANIFEST_NAME = "manifest.json"
STANDARDIZER_NAME = "standardizer.json"
ENCODER_NAME = "encoder.qsme"
LOG_NAME = "log.csv"

log = logging.getLogger("qsmih")


class UsageError(Exception):
    pass


def _int_list(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    parts = [p for p in str(text).replace(",", " ").split() if p]
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# ----------------------------------------------------------------- parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="file of 'key = value' lines (flags override it)")
    p.add_argument("--manifest", help="re-run with the options recorded in this manifest")
    p.add_argument("--threads", type=int, help="cap BLAS/OpenMP threads (env QSMI_THREADS)")
    p.add_argument("-v", "--verbose", action="store_true")


def _train_options(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    p.add_argument("--bits", type=int, default=d.code_length)
    p.add_argument("--hidden", type=_int_list, default=d.hidden, help="hidden layer widths, e.g. 64,32")
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--alpha", type=float, default=d.alpha)
    p.add_argument("--beta", type=float, default=d.beta)
    p.add_argument("--sigma2", type=float, default=d.sigma2)
    p.add_argument("--measure", choices=("cosine", "gaussian-normalized"), default=d.measure)
    p.add_argument("--unclamped", action="store_true", help="optimise plain Gaussian QMI instead")
    p.add_argument("--unsup-clusters", type=int, default=d.unsup_clusters)
    p.add_argument("--hash-reduction", choices=("mean", "sum"), default=d.hash_reduction)
    p.add_argument("--seed", type=int, default=d.seed)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsmih", description="Supervised binary hashing toolkit.")
    parser.add_argument("--version", action="version", version=f"qsmih {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an encoder")
    _common(p)
    p.add_argument("--data", help="training dataset (.csv or packed)")
    p.add_argument("--out", help="output directory")
    _train_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="encode a dataset into a binary code file")
    _common(p)
    p.add_argument("--model", help="run directory or encoder checkpoint")
    p.add_argument("--data", help="dataset to encode")
    p.add_argument("--out", help="output .qsmc file")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("index", help="binarise real-valued codes, or describe a code file")
    _common(p)
    p.add_argument("--codes", help="dataset file whose feature columns are real codes")
    p.add_argument("--out", help="output .qsmc file")
    p.add_argument("--info", help="print a summary of this .qsmc file")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", help="k-NN or radius search in a code file")
    _common(p)
    p.add_argument("--index", help="database .qsmc file")
    p.add_argument("--queries", help="query .qsmc file")
    p.add_argument("--model", help="encode --data with this model to get the queries")
    p.add_argument("--data", help="query features (with --model)")
    p.add_argument("--query-id", type=int, help="only run the query with this id")
    p.add_argument("--knn", type=int)
    p.add_argument("--radius", type=int)
    p.add_argument("--out", help="also write the results here")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="retrieval metrics for labelled code files")
    _common(p)
    p.add_argument("--db", help="database .qsmc file")
    p.add_argument("--queries", help="query .qsmc file")
    p.add_argument("--ks", type=_int_list, default=(1, 10, 100))
    p.add_argument("--out", help="report CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="compare the three loss variants")
    _common(p)
    p.add_argument("--data", help="training dataset")
    p.add_argument("--queries", help="query dataset")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", help="report CSV")
    _train_options(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    _common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--corrupt", choices=SUITES, help=argparse.SUPPRESS)
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="write a synthetic Gaussian-blob benchmark")
    _common(p)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--train-per-class", type=int, default=200)
    p.add_argument("--query-per-class", type=int, default=100)
    p.add_argument("--min-distance", type=float, default=6.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory (train.csv, query.csv)")
    p.set_defaults(func=cmd_synth)
    return parser


def _subparser(parser, name) -> argparse.ArgumentParser:
    action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return action.choices[name]


def read_config(path) -> list[tuple[str, str]]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = []
    if not Path(path).is_file():
        raise UsageError(f"config file not found: {path}")
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}: line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out.append((key.replace("_", "-"), value))
    return out


def _config_tokens(sub: argparse.ArgumentParser, pairs) -> list[str]:
    flags = {o: a for a in sub._actions for o in a.option_strings if o.startswith("--")}
    tokens = []
    for key, value in pairs:
        flag = f"--{key}"
        if flag not in flags or key in ("config", "manifest"):
            raise UsageError(f"config: unknown key {key!r}")
        if isinstance(flags[flag], argparse._StoreTrueAction):
            if value.lower() in ("1", "true", "yes", "on"):
                tokens.append(flag)
            elif value.lower() not in ("0", "false", "no", "off"):
                raise UsageError(f"config: {key} expects a boolean, got {value!r}")
        else:
            tokens += [flag, value]
    return tokens


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    first = parser.parse_args(argv)
    sub = _subparser(parser, first.command)
    if first.manifest:
        man = read_manifest(first.manifest)
        if man.get("command") != first.command:
            raise UsageError(f"{first.manifest}: manifest is for {man.get('command')!r}, not {first.command!r}")
        known = {a.dest for a in sub._actions}
        sub.set_defaults(**{k: v for k, v in man["args"].items() if k in known})
    if first.config:
        # config values go in front so that explicit flags (parsed later) win
        tokens = _config_tokens(sub, read_config(first.config))
        idx = argv.index(first.command)
        argv = [*argv[:idx + 1], *tokens, *argv[idx + 1:]]
    return parser.parse_args(argv)


def _require(args, *names) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) in (None, "")]
    if missing:
        raise UsageError(f"{args.command}: missing required option(s) {', '.join(missing)}")


# ---------------------------------------------------------------- manifests


def _jsonable(v):
    if isinstance(v, tuple):
        return list(v)
    if isinstance(v, Path):
        return str(v)
    return v


def read_manifest(path) -> dict:
    try:
        with open(path) as fh:
            man = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}: not a valid manifest ({e})") from None
    if not isinstance(man, dict) or "args" not in man or "command" not in man:
        raise UsageError(f"{path}: not a valid manifest")
    return man


def write_manifest(path, args, started: str, outputs, config: TrainConfig | None = None, **extra) -> None:
    skip = {"func", "config", "manifest", "verbose", "threads", "command"}
    man = {
        "tool": "qsmih",
        "version": __version__,
        "command": args.command,
        "args": {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in skip},
        "threads": args.threads,
        "outputs": [str(p) for p in outputs],
        "started_at": started,
        "finished_at": _now(),
    }
    if config is not None:
        man["config"] = config.to_dict()
        man["seed"] = config.seed
    man.update(extra)
    Path(path).write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _config_from(args) -> TrainConfig:
    return TrainConfig(
        code_length=args.bits,
        hidden=_int_list(args.hidden),
        lr=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        alpha=args.alpha,
        beta=args.beta,
        sigma2=args.sigma2,
        measure=args.measure,
        clamped=not args.unclamped,
        unsup_clusters=args.unsup_clusters,
        seed=args.seed,
        hash_reduction=args.hash_reduction,
    )


# ----------------------------------------------------------------- commands


def cmd_train(args, started) -> int:
    _require(args, "data", "out")
    cfg = _config_from(args)
    data = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    st = fit_standardizer(data)
    enc, tlog = train(apply_standardizer(st, data), cfg)
    save_encoder(enc, out / ENCODER_NAME)
    (out / STANDARDIZER_NAME).write_text(st.to_json() + "\n")
    tlog.write_csv(out / LOG_NAME)
    last = tlog.epochs[-1] if tlog.epochs else None
    if last is not None:
        print(f"trained {cfg.variant} {enc.layer_sizes}: final loss {last.loss:.6f}, qsmi {last.qsmi:.6f}")
    write_manifest(out / MANIFEST_NAME, args, started,
                   [out / ENCODER_NAME, out / STANDARDIZER_NAME, out / LOG_NAME], cfg)
    return EXIT_OK


def _load_model(path):
    path = Path(path)
    ckpt = path / ENCODER_NAME if path.is_dir() else path
    if not ckpt.exists():
        raise FileNotFoundError(f"encoder checkpoint not found: {ckpt}")
    enc = load_encoder(ckpt)
    st_path = ckpt.parent / STANDARDIZER_NAME
    st = Standardizer.from_json(st_path.read_text()) if st_path.exists() else None
    return enc, st


def _encode(model, data_path):
    enc, st = _load_model(model)
    data = load_dataset(data_path)
    if st is not None:
        data = apply_standardizer(st, data)
    return binarize(encode_dataset(enc, data), data.ids, data.labels)


def _sidecar(out) -> Path:
    return Path(str(out) + ".manifest.json")


def cmd_encode(args, started) -> int:
    _require(args, "model", "data", "out")
    codes = _encode(args.model, args.data)
    save_codes(codes, args.out)
    print(f"wrote {len(codes)} codes of {codes.n_bits} bits to {args.out}")
    write_manifest(_sidecar(args.out), args, started, [args.out])
    return EXIT_OK


def cmd_index(args, started) -> int:
    if args.info:
        cs = load_codes(args.info)
        print(f"codes: {len(cs)}")
        print(f"bits: {cs.n_bits}")
        print(f"labelled: {'yes' if cs.labels is not None else 'no'}")
        if not args.codes:
            return EXIT_OK
    _require(args, "codes", "out")
    data = load_dataset(args.codes)
    cs = binarize(data.features, data.ids, data.labels)
    save_codes(cs, args.out)
    print(f"indexed {len(cs)} codes of {cs.n_bits} bits into {args.out}")
    write_manifest(_sidecar(args.out), args, started, [args.out])
    return EXIT_OK


def cmd_query(args, started) -> int:
    _require(args, "index")
    if (args.knn is None) == (args.radius is None):
        raise UsageError("query: give exactly one of --knn or --radius")
    if (args.knn is not None and args.knn < 1) or (args.radius is not None and args.radius < 0):
        raise UsageError("query: --knn must be >= 1 and --radius >= 0")
    if bool(args.queries) == bool(args.model or args.data):
        raise UsageError("query: give either --queries or --model with --data")
    index = load_codes(args.index)
    if args.queries:
        queries = load_codes(args.queries)
    else:
        _require(args, "model", "data")
        queries = _encode(args.model, args.data)
    if queries.n_bits != index.n_bits:
        raise UsageError(f"query codes have {queries.n_bits} bits, index has {index.n_bits}")
    rows = range(len(queries))
    if args.query_id is not None:
        hit = np.flatnonzero(queries.ids == args.query_id)
        if hit.size == 0:
            raise UsageError(f"query: no query with id {args.query_id}")
        rows = hit[:1]
    lines = []
    for r in rows:
        if len(rows) > 1:
            lines.append(f"# query {int(queries.ids[r])}")
        code = queries.codes[r]
        if args.knn is not None:
            lines += [f"{i},{d}" for i, d in knn_query(index, code, args.knn)]
        else:
            found = radius_query(index, code, args.radius)
            dist = dict(zip(index.ids.tolist(), distances(index, code).tolist()))
            lines += [f"{i},{dist[i]}" for i in found]
    text = "\n".join(lines) + ("\n" if lines else "")
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
        write_manifest(_sidecar(args.out), args, started, [args.out])
    return EXIT_OK


def cmd_eval(args, started) -> int:
    _require(args, "db", "queries", "out")
    db, q = load_codes(args.db), load_codes(args.queries)
    if db.labels is None or q.labels is None:
        raise UsageError("eval: both code files must carry labels")
    if db.n_bits != q.n_bits:
        raise UsageError(f"eval: database has {db.n_bits} bits, queries have {q.n_bits}")
    rows = evaluate_codes(db, q, _int_list(args.ks))
    write_report(rows, args.out)
    for r in rows:
        print(f"{r.metric}: {r.value:.4f} (sd {r.stddev:.4f}, {r.num_queries} queries)")
    write_manifest(_sidecar(args.out), args, started, [args.out])
    return EXIT_OK


def cmd_ablate(args, started) -> int:
    _require(args, "data", "queries", "out")
    if args.repeats < 1:
        raise UsageError("ablate: --repeats must be >= 1")
    cfg = _config_from(args)
    rows = run_ablation(load_dataset(args.data), load_dataset(args.queries), cfg, args.repeats)
    ordering = ablation_ordering(rows)
    with open(args.out, "w") as fh:
        fh.write("variant,map_mean,map_std,prh2_mean,prh2_std,repeats\n")
        for r in rows:
            fh.write(f"{r.variant},{r.map_mean!r},{r.map_std!r},{r.prh2_mean!r},{r.prh2_std!r},{r.repeats}\n")
        fh.write(f"# ordering: {ordering}\n")
    for r in rows:
        print(f"{r.variant}: mAP {r.map_mean:.4f} +- {r.map_std:.4f}, Pr@H2 {r.prh2_mean:.4f} +- {r.prh2_std:.4f}")
    print(f"ordering: {ordering}")
    write_manifest(_sidecar(args.out), args, started, [args.out], cfg, ordering=ordering)
    return EXIT_OK


def cmd_gradcheck(args, started) -> int:
    report = run_gradcheck(seed=args.seed, instances=args.instances, corrupt=args.corrupt)
    text = "\n".join(report.lines()) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
        write_manifest(_sidecar(args.out), args, started, [args.out])
    if not report.passed:
        failed = [s.name for s in report.suites if not s.passed]
        print(f"gradcheck failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def cmd_synth(args, started) -> int:
    _require(args, "out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tr, q = blob_benchmark(args.classes, args.dim, args.train_per_class, args.query_per_class,
                           args.min_distance, args.seed)
    save_dataset(tr, out / "train.csv")
    save_dataset(q, out / "query.csv")
    print(f"wrote {len(tr)} train and {len(q)} query samples to {out}")
    write_manifest(out / MANIFEST_NAME, args, started, [out / "train.csv", out / "query.csv"])
    return EXIT_OK


# --------------------------------------------------------------------- main


def _threads(args) -> int | None:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("QSMI_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"QSMI_THREADS must be an integer, got {env!r}") from None
    return None


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as e:  # argparse usage errors and --help/--version
        return int(e.code or 0)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    started = _now()
    try:
        args.threads = _threads(args)
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        with threadpool_limits(limits=args.threads):
            return args.func(args, started)
    except (UsageError, FileNotFoundError, IsADirectoryError, DatasetFormatError, CodeFormatError,
            CheckpointFormatError, DegenerateLabelsError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"error: invalid input: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # numeric failures and bugs
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
