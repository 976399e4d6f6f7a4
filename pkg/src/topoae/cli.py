"""``topoae`` command line: generate data, train, evaluate, run stability sweeps, tabulate.

Every command writes into ``--out`` and finishes with ``manifest.json``, the
SHA-256 of each file it wrote. The resolved options go to ``run_config.json``,
which can be fed back through ``--config`` to repeat a run exactly.

Exit codes: 0 success, 2 bad configuration, 3 I/O or parse failure,
4 invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from topoae import checkpoint
from topoae.datasets import (
    gaussian_cloud,
    generate_spheres,
    load_idx,
    read_csv,
    split,
    write_csv,
    write_provenance,
)
from topoae.exceptions import ConfigError, InvariantViolation, ParseError, ValidationError
from topoae.metrics import DEFAULT_K, DEFAULT_SIGMAS, MetricsReport, evaluate_embedding
from topoae.nn import TrainConfig, encode, init_model, reconstruct, train
from topoae.persistence import PointCloud
from topoae.stability import subsample_bottleneck_trials, hausdorff_convergence, latent_topo_distances

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INVARIANT = 0, 2, 3, 4

# Options that describe where a run writes, not what it computes.
_NOT_RECORDED = {"config", "out", "func"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _floats(text):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


class _Run:
    """Collects output files so the manifest lists exactly what a command wrote."""

    def __init__(self, out, args):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []
        self.config = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_RECORDED}

    def path(self, name):
        self.files.append(name)
        return self.out / name

    def write_json(self, name, obj):
        self.path(name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def write_rows(self, name, rows, columns):
        with open(self.path(name), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell(row[c]) for c in columns])

    def finish(self):
        self.write_json("run_config.json", self.config)
        digests = {name: hashlib.sha256((self.out / name).read_bytes()).hexdigest() for name in sorted(self.files)}
        (self.out / "manifest.json").write_text(json.dumps(digests, indent=2, sort_keys=True) + "\n")


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def _load_cloud(path, labels=None) -> PointCloud:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such data file: {p}")
    if p.suffix.lower() == ".csv":
        return read_csv(p)
    return load_idx(p, labels)


def cmd_generate(args):
    run = _Run(args.out, args)
    if args.kind == "spheres":
        cloud = generate_spheres(args.n_per_inner, seed=args.seed, d=args.dim, r=args.radius)
        prov = {"kind": "spheres", "n_per_inner": args.n_per_inner, "d": args.dim, "r": args.radius}
    else:
        cloud = gaussian_cloud(args.n, args.dim, seed=args.seed)
        prov = {"kind": "gaussian", "n": args.n, "d": args.dim}
    prov["seed"] = args.seed
    write_csv(run.path("data.csv"), cloud)
    write_provenance(run.path("provenance.json"), prov)
    run.finish()


def _architecture(args, dim):
    if args.arch:
        sizes = args.arch
    else:
        sizes = [dim, *args.hidden, args.latent_dim, *reversed(args.hidden), dim]
    if sizes[0] != dim or sizes[-1] != dim:
        raise ConfigError(f"architecture {sizes} does not match data dimension {dim}")
    return sizes


def cmd_train(args):
    cloud = _load_cloud(args.data, args.labels)
    config = TrainConfig(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        lam=args.lam,
        max_epochs=args.max_epochs,
        patience=args.patience,
        weight_decay=args.weight_decay,
        seed=args.seed,
    )
    parts = split(cloud, tuple(args.split), seed=args.seed)
    if parts.validation is None:
        raise ConfigError("training needs a non-empty validation split")
    run = _Run(args.out, args)
    model = init_model(
        _architecture(args, cloud.dim), seed=args.seed, batch_norm=not args.no_batch_norm,
        output_activation=args.output_activation,
    )
    best, history = train(model, parts, config)
    checkpoint.save(run.path("model.ckpt"), best, config.to_dict())
    columns = ["epoch", "train_loss", "train_recon", "train_topo", "val_loss", "val_recon", "val_topo"]
    run.write_rows("history.csv", history, columns)
    for name, part in (("train", parts.train), ("validation", parts.validation), ("test", parts.test)):
        if part is not None:
            write_csv(run.path(f"{name}.csv"), part)
    run.write_json("split.json", parts.provenance)
    run.finish()


def _load_model(path):
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such checkpoint: {p}")
    return checkpoint.load(p)[0]


def cmd_evaluate(args):
    model = _load_model(args.checkpoint)
    cloud = _load_cloud(args.data, args.labels)
    if cloud.dim != model.layer_sizes[0]:
        raise ValidationError(f"data has {cloud.dim} columns but the model expects {model.layer_sizes[0]}")
    run = _Run(args.out, args)
    latent = encode(model, cloud)
    report = evaluate_embedding(cloud, latent, reconstruct(model, cloud), sigmas=args.sigmas, k=args.k)
    report.save(run.path("metrics.json"))
    write_csv(run.path("embedding.csv"), PointCloud(latent, cloud.labels))
    run.finish()


def cmd_stability_hausdorff(args):
    if any(not 2 <= m <= args.n for m in args.m_values):
        raise ConfigError(f"every m must lie in [2, {args.n}]")
    run = _Run(args.out, args)
    rows, summary = [], []
    for d in args.dims:
        cloud = gaussian_cloud(args.n, d, seed=args.seed + d)
        for r in hausdorff_convergence(cloud, args.m_values, args.trials, seed=args.seed):
            r["d"] = d
            r["violation"] = int(r["d_b"] > 2 * r["d_H"] + args.tol)
            rows.append(r)
        for m in args.m_values:
            block = [r for r in rows if r["d"] == d and r["m"] == m]
            dh = np.array([r["d_H"] for r in block])
            summary.append({
                "d": d, "n": args.n, "m": m, "mean_d_H": float(dh.mean()), "std_d_H": float(dh.std()),
                "bound": block[0]["bound"], "violations": sum(r["violation"] for r in block),
            })
    run.write_rows("hausdorff.csv", rows, ["d", "n", "m", "trial", "d_H", "d_b", "bound", "violation"])
    run.write_rows("summary.csv", summary, ["d", "n", "m", "mean_d_H", "std_d_H", "bound", "violations"])
    run.finish()
    if args.strict and any(r["violation"] for r in rows):
        raise InvariantViolation("bottleneck distance exceeded twice the Hausdorff distance")


def cmd_stability_bottleneck(args):
    cloud = _load_cloud(args.data, args.labels) if args.data else gaussian_cloud(args.n, args.dim, seed=args.seed)
    run = _Run(args.out, args)
    trials = subsample_bottleneck_trials(cloud, args.m, args.trials, seed=args.seed, tol=args.tol)
    rows = [{"n": t.n, "m": t.m, "trial": t.trial, "d_H": t.hausdorff, "d_b": t.bottleneck,
             "violation": int(t.violates(args.tol))} for t in trials]
    run.write_rows("trials.csv", rows, ["n", "m", "trial", "d_H", "d_b", "violation"])
    run.finish()
    if args.strict and any(r["violation"] for r in rows):
        raise InvariantViolation("bottleneck distance exceeded twice the Hausdorff distance")


def cmd_stability_latent(args):
    model = _load_model(args.checkpoint)
    cloud = _load_cloud(args.data, args.labels)
    run = _Run(args.out, args)
    res = latent_topo_distances(cloud, encode(model, cloud), args.subsample_size, args.trials, args.seed)
    rows = [{"distance": k, "mean": mean, "std": std} for k, (mean, std) in res.items()]
    run.write_rows("latent_distances.csv", rows, ["distance", "mean", "std"])
    run.finish()


def cmd_table(args):
    names = args.names or [Path(p).parent.name for p in args.reports]
    if len(names) != len(args.reports):
        raise ConfigError("--names must match the number of reports")
    run = _Run(args.out, args)
    rows = []
    for name, path in zip(names, args.reports):
        row = {"method": name, **MetricsReport.load(path).flat()}
        rows.append(row)
    columns = ["method"] + sorted({c for r in rows for c in r} - {"method"})
    run.write_rows("table.csv", [{c: r.get(c) for c in columns} for r in rows], columns)
    run.finish()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="topoae", description=__doc__.split("\n\n")[0])
    parser.add_argument("--config", help="JSON file of option defaults; explicit flags override it")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=0):
        p.add_argument("--config", help=argparse.SUPPRESS)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=seed)

    def data_args(p, required=True):
        p.add_argument("--data", required=required, help="CSV point cloud or IDX file")
        p.add_argument("--labels", help="IDX label file (IDX data only)")

    gen = sub.add_parser("generate", help="write a synthetic point cloud")
    gen.add_argument("kind", choices=["spheres", "gaussian"])
    common(gen)
    gen.add_argument("--n-per-inner", type=int, default=50)
    gen.add_argument("--radius", type=float, default=5.0)
    gen.add_argument("--n", type=int, default=100)
    gen.add_argument("--dim", type=int, default=None)
    gen.set_defaults(func=cmd_generate)

    tr = sub.add_parser("train", help="train an autoencoder (lam=0) or topological autoencoder (lam>0)")
    common(tr)
    data_args(tr)
    tr.add_argument("--lam", type=float, default=1.0)
    tr.add_argument("--learning-rate", type=float, default=1e-3)
    tr.add_argument("--batch-size", type=int, default=32)
    tr.add_argument("--max-epochs", type=int, default=100)
    tr.add_argument("--patience", type=int, default=10)
    tr.add_argument("--weight-decay", type=float, default=1e-5)
    tr.add_argument("--split", type=_floats, default=[0.765, 0.135, 0.10])
    tr.add_argument("--arch", type=_ints, default=None, help="full layer widths, e.g. 101,32,32,2,32,32,101")
    tr.add_argument("--hidden", type=_ints, default=[32, 32], help="encoder hidden widths when --arch is absent")
    tr.add_argument("--latent-dim", type=int, default=2)
    tr.add_argument("--output-activation", choices=["identity", "tanh"], default="identity")
    tr.add_argument("--no-batch-norm", action="store_true")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("evaluate", help="embed a data set and compute quality measures")
    common(ev)
    ev.add_argument("--checkpoint", required=True)
    data_args(ev)
    ev.add_argument("--k", type=int, default=DEFAULT_K)
    ev.add_argument("--sigmas", type=_floats, default=list(DEFAULT_SIGMAS))
    ev.set_defaults(func=cmd_evaluate)

    st = sub.add_parser("stability", help="subsampling experiments")
    st_sub = st.add_subparsers(dest="experiment", required=True, parser_class=_Parser)

    hd = st_sub.add_parser("hausdorff", help="Hausdorff decay and bound over an m sweep on Gaussian clouds")
    common(hd)
    hd.add_argument("--n", type=int, default=100)
    hd.add_argument("--dims", type=_ints, default=[2, 5, 10])
    hd.add_argument("--m-values", type=_ints, default=list(range(10, 100, 10)))
    hd.add_argument("--trials", type=int, default=50)
    hd.add_argument("--tol", type=float, default=1e-9)
    hd.add_argument("--strict", action="store_true", help="exit 4 on any bound violation")
    hd.set_defaults(func=cmd_stability_hausdorff)

    th = st_sub.add_parser("bottleneck", help="bottleneck distance versus twice the Hausdorff distance")
    common(th)
    data_args(th, required=False)
    th.add_argument("--n", type=int, default=100)
    th.add_argument("--dim", type=int, default=2)
    th.add_argument("--m", type=int, required=True)
    th.add_argument("--trials", type=int, default=100)
    th.add_argument("--tol", type=float, default=1e-9)
    th.add_argument("--strict", action="store_true")
    th.set_defaults(func=cmd_stability_bottleneck)

    lt = st_sub.add_parser("latent", help="diagram distances between data and latent subsamples")
    common(lt)
    lt.add_argument("--checkpoint", required=True)
    data_args(lt)
    lt.add_argument("--subsample-size", type=int, default=500)
    lt.add_argument("--trials", type=int, default=10)
    lt.set_defaults(func=cmd_stability_latent)

    tb = sub.add_parser("table", help="collect metrics.json files into one CSV")
    tb.add_argument("--config", help=argparse.SUPPRESS)
    tb.add_argument("--out", required=True)
    tb.add_argument("reports", nargs="+")
    tb.add_argument("--names", type=lambda s: s.split(","), default=None)
    tb.set_defaults(func=cmd_table)
    return parser


def _find_config(argv):
    for k, a in enumerate(argv):
        if a == "--config" and k + 1 < len(argv):
            return argv[k + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def _subparser_for(parser, argv):
    """The (sub)parser that owns the options of the command named in ``argv``."""
    positionals = [a for k, a in enumerate(argv) if not a.startswith("-") and (k == 0 or argv[k - 1] != "--config")]
    target, names = parser, {}
    for token in positionals:
        subs = [a for a in target._actions if isinstance(a, argparse._SubParsersAction)]
        if not subs or token not in subs[0].choices:
            break
        target = subs[0].choices[token]
        names[subs[0].dest] = token
    return target, names


def _apply_config(parser, argv, path):
    try:
        values = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"config is not valid JSON: {exc.msg}", offset=exc.pos) from None
    if not isinstance(values, dict):
        raise ConfigError("config file must hold a JSON object")
    target, names = _subparser_for(parser, argv)
    # A saved run_config.json also names the command it came from.
    for key in ("command", "experiment", "kind"):
        if key in values and key in names and values.pop(key) != names[key]:
            raise ConfigError(f"config was written for a different {key}")
        values.pop(key, None)
    actions = {a.dest: a for a in target._actions}
    unknown = sorted(set(values) - set(actions))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for dest in values:
        actions[dest].required = False
    target.set_defaults(**values)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        config_path = _find_config(argv)
        if config_path:
            _apply_config(parser, argv, config_path)
        args = parser.parse_args(argv)
        if getattr(args, "dim", 0) is None:
            args.dim = 101 if args.kind == "spheres" else 2
        args.func(args)
    except (ConfigError, ValidationError) as exc:
        print(f"topoae: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, OSError) as exc:
        print(f"topoae: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InvariantViolation as exc:
        print(f"topoae: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
