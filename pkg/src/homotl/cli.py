"""``otl`` command line: gen, zscore, init, run, sweep, report."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path


from . import __version__
from .data import DataError, Dataset, load_dataset, save_dataset, split_target
from .offline import JdaConfig, default_subspace_dim, load_artifacts, offline_stage, save_artifacts
from .plots import KINDS, emit_plot_data, load_plot_data, render_figure
from .runner import BETA_RULES, VARIANTS, RunConfig, aggregate_trials, run_trials
from .synthetic import SyntheticSpec, gen_synthetic
from .transform import import_matrix
from .zscore import zscore_file

log = logging.getLogger("otl")


def _default_seed() -> int:
    try:
        return int(os.environ.get("OTL_SEED", "0"))
    except ValueError:
        raise SystemExit("OTL_SEED must be an integer") from None


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def _coerce(parser: argparse.ArgumentParser, values: dict) -> dict:
    """Convert config-file strings with the types the parser's actions declare."""
    actions = {a.dest: a for a in parser._actions}
    for a in parser._actions:
        for opt in a.option_strings:
            actions.setdefault(opt.lstrip("-").replace("-", "_"), a)
    out = {}
    for key, raw in values.items():
        act = actions.get(key)
        if act is None or act.dest in ("help", "config"):
            raise ValueError(f"unknown config key {key!r}")
        key = act.dest
        if isinstance(act, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            out[key] = raw.lower() in ("1", "true", "yes", "on")
        elif act.nargs in ("+", "*"):
            conv = act.type or str
            out[key] = [conv(v) for v in raw.replace(",", " ").split()]
        else:
            out[key] = (act.type or str)(raw)
    return out


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--artifacts", required=True, help="directory written by 'otl init'")
    p.add_argument("--target", required=True, help="CSV of the labeled online target stream")
    p.add_argument("--source", nargs="+", help="source CSVs (default: paths in the manifest)")
    p.add_argument("--header", action="store_true", help="CSV files start with a header line")
    p.add_argument("--C", dest="C", type=float, default=5.0)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--tw", type=int, default=50, help="rounds between matrix updates")
    p.add_argument("--beta-rule", choices=BETA_RULES, default="horizon")
    p.add_argument("--beta", type=float, help="fixed discount overriding --beta-rule")
    p.add_argument("--tau-rule", choices=("standard", "paper"), default="standard")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--warm-stats", action="store_true",
                   help="include the unlabeled pool in the marginal target mean")
    p.add_argument("--log-weights", action="store_true")
    p.add_argument("--log-mmd", action="store_true")
    p.add_argument("--timings", action="store_true", help="record wall-clock seconds per trial")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otl", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--config", help="file of 'key = value' defaults for the subcommand")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic multi-source task")
    g.add_argument("--out", required=True)
    g.add_argument("--sources", type=int, default=3)
    g.add_argument("--dim", type=int, default=20)
    g.add_argument("--classes", type=int, default=4)
    g.add_argument("--per-class", type=int, default=200)
    g.add_argument("--target-size", type=int)
    g.add_argument("--shift", type=float, default=2.0)
    g.add_argument("--rotation", type=float, default=4.5)
    g.add_argument("--rotation-planes", type=int, default=3)
    g.add_argument("--noise", type=float, default=2.0)
    g.add_argument("--class-sep", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=_default_seed())

    z = sub.add_parser("zscore", help="standardise feature columns of a CSV dataset")
    z.add_argument("input")
    z.add_argument("output")
    z.add_argument("--header", action="store_true")

    i = sub.add_parser("init", help="offline stage: matrices and source classifiers")
    i.add_argument("--source", nargs="+", required=True)
    grp = i.add_mutually_exclusive_group(required=True)
    grp.add_argument("--target-unlabeled", help="CSV of the unlabeled target pool")
    grp.add_argument("--target", help="full target CSV; split into pool and online stream")
    i.add_argument("--unlabeled-fraction", type=float, default=0.3)
    i.add_argument("--header", action="store_true")
    i.add_argument("--num-classes", type=int)
    i.add_argument("--dim", type=int, help="projected dimension (default min(100, m, n-1))")
    i.add_argument("--iters", type=int, default=10)
    i.add_argument("--lambda", dest="lam", type=float, default=1.0)
    i.add_argument("--C", dest="C", type=float, default=5.0)
    i.add_argument("--epochs", type=int, default=1)
    i.add_argument("--import-matrices", help="directory of matrix_<i>.csv files")
    i.add_argument("--seed", type=int, default=_default_seed())
    i.add_argument("--out", required=True)

    r = sub.add_parser("run", help="online stage for one variant")
    _add_run_options(r)
    r.add_argument("--variant", choices=VARIANTS, default="full")
    r.add_argument("--out", help="report JSON path (default: stdout)")

    s = sub.add_parser("sweep", help="re-run the protocol over values of one parameter")
    _add_run_options(s)
    s.add_argument("--param", choices=("C", "mu", "tw", "beta"), required=True)
    s.add_argument("--values", type=float, nargs="+", required=True)
    s.add_argument("--variants", nargs="+", choices=VARIANTS, default=list(VARIANTS))
    s.add_argument("--out", help="sweep JSON path (default: stdout)")

    p = sub.add_parser("report", help="plot data (CSV) and figure from reports")
    p.add_argument("--input", nargs="+", required=True, help="run report or sweep JSON files")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--out", required=True, help="CSV path; the figure goes next to it")
    p.add_argument("--mean", action="store_true", help="average over trials")
    p.add_argument("--figure", help="figure path (default: CSV path with .png)")
    p.add_argument("--no-figure", action="store_true")
    p.add_argument("--title")
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for act in parser._actions:
        if isinstance(act, argparse._SubParsersAction):
            return act.choices[name]
    raise KeyError(name)


def parse_args(argv=None) -> argparse.Namespace:
    argv = sys.argv[1:] if argv is None else [os.fspath(a) if isinstance(a, os.PathLike) else a
                                              for a in argv]
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    parser = build_parser()
    command = next((tok for tok in rest if tok in COMMANDS), None)
    if known.config and command:
        sp = _subparser(parser, command)
        sp.set_defaults(**_coerce(sp, read_config_file(known.config)))
        # required options may now come from the file
        for act in sp._actions:
            if act.required and sp.get_default(act.dest) is not None:
                act.required = False
        for grp in sp._mutually_exclusive_groups:
            if any(sp.get_default(a.dest) is not None for a in grp._group_actions):
                grp.required = False
    return parser.parse_args(argv)


def _write_json(obj, out) -> None:
    text = json.dumps(obj, indent=1, sort_keys=True, ensure_ascii=False) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_gen(args) -> None:
    spec = SyntheticSpec(num_sources=args.sources, dim=args.dim, classes=args.classes,
                         per_class_count=args.per_class, shift=args.shift,
                         rotation=args.rotation, noise_std=args.noise, seed=args.seed,
                         class_sep=args.class_sep, target_size=args.target_size,
                         rotation_planes=args.rotation_planes)
    sources, target = gen_synthetic(spec)
    out = Path(args.out)
    for d in sources:
        save_dataset(d, out / f"{d.name}.csv")
    save_dataset(target, out / "target.csv")
    (out / "spec.json").write_text(json.dumps(asdict(spec), indent=1, sort_keys=True) + "\n")
    log.info("wrote %d sources and target to %s", len(sources), out)


def cmd_zscore(args) -> None:
    zscore_file(args.input, args.output, header=args.header)


def _load_all(paths, header, num_classes=None) -> list[Dataset]:
    sets = [load_dataset(p, header=header) for p in paths]
    K = num_classes or max(d.num_classes for d in sets)
    return [d.with_num_classes(K) for d in sets]


def cmd_init(args) -> None:
    out = Path(args.out)
    paths = [str(Path(p).resolve()) for p in args.source]
    tpath = args.target_unlabeled or args.target
    loaded = _load_all(paths + [tpath], args.header, args.num_classes)
    sources, target = loaded[:-1], loaded[-1]
    extra = {"sources": paths, "source_header": args.header}
    if args.target:
        split = split_target(target, args.unlabeled_fraction, args.seed)
        pool = split.unlabeled
        save_dataset(split.unlabeled, out / "target_unlabeled.csv")
        save_dataset(split.online_stream, out / "target_online.csv")
        extra.update(target_unlabeled="target_unlabeled.csv", target_unlabeled_header=False,
                     target_online="target_online.csv",
                     unlabeled_fraction=args.unlabeled_fraction, split_seed=args.seed)
    else:
        pool = target
        extra.update(target_unlabeled=str(Path(tpath).resolve()),
                     target_unlabeled_header=args.header)
    matrices = None
    jda = None
    if args.import_matrices:
        mdir = Path(args.import_matrices)
        matrices = [import_matrix(mdir / f"matrix_{i}.csv", expected_domain=d.name)
                    for i, d in enumerate(sources)]
    else:
        n_total = min(len(d) for d in sources) + len(pool)
        dim = args.dim or default_subspace_dim(pool.dim, n_total)
        jda = JdaConfig(subspace_dim=dim, iterations=args.iters, reg=args.lam)
    art = offline_stage(sources, pool, jda, args.C, args.seed, matrices=matrices,
                        epochs=args.epochs)
    save_artifacts(art, out, extra)
    log.info("offline artifacts written to %s", out)


def _run_context(args):
    art_dir = Path(args.artifacts)
    manifest = json.loads((art_dir / "manifest.json").read_text())
    if args.source:
        paths, src_header = args.source, args.header
    else:
        paths, src_header = manifest.get("sources", []), manifest.get("source_header", False)
    K = manifest["config"].get("num_classes")
    sources = [load_dataset(p, header=src_header, num_classes=K) for p in paths]
    art, _ = load_artifacts(art_dir, sources)
    if len(sources) != art.n:
        raise ValueError(f"{len(sources)} source datasets for {art.n} artifacts")
    stream = load_dataset(args.target, header=args.header, num_classes=K)
    pool = None
    if args.warm_stats:
        pool_path = manifest.get("target_unlabeled")
        if not pool_path:
            raise ValueError("--warm-stats needs the unlabeled pool recorded by 'otl init'")
        pool_path = Path(pool_path)
        if not pool_path.is_absolute():
            pool_path = art_dir / pool_path
        pool = load_dataset(pool_path, header=manifest.get("target_unlabeled_header", False),
                            num_classes=K).X
    return art, sources, stream, pool


def _config(args, variant: str, **override) -> RunConfig:
    kw = dict(C=args.C, mu=args.mu, window=args.tw, beta_rule=args.beta_rule, beta=args.beta,
              trials=args.trials, seed=args.seed, variant=variant, tau_rule=args.tau_rule,
              warm_stats=args.warm_stats, log_weights=args.log_weights, log_mmd=args.log_mmd)
    kw.update(override)
    return RunConfig(**kw)


def cmd_run(args) -> None:
    art, sources, stream, pool = _run_context(args)
    cfg = _config(args, args.variant)
    report = run_trials(args.variant, stream, cfg, art=art, sources=sources,
                        unlabeled_pool=pool, timings=args.timings)
    log.info("%s: mistake rate %s %%", args.variant, report.summary()["formatted"])
    _write_json(report.to_dict(), args.out)


_SWEEP_FIELDS = {"C": "C", "mu": "mu", "tw": "window", "beta": "beta"}


def cmd_sweep(args) -> None:
    art, sources, stream, pool = _run_context(args)
    rows = []
    for value in args.values:
        field = _SWEEP_FIELDS[args.param]
        v = int(value) if field == "window" else float(value)
        for variant in args.variants:
            cfg = _config(args, variant, **{field: v}, log_mmd=False, log_weights=False)
            rep = run_trials(variant, stream, cfg, art=art, sources=sources, unlabeled_pool=pool)
            summ = aggregate_trials(rep)
            rows.append({"value": value, "variant": variant, "mean": summ["mean"],
                         "std": summ["std"], "trials": summ["trials"]})
            log.info("%s=%g %s: %s %%", args.param, value, variant, summ["formatted"])
    _write_json({"param": args.param, "rows": rows}, args.out)


def cmd_report(args) -> None:
    docs = [json.loads(Path(p).read_text()) for p in args.input]
    if args.kind == "sensitivity":
        if len(docs) != 1:
            raise ValueError("sensitivity takes exactly one sweep file")
        source = docs[0]
    else:
        source = docs
    path = emit_plot_data(source, args.kind, args.out, mean=args.mean)
    if not args.no_figure:
        fig = Path(args.figure) if args.figure else path.with_suffix(".png")
        render_figure(load_plot_data(path), args.kind, fig, title=args.title)
        log.info("figure written to %s", fig)


COMMANDS = {"gen": cmd_gen, "zscore": cmd_zscore, "init": cmd_init, "run": cmd_run,
            "sweep": cmd_sweep, "report": cmd_report}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except (ValueError, OSError) as exc:
        print(f"otl: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)
    try:
        COMMANDS[args.command](args)
    except (DataError, ValueError, OSError, RuntimeError, KeyError, json.JSONDecodeError) as exc:
        print(f"otl {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
