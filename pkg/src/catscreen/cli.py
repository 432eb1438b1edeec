"""Command-line entry point: ``catscreen <subcommand> ...``.

Exit codes: 0 ok, 1 runtime failure, 2 usage error. Settings resolve as
CLI flag > config file (``--config`` or $CATSCREEN_CONFIG) > built-in default.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, bench, upnet
from .acquisition import constrained_ei, expected_improvement
from .bo import MODE_ALIASES, Pool, resolve_mode, run
from .config import ConfigError, Manifest, RunConfig, apply_overrides, load_config
from .data import (
    FORMAT_TAGS,
    Dataset,
    FeatureSchema,
    build_schema,
    convert_external,
    file_sha256,
    load_dataset,
    write_dataset,
)
from .errors import CatscreenError, EmptySetError
from .metrics import METRIC_NAMES
from .volcano import label_dataset, load_default_maps, load_maps

log = logging.getLogger("catscreen")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _resolve(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    return apply_overrides(
        cfg,
        seed=getattr(args, "seed", None),
        epochs=getattr(args, "epochs", None),
        learning_rate=getattr(args, "lr", None),
        rff_dim=getattr(args, "rff_dim", None),
    )


def _maps(cfg: RunConfig, maps_dir: str | None):
    d = maps_dir or cfg.maps
    return load_maps(d) if d else load_default_maps()


def _load_pool_data(args, cfg: RunConfig) -> tuple[Dataset, dict[str, str]]:
    if getattr(args, "synthetic", None):
        return bench.make_synthetic_pool(args.synthetic, seed=args.synthetic_seed), {
            "data": f"synthetic:{args.synthetic}:{args.synthetic_seed}"
        }
    if not args.data:
        raise UsageError("--data is required unless --synthetic is given")
    ds = load_dataset(args.data, cfg.max_atoms)
    return ds, {"data": str(args.data), "data_sha256": file_sha256(args.data)}


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _f(v) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# subcommands


def cmd_convert(args) -> int:
    cfg = load_config(args.config)
    act, sel = _maps(cfg, args.maps)
    out = Path(args.out)
    report = convert_external(args.src, out, args.format_tag, act, sel)
    print(json.dumps({"paired": report.n_paired, "co": report.n_co, "h": report.n_h,
                      "out_of_range": report.n_out_of_range, "unpaired": report.n_unpaired,
                      "ambiguous": report.n_ambiguous}))
    return 0


def cmd_label(args) -> int:
    cfg = load_config(args.config)
    act, sel = _maps(cfg, args.maps)
    ds = load_dataset(args.src, cfg.max_atoms)
    write_dataset(label_dataset(ds, act, sel), args.out)
    return 0


def _train_targets(ds: Dataset, head: str, cfg: RunConfig) -> np.ndarray:
    if not ds.is_labeled:
        raise CatscreenError("training data must be labeled (run `label` first)")
    act = np.array([ds.labels[i].activity for i in ds.ids])
    sel = np.array([ds.labels[i].selectivity for i in ds.ids])
    return act if head == "regression" else cfg.rule.feasible(sel).astype(int)


def cmd_train(args) -> int:
    cfg = _resolve(args)
    head = "regression" if args.head == "reg" else "classification"
    mcfg = cfg.regression if head == "regression" else cfg.classification
    ds = load_dataset(args.data, cfg.max_atoms)
    schema = build_schema(ds, cfg.property_table, cfg.max_atoms)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out.with_name(out.name + ".manifest.json"), "train", cfg.to_dict(), [mcfg.seed],
                        {"data": str(args.data), "data_sha256": file_sha256(args.data)})
    try:
        model = upnet.fit(upnet.encode_many(ds.structures, schema), _train_targets(ds, head, cfg), mcfg,
                          schema=schema)
        upnet.save_model(model, out)
    except KeyboardInterrupt:
        manifest.finish(complete=False)
        raise
    manifest.finish()
    return 0


def _model_schema(model) -> FeatureSchema:
    if model.schema is None:
        raise CatscreenError("checkpoint carries no feature schema")
    return FeatureSchema.from_dict(model.schema)


def cmd_predict(args) -> int:
    model = upnet.load_model(args.ckpt)
    schema = _model_schema(model)
    ds = load_dataset(args.data, schema.max_atoms)
    pred = upnet.predict(upnet.encode_many(ds.structures, schema), model)
    lat_cols = [f"latent_{j}" for j in range(pred.latent.shape[1])]
    if model.config.head == "regression":
        header = ["id", "mu", "sigma", *lat_cols]
        main = pred.mean
    else:
        header = ["id", "p", "sigma", *lat_cols]
        main = pred.probability[:, 1]
    rows = ([cid, _f(m), _f(s), *map(_f, lat)] for cid, m, s, lat in zip(ds.ids, main, pred.std, pred.latent))
    _write_csv(Path(args.out), header, rows)
    return 0


def cmd_score(args) -> int:
    reg = upnet.load_model(args.reg_ckpt)
    schema = _model_schema(reg)
    ds = load_dataset(args.data, schema.max_atoms)
    batch = upnet.encode_many(ds.structures, schema)
    pr = upnet.predict_regression(batch, reg)
    if args.cls_ckpt:
        p = upnet.predict_class(batch, upnet.load_model(args.cls_ckpt)).probability[:, 1]
    else:
        p = np.ones(len(ds))
    ei = expected_improvement(pr.mean, pr.std, args.f_best)
    cei = constrained_ei(ei, p)
    rows = ([cid, *map(_f, vals)] for cid, *vals in zip(ds.ids, pr.mean, pr.std, p, ei, cei))
    _write_csv(Path(args.out), ["id", "mu", "sigma", "p_feasible", "ei", "cei"], rows)
    return 0


def cmd_screen(args) -> int:
    cfg = _resolve(args)
    out = _out_dir(args.out)
    ds, inputs = _load_pool_data(args, cfg)
    camp = cfg.campaign_config(resolve_mode(args.mode), budget=args.budget, q=args.q)
    manifest = Manifest(out / "manifest.json", "screen", {**cfg.to_dict(), "mode": camp.mode,
                        "budget": camp.budget, "q": camp.q}, [camp.seed], inputs)
    schema = build_schema(ds, cfg.property_table, cfg.max_atoms)
    pool = Pool.from_dataset(ds, camp.rule, schema)
    try:
        hist = run(camp, pool)
    except KeyboardInterrupt:
        manifest.finish(complete=False)
        raise
    hist.write_csv(out / "history.csv")
    for head, model in hist.final_models.items():
        model.schema = schema.to_dict()
        upnet.save_model(model, out / f"{head}.npz")
    manifest.finish(iterations=len(hist))
    return 0


def cmd_bench(args) -> int:
    cfg = _resolve(args)
    out = _out_dir(args.out)
    ds, inputs = _load_pool_data(args, cfg)
    modes = [resolve_mode(m.strip()) for m in args.modes.split(",") if m.strip()]
    n_seeds = args.seeds if args.seeds is not None else int(cfg.bench.get("seeds", 20))
    workers = args.workers if args.workers is not None else int(cfg.bench.get("workers", 1))
    schema = build_schema(ds, cfg.property_table, cfg.max_atoms)
    pool = Pool.from_dataset(ds, cfg.rule, schema)
    seeds = [cfg.seed + k for k in range(n_seeds)]
    manifest = Manifest(out / "manifest.json", "bench", {**cfg.to_dict(), "modes": modes, "n_seeds": n_seeds},
                        seeds, inputs)
    summary = {}
    try:
        for mode in modes:
            camp = cfg.campaign_config(mode, budget=args.budget, q=args.q)
            agg = bench.repeat_runs(camp, pool, n_seeds, workers)
            for h in agg.histories:
                h.write_csv(out / f"history_{mode}_seed{h.config.seed}.csv")
            for metric in METRIC_NAMES:
                (out / f"aggregate_{mode}_{metric}.csv").write_text(agg.to_csv(metric), encoding="utf-8")
                (out / f"seeds_{mode}_{metric}.csv").write_text(agg.per_seed_csv(metric), encoding="utf-8")
            summary[mode] = {m: agg.final_mean(m) for m in METRIC_NAMES}
    except KeyboardInterrupt:
        manifest.finish(complete=False)
        raise
    manifest.finish(final_means=summary)
    print(json.dumps(summary))
    return 0


def cmd_ood_report(args) -> int:
    cfg = _resolve(args)
    out = _out_dir(args.out)
    ds = load_dataset(args.data, cfg.max_atoms)
    train, in_test, ood = bench.ood_partition(ds, args.train_min_group, seed=cfg.seed)
    for name, ids in zip(bench.SETS, (train, in_test, ood)):
        if not ids:
            raise EmptySetError(f"{name} partition is empty (train-min-group={args.train_min_group})")
    manifest = Manifest(out / "manifest.json", "ood-report", cfg.to_dict(), [cfg.seed],
                        {"data": str(args.data), "data_sha256": file_sha256(args.data),
                         "ckpt": str(args.ckpt)})
    if args.ckpt:
        model = upnet.load_model(args.ckpt)
        schema = _model_schema(model)
    else:
        schema = build_schema(ds, cfg.property_table, cfg.max_atoms)
        sub = ds.subset(train)
        model = upnet.fit(upnet.encode_many(sub.structures, schema),
                          _train_targets(sub, "regression", cfg), cfg.regression, schema=schema)
        upnet.save_model(model, out / "model.npz")
    by_id = {s.id: s for s in ds.structures}

    def part(ids):
        return ids, upnet.encode_many([by_id[i] for i in ids], schema)

    report = bench.ood_report(model, part(train), part(in_test), part(ood))
    (out / "ood_report.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "ood_summary.json").write_text(json.dumps(report.summary(), indent=2) + "\n", encoding="utf-8")
    manifest.finish()
    return 0


def cmd_demo(args) -> int:
    out = _out_dir(args.out)
    seed = args.seed if args.seed is not None else 0
    manifest = Manifest(out / "manifest.json", "demo", {"task": args.task}, [seed], {})
    rep = bench.sngp_demo(args.task, seed)
    (out / f"demo_{rep.task}.csv").write_text(rep.to_csv(), encoding="utf-8")
    (out / f"demo_{rep.task}_summary.json").write_text(json.dumps(rep.summary, indent=2) + "\n", encoding="utf-8")
    manifest.finish()
    print(json.dumps(rep.summary))
    return 0


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, seed=True, training=False) -> None:
    p.add_argument("--config", help="YAML/JSON config file (default: $CATSCREEN_CONFIG)")
    if seed:
        p.add_argument("--seed", type=int)
    if training:
        p.add_argument("--epochs", type=int, help="override epochs for both surrogates")
        p.add_argument("--lr", type=float, help="override the learning rate for both surrogates")
        p.add_argument("--rff-dim", type=int, help="override the random feature count")


def _pool_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="labeled canonical dataset")
    p.add_argument("--synthetic", type=int, metavar="N", help="use a generated N-candidate pool instead of --data")
    p.add_argument("--synthetic-seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="catscreen", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"catscreen {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    sub.required = True

    p = sub.add_parser("convert", help="pair external CO/H records into the canonical format")
    p.add_argument("--from", dest="format_tag", required=True, choices=FORMAT_TAGS)
    p.add_argument("--in", dest="src", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--maps", help="directory with activity.json and selectivity.json")
    p.add_argument("--config")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("label", help="attach activity/selectivity from volcano maps")
    p.add_argument("--maps")
    p.add_argument("--in", dest="src", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", help="train one surrogate and write a checkpoint")
    p.add_argument("--head", choices=("reg", "cls"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _common(p, training=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict with a checkpoint, CSV output")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("score", help="export EI / constrained EI scores as CSV")
    p.add_argument("--reg-ckpt", required=True)
    p.add_argument("--cls-ckpt")
    p.add_argument("--data", required=True)
    p.add_argument("--f-best", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("screen", help="run one screening campaign")
    p.add_argument("--mode", required=True, choices=sorted(MODE_ALIASES))
    _pool_args(p)
    p.add_argument("--budget", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--out", required=True)
    _common(p, training=True)
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("bench", help="repeated-seed comparison of screening modes")
    p.add_argument("--modes", default="cbo,bo,random")
    p.add_argument("--seeds", type=int)
    p.add_argument("--workers", type=int)
    _pool_args(p)
    p.add_argument("--budget", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--out", required=True)
    _common(p, training=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ood-report", help="uncertainty on train / in-distribution / OOD partitions")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", help="trained regression checkpoint; trained on the partition if omitted")
    p.add_argument("--train-min-group", type=int, default=25)
    p.add_argument("--out", required=True)
    _common(p, training=True)
    p.set_defaults(func=cmd_ood_report)

    p = sub.add_parser("demo", help="synthetic distance-awareness demos")
    p.add_argument("--task", required=True, choices=("reg1d", "cls2d", *bench.DEMO_TASKS))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"error: config: {problem}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 1
    except (CatscreenError, FileNotFoundError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0
