"""Command-line workflow: dataset generation, training, evaluation,
strategy comparison, ablations, and attention export.

Configuration is resolved in three layers: built-in defaults, then the
`--config` document, then explicit flags. Every command writes the exact
resolved config next to its outputs, so runs are self-describing. All
randomness flows from the resolved seed. Exit codes: 0 success, 1 validation
error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import dataio, taxonomy, trainer
from .taxonomy import Schema, SchemaError


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage text + exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="village-hgnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, data=True):
        p.add_argument("--config", help="JSON schema/config document")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="overrides the configured seed")
        if data:
            p.add_argument("--data", required=True, help="dataset directory (manifest + blobs)")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset with a label oracle")
    p.add_argument("--config", help="JSON schema/config document")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, default=600, help="number of villages")
    p.add_argument("--noise", type=float, default=0.1, help="label flip probability")

    p = sub.add_parser("train", help="split, train, evaluate, checkpoint")
    common(p)
    p.add_argument("--strategy", choices=trainer.STRATEGIES)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the held-out split")
    common(p)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("strategy", help="compare split/group/overall training")
    common(p)

    p = sub.add_parser("ablate", help="run an ablation grid")
    common(p)
    p.add_argument("--grid", required=True,
                   choices=sorted(trainer.GRID_CELLS) + ["paper"],
                   help="'paper' runs beta+edges+init+fc in one go")

    p = sub.add_parser("export-attention", help="mean attention matrices as CSV")
    common(p)
    p.add_argument("--checkpoint", required=True)
    return parser


def _load_schema(args) -> Schema:
    if getattr(args, "config", None):
        return taxonomy.load_schema(Path(args.config))
    return taxonomy.default_schema()


def _resolve_config(schema: Schema, args) -> trainer.TrainConfig:
    overrides = {
        k: getattr(args, k, None)
        for k in ("seed", "strategy")
    }
    return trainer.TrainConfig.from_schema(schema, overrides)


def _write_run_config(out: Path, config: trainer.TrainConfig, schema: Schema, extra=None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "schema_version": taxonomy.SCHEMA_VERSION,
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "schema": taxonomy.serialize_schema(schema),
    }
    if extra:
        doc.update(extra)
    (out / "run_config.json").write_text(json.dumps(doc, indent=1, sort_keys=True))


def _dump_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=1, sort_keys=True))


def _cmd_gen_data(args) -> int:
    schema = _load_schema(args)
    config = _resolve_config(schema, args)
    out = Path(args.out)
    dataset, report = dataio.generate_synthetic(args.n, config.seed, args.noise, schema)
    dataio.write_manifest(dataset, schema, out)
    _dump_json(out / "oracle_report.json", report.to_dict())
    _write_run_config(out, config, schema, extra={"n": args.n, "noise": args.noise})
    print(f"wrote {len(dataset)} villages to {out}")
    return 0


def _split(schema, config, args):
    dataset = dataio.read_manifest(Path(args.data), schema)
    return dataio.split_dataset(dataset, config.split_ratio, config.seed, schema)


def _cmd_train(args) -> int:
    schema = _load_schema(args)
    config = _resolve_config(schema, args)
    out = Path(args.out)
    train_ds, test_ds = _split(schema, config, args)
    _write_run_config(out, config, schema)

    units = trainer.strategy_units(schema, config.strategy)
    reports, curves = [], {}
    for unit, keys in units:
        unit_dir = out if len(units) == 1 else out / f"unit_{unit}"
        result = trainer.train(train_ds, config, schema, subtype_keys=keys, out_dir=unit_dir)
        reports.append(trainer.evaluate(result.model, test_ds, subtype_keys=keys))
        curves[unit] = result.loss_curve
    merged = trainer.merge_reports(reports, schema)
    _dump_json(out / "metrics.json", merged.to_dict())
    trainer.metrics_csv(merged, out / "metrics.csv")
    _dump_json(out / "loss_curve.json", curves)
    print(f"test accuracy {merged.overall['accuracy']:.4f} "
          f"macro-F1 {merged.overall['macro_f1']:.4f}")
    return 0


def _cmd_eval(args) -> int:
    schema = _load_schema(args)
    model = trainer.load_checkpoint(Path(args.checkpoint), schema)
    config = model.config
    out = Path(args.out)
    _, test_ds = _split(schema, config, args)
    report = trainer.evaluate(model, test_ds)
    _write_run_config(out, config, schema)
    _dump_json(out / "metrics.json", report.to_dict())
    trainer.metrics_csv(report, out / "metrics.csv")
    print(f"test accuracy {report.overall['accuracy']:.4f} "
          f"macro-F1 {report.overall['macro_f1']:.4f}")
    return 0


def _cmd_strategy(args) -> int:
    schema = _load_schema(args)
    config = _resolve_config(schema, args)
    out = Path(args.out)
    dataset = dataio.read_manifest(Path(args.data), schema)
    rows = trainer.run_strategy(dataset, config, schema)
    _write_run_config(out, config, schema)
    _dump_json(out / "strategy_report.json", rows)
    trainer.strategy_csv(rows, out / "strategy_report.csv")
    for strategy, row in rows.items():
        print(f"{strategy:8s} acc {row['average']['accuracy']:.4f} "
              f"f1 {row['average']['macro_f1']:.4f}")
    return 0


def _cmd_ablate(args) -> int:
    schema = _load_schema(args)
    config = _resolve_config(schema, args)
    out = Path(args.out)
    dataset = dataio.read_manifest(Path(args.data), schema)
    grids = list(trainer.PAPER_GRIDS) if args.grid == "paper" else [args.grid]
    threads = int(os.environ.get("HGNN_THREADS", "0")) or None
    rows = trainer.run_ablation(dataset, config, schema, grids, threads=threads)
    _write_run_config(out, config, schema, extra={"grids": grids})
    trainer.ablation_csv(rows, out / "ablation.csv")
    _dump_json(out / "ablation.json", rows)
    print(f"{len(rows)} cells -> {out / 'ablation.csv'}")
    return 0


def _cmd_export_attention(args) -> int:
    schema = _load_schema(args)
    model = trainer.load_checkpoint(Path(args.checkpoint), schema)
    out = Path(args.out)
    _, test_ds = _split(schema, model.config, args)
    _write_run_config(out, model.config, schema)
    paths = trainer.export_attention(model, test_ds, out)
    print("\n".join(str(p) for p in paths))
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "strategy": _cmd_strategy,
    "ablate": _cmd_ablate,
    "export-attention": _cmd_export_attention,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (SchemaError, dataio.LoadError, dataio.BlobFormatError,
            trainer.CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (trainer.TrainingDiverged, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
