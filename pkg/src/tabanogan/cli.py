"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .bundle import ModelBundle, describe, load_model, save_model
from .config import RunConfig, load_config
from .evaluation import roc_curve
from .gan import train_gan
from .inversion import score_batch
from .io import DatasetSchema, load_csv, write_csv, write_dataset
from .preprocess import fit_encoder, label_matches, split_by_label
from .synthetic import make_synthetic

logger = logging.getLogger("tabanogan")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _run_options(p: argparse.ArgumentParser, out_help: str) -> None:
    p.add_argument("--config", default="demo", metavar="PATH",
                   help="config file, or 'demo' for the built-in synthetic benchmark (default: demo)")
    p.add_argument("--seed", type=int, metavar="N",
                   help="global seed; overrides the config's seed and every stage seed it does not pin")
    p.add_argument("--out", metavar="DIR", help=out_help)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tabanogan",
                     description="GAN-based anomaly detection for tabular data with latent-inversion scoring.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("run", help="full pipeline: preprocess, train, score, evaluate, write artifacts")
    _run_options(p, "output directory (default: config output.dir)")

    p = sub.add_parser("preprocess", help="fit the column encoder and write the encoded training rows")
    _run_options(p, "CSV file for the encoded rows (default: <output.dir>/encoded_train.csv)")

    p = sub.add_parser("train", help="preprocess and train; write model.bin and loss_history.csv")
    _run_options(p, "output directory (default: config output.dir)")

    p = sub.add_parser("score", help="score the rows of a CSV with a trained model bundle")
    p.add_argument("--model", required=True, metavar="PATH", help="model bundle written by train or run")
    p.add_argument("--input", required=True, metavar="CSV", help="rows to score (label column optional)")
    p.add_argument("--out", required=True, metavar="CSV", help="scores CSV to write")
    p.add_argument("--threshold", type=float, metavar="X", help="add a 'flagged' column (score >= X)")
    p.add_argument("--seed", type=int, metavar="N", help="inversion seed (default: the bundle's)")

    p = sub.add_parser("evaluate", help="ROC analysis of a scores CSV that has an is_anomaly column")
    p.add_argument("--scores", required=True, metavar="CSV", help="scores CSV written by score or run")
    p.add_argument("--out", metavar="DIR", help="write roc.csv and metrics.txt here")

    p = sub.add_parser("synth-data", help="write the built-in synthetic benchmark as CSV")
    p.add_argument("--out", required=True, metavar="CSV", help="file to write")
    p.add_argument("--n-normal", type=int, default=5000, metavar="N", help="normal rows (default: 5000)")
    p.add_argument("--n-anomalies", type=int, default=250, metavar="N", help="anomalous rows (default: 250)")
    p.add_argument("--seed", type=int, default=0, metavar="N", help="generator seed (default: 0)")

    p = sub.add_parser("model", help="model bundle utilities")
    msub = p.add_subparsers(dest="model_command", metavar="ACTION", parser_class=_Parser)
    msub.required = True
    q = msub.add_parser("inspect", help="print a summary of a model bundle")
    q.add_argument("path", metavar="PATH", help="model bundle")
    return parser


def _config(args) -> RunConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def _out_dir(args, config: RunConfig) -> Path:
    return Path(args.out) if args.out else Path(config.output.dir)


def _progress(epoch: int, g: float, d: float) -> None:
    if epoch % 25 == 0:
        logger.info("epoch %d: G %.4f D %.4f", epoch, g, d)


def _training_rows(config: RunConfig):
    data = pipeline.load_dataset(config)
    split = pipeline.split_rows(data, config)
    normal, _ = split_by_label(data.take_rows(split.train), config.data.label_column, config.data.anomaly_value)
    return normal


def cmd_run(args) -> int:
    config = _config(args)
    config.output = dataclasses.replace(config.output, dir=str(_out_dir(args, config)))
    result = pipeline.run_pipeline(config, progress=_progress)
    print(f"AUC {result.curve.auc:.4f} (kNN baseline {result.knn_auc:.4f})")
    print(f"accuracy {result.metrics.accuracy:.4f} at threshold {result.metrics.threshold:.6g}")
    print(f"artifacts written to {result.output_dir}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    config = _config(args)
    out = Path(args.out) if args.out else Path(config.output.dir) / "encoded_train.csv"
    normal = _training_rows(config)
    encoder = fit_encoder(normal, config.preprocess)
    header = []
    for n in encoder.normalizers:
        header.append(f"{n.name}.scalar")
        header += [f"{n.name}.mode{k}" for k in range(n.width - 1)]
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, header, encoder.transform(normal.values).tolist())
    for n in encoder.normalizers:
        print(f"{n.name}: {n.gmm.n_components if n.gmm is not None else 0} modes")
    print(f"{len(normal)} encoded rows (width {encoder.width}) written to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _config(args)
    out_dir = _out_dir(args, config)
    normal = _training_rows(config)
    encoder = fit_encoder(normal, config.preprocess)
    model, history = train_gan(encoder.transform(normal.values), encoder.layout, config.train, progress=_progress)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_model(ModelBundle(encoder, model, history, config), out_dir / pipeline.MODEL_BIN)
    pipeline.write_losses(out_dir / pipeline.LOSS_CSV, history)
    print(f"trained {history.stop_epoch} epochs (best {history.best_epoch}); model written to "
          f"{out_dir / pipeline.MODEL_BIN}")
    return EXIT_OK


def cmd_score(args) -> int:
    bundle = load_model(args.model)
    config = bundle.config
    schema = dataclasses.replace(config.data, path=args.input, features=())
    data = load_csv(args.input, schema)
    missing = [c for c in bundle.encoder.columns if c not in data.columns]
    if missing:
        raise ValueError(f"{args.input}: missing feature column(s) {', '.join(missing)}")
    values = data.values[:, [data.columns.index(c) for c in bundle.encoder.columns]]
    invert = config.invert if args.seed is None else dataclasses.replace(config.invert, seed=args.seed)
    row_ids = np.arange(len(data))
    reports = score_batch(bundle.encoder.transform(values), bundle.model, invert, row_ids=row_ids,
                          decode=bundle.encoder.inverse_transform, raw=values)
    is_anomaly = None
    if data.labels is not None:
        is_anomaly = label_matches(data.labels, config.data.anomaly_value)
    pipeline.write_scores(args.out, bundle.encoder.columns, row_ids, is_anomaly, reports, args.threshold)
    print(f"{len(reports)} rows scored; written to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    data = load_csv(args.scores, DatasetSchema(label_column="is_anomaly", anomaly_value="1", drop=()),
                    require_label=True)
    scores = data.values[:, data.columns.index("score")]
    is_anomaly = data.labels.astype(float) == 1.0
    curve, metrics = pipeline.evaluate_scores(scores, is_anomaly)
    extra = {}
    if "knn_score" in data.columns:
        knn = data.values[:, data.columns.index("knn_score")]
        extra["knn_auc"] = roc_curve(knn, is_anomaly).auc
    text = pipeline.format_metrics(curve, metrics, extra)
    print(text, end="")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        pipeline.write_roc(out_dir / pipeline.ROC_CSV, curve)
        (out_dir / pipeline.METRICS_TXT).write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_synth(args) -> int:
    data = make_synthetic(args.n_normal, args.n_anomalies, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(out, data)
    print(f"{len(data)} rows written to {out}")
    return EXIT_OK


def cmd_model(args) -> int:
    print(describe(load_model(args.path)))
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "score": cmd_score,
    "evaluate": cmd_evaluate,
    "synth-data": cmd_synth,
    "model": cmd_model,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help exits 0, parse errors exit 1
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
