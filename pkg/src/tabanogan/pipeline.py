"""End-to-end run: load -> split -> preprocess -> train -> score -> evaluate -> write.

Training sees only normal rows.  The test set is a held-out fraction of the
normal rows plus every anomalous row; row ids are 0-based positions in the
input table.  Artifacts are written to a scratch directory next to the
output directory and moved into place only after every stage succeeded.
"""

from __future__ import annotations

import contextlib
import logging
import os
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bundle import ModelBundle, save_model
from .config import RunConfig
from .evaluation import Metrics, RocCurve, classification_metrics, knn_anomaly_scores, roc_curve, youden_j
from .gan import LossHistory, train_gan
from .inversion import AnomalyReport, score_batch
from .io import load_csv, write_csv
from .preprocess import Dataset, TableEncoder, drop_columns, fit_encoder, label_matches, split_by_label
from .synthetic import make_synthetic

logger = logging.getLogger(__name__)

SCORES_CSV = "scores.csv"
ROC_CSV = "roc.csv"
LOSS_CSV = "loss_history.csv"
METRICS_TXT = "metrics.txt"
MODEL_BIN = "model.bin"
CONFIG_TXT = "config.txt"
ARTIFACTS = (SCORES_CSV, ROC_CSV, LOSS_CSV, METRICS_TXT, MODEL_BIN, CONFIG_TXT)


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@contextlib.contextmanager
def stage(name: str):
    logger.info("stage: %s", name)
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc


@dataclass
class Split:
    train: np.ndarray  # row ids of normal training rows
    test: np.ndarray  # row ids of test rows, ascending
    is_anomaly: np.ndarray  # bool per test row


@dataclass
class PipelineResult:
    output_dir: Path
    encoder: TableEncoder
    bundle: ModelBundle
    split: Split
    reports: list[AnomalyReport]
    scores: np.ndarray
    knn_scores: np.ndarray
    curve: RocCurve
    metrics: Metrics
    knn_auc: float


def load_dataset(config: RunConfig) -> Dataset:
    """The configured CSV (or the synthetic benchmark) with drop columns removed."""
    schema = config.data
    if schema.path:
        data = load_csv(schema.path, schema, require_label=True)
    else:
        s = config.synth
        data = make_synthetic(s.n_normal, s.n_anomalies, s.seed)
    return drop_columns(data, schema.drop)


def split_rows(data: Dataset, config: RunConfig) -> Split:
    """Hold out ``eval.holdout`` of the normal rows; all anomalies go to the test set."""
    is_anomaly = label_matches(data.labels, config.data.anomaly_value)
    normal_ids = np.flatnonzero(~is_anomaly)
    if len(normal_ids) < 2:
        raise ValueError("need at least two normal rows")
    rng = np.random.default_rng(config.eval.seed)
    perm = rng.permutation(len(normal_ids))
    n_test = max(1, int(round(config.eval.holdout * len(normal_ids))))
    if n_test >= len(normal_ids):
        raise ValueError("holdout leaves no normal rows for training")
    held = normal_ids[perm[:n_test]]
    train = np.sort(normal_ids[perm[n_test:]])
    test = np.sort(np.r_[held, np.flatnonzero(is_anomaly)])
    return Split(train, test, is_anomaly[test])


def write_scores(path, columns: list[str], row_ids, is_anomaly, reports: list[AnomalyReport],
                 threshold: float | None = None, knn_scores=None) -> None:
    header = ["row_id", "score"]
    if is_anomaly is not None:
        header.append("is_anomaly")
    if threshold is not None:
        header.append("flagged")
    if knn_scores is not None:
        header.append("knn_score")
    header += [f"diff_{c}" for c in columns] + [f"sq_{c}" for c in columns]
    rows = []
    for i, (rid, rep) in enumerate(zip(row_ids, reports)):
        row = [int(rid), rep.score]
        if is_anomaly is not None:
            row.append(int(is_anomaly[i]))
        if threshold is not None:
            row.append(int(rep.score >= threshold))
        if knn_scores is not None:
            row.append(float(knn_scores[i]))
        row += list(rep.feature_diff) + list(rep.feature_scores)
        rows.append(row)
    write_csv(path, header, rows)


def write_roc(path, curve: RocCurve) -> None:
    write_csv(path, ["threshold", "tpr", "fpr"], zip(curve.thresholds, curve.tpr, curve.fpr))


def write_losses(path, history: LossHistory) -> None:
    rows = [(e + 1, g, d) for e, (g, d) in enumerate(zip(history.generator, history.discriminator))]
    write_csv(path, ["epoch", "generator_loss", "discriminator_loss"], rows)


def format_metrics(curve: RocCurve, metrics: Metrics, extra: dict | None = None) -> str:
    items = {
        "auc": curve.auc,
        "threshold": metrics.threshold,
        "youden_j": youden_j(curve, curve.optimal_threshold),
        "accuracy": metrics.accuracy,
        "precision": metrics.precision,
        "recall": metrics.recall,
        "f1": metrics.f1,
        "tp": metrics.tp,
        "fp": metrics.fp,
        "tn": metrics.tn,
        "fn": metrics.fn,
    }
    items.update(extra or {})
    return "".join(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n" for k, v in items.items())


def evaluate_scores(scores, is_anomaly) -> tuple[RocCurve, Metrics]:
    curve = roc_curve(scores, is_anomaly)
    return curve, classification_metrics(scores, is_anomaly, curve.optimal_threshold)


def _publish(scratch: Path, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in sorted(os.listdir(scratch)):
        os.replace(scratch / name, out_dir / name)
    scratch.rmdir()


def run_pipeline(config: RunConfig, progress=None) -> PipelineResult:
    """Run every stage; on failure raise :class:`PipelineError` and leave no partial artifacts."""
    out_dir = Path(config.output.dir)

    with stage("load"):
        data = load_dataset(config)
        split = split_rows(data, config)
        if not split.is_anomaly.any():
            raise ValueError(f"no rows labeled {config.data.anomaly_value!r} in "
                             f"{config.data.label_column!r}; evaluation needs anomalies")
        normal, _ = split_by_label(data.take_rows(split.train), config.data.label_column,
                                   config.data.anomaly_value)
        test = data.take_rows(split.test)
        logger.info("%d training rows, %d test rows (%d anomalous)",
                    len(normal), len(test), int(split.is_anomaly.sum()))

    with stage("preprocess"):
        encoder = fit_encoder(normal, config.preprocess)
        encoded_train = encoder.transform(normal.values)

    with stage("train"):
        model, history = train_gan(encoded_train, encoder.layout, config.train, progress=progress)
        bundle = ModelBundle(encoder, model, history, config)

    with stage("score"):
        reports = score_batch(encoder.transform(test.values), model, config.invert, row_ids=split.test,
                              decode=encoder.inverse_transform, raw=test.values)
        scores = np.array([r.score for r in reports])

    with stage("evaluate"):
        curve, metrics = evaluate_scores(scores, split.is_anomaly)
        for r in reports:
            r.flagged = bool(r.score >= curve.optimal_threshold)
        knn = knn_anomaly_scores(encoder.minmax_transform(normal.values),
                                 encoder.minmax_transform(test.values), config.eval.k)
        knn_auc = roc_curve(knn, split.is_anomaly).auc

    with stage("write"):
        out_dir.parent.mkdir(parents=True, exist_ok=True)
        scratch = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.partial-", dir=out_dir.parent))
        try:
            write_scores(scratch / SCORES_CSV, encoder.columns, split.test, split.is_anomaly, reports,
                         curve.optimal_threshold, knn)
            write_roc(scratch / ROC_CSV, curve)
            write_losses(scratch / LOSS_CSV, history)
            extra = {
                "knn_auc": knn_auc,
                "knn_k": config.eval.k,
                "n_train": len(normal),
                "n_test": len(test),
                "n_test_anomalies": int(split.is_anomaly.sum()),
                "stop_epoch": history.stop_epoch,
                "best_epoch": history.best_epoch,
                "seed": config.seed,
            }
            (scratch / METRICS_TXT).write_text(format_metrics(curve, metrics, extra), encoding="utf-8")
            (scratch / CONFIG_TXT).write_text(config.to_text(), encoding="utf-8")
            save_model(bundle, scratch / MODEL_BIN)
            _publish(scratch, out_dir)
        finally:
            if scratch.exists():
                shutil.rmtree(scratch)

    logger.info("AUC %.4f (kNN %.4f), accuracy %.4f at threshold %.3g",
                curve.auc, knn_auc, metrics.accuracy, metrics.threshold)
    return PipelineResult(out_dir, encoder, bundle, split, reports, scores, knn, curve, metrics, knn_auc)
