"""Column-wise preprocessing for the tabular GAN.

Each feature column is encoded either by min-max scaling to [-1, 1] or by
mode-specific normalization: a univariate Gaussian mixture is fitted with EM,
and a value is represented by the one-hot index of its most responsible
component plus its offset from that component's mean in units of four
standard deviations, clipped to [-1, 1].
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class Dataset:
    """Numeric feature table plus optional raw label strings."""

    columns: list[str]
    values: np.ndarray
    labels: np.ndarray | None = None
    label_column: str | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.columns):
            raise ValueError(f"values shape {self.values.shape} does not match {len(self.columns)} columns")
        if self.labels is not None and len(self.labels) != len(self.values):
            raise ValueError("labels and values have different row counts")

    def __len__(self) -> int:
        return self.values.shape[0]

    def take_rows(self, idx) -> "Dataset":
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(list(self.columns), self.values[idx], labels, self.label_column)


def drop_columns(dataset: Dataset, names: Sequence[str]) -> Dataset:
    unknown = [n for n in names if n not in dataset.columns]
    if unknown:
        raise KeyError(f"cannot drop unknown column(s): {', '.join(unknown)}")
    keep = [i for i, c in enumerate(dataset.columns) if c not in set(names)]
    return Dataset([dataset.columns[i] for i in keep], dataset.values[:, keep],
                   dataset.labels, dataset.label_column)


def label_matches(labels: np.ndarray, anomaly_value: str) -> np.ndarray:
    """Element-wise label == anomaly_value, comparing numerically when possible."""
    target = str(anomaly_value).strip()
    try:
        target_num = float(target)
    except ValueError:
        target_num = None
    out = np.zeros(len(labels), dtype=bool)
    for i, lab in enumerate(labels):
        s = str(lab).strip()
        if s == target:
            out[i] = True
        elif target_num is not None:
            try:
                out[i] = float(s) == target_num
            except ValueError:
                pass
    return out


def split_by_label(dataset: Dataset, label_column: str, anomaly_value) -> tuple[Dataset, Dataset]:
    """Partition rows into (normal, anomalous) by the label column."""
    if dataset.labels is None or dataset.label_column != label_column:
        raise KeyError(f"dataset has no label column {label_column!r}")
    is_anomaly = label_matches(dataset.labels, anomaly_value)
    return dataset.take_rows(np.flatnonzero(~is_anomaly)), dataset.take_rows(np.flatnonzero(is_anomaly))


# ------------------------------------------------------------------ min-max

@dataclass(frozen=True)
class MinMaxParams:
    min: float
    max: float

    def transform(self, x):
        x = np.asarray(x, dtype=np.float64)
        span = self.max - self.min
        if span == 0:
            return np.zeros_like(x)
        return 2.0 * (x - self.min) / span - 1.0

    def inverse_transform(self, y):
        y = np.asarray(y, dtype=np.float64)
        span = self.max - self.min
        if span == 0:
            return np.full_like(y, self.min)
        return (y + 1.0) * span / 2.0 + self.min


def fit_minmax(column) -> MinMaxParams:
    column = np.asarray(column, dtype=np.float64)
    if column.size == 0:
        raise ValueError("cannot fit min-max on an empty column")
    if not np.all(np.isfinite(column)):
        raise ValueError("column contains non-finite values")
    lo, hi = float(column.min()), float(column.max())
    if lo == hi:
        warnings.warn(f"constant column (value {lo}); min-max maps it to 0", RuntimeWarning, stacklevel=2)
    return MinMaxParams(lo, hi)


# ------------------------------------------------------------------ GMM / EM

@dataclass
class GmmColumnModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: list[float] = field(default_factory=list)
    n_iter: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def stds(self) -> np.ndarray:
        return np.sqrt(self.variances)

    def component_log_density(self, x) -> np.ndarray:
        """log(pi_k N(x | mu_k, var_k)) with shape (n, M)."""
        x = np.asarray(x, dtype=np.float64).reshape(-1, 1)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return logw - 0.5 * (LOG_2PI + np.log(self.variances) + (x - self.means) ** 2 / self.variances)

    def mean_log_likelihood(self, x) -> float:
        return float(np.mean(_logsumexp(self.component_log_density(x))))

    def responsibilities(self, x) -> np.ndarray:
        lp = self.component_log_density(x)
        return np.exp(lp - _logsumexp(lp)[:, None])


def _logsumexp(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1)
    m = np.where(np.isfinite(m), m, 0.0)
    return m + np.log(np.exp(a - m[:, None]).sum(axis=1))


def _kmeanspp_means(x: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    d2 = (x - centers[0]) ** 2
    for _ in range(1, m):
        total = d2.sum()
        idx = rng.choice(len(x), p=d2 / total)
        centers.append(x[idx])
        d2 = np.minimum(d2, (x - x[idx]) ** 2)
    return np.sort(np.array(centers))


def fit_gmm_em(column, n_components: int = 10, tol: float = 1e-6, max_iter: int = 200,
               seed: int = 0, weight_floor: float = 0.005) -> GmmColumnModel:
    """Fit a univariate Gaussian mixture by expectation-maximization.

    Means are seeded k-means++ style from ``seed``; variances start at the
    column variance.  Iteration stops once the mean log-likelihood improves
    by less than ``tol``.  Component variances are floored at ``1e-6`` times
    the column variance (a constrained M-step, so EM stays monotone).
    Components whose final weight is below ``weight_floor`` are pruned.
    """
    x = np.asarray(column, dtype=np.float64).ravel()
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    if not np.all(np.isfinite(x)):
        raise ValueError("column contains non-finite values")
    if len(x) < n_components:
        raise ValueError(f"column has {len(x)} values, fewer than {n_components} components")
    n_distinct = len(np.unique(x))
    if n_components > n_distinct:
        raise ValueError(f"{n_components} components requested but column has {n_distinct} distinct values")

    rng = np.random.default_rng(seed)
    n = len(x)
    global_var = float(np.var(x))
    if global_var == 0.0:
        global_var = 1.0
    var_floor = 1e-6 * global_var

    means = _kmeanspp_means(x, n_components, rng) if n_components > 1 else np.array([np.mean(x)])
    model = GmmColumnModel(np.full(n_components, 1.0 / n_components), means,
                           np.full(n_components, global_var))
    history = [model.mean_log_likelihood(x)]

    it = 0
    for it in range(1, max_iter + 1):
        resp = model.responsibilities(x)
        nk = resp.sum(axis=0)
        alive = nk > 0
        means = model.means.copy()
        variances = model.variances.copy()
        safe_nk = np.where(alive, nk, 1.0)
        new_means = (resp * x[:, None]).sum(axis=0) / safe_nk
        means[alive] = new_means[alive]
        new_vars = (resp * (x[:, None] - means) ** 2).sum(axis=0) / safe_nk
        variances[alive] = np.maximum(new_vars[alive], var_floor)
        model = GmmColumnModel(nk / n, means, variances)
        history.append(model.mean_log_likelihood(x))
        if history[-1] - history[-2] < tol:
            break
    model.n_iter = it
    model.log_likelihood = history

    keep = model.weights >= weight_floor
    if not keep.any():
        keep = model.weights == model.weights.max()
    if not keep.all():
        logger.debug("pruning %d of %d mixture components", int((~keep).sum()), n_components)
        w = model.weights[keep]
        model = GmmColumnModel(w / w.sum(), model.means[keep], model.variances[keep],
                               history, model.n_iter)
    return model


def bic(model: GmmColumnModel, x) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    n_params = 3 * model.n_components - 1
    return -2.0 * len(x) * model.mean_log_likelihood(x) + n_params * np.log(len(x))


def select_gmm_bic(column, max_components: int = 10, tol: float = 1e-6, max_iter: int = 200,
                   seed: int = 0, weight_floor: float = 0.005) -> GmmColumnModel:
    """Fit mixtures with 1..max_components components; keep the lowest BIC.

    Plain EM keeps every component alive, so an over-sized mixture splits one
    Gaussian into many overlapping pieces; BIC picks the smallest adequate M.
    """
    best, best_bic = None, np.inf
    for m in range(1, max_components + 1):
        model = fit_gmm_em(column, m, tol, max_iter, seed, weight_floor)
        score = bic(model, column)
        if score < best_bic:
            best, best_bic = model, score
    return best


# ------------------------------------------------------------------ mode encoding

@dataclass
class ModeEncodedValue:
    indicator: np.ndarray  # one-hot over components, shape (..., M)
    scalar: np.ndarray  # in [-1, 1], shape (...)

    @property
    def mode(self) -> np.ndarray:
        return np.argmax(self.indicator, axis=-1)


def _require_fitted(model) -> None:
    if model is None or not isinstance(model, GmmColumnModel) or model.n_components == 0:
        raise ValueError("mode normalization needs a fitted GmmColumnModel")


def mode_normalize(value, model: GmmColumnModel) -> ModeEncodedValue:
    _require_fitted(model)
    x = np.asarray(value, dtype=np.float64)
    flat = x.ravel()
    mode = np.argmax(model.component_log_density(flat), axis=1)
    scalar = np.clip((flat - model.means[mode]) / (4.0 * model.stds[mode]), -1.0, 1.0)
    indicator = np.zeros((len(flat), model.n_components))
    indicator[np.arange(len(flat)), mode] = 1.0
    return ModeEncodedValue(indicator.reshape(x.shape + (model.n_components,)), scalar.reshape(x.shape))


def mode_denormalize(encoded: ModeEncodedValue, model: GmmColumnModel) -> np.ndarray:
    _require_fitted(model)
    ind = np.asarray(encoded.indicator, dtype=np.float64)
    if ind.shape[-1] != model.n_components:
        raise ValueError(f"indicator width {ind.shape[-1]} != {model.n_components} components")
    ones = (ind == 1.0).sum(axis=-1)
    zeros = (ind == 0.0).sum(axis=-1)
    if np.any(ones != 1) or np.any(ones + zeros != model.n_components):
        raise ValueError("mode indicator is not one-hot")
    mode = np.argmax(ind, axis=-1)
    scalar = np.asarray(encoded.scalar, dtype=np.float64)
    return scalar * 4.0 * model.stds[mode] + model.means[mode]


# ------------------------------------------------------------------ whole-table encoder

@dataclass
class PreprocessConfig:
    encoding: str = "gmm"  # "gmm" or "minmax"
    n_modes: int = 10
    tol: float = 1e-6
    max_iter: int = 200
    weight_floor: float = 0.005
    select_modes: str = "bic"  # "bic" (best of 1..n_modes) or "fixed"
    scale_before_gmm: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.encoding not in ("gmm", "minmax"):
            raise ValueError(f"unknown encoding {self.encoding!r}")
        if self.select_modes not in ("bic", "fixed"):
            raise ValueError(f"unknown mode selection {self.select_modes!r}")
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")


@dataclass
class ColumnNormalizer:
    """Fitted state for one feature column."""

    name: str
    encoding: str
    minmax: MinMaxParams
    gmm: GmmColumnModel | None = None
    scale_before_gmm: bool = False

    @property
    def width(self) -> int:
        return 1 if self.encoding == "minmax" else 1 + self.gmm.n_components

    def _gmm_input(self, x):
        return self.minmax.transform(x) if self.scale_before_gmm else np.asarray(x, dtype=np.float64)

    def transform(self, x) -> np.ndarray:
        """Encode a column to shape (n, width): [scalar, indicator...]."""
        x = np.asarray(x, dtype=np.float64)
        if self.encoding == "minmax":
            return self.minmax.transform(x)[:, None]
        enc = mode_normalize(self._gmm_input(x), self.gmm)
        return np.concatenate([enc.scalar[:, None], enc.indicator], axis=1)

    def inverse_transform(self, block: np.ndarray) -> np.ndarray:
        block = np.asarray(block, dtype=np.float64)
        if self.encoding == "minmax":
            return self.minmax.inverse_transform(block[..., 0])
        v = mode_denormalize(ModeEncodedValue(block[..., 1:], block[..., 0]), self.gmm)
        return self.minmax.inverse_transform(v) if self.scale_before_gmm else v


@dataclass(frozen=True)
class ColumnSlot:
    """Position of one column inside an encoded row."""

    name: str
    scalar: int
    block_start: int
    block_width: int  # 0 for min-max columns


@dataclass
class TableEncoder:
    normalizers: list[ColumnNormalizer]

    @property
    def columns(self) -> list[str]:
        return [n.name for n in self.normalizers]

    @property
    def width(self) -> int:
        return sum(n.width for n in self.normalizers)

    @property
    def layout(self) -> list[ColumnSlot]:
        slots, pos = [], 0
        for n in self.normalizers:
            bw = n.width - 1
            slots.append(ColumnSlot(n.name, pos, pos + 1, bw))
            pos += n.width
        return slots

    def transform(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(self.normalizers):
            raise ValueError(f"expected {len(self.normalizers)} columns, got shape {values.shape}")
        return np.concatenate([n.transform(values[:, j]) for j, n in enumerate(self.normalizers)], axis=1)

    def inverse_transform(self, encoded: np.ndarray) -> np.ndarray:
        encoded = np.asarray(encoded, dtype=np.float64)
        if encoded.shape[-1] != self.width:
            raise ValueError(f"encoded width {encoded.shape[-1]} != {self.width}")
        cols = []
        for slot, n in zip(self.layout, self.normalizers):
            cols.append(n.inverse_transform(encoded[..., slot.scalar:slot.block_start + slot.block_width]))
        return np.stack(cols, axis=-1)

    def minmax_transform(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        return np.stack([n.minmax.transform(values[:, j]) for j, n in enumerate(self.normalizers)], axis=1)


def fit_encoder(dataset: Dataset, config: PreprocessConfig | None = None) -> TableEncoder:
    """Fit one normalizer per column of ``dataset`` (normal rows only)."""
    config = config or PreprocessConfig()
    normalizers = []
    for j, name in enumerate(dataset.columns):
        col = dataset.values[:, j]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            mm = fit_minmax(col)
        for w in caught:
            logger.warning("column %s: %s", name, w.message)
        if config.encoding == "minmax":
            normalizers.append(ColumnNormalizer(name, "minmax", mm))
            continue
        gmm_in = mm.transform(col) if config.scale_before_gmm else col
        m = min(config.n_modes, len(np.unique(gmm_in)))
        if config.select_modes == "bic":
            gmm = select_gmm_bic(gmm_in, m, config.tol, config.max_iter, config.seed + j, config.weight_floor)
        else:
            gmm = fit_gmm_em(gmm_in, m, config.tol, config.max_iter, config.seed + j, config.weight_floor)
        logger.info("column %s: %d mixture components after %d EM iterations", name, gmm.n_components, gmm.n_iter)
        normalizers.append(ColumnNormalizer(name, "gmm", mm, gmm, config.scale_before_gmm))
    return TableEncoder(normalizers)
