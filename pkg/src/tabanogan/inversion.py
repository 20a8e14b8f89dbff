"""Anomaly scoring by latent-vector inversion.

For a query row ``x`` the latent vector ``z`` is optimized with Adam so that
the generator output ``G(z)`` matches ``x`` under mean squared error.  The
final (best) MSE is the anomaly score.  Several restarts run side by side;
each row gets its own RNG stream seeded with ``seed + row_id``, so a row's
score does not depend on what else is in the batch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tape
from .gan import GanModel, generator_graph

logger = logging.getLogger(__name__)


@dataclass
class InversionConfig:
    steps: int = 500
    restarts: int = 3
    lr: float = 3e-2
    beta1: float = 0.9
    beta2: float = 0.999
    tol: float = 1e-8
    window: int = 100
    seed: int = 0
    chunk_size: int = 512

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass
class AnomalyReport:
    score: float
    z: np.ndarray
    reconstruction: np.ndarray
    encoded_diff: np.ndarray  # |G(z*) - x| per encoded slot
    squared_diff: np.ndarray  # (G(z*) - x)**2, sums to score * width
    feature_scores: np.ndarray  # squared_diff summed per original column
    feature_diff: np.ndarray | None = None  # |decoded G(z*) - raw x| in data units
    restart_losses: np.ndarray | None = None
    flagged: bool | None = None


@dataclass
class InversionResult:
    z: np.ndarray  # (n, latent) best latent per row
    best_loss: np.ndarray  # (n,)
    restart_losses: np.ndarray  # (n, restarts) best loss reached by each restart
    trajectory: np.ndarray  # (n, steps + 1) running best loss of the winning restart
    failed: np.ndarray  # (n, restarts) restarts aborted by a non-finite loss


def _initial_latents(row_ids: Sequence[int], config: InversionConfig, latent_dim: int) -> np.ndarray:
    out = np.empty((len(row_ids), config.restarts, latent_dim))
    for i, rid in enumerate(row_ids):
        rng = np.random.default_rng(config.seed + int(rid))
        out[i] = rng.standard_normal((config.restarts, latent_dim))
    return out


def _invert_chunk(x: np.ndarray, z0: np.ndarray, model: GanModel, config: InversionConfig):
    b, r, _ = z0.shape
    target = x[:, None, :]
    z = z0.copy()
    best = np.full((b, r), np.inf)
    best_z = z.copy()
    traj = np.empty((b, r, config.steps + 1))
    active = np.ones((b, r), dtype=bool)
    failed = np.zeros((b, r), dtype=bool)
    state = AdamState.for_params([z], config.lr, config.beta1, config.beta2)

    for step in range(config.steps + 1):
        tape = Tape()
        zn = tape.variable(z)
        losses = ad.row_mse(generator_graph(tape, zn, model), target)
        loss_val = losses.value

        bad = ~np.isfinite(loss_val) & active
        failed |= bad
        active &= ~bad
        improved = active & (loss_val < best)
        best = np.where(improved, loss_val, best)
        best_z[improved] = z[improved]
        traj[..., step] = best
        if step == config.steps:
            break

        # freeze restarts that reached the tolerance or stopped improving
        active &= best > config.tol
        if step >= config.window:
            active &= traj[..., step - config.window] - best >= config.tol
        if not active.any():
            traj[..., step + 1:] = best[..., None]
            break

        grad = tape.backward(ad.sum_all(losses))[zn]
        mask = np.broadcast_to(active[..., None], z.shape)
        z = ad.adam_step([z], [np.where(mask, grad, 0.0)], state, mask=[mask], check_finite=False)[0]
        blown = active & ~np.all(np.isfinite(z), axis=-1)
        if blown.any():
            failed |= blown
            active &= ~blown
            z[blown] = best_z[blown]
    return best, best_z, traj, failed


def invert_latent(x, model: GanModel, config: InversionConfig | None = None,
                  row_ids: Sequence[int] | None = None, init: np.ndarray | None = None) -> InversionResult:
    """Best-of-restarts latent inversion for one row or a batch of rows.

    ``init`` (shape ``(n, restarts, latent)`` or ``(latent,)``) overrides the
    seeded random starting points.
    """
    config = config or InversionConfig()
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[-1] != model.width:
        raise ValueError(f"row width {x2.shape[-1]} does not match model width {model.width}")
    n = len(x2)
    row_ids = list(range(n)) if row_ids is None else list(row_ids)
    if len(row_ids) != n:
        raise ValueError("row_ids length does not match row count")
    if init is None:
        z0 = _initial_latents(row_ids, config, model.latent_dim)
    else:
        init = np.asarray(init, dtype=np.float64)
        if init.ndim < 3:
            init = init.reshape(1, -1, init.shape[-1])
        z0 = np.broadcast_to(init, (n,) + init.shape[1:]).copy()
    if z0.shape[-1] != model.latent_dim:
        raise ValueError(f"initial latent width {z0.shape[-1]} != {model.latent_dim}")

    best = np.empty((n, z0.shape[1]))
    best_z = np.empty_like(z0)
    traj = np.empty((n, z0.shape[1], config.steps + 1))
    failed = np.empty((n, z0.shape[1]), dtype=bool)
    for s in range(0, n, config.chunk_size):
        sl = slice(s, s + config.chunk_size)
        best[sl], best_z[sl], traj[sl], failed[sl] = _invert_chunk(x2[sl], z0[sl], model, config)

    if failed.all(axis=1).any():
        rows = [row_ids[i] for i in np.flatnonzero(failed.all(axis=1))]
        raise FloatingPointError(f"latent inversion diverged in every restart for rows {rows[:10]}")
    winner = np.argmin(np.where(failed, np.inf, best), axis=1)
    idx = np.arange(n)
    result = InversionResult(best_z[idx, winner], best[idx, winner], best, traj[idx, winner], failed)
    if single:
        result = InversionResult(result.z[0], result.best_loss[0], result.restart_losses[0],
                                 result.trajectory[0], result.failed[0])
    return result


def _reports(x: np.ndarray, inv: InversionResult, model: GanModel,
             decode: Callable[[np.ndarray], np.ndarray] | None, raw: np.ndarray | None) -> list[AnomalyReport]:
    # one stacked forward per row keeps each reconstruction batch-independent
    recon = generator_graph(Tape(), inv.z[:, None, :], model).value[:, 0, :]
    diff = recon - x
    sq = diff * diff
    scores = sq.mean(axis=-1)
    feature_scores = np.stack(
        [sq[:, s.scalar:s.block_start + s.block_width].sum(axis=1) for s in model.layout], axis=1)
    feature_diff = None
    if decode is not None:
        ref = raw if raw is not None else decode(x)
        feature_diff = np.abs(decode(recon) - ref)
    reports = []
    for i in range(len(x)):
        reports.append(AnomalyReport(
            score=float(scores[i]), z=inv.z[i], reconstruction=recon[i], encoded_diff=np.abs(diff[i]),
            squared_diff=sq[i], feature_scores=feature_scores[i],
            feature_diff=None if feature_diff is None else feature_diff[i],
            restart_losses=inv.restart_losses[i]))
    return reports


def anomaly_score(x, model: GanModel, config: InversionConfig | None = None, row_id: int = 0,
                  decode: Callable[[np.ndarray], np.ndarray] | None = None, raw=None) -> AnomalyReport:
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    raw = None if raw is None else np.asarray(raw, dtype=np.float64).reshape(1, -1)
    return score_batch(x, model, config, row_ids=[row_id], decode=decode, raw=raw)[0]


def score_batch(rows, model: GanModel, config: InversionConfig | None = None,
                row_ids: Sequence[int] | None = None,
                decode: Callable[[np.ndarray], np.ndarray] | None = None,
                raw=None) -> list[AnomalyReport]:
    """Score every row; element ``i`` equals ``anomaly_score(rows[i], row_id=row_ids[i])``.

    ``decode`` maps encoded rows back to data units for the per-feature
    differences; ``raw`` supplies the original values when available (the
    encoding clips extreme values, so decoding ``rows`` is lossy there).
    """
    config = config or InversionConfig()
    rows = np.asarray(rows, dtype=np.float64)
    if rows.size == 0:
        return []
    rows = np.atleast_2d(rows)
    inv = invert_latent(rows, model, config, row_ids=row_ids)
    return _reports(rows, inv, model, decode, None if raw is None else np.atleast_2d(np.asarray(raw, dtype=np.float64)))
