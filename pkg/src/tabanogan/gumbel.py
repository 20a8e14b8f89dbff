"""Gumbel-softmax activations.

Two variants are provided:

* the noised relaxation, softmax((logits + G) / tau) with G ~ Gumbel(0, 1);
* the hard variant used by the generator, which applies *no* noise: the
  tempered softmax is discretized to a one-hot vector in the forward pass and
  the gradient of the soft vector is passed straight through.  Identical
  logits therefore always give an identical output.

Functions accept plain arrays or :class:`~tabanogan.autodiff.Node` values;
with nodes the result is recorded on the tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

UNIFORM_EPS = 1e-12


@dataclass(frozen=True)
class GumbelConfig:
    temperature: float = 0.2
    variant: str = "hard"  # "hard" or "soft"

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.variant not in ("hard", "soft"):
            raise ValueError(f"unknown Gumbel variant {self.variant!r}")


def gumbel_from_uniform(u) -> np.ndarray:
    u = np.clip(np.asarray(u, dtype=np.float64), UNIFORM_EPS, 1.0 - UNIFORM_EPS)
    return -np.log(-np.log(u))


def sample_gumbel(n, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` standard Gumbel variates (``n`` may be a shape tuple)."""
    shape = (n,) if np.isscalar(n) else tuple(n)
    if any(s < 1 for s in shape):
        raise ValueError(f"sample size must be >= 1, got {n}")
    return gumbel_from_uniform(rng.random(shape))


def _check_finite(values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError("logits must be finite")


def _tau(config) -> float:
    return config.temperature if isinstance(config, GumbelConfig) else float(config)


def gumbel_softmax(logits, config, noise):
    """softmax((logits + noise) / tau) over the last axis."""
    tau = _tau(config)
    if isinstance(logits, ad.Node):
        _check_finite(logits.value)
        noise = np.asarray(noise, dtype=np.float64)
        if noise.shape != logits.value.shape:
            raise ValueError(f"noise shape {noise.shape} does not match logits {logits.value.shape}")
        return ad.softmax((logits + noise) * (1.0 / tau))
    logits = np.asarray(logits, dtype=np.float64)
    _check_finite(logits)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != logits.shape:
        raise ValueError(f"noise shape {noise.shape} does not match logits {logits.shape}")
    return ad._softmax((logits + noise) / tau)


def one_hot_argmax(y: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximal index, which is the tie-break rule
    idx = np.argmax(y, axis=-1)
    out = np.zeros_like(y)
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


def hard_gumbel_softmax(logits, config):
    """Noise-free hard Gumbel softmax with a straight-through gradient.

    Forward: one-hot at argmax of softmax(logits / tau), lowest index on ties.
    Backward: gradient of softmax(logits / tau).
    """
    tau = _tau(config)
    if isinstance(logits, ad.Node):
        _check_finite(logits.value)
        soft = ad.softmax(logits * (1.0 / tau))
        return ad.straight_through(one_hot_argmax(soft.value), soft)
    logits = np.asarray(logits, dtype=np.float64)
    _check_finite(logits)
    return one_hot_argmax(ad._softmax(logits / tau))
