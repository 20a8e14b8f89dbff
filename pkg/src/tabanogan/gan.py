"""Generator/discriminator networks and the adversarial training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, DivergenceError, Node, Tape
from .gumbel import gumbel_softmax, hard_gumbel_softmax, sample_gumbel
from .preprocess import ColumnSlot

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 256
    latent_dim: int = 64
    generator_dims: tuple[int, ...] = (128, 128)
    discriminator_dims: tuple[int, ...] = (128, 64)
    g_lr: float = 2e-4
    g_beta1: float = 0.5
    g_beta2: float = 0.9
    d_lr: float = 2e-4
    d_beta1: float = 0.5
    d_beta2: float = 0.9
    patience: int = 50
    smoothing: int = 10
    warmup: int = 50  # epochs ignored by early stopping while D catches up
    temperature: float = 0.2
    gumbel: str = "hard"
    d_activation: str = "leaky"  # "leaky" (slope 0.2) or "relu"
    pac: int = 8  # rows the discriminator judges jointly
    seed: int = 0

    def __post_init__(self):
        self.generator_dims = tuple(int(d) for d in self.generator_dims)
        self.discriminator_dims = tuple(int(d) for d in self.discriminator_dims)
        for name in ("epochs", "batch_size", "latent_dim", "patience", "smoothing"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.epochs > 1 and self.patience >= self.epochs:
            # patience is only meaningful when it can trigger; clamp silently for tiny runs
            self.patience = self.epochs - 1
        if self.gumbel not in ("hard", "soft"):
            raise ValueError(f"unknown Gumbel variant {self.gumbel!r}")
        if self.d_activation not in ("leaky", "relu"):
            raise ValueError(f"unknown discriminator activation {self.d_activation!r}")
        if self.pac < 1 or self.warmup < 0:
            raise ValueError("pac must be >= 1 and warmup >= 0")


@dataclass
class LossHistory:
    generator: list[float] = field(default_factory=list)
    discriminator: list[float] = field(default_factory=list)
    stop_epoch: int = 0
    best_epoch: int = 0

    def __len__(self) -> int:
        return len(self.generator)


@dataclass
class GanModel:
    generator: list[np.ndarray]  # [W0, b0, W1, b1, ...], W stored (in, out)
    discriminator: list[np.ndarray]
    latent_dim: int
    layout: list[ColumnSlot]
    temperature: float = 0.2
    d_activation: str = "leaky"
    pac: int = 1

    @property
    def width(self) -> int:
        last = self.layout[-1]
        return last.block_start + last.block_width

    def check(self) -> None:
        if sum(1 + s.block_width for s in self.layout) != self.width:
            raise ValueError("output layout does not tile the encoded row")
        for params, first, last in ((self.generator, self.latent_dim, self.width),
                                    (self.discriminator, self.width * self.pac, 1)):
            dim = first
            for w, b in zip(params[::2], params[1::2]):
                if w.shape[0] != dim or b.shape != (w.shape[1],):
                    raise ValueError("parameter shapes do not chain")
                dim = w.shape[1]
            if dim != last:
                raise ValueError("network output width does not match layout")


def _init_mlp(rng: np.random.Generator, dims: list[int]) -> list[np.ndarray]:
    params = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def init_model(layout: list[ColumnSlot], config: TrainConfig, rng: np.random.Generator | None = None) -> GanModel:
    rng = rng or np.random.default_rng(config.seed)
    width = sum(1 + s.block_width for s in layout)
    gen = _init_mlp(rng, [config.latent_dim, *config.generator_dims, width])
    disc = _init_mlp(rng, [width * config.pac, *config.discriminator_dims, 1])
    model = GanModel(gen, disc, config.latent_dim, list(layout), config.temperature,
                     config.d_activation, config.pac)
    model.check()
    return model


def _mlp(tape: Tape, x: Node, params: list[Node], act=ad.relu) -> Node:
    n_layers = len(params) // 2
    h = x
    for i in range(n_layers):
        h = ad.linear_forward(h, params[2 * i], params[2 * i + 1])
        if i < n_layers - 1:
            h = act(h)
    return h


def _output_head(h: Node, model: GanModel, noise_rng: np.random.Generator | None) -> Node:
    parts = []
    for slot in model.layout:
        parts.append(ad.tanh(ad.slice_last(h, slot.scalar, slot.scalar + 1)))
        if slot.block_width:
            logits = ad.slice_last(h, slot.block_start, slot.block_start + slot.block_width)
            if noise_rng is None:
                parts.append(hard_gumbel_softmax(logits, model.temperature))
            else:
                noise = sample_gumbel(logits.shape, noise_rng)
                parts.append(gumbel_softmax(logits, model.temperature, noise))
    return ad.concat(parts)


def generator_graph(tape: Tape, z, model: GanModel, params: list[Node] | None = None,
                    noise_rng: np.random.Generator | None = None) -> Node:
    """Record the generator on ``tape``; ``params`` default to constants."""
    if not isinstance(z, Node):
        z = tape.constant(z)
    if z.shape[-1] != model.latent_dim:
        raise ValueError(f"latent vector has width {z.shape[-1]}, model expects {model.latent_dim}")
    if params is None:
        params = [tape.constant(p) for p in model.generator]
    return _output_head(_mlp(tape, z, params), model, noise_rng)


def discriminator_logit_graph(tape: Tape, x, model: GanModel, params: list[Node] | None = None,
                              packed: bool = True) -> Node:
    """Discriminator logits on ``tape``.

    With ``pac > 1`` and ``packed``, consecutive groups of ``pac`` rows are
    judged jointly (one logit per group).  With ``packed=False`` every row is
    judged as a pack of ``pac`` copies of itself, giving one logit per row.
    """
    if not isinstance(x, Node):
        x = tape.constant(x)
    if x.shape[-1] != model.width:
        raise ValueError(f"row width {x.shape[-1]} does not match layout width {model.width}")
    if params is None:
        params = [tape.constant(p) for p in model.discriminator]
    if model.pac > 1 and not packed:
        x = ad.concat([x] * model.pac)
    elif model.pac > 1:
        if len(x.shape) < 2 or x.shape[-2] % model.pac:
            raise ValueError(f"packed input needs a row count divisible by pac={model.pac}")
        x = ad.reshape(x, x.shape[:-2] + (x.shape[-2] // model.pac, model.pac * model.width))
    act = ad.relu if model.d_activation == "relu" else ad.leaky_relu
    return _mlp(tape, x, params, act)


def generator_forward(z, model: GanModel) -> np.ndarray:
    """Encoded row(s) for latent vector(s) ``z``; deterministic."""
    z = np.asarray(z, dtype=np.float64)
    return generator_graph(Tape(), z, model).value


def discriminator_forward(row, model: GanModel) -> np.ndarray:
    """Probability that ``row`` is real, shape ``row.shape[:-1]``."""
    row = np.asarray(row, dtype=np.float64)
    tape = Tape()
    return ad.sigmoid(discriminator_logit_graph(tape, row, model, packed=False)).value[..., 0]


def sample(model: GanModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` encoded rows from z ~ N(0, I)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return generator_forward(rng.standard_normal((n, model.latent_dim)), model)


def _bce_logits(logits: Node, target: float) -> Node:
    # mean of softplus(-l) for real targets, softplus(l) for fake ones
    return ad.mean_all(ad.softplus(logits * (-1.0 if target == 1.0 else 1.0)))


def train_gan(data: np.ndarray, layout: list[ColumnSlot], config: TrainConfig | None = None,
              progress=None) -> tuple[GanModel, LossHistory]:
    """Adversarial training on mode-encoded normal rows.

    Each batch does one discriminator step (binary cross-entropy on a real
    batch and a generated batch) and one generator step (non-saturating loss
    ``-log D(G(z))``).  Training stops when the ``smoothing``-epoch moving
    average of the generator loss has not improved for ``patience`` epochs;
    the parameters from the best moving-average epoch are returned.
    """
    config = config or TrainConfig()
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or len(data) == 0:
        raise ValueError("training data must be a non-empty 2-D array")
    if not np.all(np.isfinite(data)):
        raise ValueError("training data contains NaN or Inf")
    rng = np.random.default_rng(config.seed)
    model = init_model(layout, config, rng)
    if data.shape[1] != model.width:
        raise ValueError(f"data width {data.shape[1]} does not match layout width {model.width}")

    g_params = model.generator
    d_params = model.discriminator
    g_state = AdamState.for_params(g_params, config.g_lr, config.g_beta1, config.g_beta2)
    d_state = AdamState.for_params(d_params, config.d_lr, config.d_beta1, config.d_beta2)
    noise_rng = rng if config.gumbel == "soft" else None
    n = len(data)
    if n < config.pac:
        raise ValueError(f"need at least pac={config.pac} training rows, got {n}")
    bs = min(config.batch_size, n)
    bs -= bs % config.pac
    history = LossHistory()
    best_avg = np.inf
    best_params = ([p.copy() for p in g_params], [p.copy() for p in d_params])
    since_best = 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        g_sum = d_sum = 0.0
        n_batches = 0
        for start in range(0, n, bs):
            real = data[order[start:start + bs]]
            m = len(real) - len(real) % config.pac
            if m == 0:
                continue
            real = real[:m]

            # discriminator step
            z = rng.standard_normal((m, model.latent_dim))
            tape = Tape()
            fake = generator_graph(tape, z, model, noise_rng=noise_rng).value
            tape = Tape()
            dp = [tape.variable(p) for p in d_params]
            d_loss = (_bce_logits(discriminator_logit_graph(tape, real, model, dp), 1.0)
                      + _bce_logits(discriminator_logit_graph(tape, fake, model, dp), 0.0))
            grads = tape.backward(d_loss)
            d_params = ad.adam_step(d_params, [grads[p] for p in dp], d_state)
            model.discriminator = d_params

            # generator step
            z = rng.standard_normal((m, model.latent_dim))
            tape = Tape()
            gp = [tape.variable(p) for p in g_params]
            fake = generator_graph(tape, z, model, gp, noise_rng=noise_rng)
            g_loss = _bce_logits(discriminator_logit_graph(tape, fake, model), 1.0)
            grads = tape.backward(g_loss)
            g_params = ad.adam_step(g_params, [grads[p] for p in gp], g_state)
            model.generator = g_params

            g_sum += float(g_loss.value)
            d_sum += float(d_loss.value)
            n_batches += 1

        g_epoch, d_epoch = g_sum / n_batches, d_sum / n_batches
        if not (np.isfinite(g_epoch) and np.isfinite(d_epoch)):
            raise DivergenceError(f"non-finite loss at epoch {epoch}: G={g_epoch} D={d_epoch}")
        history.generator.append(g_epoch)
        history.discriminator.append(d_epoch)
        history.stop_epoch = epoch
        if progress is not None:
            progress(epoch, g_epoch, d_epoch)

        avg = float(np.mean(history.generator[-config.smoothing:]))
        if epoch <= config.warmup:
            continue
        if avg < best_avg:
            best_avg = avg
            history.best_epoch = epoch
            best_params = ([p.copy() for p in g_params], [p.copy() for p in d_params])
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                logger.info("early stop at epoch %d (best smoothed G loss at epoch %d)", epoch, history.best_epoch)
                break

    if history.best_epoch == 0:
        # every epoch fell inside the warm-up window
        history.best_epoch = history.stop_epoch
        best_params = ([p.copy() for p in g_params], [p.copy() for p in d_params])
    model.generator, model.discriminator = best_params
    return model, history
