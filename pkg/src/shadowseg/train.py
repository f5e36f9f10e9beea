"""Mini-batch training of the U-net with Adam."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError
from .loss import LossConfig, loss_terms
from .tensor import GradTape, Tensor, channel
from .unet import apply, config_of, save_checkpoint

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 140
    batch_size: int = 4
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0  # 0 disables periodic checkpoints

    def validate(self) -> "TrainConfig":
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in [0, 1)")
        if self.adam_eps <= 0 or self.seed < 0 or self.checkpoint_every < 0:
            raise ConfigError("adam_eps must be positive; seed and checkpoint_every non-negative")
        return self


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState,
              cfg: TrainConfig) -> tuple[dict[str, Tensor], AdamState]:
    """One Adam update, applied to ``params`` and ``state`` in place."""
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p.data -= (cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)).astype(p.dtype)
    return params, state


def stack_dataset(dataset, dtype=np.float32):
    """Images ``[N,1,H,W]`` and the two target stacks ``[N,H,W]``."""
    if not dataset:
        raise ConfigError("dataset is empty")
    shape = dataset[0].image.shape
    for k, s in enumerate(dataset):
        if s.image.shape != shape:
            raise DimensionError(f"sample {k}: image shape {s.image.shape} differs from {shape}")
    images = np.stack([s.image for s in dataset]).astype(dtype)[:, None]
    binary = np.stack([s.gt_binary for s in dataset]).astype(dtype)
    centroid = np.stack([s.gt_centroid for s in dataset]).astype(dtype)
    return images, binary, centroid


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    bce: float
    tvmse: float


def train_epochs(params: dict[str, Tensor], dataset, tcfg: TrainConfig, lcfg: LossConfig | None = None,
                 checkpoint_dir=None, state: AdamState | None = None):
    """Train ``params`` in place; returns ``(params, history)``.

    Each epoch visits the samples in a permutation seeded by ``seed ^ epoch``.
    Losses are averaged over the batch before differentiation.  The history
    holds sample-weighted epoch means of the total loss and its components.
    """
    tcfg.validate()
    lcfg = (lcfg or LossConfig()).validate()
    cfg = config_of(params)
    depth_div = 2**cfg.depth
    images, binary, centroid = stack_dataset(dataset, next(iter(params.values())).dtype)
    n = images.shape[0]
    h, w = images.shape[-2:]
    if h % depth_div or w % depth_div:
        raise DimensionError(f"sample 0: {h}x{w} not divisible by {depth_div}")
    state = state or AdamState()
    names = list(params)
    history: list[EpochRecord] = []
    for epoch in range(tcfg.epochs):
        order = np.random.default_rng(tcfg.seed ^ epoch).permutation(n)
        sums = np.zeros(3)
        for start in range(0, n, tcfg.batch_size):
            idx = order[start : start + tcfg.batch_size]
            with GradTape() as tape:
                out = apply(params, Tensor(images[idx]))
                total, lb, lc = loss_terms(
                    (channel(out, 0), binary[idx]), (channel(out, 1), centroid[idx]), lcfg
                )
            grads = dict(zip(names, tape.gradient(total, [params[k] for k in names])))
            adam_step(params, grads, state, tcfg)
            sums += len(idx) * np.array([float(total.data), float(lb.data), float(lc.data)])
        rec = EpochRecord(epoch + 1, *(sums / n))
        if not all(math.isfinite(v) for v in (rec.mean_loss, rec.bce, rec.tvmse)):
            raise FloatingPointError(f"non-finite loss at epoch {rec.epoch}")
        history.append(rec)
        log.info("epoch %d loss %.6f (bce %.6f, tv-mse %.6f)", rec.epoch, rec.mean_loss, rec.bce, rec.tvmse)
        if checkpoint_dir is not None and tcfg.checkpoint_every and rec.epoch % tcfg.checkpoint_every == 0:
            Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
            save_checkpoint(params, cfg, Path(checkpoint_dir) / f"epoch_{rec.epoch:04d}.stck")
    return params, history


def write_history(path, history: list[EpochRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "mean_loss", "bce_component", "tvmse_component"])
        for r in history:
            w.writerow([r.epoch, f"{r.mean_loss:.8f}", f"{r.bce:.8f}", f"{r.tvmse:.8f}"])
