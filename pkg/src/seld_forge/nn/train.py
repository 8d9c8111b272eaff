"""Training loop shared by the toy and ensemble models.

Deterministic given (dataset order, config seed): shuffling uses a local
generator, gradient accumulation runs in fixed order, and single-threaded
numpy keeps reductions reproducible.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NumericalError
from .loss import LossConfig, pit_loss, pit_loss_grad
from .optim import AdamW, two_stage_lr

log = logging.getLogger(__name__)


@dataclass
class TrainSample:
    """features: model input ((C, T, B) or (T, D)); targets at output rate."""

    features: np.ndarray
    sed: np.ndarray
    doa: np.ndarray
    clip_id: str = ""


@dataclass
class TrainConfig:
    epochs: int = 30
    base_lr: float = 3e-4
    final_lr: float = 3e-5
    switch_fraction: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 4
    segment_frames: int | None = None  # input frames per training segment
    sed_weight: float = 0.5
    seed: int = 0

    def validate(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("bad epochs/batch_size")
        if not (0.0 <= self.switch_fraction <= 1.0):
            raise ConfigError("switch_fraction outside [0, 1]")


def loss_and_gradients(model, params: dict, sample: TrainSample, loss_cfg: LossConfig):
    """Forward + permutation-frozen backward for one sample."""
    sed, doa, cache = model.forward(params, sample.features)
    if sed.shape != sample.sed.shape:
        raise ConfigError(
            f"target shape {sample.sed.shape} does not match output {sed.shape} "
            f"(clip {sample.clip_id!r})"
        )
    loss, perms = pit_loss(sed, doa, sample.sed, sample.doa, loss_cfg)
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite loss on clip {sample.clip_id!r}")
    dsed, ddoa = pit_loss_grad(sed, doa, sample.sed, sample.doa, perms, loss_cfg)
    grads = model.backward(params, cache, dsed, ddoa)
    return loss, grads, perms


def segment_samples(samples: list[TrainSample], segment_frames: int | None, time_stride: int) -> list[TrainSample]:
    """Split each sample into fixed-length time segments.

    segment_frames counts model-input frames and is snapped down to a
    multiple of the model's time stride so targets slice cleanly.
    """
    if segment_frames is None:
        return list(samples)
    seg = (segment_frames // time_stride) * time_stride
    if seg <= 0:
        raise ConfigError(f"segment_frames {segment_frames} below time stride {time_stride}")
    out = []
    for s in samples:
        t_in = s.features.shape[-2] if s.features.ndim == 3 else s.features.shape[0]
        n_segs = max(1, t_in // seg)
        for j in range(n_segs):
            lo, hi = j * seg, min((j + 1) * seg, t_in)
            lo_t, hi_t = lo // time_stride, hi // time_stride
            if hi_t <= lo_t:
                continue
            feats = s.features[:, lo:hi, :] if s.features.ndim == 3 else s.features[lo:hi]
            out.append(TrainSample(feats, s.sed[lo_t:hi_t], s.doa[lo_t:hi_t], f"{s.clip_id}#{j}"))
    return out


def train(
    model,
    dataset: list[TrainSample],
    cfg: TrainConfig,
    params: dict | None = None,
    eval_fn=None,
):
    """Returns (params, history); history has one record per epoch."""
    cfg.validate()
    if not dataset:
        raise ConfigError("training dataset is empty")
    if params is None:
        params = model.init_params(cfg.seed)
    loss_cfg = LossConfig(sed_weight=cfg.sed_weight)
    segments = segment_samples(dataset, cfg.segment_frames, model.time_stride)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, 1])))
    opt = AdamW(params, lr=cfg.base_lr, weight_decay=cfg.weight_decay)
    history = []
    for epoch in range(cfg.epochs):
        lr = two_stage_lr(epoch, cfg.epochs, cfg.base_lr, cfg.final_lr, cfg.switch_fraction)
        order = rng.permutation(len(segments))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            acc = {name: np.zeros_like(val) for name, val in params.items()}
            batch_loss = 0.0
            for idx in batch:
                loss, grads, _ = loss_and_gradients(model, params, segments[idx], loss_cfg)
                batch_loss += loss
                for name in acc:
                    acc[name] += grads[name]
            scale = 1.0 / len(batch)
            for name in acc:
                acc[name] *= scale
            opt.step(params, acc, lr=lr)
            epoch_loss += batch_loss
        record = {"epoch": epoch, "lr": lr, "train_loss": epoch_loss / len(segments)}
        if eval_fn is not None:
            record["val_metric"] = float(eval_fn(params))
        history.append(record)
        log.info("epoch %d lr %.2e loss %.6f", epoch, lr, record["train_loss"])
    return params, history
