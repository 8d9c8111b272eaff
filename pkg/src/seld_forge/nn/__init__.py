"""From-scratch numpy networks: track-wise toy model, ensemble model,
permutation-searched loss, AdamW, and the training loop. Everything runs in
float64 with hand-derived backward passes so gradients can be verified
against central finite differences.
"""
from .loss import LossConfig, binarize, pit_loss, pit_loss_grad
from .models import EnsembleNetConfig, ToyNetConfig, TrackwiseEnsembleNet, TrackwiseToyNet
from .optim import AdamW, two_stage_lr
from .train import TrainConfig, TrainSample, loss_and_gradients, train

__all__ = [
    "LossConfig",
    "binarize",
    "pit_loss",
    "pit_loss_grad",
    "ToyNetConfig",
    "EnsembleNetConfig",
    "TrackwiseToyNet",
    "TrackwiseEnsembleNet",
    "AdamW",
    "two_stage_lr",
    "TrainConfig",
    "TrainSample",
    "train",
    "loss_and_gradients",
]
