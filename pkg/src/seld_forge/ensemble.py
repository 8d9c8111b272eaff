"""Multi-model combination for track-wise outputs.

Track-wise models allocate a given event to an arbitrary track, so naive
per-track averaging across models misaligns events: averaging near-one-hot
rows that sit on different tracks pushes every row's maximum below the 0.5
detection threshold and collapses detections. average_ensemble implements
that (deliberately naive) baseline; the trainable realignment model
consumes all models' flattened predictions and re-emits consistent
track-wise output, trained with the same permutation-searched loss as the
single models.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .nn.models import EnsembleNetConfig, TrackwiseEnsembleNet
from .nn.train import TrainConfig, TrainSample, train

Prediction = tuple[np.ndarray, np.ndarray]  # sed (T, M, K), doa (T, M, 3)


def _check_shapes(preds: list[Prediction]):
    if not preds:
        raise ConfigError("no predictions given")
    sed0, doa0 = preds[0]
    for sed, doa in preds[1:]:
        if sed.shape != sed0.shape or doa.shape != doa0.shape:
            raise ConfigError(
                f"prediction shapes differ: {sed.shape}/{doa.shape} vs {sed0.shape}/{doa0.shape}"
            )


def average_ensemble(preds: list[Prediction]) -> Prediction:
    """Elementwise mean across models, track index by track index."""
    _check_shapes(preds)
    sed = np.mean([p[0] for p in preds], axis=0)
    doa = np.mean([p[1] for p in preds], axis=0)
    return sed, doa


def ensemble_input_dim(n_models: int, n_tracks: int, n_classes: int) -> int:
    return n_models * n_tracks * (n_classes + 3)


def build_ensemble_input(preds: list[Prediction]) -> np.ndarray:
    """Flatten per frame: for each model, sed rows track-major, then doa
    rows track-major. Layout version 1; round-trips exactly."""
    _check_shapes(preds)
    if len(preds) < 2:
        raise ConfigError("ensemble input needs at least 2 models")
    t_len = preds[0][0].shape[0]
    blocks = []
    for sed, doa in preds:
        blocks.append(sed.reshape(t_len, -1))
        blocks.append(doa.reshape(t_len, -1))
    return np.concatenate(blocks, axis=1)


def split_ensemble_input(x: np.ndarray, n_models: int, n_tracks: int, n_classes: int) -> list[Prediction]:
    """Inverse of build_ensemble_input."""
    t_len, dim = x.shape
    if dim != ensemble_input_dim(n_models, n_tracks, n_classes):
        raise ConfigError(f"input dim {dim} does not match layout")
    per_model = n_tracks * (n_classes + 3)
    preds = []
    for i in range(n_models):
        block = x[:, i * per_model : (i + 1) * per_model]
        sed = block[:, : n_tracks * n_classes].reshape(t_len, n_tracks, n_classes)
        doa = block[:, n_tracks * n_classes :].reshape(t_len, n_tracks, 3)
        preds.append((sed.copy(), doa.copy()))
    return preds


# ---------------------------------------------------------------------------
# Synthetic track-permuted predictors
# ---------------------------------------------------------------------------


def _random_tilt(u: np.ndarray, angle: float, rng: np.random.Generator) -> np.ndarray:
    """Rotate unit vector u by `angle` toward a uniformly random direction
    in its tangent plane."""
    # build an orthonormal basis of the plane orthogonal to u
    a = np.array([1.0, 0.0, 0.0]) if abs(u[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(u, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(u, e1)
    phi = rng.uniform(0.0, 2.0 * np.pi)
    tangent = np.cos(phi) * e1 + np.sin(phi) * e2
    return np.cos(angle) * u + np.sin(angle) * tangent


def synth_permuted_predictors(
    label_seqs: list[tuple[np.ndarray, np.ndarray]],
    n_models: int,
    noise_rad: float,
    seed: int,
    smooth_hi: float = 0.9,
    smooth_lo: float = 0.1,
    jitter: float = 0.05,
) -> list[list[Prediction]]:
    """Near-perfect predictors that differ only in track allocation.

    Returns [clip][model] predictions: ground truth with a per-clip random
    track permutation, smoothed/jittered activity probabilities, and each
    DoA tilted by a Gaussian-distributed angle (sigma = noise_rad).
    """
    out: list[list[Prediction]] = []
    for clip_idx, (sed_gt, doa_gt) in enumerate(label_seqs):
        t_len, m, k = sed_gt.shape
        models = []
        for model_idx in range(n_models):
            rng = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence([seed, clip_idx, model_idx]))
            )
            perm = rng.permutation(m)
            sed = sed_gt[:, perm, :] * (smooth_hi - smooth_lo) + smooth_lo
            sed = sed + rng.uniform(-jitter, jitter, size=sed.shape)
            doa = doa_gt[:, perm, :].copy()
            for t in range(t_len):
                for track in range(m):
                    u = doa[t, track]
                    norm = np.linalg.norm(u)
                    if norm > 0 and noise_rad > 0:
                        doa[t, track] = _random_tilt(u / norm, rng.normal(0.0, noise_rad), rng)
            models.append((sed, doa))
        out.append(models)
    return out


def apply_track_permutation(pred: Prediction, perm: np.ndarray) -> Prediction:
    sed, doa = pred
    return sed[:, perm, :], doa[:, perm, :]


# ---------------------------------------------------------------------------
# Training the realignment model
# ---------------------------------------------------------------------------


def make_ensemble_samples(
    preds_per_clip: list[list[Prediction]],
    targets_per_clip: list[tuple[np.ndarray, np.ndarray]],
) -> list[TrainSample]:
    samples = []
    for idx, (preds, (sed_t, doa_t)) in enumerate(zip(preds_per_clip, targets_per_clip)):
        x = build_ensemble_input(preds)
        samples.append(TrainSample(x, sed_t, doa_t, clip_id=f"ens_{idx:04d}"))
    return samples


def train_ensemble(
    samples: list[TrainSample],
    net_cfg: EnsembleNetConfig,
    train_cfg: TrainConfig,
) -> tuple[TrackwiseEnsembleNet, dict, list[dict]]:
    model = TrackwiseEnsembleNet(net_cfg)
    params, history = train(model, samples, train_cfg)
    return model, params, history


def predict_ensemble(model: TrackwiseEnsembleNet, params: dict, preds: list[Prediction]) -> Prediction:
    x = build_ensemble_input(preds)
    sed, doa, _ = model.forward(params, x)
    return sed, doa
