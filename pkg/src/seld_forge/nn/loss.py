"""Permutation-searched track-wise loss and prediction binarization.

Per frame the loss is min over all track permutations alpha of
sum_tracks [w * BCE(sed_pred_m, sed_target_alpha(m))
            + (1 - w) * MSE(doa_pred_m, doa_target_alpha(m))],
averaged over frames. BCE is averaged over classes and MSE over the three
coordinates, so the two terms are comparable per track. The argmin
permutation is returned per frame (lexicographically smallest on ties) and
is treated as constant during backprop.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, UnsupportedTrackCountError

MAX_TRACKS_FOR_SEARCH = 4
BCE_CLIP = 1e-7


@dataclass
class LossConfig:
    """sed_weight is the balance between the BCE and MSE terms, in [0, 1]."""

    sed_weight: float = 0.5
    bce_clip: float = BCE_CLIP

    def __post_init__(self):
        if not (0.0 <= self.sed_weight <= 1.0):
            raise ConfigError(f"sed_weight {self.sed_weight} outside [0, 1]")


def _pairwise_costs(pred_sed, pred_doa, tgt_sed, tgt_doa, cfg: LossConfig):
    """cost[t, i, j]: loss of prediction track i against target track j."""
    eps = cfg.bce_clip
    pc = np.clip(pred_sed, eps, 1.0 - eps)
    log_p = np.log(pc)
    log_q = np.log1p(-pc)
    k = pred_sed.shape[2]
    # bce[t,i,j] = -mean_k [ y_j log p_i + (1 - y_j) log(1 - p_i) ]
    bce = -(np.einsum("tik,tjk->tij", log_p, tgt_sed) + np.einsum("tik,tjk->tij", log_q, 1.0 - tgt_sed)) / k
    diff = pred_doa[:, :, None, :] - tgt_doa[:, None, :, :]
    mse = np.mean(diff**2, axis=3)
    return cfg.sed_weight * bce + (1.0 - cfg.sed_weight) * mse


def pit_loss(pred_sed, pred_doa, tgt_sed, tgt_doa, cfg: LossConfig | None = None):
    """Permutation-minimized loss.

    Returns (loss, perms) where perms[t] maps prediction track i to target
    track perms[t, i]. Track counts above 4 are rejected outright; the
    factorial search is the contract, there is no heuristic fallback.
    """
    cfg = cfg or LossConfig()
    t_len, m, _ = pred_sed.shape
    if tgt_sed.shape[0] != t_len or tgt_sed.shape[1] != m:
        raise ConfigError(f"prediction/target shape mismatch: {pred_sed.shape} vs {tgt_sed.shape}")
    if m > MAX_TRACKS_FOR_SEARCH:
        raise UnsupportedTrackCountError(
            f"{m} tracks: permutation search supports at most {MAX_TRACKS_FOR_SEARCH}"
        )
    cost = _pairwise_costs(pred_sed, pred_doa, tgt_sed, tgt_doa, cfg)
    perms = np.array(list(itertools.permutations(range(m))), dtype=np.int64)
    rows = np.arange(m)
    totals = np.stack([cost[:, rows, p].sum(axis=1) for p in perms], axis=1)
    best = np.argmin(totals, axis=1)  # first (lexicographic) argmin on ties
    loss = float(np.mean(totals[np.arange(t_len), best]))
    return loss, perms[best]


def pit_loss_grad(pred_sed, pred_doa, tgt_sed, tgt_doa, perms, cfg: LossConfig | None = None):
    """Gradients of the mean permutation-minimized loss w.r.t. predictions,
    with the per-frame permutation frozen."""
    cfg = cfg or LossConfig()
    t_len, m, k = pred_sed.shape
    ti = np.arange(t_len)[:, None]
    aligned_sed = tgt_sed[ti, perms]
    aligned_doa = tgt_doa[ti, perms]
    eps = cfg.bce_clip
    pc = np.clip(pred_sed, eps, 1.0 - eps)
    inside = (pred_sed > eps) & (pred_sed < 1.0 - eps)
    dsed = cfg.sed_weight * inside * (pc - aligned_sed) / (pc * (1.0 - pc) * k) / t_len
    ddoa = (1.0 - cfg.sed_weight) * 2.0 * (pred_doa - aligned_doa) / 3.0 / t_len
    return dsed, ddoa


def binarize(sed: np.ndarray, doa: np.ndarray, threshold: float = 0.5):
    """Emit (frame, track, class, unit_doa) for each track whose argmax
    class probability reaches the threshold (inclusive). Zero DoA rows stay
    zero; everything else is renormalized to unit length."""
    events = []
    t_len, m, _ = sed.shape
    for t in range(t_len):
        for track in range(m):
            k = int(np.argmax(sed[t, track]))
            if sed[t, track, k] >= threshold:
                v = doa[t, track].astype(np.float64)
                norm = np.linalg.norm(v)
                if norm > 0:
                    v = v / norm
                events.append((t, track, k, v))
    return events
