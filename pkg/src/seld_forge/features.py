"""Spatial audio features: log-mel + intensity vectors, SALSA, dual-array stacking.

All transforms are pure and deterministic. The STFT uses a periodic Hann
window with no edge padding, so frames = floor((n - window) / hop) + 1 and
per-frame spectra match a direct DFT exactly. Log compression floors power
at 1e-10 (-100 dB) so silence stays finite.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, DataError, DegenerateMelBandError
from .scene import FoaClip

LOG_FLOOR = 1e-10
LOG_FLOOR_DB = 10.0 * np.log10(LOG_FLOOR)  # -100 dB
IV_EPS = 1e-8
SALSA_EV_CLIP = 5.0
SALSA_NOISE_GATE = 1e-8


class LayoutTag(Enum):
    LOGMEL_IV = "logmel_iv"  # 4 log-mel + 3 intensity-vector channels
    SALSA = "salsa"          # 4 log-linear + 3 eigenvector channels
    STACKED = "stacked"      # two 7-channel arrays concatenated


class BinSemantics(Enum):
    MEL = "mel"
    LINEAR = "linear"


@dataclass
class ComplexSpectrogram:
    data: np.ndarray  # (channels, frames, bins) complex
    window_size: int
    hop_size: int
    sample_rate: int

    def __post_init__(self):
        if self.data.ndim != 3:
            raise DataError(f"spectrogram must be 3-d, got {self.data.shape}")
        if self.data.shape[2] != self.window_size // 2 + 1:
            raise DataError(
                f"bins {self.data.shape[2]} != window/2+1 = {self.window_size // 2 + 1}"
            )

    @property
    def n_bins(self) -> int:
        return self.data.shape[2]


@dataclass
class FeatureTensor:
    data: np.ndarray  # (channels, frames, bins) real
    layout: LayoutTag
    bin_semantics: BinSemantics

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise DataError(f"feature tensor must be 3-d, got {self.data.shape}")
        expected = 14 if self.layout is LayoutTag.STACKED else 7
        if self.data.shape[0] != expected:
            raise DataError(
                f"{self.layout.value} expects {expected} channels, got {self.data.shape[0]}"
            )
        if not np.all(np.isfinite(self.data)):
            raise DataError("feature tensor contains non-finite values")

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    @property
    def n_bins(self) -> int:
        return self.data.shape[2]


def channel_mask_values(layout: LayoutTag) -> np.ndarray:
    """Per-channel 'silence' value: log floor for log channels, 0 for
    direction-style channels (IV / eigenvector)."""
    base = np.array([LOG_FLOOR_DB] * 4 + [0.0] * 3)
    if layout is LayoutTag.STACKED:
        return np.concatenate([base, base])
    return base


@dataclass
class MelFilterbank:
    weights: np.ndarray  # (n_mels, n_bins)
    fmin: float
    fmax: float
    sample_rate: int
    centers_hz: np.ndarray

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]

    @property
    def n_bins(self) -> int:
        return self.weights.shape[1]


# ---------------------------------------------------------------------------
# STFT
# ---------------------------------------------------------------------------


def hann_periodic(window_size: int) -> np.ndarray:
    n = np.arange(window_size)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / window_size)


def n_stft_frames(n_samples: int, window_size: int, hop_size: int) -> int:
    return (n_samples - window_size) // hop_size + 1


def stft(clip: FoaClip, window_size: int = 1024, hop_size: int = 400) -> ComplexSpectrogram:
    """Per-channel STFT, periodic Hann, no edge padding."""
    if window_size <= 0 or hop_size <= 0:
        raise ConfigError("window_size and hop_size must be positive")
    n = clip.n_samples
    if n < window_size:
        raise DataError(f"clip of {n} samples shorter than one {window_size}-sample window")
    frames = n_stft_frames(n, window_size, hop_size)
    window = hann_periodic(window_size)
    starts = np.arange(frames) * hop_size
    idx = starts[:, None] + np.arange(window_size)[None, :]
    segs = clip.channels[:, idx] * window  # (4, frames, window)
    data = np.fft.rfft(segs, axis=2)
    return ComplexSpectrogram(data, window_size, hop_size, clip.sample_rate)


# ---------------------------------------------------------------------------
# Mel filterbank
# ---------------------------------------------------------------------------


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_mels: int,
    n_bins: int,
    sample_rate: int,
    fmin: float = 20.0,
    fmax: float | None = None,
) -> MelFilterbank:
    """Triangular filters with centers uniform on the HTK mel scale.

    Ramps are linear in mel and peak-normalized (peak 1), so unnormalized
    triangles partition unity between the first and last center.
    """
    if fmax is None:
        fmax = sample_rate / 2.0
    if n_mels < 1:
        raise ConfigError("n_mels must be >= 1")
    if not (0.0 <= fmin < fmax <= sample_rate / 2.0):
        raise ConfigError(f"bad band [{fmin}, {fmax}] for fs={sample_rate}")
    window_size = 2 * (n_bins - 1)
    bin_hz = sample_rate / window_size
    edges_mel = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    centers_hz = mel_to_hz(edges_mel[1:-1])
    center_bins = np.round(centers_hz / bin_hz).astype(int)
    collisions = np.nonzero(np.diff(center_bins) == 0)[0]
    if collisions.size:
        raise DegenerateMelBandError(collisions.tolist())
    bins_mel = hz_to_mel(np.arange(n_bins) * bin_hz)
    lower = edges_mel[:-2][:, None]
    center = edges_mel[1:-1][:, None]
    upper = edges_mel[2:][:, None]
    rise = (bins_mel[None, :] - lower) / (center - lower)
    fall = (upper - bins_mel[None, :]) / (upper - center)
    weights = np.maximum(0.0, np.minimum(rise, fall))
    empty = np.nonzero(~weights.any(axis=1))[0]
    if empty.size:
        raise DegenerateMelBandError(empty.tolist())
    return MelFilterbank(weights, float(fmin), float(fmax), sample_rate, centers_hz)


# ---------------------------------------------------------------------------
# Feature families
# ---------------------------------------------------------------------------


def _check_four_channels(spec: ComplexSpectrogram):
    if spec.data.shape[0] != 4:
        raise DataError(f"expected 4-channel spectrogram, got {spec.data.shape[0]}")


def logmel(spec: ComplexSpectrogram, fb: MelFilterbank) -> np.ndarray:
    """(4, frames, n_mels) log mel power, floored at -100 dB."""
    _check_four_channels(spec)
    if fb.n_bins != spec.n_bins:
        raise ConfigError(f"filterbank bins {fb.n_bins} != spectrogram bins {spec.n_bins}")
    power = np.abs(spec.data) ** 2
    mel_power = power @ fb.weights.T
    return 10.0 * np.log10(np.maximum(mel_power, LOG_FLOOR))


def intensity_vector(spec: ComplexSpectrogram, fb: MelFilterbank) -> np.ndarray:
    """(3, frames, n_mels) unit-normalized acoustic intensity in mel space.

    I = Re(conj(W) * (X, Y, Z)) per linear bin, projected through the mel
    filterbank, then normalized per mel TF bin with an 1e-8 guard.
    """
    _check_four_channels(spec)
    if fb.n_bins != spec.n_bins:
        raise ConfigError(f"filterbank bins {fb.n_bins} != spectrogram bins {spec.n_bins}")
    w = spec.data[0]
    iv = np.real(np.conj(w)[None, :, :] * spec.data[1:4])  # (3, frames, bins)
    iv_mel = iv @ fb.weights.T
    norm = np.sqrt(np.sum(iv_mel**2, axis=0, keepdims=True))
    return iv_mel / (norm + IV_EPS)


def logmel_iv(spec: ComplexSpectrogram, fb: MelFilterbank) -> FeatureTensor:
    """7-channel tensor: 4 log-mel + 3 intensity-vector channels."""
    data = np.concatenate([logmel(spec, fb), intensity_vector(spec, fb)], axis=0)
    return FeatureTensor(data, LayoutTag.LOGMEL_IV, BinSemantics.MEL)


def _box_mean_2d(x: np.ndarray, ht: int, hf: int) -> np.ndarray:
    """Mean over a (2*ht+1, 2*hf+1) neighborhood of the last two axes,
    edges clipped to the valid region (divide by actual neighborhood size)."""
    t, f = x.shape[-2], x.shape[-1]
    csum = np.zeros(x.shape[:-2] + (t + 1, f + 1), dtype=x.dtype)
    np.cumsum(np.cumsum(x, axis=-2), axis=-1, out=csum[..., 1:, 1:])
    ti = np.arange(t)
    fi = np.arange(f)
    t0 = np.maximum(ti - ht, 0)
    t1 = np.minimum(ti + ht + 1, t)
    f0 = np.maximum(fi - hf, 0)
    f1 = np.minimum(fi + hf + 1, f)
    s = (
        csum[..., t1[:, None], f1[None, :]]
        - csum[..., t0[:, None], f1[None, :]]
        - csum[..., t1[:, None], f0[None, :]]
        + csum[..., t0[:, None], f0[None, :]]
    )
    counts = (t1 - t0)[:, None] * (f1 - f0)[None, :]
    return s / counts


def salsa(
    spec: ComplexSpectrogram,
    avg_time: int = 3,
    avg_freq: int = 3,
    ev_clip: float = SALSA_EV_CLIP,
    noise_gate: float = SALSA_NOISE_GATE,
) -> FeatureTensor:
    """7-channel tensor: 4 log-linear spectrograms + 3 eigenvector channels.

    Per TF bin the 4x4 spatial covariance is averaged over an
    avg_time x avg_freq neighborhood (edges clipped); the principal
    eigenvector is phase-normalized so its W component is real and
    nonnegative, divided by that component, clipped to [-ev_clip, ev_clip].
    Bins whose largest eigenvalue falls below noise_gate output zeros.
    """
    _check_four_channels(spec)
    if avg_time % 2 == 0 or avg_freq % 2 == 0:
        raise ConfigError("salsa averaging window sizes must be odd")
    power = np.abs(spec.data) ** 2
    log_lin = 10.0 * np.log10(np.maximum(power, LOG_FLOOR))

    x = spec.data  # (4, T, F)
    cov = x[:, None, :, :] * np.conj(x)[None, :, :, :]  # (4, 4, T, F)
    cov = _box_mean_2d(cov, avg_time // 2, avg_freq // 2)
    _, t, f = spec.data.shape
    cov_flat = np.transpose(cov, (2, 3, 0, 1)).reshape(t * f, 4, 4)
    eigvals, eigvecs = np.linalg.eigh(cov_flat)
    lead = eigvals[:, -1]
    v = eigvecs[:, :, -1]  # (t*f, 4)
    phase = np.exp(-1j * np.angle(v[:, 0]))
    v = v * phase[:, None]
    ratios = np.real(v[:, 1:4]) / (np.abs(v[:, 0:1]) + IV_EPS)
    ratios = np.clip(ratios, -ev_clip, ev_clip)
    ratios[lead < noise_gate] = 0.0
    ev = np.transpose(ratios.reshape(t, f, 3), (2, 0, 1))
    data = np.concatenate([log_lin, ev], axis=0)
    return FeatureTensor(data, LayoutTag.SALSA, BinSemantics.LINEAR)


def stack_arrays(feat_a: FeatureTensor, feat_b: FeatureTensor) -> FeatureTensor:
    """Concatenate two 7-channel tensors along channels, array A first."""
    if feat_a.layout is LayoutTag.STACKED or feat_b.layout is LayoutTag.STACKED:
        raise ConfigError("inputs to stack_arrays must be single-array tensors")
    if feat_a.layout is not feat_b.layout:
        raise ConfigError(f"layout mismatch: {feat_a.layout} vs {feat_b.layout}")
    if feat_a.data.shape != feat_b.data.shape:
        raise ConfigError(f"shape mismatch: {feat_a.data.shape} vs {feat_b.data.shape}")
    data = np.concatenate([feat_a.data, feat_b.data], axis=0)
    return FeatureTensor(data, LayoutTag.STACKED, feat_a.bin_semantics)


# ---------------------------------------------------------------------------
# Extraction configuration
# ---------------------------------------------------------------------------


@dataclass
class FeatureConfig:
    """Window/filterbank settings for both feature families."""

    logmel_window: int = 1024
    salsa_window: int = 512
    hop_size: int = 400
    n_mels: int = 128
    fmin: float = 20.0
    fmax: float | None = None
    salsa_avg_time: int = 3
    salsa_avg_freq: int = 3
    salsa_ev_clip: float = SALSA_EV_CLIP
    salsa_noise_gate: float = SALSA_NOISE_GATE

    @staticmethod
    def from_dict(d: dict) -> "FeatureConfig":
        cfg = FeatureConfig()
        for k, v in d.items():
            if not hasattr(cfg, k):
                raise ConfigError(f"unknown feature config key {k!r}")
            setattr(cfg, k, v)
        return cfg


def extract_logmel_iv(clip: FoaClip, cfg: FeatureConfig) -> FeatureTensor:
    spec = stft(clip, cfg.logmel_window, cfg.hop_size)
    fb = mel_filterbank(cfg.n_mels, spec.n_bins, clip.sample_rate, cfg.fmin, cfg.fmax)
    return logmel_iv(spec, fb)


def extract_salsa(clip: FoaClip, cfg: FeatureConfig) -> FeatureTensor:
    spec = stft(clip, cfg.salsa_window, cfg.hop_size)
    return salsa(spec, cfg.salsa_avg_time, cfg.salsa_avg_freq, cfg.salsa_ev_clip, cfg.salsa_noise_gate)


def extract_family(clip: FoaClip, family: str, cfg: FeatureConfig) -> FeatureTensor:
    if family == "logmel_iv":
        return extract_logmel_iv(clip, cfg)
    if family == "salsa":
        return extract_salsa(clip, cfg)
    raise ConfigError(f"unknown feature family {family!r}")
