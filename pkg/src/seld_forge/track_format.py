"""Track-wise frame format shared by labels, model outputs, and ensembling.

A frame holds M class-agnostic tracks. Each track carries a row of K SED
values (activity per class) and a 3-vector Cartesian DoA. Label frames use
one-hot (or all-zero) SED rows and unit (or zero) DoA rows; prediction
frames carry probabilities and unconstrained direction estimates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_TRACKS = 3
DEFAULT_CLASSES = 14


@dataclass
class TrackwiseFrame:
    """One frame of track-wise output: sed (M, K) and doa (M, 3)."""

    sed: np.ndarray
    doa: np.ndarray

    def __post_init__(self):
        self.sed = np.asarray(self.sed, dtype=np.float64)
        self.doa = np.asarray(self.doa, dtype=np.float64)
        if self.sed.ndim != 2 or self.doa.ndim != 2 or self.doa.shape[1] != 3:
            raise ValueError(f"bad frame shapes sed={self.sed.shape} doa={self.doa.shape}")
        if self.sed.shape[0] != self.doa.shape[0]:
            raise ValueError("sed and doa must agree on track count")

    @property
    def n_tracks(self) -> int:
        return self.sed.shape[0]

    @property
    def n_classes(self) -> int:
        return self.sed.shape[1]


def frames_to_arrays(frames) -> tuple[np.ndarray, np.ndarray]:
    """Stack a frame sequence into (sed (T, M, K), doa (T, M, 3)) arrays."""
    if len(frames) == 0:
        raise ValueError("empty frame sequence")
    sed = np.stack([f.sed for f in frames])
    doa = np.stack([f.doa for f in frames])
    return sed, doa


def arrays_to_frames(sed: np.ndarray, doa: np.ndarray) -> list[TrackwiseFrame]:
    """Inverse of frames_to_arrays."""
    sed = np.asarray(sed, dtype=np.float64)
    doa = np.asarray(doa, dtype=np.float64)
    if sed.shape[0] != doa.shape[0]:
        raise ValueError("frame counts differ")
    return [TrackwiseFrame(sed[t], doa[t]) for t in range(sed.shape[0])]
