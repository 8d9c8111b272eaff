"""seld-forge: a desk-scale sound event localization and detection toolkit.

Synthetic first-order-Ambisonics scenes with exact ground truth, spatial
feature extraction (log-mel + intensity vectors, SALSA, dual-array
stacking), augmentation chains, track-wise models trained with a
permutation-searched loss, track-wise ensembling, and location-sensitive
F-score evaluation.
"""

__version__ = "0.1.0"
