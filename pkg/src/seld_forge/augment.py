"""Augmentation operations and chain composition.

Four families: waveform mixup, FOA channel rotation (the 48 signed axis
permutations), and the two feature maskers (time/frequency stripes and
rectangular cutout). Maskers and chain composition are label-preserving;
rotation and cross-sample mixup change labels and therefore run only as
standalone pre-transforms, never inside chains.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import AugmentConfigError, ConfigError, OverlapCapError
from .features import FeatureTensor, channel_mask_values
from .scene import FoaClip, SourceEvent, find_overlap_violation

# ---------------------------------------------------------------------------
# FOA rotation group: all 3x3 signed permutation matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RotationElement:
    """One of the 48 signed axis permutations, acting on (X, Y, Z)."""

    index: int
    matrix: tuple  # 3x3 of ints, rows are output axes

    @property
    def matrix_array(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=np.float64)


def _build_rotation_group() -> list[RotationElement]:
    elements = []
    index = 0
    for perm in itertools.permutations(range(3)):
        for bits in range(8):
            signs = [1 - 2 * ((bits >> (2 - i)) & 1) for i in range(3)]
            mat = [[0, 0, 0] for _ in range(3)]
            for i in range(3):
                mat[i][perm[i]] = signs[i]
            elements.append(RotationElement(index, tuple(tuple(r) for r in mat)))
            index += 1
    return elements


_ROTATION_GROUP = _build_rotation_group()


def rotation_group() -> list[RotationElement]:
    """All 48 signed permutations, canonical order: permutation lexicographic,
    then sign bits; element 0 is the identity."""
    return list(_ROTATION_GROUP)


def rotation_index(matrix: np.ndarray) -> int:
    """Canonical index of a signed permutation matrix."""
    m = np.asarray(matrix)
    for el in _ROTATION_GROUP:
        if np.array_equal(m, el.matrix_array):
            return el.index
    raise ConfigError("matrix is not a signed permutation")


def rotate_foa(clip: FoaClip, rot: RotationElement) -> FoaClip:
    """Rotate clip channels: W unchanged, (X, Y, Z) mixed per rot.matrix.

    Swapping/sign-flipping channels of a clip equals re-encoding the scene
    with every source direction multiplied by rot.matrix.
    """
    out = clip.channels.copy()
    out[1:4] = rot.matrix_array @ clip.channels[1:4]
    return FoaClip(out, clip.sample_rate, array_id=clip.array_id)


def rotate_events(events: list[SourceEvent], rot: RotationElement) -> list[SourceEvent]:
    """Event positions multiplied by rot.matrix; everything else unchanged."""
    m = rot.matrix_array
    out = []
    for ev in events:
        p = m @ ev.position_array
        out.append(
            SourceEvent(
                class_id=ev.class_id,
                onset_s=ev.onset_s,
                offset_s=ev.offset_s,
                position=tuple(float(v) for v in p),
                signal_kind=ev.signal_kind,
                gain=ev.gain,
            )
        )
    return out


def rotate_label_arrays(doa: np.ndarray, rot: RotationElement) -> np.ndarray:
    """DoA label vectors (..., 3) multiplied by rot.matrix; SED untouched."""
    return doa @ rot.matrix_array.T


# ---------------------------------------------------------------------------
# Mixup
# ---------------------------------------------------------------------------


def mixup_waveforms(
    clip_a: FoaClip,
    events_a: list[SourceEvent],
    clip_b: FoaClip,
    events_b: list[SourceEvent],
    lam: float,
    max_overlap: int = 3,
) -> tuple[FoaClip, list[SourceEvent]]:
    """lam*a + (1-lam)*b with the union of both event lists.

    The merged event list drives label regeneration downstream (lowest-free
    -track packing); per-event directions are kept, never blended. Raises
    OverlapCapError when the union would exceed the overlap cap, in which
    case the caller should resample the partner.
    """
    if not (0.0 <= lam <= 1.0):
        raise ConfigError(f"lambda {lam} outside [0, 1]")
    if clip_a.channels.shape != clip_b.channels.shape:
        raise ConfigError("mixup requires equal clip shapes")
    merged = sorted(events_a + events_b, key=lambda e: (e.onset_s, e.class_id))
    violation = find_overlap_violation(merged, max_overlap)
    if violation is not None:
        raise OverlapCapError(
            f"mixing would put {violation[1]} events at t={violation[0]:.3f}s (cap {max_overlap})"
        )
    mixed = lam * clip_a.channels + (1.0 - lam) * clip_b.channels
    return FoaClip(mixed, clip_a.sample_rate, array_id=clip_a.array_id), merged


def mixup_features(feat_a: FeatureTensor, feat_b: FeatureTensor, lam: float) -> FeatureTensor:
    """Feature-domain convex combination (labels handled as for waveforms)."""
    if not (0.0 <= lam <= 1.0):
        raise ConfigError(f"lambda {lam} outside [0, 1]")
    if feat_a.data.shape != feat_b.data.shape or feat_a.layout != feat_b.layout:
        raise ConfigError("mixup requires matching feature shapes and layouts")
    return FeatureTensor(
        lam * feat_a.data + (1.0 - lam) * feat_b.data, feat_a.layout, feat_a.bin_semantics
    )


# ---------------------------------------------------------------------------
# Feature maskers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpecAugmentParams:
    n_time_stripes: int = 2
    n_freq_stripes: int = 2
    max_time_width: int = 8
    max_freq_width: int = 8

    def validate(self, frames: int, bins: int):
        if self.max_time_width < 1 or self.max_time_width > frames:
            raise ConfigError(f"max_time_width {self.max_time_width} outside [1, {frames}]")
        if self.max_freq_width < 1 or self.max_freq_width > bins:
            raise ConfigError(f"max_freq_width {self.max_freq_width} outside [1, {bins}]")


@dataclass(frozen=True)
class CutoutParams:
    n_rects: int = 2
    max_h: int = 8  # time extent
    max_w: int = 8  # bin extent

    def validate(self, frames: int, bins: int):
        if self.max_h < 1 or self.max_h > frames:
            raise ConfigError(f"max_h {self.max_h} outside [1, {frames}]")
        if self.max_w < 1 or self.max_w > bins:
            raise ConfigError(f"max_w {self.max_w} outside [1, {bins}]")


def spec_augment(feat: FeatureTensor, params: SpecAugmentParams, rng: np.random.Generator) -> FeatureTensor:
    """Mask random time and frequency stripes across all channels.

    Log channels are set to the log floor (-100 dB), direction-style
    channels to 0, i.e. each family's notion of silence.
    """
    c, frames, bins = feat.data.shape
    params.validate(frames, bins)
    out = feat.data.copy()
    mask_vals = channel_mask_values(feat.layout)[:, None]
    for _ in range(params.n_time_stripes):
        w = int(rng.integers(1, params.max_time_width + 1))
        t0 = int(rng.integers(0, frames - w + 1))
        out[:, t0 : t0 + w, :] = mask_vals[:, :, None]
    for _ in range(params.n_freq_stripes):
        w = int(rng.integers(1, params.max_freq_width + 1))
        b0 = int(rng.integers(0, bins - w + 1))
        out[:, :, b0 : b0 + w] = mask_vals[:, :, None]
    return FeatureTensor(out, feat.layout, feat.bin_semantics)


def cutout(feat: FeatureTensor, params: CutoutParams, rng: np.random.Generator) -> FeatureTensor:
    """Mask random rectangles (same positions across channels)."""
    c, frames, bins = feat.data.shape
    params.validate(frames, bins)
    out = feat.data.copy()
    mask_vals = channel_mask_values(feat.layout)
    for _ in range(params.n_rects):
        h = int(rng.integers(1, params.max_h + 1))
        w = int(rng.integers(1, params.max_w + 1))
        t0 = int(rng.integers(0, frames - h + 1))
        b0 = int(rng.integers(0, bins - w + 1))
        out[:, t0 : t0 + h, b0 : b0 + w] = mask_vals[:, None, None]
    return FeatureTensor(out, feat.layout, feat.bin_semantics)


# ---------------------------------------------------------------------------
# Chain composition
# ---------------------------------------------------------------------------

LABEL_PRESERVING_KINDS = ("spec_augment", "cutout")


@dataclass(frozen=True)
class PoolOp:
    """A pool entry for chain sampling: op kind plus its parameters."""

    kind: str
    params: object

    def apply(self, feat: FeatureTensor, rng: np.random.Generator) -> FeatureTensor:
        if self.kind == "spec_augment":
            return spec_augment(feat, self.params, rng)
        if self.kind == "cutout":
            return cutout(feat, self.params, rng)
        raise AugmentConfigError(f"op kind {self.kind!r} cannot run inside a chain")


def validate_pool(op_pool: list[PoolOp]):
    for op in op_pool:
        if op.kind not in LABEL_PRESERVING_KINDS:
            raise AugmentConfigError(
                f"{op.kind!r} alters labels and is not allowed in a chain pool"
            )


def serial_compose(feat: FeatureTensor, ops: list[PoolOp], rng: np.random.Generator) -> FeatureTensor:
    """Apply ops in order with no mixing (the series baseline)."""
    validate_pool(ops)
    out = feat
    for op in ops:
        out = op.apply(out, rng)
    return out


def augmix_compose(
    feat: FeatureTensor,
    op_pool: list[PoolOp],
    k: int = 3,
    rng: np.random.Generator | None = None,
    dirichlet_alpha: float = 1.0,
    beta_a: float = 1.0,
    beta_b: float = 1.0,
    chain_len_range: tuple[int, int] = (1, 3),
) -> FeatureTensor:
    """Mix k random chains of pool ops with the clean input.

    Samples k chains (each a random-length composition of pool ops), draws
    chain weights w ~ Dirichlet(alpha) and a skip weight m ~ Beta(a, b),
    and returns m*x + (1-m) * sum_i w_i * chain_i(x). Labels are untouched,
    which is why only label-preserving ops are legal in the pool.
    """
    if rng is None:
        raise ConfigError("augmix_compose needs an explicit rng")
    if k < 1:
        raise ConfigError("k must be >= 1")
    validate_pool(op_pool)
    if not op_pool:
        raise AugmentConfigError("op pool is empty")
    m = rng.beta(beta_a, beta_b)
    weights = rng.dirichlet(np.full(k, dirichlet_alpha))
    mixed = np.zeros_like(feat.data)
    lo, hi = chain_len_range
    for i in range(k):
        length = int(rng.integers(lo, hi + 1))
        chain = [op_pool[int(rng.integers(0, len(op_pool)))] for _ in range(length)]
        out = feat
        for op in chain:
            out = op.apply(out, rng)
        mixed += weights[i] * out.data
    blended = m * feat.data + (1.0 - m) * mixed
    return FeatureTensor(blended, feat.layout, feat.bin_semantics)


# ---------------------------------------------------------------------------
# Policy (external interface)
# ---------------------------------------------------------------------------


@dataclass
class AugmentPolicy:
    """Parsed augmentation policy file."""

    k: int = 3
    dirichlet_alpha: float = 1.0
    beta_a: float = 1.0
    beta_b: float = 1.0
    chain_len_min: int = 1
    chain_len_max: int = 3
    mode: str = "chains"  # chains | serial
    pool: list[PoolOp] = field(default_factory=list)
    rotate: bool = False
    rotation_index: int = -1  # -1 draws one uniformly per sample
    waveform_mixup: bool = False
    mixup_alpha: float = 0.5
    seed: int = 0

    @staticmethod
    def from_dict(d: dict) -> "AugmentPolicy":
        pol = AugmentPolicy()
        simple = {
            "k", "dirichlet_alpha", "beta_a", "beta_b", "chain_len_min", "chain_len_max",
            "mode", "rotate", "rotation_index", "waveform_mixup", "mixup_alpha", "seed",
        }
        for key, val in d.items():
            if key in simple:
                setattr(pol, key, val)
            elif key == "pool":
                for entry in val:
                    kind = entry.get("kind")
                    if kind == "spec_augment":
                        params = SpecAugmentParams(
                            n_time_stripes=int(entry.get("n_time_stripes", 2)),
                            n_freq_stripes=int(entry.get("n_freq_stripes", 2)),
                            max_time_width=int(entry.get("max_time_width", 8)),
                            max_freq_width=int(entry.get("max_freq_width", 8)),
                        )
                    elif kind == "cutout":
                        params = CutoutParams(
                            n_rects=int(entry.get("n_rects", 2)),
                            max_h=int(entry.get("max_h", 8)),
                            max_w=int(entry.get("max_w", 8)),
                        )
                    else:
                        raise AugmentConfigError(f"pool op kind {kind!r} not allowed")
                    pol.pool.append(PoolOp(kind, params))
            else:
                raise ConfigError(f"unknown augmentation policy key {key!r}")
        if pol.mode not in ("chains", "serial"):
            raise ConfigError(f"unknown augmentation mode {pol.mode!r}")
        if not pol.pool:
            pol.pool = [PoolOp("spec_augment", SpecAugmentParams()), PoolOp("cutout", CutoutParams())]
        return pol

    def apply_to_features(self, feat: FeatureTensor, rng: np.random.Generator) -> FeatureTensor:
        if self.mode == "serial":
            return serial_compose(feat, self.pool, rng)
        return augmix_compose(
            feat,
            self.pool,
            k=self.k,
            rng=rng,
            dirichlet_alpha=self.dirichlet_alpha,
            beta_a=self.beta_a,
            beta_b=self.beta_b,
            chain_len_range=(self.chain_len_min, self.chain_len_max),
        )
