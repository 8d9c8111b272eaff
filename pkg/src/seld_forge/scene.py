"""Synthetic FOA scene generation with exact ground truth.

Scenes are lists of parametric point sources (sine / band-limited noise /
AM tone burst) encoded anechoically into 4-channel first-order Ambisonics.
Channel order is (W, X, Y, Z) with W carrying the plain source signal and
the directional channels carrying signal * unit-direction components, so a
single source satisfies (X, Y, Z) / W == u exactly wherever W != 0. The
only propagation effect modeled is 1/max(r, 0.3 m) amplitude attenuation;
realism is deliberately out of scope so downstream direction estimates can
be checked against exact ground truth.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import ConfigError, DataError, SceneOverlapError
from .track_format import DEFAULT_CLASSES, DEFAULT_TRACKS, TrackwiseFrame

DEFAULT_SAMPLE_RATE = 32000
MIN_RANGE_M = 0.3  # attenuation clamp: amplitude = gain / max(r, MIN_RANGE_M)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SignalKind:
    """Parametric source signal: 'sine', 'band_noise', or 'tone_burst'."""

    kind: str
    freq_hz: float = 0.0
    lo_hz: float = 0.0
    hi_hz: float = 0.0
    am_rate_hz: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sine", "band_noise", "tone_burst"):
            raise ConfigError(f"unknown signal kind {self.kind!r}")

    @staticmethod
    def sine(freq_hz: float) -> "SignalKind":
        return SignalKind("sine", freq_hz=float(freq_hz))

    @staticmethod
    def band_noise(lo_hz: float, hi_hz: float) -> "SignalKind":
        return SignalKind("band_noise", lo_hz=float(lo_hz), hi_hz=float(hi_hz))

    @staticmethod
    def tone_burst(freq_hz: float, am_rate_hz: float) -> "SignalKind":
        return SignalKind("tone_burst", freq_hz=float(freq_hz), am_rate_hz=float(am_rate_hz))

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "sine":
            d["freq_hz"] = self.freq_hz
        elif self.kind == "band_noise":
            d["lo_hz"] = self.lo_hz
            d["hi_hz"] = self.hi_hz
        else:
            d["freq_hz"] = self.freq_hz
            d["am_rate_hz"] = self.am_rate_hz
        return d

    @staticmethod
    def from_dict(d: dict) -> "SignalKind":
        kind = d["kind"]
        if kind == "sine":
            return SignalKind.sine(d["freq_hz"])
        if kind == "band_noise":
            return SignalKind.band_noise(d["lo_hz"], d["hi_hz"])
        if kind == "tone_burst":
            return SignalKind.tone_burst(d["freq_hz"], d["am_rate_hz"])
        raise DataError(f"unknown signal kind {kind!r}")


@dataclass(frozen=True)
class SourceEvent:
    class_id: int
    onset_s: float
    offset_s: float
    position: tuple[float, float, float]
    signal_kind: SignalKind
    gain: float = 1.0

    def __post_init__(self):
        if self.offset_s <= self.onset_s:
            raise ConfigError(f"offset {self.offset_s} must exceed onset {self.onset_s}")
        if not (0.0 < self.gain <= 1.0):
            raise ConfigError(f"gain {self.gain} outside (0, 1]")
        p = np.asarray(self.position, dtype=np.float64)
        if p.shape != (3,) or not np.all(np.isfinite(p)):
            raise ConfigError(f"bad position {self.position}")
        if np.linalg.norm(p) == 0.0:
            raise ConfigError("source position must not coincide with the array origin")

    @property
    def position_array(self) -> np.ndarray:
        return np.asarray(self.position, dtype=np.float64)

    @property
    def direction(self) -> np.ndarray:
        p = self.position_array
        return p / np.linalg.norm(p)

    def to_dict(self) -> dict:
        return {
            "class_id": self.class_id,
            "onset_s": self.onset_s,
            "offset_s": self.offset_s,
            "position": list(self.position),
            "signal_kind": self.signal_kind.to_dict(),
            "gain": self.gain,
        }

    @staticmethod
    def from_dict(d: dict) -> "SourceEvent":
        return SourceEvent(
            class_id=int(d["class_id"]),
            onset_s=float(d["onset_s"]),
            offset_s=float(d["offset_s"]),
            position=tuple(float(v) for v in d["position"]),
            signal_kind=SignalKind.from_dict(d["signal_kind"]),
            gain=float(d["gain"]),
        )


@dataclass
class SceneSpec:
    duration_s: float
    sample_rate: int = DEFAULT_SAMPLE_RATE
    events: list[SourceEvent] = field(default_factory=list)
    seed: int = 0
    max_overlap: int = DEFAULT_TRACKS
    n_classes: int = DEFAULT_CLASSES

    def validate(self):
        for ev in self.events:
            if ev.onset_s < 0 or ev.offset_s > self.duration_s:
                raise ConfigError(
                    f"event [{ev.onset_s}, {ev.offset_s}) outside scene of {self.duration_s}s"
                )
            if ev.class_id < 0 or ev.class_id >= self.n_classes:
                raise ConfigError(f"class_id {ev.class_id} outside [0, {self.n_classes})")
        violation = find_overlap_violation(self.events, self.max_overlap)
        if violation is not None:
            t, count = violation
            raise SceneOverlapError(t, count, self.max_overlap)

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate))


@dataclass
class FoaClip:
    """4 x n_samples (W, X, Y, Z) signal from one array."""

    channels: np.ndarray
    sample_rate: int
    array_id: str = "A"

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float64)
        if self.channels.ndim != 2 or self.channels.shape[0] != 4:
            raise DataError(f"FOA clip needs 4 channels, got shape {self.channels.shape}")
        if not np.all(np.isfinite(self.channels)):
            raise DataError("FOA clip contains non-finite samples")

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]


# ---------------------------------------------------------------------------
# Overlap validation (continuous time, half-open event intervals)
# ---------------------------------------------------------------------------

def find_overlap_violation(events, cap: int):
    """Return (time_s, count) at the first instant where more than `cap`
    events are simultaneously active, or None. Intervals are half-open, so
    an event ending exactly when another starts does not overlap it."""
    points = []
    for ev in events:
        points.append((ev.onset_s, 1))
        points.append((ev.offset_s, -1))
    # process offsets before onsets at equal times
    points.sort(key=lambda p: (p[0], p[1]))
    active = 0
    for t, delta in points:
        active += delta
        if active > cap:
            return t, active
    return None


# ---------------------------------------------------------------------------
# Source signal synthesis
# ---------------------------------------------------------------------------

def _event_rng(event: SourceEvent) -> np.random.Generator:
    # Seeded from event content only, so encoding is linear across event
    # subsets and reproducible regardless of event ordering.
    key = [
        event.class_id,
        int(round(event.onset_s * 1e9)),
        int(round(event.offset_s * 1e9)),
        int(round(event.gain * 1e9)),
        int(round(event.signal_kind.lo_hz * 1e3)),
        int(round(event.signal_kind.hi_hz * 1e3)),
    ]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def synth_signal(event: SourceEvent, sample_rate: int, n_samples: int) -> np.ndarray:
    """Mono source signal over the event's active sample span."""
    kind = event.signal_kind
    tau = np.arange(n_samples, dtype=np.float64) / sample_rate
    if kind.kind == "sine":
        return np.sin(2.0 * np.pi * kind.freq_hz * tau)
    if kind.kind == "tone_burst":
        env = 0.5 * (1.0 - np.cos(2.0 * np.pi * kind.am_rate_hz * tau))
        return np.sin(2.0 * np.pi * kind.freq_hz * tau) * env
    # band_noise: random-phase flat spectrum restricted to [lo, hi], scaled
    # to the RMS of a unit sine so gains are comparable across kinds
    rng = _event_rng(event)
    white = rng.standard_normal(n_samples)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n_samples, 1.0 / sample_rate)
    mask = (freqs >= kind.lo_hz) & (freqs <= kind.hi_hz)
    spec[~mask] = 0.0
    sig = np.fft.irfft(spec, n=n_samples)
    rms = np.sqrt(np.mean(sig**2))
    if rms > 0:
        sig *= (1.0 / np.sqrt(2.0)) / rms
    return sig


def _event_sample_span(event: SourceEvent, sample_rate: int, n_total: int):
    i0 = int(round(event.onset_s * sample_rate))
    i1 = int(round(event.offset_s * sample_rate))
    return max(0, i0), min(n_total, i1)


# ---------------------------------------------------------------------------
# FOA encoding
# ---------------------------------------------------------------------------

def encode_foa(scene: SceneSpec, array_id: str = "A") -> FoaClip:
    """Encode all scene events into one 4-channel (W, X, Y, Z) clip.

    Each event contributes s(t) * a to W and s(t) * a * u to (X, Y, Z),
    where u is the unit direction and a = gain / max(range, 0.3 m).
    Contributions sum linearly across events.
    """
    scene.validate()
    n = scene.n_samples
    out = np.zeros((4, n), dtype=np.float64)
    for ev in scene.events:
        i0, i1 = _event_sample_span(ev, scene.sample_rate, n)
        if i1 <= i0:
            continue
        sig = synth_signal(ev, scene.sample_rate, i1 - i0)
        r = np.linalg.norm(ev.position_array)
        amp = ev.gain / max(r, MIN_RANGE_M)
        u = ev.direction
        out[0, i0:i1] += sig * amp
        out[1, i0:i1] += sig * amp * u[0]
        out[2, i0:i1] += sig * amp * u[1]
        out[3, i0:i1] += sig * amp * u[2]
    return FoaClip(out, scene.sample_rate, array_id=array_id)


# ---------------------------------------------------------------------------
# Frame labeling and track assignment
# ---------------------------------------------------------------------------

def assign_tracks(events, n_tracks: int = DEFAULT_TRACKS) -> list[int]:
    """Deterministic track index per event (in input order).

    Events sorted by (onset, class_id) take the lowest-index track whose
    already-assigned events do not overlap the candidate's full duration.
    """
    order = sorted(range(len(events)), key=lambda i: (events[i].onset_s, events[i].class_id))
    occupancy: list[list[tuple[float, float]]] = [[] for _ in range(n_tracks)]
    track_of = [-1] * len(events)
    for i in order:
        ev = events[i]
        placed = False
        for m in range(n_tracks):
            if all(ev.onset_s >= b or ev.offset_s <= a for a, b in occupancy[m]):
                occupancy[m].append((ev.onset_s, ev.offset_s))
                track_of[i] = m
                placed = True
                break
        if not placed:
            raise SceneOverlapError(ev.onset_s, n_tracks + 1, n_tracks)
    return track_of


def label_frames(
    scene: SceneSpec,
    hop_samples: int,
    n_frames: int,
    n_tracks: int = DEFAULT_TRACKS,
) -> list[TrackwiseFrame]:
    """Ground-truth track-wise frames at a hop of `hop_samples`.

    Frame f spans samples [f*hop, (f+1)*hop); an event marks a frame active
    when it covers at least 50% of that span. Active (track, class) cells
    get SED 1 and DoA = unit direction; everything else stays zero.
    """
    if hop_samples <= 0:
        raise ConfigError("hop_samples must be positive")
    scene.validate()
    tracks = assign_tracks(scene.events, n_tracks)
    sed = np.zeros((n_frames, n_tracks, scene.n_classes), dtype=np.float64)
    doa = np.zeros((n_frames, n_tracks, 3), dtype=np.float64)
    # overlap fraction per frame, used to resolve the rare case of two
    # disjoint events on one track each covering exactly half a frame
    owner_overlap = np.zeros((n_frames, n_tracks), dtype=np.int64)
    for ev, m in zip(scene.events, tracks):
        i0 = ev.onset_s * scene.sample_rate
        i1 = ev.offset_s * scene.sample_rate
        f_lo = max(0, int(np.floor(i0 / hop_samples)))
        f_hi = min(n_frames, int(np.ceil(i1 / hop_samples)))
        for f in range(f_lo, f_hi):
            lo = f * hop_samples
            hi = lo + hop_samples
            overlap = min(i1, hi) - max(i0, lo)
            if 2.0 * overlap >= hop_samples and overlap > owner_overlap[f, m]:
                sed[f, m, :] = 0.0
                sed[f, m, ev.class_id] = 1.0
                doa[f, m, :] = ev.direction
                owner_overlap[f, m] = overlap
    return [TrackwiseFrame(sed[f], doa[f]) for f in range(n_frames)]


# ---------------------------------------------------------------------------
# Dataset generation
# ---------------------------------------------------------------------------

# class_id -> parametric signal family; base frequency rises with class_id so
# log-mel patterns identify the class
def signal_kind_for_class(class_id: int) -> SignalKind:
    base = 250.0 * 2.0 ** (class_id / 3.5)
    fam = class_id % 3
    if fam == 0:
        return SignalKind.sine(base)
    if fam == 1:
        return SignalKind.band_noise(base / 1.4, base * 1.4)
    return SignalKind.tone_burst(base, 6.0 + class_id)


@dataclass
class DatasetConfig:
    n_clips: int = 10
    duration_s: float = 3.0
    sample_rate: int = DEFAULT_SAMPLE_RATE
    n_classes: int = DEFAULT_CLASSES
    max_overlap: int = DEFAULT_TRACKS
    n_events_min: int = 1
    n_events_max: int = 3
    event_dur_min_s: float = 0.5
    event_dur_max_s: float = 1.5
    room_dims_m: tuple[float, float, float] = (6.0, 5.0, 3.0)
    min_range_m: float = 0.5
    gain_min: float = 0.4
    gain_max: float = 1.0
    label_hop_samples: int = 400
    array_b_rotation: int = 20  # z-axis quarter turn; index into rotation_group()

    def validate(self):
        if self.n_clips < 0:
            raise ConfigError("n_clips must be >= 0")
        if self.n_events_min < 0 or self.n_events_max < self.n_events_min:
            raise ConfigError("bad n_events range")
        if self.event_dur_max_s < self.event_dur_min_s or self.event_dur_min_s <= 0:
            raise ConfigError("bad event duration range")
        if self.duration_s <= self.event_dur_max_s:
            raise ConfigError("duration_s must exceed event_dur_max_s")
        if not (0 < self.gain_min <= self.gain_max <= 1.0):
            raise ConfigError("bad gain range")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["room_dims_m"] = list(self.room_dims_m)
        return d

    @staticmethod
    def from_dict(d: dict) -> "DatasetConfig":
        cfg = DatasetConfig()
        for k, v in d.items():
            if not hasattr(cfg, k):
                raise ConfigError(f"unknown dataset config key {k!r}")
            setattr(cfg, k, tuple(v) if k == "room_dims_m" else v)
        cfg.validate()
        return cfg


def clip_seed(master_seed: int, clip_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), int(clip_index)])


def sample_scene(config: DatasetConfig, seed_seq: np.random.SeedSequence, scene_seed: int) -> SceneSpec:
    """Draw one random scene honoring the overlap cap (deterministic)."""
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    n_events = int(rng.integers(config.n_events_min, config.n_events_max + 1))
    half = np.asarray(config.room_dims_m, dtype=np.float64) / 2.0
    events: list[SourceEvent] = []
    for _ in range(n_events):
        for _attempt in range(100):
            dur = rng.uniform(config.event_dur_min_s, config.event_dur_max_s)
            onset = rng.uniform(0.0, config.duration_s - dur)
            cand_interval = _Interval(onset, onset + dur)
            if find_overlap_violation(events + [cand_interval], config.max_overlap) is not None:
                continue
            while True:
                pos = rng.uniform(-half, half)
                if np.linalg.norm(pos) >= config.min_range_m:
                    break
            class_id = int(rng.integers(0, config.n_classes))
            events.append(
                SourceEvent(
                    class_id=class_id,
                    onset_s=float(onset),
                    offset_s=float(onset + dur),
                    position=tuple(float(v) for v in pos),
                    signal_kind=signal_kind_for_class(class_id),
                    gain=float(rng.uniform(config.gain_min, config.gain_max)),
                )
            )
            break
    events.sort(key=lambda e: (e.onset_s, e.class_id))
    return SceneSpec(
        duration_s=config.duration_s,
        sample_rate=config.sample_rate,
        events=events,
        seed=scene_seed,
        max_overlap=config.max_overlap,
        n_classes=config.n_classes,
    )


@dataclass(frozen=True)
class _Interval:
    onset_s: float
    offset_s: float


def write_wav(path: Path, clip: FoaClip):
    data = np.ascontiguousarray(clip.channels.T.astype(np.float32))
    wavfile.write(str(path), clip.sample_rate, data)


def read_wav(path: Path) -> FoaClip:
    rate, data = wavfile.read(str(path))
    if data.ndim != 2 or data.shape[1] != 4:
        raise DataError(f"{path}: expected 4-channel WAV, got shape {data.shape}")
    return FoaClip(data.T.astype(np.float64), int(rate))


def write_label_csv(path: Path, frames: list[TrackwiseFrame]):
    lines = ["frame,track,class,x,y,z"]
    for f, frame in enumerate(frames):
        for m in range(frame.n_tracks):
            row = frame.sed[m]
            if row.any():
                k = int(np.argmax(row))
                x, y, z = frame.doa[m]
                lines.append(f"{f},{m},{k},{x:.9f},{y:.9f},{z:.9f}")
    path.write_text("\n".join(lines) + "\n")


def read_label_csv(path: Path, n_frames: int, n_tracks: int, n_classes: int) -> list[TrackwiseFrame]:
    sed = np.zeros((n_frames, n_tracks, n_classes))
    doa = np.zeros((n_frames, n_tracks, 3))
    lines = path.read_text().strip().splitlines()
    if lines[0] != "frame,track,class,x,y,z":
        raise DataError(f"{path}: bad label CSV header")
    for line in lines[1:]:
        parts = line.split(",")
        f, m, k = int(parts[0]), int(parts[1]), int(parts[2])
        sed[f, m, k] = 1.0
        doa[f, m] = [float(parts[3]), float(parts[4]), float(parts[5])]
    return [TrackwiseFrame(sed[f], doa[f]) for f in range(n_frames)]


def generate_dataset(config: DatasetConfig, seed: int, out_dir: Path) -> list[dict]:
    """Generate clips + labels + manifest under out_dir; returns the manifest.

    Deterministic for a given (config, seed): every clip derives its own RNG
    from (seed, clip_index), so generation order does not matter.
    """
    from .augment import rotate_foa, rotation_group  # deferred: augment imports scene types

    config.validate()
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output dir {out_dir}: {exc}") from exc
    rot_b = rotation_group()[config.array_b_rotation]
    manifest = []
    for idx in range(config.n_clips):
        seq = clip_seed(seed, idx)
        scene_seed = int(seq.generate_state(1, dtype=np.uint64)[0] & 0x7FFFFFFFFFFFFFFF)
        scene = sample_scene(config, seq, scene_seed)
        clip_id = f"clip_{idx:04d}"
        clip_a = encode_foa(scene, array_id="A")
        clip_b = rotate_foa(clip_a, rot_b)
        clip_b.array_id = "B"
        write_wav(out_dir / f"{clip_id}_A.wav", clip_a)
        write_wav(out_dir / f"{clip_id}_B.wav", clip_b)
        n_frames = scene.n_samples // config.label_hop_samples
        frames = label_frames(scene, config.label_hop_samples, n_frames)
        write_label_csv(out_dir / f"{clip_id}_labels.csv", frames)
        manifest.append(
            {
                "clip_id": clip_id,
                "seed": scene_seed,
                "duration_s": scene.duration_s,
                "events": [ev.to_dict() for ev in scene.events],
            }
        )
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_manifest(path: Path) -> list[dict]:
    try:
        entries = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(entries, list):
        raise DataError(f"manifest {path} must be a JSON array")
    return entries


def events_from_manifest_entry(entry: dict) -> list[SourceEvent]:
    return [SourceEvent.from_dict(d) for d in entry["events"]]
