"""Location-sensitive detection scoring.

A prediction counts as a true positive when its class is correct and its
location lies within a Cartesian distance threshold of the matched
reference. Matching is exact: per frame and class, the assignment
minimizing total distance is found by enumerating injections (instance
counts are tiny). Counts are micro-aggregated over all frames and classes;
a matched-but-too-far pair costs both a false positive and a false
negative, which keeps precision/recall symmetric under swapping the roles
of predictions and references.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .track_format import TrackwiseFrame

MAX_INSTANCES_PER_SIDE = 8


@dataclass(frozen=True)
class EventInstance:
    frame: int
    class_id: int
    position: tuple[float, float, float]

    def __post_init__(self):
        if not all(np.isfinite(self.position)):
            raise ConfigError(f"non-finite position {self.position}")

    @property
    def position_array(self) -> np.ndarray:
        return np.asarray(self.position, dtype=np.float64)


@dataclass
class ScoreReport:
    threshold_m: float
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 0.0

    @property
    def f_score(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if (p + r) else 0.0

    def to_dict(self) -> dict:
        return {
            "threshold_m": self.threshold_m,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f_score": self.f_score,
        }


def _pair_distance(pred: EventInstance, ref: EventInstance, preds_are_unit_doa: bool) -> float:
    p = pred.position_array
    r = ref.position_array
    if preds_are_unit_doa:
        # direction-only predictions: place the prediction at the
        # reference's range before measuring Cartesian distance
        p = p * np.linalg.norm(r)
    return float(np.linalg.norm(p - r))


def _group_by_frame_class(instances):
    groups: dict[tuple[int, int], list] = {}
    for inst in instances:
        groups.setdefault((inst.frame, inst.class_id), []).append(inst)
    return groups


def _min_cost_match_distances(dists: np.ndarray) -> list[float]:
    """Distances of the pairs in the minimum-total-distance maximum
    matching; ties resolved by lexicographic enumeration order."""
    n_pred, n_ref = dists.shape
    if max(n_pred, n_ref) > MAX_INSTANCES_PER_SIDE:
        raise ConfigError(
            f"{max(n_pred, n_ref)} instances per (frame, class) exceeds the exact-search cap"
        )
    best_total = np.inf
    best_pairs: tuple = ()
    if n_pred <= n_ref:
        for assign in itertools.permutations(range(n_ref), n_pred):
            total = sum(dists[i, j] for i, j in enumerate(assign))
            if total < best_total:
                best_total = total
                best_pairs = tuple((i, j) for i, j in enumerate(assign))
    else:
        for assign in itertools.permutations(range(n_pred), n_ref):
            total = sum(dists[i, j] for j, i in enumerate(assign))
            if total < best_total:
                best_total = total
                best_pairs = tuple((i, j) for j, i in enumerate(assign))
    return [float(dists[i, j]) for i, j in best_pairs]


def matched_distances(
    preds: list[EventInstance],
    refs: list[EventInstance],
    preds_are_unit_doa: bool = False,
):
    """Per (frame, class) group: (matched pair distances, n_pred, n_ref).

    The matching does not depend on any threshold, so one call serves a
    whole threshold sweep.
    """
    pred_groups = _group_by_frame_class(preds)
    ref_groups = _group_by_frame_class(refs)
    results = []
    for key in sorted(set(pred_groups) | set(ref_groups)):
        p = pred_groups.get(key, [])
        r = ref_groups.get(key, [])
        if p and r:
            dists = np.array(
                [[_pair_distance(pi, rj, preds_are_unit_doa) for rj in r] for pi in p]
            )
            pairs = _min_cost_match_distances(dists)
        else:
            pairs = []
        results.append((pairs, len(p), len(r)))
    return results


def _report_from_matches(matches, threshold_m: float) -> ScoreReport:
    tp = fp = fn = 0
    for pairs, n_pred, n_ref in matches:
        hit = sum(1 for d in pairs if d <= threshold_m)
        tp += hit
        fp += n_pred - hit
        fn += n_ref - hit
    return ScoreReport(threshold_m, tp, fp, fn)


def location_sensitive_fscore(
    preds: list[EventInstance],
    refs: list[EventInstance],
    threshold_m: float,
    preds_are_unit_doa: bool = False,
) -> ScoreReport:
    if threshold_m <= 0:
        raise ConfigError("threshold_m must be positive")
    matches = matched_distances(preds, refs, preds_are_unit_doa)
    return _report_from_matches(matches, threshold_m)


def threshold_sweep(
    preds: list[EventInstance],
    refs: list[EventInstance],
    thresholds: list[float],
    preds_are_unit_doa: bool = False,
) -> list[ScoreReport]:
    if list(thresholds) != sorted(thresholds):
        raise ConfigError("thresholds must be ascending")
    if any(t <= 0 for t in thresholds):
        raise ConfigError("thresholds must be positive")
    matches = matched_distances(preds, refs, preds_are_unit_doa)
    return [_report_from_matches(matches, t) for t in thresholds]


# ---------------------------------------------------------------------------
# Instance extraction
# ---------------------------------------------------------------------------


def events_from_binarized(binarized) -> list[EventInstance]:
    """From nn.loss.binarize output: (frame, track, class, unit_doa)."""
    return [
        EventInstance(frame, class_id, tuple(float(v) for v in doa))
        for frame, _track, class_id, doa in binarized
    ]


def events_from_label_frames(frames: list[TrackwiseFrame]) -> list[EventInstance]:
    """Reference instances with unit-DoA positions (label CSV semantics)."""
    out = []
    for f, frame in enumerate(frames):
        for m in range(frame.n_tracks):
            if frame.sed[m].any():
                k = int(np.argmax(frame.sed[m]))
                out.append(EventInstance(f, k, tuple(float(v) for v in frame.doa[m])))
    return out


def events_from_manifest_entry(entry: dict, hop_s: float, n_frames: int) -> list[EventInstance]:
    """Reference instances with full Cartesian positions, using the same
    >= 50%-of-frame activity rule as frame labeling."""
    out = []
    for ev in entry["events"]:
        onset, offset = float(ev["onset_s"]), float(ev["offset_s"])
        pos = tuple(float(v) for v in ev["position"])
        class_id = int(ev["class_id"])
        f_lo = max(0, int(np.floor(onset / hop_s)))
        f_hi = min(n_frames, int(np.ceil(offset / hop_s)))
        for f in range(f_lo, f_hi):
            lo, hi = f * hop_s, (f + 1) * hop_s
            if 2.0 * (min(offset, hi) - max(onset, lo)) >= hop_s:
                out.append(EventInstance(f, class_id, pos))
    return out


# ---------------------------------------------------------------------------
# Report output
# ---------------------------------------------------------------------------


def write_report_json(path: Path, reports: list[ScoreReport]):
    payload = [r.to_dict() for r in reports]
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_sweep_csv(path: Path, reports: list[ScoreReport]):
    lines = ["threshold_m,tp,fp,fn,precision,recall,f_score"]
    for r in reports:
        lines.append(
            f"{r.threshold_m},{r.tp},{r.fp},{r.fn},{r.precision:.6f},{r.recall:.6f},{r.f_score:.6f}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
