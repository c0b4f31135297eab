"""Presentation-attack detection error rates (ISO/IEC 30107-3 style).

Accept rule, shared with the ensemble decision: score >= threshold means
bona fide. APCER counts attacks at or above a threshold, BPCER counts bona
fide below it, both as percentages. The detection EER is the crossing of
the two rates over a threshold sweep.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MetricsError


@dataclass(frozen=True)
class ScoreSet:
    """Bona fide scores plus per-attack-type score arrays."""

    bona_scores: np.ndarray
    attack_scores: dict[str, np.ndarray]

    def __post_init__(self):
        bona = np.asarray(self.bona_scores, dtype=np.float64)
        if bona.size == 0:
            raise MetricsError("bona fide scores are empty")
        if not np.all(np.isfinite(bona)):
            raise MetricsError("bona fide scores contain non-finite values")
        attacks = {}
        for name, arr in self.attack_scores.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.size == 0:
                raise MetricsError(f"attack type {name!r} has no scores")
            if not np.all(np.isfinite(arr)):
                raise MetricsError(f"attack type {name!r} has non-finite scores")
            attacks[name] = arr
        if not attacks:
            raise MetricsError("score set needs at least one attack type")
        object.__setattr__(self, "bona_scores", bona)
        object.__setattr__(self, "attack_scores", attacks)

    def pooled_attacks(self) -> np.ndarray:
        return np.concatenate(list(self.attack_scores.values()))


def apcer(attack_scores, threshold: float) -> float:
    """Percent of attack scores accepted (score >= threshold)."""
    scores = np.asarray(attack_scores, dtype=np.float64)
    if scores.size == 0:
        raise MetricsError("APCER needs a non-empty attack score array")
    return float(np.count_nonzero(scores >= threshold)) / scores.size * 100.0


def bpcer(bona_scores, threshold: float) -> float:
    """Percent of bona fide scores rejected (score < threshold)."""
    scores = np.asarray(bona_scores, dtype=np.float64)
    if scores.size == 0:
        raise MetricsError("BPCER needs a non-empty bona fide score array")
    return float(np.count_nonzero(scores < threshold)) / scores.size * 100.0


def candidate_thresholds(scores: np.ndarray) -> np.ndarray:
    """All thresholds where either rate can change: the sorted unique scores,
    the midpoints between neighbours, and one sentinel past each end."""
    u = np.unique(np.asarray(scores, dtype=np.float64))
    mids = (u[:-1] + u[1:]) / 2.0
    return np.unique(np.concatenate([[u[0] - 1.0], u, mids, [u[-1] + 1.0]]))


def _rates_at(bona: np.ndarray, attacks: np.ndarray, thresholds: np.ndarray):
    bona_sorted = np.sort(bona)
    att_sorted = np.sort(attacks)
    bp = np.searchsorted(bona_sorted, thresholds, side="left") / bona.size * 100.0
    ap = (attacks.size - np.searchsorted(att_sorted, thresholds, side="left")) / attacks.size * 100.0
    return ap, bp


@dataclass(frozen=True)
class DeerResult:
    eer_pct: float
    threshold: float


def d_eer(score_set: ScoreSet) -> DeerResult:
    """Detection equal error rate over all attack types pooled.

    Sweeps every candidate threshold; where APCER - BPCER changes sign
    between neighbours, interpolates linearly and reports the mean of the
    two (equal) interpolated rates at the crossing.
    """
    bona = score_set.bona_scores
    attacks = score_set.pooled_attacks()
    thresholds = candidate_thresholds(np.concatenate([bona, attacks]))
    ap, bp = _rates_at(bona, attacks, thresholds)
    diff = ap - bp  # non-increasing in threshold: +100 at the low sentinel
    idx = int(np.argmax(diff <= 0.0))
    if diff[idx] == 0.0:
        return DeerResult(eer_pct=float(ap[idx]), threshold=float(thresholds[idx]))
    lo, hi = idx - 1, idx
    t = diff[lo] / (diff[lo] - diff[hi])
    eer = ap[lo] + t * (ap[hi] - ap[lo])
    thr = thresholds[lo] + t * (thresholds[hi] - thresholds[lo])
    return DeerResult(eer_pct=float(eer), threshold=float(thr))


def bpcer_at_apcer(score_set: ScoreSet, target_pct: float) -> float:
    """Lowest BPCER among thresholds whose (pooled) APCER is within target."""
    bona = score_set.bona_scores
    attacks = score_set.pooled_attacks()
    thresholds = candidate_thresholds(np.concatenate([bona, attacks]))
    ap, bp = _rates_at(bona, attacks, thresholds)
    feasible = ap <= target_pct
    if not np.any(feasible):  # unreachable: the high sentinel has APCER 0
        raise MetricsError(f"no threshold reaches APCER <= {target_pct}")
    return float(bp[feasible].min())


@dataclass(frozen=True)
class DetPoint:
    threshold: float
    apcer_pct: float
    bpcer_pct: float


def det_curve(score_set: ScoreSet) -> list[DetPoint]:
    """One (APCER, BPCER) operating point per candidate threshold, ascending."""
    bona = score_set.bona_scores
    attacks = score_set.pooled_attacks()
    thresholds = candidate_thresholds(np.concatenate([bona, attacks]))
    ap, bp = _rates_at(bona, attacks, thresholds)
    return [DetPoint(float(t), float(a), float(b)) for t, a, b in zip(thresholds, ap, bp)]


@dataclass(frozen=True)
class EvalReport:
    """Threshold-free summary of one evaluation cell."""

    d_eer_pct: float
    d_eer_threshold: float
    bpcer_at_apcer_pct: dict[float, float]
    det_points: list[DetPoint]
    counts: dict[str, int]
    apcer_per_type_pct: dict[str, float] = field(default_factory=dict)
    worst_apcer_pct: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "d_eer_pct": self.d_eer_pct,
            "d_eer_threshold": self.d_eer_threshold,
            "bpcer_at_apcer_pct": {str(k): v for k, v in self.bpcer_at_apcer_pct.items()},
            "det_points": [[p.threshold, p.apcer_pct, p.bpcer_pct] for p in self.det_points],
            "counts": self.counts,
            "apcer_per_type_pct": self.apcer_per_type_pct,
            "worst_apcer_pct": self.worst_apcer_pct,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        return cls(
            d_eer_pct=doc["d_eer_pct"],
            d_eer_threshold=doc["d_eer_threshold"],
            bpcer_at_apcer_pct={float(k): v for k, v in doc["bpcer_at_apcer_pct"].items()},
            det_points=[DetPoint(*p) for p in doc["det_points"]],
            counts=doc["counts"],
            apcer_per_type_pct=doc.get("apcer_per_type_pct", {}),
            worst_apcer_pct=doc.get("worst_apcer_pct", float("nan")),
        )


def evaluate(score_set: ScoreSet, targets: tuple[float, ...] = (5.0, 10.0)) -> EvalReport:
    """Full report: D-EER, BPCER at the APCER targets, DET curve, counts.

    Per-type APCER is reported at the EER threshold; the headline value is
    the worst (maximum) attack type.
    """
    eer = d_eer(score_set)
    per_type = {name: apcer(arr, eer.threshold) for name, arr in score_set.attack_scores.items()}
    counts = {"bona_fide": int(score_set.bona_scores.size)}
    counts.update({name: int(arr.size) for name, arr in score_set.attack_scores.items()})
    return EvalReport(
        d_eer_pct=eer.eer_pct,
        d_eer_threshold=eer.threshold,
        bpcer_at_apcer_pct={t: bpcer_at_apcer(score_set, t) for t in targets},
        det_points=det_curve(score_set),
        counts=counts,
        apcer_per_type_pct=per_type,
        worst_apcer_pct=max(per_type.values()),
    )


def write_report_json(report: EvalReport, path: str | Path, provenance: dict | None = None) -> None:
    doc = report.to_dict()
    if provenance:
        doc["provenance"] = provenance
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def write_det_csv(points: list[DetPoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "apcer_pct", "bpcer_pct"])
        for p in points:
            writer.writerow([repr(p.threshold), repr(p.apcer_pct), repr(p.bpcer_pct)])
