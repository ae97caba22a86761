"""ISO/IEC 30107-3 error rates for PAD score sets.

Decision rule everywhere: a presentation is classified as an attack iff
its score is >= the threshold. APCER is therefore non-decreasing and
BPCER non-increasing in the threshold.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import OutOfRange, SingleClass
from .scores import ScoreSet

DEFAULT_THRESHOLD = 50.0


def _split(scores: ScoreSet):
    s, attack, species = scores.arrays()
    if not attack.any() or attack.all():
        raise SingleClass(f"{scores.system_id or 'score set'}: both bona fide and attack samples are required")
    return s, attack, species


def confusion_at_threshold(scores: ScoreSet, threshold: float):
    """Return ``(apcer_overall, apcer_by_species, bpcer)`` at ``threshold``."""
    s, attack, species = _split(scores)
    missed = s < threshold
    apcer = float(np.count_nonzero(missed & attack) / np.count_nonzero(attack))
    bpcer = float(np.count_nonzero(~missed & ~attack) / np.count_nonzero(~attack))
    by_species = {}
    for sp in sorted(set(species[attack])):
        m = attack & (species == sp)
        by_species[sp] = float(np.count_nonzero(missed & m) / np.count_nonzero(m))
    return apcer, by_species, bpcer


@dataclass(frozen=True)
class DetCurve:
    """Operating points ``(threshold, apcer, bpcer)`` with increasing thresholds."""

    thresholds: np.ndarray
    apcer: np.ndarray
    bpcer: np.ndarray

    @property
    def points(self):
        return list(zip(self.thresholds.tolist(), self.apcer.tolist(), self.bpcer.tolist()))

    def __len__(self):
        return int(self.thresholds.shape[0])

    def to_csv(self) -> str:
        lines = ["threshold,apcer,bpcer"]
        lines += [f"{t:.6f},{a:.6f},{b:.6f}" for t, a, b in self.points]
        return "\n".join(lines) + "\n"


def det_curve(scores: ScoreSet) -> DetCurve:
    """Every distinct operating point of the score set.

    Candidate thresholds are a sentinel below the minimum score, each
    distinct score, and a sentinel above the maximum; a candidate whose
    (APCER, BPCER) equals its predecessor's is dropped, so consecutive
    points always differ.
    """
    s, attack, _ = _split(scores)
    values = np.unique(s)
    thr = np.concatenate([[values[0] - 1.0], values, [values[-1] + 1.0]])
    att = np.sort(s[attack])
    bf = np.sort(s[~attack])
    apcer = np.searchsorted(att, thr, side="left") / att.size
    bpcer = (bf.size - np.searchsorted(bf, thr, side="left")) / bf.size
    keep = np.ones(thr.size, dtype=bool)
    keep[1:] = (apcer[1:] != apcer[:-1]) | (bpcer[1:] != bpcer[:-1])
    return DetCurve(thr[keep], apcer[keep], bpcer[keep])


def eer_from_points(thresholds, apcer, bpcer) -> tuple[float, float]:
    """Equal-error point by linear interpolation between adjacent operating points.

    Points must be ordered by threshold with APCER non-decreasing and BPCER
    non-increasing, starting from (0, 1) and ending at (1, 0).
    """
    thresholds = np.asarray(thresholds, dtype=np.float64)
    diff = np.asarray(apcer, dtype=np.float64) - np.asarray(bpcer, dtype=np.float64)
    k = int(np.argmax(diff >= 0))
    if diff[k] == 0 or k == 0:
        return float(apcer[k]), float(thresholds[k])
    d0, d1 = diff[k - 1], diff[k]
    t = d0 / (d0 - d1)
    rate = apcer[k - 1] + t * (apcer[k] - apcer[k - 1])
    thr = thresholds[k - 1] + t * (thresholds[k] - thresholds[k - 1])
    return float(rate), float(thr)


def d_eer(scores: ScoreSet) -> tuple[float, float]:
    """Detection equal error rate and the (interpolated) threshold where it occurs."""
    curve = det_curve(scores)
    return eer_from_points(curve.thresholds, curve.apcer, curve.bpcer)


def acer(apcer: float, bpcer: float) -> float:
    if not (0.0 <= apcer <= 1.0 and 0.0 <= bpcer <= 1.0):
        raise OutOfRange(f"rates must lie in [0, 1], got apcer={apcer}, bpcer={bpcer}")
    return (apcer + bpcer) / 2


def accuracy(scores: ScoreSet, threshold: float = DEFAULT_THRESHOLD) -> float:
    """Share of correctly classified presentations, weighted by class counts."""
    s, attack, _ = _split(scores)
    apcer, _, bpcer = confusion_at_threshold(scores, threshold)
    n_pa = np.count_nonzero(attack)
    n_bf = attack.size - n_pa
    return float(((1 - apcer) * n_pa + (1 - bpcer) * n_bf) / attack.size)


@dataclass(frozen=True)
class EvalReport:
    system_id: str
    threshold: float
    apcer: float
    apcer_by_species: dict
    apcer_max: float
    bpcer: float
    acer: float
    accuracy: float
    d_eer: float
    d_eer_threshold: float
    counts: dict

    def to_dict(self) -> dict:
        d = asdict(self)
        # ACER averages APCER and BPCER, which ISO/IEC 30107-3 deprecates
        d["legacy_fields"] = ["acer"]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def evaluate(scores: ScoreSet, threshold: float = DEFAULT_THRESHOLD) -> EvalReport:
    s, attack, species = _split(scores)
    apcer, by_species, bpcer = confusion_at_threshold(scores, threshold)
    rate, eer_thr = d_eer(scores)
    n_pa = int(np.count_nonzero(attack))
    counts = {
        "bona_fide": int(attack.size - n_pa),
        "attack": n_pa,
        "by_species": {sp: int(np.count_nonzero(attack & (species == sp))) for sp in by_species},
    }
    return EvalReport(
        system_id=scores.system_id,
        threshold=float(threshold),
        apcer=apcer,
        apcer_by_species=by_species,
        apcer_max=max(by_species.values()),
        bpcer=bpcer,
        acer=acer(apcer, bpcer),
        accuracy=accuracy(scores, threshold),
        d_eer=rate,
        d_eer_threshold=eer_thr,
        counts=counts,
    )


def detection_rate(scores: ScoreSet, threshold: float, species: Optional[set] = None) -> float:
    """Share of attacks (optionally restricted to ``species``) scoring >= threshold."""
    s, attack, sp = _split(scores)
    mask = attack if species is None else attack & np.isin(sp, list(species))
    if not mask.any():
        raise SingleClass("no attack samples of the requested species")
    return float(np.count_nonzero(s[mask] >= threshold) / np.count_nonzero(mask))
