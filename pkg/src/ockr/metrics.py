"""ISO-30107-3-style PAD metrics plus EER, HTER, and AUC.

Comparison direction follows the decision rule (score >= threshold means
bona fide): an attack scoring at or above the threshold is an acceptance
error, a bona fide scoring below it is a rejection error. APCER is computed
per attack-instrument species and reported as the max over species; ACER is
the mean of APCER and BPCER at the report threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import PreconditionError
from .featurestore import LABEL_ATTACK, LABEL_BONAFIDE


@dataclass(frozen=True)
class LabeledScore:
    score: float
    label: str
    pais: str | None = None


@dataclass
class EvalReport:
    threshold: float
    threshold_source: str
    apcer_by_pais: dict[str, float]
    apcer: float
    bpcer: float
    acer: float
    eer: float
    eer_threshold: float
    hter_at: dict[float, float]
    auc: float
    counts: dict[str, int] = field(default_factory=dict)

    def to_obj(self) -> dict:
        return {
            "threshold": self.threshold,
            "threshold_source": self.threshold_source,
            "apcer_by_pais": dict(sorted(self.apcer_by_pais.items())),
            "apcer": self.apcer,
            "bpcer": self.bpcer,
            "acer": self.acer,
            "eer": self.eer,
            "eer_threshold": self.eer_threshold,
            "hter_at": {repr(t): h for t, h in sorted(self.hter_at.items())},
            "auc": self.auc,
            "counts": dict(sorted(self.counts.items())),
        }


def _split(scores: Sequence[LabeledScore]) -> tuple[np.ndarray, np.ndarray]:
    bona = np.array([s.score for s in scores if s.label == LABEL_BONAFIDE], dtype=np.float64)
    attack = np.array([s.score for s in scores if s.label == LABEL_ATTACK], dtype=np.float64)
    if bona.size == 0 or attack.size == 0:
        raise PreconditionError(
            f"need both classes (got {bona.size} bona fide, {attack.size} attack)"
        )
    return bona, attack


def _validate(scores: Sequence[LabeledScore]) -> None:
    for s in scores:
        if s.label not in (LABEL_BONAFIDE, LABEL_ATTACK):
            raise PreconditionError(f"unknown label {s.label!r}")
        if s.label == LABEL_ATTACK and not s.pais:
            raise PreconditionError("attack score without a PAIS tag")


def apcer_bpcer(
    scores: Sequence[LabeledScore], threshold: float
) -> tuple[dict[str, float], float, float]:
    """(per-PAIS APCER, max-PAIS APCER, BPCER) at the given threshold."""
    _validate(scores)
    bona, _ = _split(scores)
    by_pais: dict[str, list[float]] = {}
    for s in scores:
        if s.label == LABEL_ATTACK:
            by_pais.setdefault(s.pais, []).append(s.score)
    apcer_map = {
        pais: float(np.mean(np.asarray(vals) >= threshold)) for pais, vals in by_pais.items()
    }
    apcer = max(apcer_map.values())
    bpcer = float(np.mean(bona < threshold))
    return apcer_map, apcer, bpcer


def far_frr(scores: Sequence[LabeledScore], threshold: float) -> tuple[float, float]:
    """Pooled false acceptance (attacks passing) and false rejection rates."""
    bona, attack = _split(scores)
    return float(np.mean(attack >= threshold)), float(np.mean(bona < threshold))


def hter(scores: Sequence[LabeledScore], threshold: float) -> float:
    far, frr = far_frr(scores, threshold)
    return (far + frr) / 2.0


def _candidate_thresholds(values: np.ndarray) -> np.ndarray:
    distinct = np.unique(values)
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    return np.concatenate(([distinct[0] - 1.0], mids, [distinct[-1] + 1.0]))


def eer(scores: Sequence[LabeledScore]) -> tuple[float, float]:
    """Equal error rate and its threshold from a discrete midpoint sweep.

    The threshold minimising |FAR - FRR| is selected (lowest such threshold
    on ties) and (FAR + FRR)/2 there is reported.
    """
    bona, attack = _split(scores)
    candidates = _candidate_thresholds(np.concatenate([bona, attack]))
    far = np.mean(attack[None, :] >= candidates[:, None], axis=1)
    frr = np.mean(bona[None, :] < candidates[:, None], axis=1)
    gaps = np.abs(far - frr)
    best = int(np.argmin(gaps))  # argmin takes the first, i.e. lowest threshold
    return float((far[best] + frr[best]) / 2.0), float(candidates[best])


def auc(scores: Sequence[LabeledScore]) -> float:
    """Mann-Whitney AUC with half credit for ties; bona fide is the positive class."""
    bona, attack = _split(scores)
    combined = np.concatenate([bona, attack])
    ranks = rankdata(combined, method="average")
    rank_sum = float(np.sum(ranks[: bona.size]))
    n_pos, n_neg = bona.size, attack.size
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def evaluate(
    scores: Sequence[LabeledScore],
    dev_scores: Sequence[LabeledScore] | None = None,
) -> EvalReport:
    """Full report; the ACER threshold comes from the dev EER when provided."""
    scores = list(scores)
    _validate(scores)
    if dev_scores is not None:
        _, threshold = eer(dev_scores)
        source = "dev_eer"
    else:
        _, threshold = eer(scores)
        source = "test_eer"

    apcer_map, apcer_value, bpcer_value = apcer_bpcer(scores, threshold)
    eer_rate, eer_thr = eer(scores)
    bona, attack = _split(scores)
    counts: dict[str, int] = {"bonafide": int(bona.size), "attack": int(attack.size)}
    for s in scores:
        if s.label == LABEL_ATTACK:
            counts[f"attack:{s.pais}"] = counts.get(f"attack:{s.pais}", 0) + 1

    return EvalReport(
        threshold=float(threshold),
        threshold_source=source,
        apcer_by_pais=apcer_map,
        apcer=apcer_value,
        bpcer=bpcer_value,
        acer=(apcer_value + bpcer_value) / 2.0,
        eer=eer_rate,
        eer_threshold=eer_thr,
        hter_at={float(threshold): hter(scores, threshold)},
        auc=auc(scores),
        counts=counts,
    )
