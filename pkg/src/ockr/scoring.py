"""Frame projection, video-level score fusion, calibration, and decisions.

A frame score is the sparse kernel-regression projection through a client
model: sum over support rows of alpha_i times the view-averaged kernel
value. Video scores are the arithmetic mean of frame scores (raw rule) and,
when a Gaussian calibration is present, the mean of the per-frame standard
normal CDF values (probabilistic rule). A score at or above the threshold
is a bona fide decision.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import PreconditionError
from .featurestore import LABEL_ATTACK, LABEL_BONAFIDE, ViewId
from .kernels import fused_cross_matrix
from .models import Calibration, ClientModel

#: relative floor applied to a degenerate calibration sigma
SIGMA_FLOOR = 1e-6

FrameViews = Mapping[ViewId, np.ndarray]


@dataclass(frozen=True)
class ScoreRecord:
    client_id: str
    video_id: str
    frame_scores: np.ndarray
    video_score_raw: float
    video_score_prob: float | None = None
    decision_raw: str | None = None
    decision_prob: str | None = None
    label: str | None = None
    pais: str | None = None

    def to_obj(self) -> dict:
        return {
            "client": self.client_id,
            "video": self.video_id,
            "frames": [float(s) for s in self.frame_scores],
            "raw": self.video_score_raw,
            "prob": self.video_score_prob,
            "decision_raw": self.decision_raw,
            "decision_prob": self.decision_prob,
            "label": self.label,
            "pais": self.pais,
        }


def _stack_frames(frames: FrameViews | Sequence[FrameViews], views) -> dict[ViewId, np.ndarray]:
    """Accept either per-view stacked matrices or a list of per-frame view dicts."""
    if isinstance(frames, Mapping):
        return {v: np.atleast_2d(np.asarray(frames[v], dtype=np.float64)) for v in views}
    if not frames:
        raise PreconditionError("empty frame list")
    stacked: dict[ViewId, np.ndarray] = {}
    for view in views:
        try:
            stacked[view] = np.stack(
                [np.asarray(f[view], dtype=np.float64).reshape(-1) for f in frames]
            )
        except KeyError:
            raise PreconditionError(f"missing view {view} in a test frame") from None
    return stacked


def frame_scores(model: ClientModel, frames: FrameViews | Sequence[FrameViews]) -> np.ndarray:
    """Raw projection scores for a batch of frames (length-F vector)."""
    stacked = _stack_frames(frames, model.config.views)
    cross = fused_cross_matrix(stacked, model.support, model.config)
    return cross @ model.alpha_values


def score_frame(model: ClientModel, z: FrameViews) -> float:
    """Raw projection score of one frame; costs exactly nnz * views kernel evaluations."""
    for view in model.config.views:
        if view not in z:
            raise PreconditionError(f"missing view {view} for scoring")
    return float(frame_scores(model, [z])[0])


def probabilistic_scores(scores: np.ndarray, calibration: Calibration) -> np.ndarray:
    """Per-frame normality: standard normal CDF of the standardised raw score."""
    return ndtr((np.asarray(scores, dtype=np.float64) - calibration.mu) / calibration.sigma)


def decide(score: float, tau: float) -> str:
    """bonafide iff score >= tau (ties accept)."""
    return LABEL_BONAFIDE if score >= tau else LABEL_ATTACK


def score_video(
    model: ClientModel,
    frames: FrameViews | Sequence[FrameViews],
    client_id: str | None = None,
    video_id: str = "",
    label: str | None = None,
    pais: str | None = None,
) -> ScoreRecord:
    """Score all frames of one video and fuse them to video level."""
    scores = frame_scores(model, frames)
    if scores.size == 0:
        raise PreconditionError("empty frame list")
    raw = float(np.mean(scores))

    prob = None
    decision_prob = None
    if model.calibration is not None:
        prob = float(np.mean(probabilistic_scores(scores, model.calibration)))
    decision_raw = None
    if model.tau is not None:
        decision_raw = decide(raw, model.tau)
        if prob is not None:
            tau_prob = float(
                ndtr((model.tau - model.calibration.mu) / model.calibration.sigma)
            )
            decision_prob = decide(prob, tau_prob)

    return ScoreRecord(
        client_id=client_id if client_id is not None else model.client_id,
        video_id=video_id,
        frame_scores=scores,
        video_score_raw=raw,
        video_score_prob=prob,
        decision_raw=decision_raw,
        decision_prob=decision_prob,
        label=label,
        pais=pais,
    )


def fit_calibration(
    model: ClientModel, calib_frames: FrameViews | Sequence[FrameViews]
) -> Calibration:
    """Gaussian fit (sample mean, ddof=1 std) of bona fide calibration frame scores.

    The calibration split must be disjoint from the training support; under
    exact interpolation the training self-scores are all 1 and carry no
    spread. A degenerate sigma is floored and reported.
    """
    scores = frame_scores(model, calib_frames)
    if scores.size < 2:
        raise PreconditionError(f"calibration needs >= 2 frames, got {scores.size}")
    mu = float(np.mean(scores))
    sigma = float(np.std(scores, ddof=1))
    floor = SIGMA_FLOOR * max(1.0, abs(mu))
    if sigma < floor:
        warnings.warn(
            f"calibration scores nearly constant (sigma={sigma:.3g}); flooring at {floor:.3g}",
            stacklevel=2,
        )
        sigma = floor
    return Calibration(mu=mu, sigma=sigma)


def quantile_threshold(scores: np.ndarray, level: float) -> float:
    """Score quantile used as the bona fide rejection threshold at ``level``."""
    if not 0.0 <= level <= 1.0:
        raise PreconditionError(f"confidence level must be in [0, 1], got {level}")
    return float(np.quantile(np.asarray(scores, dtype=np.float64), level))
