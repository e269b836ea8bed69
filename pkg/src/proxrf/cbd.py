"""Collective behavior descriptor for a group of pedestrians in a window.

The descriptor pools first-stage interaction predictions over all ordered
member pairs into a normalized 6-bin histogram and appends the group's
mean speed, the rate of change of its dispersion, and (optionally) the
eigenvalue ratio of the member-position covariance, which separates
aligned formations (queues) from isotropic ones (conversation circles).
A second random forest over these vectors assigns one of six collective
behaviors.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    EmptyGroup,
    FrameMismatch,
    InsufficientData,
    MissingFrames,
    ModelShapeMismatch,
    ShapeMismatch,
)
from .pid import InteractionLabel, PidConfig, _pid_from_states
from .trajectory import (
    DEFAULT_MAX_GAP,
    SmoothingConfig,
    Trajectory,
    derivative,
    smoothed_states,
)

DEFAULT_PREDICTION_STRIDE = 5


class CollectiveLabel(enum.Enum):
    """The six collective behaviors."""

    Gathering = "Gathering"
    Talking = "Talking"
    Dismissal = "Dismissal"
    Walking = "Walking"
    Chasing = "Chasing"
    Queuing = "Queuing"

    @property
    def code(self) -> str:
        return self.value

    @property
    def class_id(self) -> int:
        return _COLLECTIVE_IDS[self]

    @classmethod
    def from_class_id(cls, class_id: int) -> "CollectiveLabel":
        return _COLLECTIVE_ORDER[class_id]


_COLLECTIVE_ORDER = tuple(CollectiveLabel)
_COLLECTIVE_IDS = {lab: i for i, lab in enumerate(_COLLECTIVE_ORDER)}


class GroupWindow:
    """Per-frame membership and smoothed kinematics of a group in a window.

    Member states cover each track's whole contiguous spans, not just the
    window, so pair descriptors centered near the window edges can reach
    back and forward as far as the tracks allow.  Membership at a frame
    means the track has a state there.
    """

    __slots__ = ("center_frame", "t2", "fps", "smoothing", "member_states", "members_per_frame")

    def __init__(self, center_frame, t2, fps, smoothing, member_states):
        if t2 < 2 or t2 & (t2 - 1):
            raise ValueError(f"t2 must be a power of two >= 2, got {t2}")
        self.center_frame = int(center_frame)
        self.t2 = int(t2)
        self.fps = float(fps)
        self.smoothing = smoothing
        self.member_states = member_states
        start, end = self.span
        per_frame = {}
        for f in range(start, end + 1):
            ids = tuple(tid for tid, st in member_states.items() if f in st)
            if not ids:
                raise EmptyGroup(f"no group member at frame {f}")
            per_frame[f] = ids
        self.members_per_frame = per_frame

    @property
    def span(self) -> tuple:
        """First and last frame (inclusive): [t - t2/2 + 1, t + t2/2]."""
        return self.center_frame - self.t2 // 2 + 1, self.center_frame + self.t2 // 2

    @classmethod
    def build(
        cls,
        trajectories: Sequence[Trajectory],
        center_frame: int,
        t2: int,
        smoothing: SmoothingConfig,
        max_gap: int = DEFAULT_MAX_GAP,
        states: Optional[dict] = None,
    ) -> "GroupWindow":
        """Window over the given tracks; ``states`` may carry precomputed
        smoothed states per track id to reuse across windows."""
        if not trajectories:
            raise EmptyGroup("no trajectories")
        fps = trajectories[0].fps
        for tr in trajectories:
            if tr.fps != fps:
                raise FrameMismatch(f"fps mismatch: {tr.fps} vs {fps}")
        member_states = {}
        for tr in trajectories:
            if states is not None and tr.track_id in states:
                member_states[tr.track_id] = states[tr.track_id]
            else:
                member_states[tr.track_id] = smoothed_states(tr, smoothing, max_gap=max_gap)
        return cls(center_frame, t2, fps, smoothing, member_states)


@dataclass(frozen=True, eq=False)
class CbdDescriptor:
    """Interaction histogram + speed, dispersion and shape cues."""

    interaction_hist: np.ndarray
    mean_speed: float
    dispersion_change: float
    shape_ratio: Optional[float]
    include_shape: bool
    center_frame: int

    def vector(self) -> np.ndarray:
        tail = [self.mean_speed, self.dispersion_change]
        if self.include_shape:
            tail.append(self.shape_ratio)
        return np.concatenate([self.interaction_hist, tail])

    def __len__(self):
        return len(self.interaction_hist) + 2 + (1 if self.include_shape else 0)


def interaction_histogram(predictions: Sequence[InteractionLabel]) -> np.ndarray:
    """Normalized label counts; all zeros when there are no predictions."""
    hist = np.zeros(len(InteractionLabel))
    if not predictions:
        return hist
    for lab in predictions:
        hist[lab.class_id] += 1.0
    return hist / len(predictions)


def mean_speed(window: GroupWindow) -> float:
    """Double average of member speeds: over members, then over frames."""
    start, end = window.span
    total = 0.0
    for f in range(start, end + 1):
        ids = window.members_per_frame[f]
        total += sum(window.member_states[tid][f].speed for tid in ids) / len(ids)
    return total / window.t2


def dispersion(positions: Sequence) -> float:
    """RMS distance of the points from their centroid."""
    pts = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise EmptyGroup("dispersion of an empty point set")
    centered = pts - pts.mean(axis=0)
    return float(np.sqrt((centered**2).sum(axis=1).mean()))


def _frame_positions(window: GroupWindow, frame: int) -> list:
    return [window.member_states[tid][frame].position for tid in window.members_per_frame[frame]]


def dispersion_change(window: GroupWindow) -> float:
    """Mean derivative of the per-frame group dispersion, in m/s."""
    start, end = window.span
    series = [(f, dispersion(_frame_positions(window, f))) for f in range(start, end + 1)]
    if len(series) < 2:
        raise InsufficientData("dispersion change needs >= 2 frames")
    d_prime = derivative(series, window.fps)
    return float(np.mean([v for _, v in d_prime]))


def shape_ratio(positions: Sequence) -> float:
    """Covariance eigenvalue ratio lambda_max / lambda_min of the points.

    Returns 0 for fewer than two points or a degenerate (collinear)
    spread, where the smallest eigenvalue is below 1e-9 m^2.
    """
    pts = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        return 0.0
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / len(pts)
    lam_min, lam_max = np.linalg.eigvalsh(cov)
    if lam_min <= 1e-9:
        return 0.0
    return float(lam_max / lam_min)


def _pid_centers(window: GroupWindow, stride: int) -> range:
    start, end = window.span
    return range(start, end + 1, stride)


def collect_pair_predictions(
    window: GroupWindow,
    pid_model,
    pid_cfg: PidConfig,
    stride: int = DEFAULT_PREDICTION_STRIDE,
    seed: int = 0,
    cache: Optional[dict] = None,
) -> list:
    """First-stage predictions over all ordered pairs and stride centers.

    A pair contributes at a center only when both tracks cover the full
    descriptor window there.  ``cache`` maps (anchor, target, center) to
    a descriptor vector (None for an uncoverable placement); vectors do
    not depend on the model, so one cache may serve many models as long
    as the descriptor config, smoothing and seed stay fixed.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    back, fwd = pid_cfg.window_halves
    ids = sorted(window.member_states)
    vecs = []
    for center in _pid_centers(window, stride):
        frames = range(center - back, center + fwd + 1)
        present = [
            tid
            for tid in ids
            if all(f in window.member_states[tid] for f in frames)
        ]
        for aid in present:
            for tid in present:
                if aid == tid:
                    continue
                key = (aid, tid, center)
                if cache is not None and key in cache:
                    vec = cache[key]
                else:
                    vec = _pid_from_states(
                        window.member_states[aid],
                        window.member_states[tid],
                        aid,
                        tid,
                        center,
                        pid_cfg,
                        window.fps,
                        seed,
                    ).vector()
                    if cache is not None:
                        cache[key] = vec
                if vec is not None:
                    vecs.append(vec)
    if not vecs:
        return []
    try:
        votes = pid_model.predict_batch(np.array(vecs))
    except ShapeMismatch as e:
        raise ModelShapeMismatch(str(e)) from None
    return [InteractionLabel.from_class_id(int(c)) for c in votes]


def compute_cbd(
    window: GroupWindow,
    pid_model,
    pid_cfg: PidConfig,
    smoothing: Optional[SmoothingConfig] = None,
    stride: int = DEFAULT_PREDICTION_STRIDE,
    include_shape: bool = True,
    seed: int = 0,
    cache: Optional[dict] = None,
) -> CbdDescriptor:
    """Full group descriptor for one window.

    ``smoothing`` must match the config the window was built with (None
    accepts the window's own); the window already carries the smoothed
    kinematics, so nothing is re-filtered here.
    """
    if smoothing is not None and smoothing != window.smoothing:
        raise ValueError("window was built with a different smoothing config")
    predictions = collect_pair_predictions(
        window, pid_model, pid_cfg, stride=stride, seed=seed, cache=cache
    )
    ratio = shape_ratio(_frame_positions(window, window.center_frame)) if include_shape else None
    return CbdDescriptor(
        interaction_hist=interaction_histogram(predictions),
        mean_speed=mean_speed(window),
        dispersion_change=dispersion_change(window),
        shape_ratio=ratio,
        include_shape=include_shape,
        center_frame=window.center_frame,
    )


def classify_collective(descriptor: CbdDescriptor, model) -> tuple:
    """Forest vote over one descriptor: (label, per-class vote fractions)."""
    try:
        votes = model.vote_fractions(descriptor.vector()[None, :])[0]
    except ShapeMismatch as e:
        raise ModelShapeMismatch(str(e)) from None
    n = len(_COLLECTIVE_ORDER)
    if len(votes) > n:
        raise ModelShapeMismatch(f"model votes over {len(votes)} classes, expected <= {n}")
    probs = np.zeros(n)
    probs[: len(votes)] = votes
    return _COLLECTIVE_ORDER[int(np.argmax(probs))], probs
