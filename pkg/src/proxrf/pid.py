"""Personal interaction descriptor for an ordered (anchor, target) pair.

The descriptor over a T1-frame window concatenates a 16-cell polar
histogram of the target's position in the anchor's body frame (4 proxemic
distance bands x 4 angular sectors, KDE-smoothed) with a pyramid of
relative-speed averages.  A trained random forest over these vectors
assigns one of six directional interaction labels.
"""

from __future__ import annotations

import enum
import math
import zlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    FrameMismatch,
    MissingFrames,
    ModelShapeMismatch,
    ShapeMismatch,
    WindowLengthMismatch,
)
from .trajectory import (
    KinematicState,
    RelativePolar,
    SmoothingConfig,
    Trajectory,
    derivative,
    relative_polar,
    smoothed_states,
    wrap_angle,
)

_SEED_MASK = 0xFFFFFFFF


class InteractionLabel(enum.Enum):
    """The six directional pairwise interactions."""

    BeingFollowed = "BF"
    Following = "F"
    WalkingTogether = "WT"
    StandingPair = "SP"
    Splitting = "S"
    Approaching = "Ap"

    @property
    def code(self) -> str:
        return self.value

    @property
    def class_id(self) -> int:
        return _INTERACTION_IDS[self]

    @classmethod
    def from_class_id(cls, class_id: int) -> "InteractionLabel":
        return _INTERACTION_ORDER[class_id]


_INTERACTION_ORDER = tuple(InteractionLabel)
_INTERACTION_IDS = {lab: i for i, lab in enumerate(_INTERACTION_ORDER)}


@dataclass(frozen=True)
class PolarGrid:
    """Partition of the anchor-centered plane into distance bands x sectors.

    The default distance boundaries are Hall's proxemic zones (intimate,
    personal, social, public); the outermost band is unbounded.  Sectors
    are centered on the anchor's front/left/back/right, so sector 0 spans
    [-pi/4, pi/4) around the facing direction.
    """

    distance_boundaries: tuple = (0.5, 1.25, 3.5)
    angular_sector_count: int = 4

    def __post_init__(self):
        b = self.distance_boundaries
        if len(b) < 1 or any(b[i] >= b[i + 1] for i in range(len(b) - 1)) or b[0] <= 0:
            raise ValueError(f"distance boundaries must be positive and increasing, got {b}")
        if self.angular_sector_count < 1:
            raise ValueError("need at least one angular sector")

    @property
    def band_count(self) -> int:
        return len(self.distance_boundaries) + 1

    @property
    def cell_count(self) -> int:
        return self.band_count * self.angular_sector_count

    def band_of(self, rho):
        """Distance band index; boundaries belong to the outer band."""
        return np.searchsorted(np.asarray(self.distance_boundaries), rho, side="right")

    def sector_of(self, theta):
        """Angular sector index; sector k is centered at k * 2pi/m."""
        m = self.angular_sector_count
        width = 2.0 * math.pi / m
        return np.floor((np.asarray(theta) + 0.5 * width) / width).astype(np.int64) % m

    def cell_of(self, rho, theta):
        """Flat cell index, band-major: cell = band * m + sector."""
        return self.band_of(rho) * self.angular_sector_count + self.sector_of(theta)


@dataclass(frozen=True)
class PidConfig:
    """Window length, kernel widths, sampling extent and pyramid depth.

    ``assignment`` selects KDE smoothing ("kde") or hard counting of the
    raw relative positions ("hard").  ``variance_denominator`` switches
    the kernel denominators from 2*sigma (the form used here by default)
    to the conventional 2*sigma^2.
    """

    t1: int = 64
    sigma_rho: float = 0.25
    sigma_theta: float = math.pi / 8.0
    k_s: float = 3.0
    l_max: int = 1
    grid_samples_per_axis: int = 9
    variance_denominator: bool = False
    assignment: str = "kde"
    grid: PolarGrid = field(default_factory=PolarGrid)

    def __post_init__(self):
        if self.t1 < 2 or self.t1 & (self.t1 - 1):
            raise ValueError(f"t1 must be a power of two >= 2, got {self.t1}")
        if self.sigma_rho <= 0 or self.sigma_theta <= 0:
            raise ValueError("kernel widths must be > 0")
        if self.k_s <= 0:
            raise ValueError(f"k_s must be > 0, got {self.k_s}")
        if self.l_max < 0 or 2 ** self.l_max > self.t1:
            raise ValueError(f"l_max must satisfy 0 <= l_max and 2^l_max <= t1")
        if self.grid_samples_per_axis < 1:
            raise ValueError("grid_samples_per_axis must be >= 1")
        if self.assignment not in ("kde", "hard"):
            raise ValueError(f"assignment must be 'kde' or 'hard', got {self.assignment!r}")

    @property
    def pyramid_length(self) -> int:
        return 2 ** (self.l_max + 1) - 1

    @property
    def descriptor_length(self) -> int:
        return self.grid.cell_count + self.pyramid_length

    @property
    def window_halves(self) -> tuple:
        """Frames before and from the center: [t - t1/2 + 1, t + t1/2]."""
        return self.t1 // 2 - 1, self.t1 // 2


@dataclass(frozen=True, eq=False)
class PidDescriptor:
    """Polar histogram + speed pyramid for one ordered pair window."""

    histogram: np.ndarray
    speed_pyramid: np.ndarray
    center_frame: int

    def vector(self) -> np.ndarray:
        return np.concatenate([self.histogram, self.speed_pyramid])

    def __len__(self):
        return len(self.histogram) + len(self.speed_pyramid)


def _denominators(cfg: PidConfig) -> tuple:
    if cfg.variance_denominator:
        return 2.0 * cfg.sigma_rho**2, 2.0 * cfg.sigma_theta**2
    return 2.0 * cfg.sigma_rho, 2.0 * cfg.sigma_theta


def kde_kernel(sample: RelativePolar, center: RelativePolar, cfg: PidConfig) -> float:
    """Unnormalized Gaussian-style kernel between two polar points.

    The angular term uses the smallest signed angular difference, so the
    kernel respects the wraparound at +-pi.
    """
    dr, dt = _denominators(cfg)
    d_theta = wrap_angle(sample.theta - center.theta)
    return float(math.exp(-((sample.rho - center.rho) ** 2) / dr - d_theta**2 / dt))


def _grid_offsets(cfg: PidConfig) -> tuple:
    n = cfg.grid_samples_per_axis
    unit = np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1)
    return unit * (cfg.k_s * cfg.sigma_rho), unit * (cfg.k_s * cfg.sigma_theta)


def sample_grid(center: RelativePolar, cfg: PidConfig) -> list:
    """Weighted kernel samples on an n x n grid around one polar center.

    Points at negative distance are dropped; angles are wrapped into
    (-pi, pi]; the retained weights are normalized to unit mass.
    """
    r_off, t_off = _grid_offsets(cfg)
    dr, dt = _denominators(cfg)
    w_r = np.exp(-(r_off**2) / dr)
    w_t = np.exp(-(wrap_angle(t_off) ** 2) / dt)
    rho = center.rho + r_off
    theta = wrap_angle(center.theta + t_off)
    keep = rho >= 0.0
    weights = np.outer(w_r[keep], w_t)
    weights /= weights.sum()
    out = []
    for i, r in enumerate(rho[keep]):
        for j, th in enumerate(theta):
            out.append((RelativePolar(float(r), float(th)), float(weights[i, j])))
    return out


def _window_histogram(
    rho: np.ndarray, theta: np.ndarray, grid: PolarGrid, cfg: PidConfig
) -> np.ndarray:
    """Histogram of a window's per-frame polar samples, shape (cells,).

    Each frame contributes mass 1/T: hard mode counts the sample's own
    cell, KDE mode spreads the frame's unit mass over its grid samples.
    """
    t = len(rho)
    if cfg.assignment == "hard":
        cells = grid.cell_of(rho, theta)
        hist = np.bincount(cells, minlength=grid.cell_count).astype(float)
        return hist / t

    r_off, t_off = _grid_offsets(cfg)
    dr, dt = _denominators(cfg)
    w_r = np.exp(-(r_off**2) / dr)
    w_t = np.exp(-(wrap_angle(t_off) ** 2) / dt)
    r_pts = rho[:, None] + r_off[None, :]  # (t, n)
    t_pts = wrap_angle(theta[:, None] + t_off[None, :])  # (t, n)
    keep = r_pts >= 0.0
    band = grid.band_of(r_pts)
    sector = grid.sector_of(t_pts)
    # (t, n, n) separable weights, masked where rho < 0, normalized per frame
    w = (w_r[None, :] * keep)[:, :, None] * w_t[None, None, :]
    w /= w.sum(axis=(1, 2), keepdims=True)
    cells = band[:, :, None] * grid.angular_sector_count + sector[:, None, :]
    hist = np.bincount(cells.ravel(), weights=w.ravel(), minlength=grid.cell_count)
    return hist / t


def accumulate_histogram(
    pair_samples: Sequence[RelativePolar], grid: PolarGrid, cfg: PidConfig
) -> np.ndarray:
    """Window histogram from per-frame relative polar samples."""
    if len(pair_samples) != cfg.t1:
        raise WindowLengthMismatch(
            f"expected {cfg.t1} frames of samples, got {len(pair_samples)}"
        )
    rho = np.array([s.rho for s in pair_samples], dtype=float)
    theta = np.array([s.theta for s in pair_samples], dtype=float)
    return _window_histogram(rho, theta, grid, cfg)


def speed_pyramid(d_prime: Sequence[float], cfg: PidConfig) -> np.ndarray:
    """Pyramid of means of the distance derivative over 1, 2, 4... splits."""
    x = np.asarray(d_prime, dtype=float)
    if len(x) != cfg.t1:
        raise WindowLengthMismatch(f"expected {cfg.t1} values, got {len(x)}")
    parts = [x.reshape(2**level, -1).mean(axis=1) for level in range(cfg.l_max + 1)]
    return np.concatenate(parts)


def _orientation_rng(seed: int, anchor_id: str, target_id: str, frame: int):
    """Stream for the random heading of a slow anchor at one frame.

    Keyed by (seed, pair, frame) so overlapping windows and parallel
    evaluation draw identical angles.
    """
    ss = np.random.SeedSequence(
        [
            int(seed) & _SEED_MASK,
            zlib.crc32(str(anchor_id).encode("utf-8")),
            zlib.crc32(str(target_id).encode("utf-8")),
            int(frame) & _SEED_MASK,
        ]
    )
    return np.random.default_rng(ss)


def _window_polars(
    anchor_states: dict,
    target_states: dict,
    anchor_id: str,
    target_id: str,
    start: int,
    end: int,
    seed: int,
) -> list:
    rel = []
    for f in range(start, end + 1):
        sa = anchor_states.get(f)
        sb = target_states.get(f)
        if sa is None or sb is None:
            who = anchor_id if sa is None else target_id
            raise MissingFrames(f"track {who}: no state at frame {f}")
        if sa.orientation is None:
            rng = _orientation_rng(seed, anchor_id, target_id, f)
        else:
            rng = _INERT_RNG
        rel.append(relative_polar(sa, sb, rng))
    return rel


_INERT_RNG = np.random.default_rng(0)  # only passed where no draw can happen


def _pid_from_states(
    anchor_states: dict,
    target_states: dict,
    anchor_id: str,
    target_id: str,
    center_frame: int,
    cfg: PidConfig,
    fps: float,
    seed: int,
) -> PidDescriptor:
    back, fwd = cfg.window_halves
    start, end = center_frame - back, center_frame + fwd
    rel = _window_polars(anchor_states, target_states, anchor_id, target_id, start, end, seed)
    hist = accumulate_histogram(rel, cfg.grid, cfg)
    dist = [(f, s.rho) for f, s in zip(range(start, end + 1), rel)]
    d_prime = [v for _, v in derivative(dist, fps)]
    return PidDescriptor(
        histogram=hist, speed_pyramid=speed_pyramid(d_prime, cfg), center_frame=center_frame
    )


def compute_pid(
    anchor: Trajectory,
    target: Trajectory,
    center_frame: int,
    cfg: PidConfig,
    smoothing: SmoothingConfig,
    seed: int = 0,
) -> PidDescriptor:
    """Full descriptor for the window centered (right of middle) at a frame.

    Both trajectories are smoothed over their whole contiguous spans, then
    the window [t - T1/2 + 1, t + T1/2] is described.
    """
    if anchor.fps != target.fps:
        raise FrameMismatch(f"fps mismatch: {anchor.fps} vs {target.fps}")
    states_a = smoothed_states(anchor, smoothing)
    states_b = smoothed_states(target, smoothing)
    return _pid_from_states(
        states_a, states_b, anchor.track_id, target.track_id,
        center_frame, cfg, anchor.fps, seed,
    )


def classify_interaction(descriptor: PidDescriptor, model) -> tuple:
    """Forest vote over one descriptor: (label, per-class vote fractions)."""
    try:
        votes = model.vote_fractions(descriptor.vector()[None, :])[0]
    except ShapeMismatch as e:
        raise ModelShapeMismatch(str(e)) from None
    n = len(_INTERACTION_ORDER)
    if len(votes) > n:
        raise ModelShapeMismatch(
            f"model votes over {len(votes)} classes, expected <= {n}"
        )
    probs = np.zeros(n)
    probs[: len(votes)] = votes
    return _INTERACTION_ORDER[int(np.argmax(probs))], probs
