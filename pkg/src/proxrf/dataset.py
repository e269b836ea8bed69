"""Scene recordings, canonical file formats, external-corpus adapters and
sliding-window enumeration.

Canonical on-disk formats (UTF-8, `#` comment lines ignored):
  .trj  header `# fps=<float>`, then `frame,track_id,x,y` (meters)
  .pia  `start,end,anchor_id,target_id,LABEL` with the two-letter codes
  .cba  `start,end,LABEL` with full collective label names
  .hom  nine whitespace-separated reals, row-major image-to-ground matrix

A scene on disk is `<sequence_id>.trj` plus optional sibling `.pia` and
`.cba` files with the same stem.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .cbd import CollectiveLabel
from .errors import (
    AnnotationConflict,
    ConfigError,
    ParseError,
    ReferentialError,
)
from .pid import InteractionLabel
from .trajectory import DEFAULT_MAX_GAP, TimedPosition, Trajectory

LAYOUTS = ("ncad-like", "behave-like", "canonical")
FOOT_POINTS = ("bottom-center", "box-center", "point")


@dataclass(frozen=True)
class PairAnnotation:
    """One directional interaction over an inclusive frame range."""

    start: int
    end: int
    anchor_id: str
    target_id: str
    label: InteractionLabel

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"annotation range {self.start}..{self.end} is empty")
        if self.anchor_id == self.target_id:
            raise ValueError(f"pair annotation with anchor == target ({self.anchor_id})")


@dataclass(frozen=True)
class CollectiveAnnotation:
    """One collective behavior over an inclusive frame range."""

    start: int
    end: int
    label: CollectiveLabel

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"annotation range {self.start}..{self.end} is empty")


def _ranges_overlap(a_start, a_end, b_start, b_end):
    return a_start <= b_end and b_start <= a_end


@dataclass(eq=True)
class SceneRecording:
    """One annotated scene: trajectories plus pair/collective labels.

    Construction canonicalizes ordering (tracks by id, annotations by
    range) and validates referential integrity and label consistency, so
    two recordings with the same content compare equal.
    """

    sequence_id: str
    fps: float
    trajectories: tuple
    pair_annotations: tuple
    collective_annotations: tuple

    def __init__(self, sequence_id, fps, trajectories, pair_annotations=(), collective_annotations=()):
        self.sequence_id = str(sequence_id)
        self.fps = float(fps)
        self.trajectories = tuple(sorted(trajectories, key=lambda t: t.track_id))
        self.pair_annotations = tuple(
            sorted(
                pair_annotations,
                key=lambda a: (a.start, a.end, a.anchor_id, a.target_id, a.label.code),
            )
        )
        self.collective_annotations = tuple(
            sorted(collective_annotations, key=lambda a: (a.start, a.end, a.label.code))
        )
        self._validate()

    def _validate(self):
        ids = [t.track_id for t in self.trajectories]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate track ids {dup}")
        known = set(ids)
        for t in self.trajectories:
            if t.fps != self.fps:
                raise ValueError(f"track {t.track_id} fps {t.fps} != scene fps {self.fps}")
        for a in self.pair_annotations:
            for tid in (a.anchor_id, a.target_id):
                if tid not in known:
                    raise ReferentialError(
                        f"{self.sequence_id}: annotation references unknown track {tid!r}"
                    )
        by_pair = {}
        for a in self.pair_annotations:
            by_pair.setdefault((a.anchor_id, a.target_id), []).append(a)
        for anns in by_pair.values():
            for i, a in enumerate(anns):
                for b in anns[i + 1 :]:
                    if a.label is not b.label and _ranges_overlap(a.start, a.end, b.start, b.end):
                        raise AnnotationConflict(
                            f"{self.sequence_id}: pair {a.anchor_id}->{a.target_id} labeled "
                            f"{a.label.code} and {b.label.code} on overlapping ranges"
                        )
        coll = self.collective_annotations
        for i, a in enumerate(coll):
            for b in coll[i + 1 :]:
                if a.label is not b.label and _ranges_overlap(a.start, a.end, b.start, b.end):
                    raise AnnotationConflict(
                        f"{self.sequence_id}: collective labels {a.label.code} and "
                        f"{b.label.code} overlap on {max(a.start, b.start)}..{min(a.end, b.end)}"
                    )

    @property
    def frame_range(self) -> tuple:
        lo = min(t.first_frame for t in self.trajectories)
        hi = max(t.last_frame for t in self.trajectories)
        return lo, hi

    def track(self, track_id: str) -> Trajectory:
        for t in self.trajectories:
            if t.track_id == track_id:
                return t
        raise KeyError(track_id)


class FoldSplit:
    """Assignment of sequence ids to cross-validation folds."""

    def __init__(self, assignments: dict, n_folds: int = 3):
        self.n_folds = int(n_folds)
        self.assignments = {str(k): int(v) for k, v in assignments.items()}
        for seq, fold in self.assignments.items():
            if not 0 <= fold < self.n_folds:
                raise ValueError(f"fold {fold} for {seq!r} outside 0..{self.n_folds - 1}")

    def fold_of(self, sequence_id: str) -> int:
        return self.assignments[str(sequence_id)]

    def members(self, fold: int) -> list:
        return sorted(s for s, f in self.assignments.items() if f == fold)

    @classmethod
    def round_robin(cls, sequence_ids: Iterable[str], n_folds: int = 3) -> "FoldSplit":
        """Deterministic fallback split: sorted ids dealt 0,1,2,0,1,2..."""
        ordered = sorted(str(s) for s in sequence_ids)
        return cls({s: i % n_folds for i, s in enumerate(ordered)}, n_folds)

    @classmethod
    def from_file(cls, path: str, n_folds: int = 3) -> "FoldSplit":
        """Lines `sequence_id,fold`; comments and blanks ignored."""
        assignments = {}
        for lineno, raw in _numbered_lines(path):
            parts = [p.strip() for p in raw.split(",")]
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected `sequence_id,fold`")
            try:
                assignments[parts[0]] = int(parts[1])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: fold must be an integer") from None
        try:
            return cls(assignments, n_folds)
        except ValueError as e:
            raise ParseError(f"{path}: {e}") from None


def _numbered_lines(source) -> Iterator:
    """(line number, stripped content) for data lines of a path/stream."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            yield from _numbered_lines(fh)
        return
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


def _parse_fps(source, name: str) -> tuple:
    """fps from the `# fps=` header plus the remaining data lines."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            return _parse_fps(fh, name)
    fps = None
    data = []
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("fps="):
                try:
                    fps = float(body[4:])
                except ValueError:
                    raise ParseError(f"{name}:{lineno}: bad fps value {body[4:]!r}") from None
                if fps <= 0:
                    raise ParseError(f"{name}:{lineno}: fps must be > 0")
            continue
        if not line:
            continue
        if fps is None:
            raise ParseError(f"{name}:{lineno}: data before `# fps=<float>` header")
        data.append((lineno, line))
    if fps is None:
        raise ParseError(f"{name}: missing `# fps=<float>` header")
    return fps, data


def _parse_trajectories(source, name: str) -> tuple:
    fps, data = _parse_fps(source, name)
    per_track = {}
    for lineno, line in data:
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 4:
            raise ParseError(f"{name}:{lineno}: expected `frame,track_id,x,y`")
        try:
            frame = int(parts[0])
            x, y = float(parts[2]), float(parts[3])
        except ValueError:
            raise ParseError(f"{name}:{lineno}: bad number in {line!r}") from None
        if not parts[1]:
            raise ParseError(f"{name}:{lineno}: empty track id")
        per_track.setdefault(parts[1], []).append((lineno, frame, x, y))
    trajectories = []
    for tid, rows in per_track.items():
        rows.sort(key=lambda r: r[1])
        for (_, f0, _, _), (ln, f1, _, _) in zip(rows, rows[1:]):
            if f1 == f0:
                raise ParseError(f"{name}:{ln}: duplicate frame {f1} for track {tid!r}")
        try:
            trajectories.append(
                Trajectory(tid, (TimedPosition(f, x, y) for _, f, x, y in rows), fps)
            )
        except ValueError as e:
            raise ParseError(f"{name}: track {tid!r}: {e}") from None
    return fps, trajectories


def _parse_pair_annotations(source, name: str) -> list:
    out = []
    for lineno, line in _numbered_lines(source):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 5:
            raise ParseError(f"{name}:{lineno}: expected `start,end,anchor_id,target_id,LABEL`")
        try:
            start, end = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"{name}:{lineno}: bad frame number") from None
        try:
            label = InteractionLabel(parts[4])
        except ValueError:
            codes = "/".join(l.code for l in InteractionLabel)
            raise ParseError(f"{name}:{lineno}: unknown label {parts[4]!r} (want {codes})") from None
        try:
            out.append(PairAnnotation(start, end, parts[2], parts[3], label))
        except ValueError as e:
            raise ParseError(f"{name}:{lineno}: {e}") from None
    return out


def _parse_collective_annotations(source, name: str, skip_labels=(), skipped=None) -> list:
    out = []
    for lineno, line in _numbered_lines(source):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise ParseError(f"{name}:{lineno}: expected `start,end,LABEL`")
        try:
            start, end = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"{name}:{lineno}: bad frame number") from None
        if parts[2] in skip_labels:
            if skipped is not None:
                skipped.append((start, end, parts[2]))
            continue
        try:
            label = CollectiveLabel(parts[2])
        except ValueError:
            names = "/".join(l.code for l in CollectiveLabel)
            raise ParseError(f"{name}:{lineno}: unknown label {parts[2]!r} (want {names})") from None
        try:
            out.append(CollectiveAnnotation(start, end, label))
        except ValueError as e:
            raise ParseError(f"{name}:{lineno}: {e}") from None
    return out


def parse_canonical(
    trajectory_stream,
    pair_stream=None,
    collective_stream=None,
    sequence_id: str = "scene",
    name: str = "<trj>",
) -> SceneRecording:
    """Recording from canonical-format streams (paths or line iterables)."""
    if isinstance(trajectory_stream, (str, os.PathLike)):
        name = str(trajectory_stream)
    fps, trajectories = _parse_trajectories(trajectory_stream, name)
    if not trajectories:
        raise ParseError(f"{name}: no trajectory data")
    pairs = _parse_pair_annotations(pair_stream, f"{name} pairs") if pair_stream is not None else []
    coll = (
        _parse_collective_annotations(collective_stream, f"{name} collective")
        if collective_stream is not None
        else []
    )
    return SceneRecording(sequence_id, fps, trajectories, pairs, coll)


def _fmt(value: float) -> str:
    """Shortest exact decimal form, so files round-trip bit for bit."""
    return repr(float(value))


def _check_id(track_id: str):
    if "," in track_id or "#" in track_id or track_id != track_id.strip() or not track_id:
        raise ValueError(f"track id {track_id!r} not representable in canonical files")


def write_scene(rec: SceneRecording, directory: str) -> str:
    """Write `<sequence_id>.trj/.pia/.cba` under a directory; returns the
    .trj path.  Annotation files are only written when non-empty."""
    os.makedirs(directory, exist_ok=True)
    base = os.path.join(directory, rec.sequence_id)
    lines = [f"# fps={_fmt(rec.fps)}"]
    for t in rec.trajectories:
        _check_id(t.track_id)
        for s in t.samples:
            lines.append(f"{s.frame},{t.track_id},{_fmt(s.x)},{_fmt(s.y)}")
    _atomic_write(base + ".trj", "\n".join(lines) + "\n")
    if rec.pair_annotations:
        lines = [
            f"{a.start},{a.end},{a.anchor_id},{a.target_id},{a.label.code}"
            for a in rec.pair_annotations
        ]
        _atomic_write(base + ".pia", "\n".join(lines) + "\n")
    if rec.collective_annotations:
        lines = [f"{a.start},{a.end},{a.label.code}" for a in rec.collective_annotations]
        _atomic_write(base + ".cba", "\n".join(lines) + "\n")
    return base + ".trj"


def _atomic_write(path: str, text: str):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def read_scene(trj_path: str) -> SceneRecording:
    """Read a canonical scene from its .trj path plus optional siblings."""
    base, ext = os.path.splitext(trj_path)
    if ext != ".trj":
        raise ConfigError(f"expected a .trj path, got {trj_path!r}")
    pia = base + ".pia" if os.path.exists(base + ".pia") else None
    cba = base + ".cba" if os.path.exists(base + ".cba") else None
    return parse_canonical(trj_path, pia, cba, sequence_id=os.path.basename(base))


def write_corpus(recordings: Sequence[SceneRecording], directory: str) -> list:
    return [write_scene(rec, directory) for rec in recordings]


def read_corpus(directory: str) -> list:
    """All canonical scenes under a directory, sorted by sequence id."""
    if not os.path.isdir(directory):
        raise ConfigError(f"not a directory: {directory!r}")
    paths = sorted(
        os.path.join(directory, n) for n in os.listdir(directory) if n.endswith(".trj")
    )
    return [read_scene(p) for p in paths]


def _read_homography(path: str) -> np.ndarray:
    values = []
    for lineno, line in _numbered_lines(path):
        for tok in line.split():
            try:
                values.append(float(tok))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad matrix entry {tok!r}") from None
    if len(values) != 9:
        raise ParseError(f"{path}: expected 9 entries, got {len(values)}")
    h_mat = np.array(values).reshape(3, 3)
    if abs(np.linalg.det(h_mat)) < 1e-12:
        raise ParseError(f"{path}: homography is singular")
    return h_mat


def apply_homography(h_mat: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Map (n, 2) image points to ground coordinates and dehomogenize."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    ones = np.ones((len(pts), 1))
    mapped = np.hstack([pts, ones]) @ h_mat.T
    return mapped[:, :2] / mapped[:, 2:3]


def _parse_external_tracks(path: str, h_mat: np.ndarray, foot_point: str) -> tuple:
    """Image-coordinate track file -> fps and metric trajectories.

    Rows are `frame,track_id,u,v` for point annotations or
    `frame,track_id,x1,y1,x2,y2` for boxes, reduced per ``foot_point``.
    """
    fps, data = _parse_fps(path, path)
    per_track = {}
    for lineno, line in data:
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (4, 6):
            raise ParseError(
                f"{path}:{lineno}: expected `frame,track_id,u,v` or box with 4 coordinates"
            )
        try:
            frame = int(parts[0])
            nums = [float(p) for p in parts[2:]]
        except ValueError:
            raise ParseError(f"{path}:{lineno}: bad number in {line!r}") from None
        if len(nums) == 2:
            u, v = nums
        elif foot_point == "point":
            raise ParseError(f"{path}:{lineno}: box row but foot_point=point expects `u,v`")
        elif foot_point == "bottom-center":
            u, v = (nums[0] + nums[2]) / 2.0, max(nums[1], nums[3])
        else:  # box-center
            u, v = (nums[0] + nums[2]) / 2.0, (nums[1] + nums[3]) / 2.0
        per_track.setdefault(parts[1], []).append((lineno, frame, u, v))
    trajectories = []
    for tid, rows in per_track.items():
        rows.sort(key=lambda r: r[1])
        for (_, f0, _, _), (ln, f1, _, _) in zip(rows, rows[1:]):
            if f1 == f0:
                raise ParseError(f"{path}:{ln}: duplicate frame {f1} for track {tid!r}")
        ground = apply_homography(h_mat, np.array([[u, v] for _, _, u, v in rows]))
        trajectories.append(
            Trajectory(
                tid,
                (TimedPosition(f, float(p[0]), float(p[1]))
                 for (_, f, _, _), p in zip(rows, ground)),
                fps,
            )
        )
    return fps, trajectories


def adapt_external(root: str, layout: str, foot_point: str = "bottom-center") -> list:
    """Adapt an external corpus directory tree into canonical recordings.

    `ncad-like`/`behave-like`: one subdirectory per sequence holding
    `tracks.txt` (image coordinates, `# fps=` header), `H.hom`
    (image-to-ground homography, required), optional `pairs.txt` and
    `groups.txt` annotation files in the canonical column layouts.
    behave-like additionally drops `Fighting` ranges from `groups.txt`
    with a warning.  `canonical` reads `.trj` scenes directly.
    """
    if layout not in LAYOUTS:
        raise ConfigError(f"unknown layout {layout!r}, expected one of {LAYOUTS}")
    if foot_point not in FOOT_POINTS:
        raise ConfigError(f"unknown foot_point {foot_point!r}, expected one of {FOOT_POINTS}")
    if layout == "canonical":
        return read_corpus(root)
    if not os.path.isdir(root):
        raise ConfigError(f"not a directory: {root!r}")
    recordings = []
    for seq in sorted(os.listdir(root)):
        seq_dir = os.path.join(root, seq)
        tracks = os.path.join(seq_dir, "tracks.txt")
        if not os.path.isdir(seq_dir) or not os.path.exists(tracks):
            continue
        hom_path = os.path.join(seq_dir, "H.hom")
        if not os.path.exists(hom_path):
            raise ConfigError(f"{seq}: missing homography sidecar {hom_path}")
        h_mat = _read_homography(hom_path)
        fps, trajectories = _parse_external_tracks(tracks, h_mat, foot_point)
        pairs_path = os.path.join(seq_dir, "pairs.txt")
        pairs = (
            _parse_pair_annotations(pairs_path, pairs_path)
            if os.path.exists(pairs_path)
            else []
        )
        groups_path = os.path.join(seq_dir, "groups.txt")
        coll = []
        if os.path.exists(groups_path):
            skipped = []
            skip = ("Fighting",) if layout == "behave-like" else ()
            coll = _parse_collective_annotations(groups_path, groups_path, skip, skipped)
            if skipped:
                warnings.warn(
                    f"{seq}: dropped {len(skipped)} Fighting range(s)", stacklevel=2
                )
        recordings.append(SceneRecording(seq, fps, trajectories, pairs, coll))
    if not recordings:
        raise ConfigError(f"no sequences found under {root!r}")
    return recordings


def _union_coverage(intervals: list, start: int, end: int) -> int:
    """Frames of [start, end] covered by the union of inclusive ranges."""
    clipped = sorted(
        (max(s, start), min(e, end)) for s, e in intervals if s <= end and e >= start
    )
    covered = 0
    cur_s, cur_e = None, None
    for s, e in clipped:
        if cur_e is None or s > cur_e + 1:
            if cur_e is not None:
                covered += cur_e - cur_s + 1
            cur_s, cur_e = s, e
        else:
            cur_e = max(cur_e, e)
    if cur_e is not None:
        covered += cur_e - cur_s + 1
    return covered


def windows(
    rec: SceneRecording,
    window_len: int,
    step: int,
    mode: str,
    max_gap: int = DEFAULT_MAX_GAP,
) -> Iterator:
    """Labeled sliding windows over a recording.

    Yields (center_frame, participants, label).  A window is kept when
    its label covers the center frame and at least 75% of the window's
    frames; pairs mode additionally requires both tracks to cover the
    whole window.  Centers run from lo + T/2 - 1 in steps; windows never
    extend outside the recording's frame range.
    """
    if window_len < 2 or window_len & (window_len - 1):
        raise ValueError(f"window_len must be a power of two >= 2, got {window_len}")
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    if mode not in ("pairs", "group"):
        raise ValueError(f"mode must be 'pairs' or 'group', got {mode!r}")
    lo, hi = rec.frame_range
    half_back, half_fwd = window_len // 2 - 1, window_len // 2
    need = math.ceil(0.75 * window_len)
    tracks = {t.track_id: t for t in rec.trajectories}

    by_pair = {}
    for a in rec.pair_annotations:
        by_pair.setdefault((a.anchor_id, a.target_id), []).append(a)

    center = lo + half_back
    while center + half_fwd <= hi:
        start, end = center - half_back, center + half_fwd
        if mode == "pairs":
            for (aid, tid), anns in sorted(by_pair.items()):
                at_center = [a for a in anns if a.start <= center <= a.end]
                if not at_center:
                    continue
                label = at_center[0].label
                same = [(a.start, a.end) for a in anns if a.label is label]
                if _union_coverage(same, start, end) < need:
                    continue
                if not (
                    tracks[aid].covers(start, end, max_gap)
                    and tracks[tid].covers(start, end, max_gap)
                ):
                    continue
                yield center, (aid, tid), label
        else:
            at_center = [
                a for a in rec.collective_annotations if a.start <= center <= a.end
            ]
            if at_center:
                label = at_center[0].label
                same = [
                    (a.start, a.end)
                    for a in rec.collective_annotations
                    if a.label is label
                ]
                if _union_coverage(same, start, end) >= need:
                    present = tuple(
                        sorted(
                            t.track_id
                            for t in rec.trajectories
                            if t.first_frame <= end and t.last_frame >= start
                        )
                    )
                    if present:
                        yield center, present, label
        center += step
