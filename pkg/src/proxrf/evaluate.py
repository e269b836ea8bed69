"""Cross-validation, metrics and ablation for the two-stage pipeline.

Descriptor extraction is shared across folds (descriptors do not depend
on the fold), while first- and second-stage forests are retrained per
fold with seeds derived from (seed, fold).  Reports carry the pooled
confusion matrix, per-class accuracies, their mean (MPCA) and their
population standard deviation, plus the per-fold breakdown.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .cbd import CollectiveLabel, GroupWindow, compute_cbd
from .dataset import FoldSplit, SceneRecording, windows
from .errors import (
    ConfigError,
    EmptyGroup,
    EmptyTrainingSet,
    InvalidConfig,
    LabelCoverageError,
)
from .forest import ForestConfig, LabeledSample, RandomForest, train
from .pid import InteractionLabel, PidConfig, _pid_from_states
from .trajectory import DEFAULT_MAX_GAP, SmoothingConfig, smoothed_states

CUE_NAMES = ("interaction_hist", "mean_speed", "dispersion_change", "shape_ratio")

_INTERACTION_CODES = tuple(l.code for l in InteractionLabel)
_COLLECTIVE_CODES = tuple(l.code for l in CollectiveLabel)


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the two-stage pipeline needs besides the data.

    ``forest`` configures the first-stage forest; ``forest2`` the
    second-stage one, defaulting to ``forest`` when None.  Seeds inside
    them are ignored by the evaluation drivers, which derive per-fold,
    per-stage seeds from ``seed``.
    """

    pid: PidConfig = field(default_factory=PidConfig)
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    forest2: Optional[ForestConfig] = None
    t2: int = 64
    step: int = 5
    stride: int = 5
    include_shape: bool = True
    max_gap: int = DEFAULT_MAX_GAP
    seed: int = 0
    threads: int = 1

    @property
    def stage2_forest(self) -> ForestConfig:
        return self.forest2 if self.forest2 is not None else self.forest


class ConfusionMatrix:
    """Integer confusion counts; rows are truth, columns are prediction."""

    def __init__(self, class_names: Sequence[str], counts=None):
        self.class_names = tuple(str(c) for c in class_names)
        k = len(self.class_names)
        if len(set(self.class_names)) != k or k == 0:
            raise ValueError("class names must be unique and non-empty")
        if counts is None:
            self.counts = np.zeros((k, k), dtype=np.int64)
        else:
            self.counts = np.asarray(counts, dtype=np.int64).copy()
            if self.counts.shape != (k, k) or np.any(self.counts < 0):
                raise ValueError(f"counts must be a non-negative {k}x{k} matrix")

    def add(self, truth: int, pred: int, n: int = 1):
        self.counts[truth, pred] += n

    def merge(self, other: "ConfusionMatrix"):
        if other.class_names != self.class_names:
            raise ValueError("cannot merge confusion matrices over different classes")
        self.counts += other.counts

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def per_class_accuracy(self) -> tuple:
        """(accuracies, class names) over classes with non-zero support."""
        sup = self.support
        keep = sup > 0
        acc = np.diag(self.counts)[keep] / sup[keep]
        names = tuple(np.array(self.class_names)[keep])
        return acc, names

    def text(self) -> str:
        """Plain fixed-width table, truth in rows."""
        width = max(5, max(len(c) for c in self.class_names) + 1)
        head = " " * width + "".join(f"{c:>{width}}" for c in self.class_names)
        lines = [head]
        for name, row in zip(self.class_names, self.counts):
            lines.append(f"{name:<{width}}" + "".join(f"{v:>{width}}" for v in row))
        return "\n".join(lines)


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Pooled metrics plus per-fold confusion matrices.

    ``class_names`` and ``per_class_accuracy`` cover only classes that
    had test windows; ``mpca`` is exactly their mean and ``std`` their
    population standard deviation (divide by K, not K-1).
    """

    class_names: tuple
    per_class_accuracy: np.ndarray
    mpca: float
    std: float
    confusion: ConfusionMatrix
    folds: tuple

    def to_json(self) -> str:
        doc = {
            "mpca": self.mpca,
            "std": self.std,
            "per_class_accuracy": {
                c: float(a) for c, a in zip(self.class_names, self.per_class_accuracy)
            },
            "confusion": {
                "classes": list(self.confusion.class_names),
                "counts": self.confusion.counts.tolist(),
            },
            "folds": [
                {"fold": f, "counts": cm.counts.tolist()} for f, cm in self.folds
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def per_class_csv(self) -> str:
        lines = ["class,accuracy"]
        lines += [f"{c},{float(a)!r}" for c, a in zip(self.class_names, self.per_class_accuracy)]
        return "\n".join(lines) + "\n"


def report_from_confusion(confusion: ConfusionMatrix, folds: Iterable = ()) -> EvalReport:
    acc, names = confusion.per_class_accuracy()
    if len(names) < len(confusion.class_names):
        missing = sorted(set(confusion.class_names) - set(names))
        warnings.warn(f"no test windows for {missing}; excluded from MPCA", stacklevel=2)
    if len(acc) == 0:
        raise InvalidConfig("evaluation produced no test windows at all")
    return EvalReport(
        class_names=names,
        per_class_accuracy=acc,
        mpca=float(acc.mean()),
        std=float(acc.std()),
        confusion=confusion,
        folds=tuple(folds),
    )


def evaluate_predictions(truths, preds, class_names: Sequence[str]) -> EvalReport:
    """Report from already-made class-id predictions (no folds)."""
    cm = ConfusionMatrix(class_names)
    for t, p in zip(truths, preds):
        cm.add(int(t), int(p))
    return report_from_confusion(cm)


class _SceneData:
    """Per-recording extraction state shared across folds and cue sets."""

    def __init__(self, rec: SceneRecording, cfg: PipelineConfig):
        self.rec = rec
        self.cfg = cfg
        self.states = {
            t.track_id: smoothed_states(t, cfg.smoothing, max_gap=cfg.max_gap)
            for t in rec.trajectories
        }
        self.pid_cache = {}
        self._pair_windows = None
        self._group_windows = None
        self._group_objs = {}
        self._cbd_full = {}

    def pair_windows(self) -> list:
        if self._pair_windows is None:
            self._pair_windows = list(
                windows(self.rec, self.cfg.pid.t1, self.cfg.step, "pairs", self.cfg.max_gap)
            )
        return self._pair_windows

    def group_windows(self) -> list:
        if self._group_windows is None:
            self._group_windows = list(
                windows(self.rec, self.cfg.t2, self.cfg.step, "group", self.cfg.max_gap)
            )
        return self._group_windows

    def pair_vector(self, anchor_id, target_id, center) -> np.ndarray:
        key = (anchor_id, target_id, center)
        vec = self.pid_cache.get(key)
        if vec is None:
            vec = _pid_from_states(
                self.states[anchor_id],
                self.states[target_id],
                anchor_id,
                target_id,
                center,
                self.cfg.pid,
                self.rec.fps,
                self.cfg.seed,
            ).vector()
            self.pid_cache[key] = vec
        return vec

    def group_obj(self, center, member_ids) -> Optional[GroupWindow]:
        """GroupWindow for the placement, or None when a frame is empty."""
        key = (center, member_ids)
        obj = self._group_objs.get(key, False)
        if obj is False:
            try:
                obj = GroupWindow.build(
                    [self.rec.track(i) for i in member_ids],
                    center,
                    self.cfg.t2,
                    self.cfg.smoothing,
                    max_gap=self.cfg.max_gap,
                    states=self.states,
                )
            except EmptyGroup:
                obj = None
            self._group_objs[key] = obj
        return obj

    def cbd_full_vector(
        self, center, member_ids, stage1: RandomForest, token
    ) -> Optional[np.ndarray]:
        """Full 9-cue CBD under a given first-stage model, memoized.

        ``token`` must change whenever ``stage1`` does (the fold index);
        reusing one avoids recomputing descriptors per cue set.
        """
        key = (token, center, member_ids)
        vec = self._cbd_full.get(key, False)
        if vec is False:
            window = self.group_obj(center, member_ids)
            if window is None:
                vec = None
            else:
                desc = compute_cbd(
                    window,
                    stage1,
                    self.cfg.pid,
                    stride=self.cfg.stride,
                    include_shape=True,
                    seed=self.cfg.seed,
                    cache=self.pid_cache,
                )
                vec = desc.vector()
            self._cbd_full[key] = vec
        return vec


def _fold_seeds(seed: int, fold: int) -> tuple:
    ss = np.random.SeedSequence([seed & 0xFFFFFFFF, 101, fold])
    a, b = ss.generate_state(2)
    return int(a), int(b)


def _train_stage1(scene_data: dict, seq_ids: Sequence[str], cfg: PipelineConfig, seed: int) -> RandomForest:
    samples = []
    for seq in seq_ids:
        sd = scene_data[seq]
        for center, (aid, tid), label in sd.pair_windows():
            samples.append(LabeledSample(sd.pair_vector(aid, tid, center), label.class_id))
    if not samples:
        raise EmptyTrainingSet("no pairwise training windows in the training folds")
    fcfg = replace(cfg.forest, seed=seed)
    return train(samples, fcfg, class_names=_INTERACTION_CODES, threads=cfg.threads)


def _cue_columns(cue_set: Sequence[str]) -> list:
    cols = []
    for cue in CUE_NAMES:
        if cue in cue_set:
            if cue == "interaction_hist":
                cols.extend(range(6))
            else:
                cols.append(6 + CUE_NAMES.index(cue) - 1)
    return cols


def _collective_matrix(scene_data, seq_ids, stage1, cfg, cols, token) -> tuple:
    """Sliced CBD matrix and labels; group-less placements are skipped."""
    vecs, labels = [], []
    for seq in seq_ids:
        sd = scene_data[seq]
        for center, ids, label in sd.group_windows():
            full = sd.cbd_full_vector(center, ids, stage1, token)
            if full is None:
                continue
            vecs.append(full[cols])
            labels.append(label)
    return vecs, labels


def _check_folds(recordings, folds: FoldSplit):
    if folds.n_folds < 2:
        raise ConfigError(f"need >= 2 folds, got {folds.n_folds}")
    for rec in recordings:
        if rec.sequence_id not in folds.assignments:
            raise ConfigError(f"sequence {rec.sequence_id!r} has no fold assignment")
    ids = [rec.sequence_id for rec in recordings]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate sequence ids in the evaluation corpus")


def kfold_evaluate(
    recordings: Sequence[SceneRecording],
    folds: FoldSplit,
    cfg: PipelineConfig,
    task: str = "collective",
) -> EvalReport:
    """Cross-validated evaluation of the pipeline.

    task "interaction" scores the first stage on pairwise windows; task
    "collective" trains both stages per fold (the second stage sees CBDs
    built with that fold's first-stage model) and scores the second.
    """
    if task not in ("interaction", "collective"):
        raise ConfigError(f"task must be 'interaction' or 'collective', got {task!r}")
    _check_folds(recordings, folds)
    scene_data = {rec.sequence_id: _SceneData(rec, cfg) for rec in recordings}
    class_names = _INTERACTION_CODES if task == "interaction" else _COLLECTIVE_CODES
    cols = _cue_columns(CUE_NAMES if cfg.include_shape else CUE_NAMES[:3])
    total = ConfusionMatrix(class_names)
    fold_parts = []
    for fold in range(folds.n_folds):
        train_ids = sorted(s for s in scene_data if folds.fold_of(s) != fold)
        test_ids = sorted(s for s in scene_data if folds.fold_of(s) == fold)
        s1_seed, s2_seed = _fold_seeds(cfg.seed, fold)
        stage1 = _train_stage1(scene_data, train_ids, cfg, s1_seed)
        part = ConfusionMatrix(class_names)
        if task == "interaction":
            vecs, labels = [], []
            for seq in test_ids:
                sd = scene_data[seq]
                for center, (aid, tid), label in sd.pair_windows():
                    vecs.append(sd.pair_vector(aid, tid, center))
                    labels.append(label)
            if vecs:
                preds = stage1.predict_batch(np.array(vecs))
                for lab, pred in zip(labels, preds):
                    part.add(lab.class_id, int(pred))
        else:
            tr_vecs, tr_labels = _collective_matrix(
                scene_data, train_ids, stage1, cfg, cols, fold
            )
            if not tr_vecs:
                raise EmptyTrainingSet("no group training windows in the training folds")
            stage2 = train(
                [LabeledSample(v, l.class_id) for v, l in zip(tr_vecs, tr_labels)],
                replace(cfg.stage2_forest, seed=s2_seed),
                class_names=_COLLECTIVE_CODES,
                threads=cfg.threads,
            )
            te_vecs, te_labels = _collective_matrix(
                scene_data, test_ids, stage1, cfg, cols, fold
            )
            if te_vecs:
                preds = stage2.predict_batch(np.array(te_vecs))
                for lab, pred in zip(te_labels, preds):
                    part.add(lab.class_id, int(pred))
        if part.total == 0:
            warnings.warn(f"fold {fold} produced no test windows", stacklevel=2)
        total.merge(part)
        fold_parts.append((fold, part))
    return report_from_confusion(total, fold_parts)


def ablation(
    recordings: Sequence[SceneRecording],
    folds: FoldSplit,
    cue_sets: Sequence[Sequence[str]],
    cfg: PipelineConfig,
) -> list:
    """One collective evaluation per cue set, sharing all extraction.

    Cue names: interaction_hist, mean_speed, dispersion_change,
    shape_ratio.  Returns [(cue tuple, EvalReport)] in input order; the
    full cue set yields exactly kfold_evaluate's report for the same
    seed because the fold seeds and descriptors are shared.
    """
    canon_sets = []
    for cue_set in cue_sets:
        cues = tuple(c for c in CUE_NAMES if c in set(cue_set))
        unknown = set(cue_set) - set(CUE_NAMES)
        if unknown:
            raise InvalidConfig(f"unknown cue names {sorted(unknown)}; valid: {CUE_NAMES}")
        if not cues:
            raise InvalidConfig("empty cue set")
        canon_sets.append(cues)
    _check_folds(recordings, folds)
    scene_data = {rec.sequence_id: _SceneData(rec, cfg) for rec in recordings}
    totals = [ConfusionMatrix(_COLLECTIVE_CODES) for _ in canon_sets]
    fold_parts = [[] for _ in canon_sets]
    for fold in range(folds.n_folds):
        train_ids = sorted(s for s in scene_data if folds.fold_of(s) != fold)
        test_ids = sorted(s for s in scene_data if folds.fold_of(s) == fold)
        s1_seed, s2_seed = _fold_seeds(cfg.seed, fold)
        stage1 = _train_stage1(scene_data, train_ids, cfg, s1_seed)
        tr_vecs, tr_labels = _collective_matrix(
            scene_data, train_ids, stage1, cfg, list(range(9)), fold
        )
        if not tr_vecs:
            raise EmptyTrainingSet("no group training windows in the training folds")
        te_vecs, te_labels = _collective_matrix(
            scene_data, test_ids, stage1, cfg, list(range(9)), fold
        )
        tr_mat, te_mat = np.array(tr_vecs), np.array(te_vecs)
        for i, cues in enumerate(canon_sets):
            cols = _cue_columns(cues)
            stage2 = train(
                [LabeledSample(v, l.class_id) for v, l in zip(tr_mat[:, cols], tr_labels)],
                replace(cfg.stage2_forest, seed=s2_seed),
                class_names=_COLLECTIVE_CODES,
                threads=cfg.threads,
            )
            part = ConfusionMatrix(_COLLECTIVE_CODES)
            if len(te_mat):
                preds = stage2.predict_batch(te_mat[:, cols])
                for lab, pred in zip(te_labels, preds):
                    part.add(lab.class_id, int(pred))
            totals[i].merge(part)
            fold_parts[i].append((fold, part))
    return [
        (cues, report_from_confusion(total, parts))
        for cues, total, parts in zip(canon_sets, totals, fold_parts)
    ]


def cross_dataset(
    train_recordings: Sequence[SceneRecording],
    test_recordings: Sequence[SceneRecording],
    cfg: PipelineConfig,
    drop_labels: Sequence[CollectiveLabel] = (),
    include_shape: Optional[bool] = None,
) -> EvalReport:
    """Train on one corpus, evaluate collective labels on another.

    Training sequences carrying any collective label in ``drop_labels``
    are discarded entirely; a test label that the remaining training
    corpus never exhibits raises LabelCoverageError.
    """
    drop = {CollectiveLabel(l) if not isinstance(l, CollectiveLabel) else l for l in drop_labels}
    if include_shape is None:
        include_shape = cfg.include_shape
    kept_train = [
        rec
        for rec in train_recordings
        if not any(a.label in drop for a in rec.collective_annotations)
    ]
    if not kept_train:
        raise EmptyTrainingSet("every training sequence was dropped")
    remaining = [l for l in CollectiveLabel if l not in drop]
    class_ids = {l: i for i, l in enumerate(remaining)}
    class_names = tuple(l.code for l in remaining)
    cols = _cue_columns(CUE_NAMES if include_shape else CUE_NAMES[:3])

    cfg_train = cfg
    train_data = {rec.sequence_id: _SceneData(rec, cfg_train) for rec in kept_train}
    s1_seed, s2_seed = _fold_seeds(cfg.seed, 202)
    stage1 = _train_stage1(train_data, sorted(train_data), cfg_train, s1_seed)
    tr_vecs, tr_labels = _collective_matrix(
        train_data, sorted(train_data), stage1, cfg_train, cols, 0
    )
    if not tr_vecs:
        raise EmptyTrainingSet("no group training windows after drops")
    seen = {l for l in tr_labels}
    stage2 = train(
        [LabeledSample(v, class_ids[l]) for v, l in zip(tr_vecs, tr_labels)],
        replace(cfg.stage2_forest, seed=s2_seed),
        class_names=class_names,
        threads=cfg.threads,
    )

    test_data = {rec.sequence_id: _SceneData(rec, cfg) for rec in test_recordings}
    te_vecs, te_labels = _collective_matrix(test_data, sorted(test_data), stage1, cfg, cols, 0)
    for lab in te_labels:
        if lab in drop or lab not in seen:
            raise LabelCoverageError(
                f"test label {lab.code} absent from the training corpus after drops"
            )
    cm = ConfusionMatrix(class_names)
    if te_vecs:
        preds = stage2.predict_batch(np.array(te_vecs))
        for lab, pred in zip(te_labels, preds):
            cm.add(class_ids[lab], int(pred))
    return report_from_confusion(cm)
