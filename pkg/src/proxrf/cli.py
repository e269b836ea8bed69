"""Command-line front end: synth, adapt, extract, train, eval, cross, predict.

Every command exits 0 on success; failures print one machine-parsable
line ``ERROR <CODE>: <detail>`` to stderr, where CODE is the error class
name, and exit with a class-specific code: configuration problems 2,
model/shape problems 3, data-format problems 4, label-coverage problems
5, anything else domain-specific 6.  Outputs are written atomically and
are byte-stable for a fixed seed.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .cbd import CollectiveLabel
from .config import RunConfig, load_run_config
from .dataset import (
    LAYOUTS,
    FOOT_POINTS,
    FoldSplit,
    _atomic_write,
    adapt_external,
    read_corpus,
    write_corpus,
)
from .errors import (
    AnnotationConflict,
    ConfigError,
    CorruptModel,
    InvalidConfig,
    InvalidParams,
    LabelCoverageError,
    ModelShapeMismatch,
    ParseError,
    ProxrfError,
    ReferentialError,
    ShapeMismatch,
)
from .evaluate import (
    EvalReport,
    PipelineConfig,
    _collective_matrix,
    _fold_seeds,
    _SceneData,
    _train_stage1,
    cross_dataset,
    kfold_evaluate,
)
from .forest import LabeledSample, RandomForest, deserialize, serialize, train
from .synth import (
    SynthParams,
    make_collective_corpus,
    make_contrast_corpus,
    make_pair_corpus,
)

_EXIT_CODES = (
    ((ModelShapeMismatch, ShapeMismatch, CorruptModel), 3),
    ((ParseError, AnnotationConflict, ReferentialError), 4),
    ((LabelCoverageError,), 5),
    ((ConfigError, InvalidConfig, InvalidParams), 2),
)


def _exit_code(exc: ProxrfError) -> int:
    for classes, code in _EXIT_CODES:
        if isinstance(exc, classes):
            return code
    return 6


def _fmt(x: float) -> str:
    return repr(float(x))


def _makedirs_for(path: str):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _read_model(path: str) -> RandomForest:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read model {path}: {exc}") from None
    return deserialize(blob)


def _write_model(model: RandomForest, path: str):
    _makedirs_for(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(serialize(model))
    os.replace(tmp, path)


def _write_report(report: EvalReport, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    _atomic_write(os.path.join(out_dir, "report.json"), report.to_json() + "\n")
    _atomic_write(os.path.join(out_dir, "confusion.txt"), report.confusion.text() + "\n")
    _atomic_write(os.path.join(out_dir, "per_class.csv"), report.per_class_csv())
    return out_dir


def _check_stage1_shape(model: RandomForest, cfg: PipelineConfig):
    want = cfg.pid.descriptor_length
    if model.feature_count != want:
        raise ModelShapeMismatch(
            f"interaction model expects {model.feature_count} features, "
            f"but the configured descriptor has {want}"
        )


def _check_stage2_shape(model: RandomForest, cfg: PipelineConfig):
    want = 9 if cfg.include_shape else 8
    if model.feature_count != want:
        raise ModelShapeMismatch(
            f"collective model expects {model.feature_count} features, "
            f"but the configured descriptor has {want}"
        )


def _cbd_columns(cfg: PipelineConfig) -> list:
    return list(range(9 if cfg.include_shape else 8))


# ---------------------------------------------------------------- commands


def _cmd_synth(args, run: RunConfig) -> int:
    params = SynthParams(
        fps=args.fps,
        duration_frames=args.duration_frames,
        walk_speed=args.walk_speed,
        noise_sigma=args.noise_sigma,
        group_size=args.group_size,
        seed=run.seed,
    )
    scenes = []
    if args.set in ("pairs", "all"):
        scenes += make_pair_corpus(params, args.scenes_per_class)
    if args.set in ("collective", "all"):
        scenes += make_collective_corpus(params, args.scenes_per_class)
    if args.set == "contrast":
        scenes += make_contrast_corpus(
            params, args.scenes_per_class, args.pair_scenes_per_class
        )
    write_corpus(scenes, args.out)
    print(f"wrote {len(scenes)} scenes to {args.out}")
    return 0


def _cmd_adapt(args, run: RunConfig) -> int:
    scenes = adapt_external(args.root, args.layout, foot_point=args.foot_point)
    write_corpus(scenes, args.out)
    print(f"adapted {len(scenes)} sequences to {args.out}")
    return 0


def _cmd_extract(args, run: RunConfig) -> int:
    cfg = run.pipeline()
    recordings = read_corpus(args.corpus)
    lines = []
    if args.kind == "pid":
        d = cfg.pid.descriptor_length
        lines.append(f"# pid d={d} t1={cfg.pid.t1} l_max={cfg.pid.l_max} step={cfg.step}")
        lines.append("# sequence,center_frame,anchor,target,label,values...")
        for rec in recordings:
            sd = _SceneData(rec, cfg)
            for center, (aid, tid), label in sd.pair_windows():
                vec = sd.pair_vector(aid, tid, center)
                lines.append(
                    f"{rec.sequence_id},{center},{aid},{tid},{label.code},"
                    + ",".join(_fmt(v) for v in vec)
                )
    else:
        if args.model is None:
            raise ConfigError("extract --kind cbd needs --model (first-stage forest)")
        stage1 = _read_model(args.model)
        _check_stage1_shape(stage1, cfg)
        cols = _cbd_columns(cfg)
        lines.append(
            f"# cbd d={len(cols)} t2={cfg.t2} step={cfg.step} stride={cfg.stride}"
            f" include_shape={str(cfg.include_shape).lower()}"
        )
        lines.append("# sequence,center_frame,members,label,values...")
        for rec in recordings:
            sd = _SceneData(rec, cfg)
            for center, ids, label in sd.group_windows():
                vec = sd.cbd_full_vector(center, ids, stage1, 0)
                if vec is None:
                    continue
                lines.append(
                    f"{rec.sequence_id},{center},{'|'.join(ids)},{label.code},"
                    + ",".join(_fmt(v) for v in vec[cols])
                )
    _makedirs_for(args.out)
    _atomic_write(args.out, "\n".join(lines) + "\n")
    print(f"wrote {len(lines) - 2} descriptors to {args.out}")
    return 0


def _stage1_out_path(out: str) -> str:
    base, ext = os.path.splitext(out)
    return base + ".stage1" + (ext or ".json")


def _cmd_train(args, run: RunConfig) -> int:
    cfg = run.pipeline()
    recordings = read_corpus(args.corpus)
    scene_data = {rec.sequence_id: _SceneData(rec, cfg) for rec in recordings}
    seq_ids = sorted(scene_data)
    s1_seed, s2_seed = _fold_seeds(cfg.seed, 0)
    if args.task == "interactions":
        model = _train_stage1(scene_data, seq_ids, cfg, s1_seed)
        _write_model(model, args.out)
        print(f"wrote interaction model ({model.feature_count} features) to {args.out}")
        return 0
    if args.stage1 is not None:
        stage1 = _read_model(args.stage1)
        _check_stage1_shape(stage1, cfg)
    else:
        stage1 = _train_stage1(scene_data, seq_ids, cfg, s1_seed)
        side = _stage1_out_path(args.out)
        _write_model(stage1, side)
        print(f"wrote interaction model to {side}")
    cols = _cbd_columns(cfg)
    vecs, labels = _collective_matrix(scene_data, seq_ids, stage1, cfg, cols, 0)
    if not vecs:
        raise ConfigError("corpus has no usable collective windows")
    model = train(
        [LabeledSample(v, l.class_id) for v, l in zip(vecs, labels)],
        replace(cfg.stage2_forest, seed=s2_seed),
        class_names=tuple(l.code for l in CollectiveLabel),
        threads=cfg.threads,
    )
    _write_model(model, args.out)
    print(f"wrote collective model ({model.feature_count} features) to {args.out}")
    return 0


def _cmd_eval(args, run: RunConfig) -> int:
    cfg = run.pipeline()
    recordings = read_corpus(args.corpus)
    if args.folds_file is not None:
        folds = FoldSplit.from_file(args.folds_file, args.folds)
    else:
        warnings.warn("no --folds-file given; falling back to a round-robin split")
        folds = FoldSplit.round_robin([r.sequence_id for r in recordings], args.folds)
    report = kfold_evaluate(recordings, folds, cfg, task=args.task)
    _write_report(report, args.out_dir)
    print(f"mpca {report.mpca:.4f} std {report.std:.4f}; report in {args.out_dir}")
    return 0


def _cmd_cross(args, run: RunConfig) -> int:
    cfg = run.pipeline()
    train_recs = read_corpus(args.train_corpus)
    test_recs = read_corpus(args.test_corpus)
    report = cross_dataset(
        train_recs,
        test_recs,
        cfg,
        drop_labels=run.drop_labels,
        include_shape=cfg.include_shape,
    )
    _write_report(report, args.out_dir)
    print(f"mpca {report.mpca:.4f} std {report.std:.4f}; report in {args.out_dir}")
    return 0


def _prob_row(model: RandomForest, vec: np.ndarray) -> tuple:
    fractions = model.vote_fractions(vec[None, :])[0]
    pred = int(np.argmax(fractions))
    return model.class_names[pred], fractions


def _cmd_predict(args, run: RunConfig) -> int:
    cfg = run.pipeline()
    recordings = read_corpus(args.corpus)
    stage1 = _read_model(args.interactions_model)
    _check_stage1_shape(stage1, cfg)
    stage2 = None
    if args.collective_model is not None:
        stage2 = _read_model(args.collective_model)
        _check_stage2_shape(stage2, cfg)
    cols = _cbd_columns(cfg)
    lines = [
        "# sequence,center_frame,kind,ids,label,probabilities"
        " (pair rows over interaction classes, group rows over collective classes)"
    ]
    n_pairs = n_groups = 0
    for rec in recordings:
        sd = _SceneData(rec, cfg)
        for center, (aid, tid), _label in sd.pair_windows():
            vec = sd.pair_vector(aid, tid, center)
            name, probs = _prob_row(stage1, vec)
            lines.append(
                f"{rec.sequence_id},{center},pair,{aid}|{tid},{name},"
                + ",".join(_fmt(p) for p in probs)
            )
            n_pairs += 1
        if stage2 is None:
            continue
        for center, ids, _label in sd.group_windows():
            vec = sd.cbd_full_vector(center, ids, stage1, 0)
            if vec is None:
                continue
            name, probs = _prob_row(stage2, vec[cols])
            lines.append(
                f"{rec.sequence_id},{center},group,{'|'.join(ids)},{name},"
                + ",".join(_fmt(p) for p in probs)
            )
            n_groups += 1
    _makedirs_for(args.out)
    _atomic_write(args.out, "\n".join(lines) + "\n")
    print(f"wrote {n_pairs} pair and {n_groups} group predictions to {args.out}")
    return 0


# ----------------------------------------------------------------- parser


def _add_config_flags(sub: argparse.ArgumentParser):
    g = sub.add_argument_group("configuration (flags > file > defaults)")
    g.add_argument("--config", metavar="FILE", help="key = value config file")
    g.add_argument("--seed", type=int, help="run seed (default 0)")
    g.add_argument("--threads", type=int, help="worker threads (or PROXRF_THREADS)")
    g.add_argument("--t1", type=int, help="pairwise window length (default 64)")
    g.add_argument("--t2", type=int, help="group window length (default 64)")
    g.add_argument("--step", type=int, help="window grid step (default 5)")
    g.add_argument("--stride", type=int, help="pair-descriptor stride inside group windows")
    g.add_argument("--max-gap", type=int, help="largest interpolable track gap")
    g.add_argument("--alpha", type=float, help="smoothing factor")
    g.add_argument("--speed-threshold", type=float, help="orientation speed threshold (m/s)")
    g.add_argument("--sigma-rho", type=float, help="radial kernel width")
    g.add_argument("--sigma-theta", type=float, help="angular kernel width")
    g.add_argument("--k-s", type=float, help="kernel sampling extent")
    g.add_argument("--l-max", type=int, help="speed pyramid depth")
    g.add_argument("--grid-samples", type=int, help="kernel grid samples per axis")
    g.add_argument("--assignment", choices=("kde", "hard"), help="histogram assignment")
    g.add_argument(
        "--variance-denominator",
        dest="variance_denominator",
        action="store_const",
        const=True,
        default=None,
        help="use 2*sigma^2 kernel denominators",
    )
    g.add_argument(
        "--include-shape",
        dest="include_shape",
        choices=("true", "false"),
        help="append the shape cue to CBD vectors (default true)",
    )
    g.add_argument("--drop-labels", help="comma-separated collective labels to drop")
    g.add_argument("--interaction-trees", type=int, help="first-stage forest size")
    g.add_argument("--collective-trees", type=int, help="second-stage forest size")
    g.add_argument("--interaction-max-depth", type=int, help="first-stage depth cap")
    g.add_argument("--collective-max-depth", type=int, help="second-stage depth cap")
    g.add_argument("--interaction-min-samples-split", type=int)
    g.add_argument("--collective-min-samples-split", type=int)
    g.add_argument("--interaction-features-per-split", type=int)
    g.add_argument("--collective-features-per-split", type=int)


def _env_threads() -> Optional[int]:
    raw = os.environ.get("PROXRF_THREADS")
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise InvalidConfig(f"PROXRF_THREADS must be an integer, got {raw!r}") from None


def _overrides_from_args(args) -> dict:
    threads = args.threads if args.threads is not None else _env_threads()
    include_shape = None
    if args.include_shape is not None:
        include_shape = args.include_shape == "true"
    drop = None
    if args.drop_labels is not None:
        drop = [s.strip() for s in args.drop_labels.split(",") if s.strip()]
    raw = {
        "seed": args.seed,
        "threads": threads,
        "t1": args.t1,
        "t2": args.t2,
        "step": args.step,
        "stride": args.stride,
        "max_gap": args.max_gap,
        "alpha": args.alpha,
        "speed_threshold": args.speed_threshold,
        "sigma_rho": args.sigma_rho,
        "sigma_theta": args.sigma_theta,
        "k_s": args.k_s,
        "l_max": args.l_max,
        "grid_samples": args.grid_samples,
        "assignment": args.assignment,
        "variance_denominator": args.variance_denominator,
        "include_shape": include_shape,
        "drop_labels": drop,
        "interaction_trees": args.interaction_trees,
        "collective_trees": args.collective_trees,
        "interaction_max_depth": args.interaction_max_depth,
        "collective_max_depth": args.collective_max_depth,
        "interaction_min_samples_split": args.interaction_min_samples_split,
        "collective_min_samples_split": args.collective_min_samples_split,
        "interaction_features_per_split": args.interaction_features_per_split,
        "collective_features_per_split": args.collective_features_per_split,
    }
    # absent flags must not shadow config-file values (None is an explicit
    # setting for the optional-depth keys in build_run_config)
    return {k: v for k, v in raw.items() if v is not None}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxrf",
        description="Two-stage pedestrian behavior recognition from ground-plane trajectories.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sp = subs.add_parser("synth", help="generate a seeded synthetic corpus")
    sp.add_argument("--out", required=True, help="output corpus directory")
    sp.add_argument(
        "--set",
        choices=("pairs", "collective", "contrast", "all"),
        default="all",
        help="which scene families to generate",
    )
    sp.add_argument("--scenes-per-class", type=int, default=5)
    sp.add_argument("--pair-scenes-per-class", type=int, default=3,
                    help="pair scenes bundled into the contrast set")
    sp.add_argument("--fps", type=float, default=10.0)
    sp.add_argument("--duration-frames", type=int, default=112)
    sp.add_argument("--walk-speed", type=float, default=1.2)
    sp.add_argument("--noise-sigma", type=float, default=0.0)
    sp.add_argument("--group-size", type=int, default=4)
    _add_config_flags(sp)
    sp.set_defaults(func=_cmd_synth)

    sp = subs.add_parser("adapt", help="canonicalize an external corpus layout")
    sp.add_argument("root", help="external corpus root directory")
    sp.add_argument("--layout", required=True, choices=LAYOUTS)
    sp.add_argument("--out", required=True, help="output corpus directory")
    sp.add_argument("--foot-point", choices=FOOT_POINTS, default="bottom-center")
    _add_config_flags(sp)
    sp.set_defaults(func=_cmd_adapt)

    sp = subs.add_parser("extract", help="dump descriptor vectors for a corpus")
    sp.add_argument("corpus", help="canonical corpus directory")
    sp.add_argument("--kind", required=True, choices=("pid", "cbd"))
    sp.add_argument("--model", help="first-stage model (required for cbd)")
    sp.add_argument("--out", required=True, help="output text file")
    _add_config_flags(sp)
    sp.set_defaults(func=_cmd_extract)

    sp = subs.add_parser("train", help="train and serialize forest models")
    sp.add_argument("task", choices=("interactions", "collective"))
    sp.add_argument("corpus", help="canonical corpus directory")
    sp.add_argument("--out", required=True, help="output model file")
    sp.add_argument("--stage1", help="existing first-stage model (collective only)")
    _add_config_flags(sp)
    sp.set_defaults(func=_cmd_train)

    sp = subs.add_parser("eval", help="k-fold cross-validated evaluation")
    sp.add_argument("corpus", help="canonical corpus directory")
    sp.add_argument("--task", choices=("interaction", "collective"), default="collective")
    sp.add_argument("--folds", type=int, default=3, help="fold count (round-robin split)")
    sp.add_argument("--folds-file", help="explicit `sequence_id,fold` assignment file")
    sp.add_argument("--out-dir", required=True, help="report output directory")
    _add_config_flags(sp)
    sp.set_defaults(func=_cmd_eval)

    sp = subs.add_parser("cross", help="train on one corpus, test on another")
    sp.add_argument("train_corpus", help="training corpus directory")
    sp.add_argument("test_corpus", help="test corpus directory")
    sp.add_argument("--out-dir", required=True, help="report output directory")
    _add_config_flags(sp)
    sp.set_defaults(func=_cmd_cross)

    sp = subs.add_parser("predict", help="per-window predictions as CSV")
    sp.add_argument("corpus", help="canonical corpus directory")
    sp.add_argument("--interactions-model", required=True)
    sp.add_argument("--collective-model")
    sp.add_argument("--out", required=True, help="output CSV file")
    _add_config_flags(sp)
    sp.set_defaults(func=_cmd_predict)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        run = load_run_config(args.config, _overrides_from_args(args))
        return args.func(args, run)
    except ProxrfError as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except OSError as exc:
        print(f"ERROR OSError: {exc}", file=sys.stderr)
        return 6


if __name__ == "__main__":
    sys.exit(main())
