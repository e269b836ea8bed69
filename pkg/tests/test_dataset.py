"""Canonical scene IO, fold splits, adapters and window enumeration."""

import math
import os

import numpy as np
import pytest

from proxrf.cbd import CollectiveLabel
from proxrf.dataset import (
    CollectiveAnnotation,
    FoldSplit,
    PairAnnotation,
    SceneRecording,
    adapt_external,
    apply_homography,
    parse_canonical,
    read_corpus,
    read_scene,
    windows,
    write_corpus,
    write_scene,
)
from proxrf.errors import (
    AnnotationConflict,
    ConfigError,
    ParseError,
    ReferentialError,
)
from proxrf.pid import InteractionLabel

from conftest import make_traj, straight_traj

WT = InteractionLabel.WalkingTogether
SP = InteractionLabel.StandingPair
TALK = CollectiveLabel.Talking


def _pair_scene(n_frames=64, anns=((0, 63),), label=WT, seq="s0"):
    a = straight_traj("a", 1.2, 0.0, n_frames)
    b = straight_traj("b", 1.2, 0.0, n_frames, origin=(0.0, 1.0))
    pair_anns = [PairAnnotation(s, e, "a", "b", label) for s, e in anns]
    return SceneRecording(seq, 10.0, [a, b], pair_anns)


# ------------------------------------------------------------ recording type

def test_recording_canonicalizes_order():
    a = straight_traj("a", 1.0, 0.0, 10)
    b = straight_traj("b", 1.0, 0.0, 10)
    ann1 = PairAnnotation(0, 9, "a", "b", WT)
    ann2 = PairAnnotation(0, 9, "b", "a", WT)
    r1 = SceneRecording("s", 10.0, [a, b], [ann1, ann2])
    r2 = SceneRecording("s", 10.0, [b, a], [ann2, ann1])
    assert r1 == r2
    assert [t.track_id for t in r1.trajectories] == ["a", "b"]
    assert r1.frame_range == (0, 9)
    assert r1.track("b") is b
    with pytest.raises(KeyError):
        r1.track("zz")


def test_recording_validation():
    a = straight_traj("a", 1.0, 0.0, 10)
    with pytest.raises(ValueError):
        SceneRecording("s", 10.0, [a, straight_traj("a", 1.0, 0.0, 5)])
    with pytest.raises(ValueError):
        SceneRecording("s", 25.0, [a])  # track fps is 10
    with pytest.raises(ReferentialError):
        SceneRecording("s", 10.0, [a], [PairAnnotation(0, 5, "a", "ghost", WT)])


def test_annotation_conflicts():
    a = straight_traj("a", 1.0, 0.0, 40)
    b = straight_traj("b", 1.0, 0.0, 40)
    with pytest.raises(AnnotationConflict):
        SceneRecording("s", 10.0, [a, b],
                       [PairAnnotation(0, 20, "a", "b", WT),
                        PairAnnotation(15, 39, "a", "b", SP)])
    # same label overlapping, or different pairs, are fine
    SceneRecording("s", 10.0, [a, b],
                   [PairAnnotation(0, 20, "a", "b", WT),
                    PairAnnotation(15, 39, "a", "b", WT),
                    PairAnnotation(0, 39, "b", "a", SP)])
    with pytest.raises(AnnotationConflict):
        SceneRecording("s", 10.0, [a, b], [],
                       [CollectiveAnnotation(0, 20, TALK),
                        CollectiveAnnotation(20, 39, CollectiveLabel.Queuing)])
    SceneRecording("s", 10.0, [a, b], [],
                   [CollectiveAnnotation(0, 19, TALK),
                    CollectiveAnnotation(20, 39, CollectiveLabel.Queuing)])


def test_annotation_field_validation():
    with pytest.raises(ValueError):
        PairAnnotation(10, 9, "a", "b", WT)
    with pytest.raises(ValueError):
        PairAnnotation(0, 9, "a", "a", WT)
    with pytest.raises(ValueError):
        CollectiveAnnotation(5, 4, TALK)


# ------------------------------------------------------------------ file IO

def test_scene_round_trip(tmp_path):
    xy = np.array([[0.1, 1.0 / 3.0], [0.2, -1e-7], [12345.678901, 0.0]])
    t1 = make_traj("walker 1", xy)
    t2 = straight_traj("w2", 1.5, 0.7, 3)
    rec = SceneRecording(
        "seq01", 10.0, [t1, t2],
        [PairAnnotation(0, 2, "walker 1", "w2", WT)],
        [CollectiveAnnotation(0, 2, TALK)],
    )
    path = write_scene(rec, str(tmp_path))
    back = read_scene(path)
    assert back == rec
    assert not any(n.endswith(".tmp") for n in os.listdir(tmp_path))
    # rewriting produces identical bytes
    before = open(path, "rb").read()
    write_scene(back, str(tmp_path))
    assert open(path, "rb").read() == before


def test_annotation_files_only_when_nonempty(tmp_path):
    rec = SceneRecording("bare", 10.0, [straight_traj("a", 1.0, 0.0, 5)])
    write_scene(rec, str(tmp_path))
    assert (tmp_path / "bare.trj").exists()
    assert not (tmp_path / "bare.pia").exists()
    assert not (tmp_path / "bare.cba").exists()
    assert read_scene(str(tmp_path / "bare.trj")) == rec


def test_corpus_round_trip(tmp_path):
    recs = [_pair_scene(seq="s2"), _pair_scene(seq="s0"), _pair_scene(seq="s1")]
    write_corpus(recs, str(tmp_path))
    back = read_corpus(str(tmp_path))
    assert [r.sequence_id for r in back] == ["s0", "s1", "s2"]
    assert set(map(id, back)) != set(map(id, recs)) and sorted(
        r.sequence_id for r in recs) == [r.sequence_id for r in back]
    assert all(b == r for b, r in zip(back, sorted(recs, key=lambda r: r.sequence_id)))
    with pytest.raises(ConfigError):
        read_corpus(str(tmp_path / "missing"))
    with pytest.raises(ConfigError):
        read_scene(str(tmp_path / "s0.pia"))


def test_unrepresentable_track_id(tmp_path):
    rec = SceneRecording("s", 10.0, [straight_traj("a,b", 1.0, 0.0, 5)])
    with pytest.raises(ValueError):
        write_scene(rec, str(tmp_path))


def test_parse_errors():
    cases = [
        ["0,a,1.0,2.0"],                        # data before header
        ["# fps=abc", "0,a,1.0,2.0"],
        ["# fps=-5", "0,a,1.0,2.0"],
        ["# fps=10", "0,a,1.0"],                # arity
        ["# fps=10", "0,a,1.0,zz"],
        ["# fps=10", "0,,1.0,2.0"],             # empty id
        ["# fps=10", "0,a,1.0,2.0", "0,a,1.5,2.0"],  # duplicate frame
        ["# fps=10"],                            # no data
    ]
    for lines in cases:
        with pytest.raises(ParseError):
            parse_canonical(lines)
    good = ["# fps=10", "0,a,0.0,0.0", "1,a,0.1,0.0"]
    with pytest.raises(ParseError):
        parse_canonical(good, pair_stream=["0,1,a,b,XX"])
    with pytest.raises(ParseError):
        parse_canonical(good, pair_stream=["0,1,a,b"])
    with pytest.raises(ParseError):
        parse_canonical(good, collective_stream=["0,1,Skirmish"])
    with pytest.raises(ParseError):
        parse_canonical(good, collective_stream=["x,1,Talking"])


# --------------------------------------------------------------- fold splits

def test_round_robin_split():
    split = FoldSplit.round_robin(["d", "b", "a", "c", "e"], n_folds=3)
    assert split.assignments == {"a": 0, "b": 1, "c": 2, "d": 0, "e": 1}
    assert split.members(0) == ["a", "d"]
    assert split.fold_of("e") == 1


def test_fold_split_from_file(tmp_path):
    p = tmp_path / "folds.csv"
    p.write_text("# comment\ns0,0\ns1, 1\ns2,2\n")
    split = FoldSplit.from_file(str(p))
    assert split.assignments == {"s0": 0, "s1": 1, "s2": 2}
    p.write_text("s0,zero\n")
    with pytest.raises(ParseError):
        FoldSplit.from_file(str(p))
    p.write_text("s0,7\n")
    with pytest.raises(ParseError):
        FoldSplit.from_file(str(p))
    p.write_text("s0,0,extra\n")
    with pytest.raises(ParseError):
        FoldSplit.from_file(str(p))
    with pytest.raises(ValueError):
        FoldSplit({"s0": 3}, n_folds=3)


# --------------------------------------------------------------- homography

def test_apply_homography_matches_manual():
    rng = np.random.default_rng(7)
    for trial in range(3):
        h_mat = rng.normal(size=(3, 3)) + np.eye(3) * 2.0
        pts = rng.uniform(-50, 50, size=(40, 2))
        got = apply_homography(h_mat, pts)
        for p, g in zip(pts, got):
            v = h_mat @ np.array([p[0], p[1], 1.0])
            np.testing.assert_allclose(g, v[:2] / v[2], atol=1e-9)


def _write_ext_seq(root, name, tracks, hom="0.1 0 0\n0 0.1 0\n0 0 1\n",
                   pairs=None, groups=None):
    d = root / name
    d.mkdir(parents=True)
    (d / "tracks.txt").write_text(tracks)
    (d / "H.hom").write_text(hom)
    if pairs is not None:
        (d / "pairs.txt").write_text(pairs)
    if groups is not None:
        (d / "groups.txt").write_text(groups)


TRACKS = "# fps=25.0\n0,p1,100,200\n1,p1,110,200\n0,p2,300,400\n1,p2,310,400\n"


def test_adapt_ncad_like(tmp_path):
    _write_ext_seq(tmp_path, "seq1", TRACKS,
                   pairs="0,1,p1,p2,WT\n", groups="0,1,Talking\n")
    recs = adapt_external(str(tmp_path), "ncad-like")
    assert len(recs) == 1 and recs[0].sequence_id == "seq1"
    rec = recs[0]
    assert rec.fps == 25.0
    np.testing.assert_allclose(rec.track("p1").xy, [[10.0, 20.0], [11.0, 20.0]],
                               atol=1e-12)
    assert rec.pair_annotations[0].label is WT
    assert rec.collective_annotations[0].label is TALK


def test_adapt_box_foot_points(tmp_path):
    tracks = "# fps=10.0\n0,p1,10,20,30,60\n1,p1,12,20,32,60\n"
    _write_ext_seq(tmp_path, "seq1", tracks)
    bottom = adapt_external(str(tmp_path), "ncad-like", foot_point="bottom-center")
    np.testing.assert_allclose(bottom[0].track("p1").xy[0], [2.0, 6.0], atol=1e-12)
    center = adapt_external(str(tmp_path), "ncad-like", foot_point="box-center")
    np.testing.assert_allclose(center[0].track("p1").xy[0], [2.0, 4.0], atol=1e-12)
    with pytest.raises(ParseError):
        adapt_external(str(tmp_path), "ncad-like", foot_point="point")


def test_adapt_behave_drops_fighting(tmp_path):
    _write_ext_seq(tmp_path, "seqF", TRACKS,
                   groups="0,0,Fighting\n1,1,Talking\n")
    with pytest.warns(UserWarning, match="Fighting"):
        recs = adapt_external(str(tmp_path), "behave-like")
    assert [a.label for a in recs[0].collective_annotations] == [TALK]
    # ncad-like has no Fighting concept: the label is simply unknown
    with pytest.raises(ParseError):
        adapt_external(str(tmp_path), "ncad-like")


def test_adapt_external_errors(tmp_path):
    with pytest.raises(ConfigError):
        adapt_external(str(tmp_path), "weird-layout")
    with pytest.raises(ConfigError):
        adapt_external(str(tmp_path / "ncad"), "ncad-like")
    with pytest.raises(ConfigError):
        adapt_external(str(tmp_path), "ncad-like", foot_point="head")
    seq = tmp_path / "seq1"
    seq.mkdir()
    (seq / "tracks.txt").write_text(TRACKS)
    with pytest.raises(ConfigError):
        adapt_external(str(tmp_path), "ncad-like")  # homography missing
    (seq / "H.hom").write_text("0 0 0\n0 0 0\n0 0 0\n")
    with pytest.raises(ParseError):
        adapt_external(str(tmp_path), "ncad-like")  # singular
    (seq / "H.hom").write_text("1 0 0 0 1 0 0 0\n")
    with pytest.raises(ParseError):
        adapt_external(str(tmp_path), "ncad-like")  # 8 entries


def test_adapt_canonical_layout(tmp_path):
    rec = _pair_scene()
    write_scene(rec, str(tmp_path))
    assert adapt_external(str(tmp_path), "canonical") == [rec]


# ------------------------------------------------------------------ windows

def test_window_center_arithmetic():
    # 64 frames fit exactly one 64-frame window, centered right of middle
    rec = _pair_scene(n_frames=64)
    out = list(windows(rec, 64, 5, "pairs"))
    assert out == [(31, ("a", "b"), WT)]
    rec = _pair_scene(n_frames=128, anns=((0, 127),))
    centers = [c for c, _, _ in windows(rec, 64, 5, "pairs")]
    assert centers == list(range(31, 96, 5))
    assert len(centers) == 13


def test_window_label_coverage_boundary():
    # 75% of 64 frames is 48: an annotation covering exactly 48 frames of
    # the window passes, one frame fewer fails
    kept = _pair_scene(n_frames=64, anns=((16, 63),))
    assert len(list(windows(kept, 64, 5, "pairs"))) == 1
    dropped = _pair_scene(n_frames=64, anns=((17, 63),))
    assert list(windows(dropped, 64, 5, "pairs")) == []
    # coverage may be stitched from several same-label ranges
    stitched = _pair_scene(n_frames=64, anns=((16, 39), (40, 63)))
    assert len(list(windows(stitched, 64, 5, "pairs"))) == 1
    # the center frame itself must be annotated
    head = _pair_scene(n_frames=64, anns=((0, 30),))
    assert list(windows(head, 64, 5, "pairs")) == []
    tail_to_center = _pair_scene(n_frames=64, anns=((0, 47),))
    assert len(list(windows(tail_to_center, 64, 5, "pairs"))) == 1


def test_pairs_mode_requires_track_coverage():
    a = straight_traj("a", 1.2, 0.0, 64)
    xy = straight_traj("b", 1.2, 0.0, 64, origin=(0.0, 1.0)).xy
    frames = [f for f in range(64) if not 10 <= f < 25]  # 15-frame hole
    b = make_traj("b", xy[frames], frames=frames)
    rec = SceneRecording("s", 10.0, [a, b], [PairAnnotation(0, 63, "a", "b", WT)])
    assert list(windows(rec, 64, 5, "pairs")) == []


def test_group_mode_membership():
    a = straight_traj("a", 1.2, 0.0, 64)
    b = straight_traj("b", 1.2, 0.0, 20, origin=(0.0, 1.0))  # frames 0..19
    c = straight_traj("c", 1.2, 0.0, 30, origin=(0.0, 2.0), first_frame=34)
    rec = SceneRecording("s", 10.0, [a, b, c], [],
                         [CollectiveAnnotation(0, 63, TALK)])
    out = list(windows(rec, 64, 5, "group"))
    # b and c overlap the window [0, 63] somewhere, so both participate
    assert out == [(31, ("a", "b", "c"), TALK)]
    short = SceneRecording("s", 10.0, [a, b, c], [],
                           [CollectiveAnnotation(0, 40, TALK)])
    assert list(windows(short, 64, 5, "group")) == []  # 41 < 48 frames


def test_windows_validation():
    rec = _pair_scene()
    with pytest.raises(ValueError):
        list(windows(rec, 48, 5, "pairs"))
    with pytest.raises(ValueError):
        list(windows(rec, 64, 0, "pairs"))
    with pytest.raises(ValueError):
        list(windows(rec, 64, 5, "triplets"))
