"""Two-stage pedestrian behavior recognition from ground-plane tracks.

Stage one describes each ordered pedestrian pair inside a sliding window
with a KDE-smoothed polar occupancy histogram plus a pyramidal relative
speed vector and classifies the pair interaction with a random forest.
Stage two pools the predicted interactions of a whole group with speed,
dispersion-change and shape cues into a collective behavior descriptor
classified by a second forest.  The package also ships dataset parsing
and adapters, seeded synthetic scene generators, an evaluation harness
and a command-line front end.
"""

from .cbd import (
    CbdDescriptor,
    CollectiveLabel,
    GroupWindow,
    classify_collective,
    compute_cbd,
    dispersion,
    dispersion_change,
    interaction_histogram,
    mean_speed,
    shape_ratio,
)
from .config import RunConfig, build_run_config, load_run_config, parse_config_text
from .dataset import (
    FOOT_POINTS,
    LAYOUTS,
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
from .errors import (
    AnnotationConflict,
    ConfigError,
    CorruptModel,
    EmptyGroup,
    EmptyTrainingSet,
    FrameMismatch,
    InsufficientData,
    InvalidConfig,
    InvalidFeature,
    InvalidParams,
    LabelCoverageError,
    MissingFrames,
    ModelShapeMismatch,
    ParseError,
    ProxrfError,
    ReferentialError,
    ShapeMismatch,
    WindowLengthMismatch,
)
from .evaluate import (
    ConfusionMatrix,
    EvalReport,
    PipelineConfig,
    ablation,
    cross_dataset,
    evaluate_predictions,
    kfold_evaluate,
)
from .forest import (
    ForestConfig,
    LabeledSample,
    RandomForest,
    deserialize,
    feature_importance,
    predict,
    serialize,
    train,
)
from .pid import (
    InteractionLabel,
    PidConfig,
    PidDescriptor,
    PolarGrid,
    accumulate_histogram,
    classify_interaction,
    compute_pid,
    kde_kernel,
    sample_grid,
    speed_pyramid,
)
from .synth import (
    SynthParams,
    gen_collective,
    gen_pair,
    make_collective_corpus,
    make_contrast_corpus,
    make_pair_corpus,
)
from .trajectory import (
    KinematicState,
    RelativePolar,
    SmoothingConfig,
    TimedPosition,
    Trajectory,
    derivative,
    kinematics,
    relative_distance_series,
    relative_polar,
    smooth,
    smoothed_states,
    wrap_angle,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
