"""Cross-validated benchmarks with a cue ablation on seeded synthetic data.

Runs the pairwise task and the collective task under 3-fold evaluation,
then re-scores the collective task with growing cue sets to show what
each cue buys.
"""

from proxrf.dataset import FoldSplit
from proxrf.evaluate import CUE_NAMES, PipelineConfig, ablation, kfold_evaluate
from proxrf.synth import SynthParams, make_collective_corpus, make_pair_corpus

PARAMS = SynthParams(seed=7, noise_sigma=0.02)
CFG = PipelineConfig(seed=7)


def main():
    pairs = make_pair_corpus(PARAMS, 5)
    folds = FoldSplit.round_robin([r.sequence_id for r in pairs], 3)
    report = kfold_evaluate(pairs, folds, CFG, "interaction")
    print("pairwise task, 3 folds:")
    print(report.confusion.text())
    per_class = "  ".join(f"{c} {a:.2f}"
                          for c, a in zip(report.class_names,
                                          report.per_class_accuracy))
    print(f"per-class: {per_class}")
    print(f"mean per-class accuracy {report.mpca:.4f} (std {report.std:.4f})\n")

    scenes = pairs + make_collective_corpus(PARAMS, 6)
    folds = FoldSplit.round_robin([r.sequence_id for r in scenes], 3)
    runs = ablation(scenes, folds,
                    [CUE_NAMES[:2], CUE_NAMES[:3], CUE_NAMES], CFG)
    print("collective task, growing cue sets:")
    for cues, rep in runs:
        print(f"  {' + '.join(cues):<62} mpca {rep.mpca:.4f}")
    print("\nThe dispersion cue pulls gatherings and dismissals apart; the")
    print("shape cue separates the standing-group classes.")


if __name__ == "__main__":
    main()
