"""Online multiclass classification from partial (candidate) label sets.

Linear learners over a ``(d, K)`` weight matrix: Perceptron and Pegasos
variants driven by the average-prediction and max-prediction hinge losses,
plus their exact-label baselines, closed-form mistake and regret bounds,
dataset ingestion and an experiment harness.
"""
from .bounds import (
    BoundReport,
    SeparabilityCertificate,
    batch_comparator,
    batch_objective,
    empirical_regret,
    min_label_set_size,
    stream_radius,
    theorem1_bound,
    theorem2_bound,
    theorem3_bound,
)
from .data import (
    Dataset,
    GenerationError,
    PartialLabelStream,
    SynthesisSpec,
    generate,
    generate_noisy,
    generate_separable,
    load_dataset,
    load_uci,
    parse_csv,
    parse_libsvm,
    synthesize_partial_labels,
)
from .harness import ErrorCurve, ExperimentConfig, emit_curves, run_experiment
from .learners import (
    PARTIAL_LEARNERS,
    Algorithm,
    LearnerConfig,
    LearnerState,
    RunResult,
    TrialRecord,
    learner_init,
    make_config,
    run_arrays,
    run_sequence,
    step,
)
from .losses import (
    ambiguous_loss,
    aph_loss,
    aph_subgradient,
    avg_margin,
    max_margin,
    mph_loss,
    mph_subgradient,
)
from .model import argmax_in_set, frobenius_norm, predict, project_to_ball, score, zeros

__version__ = "0.1.0"
