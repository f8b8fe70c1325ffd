"""Continuous visual-BCI decoding engine with a synthetic closed loop.

Eight white-noise flicker regions around the cursor tag the EEG; template
matching over a filter bank scores each region, and the score vector maps
linearly to a screen velocity for continuous cursor control. A generative
subject model closes the loop, so training, tracking tasks, metrics, and
the demo applications all run end to end without hardware.
"""

from .core import (
    Alignment,
    EegEpoch,
    Ring,
    SessionConfig,
    StimulusLayout,
    TargetSpec,
    default_config_path,
    hit_test,
    load_config,
    save_config,
    stage1_targets,
    stage2_targets,
)
from .dsp import (
    EpochTooShortError,
    FilterBankSpec,
    preprocess,
    subband_decompose,
    subband_weight,
    subband_weights,
)
from .stimulus import (
    VisualFieldWeights,
    WnSequence,
    bank_from_json,
    bank_to_json,
    generate_wn_bank,
    luminance_frame,
    save_bank,
    visual_field_weights,
)
from .synth import (
    SyntheticSubject,
    default_subject,
    make_cohort,
    read_session,
    simulate_epoch,
    subject_from_params,
    vep_kernel,
    write_session,
)
from .trca import TrcaModel, correlate, load_model, save_model, train_trca
from .velocity import (
    GateDecision,
    RegressionSet,
    VelocityWeight,
    confidence_gate,
    decay_profile,
    decode_velocity,
    initial_velocity_weight,
    project,
    train_velocity_weight,
)
from .engine import (
    TASK_CODES,
    DecoderBundle,
    JitterReport,
    StepRecord,
    TrialRecord,
    parse_trial,
    read_trial_log,
    run_fixed_task,
    run_jitter_inspection,
    run_random_task,
    run_training,
    serialize_trial,
    session_wn_bank,
    train_decoder,
    trial_frame_positions,
    write_trial_log,
)
from .metrics import (
    MetricsReport,
    build_metrics,
    fitts_itr,
    intended_velocity,
    post_hit_hold_rate,
    velocity_errors,
)
from .apps import (
    PaintingState,
    SnakeState,
    axis_moves,
    new_game,
    new_painting,
    paint_step,
    painting_to_svg,
    replay_snake,
    set_brush,
    snake_step,
)

__version__ = "0.1.0"

__all__ = [
    "Alignment", "EegEpoch", "Ring", "SessionConfig", "StimulusLayout",
    "TargetSpec", "default_config_path", "hit_test", "load_config",
    "save_config", "stage1_targets", "stage2_targets",
    "EpochTooShortError", "FilterBankSpec", "preprocess",
    "subband_decompose", "subband_weight", "subband_weights",
    "VisualFieldWeights", "WnSequence", "bank_from_json", "bank_to_json",
    "generate_wn_bank", "luminance_frame", "save_bank",
    "visual_field_weights",
    "SyntheticSubject", "default_subject", "make_cohort", "read_session",
    "simulate_epoch", "subject_from_params", "vep_kernel", "write_session",
    "TrcaModel", "correlate", "load_model", "save_model", "train_trca",
    "GateDecision", "RegressionSet", "VelocityWeight", "confidence_gate",
    "decay_profile", "decode_velocity", "initial_velocity_weight",
    "project", "train_velocity_weight",
    "TASK_CODES", "DecoderBundle", "JitterReport", "StepRecord",
    "TrialRecord", "parse_trial", "read_trial_log", "run_fixed_task",
    "run_jitter_inspection", "run_random_task", "run_training",
    "serialize_trial", "session_wn_bank", "train_decoder",
    "trial_frame_positions", "write_trial_log",
    "MetricsReport", "build_metrics", "fitts_itr", "intended_velocity",
    "post_hit_hold_rate", "velocity_errors",
    "PaintingState", "SnakeState", "axis_moves", "new_game", "new_painting",
    "paint_step", "painting_to_svg", "replay_snake", "set_brush", "snake_step",
    "__version__",
]
