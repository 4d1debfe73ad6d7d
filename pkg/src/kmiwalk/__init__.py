"""Self-paced EEG walking simulator: decoding, control, course, and statistics."""

from .control import (
    HysteresisController,
    PosteriorSmoother,
    Thresholds,
    adjust,
    calibrate,
)
from .course import (
    CourseSpec,
    SessionResult,
    WalkingSimulation,
    default_course,
    run_session,
    score_dwell,
)
from .decoding import ClasswisePca, KmiDecoder, lda_direction
from .evaluate import (
    PerformancePoint,
    RandomWalkEnsemble,
    correlate,
    evaluate_observed,
    fit_parzen,
    hdr_p_value,
    mc_p_value,
    random_walk_session,
    regress_offline_on_online,
    run_ensemble,
)
from .model_selection import CvReport, cross_validate, optimize_band
from .pipeline import (
    DecodingModel,
    load_model,
    online_posteriors,
    save_model,
    train_from_recording,
)
from .recording import (
    IDLE,
    UNLABELED,
    WALK,
    Recording,
    common_average_reference,
    import_csv,
    load_recording,
    reject_artifact_channels,
    save_recording,
)
from .spectral import (
    BIN_CENTERS,
    FrequencyBand,
    SpectralTrial,
    psd_bins,
    restrict_band,
    segment_training_trials,
    sliding_online_window,
    stack_trials,
)
from .synth import (
    GeneratorConfig,
    ScriptedAgent,
    generate_recording,
    ideal_posterior_trace,
    perfect_course_agent,
    perfect_course_trace,
)

__version__ = "0.1.0"
