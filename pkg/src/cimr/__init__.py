"""Closed-loop iterative multimodal reasoning on a synthetic action-planning world."""

from .backends import (
    OracleConfig,
    RemoteBackend,
    ScenarioView,
    ScriptedOracle,
    calibrate_oracle,
    expected_accuracies,
)
from .context import ContextState, Discrepancy, FeedbackSignal
from .encoders import EncoderParams, FeatureSeq, encode_context, encode_text, encode_visual
from .engine import (
    VariantConfig,
    compute_confidence,
    parse_feedback,
    run_episode,
    update_context,
)
from .fusion import AttentionParams, FusedFeatures, check_gradients, fuse, fuse_backward
from .harness import (
    ExperimentConfig,
    ResultsTable,
    aggregate_metrics,
    emit_results,
    export_correction_triplets,
    load_config,
    run_experiment,
)
from .mapsim import (
    Count,
    IdentifyAll,
    MoveAction,
    ObjectSpec,
    Observation,
    Place,
    Response,
    Scenario,
    Scene,
    apply_action,
    evaluate_goal,
    generate_scenario,
    parse_observation,
    render,
)

__version__ = "0.1.0"
