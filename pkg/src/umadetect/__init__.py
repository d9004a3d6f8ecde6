"""Unorganized-rating-attack detection via low-rank + sparse + noise decomposition."""

from .dataio import (
    Checkpoint,
    RatingMatrix,
    RatingRecord,
    build_matrix,
    load_ratings,
    load_result,
    save_result,
)
from .errors import (
    CheckpointFormatError,
    CheckpointIntegrityError,
    DimensionMismatchError,
    DivergenceError,
    GenerationError,
    NumericalError,
    ParameterError,
    RatingFormatError,
    RatingRangeError,
    StateError,
    UmaDetectError,
)
from .evaluate import (
    DetectionReport,
    SweepResult,
    label_users,
    score,
    sweep_spam_ratio,
    sweep_to_csv,
)
from .matrixops import (
    ObservationMask,
    SvdFactors,
    ball_project_z,
    frobenius_norm,
    inf_norm,
    inner_product,
    l1_norm,
    nuclear_norm,
    operator_norm,
    project_omega,
    soft_threshold,
    svd,
    svt,
)
from .simulate import (
    AttackSpec,
    AttackedDataset,
    CleanDataset,
    GroundTruth,
    attack_manifest,
    corrupt_cells,
    generate_ground_truth,
    hijack_existing_users,
    incoherence_stats,
    inject_profile_attacks,
    make_clean_dataset,
    mixed_attack,
    observe,
    verify_unorganized,
)
from .solver import (
    BetaCheck,
    DecompositionResult,
    Diagnostics,
    SolverConfig,
    SolverState,
    default_config,
    ergodic_averages,
    initial_state,
    kkt_residuals,
    objective,
    rpca_preset,
    solve,
    step,
    validate_beta,
)

__version__ = "0.1.0"
