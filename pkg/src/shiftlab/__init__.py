"""shiftlab: online label-shift adaptation lab.

A softmax-linear classifier adapted on unlabeled streams whose class prior
drifts over time.  The adaptive method estimates the shift from the cosine
distance between consecutive mean predictions, maps it into bounded learning
rates, and descends a label-free risk estimate built from a holdout confusion
matrix.  Ships with baselines, a seeded stream simulator, and an experiment
harness with CLI.
"""

__version__ = "0.1.0"

from .asap import DEFAULT_BOUNDS, LrBounds, learning_rate, shift_estimate
from .data import DatasetSpec, LabeledPool, make_gaussian_pool, make_pool, parse_idx, split_pool
from .errors import (
    ConfigError,
    DegenerateInputError,
    IdxFormatError,
    InsufficientDataError,
    SingularMatrixError,
)
from .estimator import (
    bbse,
    class_wise_risk,
    conditional_from_joint,
    estimate_confusion,
    pseudo_label_distribution,
    unsupervised_risk_grad,
)
from .harness import (
    MatrixResult,
    PretrainSettings,
    RunConfig,
    SummaryRow,
    load_config,
    render_summary,
    run_matrix,
    sensitivity_sweep,
)
from .linalg import cosine_distance, invert_ridge, project_simplex
from .methods import (
    AsapAdapter,
    AtlasLiteAdapter,
    FthAdapter,
    FtfwhAdapter,
    MethodConfig,
    StepRecord,
    UogdAdapter,
    reweight_predictions,
    run_adapter,
    run_asap,
    run_atlas_lite,
    run_fth,
    run_ftfwh,
    run_uogd,
)
from .model import (
    ModelParams,
    SoftmaxClassifier,
    batch_prediction,
    forward,
    load_checkpoint,
    loss_and_grad,
    pretrain,
    save_checkpoint,
    softmax_probs,
)
from .shift import (
    SHIFT_KINDS,
    LabelShiftStream,
    ShiftSchedule,
    StreamBatch,
    default_endpoints,
    interpolate,
    sample_batch,
)

__all__ = [name for name in dir() if not name.startswith("_")]
