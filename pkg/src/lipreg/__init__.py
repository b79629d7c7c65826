"""Lipschitz-regularized training of small feed-forward ReLU networks.

The product of per-layer spectral norms upper-bounds a network's Lipschitz
constant and hence how much bounded input noise can expand through the
layers. This package trains small regression networks under four
formulations (no regularization, per-layer spectral-norm sum, cross-layer
norm product, and a hard max-norm row constraint) and evaluates their
robustness to bounded uniform input noise.
"""

from .linalg import (
    SpectralEstimate,
    SpectralTracker,
    eigen_oracle,
    matvec,
    power_iteration,
)
from .network import (
    ForwardTrace,
    Gradients,
    Layer,
    ModelLoadError,
    Network,
    backward,
    batch_gradients,
    forward,
    init_network,
    lipschitz_upper_bound,
    load_model,
    mae_metric,
    mse_loss,
    predict,
    save_model,
    spectral_norms,
)
from .regularization import (
    RegularizationMode,
    maxnorm_project,
    penalty_gradient,
    penalty_value,
)
from .optimizer import (
    AdamState,
    EpochMetrics,
    TrainConfig,
    adam_step,
    minibatch_indices,
    train_epoch,
)
from .data import (
    CsvFormatError,
    Dataset,
    NoiseSpec,
    apply_noise,
    feature_bounds,
    load_csv,
    make_synthetic_regression,
    save_csv,
    split,
    standardize,
)
from .experiment import (
    ContourGrid,
    EpochRecord,
    SweepResult,
    TrainReport,
    classify_point,
    contour_grid,
    grid_search,
    load_report_json,
    report_table,
    run_experiment,
    train_model,
    write_contour_csv,
    write_outputs,
)

__version__ = "0.1.0"
