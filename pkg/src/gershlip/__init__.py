"""Certified L-Lipschitz residual blocks via Gershgorin disc bounds."""

from .activations import (
    ActivationSpec,
    InfiniteConstantsError,
    UnknownActivationError,
    activation_constants,
    activation_eval,
    default_catalog,
    get_activation,
    numeric_constants,
    verify_slope_restriction,
)
from .lmi import (
    GershgorinDisc,
    LmiMatrix,
    LmiReport,
    assemble_lmi,
    eigenvalues_symmetric,
    gershgorin_discs,
    selection_matrix,
    verify_block,
)
from .network import (
    Model,
    ModelFormatError,
    block_forward,
    empirical_lipschitz,
    load_model,
    make_model,
    materialize_model,
    model_forward,
    save_model,
)
from .param import (
    BlockShape,
    DEFAULT_CONFIG,
    MaterializeConfig,
    MaterializedBlock,
    RawBlock,
    backward_pass,
    init_raw,
)
from .training import (
    TrainConfig,
    TrainingDiverged,
    TrainingHistory,
    collapse_metric,
    gradient,
    linear_fit_oracle,
    make_sine_dataset,
    mse_loss,
    train,
)

__version__ = "0.1.0"
