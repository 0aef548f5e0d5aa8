"""feddecomp: a federated-learning simulation library built around the
three-term decomposition of the global loss (local, distribution shift,
aggregation) with margin-controlled local training and principal-direction
gradient aggregation."""

from .aggregation import (
    AggregationMode,
    PrincipalBasis,
    aggregate,
    build_basis,
    calibrate,
    gradient_spectrum,
    principal_aggregate,
    revise_gradient,
    sample_weights,
)
from .datasets import (
    ClientDataset,
    FederationSpec,
    append_noise_columns,
    generate_base,
    inject_shortcut,
    load_csv,
    partition_dirichlet,
    save_csv,
    stratified_split,
)
from .linalg import EigenPair, gram, project, sym_eigen
from .metrics import (
    ConflictStats,
    DecompositionTerms,
    MetricsWriter,
    RoundMetrics,
    conflict_stats,
    cross_eval_matrix,
    decompose,
    decompose_from_losses,
    load_metrics,
)
from .models import (
    Architecture,
    LossReport,
    ModelParams,
    evaluate,
    forward_logits,
    init_params,
    loss_and_grad,
    mean_logit_sq_norm,
    zeros_like_params,
)
from .simulation import (
    DataConfig,
    ModelConfig,
    RunConfig,
    RunSummary,
    build_federation,
    load_checkpoint,
    run,
    run_ablation,
    run_federation,
    sample_clients,
    save_checkpoint,
)
from .training import (
    FlatGradient,
    LocalConfig,
    apply_global_update,
    local_model_from_gradient,
    train_local,
)

__version__ = "0.1.0"
