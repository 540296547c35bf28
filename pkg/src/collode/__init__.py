"""Neural ODE training by Chebyshev collocation and simultaneous constrained optimization."""

from .admm import AdmmState, admm_train
from .colloc import (
    CollocationGrid,
    DegenerateGridError,
    barycentric_weights,
    build_grid,
    chebyshev_nodes,
    differentiation_matrix,
    interp_eval,
)
from .neuralnet import (
    Mlp,
    batch_forward,
    forward,
    jacobian_input,
    jacobian_params,
    load_checkpoint,
    save_checkpoint,
    xavier_init,
)
from .nlp import JacobianCheckError, SolveReport, SolverConfig, solve, solve_with_checkpoints
from .odesim import (
    IntegrationDivergedError,
    OdeSystem,
    Trajectory,
    euler_integrate,
    predict,
    rk4_integrate,
    vdp_system,
)
from .prep import Dataset, add_noise, init_states, loess_smooth, resample_to_grid
from .problem import NlpProblem, default_bounds
from .seqtrain import (
    SeqTrainConfig,
    SeqTrainResult,
    evaluate_mse,
    hybrid_pretrain_handoff,
    sequential_train,
)

__version__ = "0.1.0"
