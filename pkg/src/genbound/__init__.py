"""Training-trajectory generalization bounds for homogeneous ReLU networks.

The package trains small convolutional/fully-connected ReLU models with
gradient flow, (stochastic) gradient descent, or noisy gradient descent,
accumulates the loss-weighted norm growth seen along the way, and turns it
into post-hoc generalization bounds together with a battery of numerical
self-checks for every identity the bound assembly relies on.
"""

from .bounds import (
    LAMBDA_MAX,
    BoundReport,
    SgldBoundInputs,
    assemble_bound,
    bound_series,
    cl_continuous,
    cl_discrete,
    cl_power,
    power_integrand,
    psi,
    rademacher_constant,
    sgld_bound,
)
from .checks import CheckOutcome, SUITE_NAMES, run_suites
from .data import (
    REGRESSION_C_Y,
    Dataset,
    inject_label_noise,
    load_csv,
    load_idx,
    save_csv,
    split,
    synth_classification,
    synth_regression,
    target_fn,
    write_idx,
)
from .network import (
    ForwardTrace,
    NetworkSpec,
    Parameters,
    batch_outputs,
    forward,
    grad_f,
    init_gaussian,
    loss_and_grad,
)
from .training import (
    ALGORITHMS,
    DivergenceError,
    TrainConfig,
    Trajectory,
    estimate_c_f,
    gd_step,
    gf_integrate,
    lr_schedule,
    max_feasible_eta,
    sgd_step,
    sgld_step,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "BoundReport",
    "CheckOutcome",
    "Dataset",
    "DivergenceError",
    "ForwardTrace",
    "LAMBDA_MAX",
    "NetworkSpec",
    "Parameters",
    "REGRESSION_C_Y",
    "SUITE_NAMES",
    "SgldBoundInputs",
    "TrainConfig",
    "Trajectory",
    "assemble_bound",
    "batch_outputs",
    "bound_series",
    "cl_continuous",
    "cl_discrete",
    "cl_power",
    "estimate_c_f",
    "forward",
    "gd_step",
    "gf_integrate",
    "grad_f",
    "init_gaussian",
    "inject_label_noise",
    "load_csv",
    "load_idx",
    "loss_and_grad",
    "lr_schedule",
    "max_feasible_eta",
    "power_integrand",
    "psi",
    "rademacher_constant",
    "run_suites",
    "save_csv",
    "sgd_step",
    "sgld_bound",
    "sgld_step",
    "split",
    "synth_classification",
    "synth_regression",
    "target_fn",
    "train",
    "write_idx",
]
