"""Cumulative-loss generalization bounds and their ingredients.

The potential psi(L_n) = sqrt(2 L_n) (C_y - sqrt(2 L_n)) is capped by
C_y^2/4 and may go negative once the loss exceeds C_y^2/2.  Its
2*eta_t-weighted sum along a trajectory is the cumulative loss CL(T),
which replaces the usual norm product in the Rademacher complexity bound:

    complexity = C_{L,d} / (m^p sqrt(n))
                 * prod_l sqrt((1 + 3 lam^2) ||layer_l(0)||^2 + max(CL, 0))

with an extra (1 + rho) on both summands for minibatch trajectories, plus
a sqrt(log(1/delta)/n) confidence term.  Hidden absolute constants are
reported as 1.  A separate information-theoretic bound covers SGLD.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .network import NetworkSpec
    from .training import Trajectory

__all__ = [
    "LAMBDA_MAX",
    "psi",
    "power_integrand",
    "cl_discrete",
    "cl_continuous",
    "cl_power",
    "rademacher_constant",
    "BoundReport",
    "assemble_bound",
    "bound_series",
    "SgldBoundInputs",
    "sgld_bound",
]


# The norm-growth analysis needs 1 - 3 lam^2 > 0.
LAMBDA_MAX = 1.0 / math.sqrt(3.0)


def _check_c_y(c_y: float) -> None:
    if not (0.0 < c_y <= 1.0):
        raise ValueError("c_y must lie in (0, 1]")


def psi(ln, c_y: float):
    """sqrt(2 ln) (c_y - sqrt(2 ln)); max c_y^2/4 at ln = c_y^2/8.

    Accepts scalars or arrays; losses must be nonnegative.  The value is
    negative once ln > c_y^2/2, and callers accumulate it signed.
    """
    _check_c_y(c_y)
    ln_arr = np.asarray(ln, dtype=float)
    if np.any(ln_arr < 0):
        raise ValueError("loss must be nonnegative")
    root = np.sqrt(2.0 * ln_arr)
    out = root * (c_y - root)
    return float(out) if np.isscalar(ln) or ln_arr.ndim == 0 else out


def power_integrand(ln, c_y: float, loss_power: int):
    """(a ln)^((a-1)/a) (c_y - (a ln)^(1/a)) for the power-a loss |f-y|^a/a.

    Reduces to psi at a = 2.
    """
    _check_c_y(c_y)
    a = int(loss_power)
    if a < 2 or a != loss_power:
        raise ValueError("loss_power must be an integer >= 2")
    ln_arr = np.asarray(ln, dtype=float)
    if np.any(ln_arr < 0):
        raise ValueError("loss must be nonnegative")
    root = (a * ln_arr) ** (1.0 / a)
    out = root ** (a - 1) * (c_y - root)
    return float(out) if np.isscalar(ln) or ln_arr.ndim == 0 else out


def cl_discrete(traj: "Trajectory") -> tuple[float, np.ndarray]:
    """CL(T) = sum_{t<T} 2 eta_t psi(t) and its prefix series (length T+1).

    Recomputed from the logged eta and psi columns, so it doubles as an
    independent check of the trajectory's own cl column.
    """
    if traj.algorithm == "GF":
        raise ValueError("discrete CL is undefined for gradient flow; use cl_continuous")
    series = np.concatenate(([0.0], np.cumsum(2.0 * traj.eta[:-1] * traj.psi[:-1])))
    return float(series[-1]), series


def cl_continuous(traj: "Trajectory") -> tuple[float, np.ndarray]:
    """Trapezoidal integral of 2 psi(t) dt along a gradient-flow trajectory."""
    if traj.algorithm != "GF":
        raise ValueError("continuous CL applies to gradient-flow trajectories")
    if traj.times.shape[0] < 2:
        raise ValueError("need at least two substeps to integrate")
    g = 2.0 * traj.psi
    chunks = 0.5 * (g[1:] + g[:-1]) * np.diff(traj.times)
    series = np.concatenate(([0.0], np.cumsum(chunks)))
    return float(series[-1]), series


def cl_power(traj: "Trajectory", loss_power: int, c_y: float | None = None):
    """Cumulative loss for the power-a loss, recomputed from the loss column."""
    if traj.algorithm == "GF":
        raise ValueError("power CL is defined for discrete-time trajectories")
    if loss_power != traj.loss_power:
        raise ValueError(
            f"trajectory was logged with loss_power={traj.loss_power}, not {loss_power}"
        )
    c = traj.c_y if c_y is None else c_y
    vals = power_integrand(traj.ln_train, c, loss_power)
    series = np.concatenate(([0.0], np.cumsum(2.0 * traj.eta[:-1] * vals[:-1])))
    return float(series[-1]), series


def rademacher_constant(n_hidden: int, input_dim: int, kind: str) -> float:
    """Architecture constant C_{L,d} of the complexity bound.

    Fully-connected: sqrt(2 (L+1) log 2) + 1.  Convolutional:
    2 sqrt((L + 2 + log d) d), natural log.
    """
    if n_hidden < 1:
        raise ValueError("need at least one hidden layer")
    if input_dim < 1:
        raise ValueError("input_dim must be positive")
    if kind == "FNN":
        return math.sqrt(2.0 * (n_hidden + 1) * math.log(2.0)) + 1.0
    if kind == "CNN":
        return 2.0 * math.sqrt((n_hidden + 2 + math.log(input_dim)) * input_dim)
    raise ValueError("kind must be 'FNN' or 'CNN'")


@dataclass
class BoundReport:
    """Assembled generalization bound for one trajectory."""

    theorem: str
    algorithm: str
    kind: str
    n_hidden: int
    input_dim: int
    output_width: int
    norm_exponent: float
    constant: float
    n: int
    lam: float
    delta: float
    rho: float | None
    init_sq_norms: list[float]
    v: list[float]
    cl: float
    cl_clamped: bool
    cl_seed_mean: float | None
    complexity: float
    confidence: float
    bound: float
    bound_seed_mean: float | None
    hidden_constant: float = 1.0

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


def _complexity(spec: "NetworkSpec", v: np.ndarray, cl_value: float, n: int, factor: float) -> float:
    clp = max(cl_value, 0.0)
    const = rademacher_constant(spec.n_hidden, spec.input_dim, spec.kind)
    prod = float(np.prod(np.sqrt(factor * (v + clp))))
    return const * spec.out_scale / math.sqrt(n) * prod


def assemble_bound(
    traj: "Trajectory",
    lam: float,
    delta: float = 0.05,
    n: int | None = None,
    rho: float | None = None,
    cl_value: float | None = None,
    cl_seed_mean: float | None = None,
    theorem: str | None = None,
) -> BoundReport:
    """Build the bound report for a logged trajectory.

    The theorem tag defaults to the trajectory's algorithm (GF, GD, SGD);
    SGLD runs are assembled under the full-batch tag.  rho > 0 is required
    for SGD and scales both the init-norm and CL summands by (1 + rho).
    Negative CL is clamped to zero inside the product (flagged in the
    report); the raw value is kept alongside.
    """
    spec = traj.spec
    if not (0.0 < lam < LAMBDA_MAX):
        raise ValueError("lam must lie in (0, 1/sqrt(3))")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if theorem is None:
        theorem = "GD" if traj.algorithm == "SGLD" else traj.algorithm
    if theorem not in ("GF", "GD", "SGD"):
        raise ValueError("theorem must be 'GF', 'GD' or 'SGD'")
    if theorem == "SGD":
        if rho is None or rho <= 0:
            raise ValueError("the minibatch bound needs rho > 0")
        factor = 1.0 + rho
    else:
        rho = None
        factor = 1.0
    if n is None:
        n = traj.n_train
    if n < 1:
        raise ValueError("n must be positive")
    if cl_value is None:
        cl_value = (cl_continuous(traj) if traj.algorithm == "GF" else cl_discrete(traj))[0]
    v = (1.0 + 3.0 * lam * lam) * np.asarray(traj.init_sq_norms, dtype=float)
    complexity = _complexity(spec, v, cl_value, n, factor)
    confidence = math.sqrt(math.log(1.0 / delta) / n)
    bound_seed_mean = None
    if cl_seed_mean is not None:
        bound_seed_mean = _complexity(spec, v, cl_seed_mean, n, factor) + confidence
    return BoundReport(
        theorem=theorem,
        algorithm=traj.algorithm,
        kind=spec.kind,
        n_hidden=spec.n_hidden,
        input_dim=spec.input_dim,
        output_width=spec.output_width,
        norm_exponent=spec.norm_exponent,
        constant=rademacher_constant(spec.n_hidden, spec.input_dim, spec.kind),
        n=int(n),
        lam=lam,
        delta=delta,
        rho=rho,
        init_sq_norms=[float(x) for x in traj.init_sq_norms],
        v=[float(x) for x in v],
        cl=float(cl_value),
        cl_clamped=cl_value < 0.0,
        cl_seed_mean=cl_seed_mean,
        complexity=complexity,
        confidence=confidence,
        bound=complexity + confidence,
        bound_seed_mean=bound_seed_mean,
    )


def bound_series(
    traj: "Trajectory",
    lam: float,
    delta: float = 0.05,
    n: int | None = None,
    rho: float | None = None,
) -> np.ndarray:
    """Bound value at every logged step, using the CL prefix up to it."""
    if traj.algorithm == "GF":
        _, series = cl_continuous(traj)
    else:
        _, series = cl_discrete(traj)
    if n is None:
        n = traj.n_train
    theorem = "GD" if traj.algorithm == "SGLD" else traj.algorithm
    factor = 1.0
    if theorem == "SGD":
        if rho is None or rho <= 0:
            raise ValueError("the minibatch bound needs rho > 0")
        factor = 1.0 + rho
    v = (1.0 + 3.0 * lam * lam) * np.asarray(traj.init_sq_norms, dtype=float)
    confidence = math.sqrt(math.log(1.0 / delta) / n)
    return np.array(
        [_complexity(traj.spec, v, cl_t, n, factor) + confidence for cl_t in series]
    )


@dataclass
class SgldBoundInputs:
    """Inputs of the information-theoretic SGLD bound.

    loss_bound M caps the per-sample loss, lip is its Lipschitz constant in
    the parameters; exactly one of eta_sum (discrete time) or duration
    (continuous time) applies.
    """

    loss_bound: float
    lip: float
    beta: float
    n: int
    eta_sum: float | None = None
    duration: float | None = None


def sgld_bound(inputs: SgldBoundInputs) -> float:
    """M Lip sqrt(beta/(8n) sum eta_t), or M Lip sqrt(beta T)/(sqrt(2) n).

    beta = inf (the noiseless limit) returns inf: the information bound
    carries no content for deterministic dynamics.
    """
    if inputs.loss_bound <= 0 or inputs.lip <= 0:
        raise ValueError("loss_bound and lip must be positive")
    if inputs.n < 1:
        raise ValueError("n must be positive")
    if inputs.beta != math.inf and inputs.beta <= 0:
        raise ValueError("beta must be positive or inf")
    if (inputs.eta_sum is None) == (inputs.duration is None):
        raise ValueError("provide exactly one of eta_sum or duration")
    if inputs.beta == math.inf:
        return math.inf
    if inputs.eta_sum is not None:
        if inputs.eta_sum < 0:
            raise ValueError("eta_sum must be nonnegative")
        return inputs.loss_bound * inputs.lip * math.sqrt(
            inputs.beta / (8.0 * inputs.n) * inputs.eta_sum
        )
    if inputs.duration < 0:
        raise ValueError("duration must be nonnegative")
    return (
        inputs.loss_bound
        * inputs.lip
        * math.sqrt(inputs.beta * inputs.duration)
        / (math.sqrt(2.0) * inputs.n)
    )
