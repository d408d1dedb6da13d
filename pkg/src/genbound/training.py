"""Training loops (GF, GD, SGD, SGLD) with full trajectory logging.

Every step logs the full-data loss, the potential psi, the running
cumulative loss CL, and per-layer squared parameter norms; those columns
are exactly what the bound assembly and the norm-dynamics checks consume.
The learning-rate schedule is eta_t = eta / ceil((t+1)/T0)**alpha, and the
feasibility threshold `max_feasible_eta` gives the largest base rate the
norm-growth guarantee supports.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bounds import LAMBDA_MAX, power_integrand, psi
from .network import (
    NetworkSpec,
    Parameters,
    _loss_grad_outputs,
    batch_outputs,
    init_gaussian,
)

__all__ = [
    "ALGORITHMS",
    "TrainConfig",
    "Trajectory",
    "DivergenceError",
    "lr_schedule",
    "gd_step",
    "sgd_step",
    "sgld_step",
    "all_indices_once",
    "gf_integrate",
    "estimate_c_f",
    "max_feasible_eta",
    "train",
]

ALGORITHMS = ("GF", "GD", "SGD", "SGLD")

# Abort threshold for the divergence guard.
_LOSS_CAP = 1e6


@dataclass
class TrainConfig:
    """Hyperparameters shared by all algorithms; unused fields are ignored.

    lam and epsilon only enter the feasibility threshold; kappa scales the
    Gaussian initialization; duration and gf_substep apply to GF only.
    """

    algorithm: str = "GD"
    eta: float = 0.1
    alpha: float = 1.0
    t0: int = 1
    batch: int = 1
    beta: float | None = None
    total_steps: int = 100
    duration: float | None = None
    gf_substep: float | None = None
    seed: int = 0
    loss_power: int = 2
    lam: float = 0.5
    epsilon: float | None = None
    kappa: float = 1.0

    def validate(self, n_hidden: int | None = None) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.t0 < 1 or int(self.t0) != self.t0:
            raise ValueError("t0 must be an integer >= 1")
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must lie in (0, 1]")
        if not (0.0 < self.lam < LAMBDA_MAX):
            raise ValueError("lam must lie in (0, 1/sqrt(3))")
        if self.epsilon is not None and not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.seed < 0 or int(self.seed) != self.seed:
            raise ValueError("seed must be a nonnegative integer")
        if self.loss_power < 2 or int(self.loss_power) != self.loss_power:
            raise ValueError("loss_power must be an integer >= 2")
        if self.total_steps < 0:
            raise ValueError("total_steps must be nonnegative")
        if self.algorithm == "SGD" and self.batch < 1:
            raise ValueError("batch must be >= 1 for SGD")
        if self.algorithm == "SGLD":
            if self.beta is None or (self.beta != math.inf and self.beta <= 0):
                raise ValueError("SGLD needs beta > 0 (or inf for the noiseless limit)")
        if self.algorithm == "GF":
            if self.duration is None or self.duration <= 0:
                raise ValueError("GF needs a positive duration")
            if self.gf_substep is not None and self.gf_substep <= 0:
                raise ValueError("gf_substep must be positive")
        if n_hidden is not None and self.algorithm in ("GD", "SGD"):
            lo = (n_hidden + 1) / (n_hidden + 2)
            if self.alpha <= lo:
                warnings.warn(
                    f"alpha={self.alpha} is at or below {lo:.4g}, outside the "
                    f"range the norm-growth guarantee covers at depth {n_hidden + 1}"
                )


@dataclass
class Trajectory:
    """Logged run: one row per step t = 0..T plus per-transition data.

    cl[t] is the prefix sum of 2*eta_s*psi_s for s < t, so cl[0] = 0 and
    cl[-1] is the realized cumulative loss CL(T).  gradsq has one row per
    transition (the per-layer squared gradient norms used by the update).
    For GF, `steps` counts Euler substeps, times = steps*h and eta[t] = h.
    """

    algorithm: str
    seed: int
    steps: np.ndarray
    times: np.ndarray
    eta: np.ndarray
    ln_train: np.ndarray
    ln_test: np.ndarray
    psi: np.ndarray
    cl: np.ndarray
    normsq: np.ndarray
    gradsq: np.ndarray
    c_y: float
    loss_power: int
    n_train: int
    max_abs_f: float
    final_params: Parameters
    diverged_at: int | None = None

    @property
    def spec(self) -> NetworkSpec:
        return self.final_params.spec

    @property
    def init_sq_norms(self) -> np.ndarray:
        return self.normsq[0]

    @property
    def has_test(self) -> bool:
        return bool(np.any(np.isfinite(self.ln_test)))


class DivergenceError(RuntimeError):
    """Raised when the training loss explodes; carries the partial run."""

    def __init__(self, step: int, loss: float, trajectory: Trajectory):
        super().__init__(f"training diverged at step {step}: loss {loss:.6g}")
        self.step = step
        self.loss = loss
        self.trajectory = trajectory


def lr_schedule(t: int, eta: float, alpha: float, t0: int) -> float:
    """eta_t = eta / ceil((t+1)/t0)**alpha."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return eta / float(t // t0 + 1) ** alpha


def _integrand(ln: float, c_y: float, loss_power: int) -> float:
    """Potential whose 2*eta_t-weighted sum is the cumulative loss."""
    if loss_power == 2:
        return psi(ln, c_y)
    return power_integrand(ln, c_y, loss_power)


def gd_step(params: Parameters, dataset, t: int, config: TrainConfig) -> Parameters:
    """One full-gradient step with the scheduled rate."""
    eta_t = lr_schedule(t, config.eta, config.alpha, config.t0)
    _, grads, _ = _loss_grad_outputs(params, dataset.inputs, dataset.targets, config.loss_power)
    return params.add_scaled(grads, -eta_t)


def all_indices_once(rng, n: int, batch: int) -> np.ndarray:
    """Debug sampler covering each index exactly once; makes SGD equal GD."""
    return np.arange(n)


def sgd_step(params: Parameters, dataset, t: int, config: TrainConfig, rng, sampler=None):
    """One minibatch step; returns (new params, sampled index tuple)."""
    eta_t = lr_schedule(t, config.eta, config.alpha, config.t0)
    if sampler is None:
        idx = rng.integers(0, dataset.n, size=config.batch)
    else:
        idx = sampler(rng, dataset.n, config.batch)
    _, grads, _ = _loss_grad_outputs(
        params, dataset.inputs[idx], dataset.targets[idx], config.loss_power
    )
    return params.add_scaled(grads, -eta_t), idx


def sgld_step(params: Parameters, dataset, t: int, config: TrainConfig, rng) -> Parameters:
    """Full-gradient step plus N(0, 2*eta_t/beta) noise; beta=inf skips noise."""
    eta_t = lr_schedule(t, config.eta, config.alpha, config.t0)
    _, grads, _ = _loss_grad_outputs(params, dataset.inputs, dataset.targets, config.loss_power)
    new = params.add_scaled(grads, -eta_t)
    if config.beta == math.inf:
        return new
    scale = math.sqrt(2.0 * eta_t / config.beta)
    noisy = [w + rng.normal(0.0, scale, size=w.shape) for w in new.layers]
    return Parameters(params.spec, noisy)


class _TrajectoryLog:
    """Accumulates rows and enforces the divergence guard."""

    def __init__(self, algorithm, seed, c_y, loss_power, n_train):
        self.algorithm = algorithm
        self.seed = seed
        self.c_y = c_y
        self.loss_power = loss_power
        self.n_train = n_train
        self.rows = {k: [] for k in ("eta", "ln", "ln_test", "psi", "cl", "normsq")}
        self.gradsq: list[np.ndarray] = []
        self.cl_running = 0.0
        self.max_abs_f = 0.0

    def log_state(self, eta_t, ln, ln_test, params):
        r = self.rows
        r["eta"].append(eta_t)
        r["ln"].append(ln)
        r["ln_test"].append(math.nan if ln_test is None else ln_test)
        r["psi"].append(_integrand(ln, self.c_y, self.loss_power))
        r["cl"].append(self.cl_running)
        r["normsq"].append(params.sq_norms())

    def advance_cl(self):
        self.cl_running += 2.0 * self.rows["eta"][-1] * self.rows["psi"][-1]

    def log_grads(self, grads):
        self.gradsq.append(np.array([float(np.sum(g * g)) for g in grads]))

    def see_outputs(self, f: np.ndarray):
        self.max_abs_f = max(self.max_abs_f, float(np.max(np.abs(f))))

    def build(self, params, time_step=1.0, diverged_at=None) -> Trajectory:
        k = len(self.rows["eta"])
        n_layers = params.spec.n_layers
        return Trajectory(
            algorithm=self.algorithm,
            seed=self.seed,
            steps=np.arange(k),
            times=np.arange(k) * time_step,
            eta=np.array(self.rows["eta"]),
            ln_train=np.array(self.rows["ln"]),
            ln_test=np.array(self.rows["ln_test"]),
            psi=np.array(self.rows["psi"]),
            cl=np.array(self.rows["cl"]),
            normsq=np.array(self.rows["normsq"]).reshape(k, n_layers),
            gradsq=np.array(self.gradsq).reshape(len(self.gradsq), n_layers),
            c_y=self.c_y,
            loss_power=self.loss_power,
            n_train=self.n_train,
            max_abs_f=self.max_abs_f,
            final_params=params,
            diverged_at=diverged_at,
        )

    def guard(self, step, ln, params, time_step=1.0):
        if not math.isfinite(ln) or ln > _LOSS_CAP:
            raise DivergenceError(step, ln, self.build(params, time_step, diverged_at=step))


def _batch_loss(params, X, y, loss_power) -> tuple[float, np.ndarray]:
    f = batch_outputs(params, X)
    res = f - y
    if loss_power == 2:
        return 0.5 * float(res @ res) / X.shape[0], f
    a = int(loss_power)
    return float(np.sum(np.abs(res) ** a)) / (a * X.shape[0]), f


def gf_integrate(
    params: Parameters,
    dataset,
    duration: float,
    h: float,
    config: TrainConfig,
    test_dataset=None,
) -> Trajectory:
    """Explicit-Euler gradient flow, logging every substep."""
    if duration <= 0 or h <= 0:
        raise ValueError("duration and substep must be positive")
    n_sub = max(1, int(round(duration / h)))
    log = _TrajectoryLog("GF", config.seed, dataset.c_y, config.loss_power, dataset.n)
    for k in range(n_sub + 1):
        ln, grads, f = _loss_grad_outputs(
            params, dataset.inputs, dataset.targets, config.loss_power
        )
        log.see_outputs(f)
        ln_test = None
        if test_dataset is not None:
            ln_test, f_te = _batch_loss(
                params, test_dataset.inputs, test_dataset.targets, config.loss_power
            )
            log.see_outputs(f_te)
        log.log_state(h, ln, ln_test, params)
        log.guard(k, ln, params, time_step=h)
        if k == n_sub:
            break
        log.advance_cl()
        log.log_grads(grads)
        params = params.add_scaled(grads, -h)
    return log.build(params, time_step=h)


def estimate_c_f(params: Parameters, X: np.ndarray, margin: float = 1.1) -> float:
    """Working output-scale estimate: the observed max |f| times a margin."""
    return margin * float(np.max(np.abs(batch_outputs(params, X))))


def max_feasible_eta(
    init_norms: np.ndarray,
    spec: NetworkSpec,
    config: TrainConfig,
    c_f: float,
    c_y: float,
) -> float:
    """Largest base learning rate the norm-growth guarantee supports.

    Three ceilings apply per layer: the first keeps single-step moves below
    lam*||layer(0)||, the remaining two keep the accumulated schedule mass
    below the same budget.  alpha must exceed (L+1)/(L+2); alpha = 1 uses
    the epsilon-shifted form (default epsilon = 1/(L+1)).
    """
    L = spec.n_hidden
    if c_f <= 0 or c_y <= 0:
        raise ValueError("c_f and c_y must be positive")
    if not (0.0 < config.lam < LAMBDA_MAX):
        raise ValueError("lam must lie in (0, 1/sqrt(3))")
    if config.t0 < 1:
        raise ValueError("t0 must be >= 1")
    lo = (L + 1) / (L + 2)
    if not (lo < config.alpha <= 1.0):
        raise ValueError(f"alpha must lie in ({lo:.6g}, 1] for depth {L + 1}")
    lam, t0, alpha = config.lam, float(config.t0), config.alpha
    init_norms = np.asarray(init_norms, dtype=float)
    if init_norms.shape != (spec.n_layers,) or np.any(init_norms <= 0):
        raise ValueError("init_norms must hold a positive norm per layer")
    mp = 1.0 / spec.out_scale
    depth_gain = float(L) ** ((L - 1) / 2.0)
    lam_growth = (1.0 + 3.0 * lam * lam) ** (L / 2.0)
    best = math.inf
    for norm0 in init_norms:
        t1 = lam * mp * depth_gain / ((c_f + c_y) * norm0 ** (L - 1))
        if alpha == 1.0:
            eps = config.epsilon if config.epsilon is not None else 1.0 / (L + 1)
            t2 = 2.0 * (1.0 - eps) * lam * lam * norm0 * norm0 / (c_y * c_y * t0)
            t3 = (
                lam
                * mp
                * depth_gain
                * math.sqrt(eps)
                / ((c_f + c_y) * t0 ** ((1.0 + eps) / 2.0) * lam_growth * norm0 ** (L - 1))
            )
        else:
            gap = (L + 2) * alpha - (L + 1)
            t2 = 2.0 * (1.0 - alpha) * lam * lam * norm0 * norm0 / (c_y * c_y * t0)
            t3 = (
                lam
                * mp
                * depth_gain
                * math.sqrt(gap)
                / ((c_f + c_y) * t0 ** (((L + 2) * alpha - L) / 2.0) * lam_growth * norm0 ** (L - 1))
            )
        best = min(best, t1, t2, t3)
    return best


def train(
    spec: NetworkSpec,
    dataset,
    config: TrainConfig,
    test_dataset=None,
    sampler=None,
) -> Trajectory:
    """Initialize and run the configured algorithm, returning the full log.

    Logged losses are always full-data quantities, also under SGD; the
    minibatch only drives the update.  Raises DivergenceError (carrying the
    partial trajectory) if the loss exceeds 1e6 or turns non-finite.
    """
    config.validate(spec.n_hidden)
    params = init_gaussian(spec, config.kappa, config.seed)
    if config.algorithm == "GF":
        h = config.gf_substep if config.gf_substep is not None else config.eta / 100.0
        return gf_integrate(params, dataset, config.duration, h, config, test_dataset)

    sample_rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), 17]))
    noise_rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), 29]))
    log = _TrajectoryLog(
        config.algorithm, config.seed, dataset.c_y, config.loss_power, dataset.n
    )
    for t in range(config.total_steps + 1):
        eta_t = lr_schedule(t, config.eta, config.alpha, config.t0)
        if config.algorithm == "SGD":
            ln, f = _batch_loss(params, dataset.inputs, dataset.targets, config.loss_power)
            grads = None
        else:
            ln, grads, f = _loss_grad_outputs(
                params, dataset.inputs, dataset.targets, config.loss_power
            )
        log.see_outputs(f)
        ln_test = None
        if test_dataset is not None:
            ln_test, f_te = _batch_loss(
                params, test_dataset.inputs, test_dataset.targets, config.loss_power
            )
            log.see_outputs(f_te)
        log.log_state(eta_t, ln, ln_test, params)
        log.guard(t, ln, params)
        if t == config.total_steps:
            break
        log.advance_cl()
        if config.algorithm == "GD":
            log.log_grads(grads)
            params = params.add_scaled(grads, -eta_t)
        elif config.algorithm == "SGLD":
            log.log_grads(grads)
            params = params.add_scaled(grads, -eta_t)
            if config.beta != math.inf:
                scale = math.sqrt(2.0 * eta_t / config.beta)
                params = Parameters(
                    spec,
                    [w + noise_rng.normal(0.0, scale, size=w.shape) for w in params.layers],
                )
        else:  # SGD
            if sampler is None:
                idx = sample_rng.integers(0, dataset.n, size=config.batch)
            else:
                idx = sampler(sample_rng, dataset.n, config.batch)
            _, bgrads, _ = _loss_grad_outputs(
                params, dataset.inputs[idx], dataset.targets[idx], config.loss_power
            )
            log.log_grads(bgrads)
            params = params.add_scaled(bgrads, -eta_t)
    return log.build(params)
