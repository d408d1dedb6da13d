"""Numerical verification of the identities behind the bound machinery.

Each check draws seeded random instances, measures the worst violation in
relative units (violation / (1 + |reference|)), and passes iff that stays
within its tolerance.  The suite registry at the bottom groups the checks
into named batteries for the command-line `verify` entry point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounds import psi, rademacher_constant
from .data import Dataset, synth_regression
from .network import (
    NetworkSpec,
    Parameters,
    batch_outputs,
    forward,
    grad_f,
    loss_and_grad,
)
from .training import TrainConfig, Trajectory, estimate_c_f, max_feasible_eta, train

__all__ = [
    "CheckOutcome",
    "check_homogeneity",
    "check_value_grad_bounds",
    "aligned_rank_one_witness",
    "finite_diff_grad",
    "init_concentration_test",
    "check_norm_dynamics",
    "mc_rademacher_lower",
    "exhaustive_rademacher_tiny",
    "check_loss_decomposition",
    "random_fnn_spec",
    "random_cnn_spec",
    "random_params",
    "random_ball_points",
    "sample_kink_free",
    "SUITE_NAMES",
    "run_suites",
]


@dataclass
class CheckOutcome:
    """Result of one check battery; passes iff the violation is in budget."""

    name: str
    instances: int
    max_violation: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.max_violation <= self.tolerance)

    def to_dict(self) -> dict:
        # builtin scalars only: numpy bools/ints are not JSON serializable
        return {
            "name": self.name,
            "instances": int(self.instances),
            "max_violation": float(self.max_violation),
            "tolerance": float(self.tolerance),
            "passed": self.passed,
            "detail": self.detail,
        }


def _rel(violation: float, reference: float) -> float:
    return violation / (1.0 + abs(reference))


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *key]))


# ---------------------------------------------------------------------------
# Random instances


def random_fnn_spec(rng, max_width: int = 64, depth_range=(2, 5)) -> NetworkSpec:
    """Random fully-connected spec with total depth in depth_range."""
    depth = int(rng.integers(depth_range[0], depth_range[1] + 1))
    d = int(rng.integers(2, 7))
    widths = [int(rng.integers(1, max_width + 1)) for _ in range(depth - 1)]
    return NetworkSpec(d, (), tuple(widths), widths[-1], float(rng.uniform(0.0, 1.0)))


def random_cnn_spec(rng, max_fc_width: int = 16) -> NetworkSpec:
    """Random conv spec built inside-out so the widths always chain."""
    n_conv = int(rng.integers(1, 3))
    width = int(rng.integers(2, 5))  # pooled width after the last conv
    d = width
    kernels = []
    for _ in range(n_conv):
        s = int(rng.integers(2, 4))
        kernels.append(s)
        d = d * s + s - 1  # widths chain as m_in = m_out*s + s - 1
    kernels.reverse()
    fc = [int(rng.integers(1, max_fc_width + 1)) for _ in range(int(rng.integers(0, 3)))]
    out = fc[-1] if fc else width
    return NetworkSpec(d, tuple(kernels), tuple(fc), out, float(rng.uniform(0.0, 1.0)))


def random_params(spec: NetworkSpec, rng, kappa: float | None = None) -> Parameters:
    """Layerwise Gaussian draw with E||layer||^2 = kappa^2."""
    if kappa is None:
        kappa = float(rng.uniform(0.5, 2.0))
    layers = []
    for shape in spec.layer_shapes():
        q = int(np.prod(shape))
        layers.append(rng.normal(0.0, kappa / math.sqrt(q), size=shape))
    return Parameters(spec, layers)


def random_ball_points(rng, n: int, d: int) -> np.ndarray:
    """n points uniform in the d-dimensional unit ball."""
    g = rng.normal(size=(n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.uniform(size=(n, 1)) ** (1.0 / d)
    return g * r


def sample_kink_free(params: Parameters, rng, margin: float, max_tries: int = 500):
    """Input in the unit ball whose pre-activations all clear `margin`."""
    d = params.spec.input_dim
    for _ in range(max_tries):
        x = random_ball_points(rng, 1, d)[0]
        trace = forward(params, x)
        if trace.kink_margin() >= margin:
            return x, trace
    raise RuntimeError(f"no kink-free input found within {max_tries} tries")


# ---------------------------------------------------------------------------
# Identities and inequalities


def check_homogeneity(
    spec: NetworkSpec, trials: int, seed: int, grad_perturb: float = 0.0
) -> CheckOutcome:
    """<layer, d f/d layer> = f per layer and <theta, grad f> = (L+1) f.

    grad_perturb shifts one gradient entry and exists so callers can prove
    the check is able to fail.
    """
    worst = 0.0
    L1 = spec.n_layers
    for i in range(trials):
        rng = _rng(seed, i)
        params = random_params(spec, rng)
        x = random_ball_points(rng, 1, spec.input_dim)[0]
        f = forward(params, x).f
        grads = grad_f(params, x)
        if grad_perturb:
            grads[0].ravel()[0] += grad_perturb
        total = 0.0
        for W, g in zip(params.layers, grads):
            dot = float(np.sum(W * g))
            total += dot
            worst = max(worst, _rel(abs(dot - f), f))
        worst = max(worst, _rel(abs(total - L1 * f), L1 * f))
    return CheckOutcome("homogeneity", trials, worst, 1e-9)


def check_value_grad_bounds(spec: NetworkSpec, trials: int, seed: int) -> CheckOutcome:
    """Norm-product ceilings on |f| and on each layer gradient.

    |f| <= (1/m^p) prod_l ||layer_l|| ||x||
        <= (1/m^p) ||theta||^(L+1) ||x|| / (L+1)^((L+1)/2), and
    ||d f/d layer_l|| <= (1/m^p) prod_{i != l} ||layer_i|| ||x||
        <= (1/m^p) ||theta||^L ||x|| / L^(L/2).
    """
    worst = -math.inf
    L = spec.n_hidden
    for i in range(trials):
        rng = _rng(seed, i)
        params = random_params(spec, rng)
        x = random_ball_points(rng, 1, spec.input_dim)[0]
        xn = float(np.linalg.norm(x))
        f = forward(params, x).f
        grads = grad_f(params, x)
        norms = params.norms()
        total = float(np.sqrt(np.sum(norms**2)))
        scale = spec.out_scale
        prod_all = float(np.prod(norms))
        val_mid = scale * prod_all * xn
        val_top = scale * total ** (L + 1) * xn / (L + 1) ** ((L + 1) / 2.0)
        worst = max(worst, _rel(abs(f) - val_mid, val_mid), _rel(val_mid - val_top, val_top))
        for l, g in enumerate(grads):
            gn = float(np.linalg.norm(g.ravel()))
            others = prod_all / norms[l] if norms[l] > 0 else float(
                np.prod(np.delete(norms, l))
            )
            g_mid = scale * others * xn
            g_top = scale * total**L * xn / L ** (L / 2.0)
            worst = max(worst, _rel(gn - g_mid, g_mid), _rel(g_mid - g_top, g_top))
    return CheckOutcome("value-grad-bounds", trials, worst, 1e-12)


def aligned_rank_one_witness(input_dim: int, width: int, seed: int) -> CheckOutcome:
    """Rank-1 aligned single-hidden-layer net meeting the value bound exactly.

    With A = c1 u v^T (u, v unit, v >= 0), a = c2 v and x = u, the output
    is (1/m^p) c1 c2 = (1/m^p) ||A|| ||a|| ||x||.
    """
    rng = _rng(seed)
    spec = NetworkSpec(input_dim, (), (width,), width, float(rng.uniform(0.0, 1.0)))
    u = rng.normal(size=input_dim)
    u /= np.linalg.norm(u)
    v = np.abs(rng.normal(size=width))
    v /= np.linalg.norm(v)
    c1, c2 = float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.5, 2.0))
    params = Parameters(spec, [c1 * np.outer(u, v), c2 * v])
    f = forward(params, u).f
    target = spec.out_scale * c1 * c2
    return CheckOutcome("value-bound-witness", 1, _rel(abs(f - target), target), 1e-9)


def finite_diff_grad(params: Parameters, x: np.ndarray, h: float) -> list[np.ndarray]:
    """Central finite differences of the output in every parameter."""
    if h <= 0:
        raise ValueError("h must be positive")
    grads = []
    for W in params.layers:
        g = np.empty_like(W)
        flat_w = W.ravel()
        flat_g = g.ravel()
        for i in range(flat_w.size):
            orig = flat_w[i]
            flat_w[i] = orig + h
            f_plus = forward(params, x).f
            flat_w[i] = orig - h
            f_minus = forward(params, x).f
            flat_w[i] = orig
            flat_g[i] = (f_plus - f_minus) / (2.0 * h)
        grads.append(g)
    return grads


def init_concentration_test(
    spec: NetworkSpec, kappa: float, delta: float, draws: int, seed: int
) -> CheckOutcome:
    """Empirical tail of ||layer(0)||^2 against its Bernstein threshold.

    Threshold: kappa^2 (1 + max(4 log(1/delta)/q, sqrt(8 log(1/delta)/q))).
    Passes when every layer's violation frequency stays within delta plus
    three binomial standard errors.
    """
    if draws < 1000:
        raise ValueError("need at least 1000 draws for a meaningful frequency")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    logd = math.log(1.0 / delta)
    tol = 3.0 * math.sqrt(delta * (1.0 - delta) / draws)
    worst = -math.inf
    details = []
    for li, q in enumerate(spec.layer_sizes()):
        rng = _rng(seed, li)
        threshold = kappa * kappa * (1.0 + max(4.0 * logd / q, math.sqrt(8.0 * logd / q)))
        sigma = kappa / math.sqrt(q)
        exceed = 0
        remaining = draws
        chunk = max(1, int(2e7) // q)
        while remaining > 0:
            rows = min(chunk, remaining)
            sq = rng.normal(0.0, sigma, size=(rows, q))
            exceed += int(np.sum(np.einsum("ij,ij->i", sq, sq) > threshold))
            remaining -= rows
        freq = exceed / draws
        details.append(f"q={q}:{freq:.4g}")
        worst = max(worst, freq - delta)
    return CheckOutcome(
        f"init-concentration-delta={delta}", draws * spec.n_layers, worst, tol,
        detail=" ".join(details),
    )


def check_norm_dynamics(traj: Trajectory, lam: float) -> CheckOutcome:
    """Layer norms stay within the invariant the step-size budget promises.

    Discrete runs: ||layer(t)||^2 <= (1 + 2 lam^2) ||layer(0)||^2 + CL(t)
    at every logged step.  Gradient flow: each Euler substep obeys
    delta ||layer||^2 <= 2 h psi(t) + h^2 ||grad_layer||^2 exactly.
    """
    worst = -math.inf
    if traj.algorithm == "GF":
        h = float(traj.eta[0])
        for k in range(traj.gradsq.shape[0]):
            allowed = 2.0 * h * traj.psi[k] + h * h * traj.gradsq[k]
            inc = traj.normsq[k + 1] - traj.normsq[k]
            for l in range(traj.normsq.shape[1]):
                worst = max(worst, _rel(inc[l] - allowed[l], allowed[l]))
        count = traj.gradsq.shape[0] * traj.normsq.shape[1]
        return CheckOutcome("norm-dynamics-gf", count, worst, 1e-9)
    base = (1.0 + 2.0 * lam * lam) * traj.normsq[0]
    for k in range(traj.normsq.shape[0]):
        rhs = base + traj.cl[k]
        for l in range(traj.normsq.shape[1]):
            worst = max(worst, _rel(traj.normsq[k, l] - rhs[l], rhs[l]))
    count = traj.normsq.shape[0] * traj.normsq.shape[1]
    return CheckOutcome("norm-dynamics", count, worst, 1e-9)


def mc_rademacher_lower(
    spec: NetworkSpec,
    Q: np.ndarray,
    X: np.ndarray,
    hyp_samples: int,
    sigma_samples: int,
    seed: int,
) -> tuple[float, float]:
    """Monte-Carlo lower estimate of the empirical Rademacher complexity.

    Hypotheses are Gaussian draws rescaled so every layer sits exactly on
    its radius Q_l; the estimate averages max over hypotheses of the
    sign-weighted output sum.  Returns (estimate, closed-form upper bound).
    """
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (spec.n_layers,) or np.any(Q <= 0):
        raise ValueError("Q must hold a positive radius per layer")
    n = X.shape[0]
    rng = _rng(seed)
    F = np.empty((hyp_samples, n))
    for hi in range(hyp_samples):
        params = random_params(spec, rng, kappa=1.0)
        layers = []
        for W, radius in zip(params.layers, Q):
            norm = float(np.linalg.norm(W.ravel()))
            layers.append(W * (radius / norm))
        F[hi] = batch_outputs(Parameters(spec, layers), X)
    sigma = rng.choice([-1.0, 1.0], size=(sigma_samples, n))
    estimate = float(np.mean(np.max(sigma @ F.T, axis=1))) / n
    upper = (
        rademacher_constant(spec.n_hidden, spec.input_dim, spec.kind)
        * spec.out_scale
        / math.sqrt(n)
        * float(np.prod(Q))
    )
    return estimate, upper


def exhaustive_rademacher_tiny(q1: float, q2: float, grid: int = 4096) -> tuple[float, float]:
    """Exact tiny case: one hidden unit on two planar points, all signs.

    The hypothesis ball is swept densely (direction grid times readout
    sign), the two Rademacher sign vectors are enumerated exhaustively.
    """
    spec = NetworkSpec(2, (), (1,), 1, 0.0)
    X = np.array([[0.6, -0.2], [-0.3, 0.7]])
    thetas = np.linspace(0.0, 2.0 * math.pi, grid, endpoint=False)
    dirs = np.stack([np.cos(thetas), np.sin(thetas)], axis=1)
    pre = X @ dirs.T * q1  # (2, grid)
    acts = np.maximum(pre, 0.0)
    outs = np.concatenate([q2 * acts, -q2 * acts], axis=1)  # both readout signs
    total = 0.0
    for s1 in (-1.0, 1.0):
        for s2 in (-1.0, 1.0):
            total += np.max(s1 * outs[0] + s2 * outs[1])
    estimate = total / 4.0 / 2.0
    upper = rademacher_constant(1, 2, "FNN") / math.sqrt(2.0) * q1 * q2
    return float(estimate), float(upper)


def check_loss_decomposition(params: Parameters, dataset: Dataset) -> CheckOutcome:
    """Descent-rate decomposition under the quadratic loss.

    Identity: -(2/n) sum (f - y) f = -4 L_n - (2/n) sum (f - y) y, and per
    layer -2 <layer, d L_n/d layer> <= 2 psi(L_n).
    """
    f = batch_outputs(params, dataset.inputs)
    y = dataset.targets
    n = dataset.n
    res = f - y
    ln = 0.5 * float(res @ res) / n
    lhs = -2.0 * float(res @ f) / n
    rhs = -4.0 * ln - 2.0 * float(res @ y) / n
    worst = _rel(abs(lhs - rhs), rhs)
    _, grads = loss_and_grad(params, dataset.inputs, y, 2)
    cap = 2.0 * psi(ln, dataset.c_y)
    for W, g in zip(params.layers, grads):
        descent = -2.0 * float(np.sum(W * g))
        worst = max(worst, _rel(descent - cap, cap))
    return CheckOutcome("loss-decomposition", 1 + len(grads), worst, 1e-10)


# ---------------------------------------------------------------------------
# Suites


def _merge(name: str, outcomes: list[CheckOutcome]) -> CheckOutcome:
    return CheckOutcome(
        name,
        sum(o.instances for o in outcomes),
        max(o.max_violation for o in outcomes),
        min(o.tolerance for o in outcomes),
    )


def _suite_homogeneity(seed: int, inject_bug: bool = False) -> list[CheckOutcome]:
    perturb = 1e-3 if inject_bug else 0.0
    rng = _rng(seed, 1000)
    fnn = [
        check_homogeneity(random_fnn_spec(rng), 25, seed + i, perturb) for i in range(20)
    ]
    cnn = [
        check_homogeneity(random_cnn_spec(rng), 25, seed + 100 + i, perturb)
        for i in range(20)
    ]
    return [_merge("homogeneity-fnn", fnn), _merge("homogeneity-cnn", cnn)]


def _suite_value_bounds(seed: int, inject_bug: bool = False) -> list[CheckOutcome]:
    rng = _rng(seed, 2000)
    outs = [check_value_grad_bounds(random_fnn_spec(rng), 25, seed + i) for i in range(20)]
    outs += [
        check_value_grad_bounds(random_cnn_spec(rng), 25, seed + 100 + i) for i in range(20)
    ]
    return [_merge("value-grad-bounds", outs), aligned_rank_one_witness(6, 5, seed)]


def _suite_init_concentration(seed: int, inject_bug: bool = False) -> list[CheckOutcome]:
    spec = NetworkSpec(1, (), (16, 256), 256, 0.5)  # layer sizes 16, 4096, 256
    return [
        init_concentration_test(spec, 1.5, delta, 10_000, seed) for delta in (0.1, 0.01)
    ]


def _suite_norm_dynamics(seed: int, inject_bug: bool = False) -> list[CheckOutcome]:
    ds = synth_regression(256, seed)
    spec = NetworkSpec(3, (), (32, 32), 32, math.log(4.0) / math.log(32.0))
    cfg = TrainConfig(algorithm="GD", alpha=1.0, t0=1, total_steps=150, seed=seed, kappa=2.0)
    from .network import init_gaussian

    params0 = init_gaussian(spec, cfg.kappa, cfg.seed)
    c_f = estimate_c_f(params0, ds.inputs)
    cfg.eta = max_feasible_eta(params0.norms(), spec, cfg, c_f, ds.c_y)
    gd = check_norm_dynamics(train(spec, ds, cfg), cfg.lam)
    gf_cfg = TrainConfig(
        algorithm="GF", duration=0.3, gf_substep=0.003, seed=seed, kappa=1.5
    )
    gf_spec = NetworkSpec(3, (), (16,), 16, 0.5)
    gf = check_norm_dynamics(train(gf_spec, synth_regression(128, seed + 1), gf_cfg), 0.5)
    return [gd, gf]


def _suite_rademacher(seed: int, inject_bug: bool = False) -> list[CheckOutcome]:
    rng = _rng(seed, 3000)
    specs = [
        NetworkSpec(4, (), (8,), 8, 0.5),
        NetworkSpec(4, (1,), (4,), 4, 0.5),
        NetworkSpec(11, (3,), (6,), 6, 0.5),
    ]
    outs = []
    for si, spec in enumerate(specs):
        X = random_ball_points(rng, 8, spec.input_dim)
        worst = -math.inf
        for qi in range(6):
            Q = rng.uniform(0.5, 2.0, size=spec.n_layers)
            est, upper = mc_rademacher_lower(spec, Q, X, 200, 200, seed + 10 * si + qi)
            worst = max(worst, _rel(est - upper, upper))
        outs.append(CheckOutcome(f"rademacher-mc-{spec.kind.lower()}-{si}", 6, worst, 1e-12))
    est, upper = exhaustive_rademacher_tiny(1.3, 0.8)
    outs.append(CheckOutcome("rademacher-exhaustive", 1, _rel(est - upper, upper), 1e-12))
    return outs


def _suite_loss_decomposition(seed: int, inject_bug: bool = False) -> list[CheckOutcome]:
    rng = _rng(seed, 4000)
    outs = []
    for i in range(40):
        spec = random_fnn_spec(rng) if i % 2 == 0 else random_cnn_spec(rng)
        params = random_params(spec, rng)
        c_y = float(rng.uniform(0.1, 1.0))
        X = random_ball_points(rng, 16, spec.input_dim)
        y = rng.uniform(-c_y, c_y, size=16)
        outs.append(check_loss_decomposition(params, Dataset(X, y, c_y)))
    return [_merge("loss-decomposition", outs)]


SUITES = {
    "homogeneity": _suite_homogeneity,
    "value-bounds": _suite_value_bounds,
    "init-concentration": _suite_init_concentration,
    "norm-dynamics": _suite_norm_dynamics,
    "rademacher": _suite_rademacher,
    "loss-decomposition": _suite_loss_decomposition,
}

SUITE_NAMES = tuple(SUITES)


def run_suites(names, seed: int = 0, inject_bug: bool = False) -> list[CheckOutcome]:
    """Run the named suites (all of them by default) and pool the outcomes."""
    if not names:
        names = SUITE_NAMES
    outcomes = []
    for name in names:
        if name not in SUITES:
            raise ValueError(f"unknown suite '{name}'; choose from {', '.join(SUITE_NAMES)}")
        outcomes.extend(SUITES[name](seed, inject_bug))
    return outcomes
