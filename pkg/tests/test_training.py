"""Optimizers: schedules, hand-checked steps, flow accuracy, reproducibility."""

import math

import numpy as np
import pytest

from genbound.data import Dataset, synth_regression
from genbound.network import NetworkSpec, Parameters
from genbound.training import (
    DivergenceError,
    TrainConfig,
    all_indices_once,
    estimate_c_f,
    gd_step,
    gf_integrate,
    lr_schedule,
    max_feasible_eta,
    sgd_step,
    sgld_step,
    train,
)

from oracles import cl_resum, gf_closed_form


def _width_one_net():
    spec = NetworkSpec(input_dim=1, conv_kernels=(), fc_widths=(1,), output_width=1, norm_exponent=0.0)
    params = Parameters(spec, [np.array([[1.0]]), np.array([1.0])])
    ds = Dataset(np.array([[1.0]]), np.array([0.0]), c_y=0.5)
    return spec, params, ds


def test_lr_schedule_values():
    assert lr_schedule(0, 0.1, 1.0, 1) == pytest.approx(0.1)
    assert lr_schedule(5, 0.1, 0.8, 2) == pytest.approx(0.1 / 3.0**0.8)
    # flat within each window of length t0
    assert lr_schedule(0, 0.2, 0.9, 10) == lr_schedule(9, 0.2, 0.9, 10)
    assert lr_schedule(10, 0.2, 0.9, 10) == pytest.approx(0.2 / 2.0**0.9)
    with pytest.raises(ValueError):
        lr_schedule(-1, 0.1, 1.0, 1)


def test_gd_step_by_hand():
    # w = a = 1, x = 1, y = 0: f = 1, dL/dw = dL/da = 1, so one step at
    # eta = 0.1 lands both weights at 0.9
    _, params, ds = _width_one_net()
    cfg = TrainConfig(algorithm="GD", eta=0.1, alpha=1.0, t0=1)
    moved = gd_step(params, ds, 0, cfg)
    np.testing.assert_allclose(moved.layers[0], [[0.9]], atol=1e-15)
    np.testing.assert_allclose(moved.layers[1], [0.9], atol=1e-15)
    # second step uses eta_1 = eta/2 and the new gradient 0.9^3
    moved2 = gd_step(moved, ds, 1, cfg)
    np.testing.assert_allclose(moved2.layers[1], [0.9 - 0.05 * 0.9**3], atol=1e-15)


def test_gf_matches_closed_form():
    # both weights follow u(t) = (1+2t)^(-1/2) on this datum
    _, params, ds = _width_one_net()
    cfg = TrainConfig(algorithm="GF", eta=0.1, duration=1.0, gf_substep=1e-3)
    traj = gf_integrate(params, ds, 1.0, 1e-3, cfg)
    u_end = traj.final_params.layers[1][0]
    assert abs(u_end - gf_closed_form(1.0)) < 1e-3 * gf_closed_form(1.0)
    # intermediate rows track the flow too
    k = 500
    assert abs(math.sqrt(2 * traj.ln_train[k]) - gf_closed_form(0.5) ** 2) < 2e-3


def test_gf_substep_count_and_times():
    _, params, ds = _width_one_net()
    cfg = TrainConfig(algorithm="GF", eta=0.1, duration=0.05, gf_substep=0.01)
    traj = gf_integrate(params, ds, 0.05, 0.01, cfg)
    assert traj.steps.shape == (6,)
    np.testing.assert_allclose(traj.times, np.arange(6) * 0.01, atol=1e-15)
    np.testing.assert_allclose(traj.eta, np.full(6, 0.01), atol=1e-15)


def test_sgd_full_batch_sampler_equals_gd():
    spec = NetworkSpec(input_dim=3, conv_kernels=(), fc_widths=(8,), output_width=8, norm_exponent=0.5)
    ds = synth_regression(32, seed=0)
    cfg_gd = TrainConfig(algorithm="GD", eta=0.05, total_steps=30, seed=4)
    cfg_sgd = TrainConfig(algorithm="SGD", eta=0.05, batch=32, total_steps=30, seed=4)
    t_gd = train(spec, ds, cfg_gd)
    t_sgd = train(spec, ds, cfg_sgd, sampler=all_indices_once)
    np.testing.assert_array_equal(t_gd.ln_train, t_sgd.ln_train)
    for a, b in zip(t_gd.final_params.layers, t_sgd.final_params.layers):
        np.testing.assert_array_equal(a, b)


def test_sgld_infinite_beta_equals_gd():
    spec = NetworkSpec(input_dim=3, conv_kernels=(), fc_widths=(8,), output_width=8, norm_exponent=0.5)
    ds = synth_regression(32, seed=0)
    t_gd = train(spec, ds, TrainConfig(algorithm="GD", eta=0.05, total_steps=25, seed=1))
    t_sgld = train(
        spec, ds, TrainConfig(algorithm="SGLD", eta=0.05, beta=math.inf, total_steps=25, seed=1)
    )
    np.testing.assert_array_equal(t_gd.ln_train, t_sgld.ln_train)
    for a, b in zip(t_gd.final_params.layers, t_sgld.final_params.layers):
        np.testing.assert_array_equal(a, b)


def test_sgld_noise_scale():
    # the injected perturbation has per-coordinate variance 2*eta_t/beta
    _, params, ds = _width_one_net()
    beta, eta = 4.0, 0.1
    cfg = TrainConfig(algorithm="SGLD", eta=eta, beta=beta, total_steps=1)
    clean = gd_step(params, ds, 0, cfg)
    draws = np.empty(4000)
    for i in range(draws.shape[0]):
        rng = np.random.default_rng(1000 + i)
        noisy = sgld_step(params, ds, 0, cfg, rng)
        draws[i] = noisy.layers[1][0] - clean.layers[1][0]
    want_var = 2.0 * eta / beta
    assert abs(np.var(draws) - want_var) < 0.1 * want_var
    assert abs(np.mean(draws)) < 0.05


def test_sgd_step_returns_indices():
    spec = NetworkSpec(input_dim=3, conv_kernels=(), fc_widths=(4,), output_width=4, norm_exponent=0.5)
    ds = synth_regression(16, seed=2)
    params = Parameters(spec, [np.full((3, 4), 0.1), np.full(4, 0.1)])
    cfg = TrainConfig(algorithm="SGD", eta=0.01, batch=4)
    rng = np.random.default_rng(0)
    moved, idx = sgd_step(params, ds, 0, cfg, rng)
    assert idx.shape == (4,)
    assert np.all((0 <= idx) & (idx < 16))
    assert any(not np.array_equal(a, b) for a, b in zip(moved.layers, params.layers))


def test_cl_column_is_exclusive_prefix():
    spec = NetworkSpec(input_dim=3, conv_kernels=(), fc_widths=(8,), output_width=8, norm_exponent=0.5)
    ds = synth_regression(64, seed=3)
    traj = train(spec, ds, TrainConfig(algorithm="GD", eta=0.1, total_steps=40, seed=0))
    np.testing.assert_allclose(traj.cl, cl_resum(traj.eta, traj.psi), atol=1e-15)
    assert traj.cl[0] == 0.0


def test_trajectory_shapes_and_test_losses():
    spec = NetworkSpec(input_dim=3, conv_kernels=(), fc_widths=(8,), output_width=8, norm_exponent=0.5)
    ds = synth_regression(32, seed=0)
    ds_test = synth_regression(16, seed=5, split="test")
    traj = train(spec, ds, TrainConfig(algorithm="GD", eta=0.05, total_steps=10, seed=0), ds_test)
    assert traj.steps.shape == (11,)
    assert traj.normsq.shape == (11, 2)
    assert traj.gradsq.shape == (10, 2)
    assert traj.has_test and np.all(np.isfinite(traj.ln_test))
    assert traj.n_train == 32
    bare = train(spec, ds, TrainConfig(algorithm="GD", eta=0.05, total_steps=10, seed=0))
    assert not bare.has_test and np.all(np.isnan(bare.ln_test))
    np.testing.assert_array_equal(bare.ln_train, traj.ln_train)


def test_zero_steps_single_row():
    spec = NetworkSpec(input_dim=3, conv_kernels=(), fc_widths=(4,), output_width=4, norm_exponent=0.5)
    ds = synth_regression(8, seed=0)
    traj = train(spec, ds, TrainConfig(algorithm="GD", eta=0.1, total_steps=0, seed=0))
    assert traj.steps.shape == (1,)
    assert traj.cl[0] == 0.0
    assert traj.gradsq.shape == (0, 2)


def test_deterministic_reruns():
    spec = NetworkSpec(input_dim=3, conv_kernels=(), fc_widths=(8,), output_width=8, norm_exponent=0.5)
    ds = synth_regression(32, seed=0)
    cfg = TrainConfig(algorithm="SGLD", eta=0.05, beta=50.0, total_steps=20, seed=7)
    a = train(spec, ds, cfg)
    b = train(spec, ds, cfg)
    np.testing.assert_array_equal(a.ln_train, b.ln_train)
    for la, lb in zip(a.final_params.layers, b.final_params.layers):
        np.testing.assert_array_equal(la, lb)
    c = train(spec, ds, TrainConfig(algorithm="SGLD", eta=0.05, beta=50.0, total_steps=20, seed=8))
    assert not np.array_equal(a.final_params.layers[0], c.final_params.layers[0])


def test_divergence_guard():
    spec = NetworkSpec(input_dim=3, conv_kernels=(), fc_widths=(16, 16), output_width=16, norm_exponent=0.0)
    ds = synth_regression(16, seed=0)
    cfg = TrainConfig(algorithm="GD", eta=1e5, total_steps=400, seed=0, kappa=4.0)
    with pytest.raises(DivergenceError) as info:
        train(spec, ds, cfg)
    err = info.value
    assert err.trajectory.diverged_at == err.step
    assert err.trajectory.ln_train.shape[0] == err.step + 1
    assert err.trajectory.ln_train[-1] > 1e6 or not math.isfinite(err.trajectory.ln_train[-1])


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(algorithm="ADAM").validate()
    with pytest.raises(ValueError):
        TrainConfig(eta=-0.1).validate()
    with pytest.raises(ValueError):
        TrainConfig(alpha=1.2).validate()
    with pytest.raises(ValueError):
        TrainConfig(alpha=0.0).validate()
    with pytest.raises(ValueError):
        TrainConfig(algorithm="SGLD", beta=None).validate()
    with pytest.raises(ValueError):
        TrainConfig(algorithm="GF", duration=None).validate()
    with pytest.raises(ValueError):
        TrainConfig(lam=0.7).validate()
    TrainConfig(algorithm="SGLD", beta=math.inf).validate()


def test_alpha_range_warning_only():
    # small alpha is allowed but flagged for GD at depth 3
    with pytest.warns(UserWarning):
        TrainConfig(algorithm="GD", alpha=0.67).validate(n_hidden=2)
    # fine at depth 2 where the cutoff is 2/3
    TrainConfig(algorithm="GD", alpha=0.8).validate(n_hidden=1)


def test_max_feasible_eta_hand_values():
    # L=1, lam=1/2, m^p=2, norms (2,3), c_f=0.3, c_y=0.5, t0=1, eps=1/2:
    # the schedule-mass ceiling 0.5*2*sqrt(.5)/(0.8*sqrt(1.75)) binds
    spec = NetworkSpec(input_dim=3, conv_kernels=(), fc_widths=(4,), output_width=4, norm_exponent=0.5)
    cfg = TrainConfig(algorithm="GD", alpha=1.0, t0=1, lam=0.5, epsilon=0.5)
    got = max_feasible_eta(np.array([2.0, 3.0]), spec, cfg, c_f=0.3, c_y=0.5)
    np.testing.assert_allclose(got, 0.6681531047810609, rtol=1e-12)
    # alpha=0.9, t0=4: the decay-mass ceiling 2(1-alpha)lam^2 norm^2/(c_y^2 t0)
    cfg2 = TrainConfig(algorithm="GD", alpha=0.9, t0=4, lam=0.5)
    got2 = max_feasible_eta(np.array([2.0, 3.0]), spec, cfg2, c_f=0.3, c_y=0.5)
    np.testing.assert_allclose(got2, 0.19999999999999996, rtol=1e-12)


def test_max_feasible_eta_monotone():
    spec = NetworkSpec(input_dim=3, conv_kernels=(), fc_widths=(4,), output_width=4, norm_exponent=0.5)
    cfg = TrainConfig(algorithm="GD", alpha=1.0, t0=1, lam=0.5)
    norms = np.array([1.5, 2.5])
    base = max_feasible_eta(norms, spec, cfg, c_f=0.2, c_y=0.5)
    assert max_feasible_eta(norms, spec, cfg, c_f=0.4, c_y=0.5) <= base
    slower = TrainConfig(algorithm="GD", alpha=1.0, t0=10, lam=0.5)
    assert max_feasible_eta(norms, spec, slower, c_f=0.2, c_y=0.5) <= base


def test_max_feasible_eta_alpha_range():
    spec = NetworkSpec(input_dim=3, conv_kernels=(), fc_widths=(4, 4), output_width=4, norm_exponent=0.5)
    cfg = TrainConfig(algorithm="GD", alpha=0.7, t0=1, lam=0.5)  # cutoff is 3/4 at L=2
    with pytest.raises(ValueError):
        max_feasible_eta(np.array([1.0, 1.0, 1.0]), spec, cfg, c_f=0.2, c_y=0.5)


def test_estimate_c_f():
    _, params, ds = _width_one_net()
    assert estimate_c_f(params, ds.inputs) == pytest.approx(1.1)
