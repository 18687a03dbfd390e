import math
from dataclasses import replace

import numpy as np
import pytest

from stochnls import spectral
from stochnls._validation import NumericalAbort, ParameterError
from stochnls.integrator import (
    IntegratorConfig,
    linear_damped_noise_step,
    nonlinear_step,
    run,
    run_ensemble,
    step,
)
from stochnls.rng import noise_increment


def _setup(n=8, m=None, gamma=0.5, alpha=-1, hs=1.0):
    basis = spectral.build_basis(math.pi, n, m)
    params = spectral.ModelParams(1.0, alpha, 1.0, gamma)
    noise = spectral.NoiseOperator.flat(n, n, hs_norm_sq=hs) if hs else spectral.NoiseOperator.zeros(n)
    return basis, params, noise


def _init(n, size, scale=0.5, seed=0):
    rng = np.random.default_rng(seed)
    return scale * (rng.standard_normal((size, n)) + 1j * rng.standard_normal((size, n))) / np.arange(1, n + 1)


@pytest.mark.parametrize("scheme,m", [("strang_split", None), ("lie_split", None), ("strang_split", 13)])
def test_kernel_matches_reference_steps(scheme, m):
    basis, params, noise = _setup(8, m)
    cfg = IntegratorConfig(dt=0.01, scheme=scheme, seed=3, record_every=7)
    init = _init(8, 3)
    batch = run_ensemble(init, 0.3, basis, params, noise, cfg, trajectory_ids=[4, 0, 9])
    for row, tid in enumerate([4, 0, 9]):
        c = init[row]
        for k in range(30):
            c = step(c, basis, params, noise, cfg, k, tid)
        np.testing.assert_allclose(batch.final_state[row], c, rtol=0, atol=1e-12)


def test_damping_envelope_without_noise():
    basis, params, noise = _setup(8, hs=0)
    init = _init(8, 2)
    batch = run_ensemble(init, 2.0, basis, params, noise, IntegratorConfig(dt=0.01, record_every=20))
    s = batch.series
    expected = spectral.mass(init)[:, None] * np.exp(-2 * params.gamma * s.times)
    np.testing.assert_allclose(s.mass, expected, rtol=1e-12)


def test_deterministic_flow_conserves_mass():
    basis, params, noise = _setup(16, gamma=0.0, hs=0, alpha=1)
    init = _init(16, 2, scale=1.0)
    s = run_ensemble(init, 5.0, basis, params, noise, IntegratorConfig(dt=1e-3, record_every=500)).series
    assert np.max(np.abs(s.mass - s.mass[:, :1])) <= 1e-11


def test_single_mode_rotates_at_constant_modulus():
    basis, params, noise = _setup(1, m=1, gamma=0.0, hs=0)
    c0 = np.array([0.3 + 0.4j])
    out = run(c0, 1.0, basis, params, noise, IntegratorConfig(dt=0.01))
    assert np.allclose(out.mass, 0.25, rtol=1e-14)
    # on one node the flow is the exact rotation by lambda + |u(x_1)|^2 (2/pi sin^2(pi/2))
    u_sq = 0.25 * (2 / math.pi)
    rot = run_ensemble(c0[None], 1.0, basis, params, noise, IntegratorConfig(dt=0.01)).final_state[0, 0]
    assert rot == pytest.approx(c0[0] * np.exp(1j * (1.0 + u_sq)), abs=1e-12)


def test_results_do_not_depend_on_batching_or_threads():
    basis, params, noise = _setup(8)
    init = np.zeros((10, 8))
    cfg = IntegratorConfig(dt=0.01, seed=5, record_every=10)
    a = run_ensemble(init, 0.5, basis, params, noise, cfg)
    b = run_ensemble(init, 0.5, basis, params, noise, replace(cfg, batch_size=3), threads=2)
    c = run_ensemble(init, 0.5, basis, params, noise, replace(cfg, batch_size=3), threads=1)
    np.testing.assert_allclose(a.final_state, b.final_state, rtol=0, atol=1e-13)
    np.testing.assert_array_equal(b.final_state, c.final_state)
    np.testing.assert_array_equal(b.series.mass, c.series.mass)


def test_trajectory_subset_is_reproducible():
    basis, params, noise = _setup(8)
    cfg = IntegratorConfig(dt=0.01, seed=11)
    full = run_ensemble(np.zeros((6, 8)), 0.4, basis, params, noise, cfg)
    part = run_ensemble(np.zeros((2, 8)), 0.4, basis, params, noise, cfg, trajectory_ids=[5, 2])
    np.testing.assert_allclose(part.final_state, full.final_state[[5, 2]], rtol=0, atol=1e-13)
    other = run_ensemble(np.zeros((6, 8)), 0.4, basis, params, noise, replace(cfg, seed=12))
    assert not np.allclose(other.final_state, full.final_state)


def test_non_finite_state_aborts():
    basis, params, noise = _setup(4)
    init = np.zeros((3, 4), complex)
    init[1, 0] = np.nan
    with pytest.raises(NumericalAbort) as info:
        run_ensemble(init, 0.1, basis, params, noise, IntegratorConfig(dt=0.01))
    assert list(info.value.trajectories) == [1]


def test_forcing_without_damping_is_rejected():
    basis, params, noise = _setup(4, gamma=0.0)
    with pytest.raises(ParameterError):
        run_ensemble(np.zeros((1, 4)), 0.1, basis, params, noise, IntegratorConfig())


@pytest.mark.parametrize("kwargs", [dict(dt=0.0), dict(scheme="rk4"), dict(seed=2**64), dict(seed=-1),
                                    dict(record_every=0), dict(batch_size=0)])
def test_config_validation(kwargs):
    with pytest.raises(ParameterError):
        IntegratorConfig(**kwargs)


def test_run_argument_validation():
    basis, params, noise = _setup(4)
    cfg = IntegratorConfig(dt=0.01)
    with pytest.raises(ParameterError):
        run_ensemble(np.zeros((2, 5)), 0.1, basis, params, noise, cfg)
    with pytest.raises(ParameterError):
        run_ensemble(np.zeros((2, 4)), 0.1, basis, params, noise, cfg, trajectory_ids=[0])
    with pytest.raises(ParameterError):
        run_ensemble(np.zeros((2, 4)), 0.001, basis, params, noise, cfg)


def _deterministic_error(scheme, dt, ref, init, basis, params, noise):
    out = run_ensemble(init, 1.0, basis, params, noise, IntegratorConfig(dt=dt, scheme=scheme)).final_state
    return np.max(np.abs(out - ref))


def test_splitting_orders():
    basis, params, noise = _setup(16, gamma=0.0, hs=0, alpha=1)
    init = _init(16, 1, scale=1.5, seed=2)
    ref = run_ensemble(init, 1.0, basis, params, noise, IntegratorConfig(dt=1e-5)).final_state
    strang = [_deterministic_error("strang_split", dt, ref, init, basis, params, noise) for dt in (2e-3, 1e-3)]
    lie = [_deterministic_error("lie_split", dt, ref, init, basis, params, noise) for dt in (2e-3, 1e-3)]
    assert 3.5 <= strang[0] / strang[1] <= 4.5
    assert 1.7 <= lie[0] / lie[1] <= 2.3


def test_residual_matches_manual_accumulation():
    basis, params, noise = _setup(6, gamma=0.7)
    cfg = IntegratorConfig(dt=0.02, seed=9, record_every=25)
    batch = run_ensemble(np.zeros((1, 6)), 0.5, basis, params, noise, cfg, trajectory_ids=[3])
    dt, g = cfg.dt, params.gamma
    amp = math.sqrt(g * dt) * noise.phi_plus
    c = np.zeros(6, complex)
    integral = np.zeros(6, complex)
    forcing = np.zeros(6, complex)
    for k in range(25):
        inc = noise_increment(cfg.seed, 3, k, 6)
        c = nonlinear_step(c, basis, params, dt / 2)
        integral += dt * c
        forcing += amp * inc.gauss_plus + 1j * amp * inc.gauss_minus
        c = linear_damped_noise_step(c, basis, params, noise, inc, dt)
        c = nonlinear_step(c, basis, params, dt / 2)
    expected = np.linalg.norm(g * integral - forcing)
    assert batch.series.residual_h[0, -1] == pytest.approx(expected, rel=1e-11)
    assert batch.series.residual_h[0, 0] == 0.0


def test_windowed_residuals_restart():
    basis, params, noise = _setup(6)
    cfg = IntegratorConfig(dt=0.01, seed=1)
    batch = run_ensemble(np.zeros((4, 6)), 1.0, basis, params, noise, cfg, window_start=0.2, window=0.2)
    assert batch.window_residuals.shape == (4, 4)
    assert np.all(batch.window_noise_sq > 0)
    whole = run_ensemble(np.zeros((4, 6)), 1.0, basis, params, noise, cfg, window_start=0.0, window=1.0)
    np.testing.assert_allclose(whole.window_residuals[:, 0], whole.series.residual_h[:, -1], rtol=1e-14)


@pytest.mark.parametrize("exact_ou", [False, True])
def test_linear_mode_variance(exact_ou):
    # E|c_j(t)|^2 from zero has a closed form for both noise samplers
    n, g, dt, T = 4, 0.8, 0.05, 1.0
    basis, params, noise = _setup(n, gamma=g, hs=2.0)
    cfg = IntegratorConfig(dt=dt, seed=21, exact_ou=exact_ou, batch_size=512)
    n_traj = 4000
    batch = run_ensemble(np.zeros((n_traj, n)), T, basis, params, noise, cfg, nonlinear=False, residual=False)
    var = noise.mode_variance
    if exact_ou:
        expected = var * (-math.expm1(-2 * g * T)) / 2
    else:
        expected = var * g * dt * (-math.expm1(-2 * g * T)) / (-math.expm1(-2 * g * dt))
    power = np.abs(batch.final_state) ** 2
    se = power.std(axis=0, ddof=1) / math.sqrt(n_traj)
    assert np.all(np.abs(power.mean(axis=0) - expected) <= 4 * se)


def test_exact_ou_needs_isotropic_noise():
    basis = spectral.build_basis(math.pi, 2)
    params = spectral.ModelParams(1.0, -1, 1.0, 0.5)
    noise = spectral.NoiseOperator(np.array([1.0, 0.5]), np.array([0.5, 0.5]))
    with pytest.raises(ParameterError):
        run_ensemble(np.zeros((1, 2)), 0.1, basis, params, noise, IntegratorConfig(dt=0.01, exact_ou=True))


def test_constant_modulus_profile_gets_a_global_phase():
    basis, params, _ = _setup(8, alpha=1)
    r, dt = 0.7, 0.3
    c = spectral.to_spectral(np.full(8, r + 0j), basis)
    out = spectral.to_physical(nonlinear_step(c, basis, params, dt), basis)
    np.testing.assert_allclose(out, r * np.exp(-1j * r**2 * dt), atol=1e-14)
    np.testing.assert_array_equal(nonlinear_step(np.zeros(8), basis, params, dt), 0)


def test_one_step_mean_mass_from_zero():
    basis, params, noise = _setup(6, gamma=0.4, hs=1.0)
    cfg = IntegratorConfig(dt=0.01, seed=8, batch_size=1024)
    batch = run_ensemble(np.zeros((4096, 6)), 0.01, basis, params, noise, cfg, nonlinear=False)
    m = batch.series.mass[:, -1]
    expected = 0.4 * 0.01 * np.sum(noise.mode_variance)
    assert abs(m.mean() - expected) <= 3 * m.std(ddof=1) / math.sqrt(m.size)


def test_forcing_term_variance():
    # E||sqrt(gamma) Phi W(t)||_H^2 = gamma t ||Phi||^2_HS
    basis, params, noise = _setup(6, gamma=0.3, hs=2.0)
    cfg = IntegratorConfig(dt=0.01, seed=4, batch_size=512)
    batch = run_ensemble(np.zeros((2048, 6)), 1.0, basis, params, noise, cfg, window_start=0.0, window=1.0)
    w = batch.window_noise_sq[:, 0]
    assert abs(w.mean() - 0.3 * 1.0 * 2.0) <= 3 * w.std(ddof=1) / math.sqrt(w.size)


def test_fixed_seed_runs_are_bitwise_identical():
    basis, params, noise = _setup(8)
    cfg = IntegratorConfig(dt=0.01, seed=77, record_every=3)
    a = run(np.zeros(8), 0.5, basis, params, noise, cfg, trajectory_id=2)
    b = run(np.zeros(8), 0.5, basis, params, noise, cfg, trajectory_id=2)
    assert np.array_equal(a.table(), b.table(), equal_nan=True)
    assert a.times[0] == 0.0 and a.times[-1] == pytest.approx(0.5)
