"""Acceptance criteria at their stated sizes and tolerances.

The zero-start ensemble at gamma = 0.5 is shared by the stationary-mass, transient and
small-ball checks; the sweep over gamma = 1, 0.3, 0.1, 0.03 is shared by the
gamma-independence, envelope and residual checks and seeds the conservation check.
Each test prints one line; the terminal summary repeats them in order.
"""

import math
from pathlib import Path

import numpy as np
import pytest

from stochnls import spectral
from stochnls import stationary as st
from stochnls import verification as vf
from stochnls.cli import main
from stochnls.integrator import IntegratorConfig

TOL = st.Tolerances()
N_MODES = 32
GAMMA = 0.5
GAMMAS = (1.0, 0.3, 0.1, 0.03)
N_TRAJ = 256
T_FINAL = 200.0
BURN_IN = 50.0
CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="session")
def setup():
    basis = spectral.build_basis(math.pi, N_MODES)
    params = spectral.ModelParams(sigma=1.0, alpha=-1, beta=1.0, gamma=GAMMA)
    noise = spectral.NoiseOperator.flat(N_MODES, N_MODES, hs_norm_sq=1.0)
    config = IntegratorConfig(dt=1e-3, scheme="strang_split", seed=0, record_every=10)
    return basis, params, noise, config


@pytest.fixture(scope="session")
def stationary_run(setup):
    basis, params, noise, config = setup
    return st.ensemble_stationary(basis, params, noise, config, N_TRAJ, T_FINAL, BURN_IN)


@pytest.fixture(scope="session")
def sweep_run(setup):
    basis, params, noise, config = setup
    return st.gamma_sweep(basis, params, noise, config, GAMMAS, N_TRAJ, T_FINAL, BURN_IN, window=1.0)


def _report(log, result):
    log.append(result.line())
    print(result.line())
    assert result.passed, result.line()


def test_stationary_mean_mass(acceptance_log, stationary_run):
    res = vf.criterion_stationary_mass(stationary_run, TOL)
    assert res.details["relative_se"] < 0.01
    _report(acceptance_log, res)


def test_gamma_independence(acceptance_log, sweep_run):
    _report(acceptance_log, vf.criterion_gamma_independence(sweep_run, TOL))


def test_mass_transient(acceptance_log, setup, stationary_run):
    basis, params, noise, _ = setup
    h2, _ = spectral.hs_norms(noise, basis, params.beta)
    _report(acceptance_log, vf.criterion_mass_transient(stationary_run.batch.series, GAMMA, h2, TOL))


def test_linear_oracle(acceptance_log, setup):
    basis, params, noise, config = setup
    runs = vf.linear_oracle_run(basis, params, noise, config, (1.0, GAMMA), N_TRAJ, T_FINAL, BURN_IN)
    _report(acceptance_log, vf.criterion_linear_oracle(runs, noise, basis, TOL))


def test_deterministic_conservation(acceptance_log, setup, sweep_run):
    basis, params, _, config = setup
    states = sweep_run.stats[-1].final_states[:8]
    report = st.limit_conservation_check(states, basis, params, config, 50.0, dts=(1e-3, 5e-4))
    assert report["energy_asserted"]
    _report(acceptance_log, vf.criterion_conservation(report, TOL))


def test_moment_envelopes(acceptance_log, sweep_run):
    _report(acceptance_log, vf.criterion_envelopes(sweep_run.stats, TOL))


def test_small_ball_no_atom(acceptance_log, setup, stationary_run):
    basis, _, noise, _ = setup
    assert np.all(noise.truncate(N_MODES).phi_plus != 0)
    _report(acceptance_log, vf.criterion_small_ball(stationary_run, noise, basis))


def test_inviscid_residual_exponent(acceptance_log, sweep_run):
    _report(acceptance_log, vf.criterion_residual_scaling(sweep_run, TOL))


def test_structural_identities(acceptance_log, setup):
    basis, params, _, _ = setup
    checks = vf.structural_checks(basis, params, n_fields=10_000, seed=0, tol=TOL)
    _report(acceptance_log, vf.criterion_structural(checks))


def test_verify_reproducible(acceptance_log, tmp_path):
    cfg = str(CONFIGS / "verify_quick.json")
    dirs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        main(["verify", "--config", cfg, "--out", str(out), "--seed", "11", "--quiet"])
        dirs.append(out)
    names = sorted(p.name for p in dirs[0].iterdir() if p.name != "manifest.json")
    assert names == sorted(p.name for p in dirs[1].iterdir() if p.name != "manifest.json")
    assert "verify_table.txt" in names

    same = all((dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes() for n in names)
    res = vf.CriterionResult(
        10, same, f"{len(names)} data files {'byte-identical' if same else 'differ'} across two verify runs",
        "identical data files",
    )
    _report(acceptance_log, res)
