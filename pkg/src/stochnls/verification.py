"""The acceptance criteria as reusable checks, and the ``verify`` orchestration.

Each ``criterion_*`` function turns already-computed statistics (or a small dedicated run)
into a :class:`CriterionResult`.  :func:`run_verification` runs the shared simulations
once at the sizes given by a configuration and evaluates every criterion on them.
"""

from dataclasses import dataclass, field
import hashlib
import math
import shutil
import tempfile

import numpy as np

from . import spectral
from . import stationary as st
from .integrator import IntegratorConfig, run_ensemble

__all__ = [
    "CRITERIA",
    "CriterionResult",
    "VerificationReport",
    "criterion_stationary_mass",
    "criterion_gamma_independence",
    "criterion_mass_transient",
    "criterion_linear_oracle",
    "criterion_conservation",
    "criterion_envelopes",
    "criterion_small_ball",
    "criterion_residual_scaling",
    "criterion_structural",
    "criterion_reproducibility",
    "run_verification",
]

CRITERIA = {
    1: "stationary mass identity",
    2: "gamma-independence of the mean mass",
    3: "mass-expectation transient",
    4: "linear-model oracle",
    5: "deterministic conservation",
    6: "moment envelopes",
    7: "small-ball bound and no atom",
    8: "inviscid residual scaling",
    9: "structural identities",
    10: "reproducibility",
}


@dataclass
class CriterionResult:
    id: int
    passed: bool
    measured: str
    threshold: str
    details: dict = field(default_factory=dict)

    @property
    def name(self):
        return CRITERIA[self.id]

    @property
    def status(self):
        return "PASS" if self.passed else "FAIL"

    def line(self):
        return f"criterion {self.id:>2} {self.status}  {self.name}: {self.measured} (required {self.threshold})"

    def to_record(self):
        return {"id": self.id, "name": self.name, "status": self.status, "measured": self.measured,
                "threshold": self.threshold, "details": self.details}


@dataclass
class VerificationReport:
    results: list
    artifacts: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def table(self):
        """Plain-text pass/fail table; contains no timings, so it is reproducible."""
        rows = ["id  status  criterion                              measured"]
        for r in self.results:
            rows.append(f"{r.id:<3} {r.status:<7} {r.name:<38} {r.measured}")
        return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# criteria


def criterion_stationary_mass(stats, tol=None):
    tol = tol or st.Tolerances()
    z = stats.mass_z
    return CriterionResult(
        1, bool(z <= tol.se_factor),
        f"E[M] = {stats.mean_mass:.5f} +/- {stats.mean_mass_se:.5f} (|z| = {z:.2f})",
        f"|E[M] - {stats.target_mass:g}| <= {tol.se_factor:g} SE",
        {"gamma": stats.gamma, "mean": stats.mean_mass, "se": stats.mean_mass_se,
         "target": stats.target_mass, "z": z, "relative_se": stats.mean_mass_se / stats.target_mass},
    )


def criterion_gamma_independence(sweep, tol=None):
    tol = tol or st.Tolerances()
    zs = {f"{g:g}": (s.mass_z if s is not None else math.inf) for g, s in zip(sweep.gamma_values, sweep.stats)}
    worst = max(zs.values())
    trend = sweep.mass_trend
    ok = worst <= tol.se_factor and not trend["trend"] and not sweep.failures
    return CriterionResult(
        2, bool(ok),
        f"max |z| = {worst:.2f} over gamma {list(zs)}; trend slope z = {trend['z']:.2f}",
        f"every |z| <= {tol.se_factor:g}, trend |z| <= {tol.trend_se:g}",
        {"z": zs, "trend": trend, "failures": sweep.failures,
         "means": {f"{g:g}": s.mean_mass for g, s in zip(sweep.gamma_values, sweep.stats) if s}},
    )


def criterion_mass_transient(series, gamma, hs_norm_h_sq, tol=None):
    tol = tol or st.Tolerances()
    r = st.mass_ode_report(series, gamma, hs_norm_h_sq)
    return CriterionResult(
        3, bool(r["max_z"] <= tol.se_factor),
        f"max pointwise |z| = {r['max_z']:.2f} at t = {r['argmax_t']:g} over {r['n_points']} points",
        f"<= {tol.se_factor:g} SE pointwise",
        {k: v for k, v in r.items() if k not in ("times", "mean", "se", "target")},
    )


def linear_oracle_run(basis, params, noise, config, gammas, n_traj, T, burn_in, threads=1):
    """Linear (``F = 0``) ensembles; per-mode stationary ``E|c_j|^2`` with SE for each gamma."""
    exact = noise.truncate(basis.n_modes).isotropic
    cfg = IntegratorConfig(dt=config.dt, scheme=config.scheme, seed=config.seed,
                           record_every=config.record_every, exact_ou=exact,
                           batch_size=config.batch_size)
    out = {}
    for g in gammas:
        batch = run_ensemble(np.zeros((n_traj, basis.n_modes)), T, basis, params.with_gamma(g),
                             noise, cfg, nonlinear=False, average_from=burn_in, residual=False,
                             threads=threads)
        p = batch.mode_power_mean
        out[g] = (p.mean(axis=0), p.std(axis=0, ddof=1) / math.sqrt(n_traj))
    return out, exact


def criterion_linear_oracle(oracle_runs, noise, basis, tol=None):
    tol = tol or st.Tolerances()
    runs, exact = oracle_runs
    target = noise.truncate(basis.n_modes).mode_variance / 2.0
    worst, details = 0.0, {}
    for g, (mean, se) in runs.items():
        z = np.abs(mean - target) / se
        worst = max(worst, float(z.max()))
        details[f"{g:g}"] = {"max_z": float(z.max()), "worst_mode": int(np.argmax(z)) + 1}
    details["exact_ou"] = exact
    return CriterionResult(
        4, bool(len(runs) >= 2 and worst <= tol.se_factor),
        f"max per-mode |z| = {worst:.2f} over {len(target)} modes x {len(runs)} gammas",
        f"<= {tol.se_factor:g} SE for every mode at two gammas",
        details,
    )


def criterion_conservation(report, tol=None):
    tol = tol or st.Tolerances()
    ratio = min(report["energy_ratios"]) if report["energy_ratios"] else math.nan
    ok = report["mass_ok"] and (report["energy_ok"] if report["energy_asserted"] else True)
    return CriterionResult(
        5, bool(ok),
        f"mass drift {report['max_mass_drift']:.2e}; energy drift ratio {ratio:.2f}"
        + ("" if report["energy_asserted"] else " (reported only)"),
        f"mass <= {tol.mass_drift:g}, ratio >= {tol.energy_order_ratio:g}",
        report,
    )


def criterion_envelopes(stats_list, tol=None):
    bad = {}
    for s in stats_list:
        if s is not None and s.envelopes["violations"]:
            bad[f"{s.gamma:g}"] = s.envelopes["violations"]
    ratios = {f"{s.gamma:g}": {k: max(v["estimate"] / v["bound"] for v in s.envelopes[k].values())
                               for k in ("mass", "energy")}
              for s in stats_list if s is not None}
    worst_m = max(r["mass"] for r in ratios.values())
    worst_e = max(r["energy"] for r in ratios.values())
    return CriterionResult(
        6, not bad and any(s is not None for s in stats_list),
        f"{sum(map(len, bad.values()))} violations; max estimate/bound mass {worst_m:.3f}, energy {worst_e:.2e}",
        "no envelope violation at any gamma",
        {"violations": bad, "ratios": ratios},
    )


def criterion_small_ball(stats, noise, basis):
    r = st.small_ball_and_atom_tests(stats, noise, basis)
    probs = ", ".join(f"{p:.2e}" for p in r["probabilities"])
    return CriterionResult(
        7, bool(r["below_line"] and r["no_atom"]),
        f"P(sqrt M <= delta) = [{probs}], first bin {r['first_bin_fraction']:.2e}",
        f"below {r['slope_bound']:g} delta; first bin <= 2/{r['n_samples']}",
        r,
    )


def criterion_residual_scaling(sweep, tol=None):
    tol = tol or st.Tolerances()
    lo, hi = tol.residual_exponent
    e = sweep.residual_exponent
    return CriterionResult(
        8, bool(lo <= e <= hi),
        f"exponent {e:.3f} +/- {sweep.residual_exponent_se:.3f} (artifact-derived rate)",
        f"in [{lo:g}, {hi:g}]",
        {"gamma": sweep.gamma_values.tolist(), "residual_mean": sweep.residual_mean.tolist(),
         "residual_se": sweep.residual_se.tolist(), "window": sweep.window},
    )


def structural_checks(basis, params, n_fields=10000, seed=0, tol=None):
    """Deterministic identities on ``n_fields`` random fields; returns named maxima and flags."""
    tol = tol or st.Tolerances()
    rng = np.random.default_rng((seed, 9))
    amps = 10.0 ** rng.uniform(-1, 1, size=n_fields)
    c = spectral.random_fields(basis, n_fields, rng) * amps[:, None]
    u = spectral.to_physical(c, basis)
    s = params.sigma
    p = 2.0 + 2.0 * s
    q = p / (1.0 + 2.0 * s)
    out = {}

    fu = spectral.pointwise_F(u, s)
    lhs = np.sum(basis.quadrature_weights * np.abs(fu) ** q, axis=-1)
    rhs = np.sum(basis.quadrature_weights * np.abs(u) ** p, axis=-1)
    out["norm_identity_rel"] = float(np.max(np.abs(lhs - rhs) / rhs))

    Ac = spectral.apply_A(c, basis, params.beta)
    scale = np.sqrt(spectral.mass(c) * spectral.mass(Ac))
    out["antisym_A"] = float(np.max(np.abs(spectral.inner(c, 1j * Ac).real) / scale))
    Fc = spectral.nonlinearity_F(c, basis, s)
    scale = np.sqrt(spectral.mass(c) * spectral.mass(Fc))
    out["antisym_F"] = float(np.max(np.abs(spectral.inner(c, 1j * Fc).real) / scale))

    mq = spectral.mass_quadrature(u, basis)
    m = spectral.mass(c)
    out["parseval_rel"] = float(np.max(np.abs(mq - m) / m))

    v = np.roll(u, 1, axis=0)  # pair each field with a different one
    fv = spectral.pointwise_F(v, s)
    diff = np.sum(basis.quadrature_weights * np.abs(fu - fv) ** q, axis=-1) ** (1 / q)
    nu = spectral.lp_norm(u, basis, p)
    nv = spectral.lp_norm(v, basis, p)
    bound = spectral.lipschitz_constant_F(s) * (nu ** (2 * s) + nv ** (2 * s)) * spectral.lp_norm(u - v, basis, p)
    out["lipschitz_max_ratio"] = float(np.max(diff / bound))

    focusing = spectral.ModelParams(s, 1, params.beta)
    G = spectral.estimate_G(basis, focusing, seed=seed)
    vrng = np.random.default_rng((seed, 10))
    val = spectral.random_fields(basis, n_fields, vrng) * (10.0 ** vrng.uniform(-2, 2, size=n_fields))[:, None]
    gaps = np.concatenate([spectral.gn_certificate_gap(val, basis, focusing, G),
                           spectral.gn_certificate_gap(2.0 * val, basis, focusing, G)])
    e1 = spectral.modified_energy(val, basis, focusing, G)
    coercive = e1 - (1 + 2 * s) / (4 + 4 * s) * spectral.v_norm_sq(val, basis, params.beta)
    out["G"] = G
    out["gn_min_gap"] = float(gaps.min())
    out["coercivity_min_margin"] = float(coercive.min())

    out["flags"] = {
        "norm_identity": out["norm_identity_rel"] <= tol.parseval_rel,
        "antisymmetry_A": out["antisym_A"] <= tol.identity_abs,
        "antisymmetry_F": out["antisym_F"] <= tol.identity_abs,
        "parseval": out["parseval_rel"] <= tol.parseval_rel,
        "lipschitz": out["lipschitz_max_ratio"] <= 1.0,
        "gn_certificate": out["gn_min_gap"] >= 0.0,
        "coercivity": out["coercivity_min_margin"] >= 0.0,
    }
    out["n_fields"] = n_fields
    return out


def criterion_structural(checks):
    failed = [k for k, ok in checks["flags"].items() if not ok]
    return CriterionResult(
        9, not failed,
        f"{len(checks['flags']) - len(failed)}/{len(checks['flags'])} identities on {checks['n_fields']} fields"
        + (f"; failed: {', '.join(failed)}" if failed else ""),
        "identities to 1e-12 (antisymmetry), 1e-10 (norms), certified G",
        checks,
    )


def _tree_digest(directory, names):
    h = hashlib.sha256()
    for name in sorted(names):
        h.update(name.encode())
        h.update((directory / name).read_bytes())
    return h.hexdigest()


def criterion_reproducibility(produce):
    """``produce(dir)`` writes data files into ``dir`` and returns their names."""
    from pathlib import Path

    digests = []
    tmp = Path(tempfile.mkdtemp(prefix="stochnls-repro-"))
    try:
        for k in range(2):
            d = tmp / str(k)
            names = produce(d)
            digests.append(_tree_digest(d, names))
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    same = digests[0] == digests[1]
    return CriterionResult(
        10, same, f"two runs {'byte-identical' if same else 'differ'} ({digests[0][:12]})",
        "identical data files", {"digests": digests},
    )


# ---------------------------------------------------------------------------
# orchestration


def run_verification(cfg, seed=None, threads=1, progress=None, reproduce=None):
    """Run every criterion at the sizes of ``cfg`` (an :class:`ExperimentConfig`).

    The stationary ensemble at ``experiment.gamma`` feeds criteria 1, 3 and 7; the sweep over
    ``experiment.gammas`` (default ``1, 0.3, 0.1, 0.03``) feeds 2, 6 and 8; its smallest-gamma
    states seed the conservation check 5.  ``reproduce`` is the callable used for
    criterion 10; it defaults to a short simulation written twice.
    """
    say = progress or (lambda msg: None)
    tol = st.Tolerances()
    ex = cfg.experiment
    basis = cfg.basis()
    noise = cfg.noise_operator()
    icfg = cfg.integrator_config(seed)
    params = cfg.params()
    gamma = ex["gamma"]
    T, n_traj = ex["T"], ex["n_traj"]
    burn_in = ex["burn_in"] if ex["burn_in"] is not None else min(50.0, T / 4)
    gammas = ex["gammas"] or [1.0, 0.3, 0.1, 0.03]
    h2, _ = spectral.hs_norms(noise, basis, params.beta)
    G = spectral.estimate_G(basis, params) if params.alpha == 1 else None
    results, art = [], {"G": G}

    say(f"stationary ensemble at gamma={gamma:g}")
    s1 = st.ensemble_stationary(basis, params, noise, icfg, n_traj, T, burn_in,
                                nonlinear=ex["nonlinear"], G=G, threads=threads, tolerances=tol)
    art["stationary"] = s1
    results.append(criterion_stationary_mass(s1, tol))

    say(f"gamma sweep over {gammas}")
    sweep = st.gamma_sweep(basis, params, noise, icfg, gammas, n_traj, T, burn_in, window=ex["window"],
                           nonlinear=ex["nonlinear"], G=G, threads=threads, tolerances=tol)
    art["sweep"] = sweep
    results.append(criterion_gamma_independence(sweep, tol))
    results.append(criterion_mass_transient(s1.batch.series, gamma, h2, tol))

    say("linear-model oracle")
    og = sorted({gammas[0], gamma}, reverse=True)
    if len(og) < 2:
        og = [gammas[0], gammas[1]]
    oracle = linear_oracle_run(basis, params, noise, icfg, og, n_traj, T, burn_in, threads)
    art["oracle"] = oracle
    results.append(criterion_linear_oracle(oracle, noise, basis, tol))

    say("deterministic conservation")
    last = next((s for s in reversed(sweep.stats) if s is not None), s1)
    states = last.final_states[: ex["n_det_states"]]
    cons = st.limit_conservation_check(states, basis, params, icfg, ex["T_det"], tolerances=tol)
    art["conservation"] = cons
    results.append(criterion_conservation(cons, tol))

    results.append(criterion_envelopes([s1] + list(sweep.stats), tol))
    results.append(criterion_small_ball(s1, noise, basis))
    results.append(criterion_residual_scaling(sweep, tol))

    say("structural identities")
    checks = structural_checks(basis, params, ex["n_fields"], icfg.seed, tol)
    results.append(criterion_structural(checks))

    say("reproducibility")
    if reproduce is None:
        reproduce = _default_reproduce(basis, params, noise, icfg)
    results.append(criterion_reproducibility(reproduce))
    results.sort(key=lambda r: r.id)
    return VerificationReport(results, art)


def _default_reproduce(basis, params, noise, icfg):
    from .output import series_to_csv

    def produce(directory):
        directory.mkdir(parents=True)
        batch = run_ensemble(np.zeros((4, basis.n_modes)), 2.0, basis, params, noise, icfg)
        names = []
        for i in range(4):
            name = f"traj_{i:04d}.csv"
            (directory / name).write_text(series_to_csv(batch.series.trajectory(i)))
            names.append(name)
        return names

    return produce
