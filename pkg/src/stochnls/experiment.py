"""Run a configured experiment and write its result files plus a manifest."""

from dataclasses import dataclass
import logging
import time

import numpy as np

from . import __version__
from . import spectral
from . import stationary as st
from ._validation import NumericalAbort, ParameterError
from .config import EXIT_NUMERICAL, EXIT_OK
from .integrator import run_ensemble
from .output import ResultWriter
from .verification import run_verification

__all__ = ["RunResult", "run_experiment", "EXIT_CRITERIA"]

log = logging.getLogger("stochnls")

EXIT_CRITERIA = 1


@dataclass
class RunResult:
    manifest: object
    exit_code: int
    summary: dict


def _gtag(g):
    return format(g, "g").replace(".", "p")


def _write_series(writer, batch, limit, prefix=""):
    n = min(limit, batch.series.mass.shape[0])
    for i in range(n):
        tid = int(batch.trajectory_ids[i])
        writer.series_csv(f"{prefix}traj_{tid:04d}.csv", batch.series.trajectory(i))


def _mean_mass_xy(writer, series, name, gamma, h2):
    mean = series.mass.mean(axis=0)
    writer.xy(name, series.times, mean,
              header=f"t  ensemble mean mass (gamma={gamma:g}, plateau={0.5 * h2:.17g})",
              svg=("ensemble mean mass", "t", "E[M(t)]", False, False))


def _stats_outputs(writer, stats, tag, noise, basis, prefix=""):
    writer.summary(f"{prefix}stats_gamma_{tag}.json", {"kind": "stationary_stats", **stats.to_record()})
    centers = 0.5 * (stats.histogram_edges[1:] + stats.histogram_edges[:-1])
    writer.xy(f"{prefix}mass_histogram_gamma_{tag}.xy", centers, stats.mass_histogram,
              header="bin centre  count (last bin includes overflow)")
    try:
        sb = st.small_ball_and_atom_tests(stats, noise, basis)
    except ParameterError as exc:  # fewer than two forced components
        log.warning("small-ball test skipped: %s", exc)
        return None
    writer.xy(f"{prefix}small_ball_gamma_{tag}.xy", sb["deltas"], sb["probabilities"],
              header=f"delta  P(sqrt M <= delta); bound slope {sb['slope_bound']:.17g}",
              svg=("small-ball probabilities", "delta", "P(sqrt M <= delta)", False, False))
    return sb


def _simulate(cfg, writer, icfg, threads):
    ex = cfg.experiment
    basis, noise = cfg.basis(), cfg.noise_operator()
    params = cfg.params()
    G = spectral.estimate_G(basis, params) if params.alpha == 1 else None
    init = np.zeros((ex["n_traj"], basis.n_modes))
    batch = run_ensemble(init, ex["T"], basis, params, noise, icfg, nonlinear=ex["nonlinear"],
                         G=G, residual=params.gamma > 0, threads=threads)
    _write_series(writer, batch, cfg.output["csv_trajectories"])
    h2, _ = spectral.hs_norms(noise, basis, params.beta)
    if params.gamma > 0:
        _mean_mass_xy(writer, batch.series, "mass_vs_t.xy", params.gamma, h2)
    s = batch.series
    summary = {
        "kind": "simulate",
        "gamma": params.gamma,
        "n_traj": int(s.mass.shape[0]),
        "final_time": float(s.times[-1]),
        "final_mean_mass": float(s.mass[:, -1].mean()),
        "final_mean_energy": float(s.energy[:, -1].mean()),
    }
    writer.summary("summary.json", summary)
    return summary, G, EXIT_OK


def _stationary(cfg, writer, icfg, threads):
    ex = cfg.experiment
    basis, noise = cfg.basis(), cfg.noise_operator()
    params = cfg.params()
    G = spectral.estimate_G(basis, params) if params.alpha == 1 else None
    stats = st.ensemble_stationary(basis, params, noise, icfg, ex["n_traj"], ex["T"], ex["burn_in"],
                                   nonlinear=ex["nonlinear"], G=G, threads=threads,
                                   window=ex["window"])
    tag = _gtag(params.gamma)
    _write_series(writer, stats.batch, cfg.output["csv_trajectories"])
    h2, _ = spectral.hs_norms(noise, basis, params.beta)
    _mean_mass_xy(writer, stats.batch.series, "mass_vs_t.xy", params.gamma, h2)
    sb = _stats_outputs(writer, stats, tag, noise, basis)
    transient = st.mass_ode_report(stats.batch.series, params.gamma, h2)
    tol = st.Tolerances()
    summary = {
        "kind": "stationary",
        "gamma": params.gamma,
        "mean_mass": stats.mean_mass,
        "se": stats.mean_mass_se,
        "target": stats.target_mass,
        "pass": bool(stats.mass_z <= tol.se_factor),
        "stationarity": stats.stationarity,
        "envelope_violations": stats.envelopes["violations"],
        "transient_max_z": transient["max_z"],
        "small_ball": sb,
    }
    writer.summary("summary.json", summary)
    return summary, G, EXIT_OK


def _sweep_rows(sweep, tol):
    rows = []
    for g, s in zip(sweep.gamma_values, sweep.stats):
        if s is None:
            rows.append({"gamma": float(g), "mean_mass": None, "se": None, "target": None,
                         "pass": False, "failure": sweep.failures.get(f"{g:g}")})
        else:
            rows.append({"gamma": float(g), "mean_mass": s.mean_mass, "se": s.mean_mass_se,
                         "target": s.target_mass, "pass": bool(s.mass_z <= tol.se_factor)})
    return rows


def _sweep_outputs(writer, sweep, noise, basis, prefix=""):
    tol = st.Tolerances()
    for g, s in zip(sweep.gamma_values, sweep.stats):
        if s is not None:
            _stats_outputs(writer, s, _gtag(g), noise, basis, prefix)
    rows = _sweep_rows(sweep, tol)
    rec = sweep.to_record()
    rec.pop("stats")
    writer.summary("sweep_summary.json", {"kind": "sweep_summary", "rows": rows, **rec})
    ok = [(r["gamma"], r["mean_mass"]) for r in rows if r["mean_mass"] is not None]
    if ok:
        writer.xy("mean_mass_vs_gamma.xy", [a for a, _ in ok], [b for _, b in ok],
                  header="gamma  stationary mean mass",
                  svg=("stationary mean mass", "gamma", "E[M]", True, False))
    fin = np.isfinite(sweep.residual_mean)
    if fin.any():
        writer.xy("residual_vs_gamma.xy", sweep.gamma_values[fin], sweep.residual_mean[fin],
                  header=f"gamma  mean window residual (window {sweep.window:g}; artifact-derived rate)",
                  svg=("inviscid residual", "gamma", "mean r(T_w)", True, True))
    return rows


def _sweep(cfg, writer, icfg, threads):
    ex = cfg.experiment
    basis, noise = cfg.basis(), cfg.noise_operator()
    params = cfg.params(gamma=ex["gammas"][0])
    G = spectral.estimate_G(basis, params) if params.alpha == 1 else None
    sweep = st.gamma_sweep(basis, params, noise, icfg, ex["gammas"], ex["n_traj"], ex["T"],
                           ex["burn_in"], window=ex["window"], nonlinear=ex["nonlinear"], G=G,
                           threads=threads,
                           progress=lambda g, s: log.info("gamma=%g: E[M]=%.5f +/- %.5f", g,
                                                          s.mean_mass, s.mean_mass_se))
    rows = _sweep_outputs(writer, sweep, noise, basis)
    summary = {"kind": "sweep", "rows": rows, "residual_exponent": sweep.residual_exponent,
               "failures": sweep.failures}
    code = EXIT_NUMERICAL if sweep.failures else EXIT_OK
    return summary, G, code


def _verify(cfg, writer, icfg, threads):
    report = run_verification(cfg, seed=icfg.seed, threads=threads, progress=log.info)
    basis, noise = cfg.basis(), cfg.noise_operator()
    art = report.artifacts
    _stats_outputs(writer, art["stationary"], _gtag(art["stationary"].gamma), noise, basis)
    h2, _ = spectral.hs_norms(noise, basis, cfg.model["beta"])
    _mean_mass_xy(writer, art["stationary"].batch.series, "mass_vs_t.xy", art["stationary"].gamma, h2)
    _sweep_outputs(writer, art["sweep"], noise, basis, prefix="sweep_")
    writer.text("verify_table.txt", report.table())
    writer.summary("verify.json", {"kind": "verify", "passed": report.passed,
                                   "criteria": [r.to_record() for r in report.results]})
    for r in report.results:
        log.info(r.line())
    summary = {"kind": "verify", "passed": report.passed,
               "table": [(r.id, r.status) for r in report.results]}
    return summary, art["G"], EXIT_OK if report.passed else EXIT_CRITERIA


_KINDS = {"simulate": _simulate, "stationary": _stationary, "sweep": _sweep, "verify": _verify}


def run_experiment(cfg, out_dir, seed=None, threads=1, kind=None):
    """Dispatch on ``experiment.kind`` (or ``kind``) and write everything into ``out_dir``.

    Returns a :class:`RunResult`; numerical aborts are reported in ``failure.json`` and in the
    manifest, with exit code 5.
    """
    if seed is not None:
        cfg = cfg.replace("integrator", seed=seed)
    if kind is not None and kind != cfg.experiment["kind"]:
        cfg = cfg.replace("experiment", kind=kind)
    icfg = cfg.integrator_config()
    writer = ResultWriter(out_dir, cfg.output["formats"])
    t0 = time.perf_counter()
    G = None
    try:
        summary, G, code = _KINDS[cfg.experiment["kind"]](cfg, writer, icfg, threads)
    except NumericalAbort as exc:
        summary = {"kind": cfg.experiment["kind"], "error": str(exc), "time": exc.time,
                   "trajectories": None if exc.trajectories is None else list(map(int, exc.trajectories))}
        writer.summary("failure.json", summary)
        code = EXIT_NUMERICAL
    basis, noise = cfg.basis(), cfg.noise_operator()
    h2, v2 = spectral.hs_norms(noise, basis, cfg.model["beta"])
    manifest = writer.manifest(
        cfg, __version__, time.perf_counter() - t0,
        {"kind": cfg.experiment["kind"], "seed": icfg.seed, "exit_code": code, "certified_G": G,
         "hs_norm_h_sq": h2, "hs_norm_v_sq": v2},
    )
    return RunResult(manifest, code, summary)
