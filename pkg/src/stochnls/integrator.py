"""Split-step integration of the Galerkin SDE with damping ``gamma`` and forcing ``sqrt(gamma) Phi dW``.

Both sub-flows are solved exactly:

* linear part ``du = (i A u - gamma u) dt``: per-mode multiplication by ``exp((i lambda_j^beta - gamma) dt)``,
  followed by the additive noise increment;
* nonlinear part ``du = -i alpha |u|^(2 sigma) u dt``: pointwise phase rotation on the collocation
  grid (the modulus is invariant, so the flow is explicit).

The public single-step functions work on complex coefficient vectors with plain numpy and
serve as the reference.  :func:`run_ensemble` drives whole batches of trajectories through a
compiled kernel that stores a batch as one real array of shape ``(n_modes, 2 * batch)``
(real parts first, then imaginary parts).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import math

import numba as nb
import numpy as np

from . import spectral
from ._validation import NumericalAbort, ParameterError, check_field, check_int, check_positive
from .rng import _box_muller, _threefry, noise_increment, trajectory_keys

__all__ = [
    "IntegratorConfig",
    "ObservableSeries",
    "TrajectoryBatch",
    "linear_damped_noise_step",
    "nonlinear_step",
    "step",
    "run",
    "run_ensemble",
]

SCHEMES = ("strang_split", "lie_split")
_STRANG, _LIE = 0, 1


@dataclass(frozen=True)
class IntegratorConfig:
    """Time-stepping controls.

    ``batch_size`` fixes how trajectories are grouped for the compiled kernel; results depend
    on it only through floating-point summation order, and never on ``threads``.
    ``exact_ou`` replaces the Euler-Maruyama noise variance by the exact one of the damped
    linear flow (isotropic noise only).
    """

    dt: float = 1e-3
    scheme: str = "strang_split"
    seed: int = 0
    record_every: int = 10
    exact_ou: bool = False
    batch_size: int = 64

    def __post_init__(self):
        check_positive(self.dt, "dt")
        if self.scheme not in SCHEMES:
            raise ParameterError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        check_int(self.record_every, "record_every")
        check_int(self.batch_size, "batch_size")
        if isinstance(self.seed, bool) or not 0 <= int(self.seed) < 2**64:
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")


@dataclass
class ObservableSeries:
    """Observables sampled every ``record_every`` steps (and at the final time).

    Arrays have the recorded times on their last axis; ensemble runs add a leading
    trajectory axis.  ``modified_energy`` is NaN unless the run is focusing and ``G`` is known.
    """

    times: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    modified_energy: np.ndarray
    v_norm_sq: np.ndarray
    residual_h: np.ndarray

    COLUMNS = ("t", "mass", "energy", "modified_energy", "v_norm_sq", "residual_h")

    def __post_init__(self):
        n = self.times.shape[-1]
        for name in self.COLUMNS[1:]:
            if getattr(self, name).shape[-1] != n:
                raise ValueError(f"{name} does not match the time grid")
        if n > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    def trajectory(self, i):
        """The single-trajectory series ``i`` of an ensemble."""
        return ObservableSeries(
            self.times, *(getattr(self, name)[i] for name in self.COLUMNS[1:])
        )

    def table(self):
        """``(n_records, 6)`` array in :attr:`COLUMNS` order (single trajectory)."""
        return np.column_stack([self.times] + [getattr(self, c) for c in self.COLUMNS[1:]])


@dataclass
class TrajectoryBatch:
    """Everything a batch run returns besides the observable series."""

    series: ObservableSeries
    final_state: np.ndarray
    trajectory_ids: np.ndarray
    mode_power_mean: np.ndarray = None
    window_residuals: np.ndarray = None
    window_noise_sq: np.ndarray = None
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# reference single steps (numpy, complex arithmetic)


def _noise_amplitudes(noise, basis, gamma, dt, exact_ou):
    pn = noise.truncate(basis.n_modes)
    scale = math.sqrt(gamma * dt)
    if exact_ou and gamma > 0:
        if not pn.isotropic:
            raise ParameterError("exact OU sampling needs phi_j == phi_-j for every mode")
        scale = math.sqrt(gamma * (-math.expm1(-2.0 * gamma * dt)) / (2.0 * gamma))
    return scale * pn.phi_plus, scale * pn.phi_minus


def linear_damped_noise_step(field, basis, params, noise, inc, dt, exact_ou=False):
    """Exact damped rotation over ``dt`` plus the forcing increment ``sqrt(gamma) Phi dW``."""
    c = check_field(field, basis.n_modes)
    rot = np.exp((1j * basis.eigenvalues**params.beta - params.gamma) * dt)
    amp_p, amp_m = _noise_amplitudes(noise, basis, params.gamma, dt, exact_ou)
    return rot * c + amp_p * inc.gauss_plus + 1j * amp_m * inc.gauss_minus


def nonlinear_step(field, basis, params, dt):
    """Exact flow of ``du/dt = -i alpha |u|^(2 sigma) u`` on the collocation grid."""
    u = spectral.to_physical(field, basis)
    u = u * np.exp(-1j * params.alpha * np.abs(u) ** (2.0 * params.sigma) * dt)
    return spectral.to_spectral(u, basis)


def step(field, basis, params, noise, config, step_index, trajectory_id=0, nonlinear=True):
    """One Strang (or Lie) step, driven by the counter-based increment for this step."""
    dt = config.dt
    inc = noise_increment(config.seed, trajectory_id, step_index, basis.n_modes)
    c = check_field(field, basis.n_modes)
    if not nonlinear:
        out = linear_damped_noise_step(c, basis, params, noise, inc, dt, config.exact_ou)
    elif config.scheme == "strang_split":
        c = nonlinear_step(c, basis, params, dt / 2)
        c = linear_damped_noise_step(c, basis, params, noise, inc, dt, config.exact_ou)
        out = nonlinear_step(c, basis, params, dt / 2)
    else:
        c = linear_damped_noise_step(c, basis, params, noise, inc, dt, config.exact_ou)
        out = nonlinear_step(c, basis, params, dt)
    if not np.all(np.isfinite(out)):
        raise NumericalAbort(f"non-finite state at step {step_index}", time=(step_index + 1) * dt)
    return out


# ---------------------------------------------------------------------------
# compiled batch kernel


_C2, _C4, _C6, _C8, _C10 = -1 / 2, 1 / 24, -1 / 720, 1 / 40320, -1 / 3628800
_S3, _S5, _S7, _S9, _S11 = -1 / 6, 1 / 120, -1 / 5040, 1 / 362880, -1 / 39916800


@nb.njit(nogil=True, cache=True, fastmath={"reassoc", "nsz"})
def _max_modulus_sq(U):
    B = U.shape[1] // 2
    big = 0.0
    for k in range(U.shape[0]):
        for b in range(B):
            v = U[k, b] * U[k, b] + U[k, B + b] * U[k, B + b]
            big = v if v > big else big
    return big


@nb.njit(nogil=True, cache=True)
def _phase_small(U, g, sigma):
    # Taylor through th^11: exact to round-off while |th| <= 0.1, and it vectorizes
    B = U.shape[1] // 2
    for k in range(U.shape[0]):
        for b in range(B):
            a = U[k, b]
            c = U[k, B + b]
            th = g * (a * a + c * c) ** sigma
            t2 = th * th
            cs = 1.0 + t2 * (_C2 + t2 * (_C4 + t2 * (_C6 + t2 * (_C8 + t2 * _C10))))
            sn = th * (1.0 + t2 * (_S3 + t2 * (_S5 + t2 * (_S7 + t2 * (_S9 + t2 * _S11)))))
            U[k, b] = a * cs - c * sn
            U[k, B + b] = a * sn + c * cs


@nb.njit(nogil=True, cache=True)
def _phase_small_cubic(U, g):
    B = U.shape[1] // 2
    for k in range(U.shape[0]):
        for b in range(B):
            a = U[k, b]
            c = U[k, B + b]
            th = g * (a * a + c * c)
            t2 = th * th
            cs = 1.0 + t2 * (_C2 + t2 * (_C4 + t2 * (_C6 + t2 * (_C8 + t2 * _C10))))
            sn = th * (1.0 + t2 * (_S3 + t2 * (_S5 + t2 * (_S7 + t2 * (_S9 + t2 * _S11)))))
            U[k, b] = a * cs - c * sn
            U[k, B + b] = a * sn + c * cs


@nb.njit(nogil=True, cache=True)
def _phase_large(U, g, sigma):
    B = U.shape[1] // 2
    for k in range(U.shape[0]):
        for b in range(B):
            a = U[k, b]
            c = U[k, B + b]
            th = g * (a * a + c * c) ** sigma
            cs = np.cos(th)
            sn = np.sin(th)
            U[k, b] = a * cs - c * sn
            U[k, B + b] = a * sn + c * cs


@nb.njit(nogil=True, cache=True)
def _nonlinear_phase(X, synth, analysis, coef, sigma, tau):
    """In place: X <- P_n [u exp(-i coef |u|^(2 sigma) tau)] with coef = alpha."""
    U = np.dot(synth, X)
    g = -coef * tau
    if abs(g) * _max_modulus_sq(U) ** sigma > 0.1:
        _phase_large(U, g, sigma)
    elif sigma == 1.0:
        _phase_small_cubic(U, g)
    else:
        _phase_small(U, g, sigma)
    X[:, :] = np.dot(analysis, U)


@nb.njit(nogil=True, cache=True, error_model="numpy")
def _linear_noise(X, rot_re, rot_im, modes, amp_p, amp_m, wamp_p, wamp_m, key0, key1, step, Wacc, track):
    n = X.shape[0]
    B = X.shape[1] // 2
    for j in range(n):
        rr = rot_re[j]
        ri = rot_im[j]
        for b in range(B):
            a = X[j, b]
            c = X[j, B + b]
            X[j, b] = a * rr - c * ri
            X[j, B + b] = a * ri + c * rr
    st = np.uint64(step)
    gp = np.empty(B)
    gm = np.empty(B)
    for idx in range(modes.shape[0]):
        j = modes[idx]
        mode = np.uint64(j)
        for b in range(B):  # kept free of stores into X so that it vectorizes
            x0, x1 = _threefry(key0[b], key1[b], st, mode)
            gp[b], gm[b] = _box_muller(x0, x1)
        ap = amp_p[j]
        am = amp_m[j]
        for b in range(B):
            X[j, b] += ap * gp[b]
            X[j, B + b] += am * gm[b]
        if track:
            wp = wamp_p[j]
            wm = wamp_m[j]
            for b in range(B):
                Wacc[j, b] += wp * gp[b]
                Wacc[j, B + b] += wm * gm[b]


@nb.njit(nogil=True, cache=True)
def _accumulate(acc, X, dt):
    for j in range(X.shape[0]):
        for b in range(X.shape[1]):
            acc[j, b] += dt * X[j, b]


@nb.njit(nogil=True, cache=True)
def _advance(X, step0, n_steps, synth, analysis, rot_re, rot_im, modes, amp_p, amp_m,
             wamp_p, wamp_m, key0, key1, alpha, sigma, dt, scheme, nonlinear, merge,
             Iacc, Wacc, track):
    """Advance the batch ``X`` by ``n_steps`` full steps starting at global step ``step0``."""
    if nonlinear and scheme == 0 and merge:
        _nonlinear_phase(X, synth, analysis, alpha, sigma, 0.5 * dt)
    for k in range(n_steps):
        if nonlinear and scheme == 0 and not merge:
            _nonlinear_phase(X, synth, analysis, alpha, sigma, 0.5 * dt)
        if track:
            _accumulate(Iacc, X, dt)
        _linear_noise(X, rot_re, rot_im, modes, amp_p, amp_m, wamp_p, wamp_m,
                      key0, key1, step0 + k, Wacc, track)
        if nonlinear:
            if scheme == 1:
                _nonlinear_phase(X, synth, analysis, alpha, sigma, dt)
            elif merge and k < n_steps - 1:
                _nonlinear_phase(X, synth, analysis, alpha, sigma, dt)
            else:
                _nonlinear_phase(X, synth, analysis, alpha, sigma, 0.5 * dt)


def _to_complex(X):
    B = X.shape[1] // 2
    return X[:, :B].T + 1j * X[:, B:].T


def _from_complex(c):
    c = np.atleast_2d(c)
    return np.ascontiguousarray(np.concatenate([c.real.T, c.imag.T], axis=1))


def _schedule(n_steps, record_every, window_start, window_steps):
    records = sorted(set(range(0, n_steps + 1, record_every)) | {n_steps})
    points = set(records)
    starts, ends = [], []
    if window_steps:
        s = window_start
        while s + window_steps <= n_steps:
            starts.append(s)
            ends.append(s + window_steps)
            s += window_steps
        points |= set(starts) | set(ends)
    return sorted(points), records, set(starts), ends


def _run_batch(init, ids, n_steps, basis, params, noise, config, nonlinear, G,
               average_from_step, window_start, window_steps, residual):
    dt = config.dt
    gamma = params.gamma
    amp_p, amp_m = _noise_amplitudes(noise, basis, gamma, dt, config.exact_ou)
    wamp_p, wamp_m = _noise_amplitudes(noise, basis, gamma, dt, False)
    modes = np.flatnonzero((amp_p != 0) | (amp_m != 0)).astype(np.int64)
    rot = np.exp((1j * basis.eigenvalues**params.beta - gamma) * dt)
    key0, key1 = trajectory_keys(config.seed, ids)
    merge = basis.grid_points == basis.n_modes
    scheme = _STRANG if config.scheme == "strang_split" else _LIE

    X = _from_complex(init)
    B = len(ids)
    Iacc = np.zeros_like(X)
    Wacc = np.zeros_like(X)
    points, records, win_starts, win_ends = _schedule(
        n_steps, config.record_every, window_start, window_steps
    )
    record_set = set(records)
    n_rec = len(records)
    obs = {name: np.full((B, n_rec), np.nan) for name in ObservableSeries.COLUMNS[1:]}
    mode_power = np.zeros((B, basis.n_modes))
    n_avg = 0
    win_res, win_noise = [], []
    track = residual or bool(window_steps)
    r = 0

    def observe(i, X):
        nonlocal n_avg
        c = _to_complex(X)
        obs["mass"][:, i] = spectral.mass(c)
        obs["energy"][:, i] = spectral.energy(c, basis, params)
        if params.alpha == 1 and G is not None:
            obs["modified_energy"][:, i] = spectral.modified_energy(c, basis, params, G)
        obs["v_norm_sq"][:, i] = spectral.v_norm_sq(c, basis, params.beta)
        if track:
            D = gamma * Iacc - Wacc
            obs["residual_h"][:, i] = np.sqrt(np.sum(D * D, axis=0).reshape(2, B).sum(axis=0))
        if average_from_step is not None and records[i] >= average_from_step:
            mode_power[:] += np.abs(c) ** 2
            n_avg += 1

    for a, b in zip(points[:-1], points[1:]):
        if a in record_set:
            observe(r, X)
            r += 1
        if a in win_starts:
            Iacc[:] = 0.0
            Wacc[:] = 0.0
        _advance(X, a, b - a, basis.synthesis, basis.analysis, rot.real.copy(), rot.imag.copy(),
                 modes, amp_p, amp_m, wamp_p, wamp_m, key0, key1, float(params.alpha),
                 float(params.sigma), dt, scheme, nonlinear, merge, Iacc, Wacc, track)
        if not np.all(np.isfinite(X)):
            bad = ids[~np.all(np.isfinite(X).reshape(X.shape[0], 2, B), axis=(0, 1))]
            raise NumericalAbort(
                f"non-finite state at t={b * dt:g} in trajectories {bad.tolist()}",
                time=b * dt, trajectories=bad,
            )
        if b in win_ends:
            D = gamma * Iacc - Wacc
            win_res.append(np.sqrt(np.sum(D * D, axis=0).reshape(2, B).sum(axis=0)))
            win_noise.append(np.sum(Wacc * Wacc, axis=0).reshape(2, B).sum(axis=0))
    if points[-1] in record_set:
        observe(r, X)
        r += 1
    out = {
        "obs": obs,
        "final": _to_complex(X),
        "mode_power": mode_power / n_avg if n_avg else None,
        "win_res": np.stack(win_res, axis=1) if win_res else np.zeros((B, 0)),
        "win_noise": np.stack(win_noise, axis=1) if win_noise else np.zeros((B, 0)),
    }
    return out, np.array(records) * dt


def run_ensemble(initial, T, basis, params, noise, config, trajectory_ids=None, *,
                 nonlinear=True, G=None, average_from=None, residual=True,
                 window_start=None, window=None, threads=1):
    """Integrate independent trajectories from ``initial`` (shape ``(n_traj, n_modes)``).

    Parameters
    ----------
    T : float
        Final time; the run takes ``round(T / dt)`` steps.
    trajectory_ids : array of int, optional
        Keys of the noise streams; defaults to ``0 .. n_traj - 1``.
    average_from : float, optional
        If given, per-mode ``|c_j|^2`` is averaged over records with ``t >= average_from``.
    residual : bool
        Track ``r(t) = ||gamma int_0^t u ds - sqrt(gamma) Phi W(t)||_H`` (left-endpoint sum).
    window_start, window : float, optional
        Also collect ``r`` over consecutive windows of length ``window`` starting at
        ``window_start``; the accumulation restarts at each window.
    threads : int
        Worker threads over batches; does not change any result.
    """
    init = check_field(initial, basis.n_modes, "initial")
    init = np.atleast_2d(init)
    n_traj = init.shape[0]
    ids = np.arange(n_traj) if trajectory_ids is None else np.asarray(trajectory_ids, dtype=np.int64)
    if ids.shape != (n_traj,):
        raise ParameterError("trajectory_ids must have one entry per initial state")
    T = check_positive(T, "T")
    dt = config.dt
    n_steps = int(round(T / dt))
    if n_steps < 1:
        raise ParameterError(f"T ({T}) must be at least dt ({dt})")
    if n_steps >= 2**32:
        raise ParameterError("step counter exceeds 32 bits")
    if params.gamma == 0 and np.any(noise.truncate(basis.n_modes).mode_variance != 0):
        raise ParameterError("gamma = 0 is the unforced equation; the noise must vanish")
    avg_step = None if average_from is None else int(round(average_from / dt))
    w_steps = 0 if window is None else max(1, int(round(window / dt)))
    w_start = 0 if window_start is None else int(round(window_start / dt))

    bs = config.batch_size
    chunks = [slice(i, min(i + bs, n_traj)) for i in range(0, n_traj, bs)]

    def work(sl):
        return _run_batch(init[sl], ids[sl], n_steps, basis, params, noise, config, nonlinear,
                          G, avg_step, w_start, w_steps, residual)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(sl) for sl in chunks]
    times = results[0][1]
    parts = [res for res, _ in results]
    series = ObservableSeries(
        times, *(np.concatenate([p["obs"][name] for p in parts]) for name in ObservableSeries.COLUMNS[1:])
    )
    if not residual:
        series.residual_h[:] = np.nan
    return TrajectoryBatch(
        series=series,
        final_state=np.concatenate([p["final"] for p in parts]),
        trajectory_ids=ids,
        mode_power_mean=None if avg_step is None else np.concatenate([p["mode_power"] for p in parts]),
        window_residuals=np.concatenate([p["win_res"] for p in parts]),
        window_noise_sq=np.concatenate([p["win_noise"] for p in parts]),
    )


def run(initial, T, basis, params, noise, config, trajectory_id=0, *, nonlinear=True, G=None):
    """Integrate one trajectory and return its :class:`ObservableSeries`."""
    init = check_field(initial, basis.n_modes, "initial")
    if init.ndim != 1:
        raise ParameterError("run() takes a single coefficient vector; use run_ensemble")
    batch = run_ensemble(init[None, :], T, basis, params, noise, replace(config, batch_size=1),
                         [trajectory_id], nonlinear=nonlinear, G=G)
    return batch.series.trajectory(0)
