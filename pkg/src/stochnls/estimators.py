"""scikit-learn style wrappers around the functional API.

``FieldObservables`` is a stateless transformer from coefficient vectors to observables.
``StationaryEnsemble`` and ``GammaSweep`` follow the estimator protocol (constructor
stores hyper-parameters, ``fit`` computes trailing-underscore attributes) but take no
training data: the "data" is the simulated ensemble itself.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import spectral
from . import stationary as st
from ._validation import ParameterError, check_field, check_int, check_positive
from .integrator import IntegratorConfig

__all__ = ["FieldObservables", "StationaryEnsemble", "GammaSweep"]

OBSERVABLES = ("mass", "energy", "v_norm_sq", "potential")


class _ModelMixin:
    def _build(self):
        basis = spectral.build_basis(self.domain_length, self.n_modes, self.grid_points)
        params = spectral.ModelParams(self.sigma, self.alpha, self.beta,
                                      getattr(self, "gamma", 0.0) or 0.0)
        return basis, params


class FieldObservables(_ModelMixin, TransformerMixin, BaseEstimator):
    """Map spectral fields ``(n_samples, n_modes)`` to ``mass, energy, ||u||_V^2, ||u||_p^p``.

    With ``include_modified=True`` (focusing only) a fifth column holds the modified energy;
    ``G`` is estimated in ``fit`` when not given.
    """

    def __init__(self, domain_length=np.pi, n_modes=32, grid_points=None, sigma=1.0, alpha=-1,
                 beta=1.0, include_modified=False, G=None):
        self.domain_length = domain_length
        self.n_modes = n_modes
        self.grid_points = grid_points
        self.sigma = sigma
        self.alpha = alpha
        self.beta = beta
        self.include_modified = include_modified
        self.G = G

    def fit(self, X=None, y=None):
        self.basis_, self.params_ = self._build()
        if X is not None:
            check_field(X, self.basis_.n_modes, "X")
        if self.include_modified:
            if self.params_.alpha != 1:
                raise ParameterError("the modified energy needs alpha = 1")
            self.G_ = self.G if self.G is not None else spectral.estimate_G(self.basis_, self.params_)
        names = list(OBSERVABLES) + (["modified_energy"] if self.include_modified else [])
        self.feature_names_out_ = np.array(names, dtype=object)
        self.n_features_in_ = self.basis_.n_modes
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        c = np.atleast_2d(check_field(X, self.basis_.n_modes, "X"))
        b, p = self.basis_, self.params_
        cols = [
            spectral.mass(c),
            spectral.energy(c, b, p),
            spectral.v_norm_sq(c, b, p.beta),
            spectral._potential(c, b, p.sigma),
        ]
        if self.include_modified:
            cols.append(spectral.modified_energy(c, b, p, self.G_))
        return np.column_stack(cols)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "feature_names_out_")
        return self.feature_names_out_


class _SimulationMixin(_ModelMixin):
    def _noise(self, basis):
        if self.noise is not None:
            phi = np.asarray(self.noise, dtype=float)
            if phi.ndim == 1:
                return spectral.NoiseOperator(phi, phi)
            return spectral.NoiseOperator(phi[0], phi[1])
        return spectral.NoiseOperator.flat(basis.n_modes, basis.n_modes, hs_norm_sq=self.hs_norm_sq)

    def _config(self):
        return IntegratorConfig(dt=self.dt, scheme=self.scheme, seed=self.seed,
                                record_every=self.record_every, exact_ou=self.exact_ou)


class StationaryEnsemble(_SimulationMixin, BaseEstimator):
    """Stationary statistics from ``n_traj`` zero-start trajectories.

    ``noise`` is either ``None`` (flat noise on every mode with ``||Phi||_H^2 = hs_norm_sq``),
    one array used for both ``phi_j`` and ``phi_-j``, or a ``(2, n)`` array.

    Attributes
    ----------
    stats_ : EnsembleStats
    mean_mass_, mean_mass_se_ : float
    G_ : float or None
    """

    def __init__(self, domain_length=np.pi, n_modes=32, grid_points=None, sigma=1.0, alpha=-1,
                 beta=1.0, gamma=0.5, noise=None, hs_norm_sq=1.0, dt=1e-3, scheme="strang_split",
                 seed=0, record_every=10, exact_ou=False, n_traj=64, T=200.0, burn_in=None,
                 nonlinear=True, threads=1):
        self.domain_length = domain_length
        self.n_modes = n_modes
        self.grid_points = grid_points
        self.sigma = sigma
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.noise = noise
        self.hs_norm_sq = hs_norm_sq
        self.dt = dt
        self.scheme = scheme
        self.seed = seed
        self.record_every = record_every
        self.exact_ou = exact_ou
        self.n_traj = n_traj
        self.T = T
        self.burn_in = burn_in
        self.nonlinear = nonlinear
        self.threads = threads

    def fit(self, X=None, y=None):
        """Run the ensemble; ``X`` and ``y`` are ignored."""
        check_positive(self.gamma, "gamma")
        check_int(self.n_traj, "n_traj", minimum=2)
        basis, params = self._build()
        noise = self._noise(basis)
        G = spectral.estimate_G(basis, params) if params.alpha == 1 else None
        self.stats_ = st.ensemble_stationary(basis, params, noise, self._config(), self.n_traj,
                                             self.T, self.burn_in, nonlinear=self.nonlinear, G=G,
                                             threads=self.threads)
        self.G_ = G
        self.basis_, self.params_, self.noise_ = basis, params, noise
        self.mean_mass_ = self.stats_.mean_mass
        self.mean_mass_se_ = self.stats_.mean_mass_se
        return self

    def score(self, X=None, y=None):
        """Negative distance of the mean mass from ``||P_n Phi||_H^2 / 2`` in SE units."""
        check_is_fitted(self, "stats_")
        return -self.stats_.mass_z


class GammaSweep(_SimulationMixin, BaseEstimator):
    """Stationary ensembles along decreasing ``gammas``; see :func:`stationary.gamma_sweep`."""

    def __init__(self, domain_length=np.pi, n_modes=32, grid_points=None, sigma=1.0, alpha=-1,
                 beta=1.0, gammas=(1.0, 0.3, 0.1, 0.03), noise=None, hs_norm_sq=1.0, dt=1e-3,
                 scheme="strang_split", seed=0, record_every=10, exact_ou=False, n_traj=64,
                 T=200.0, burn_in=None, window=1.0, nonlinear=True, threads=1):
        self.domain_length = domain_length
        self.n_modes = n_modes
        self.grid_points = grid_points
        self.sigma = sigma
        self.alpha = alpha
        self.beta = beta
        self.gammas = gammas
        self.noise = noise
        self.hs_norm_sq = hs_norm_sq
        self.dt = dt
        self.scheme = scheme
        self.seed = seed
        self.record_every = record_every
        self.exact_ou = exact_ou
        self.n_traj = n_traj
        self.T = T
        self.burn_in = burn_in
        self.window = window
        self.nonlinear = nonlinear
        self.threads = threads

    def fit(self, X=None, y=None):
        basis, params = self._build()
        noise = self._noise(basis)
        self.result_ = st.gamma_sweep(basis, params, noise, self._config(), list(self.gammas),
                                      self.n_traj, self.T, self.burn_in, window=self.window,
                                      nonlinear=self.nonlinear, threads=self.threads)
        self.residual_exponent_ = self.result_.residual_exponent
        self.mean_mass_ = np.array([s.mean_mass if s else np.nan for s in self.result_.stats])
        return self
