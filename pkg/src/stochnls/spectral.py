"""Dirichlet sine eigenbasis, the operators A and F, and the mass/energy functionals.

A field ``u`` on ``D = (0, L)`` is stored by its coefficients ``c_j = (u, e_j)`` in the
orthonormal eigenbasis ``e_j(x) = sqrt(2/L) sin(j pi x / L)``.  Every function here takes
coefficient arrays whose *last* axis runs over the modes, so batches of fields (leading
axes) are handled without loops.

Physical values live on the ``m`` interior nodes ``x_k = k L / (m + 1)`` of a type-I sine
grid.  With uniform weights ``h = L / (m + 1)`` the sampled eigenfunctions are exactly
orthonormal, so synthesis followed by analysis is the identity whenever ``m >= n``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from ._validation import (
    ParameterError,
    check_field,
    check_grid_values,
    check_int,
    check_positive,
)

__all__ = [
    "Basis",
    "ModelParams",
    "NoiseOperator",
    "build_basis",
    "to_physical",
    "to_spectral",
    "apply_A",
    "nonlinearity_F",
    "pointwise_F",
    "mass",
    "mass_quadrature",
    "lp_norm",
    "inner",
    "v_norm_sq",
    "energy",
    "modified_energy",
    "energy_alpha",
    "estimate_G",
    "gn_certificate_gap",
    "hs_norms",
    "phi_alpha_bound",
    "lipschitz_constant_F",
    "random_fields",
]


@dataclass(frozen=True)
class Basis:
    """Truncated Dirichlet eigensystem on ``(0, domain_length)``.

    Parameters
    ----------
    domain_length : float
        Length ``L`` of the interval.
    n_modes : int
        Galerkin cutoff ``n``.
    grid_points : int
        Number ``m >= n`` of interior collocation nodes.
    """

    domain_length: float
    n_modes: int
    grid_points: int
    eigenvalues: np.ndarray = field(init=False, repr=False, compare=False)
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    quadrature_weights: np.ndarray = field(init=False, repr=False, compare=False)
    synthesis: np.ndarray = field(init=False, repr=False, compare=False)
    analysis: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        L = check_positive(self.domain_length, "domain_length")
        n = check_int(self.n_modes, "n_modes")
        m = check_int(self.grid_points, "grid_points")
        if m < n:
            raise ParameterError(f"grid_points ({m}) must be >= n_modes ({n})")
        j = np.arange(1, n + 1)
        k = np.arange(1, m + 1)
        h = L / (m + 1)
        synth = math.sqrt(2.0 / L) * np.sin(np.pi * np.outer(k, j) / (m + 1))
        for name, value in (
            ("eigenvalues", (j * np.pi / L) ** 2),
            ("nodes", k * h),
            ("quadrature_weights", np.full(m, h)),
            ("synthesis", np.ascontiguousarray(synth)),
            ("analysis", np.ascontiguousarray(h * synth.T)),
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def spacing(self):
        return self.domain_length / (self.grid_points + 1)

    def truncate(self, n_modes):
        """Basis for ``P_n`` with a smaller cutoff on the same grid."""
        return Basis(self.domain_length, n_modes, self.grid_points)


def build_basis(domain_length, n_modes, grid_points=None):
    """Construct a :class:`Basis`; ``grid_points`` defaults to ``n_modes``."""
    if grid_points is None:
        grid_points = n_modes
    return Basis(domain_length, n_modes, grid_points)


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the damped, forced fractional NLS equation.

    ``alpha = +1`` is focusing, ``alpha = -1`` defocusing.  Construction enforces the
    admissible range of ``sigma`` for the given ``beta`` in dimension one.
    """

    sigma: float
    alpha: int
    beta: float
    gamma: float = 0.0
    dimension: int = 1

    def __post_init__(self):
        sigma = check_positive(self.sigma, "sigma")
        beta = check_positive(self.beta, "beta")
        check_positive(self.gamma, "gamma", allow_zero=True)
        if self.alpha not in (-1, 1):
            raise ParameterError(f"alpha must be +1 or -1, got {self.alpha!r}")
        if self.dimension != 1:
            raise ParameterError("only dimension 1 is implemented")
        d = self.dimension
        if self.alpha == 1:
            if not sigma < 2 * beta / d:
                raise ParameterError(
                    f"focusing case requires sigma < 2*beta/d = {2 * beta / d:g}, got sigma={sigma:g}"
                )
        elif d > 2 * beta and not sigma < 2 * beta / (d - 2 * beta):
            raise ParameterError(
                f"defocusing case with d > 2*beta requires sigma < {2 * beta / (d - 2 * beta):g}"
            )

    @property
    def power(self):
        """Exponent ``2 + 2 sigma`` of the potential term."""
        return 2.0 + 2.0 * self.sigma

    @property
    def mass_exponent(self):
        """Exponent ``q`` with ``G * M(u)**q`` in the modified energy (focusing only)."""
        b, s, d = self.beta, self.sigma, self.dimension
        return 1.0 + 2.0 * b * s / (2.0 * b - s * d)

    @property
    def high_regularity(self):
        """Whether ``beta > d/2`` (energy-space functions are bounded)."""
        return self.beta > self.dimension / 2.0

    def with_gamma(self, gamma):
        return ModelParams(self.sigma, self.alpha, self.beta, gamma, self.dimension)


@dataclass(frozen=True)
class NoiseOperator:
    """Diagonal noise ``Phi``: mode ``j`` is forced by ``phi_plus[j] W_j + i phi_minus[j] W_-j``."""

    phi_plus: np.ndarray
    phi_minus: np.ndarray

    def __post_init__(self):
        plus = np.array(self.phi_plus, dtype=float).reshape(-1)
        minus = np.array(self.phi_minus, dtype=float).reshape(-1)
        if plus.shape != minus.shape:
            raise ParameterError("phi_plus and phi_minus must have the same length")
        if not (np.all(np.isfinite(plus)) and np.all(np.isfinite(minus))):
            raise ParameterError("noise coefficients must be finite")
        plus.setflags(write=False)
        minus.setflags(write=False)
        object.__setattr__(self, "phi_plus", plus)
        object.__setattr__(self, "phi_minus", minus)

    @classmethod
    def zeros(cls, n_modes):
        return cls(np.zeros(n_modes), np.zeros(n_modes))

    @classmethod
    def flat(cls, k, n_modes, amplitude=None, hs_norm_sq=None):
        """``phi_j = phi_-j = c`` for ``j <= k``; ``c`` from ``amplitude`` or ``hs_norm_sq``."""
        k = check_int(k, "k")
        if (amplitude is None) == (hs_norm_sq is None):
            raise ParameterError("give exactly one of amplitude, hs_norm_sq")
        if amplitude is None:
            amplitude = math.sqrt(check_positive(hs_norm_sq, "hs_norm_sq", True) / (2 * k))
        size = max(k, n_modes)
        phi = np.zeros(size)
        phi[:k] = amplitude
        return cls(phi, phi.copy())

    @classmethod
    def power_decay(cls, p, cutoff, amplitude=1.0):
        """``phi_j = phi_-j = amplitude * j**-p`` for ``j <= cutoff``."""
        j = np.arange(1, check_int(cutoff, "cutoff") + 1)
        phi = amplitude * j ** (-float(p))
        return cls(phi, phi.copy())

    def __len__(self):
        return self.phi_plus.shape[0]

    def truncate(self, n_modes):
        """``P_n Phi`` padded with zeros if the noise has fewer than ``n_modes`` entries."""
        plus = np.zeros(n_modes)
        minus = np.zeros(n_modes)
        k = min(n_modes, len(self))
        plus[:k] = self.phi_plus[:k]
        minus[:k] = self.phi_minus[:k]
        return NoiseOperator(plus, minus)

    def scaled(self, factor):
        return NoiseOperator(factor * self.phi_plus, factor * self.phi_minus)

    @property
    def mode_variance(self):
        """``phi_j**2 + phi_-j**2`` per mode."""
        return self.phi_plus**2 + self.phi_minus**2

    @property
    def isotropic(self):
        return bool(np.array_equal(np.abs(self.phi_plus), np.abs(self.phi_minus)))


# ---------------------------------------------------------------------------
# transforms and operators


def to_physical(coeffs, basis):
    """Values ``u(x_k) = sum_j c_j e_j(x_k)`` on the collocation nodes."""
    c = check_field(coeffs, basis.n_modes)
    return c @ basis.synthesis.T


def to_spectral(values, basis):
    """Discrete projection ``c_j = h sum_k u(x_k) e_j(x_k)`` onto the first n modes."""
    u = check_grid_values(values, basis.grid_points)
    return u @ basis.analysis.T


def apply_A(coeffs, basis, beta):
    c = check_field(coeffs, basis.n_modes)
    return basis.eigenvalues ** float(beta) * c


def pointwise_F(values, sigma):
    """``|u|**(2 sigma) u`` evaluated pointwise."""
    u = np.asarray(values, dtype=np.complex128)
    return np.abs(u) ** (2.0 * sigma) * u


def nonlinearity_F(coeffs, basis, sigma):
    """Collocation approximation of ``P_n F(u)``."""
    return to_spectral(pointwise_F(to_physical(coeffs, basis), sigma), basis)


def inner(a, b):
    """``(a, b)_H`` on coefficients, conjugate-linear in the second slot."""
    return np.sum(np.asarray(a) * np.conj(b), axis=-1)


def mass(coeffs):
    c = np.asarray(coeffs)
    return np.sum(c.real**2 + c.imag**2, axis=-1)


def mass_quadrature(values, basis):
    u = check_grid_values(values, basis.grid_points)
    return np.sum(basis.quadrature_weights * (u.real**2 + u.imag**2), axis=-1)


def lp_norm(values, basis, p):
    """Discrete ``L^p`` norm of grid values using the collocation weights."""
    u = check_grid_values(values, basis.grid_points)
    return np.sum(basis.quadrature_weights * np.abs(u) ** p, axis=-1) ** (1.0 / p)


def _potential(coeffs, basis, sigma):
    u = to_physical(coeffs, basis)
    return np.sum(basis.quadrature_weights * np.abs(u) ** (2.0 + 2.0 * sigma), axis=-1)


def v_norm_sq(coeffs, basis, beta):
    """``||u||_V**2 = sum (1 + lambda_j**beta) |c_j|**2``."""
    c = check_field(coeffs, basis.n_modes)
    return np.sum((1.0 + basis.eigenvalues ** float(beta)) * (c.real**2 + c.imag**2), axis=-1)


def energy(coeffs, basis, params):
    c = check_field(coeffs, basis.n_modes)
    kinetic = 0.5 * np.sum(basis.eigenvalues**params.beta * (c.real**2 + c.imag**2), axis=-1)
    return kinetic - params.alpha / params.power * _potential(c, basis, params.sigma)


def modified_energy(coeffs, basis, params, G):
    """Focusing energy made coercive by the mass term ``G * M(u)**q``."""
    if params.alpha != 1:
        raise ParameterError("the modified energy is defined for the focusing case only")
    c = check_field(coeffs, basis.n_modes)
    m = mass(c)
    return (
        0.5 * v_norm_sq(c, basis, params.beta)
        - _potential(c, basis, params.sigma) / params.power
        + G * m**params.mass_exponent
    )


def energy_alpha(coeffs, basis, params, G=None):
    """``E`` for defocusing, ``E_1`` for focusing (the functional whose moments are bounded)."""
    if params.alpha == 1:
        if G is None:
            raise ParameterError("focusing energy moments need the constant G")
        return modified_energy(coeffs, basis, params, G)
    return energy(coeffs, basis, params)


def lipschitz_constant_F(sigma):
    """Constant in ``| |a|^2s a - |b|^2s b | <= C (|a|^2s + |b|^2s) |a - b|``.

    The derivative of ``z -> |z|^2s z`` has operator norm ``(1 + 2s)|z|^2s``, and on the
    segment ``[a, b]`` one has ``|z|^2s <= max(|a|, |b|)^2s``.
    """
    return 1.0 + 2.0 * float(sigma)


# ---------------------------------------------------------------------------
# Gagliardo-Nirenberg constant


class _FieldSampler:
    """Draws unit-mass coefficient vectors with a chosen spectral profile."""

    def __init__(self, basis):
        n, L = basis.n_modes, basis.domain_length
        self.basis = basis
        self.j = np.arange(1, n + 1)
        self.fine = np.linspace(0.0, L, 8 * n + 2)[1:-1]
        self.fine_w = self.fine[1] - self.fine[0]
        self.modes_on_fine = math.sqrt(2.0 / L) * np.sin(np.pi * np.outer(self.fine, self.j) / L)

    def draw(self, rng, choice):
        n, L = self.basis.n_modes, self.basis.domain_length
        if choice == 0:
            decay = rng.uniform(0.0, 2.5)
            c = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * self.j ** (-decay)
        else:
            width = math.exp(rng.uniform(math.log(L / (2 * n)), math.log(L / 3)))
            centre = rng.uniform(0.2 * L, 0.8 * L)
            z = (self.fine - centre) / width
            prof = np.exp(-0.5 * z**2) if choice == 1 else 1.0 / np.cosh(z)
            prof = prof * np.exp(1j * rng.uniform(0, 2 * np.pi))
            c = self.fine_w * prof @ self.modes_on_fine
        norm = math.sqrt(float(mass(c)))
        return c / norm if norm > 0 else c


def random_fields(basis, n_samples, rng, kind="mixed"):
    """Random coefficient vectors of unit mass with varied spectral profiles.

    ``kind`` is ``"gaussian"`` (decaying random coefficients), ``"bump"`` (localized
    Gaussian/sech profiles with a random width and position) or ``"mixed"``.
    """
    kinds = {"gaussian": [0], "bump": [1, 2], "mixed": [0, 1, 2]}[kind]
    sampler = _FieldSampler(basis)
    out = np.empty((n_samples, basis.n_modes), dtype=np.complex128)
    for i in range(n_samples):
        out[i] = sampler.draw(rng, kinds[i % len(kinds)])
    return out


def _amplitude_sup_G(coeffs, basis, params):
    """Least ``G`` making the GN-type bound hold for every multiple ``t u``, per field."""
    s, q = params.sigma, params.mass_exponent
    a = _potential(coeffs, basis, s) / params.power
    b = v_norm_sq(coeffs, basis, params.beta) / (2.0 * params.power)
    m = mass(coeffs)
    # maximiser x* = t*^2 of (a x^(1+s) - b x) / (m^q x^q)
    log_x = (np.log(b) + math.log(q - 1.0) - np.log(a) - math.log(q - 1.0 - s)) / s
    log_val = (1.0 - q) * log_x + np.log(b) + math.log(s / (q - 1.0 - s)) - q * np.log(m)
    return np.exp(log_val)


def gn_certificate_gap(coeffs, basis, params, G):
    """Slack of the bound ``|u|_p^p/p <= ||u||_V^2/(2p) + G M(u)^q``; negative means violated."""
    c = check_field(coeffs, basis.n_modes)
    lhs = _potential(c, basis, params.sigma) / params.power
    rhs = v_norm_sq(c, basis, params.beta) / (2.0 * params.power) + G * mass(c) ** params.mass_exponent
    return rhs - lhs


def estimate_G(basis, params, n_samples=4096, seed=0, margin=0.1):
    """Certified constant ``G`` for the modified energy, from sampled fields.

    Each sample ``i`` is drawn from its own generator seeded with ``(seed, i)``, so a
    larger sample set contains every field of a smaller one.  For a given profile the
    worst amplitude is found in closed form, which covers every scaling of the sample.
    """
    if params.alpha != 1:
        raise ParameterError("G is only needed in the focusing case")
    n_samples = check_int(n_samples, "n_samples")
    sampler = _FieldSampler(basis)
    fields = np.empty((n_samples, basis.n_modes), dtype=np.complex128)
    for i in range(n_samples):
        rng = np.random.default_rng((seed, i))
        fields[i] = sampler.draw(rng, i % 3) * 10.0 ** rng.uniform(-2, 2)
    worst = float(np.max(_amplitude_sup_G(fields, basis, params)))
    G = (1.0 + margin) * worst
    if not np.isfinite(G) or G <= 0:
        raise ParameterError(f"no finite G certifies the sample set (got {G})")
    return G


# ---------------------------------------------------------------------------
# noise norms


def hs_norms(noise, basis, beta):
    """Squared Hilbert-Schmidt norms ``(||Phi||^2_HS(Y,H), ||Phi||^2_HS(Y,V))`` of ``P_n Phi``."""
    pn = noise.truncate(basis.n_modes)
    var = pn.mode_variance
    return float(np.sum(var)), float(np.sum((1.0 + basis.eigenvalues ** float(beta)) * var))


def phi_alpha_bound(params, noise, basis, gamma_eff):
    """Energy-moment scale ``phi_alpha(d, beta, sigma, gamma_eff, Phi)``."""
    gamma_eff = check_positive(gamma_eff, "gamma_eff")
    h2, v2 = hs_norms(noise, basis, params.beta)
    s = params.sigma
    value = v2 + v2 ** (1.0 + s) * gamma_eff ** (-s)
    if params.alpha == 1:
        k = params.mass_exponent - 1.0
        value += h2 ** (1.0 + k) * gamma_eff ** (-k)
    return value
