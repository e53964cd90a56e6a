"""Closed-form convergence constants and bound curves.

Everything here is a pure function of user-supplied constants: window
singular-value bounds, SNR bounds, regressor norm bound, separation margin.
Nothing is estimated from data (see `evaluation.assumption_diagnostics`).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, PoleDegeneracy
from .model import coefficients_from_poles as poles_to_coefficients  # noqa: F401  (re-exported)

_POLE_TOL = 1e-12


@dataclass(frozen=True)
class SpectralConstants:
    sigma_min: float
    sigma_max: float
    F_min: float
    F_max: float
    kappa_min: float
    kappa_max: float
    xi_min: float
    xi_max: float
    n: int
    N_R: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class TheoryInputs:
    sigma_n: float = 0.0
    S_min: float | None = None
    S_max: float | None = None
    phi_max: float | None = None
    psi: float | None = None
    n_max: float = 0.0
    eps0: float = 0.0
    nu: float = 1e-4
    m: int = 1

    def __post_init__(self):
        for name in ("sigma_n", "S_min", "S_max", "phi_max", "psi", "n_max", "eps0", "nu"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.m < 1:
            raise ConfigError("m must be at least 1")

    def check_snr_ratio(self, constants: SpectralConstants) -> bool:
        """Whether S_max <= kappa_max * S_min; warns (does not raise) when violated."""
        if self.S_max is None or self.S_min is None:
            return True
        ok = self.S_max <= constants.kappa_max * self.S_min
        if not ok:
            warnings.warn(
                f"SNR upper bound {self.S_max:.4g} exceeds kappa_max * S_min = "
                f"{constants.kappa_max * self.S_min:.4g}; local convergence guarantees may not apply",
                stacklevel=2,
            )
        return ok


def spectral_constants(sigma_min, sigma_max, n, N_R) -> SpectralConstants:
    """Window conditioning constants from singular-value bounds of a length-N_R window."""
    if not 0 < sigma_min <= sigma_max:
        raise ConfigError(f"need 0 < sigma_min <= sigma_max, got {sigma_min}, {sigma_max}")
    if n < 1 or N_R < 1:
        raise ConfigError("n and N_R must be positive")
    smin2, smax2 = sigma_min ** 2, sigma_max ** 2
    return SpectralConstants(
        sigma_min=float(sigma_min), sigma_max=float(sigma_max),
        F_min=math.sqrt(n) * sigma_min, F_max=math.sqrt(n) * sigma_max,
        kappa_min=math.sqrt(n), kappa_max=math.sqrt(((n - 1) * smax2 + smin2) / smin2),
        xi_min=math.sqrt((smax2 + (n - 1) * smin2) / smax2), xi_max=math.sqrt(n),
        n=int(n), N_R=int(N_R),
    )


def constants_from_correlation(lam_min, lam_max, n, N_R) -> SpectralConstants:
    """Constants when the window Gram matrix is approximated by N_R times the regressor correlation."""
    if not 0 < lam_min <= lam_max:
        raise ConfigError(f"need 0 < lambda_min <= lambda_max, got {lam_min}, {lam_max}")
    sc = spectral_constants(math.sqrt(N_R * lam_min), math.sqrt(N_R * lam_max), n, N_R)
    kappa = math.sqrt((n - 1) * lam_max / lam_min + 1)
    xi = math.sqrt((n - 1) * lam_min / lam_max + 1)
    if not (math.isclose(kappa, sc.kappa_max, rel_tol=1e-12) and math.isclose(xi, sc.xi_min, rel_tol=1e-12)):
        raise ArithmeticError("eigenvalue and singular-value forms of kappa/xi disagree")
    return sc


class BoundCurves(NamedTuple):
    lower: np.ndarray
    upper: np.ndarray


def _affine_decay(q, d, x0, k):
    """x_k for x_j = q x_{j-1} + d, x_0 = x0."""
    qk = q ** k
    if q == 1.0:
        return x0 + d * k
    return qk * x0 + d * (1.0 - qk) / (1.0 - q)


def _recursions(c: SpectralConstants, sigma_n, gamma_tilde):
    """(q, d) of the upper and lower per-update recursions x <- q x + d."""
    s2 = float(sigma_n) ** 2
    q_up = 1.0 - c.kappa_max ** -2 / gamma_tilde
    d_up = gamma_tilde * c.N_R * s2 / c.F_min ** 2
    q_lo = max(0.0, 1.0 - gamma_tilde * c.xi_min ** -2)
    d_lo = c.N_R * s2 / (gamma_tilde * c.F_max ** 2)
    return (q_up, d_up), (q_lo, d_lo)


def curve_asymptotes(constants: SpectralConstants, sigma_n, gamma_tilde=1.0) -> tuple[float, float]:
    """Limits of the (lower, upper) curves as the update count grows."""
    (q_up, d_up), (q_lo, d_lo) = _recursions(constants, sigma_n, gamma_tilde)
    return d_lo / (1.0 - q_lo), d_up / (1.0 - q_up)


def partial_bound_curves(constants: SpectralConstants, sigma_n, S_min, eps0_sq, steps,
                         phi_max=None, gamma_tilde=1.0) -> BoundCurves:
    """Lower and upper curves on E||eps||^2 after r = 1 .. steps updates.

    Entry r-1 holds the bound after r updates. `S_min=None` drops the SNR
    term (noiseless data); `phi_max=None` zeroes the lower curve's initial
    value. With a forgetting factor pass gamma_tilde = gamma / (1 - gamma);
    the lower curve is floored at zero when its contraction factor goes
    negative.
    """
    c = constants
    N_R = c.N_R
    if steps < N_R:
        raise ConfigError(f"steps ({steps}) must be at least N_R ({N_R})")
    if gamma_tilde < 1.0:
        raise ConfigError("gamma_tilde must be at least 1")
    s2 = float(sigma_n) ** 2
    snr_term = 0.0 if S_min is None or S_min == math.inf else 1.0 / S_min ** 2
    floor = 0.0 if phi_max is None else s2 / phi_max ** 2

    (q_up, d_up), (q_lo, d_lo) = _recursions(c, sigma_n, gamma_tilde)

    r = np.arange(1, steps + 1)
    upper = np.empty(steps)
    lower = np.empty(steps)
    early = r < N_R
    upper[early] = eps0_sq + r[early] * snr_term
    lower[early] = floor
    k = r[~early] - N_R + 1
    upper[~early] = _affine_decay(q_up, d_up, eps0_sq + (N_R - 1) * snr_term, k)
    lower[~early] = _affine_decay(q_lo, d_lo, floor, k)
    return BoundCurves(np.maximum(lower, 0.0), upper)


def _check_denominator(value, what):
    if abs(value) < _POLE_TOL or not np.isfinite(value):
        raise PoleDegeneracy(f"{what} vanishes: poles on or at the unit circle")


def correlation_matrix_order3(a1, a2, c1, sigma_u, sigma_n):
    """Stationary correlation of [y_{t-1}, y_{t-2}, u_{t-1}] for
    y_t = a1 y_{t-1} + a2 y_{t-2} + c1 u_{t-1} + n_t with white u and n.

    Returns (R, eigenvalues ascending).
    """
    den = (a2 + 1) * (a1 + a2 - 1) * (a1 - a2 + 1)
    _check_denominator(den, "correlation denominator")
    c = (sigma_n ** 2 + c1 * sigma_u ** 2) / den
    r0 = (a2 - 1) * c
    r1 = -a1 * c
    R = np.array([[r0, r1, 0.0], [r1, r0, 0.0], [0.0, 0.0, sigma_u ** 2]])
    eig = np.sort(np.array([r0 + r1, r0 - r1, sigma_u ** 2]))
    return R, eig


def _check_poles(p1, p2):
    for p in (p1, p2):
        if abs(p) >= 1.0 - _POLE_TOL:
            raise PoleDegeneracy(f"pole {p} is not strictly inside the unit circle")


def order3_eigenvalues_from_poles(p1, p2, c1, sigma_u):
    """Noise-free correlation eigenvalues written in terms of the AR poles."""
    _check_poles(p1, p2)
    g = c1 * sigma_u ** 2 / (1 - p1 * p2)
    return g / ((1 - p1) * (1 - p2)), g / ((1 + p1) * (1 + p2)), sigma_u ** 2


def condition_lower_bound(p1, p2) -> float:
    _check_poles(p1, p2)
    return 1.0 / ((1 - p1 * p2) * (1 - p1) * (1 - p2))


@dataclass(frozen=True)
class LocalRadius:
    value: float
    applicable: bool


def local_radius(psi, phi_max, n_max, nu, S_min=None) -> LocalRadius:
    """Radius within which every candidate keeps receiving only its own data.

    Negative values are returned as-is with applicable=False.
    """
    if phi_max <= 0 or nu <= 0:
        raise ConfigError("phi_max and nu must be positive")
    noise_term = 0.0
    if n_max > 0:
        if S_min is None or S_min <= 0:
            raise ConfigError("S_min must be positive when n_max > 0")
        noise_term = n_max / (nu * S_min)
    eps = (psi - noise_term - 3.0 * n_max) / (2.0 * phi_max)
    return LocalRadius(eps, eps > 0)


@dataclass(frozen=True)
class SuccessProbability:
    probability: float
    precondition_met: bool


def local_success_probability(m, N_R, eps0, eps_prime, S_min=None) -> SuccessProbability:
    """Lower bound on the chance of identifying every mode correctly, clamped to [0, 1].

    S_min=None selects the noiseless form.
    """
    if eps_prime <= 0:
        raise ConfigError("eps_prime must be positive")
    inner = eps0 ** 2
    if S_min is not None:
        inner += N_R / S_min ** 2
    p = 1.0 - 2.0 * m * math.sqrt(N_R / eps_prime ** 2 * inner)
    met = math.sqrt(N_R * inner) <= eps_prime
    return SuccessProbability(min(1.0, max(0.0, p)), met)
