"""Explicit strict Lyapunov functions for fast time-varying systems and their gains."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .numerics import QuadratureConfig, double_time_integral, weighted_single_integral
from .systems import (Gauge, K_INFINITY, LimitingSystem, LyapunovCandidate, StrictificationData,
                      TimeVaryingSystem, fd_gradient, fd_time_derivative)

AVERAGING = "averaging"
STRICTIFICATION = "strictification"


class ExcitationError(ValueError):
    """The regressor fails the persistent-excitation lower bound."""


@dataclass(frozen=True)
class ConstructedLyapunov:
    """A Lyapunov function built from simpler ingredients for a fixed ``alpha``.

    Derivatives are central differences on ``eval``.
    """

    fn: Callable
    alpha: float
    provenance: str
    ingredients: dict = field(default_factory=dict)

    def __call__(self, x, t) -> float:
        return float(self.fn(np.atleast_1d(np.asarray(x, float)), float(t)))

    def grad_x(self, x, t) -> np.ndarray:
        return fd_gradient(self, x, t)

    def dt(self, x, t) -> float:
        return fd_time_derivative(self, x, t)


def r_alpha(x, t: float, alpha: float, sys: TimeVaryingSystem, lim: LimitingSystem,
            cfg: Optional[QuadratureConfig] = None):
    """Displacement ``-(eta/2) int_{t-2/eta}^t int_s^t [f(x,l,alpha l) - fbar(x,l)] dl ds``, eta = sqrt(alpha).

    ``x`` is frozen inside the integrand.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    x = np.atleast_1d(np.asarray(x, float))
    eta = math.sqrt(alpha)

    def diff(l):
        return np.asarray(sys.f(x, l, alpha * l), float) - np.asarray(lim.fbar(x, l), float)

    integral = double_time_integral(diff, t, 2.0 / eta, cfg, frequency=alpha)
    return -0.5 * eta * np.atleast_1d(integral)


def v_alpha(V: LyapunovCandidate, sys: TimeVaryingSystem, lim: LimitingSystem, alpha: float,
            cfg: Optional[QuadratureConfig] = None) -> ConstructedLyapunov:
    """``V^[alpha](xi, t) = V(xi + r_alpha(xi, t), t)``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")

    def fn(xi, t):
        return V(xi + r_alpha(xi, t, alpha, sys, lim, cfg), t)

    return ConstructedLyapunov(fn, float(alpha), AVERAGING, {"V": V, "sys": sys, "lim": lim})


def strictification_coefficient(p: Callable, alpha: float, t: float, T: float,
                                cfg: Optional[QuadratureConfig] = None, periodic: bool = False) -> float:
    """``int_{t-1}^t int_s^t p(alpha l) dl ds``.

    In fast time this is ``alpha^-2 int_a^{a+alpha} (u - a) p(u) du`` with
    ``a = alpha (t - 1)``.  For ``T``-periodic ``p`` the whole periods
    contribute ``n J + T n(n-1)/2 P0`` where ``J`` and ``P0`` are the
    weighted and plain integrals over the first period, so only one period
    and a remainder are integrated.
    """
    if not periodic:
        return double_time_integral(lambda l: p(alpha * l), t, 1.0, cfg, frequency=alpha * 2.0 * math.pi / T)
    a = alpha * (t - 1.0)
    b = alpha * t
    n = int(math.floor(alpha / T))
    freq = 2.0 * math.pi / T
    total = 0.0
    if n > 0:
        J = weighted_single_integral(p, a, a + T, cfg, weight=lambda u: u - a, frequency=freq)
        P0 = weighted_single_integral(p, a, a + T, cfg, frequency=freq)
        total += n * J + T * n * (n - 1) / 2.0 * P0
    c = a + n * T
    if b > c:
        total += weighted_single_integral(p, c, b, cfg, weight=lambda u: u - a, frequency=freq)
    return float(total) / (alpha * alpha)


def u_alpha(sd: StrictificationData, alpha: float, cfg: Optional[QuadratureConfig] = None) -> ConstructedLyapunov:
    """``U^[alpha](x, t) = V(x, t) - (int_{t-1}^t int_s^t p(alpha l) dl ds) Theta(x, t)``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    V, Theta, p, T = sd.V, sd.Theta, sd.p, sd.T

    @lru_cache(maxsize=16384)
    def coefficient(t):
        return strictification_coefficient(p, alpha, t, T, cfg, sd.periodic)

    def fn(x, t):
        return V(x, t) - coefficient(float(t)) * float(Theta(x, t))

    return ConstructedLyapunov(fn, float(alpha), STRICTIFICATION, {"strictification": sd, "coefficient": coefficient})


def linear_shift_v_alpha(V: LyapunovCandidate, D: Callable, alpha: float, dim: int,
                         cfg: Optional[QuadratureConfig] = None) -> ConstructedLyapunov:
    """``V([I - (eta/2) int_{t-2/eta}^t int_s^t D(l) dl ds] x, t)`` for ``f - fbar = D(l) x``.

    ``D`` maps an array of slow times to matrices ``(k, n, n)``; the shift
    matrix depends only on ``t`` and is cached.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    eta = math.sqrt(alpha)

    @lru_cache(maxsize=16384)
    def shift(t):
        M = double_time_integral(D, t, 2.0 / eta, cfg, frequency=alpha)
        return np.eye(dim) - 0.5 * eta * np.asarray(M, float).reshape(dim, dim)

    def fn(x, t):
        return V(shift(float(t)) @ x, t)

    return ConstructedLyapunov(fn, float(alpha), AVERAGING, {"V": V, "shift": shift})


def chi_gain(delta: Gauge, c_bar: float) -> Gauge:
    """ISS gain ``(c_bar/4) delta(s/2)``."""
    if not 0 < c_bar < 1:
        raise ValueError("c_bar must lie in (0, 1)")
    return Gauge(lambda s: 0.25 * c_bar * delta(np.asarray(s, float) / 2.0), delta.declared_class,
                 f"chi[{delta.label}]")


def chi_gain_with_g(delta: Gauge, c_bar: float, c_o: float) -> Gauge:
    """Gain for input-affine systems whose input map grows like ``c_o + sqrt(delta(|x|/2))``."""
    if c_o <= 1:
        raise ValueError("c_o must exceed 1")
    if not 0 < c_bar < 1:
        raise ValueError("c_bar must lie in (0, 1)")

    def chi(s):
        d = delta(np.asarray(s, float) / 2.0)
        return c_bar * d / (4.0 * (c_o + np.sqrt(d)))

    return Gauge(chi, K_INFINITY, f"chi_g[{delta.label}]")


def excitation_gram(m: Callable, t: float, c_tilde: float, cfg: Optional[QuadratureConfig] = None) -> np.ndarray:
    """``int_t^{t + c_tilde} m m^T``."""
    return weighted_single_integral(lambda l: _outer(m, l), t, t + c_tilde, cfg)


def _outer(m, l):
    v = np.asarray(m(l), float)
    return v[..., :, None] * v[..., None, :]


@dataclass(frozen=True)
class QuadraticLyapunov(LyapunovCandidate):
    P: Optional[Callable] = None
    P_dot: Optional[Callable] = None
    kappa: float = 0.0


def pe_lyapunov(m: Callable, f_star: float, c_tilde: float, alpha_prime: float,
                cfg: Optional[QuadratureConfig] = None, beta_prime: Optional[float] = None,
                check_times=None) -> LyapunovCandidate:
    """Quadratic ``x^T P(t) x`` with ``P(t) = kappa I + int_{t-c}^t int_s^t m m^T``.

    ``kappa = c/(2|f*|) + c^4 |f*| / (4 alpha')``.  The regressor is checked
    for unit norm and persistent excitation on ``check_times`` first.
    """
    if f_star >= 0:
        raise ValueError("f_star must be negative")
    if c_tilde <= 0 or alpha_prime <= 0:
        raise ValueError("c_tilde and alpha_prime must be positive")
    ts = np.linspace(0.0, 4.0 * c_tilde, 33) if check_times is None else np.asarray(check_times, float)
    norms = np.linalg.norm(np.asarray(m(ts), float), axis=-1)
    if np.max(np.abs(norms - 1.0)) > 1e-9:
        raise ExcitationError("regressor must have unit norm")
    for t in ts:
        eig = np.linalg.eigvalsh(excitation_gram(m, t, c_tilde, cfg))
        if eig[0] < alpha_prime * (1 - 1e-9):
            raise ExcitationError(f"excitation {eig[0]:.6g} below alpha'={alpha_prime:.6g} at t={t:.6g}")
        if beta_prime is not None and eig[-1] > beta_prime * (1 + 1e-9):
            raise ExcitationError(f"excitation {eig[-1]:.6g} above beta'={beta_prime:.6g} at t={t:.6g}")
    kappa = pe_kappa(f_star, c_tilde, alpha_prime)
    n = np.asarray(m(np.array([0.0])), float).shape[-1]

    @lru_cache(maxsize=16384)
    def P(t):
        return kappa * np.eye(n) + double_time_integral(lambda l: _outer(m, l), t, c_tilde, cfg)

    @lru_cache(maxsize=16384)
    def P_dot(t):
        mt = np.asarray(m(np.array([t])), float)[0]
        return c_tilde * np.outer(mt, mt) - excitation_gram(m, t - c_tilde, c_tilde, cfg)

    return QuadraticLyapunov(
        V=lambda x, t: float(x @ P(float(t)) @ x),
        grad_x=lambda x, t: 2.0 * P(float(t)) @ x,
        dt=lambda x, t: float(x @ P_dot(float(t)) @ x),
        label="pe_quadratic",
        P=P,
        P_dot=P_dot,
        kappa=kappa,
    )


def pe_kappa(f_star: float, c_tilde: float, alpha_prime: float) -> float:
    return c_tilde / (2.0 * abs(f_star)) + c_tilde ** 4 * abs(f_star) / (4.0 * alpha_prime)


@dataclass(frozen=True)
class FrictionConstants:
    A: float
    S: float
    b: float
    k_o: float
    k_bar: float


def friction_constants(params) -> FrictionConstants:
    s1, s2, s3 = params.sigma_tilde
    S = s1 + (s2 + s3) * params.beta2
    A = 1.0 + 1.0 / params.k_o + (1.0 + S * S / params.k_o) / s1
    b = min(params.k_o / 2.0, A * s1 - 0.5)
    return FrictionConstants(A, S, b, params.k_o, params.k_bar)


def friction_lyapunov(params):
    """``V(x, t) = A (k(t) x1^2 + x2^2) + x1 x2`` for the mass-spring friction model.

    Returns the candidate and its constants ``A``, ``S`` and the decay rate ``b``.
    """
    s1, s2, s3 = params.sigma_tilde
    if params.k_o <= 0 or s1 <= 0 or s2 < 0 or s3 < 0 or params.beta2 <= 0:
        raise ValueError("friction parameters out of range")
    consts = friction_constants(params)
    A, k, dk = consts.A, params.k, params.dk

    def V(x, t):
        return A * (k(t) * x[0] ** 2 + x[1] ** 2) + x[0] * x[1]

    def grad(x, t):
        return np.array([2.0 * A * k(t) * x[0] + x[1], 2.0 * A * x[1] + x[0]])

    def dt(x, t):
        return A * dk(t) * x[0] ** 2

    lo = Gauge(lambda s: 0.5 * s ** 2, K_INFINITY, "s^2/2")
    # |x1| + |x2| <= sqrt(2)|x|
    hi = Gauge(lambda s: A * A * consts.k_bar * 2.0 * s ** 2, K_INFINITY, "2 A^2 kbar s^2")
    return LyapunovCandidate(V, grad, dt, (lo, hi), "friction_quadratic"), consts
