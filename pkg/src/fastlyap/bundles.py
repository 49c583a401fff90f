"""Registry of worked example systems with their Lyapunov ingredients and gauges.

Each bundle carries the fast system, its limiting (averaged) dynamics when
one exists, a Lyapunov function and the comparison functions needed by the
verifiers.  Numeric parameters not fixed by the models themselves are
defaults chosen here and can be overridden through the parameter records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.integrate import trapezoid

from .constructors import (AVERAGING, STRICTIFICATION, ConstructedLyapunov, chi_gain, chi_gain_with_g,
                           friction_lyapunov, linear_shift_v_alpha, pe_lyapunov, u_alpha, v_alpha)
from .numerics import QuadratureConfig, double_time_integral, weighted_single_integral
from .systems import (K, K_INFINITY, M, CompatibilityConstants, Gauge, LimitingSystem, LyapunovCandidate,
                      SampleGrid, StrictificationData, TimeVaryingSystem)


@dataclass(frozen=True)
class ExampleBundle:
    name: str
    description: str
    sys: TimeVaryingSystem
    V: LyapunovCandidate
    route: str
    lim: Optional[LimitingSystem] = None
    gauges: dict = field(default_factory=dict)
    consts: Optional[CompatibilityConstants] = None
    strictification: Optional[StrictificationData] = None
    params: object = None
    expected: tuple = ()
    expected_failures: tuple = ()
    notes: tuple = ()
    builder: Optional[Callable] = None
    min_alpha: float = 0.0
    ic_radius: float = 3.0
    horizon: float = 2.0
    floor: Optional[Callable] = None

    @property
    def dim(self) -> int:
        return self.sys.dim

    def check_alpha(self, alpha: float) -> float:
        alpha = float(alpha)
        if not (alpha > 0 and alpha > self.min_alpha and math.isfinite(alpha)):
            raise ValueError(f"bundle {self.name!r} requires alpha > {max(self.min_alpha, 0.0):g}, got {alpha:g}")
        return alpha

    def lyapunov(self, alpha: float, cfg: Optional[QuadratureConfig] = None) -> ConstructedLyapunov:
        """The constructed Lyapunov function for this bundle at ``alpha``."""
        alpha = self.check_alpha(alpha)
        if self.builder is not None:
            return self.builder(alpha, cfg)
        if self.route == STRICTIFICATION:
            return u_alpha(self.strictification, alpha, cfg)
        return v_alpha(self.V, self.sys, self.lim, alpha, cfg)

    def decay_floor(self) -> Callable:
        """Guaranteed decay rate as a function of ``|x|``.

        Averaging route: ``(c_bar/2) delta(s/2)^2``.  Strictification route:
        ``W/2``, with ``W`` evaluated on the first axis (the bundles using it
        are scalar with even ``W``).  An explicit ``floor`` takes precedence.
        """
        if self.floor is not None:
            return self.floor
        if self.route == STRICTIFICATION:
            W, n = self.strictification.W, self.dim

            def floor(s):
                x = np.zeros(n)
                x[0] = s
                return 0.5 * float(W(x, 0.0))
            return floor
        c_bar, delta = self.consts.c_bar, self.gauges["delta"]
        return lambda s: 0.5 * c_bar * delta(np.asarray(s, float) / 2.0) ** 2

    def initial_conditions(self, seed: int = 42, count: int = 10) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return rng.uniform(-self.ic_radius, self.ic_radius, size=(count, self.dim))


# nonUGES family

def _arctan_integral(x):
    return x * np.arctan(x) - 0.5 * np.log1p(x * x)


LN_CUBIC_B = (0.5 - math.log(2.0)) / 2.0
LN_CUBIC_A = math.log(2.0) - LN_CUBIC_B


def sigma_ln(s):
    """Odd ``sgn(s) ln(1 + |s|)`` for ``|s| >= 1``, C1-matched odd cubic inside."""
    s = np.asarray(s, float)
    a = np.abs(s)
    inner = LN_CUBIC_A * s + LN_CUBIC_B * s ** 3
    outer = np.sign(s) * np.log1p(a)
    return np.where(a < 1.0, inner, outer)


def sigma_ln_integral(x):
    x = np.asarray(x, float)
    a = np.abs(x)
    inner = 0.5 * LN_CUBIC_A * a ** 2 + 0.25 * LN_CUBIC_B * a ** 4
    v1 = 0.5 * LN_CUBIC_A + 0.25 * LN_CUBIC_B
    outer = v1 + (1 + a) * np.log1p(a) - a - (2.0 * math.log(2.0) - 1.0)
    return np.where(a < 1.0, inner, outer)


def example_non_uges(sigma1: Callable = np.arctan, sigma2: Callable = np.arctan,
                     sigma1_integral: Optional[Callable] = _arctan_integral, name: str = "nonuges",
                     K_bound: float = 51.0, delta_class: str = K, with_input: bool = False,
                     description: str = "scalar UGAS-but-not-UGES averaging example") -> ExampleBundle:
    """Scalar system ``x' = -s1(x)[2 + sin(t + cos s2(x))](1 + 10 sin(alpha t))``.

    Averaging drops the ``(1 + 10 sin)`` factor.  Uses ``V = int_0^x s1``,
    ``delta(s) = 33 s1(2s)`` and ``N(eta) = 60/eta^2``.
    """
    def mu(x, t):
        return 2.0 + np.sin(np.asarray(t, float) + np.cos(sigma2(x)))

    def f(x, t, tau):
        x0 = x[0]
        out = -sigma1(x0) * mu(x0, t) * (1.0 + 10.0 * np.sin(tau))
        return np.asarray(out, float)[..., None]

    def fbar(x, t):
        return np.asarray(-sigma1(x[0]) * mu(x[0], t), float)[..., None]

    if sigma1_integral is None:
        def Vfun(x, t):
            return float(weighted_single_integral(sigma1, 0.0, float(x[0])) if x[0] >= 0
                         else -weighted_single_integral(sigma1, float(x[0]), 0.0))
    else:
        def Vfun(x, t):
            return float(sigma1_integral(x[0]))

    V = LyapunovCandidate(Vfun, lambda x, t: np.array([float(sigma1(x[0]))]), lambda x, t: 0.0, label="int_0^x s1")
    sys = TimeVaryingSystem(1, f, input_dim=1 if with_input else 0, name=name)
    lim = LimitingSystem(1, fbar, name=name + "-limit")
    delta = Gauge(lambda s: 33.0 * sigma1(2.0 * s), delta_class, "33 s1(2s)")
    N = Gauge(lambda eta: 60.0 / np.asarray(eta, float) ** 2, M, "60/eta^2")
    consts = CompatibilityConstants(1.0 / 4356.0, 66.0, K_bound)
    gauges = {"delta": delta, "N": N, "chi": chi_gain(delta, consts.c_bar),
              "nu": Gauge(lambda s: consts.c_bar / 4.0 * delta(np.asarray(s, float) / 2.0) ** 2,
                          delta_class, "c_bar delta(s/2)^2 / 4")}
    expected = ("compatibility", "relate", "m16", "decay")
    if with_input:
        expected += ("iss", "iiss")
    return ExampleBundle(name, description, sys, V, AVERAGING, lim, gauges, consts,
                         params={"sigma1": sigma1, "sigma2": sigma2}, expected=expected,
                         ic_radius=3.0, horizon=2.0)


def non_uges_displayed_v_alpha(bundle: ExampleBundle, alpha: float,
                               cfg: Optional[QuadratureConfig] = None) -> ConstructedLyapunov:
    """``V(xi + 5 sqrt(alpha) s1(xi) int int mu(xi, l) sin(alpha l))`` written out for this family."""
    s1, s2 = bundle.params["sigma1"], bundle.params["sigma2"]
    eta = math.sqrt(alpha)

    def fn(xi, t):
        x0 = float(xi[0])

        def integrand(l):
            return (2.0 + np.sin(l + math.cos(float(s2(x0))))) * np.sin(alpha * l)

        shift = 5.0 * eta * float(s1(x0)) * double_time_integral(integrand, t, 2.0 / eta, cfg, frequency=alpha)
        return bundle.V(np.array([x0 + shift]), t)

    return ConstructedLyapunov(fn, alpha, AVERAGING)


def example_non_uges_ln() -> ExampleBundle:
    """Variant with ``s1(s) = sgn(s) ln(1 + |s|)`` outside the unit interval, so ``delta`` is unbounded."""
    return example_non_uges(sigma_ln, np.arctan, sigma_ln_integral, "nonuges-lnk", K_bound=51.0,
                            delta_class=K_INFINITY, with_input=True,
                            description="UGAS-but-not-UGES example with unbounded gauge, input enabled")


# identification

def _rotating_regressor(t):
    t = np.asarray(t, float)
    return np.stack([np.cos(t), np.sin(t)], axis=-1)


def _default_input_map(x, t, tau):
    return np.array([[math.cos(t)], [math.sin(t)]]) * (1.0 + 0.5 * math.sin(tau))


@dataclass(frozen=True)
class IdentificationParams:
    f_fast: Callable = lambda tau: -1.0 + 2.0 * np.sin(tau)
    f_star: float = -1.0
    m: Callable = _rotating_regressor
    c_tilde: float = 2.0 * math.pi
    alpha_prime: float = math.pi
    beta_prime: float = math.pi
    g: Optional[Callable] = _default_input_map
    c_o: float = 1.5
    f_bound: float = 3.0


def example_identification(params: IdentificationParams = IdentificationParams()) -> ExampleBundle:
    """``x' = f(alpha t) m(t) m(t)^T x + g u`` averaged to ``f* m m^T x``."""
    if params.f_star >= 0:
        raise ValueError("identification example requires f_star < 0")
    ls = np.linspace(0.0, 1000.0, 200001)
    mean = float(trapezoid(params.f_fast(ls), ls) / 1000.0)
    if abs(mean - params.f_star) > 1e-2:
        raise ValueError(f"sampled mean {mean:.4g} of f_fast does not match f_star={params.f_star}")
    m, ff, fs = params.m, params.f_fast, params.f_star
    base = pe_lyapunov(m, fs, params.c_tilde, params.alpha_prime, beta_prime=params.beta_prime)
    scale = 2.0 / params.alpha_prime
    V = LyapunovCandidate(lambda x, t: scale * base.V(x, t), lambda x, t: scale * base.grad_x(x, t),
                          lambda x, t: scale * base.dt(x, t), label="2/alpha' x^T P x")
    lam_max = max(float(np.linalg.eigvalsh(base.P(float(t)))[-1])
                  for t in np.linspace(0.0, params.c_tilde, 65))
    r_bar = max(2.0 * scale * lam_max, 2.0 * abs(fs), 2.0 * params.f_bound) * (1.0 + 1e-9)

    def f(x, t, tau):
        mt = m(t)
        proj = mt @ x
        t_, tau_ = np.broadcast_arrays(np.asarray(t, float), np.asarray(tau, float))
        return (np.asarray(ff(tau_), float) * proj)[..., None] * mt

    def fbar(x, t):
        mt = m(t)
        return fs * (mt @ x)[..., None] * mt

    def builder(alpha, cfg):
        def Dk(l, alpha=alpha):
            mt = m(l)
            return (np.asarray(ff(alpha * np.asarray(l, float)), float) - fs)[..., None, None] * (
                mt[..., :, None] * mt[..., None, :])
        return linear_shift_v_alpha(V, Dk, alpha, 2, cfg)

    n_in = 0 if params.g is None else 1
    sys = TimeVaryingSystem(2, f, g=params.g, input_dim=n_in, name="identification")
    lim = LimitingSystem(2, fbar, name="identification-limit")
    delta = Gauge(lambda s: r_bar * np.asarray(s, float), K_INFINITY, "r_bar s")
    consts = CompatibilityConstants(1.0 / r_bar ** 2, r_bar, params.f_bound)
    N = Gauge(lambda eta: 16.0 / (r_bar * np.asarray(eta, float) ** 2), M, "16/(r_bar eta^2)")
    gauges = {"delta": delta, "N": N, "chi": chi_gain_with_g(delta, consts.c_bar, params.c_o),
              "nu": Gauge(lambda s: consts.c_bar / 4.0 * delta(np.asarray(s, float) / 2.0) ** 2, K_INFINITY)}
    return ExampleBundle("identification", "persistently excited linear identification error dynamics",
                         sys, V, AVERAGING, lim, gauges, consts, params=params,
                         expected=("compatibility", "relate", "m16", "decay", "envelope", "iss"),
                         notes=(f"lambda_max(P) = {lam_max:.6g}", f"r_bar = {r_bar:.6g}"),
                         builder=builder, ic_radius=3.0, horizon=5.0)


# friction

def _sigma_default(tilde):
    return lambda tau: tilde * (1.0 + 0.5 * np.sin(tau))


def _sigma_constant(tilde):
    return lambda tau: tilde + 0.0 * np.asarray(tau, float)


@dataclass(frozen=True)
class FrictionParams:
    sigma_tilde: tuple = (1.0, 0.5, 0.3)
    beta1: float = 1.0
    beta2: float = 10.0
    mu: Callable = lambda v: v * v / (1.0 + v * v)
    k: Callable = lambda t: 1.0 + np.exp(-np.asarray(t, float))
    dk: Callable = lambda t: -np.exp(-np.asarray(t, float))
    k_o: float = 1.0
    k_bar: float = 2.0
    sigma: Optional[tuple] = None

    def coefficients(self) -> tuple:
        if self.sigma is not None:
            return self.sigma
        return tuple(_sigma_default(s) for s in self.sigma_tilde)

    def with_constant_coulomb(self) -> "FrictionParams":
        """Coulomb and static coefficients frozen at their averages."""
        s = self.coefficients()
        return replace(self, sigma=(s[0], _sigma_constant(self.sigma_tilde[1]), _sigma_constant(self.sigma_tilde[2])))

    def validate(self, t_max: float = 50.0, n: int = 2001):
        ts = np.linspace(0.0, t_max, n)
        k, dk = np.asarray(self.k(ts), float), np.asarray(self.dk(ts), float)
        if np.any(k < self.k_o - 1e-12) or np.any(k > self.k_bar + 1e-12):
            raise ValueError("spring stiffness leaves [k_o, k_bar]")
        if np.any(dk > 0):
            raise ValueError("spring stiffness must be nonincreasing")
        s1, s2, s3 = self.sigma_tilde
        if s1 <= 0 or s2 < 0 or s3 < 0 or self.beta1 <= 0 or self.beta2 <= 0:
            raise ValueError("friction coefficients out of range")


def example_friction(params: FrictionParams = FrictionParams(), constant_coulomb: bool = False) -> ExampleBundle:
    """Mass-spring system with fast time-varying viscous, Coulomb and static friction."""
    if constant_coulomb:
        params = params.with_constant_coulomb()
    params.validate()
    s1, s2, s3 = params.coefficients()
    st1, st2, st3 = params.sigma_tilde
    b1, b2, mu, k = params.beta1, params.beta2, params.mu, params.k

    def f(x, t, tau):
        x1, x2 = x[0], x[1]
        t_, tau_ = np.broadcast_arrays(np.asarray(t, float), np.asarray(tau, float))
        dx2 = -s1(tau_) * x2 - k(t_) * x1 - (s2(tau_) + s3(tau_) * math.exp(-b1 * mu(x2))) * math.tanh(b2 * x2)
        return np.stack([np.full(t_.shape, x2), dx2], axis=-1)

    def fbar(x, t):
        x1, x2 = x[0], x[1]
        t_ = np.asarray(t, float)
        dx2 = -st1 * x2 - k(t_) * x1 - (st2 + st3 * math.exp(-b1 * mu(x2))) * math.tanh(b2 * x2)
        return np.stack([np.full(t_.shape, x2), dx2], axis=-1)

    V, fc = friction_lyapunov(params)
    r_bar = max(2.0 * fc.A * params.k_bar + 1.0, 2.0 * (1.0 + fc.S + params.k_bar))

    def gamma(l, xi, alpha):
        x2 = float(xi[1])
        u = alpha * np.asarray(l, float)
        mu_a = s2(u) - st2 + (s3(u) - st3) * math.exp(-b1 * mu(x2))
        return (s1(u) - st1) * x2 + mu_a * math.tanh(b2 * x2)

    def builder(alpha, cfg):
        eta = math.sqrt(alpha)

        def fn(xi, t):
            shift = 0.5 * eta * double_time_integral(lambda l: gamma(l, xi, alpha), t, 2.0 / eta, cfg,
                                                     frequency=alpha)
            return V(np.array([xi[0], xi[1] + shift]), t)
        return ConstructedLyapunov(fn, alpha, AVERAGING, {"V": V})

    sys = TimeVaryingSystem(2, f, g=lambda x, t, tau: np.array([[0.0], [1.0]]), input_dim=1,
                            name="friction-const" if constant_coulomb else "friction")
    lim = LimitingSystem(2, fbar, name="friction-limit")
    delta = Gauge(lambda s: r_bar * np.asarray(s, float), K_INFINITY, "r_bar s")
    consts = CompatibilityConstants(fc.b / r_bar ** 2, r_bar, 50.0)
    N = Gauge(lambda eta: 20.0 / (r_bar * np.asarray(eta, float) ** 2), M, "20/(r_bar eta^2)")
    gauges = {"delta": delta, "N": N, "chi": chi_gain(delta, consts.c_bar)}
    name = "friction-const" if constant_coulomb else "friction"
    return ExampleBundle(name, "mass-spring system with fast time-varying friction", sys, V, AVERAGING, lim, gauges,
                         consts, params={"params": params, "constants": fc, "r_bar": r_bar},
                         expected=("compatibility", "relate", "m16", "limiting_decay", "decay"),
                         notes=(f"A = {fc.A:.6g}, S = {fc.S:.6g}, b = {fc.b:.6g}",),
                         builder=builder, min_alpha=1.0, ic_radius=3.0, horizon=5.0)


def friction_const_closed_form(bundle: ExampleBundle, alpha: float) -> Callable:
    """``V(xi1, xi2 (1 + (eta/2) int int (s1(alpha l) - s1~)), t)`` with the default ``s1``.

    Uses ``int_{t-tau}^t int_s^t sin(alpha l) = (sin(alpha t) - sin(alpha (t - tau)))/alpha^2 - tau cos(alpha t)/alpha``.
    """
    p = bundle.params["params"]
    st1 = p.sigma_tilde[0]
    eta = math.sqrt(alpha)
    tau = 2.0 / eta
    V = bundle.V

    def fn(xi, t):
        dbl = (math.sin(alpha * t) - math.sin(alpha * (t - tau))) / alpha ** 2 - tau * math.cos(alpha * t) / alpha
        factor = 1.0 + 0.5 * eta * 0.5 * st1 * dbl
        return V(np.array([xi[0], xi[1] * factor]), t)

    return fn


# not globally Lipschitz

def example_ngs() -> ExampleBundle:
    """``x' = -x^3 + 10 cos(alpha t) x^3/(1 + x^2)``: strictification route only."""
    def f(x, t, tau):
        x0 = x[0]
        t_, tau_ = np.broadcast_arrays(np.asarray(t, float), np.asarray(tau, float))
        return (-x0 ** 3 + 10.0 * np.cos(tau_) * x0 ** 3 / (1.0 + x0 * x0))[..., None]

    V = LyapunovCandidate(lambda x, t: 0.25 * x[0] ** 4, lambda x, t: np.array([x[0] ** 3]), lambda x, t: 0.0,
                          label="x^4/4")
    sd = StrictificationData(
        V=V, W=lambda x, t: x[0] ** 6, Theta=lambda x, t: x[0] ** 6 / (1.0 + x[0] ** 2),
        p=lambda l: 10.0 * np.cos(l), T=2.0 * math.pi, p_max=10.0,
        Theta_grad=lambda x, t: np.array([(6.0 * x[0] ** 5 + 4.0 * x[0] ** 7) / (1.0 + x[0] ** 2) ** 2]),
        Theta_dt=lambda x, t: 0.0, periodic=True)
    sys = TimeVaryingSystem(1, f, name="ngs")
    lim = LimitingSystem(1, lambda x, t: (-x[0] ** 3 + 0.0 * np.asarray(t, float))[..., None], name="ngs-average")
    return ExampleBundle("ngs", "cubic system that is not globally Lipschitz", sys, V, STRICTIFICATION, lim,
                         {"delta": Gauge(lambda s: 1e3 * np.asarray(s, float), K_INFINITY, "1e3 s")},
                         strictification=sd, expected=("assumption_H", "decay"), expected_failures=("m16",),
                         notes=("state Jacobian grows like x^2, so no global Lipschitz constant exists",),
                         ic_radius=3.0, horizon=0.5)


# saturated feedback

@dataclass(frozen=True)
class SaturatedFeedbackParams:
    p: Callable = lambda l: 10.0 * np.sin(l)
    T: float = 2.0 * math.pi
    a_m: float = 10.0
    u_m: float = 2.0
    R: float = 1.0


def example_saturated_feedback(params: SaturatedFeedbackParams = SaturatedFeedbackParams()) -> ExampleBundle:
    """Closed loop ``x' = p(alpha t) x^2/(1 + x^2) - u_m atan(R x)``."""
    if params.a_m <= 0 or params.u_m <= 0 or params.R <= 0:
        raise ValueError("a_m, u_m and R must be positive")
    ls = np.linspace(0.0, params.T, 4097)
    if np.max(np.abs(np.asarray(params.p(ls), float) * np.ones_like(ls))) > params.a_m * (1 + 1e-12):
        raise ValueError("|p| exceeds a_m")
    p, um, R = params.p, params.u_m, params.R

    def f(x, t, tau):
        x0 = x[0]
        t_, tau_ = np.broadcast_arrays(np.asarray(t, float), np.asarray(tau, float))
        return (np.asarray(p(tau_), float) * x0 * x0 / (1.0 + x0 * x0) - um * math.atan(R * x0)
                + 0.0 * t_)[..., None]

    V = LyapunovCandidate(lambda x, t: 0.5 * x[0] ** 2, lambda x, t: np.array([x[0]]), lambda x, t: 0.0,
                          label="x^2/2")
    sd = StrictificationData(
        V=V, W=lambda x, t: um * x[0] * math.atan(R * x[0]), Theta=lambda x, t: x[0] ** 3 / (1.0 + x[0] ** 2),
        p=p, T=params.T, p_max=params.a_m,
        Theta_grad=lambda x, t: np.array([(3.0 * x[0] ** 2 + x[0] ** 4) / (1.0 + x[0] ** 2) ** 2]),
        Theta_dt=lambda x, t: 0.0, periodic=True)
    notes = ()
    if um * math.pi / 2.0 > um:
        notes = (f"feedback magnitude reaches u_m*pi/2 = {um * math.pi / 2:.4g}, above the stated limit u_m = {um:g}",)
    return ExampleBundle("satfb", "saturated state feedback with an unknown fast parameter",
                         TimeVaryingSystem(1, f, name="satfb"), V, STRICTIFICATION, strictification=sd, params=params,
                         expected=("assumption_H", "decay"), notes=notes, ic_radius=3.0, horizon=1.0)


BUNDLES = {
    "nonuges": example_non_uges,
    "nonuges-lnk": example_non_uges_ln,
    "identification": example_identification,
    "friction": example_friction,
    "friction-const": lambda: example_friction(constant_coulomb=True),
    "ngs": example_ngs,
    "satfb": example_saturated_feedback,
}


def get_bundle(name: str) -> ExampleBundle:
    try:
        factory = BUNDLES[name]
    except KeyError:
        raise KeyError(f"unknown bundle {name!r}; available: {', '.join(BUNDLES)}") from None
    return factory()


def hypothesis_grid(bundle: ExampleBundle, alpha: float = 1.0, seed: int = 42, **overrides) -> SampleGrid:
    kw = dict(per_decade=16, n_times=16, n_taus=64)
    if bundle.dim > 1:
        kw.update(per_decade=8, n_dirs=8, n_times=8, n_taus=32)
    kw.update(overrides)
    return SampleGrid.build(bundle.dim, alpha=alpha, seed=seed, **kw)


def bundle_from_description(desc: dict) -> ExampleBundle:
    """Bundle for a user system given as expression strings.

    Keys: ``dim``, ``f`` (list over ``x1..xn, t, tau``) and optionally
    ``name``, ``fbar`` (over ``x1..xn, t``), ``V`` (default ``|x|^2/2``),
    ``delta`` (in ``s``) with ``c_bar``, ``c_bbar``, ``K``, ``N`` (in ``eta``),
    ``decay_floor`` (in ``s``), ``ic_radius`` and ``horizon``.
    """
    from .expr import ExpressionError, gauge_function, scalar_function, vector_field

    try:
        dim = int(desc["dim"])
        f_exprs = desc["f"]
    except (KeyError, TypeError, ValueError):
        raise ExpressionError("description needs integer 'dim' and list 'f'") from None
    if dim < 1:
        raise ExpressionError("dim must be positive")
    name = str(desc.get("name", "custom"))
    sys = TimeVaryingSystem(dim, vector_field(f_exprs, dim), name=name)
    lim = None
    if "fbar" in desc:
        lim = LimitingSystem(dim, vector_field(desc["fbar"], dim, ("t",)), name=name + "-limit")
    v_expr = desc.get("V", " + ".join(f"x{i + 1}^2/2" for i in range(dim)))
    V = LyapunovCandidate(scalar_function(v_expr, dim), label=v_expr)
    gauges, consts = {}, None
    if "delta" in desc:
        gauges["delta"] = Gauge(gauge_function(desc["delta"]), K, desc["delta"])
        if all(k in desc for k in ("c_bar", "c_bbar", "K")):
            consts = CompatibilityConstants(float(desc["c_bar"]), float(desc["c_bbar"]), float(desc["K"]))
            gauges["chi"] = chi_gain(gauges["delta"], consts.c_bar)
    if "N" in desc:
        gauges["N"] = Gauge(gauge_function(desc["N"], "eta"), M, desc["N"])
    floor = None
    if "decay_floor" in desc:
        g = gauge_function(desc["decay_floor"])
        floor = lambda s: float(g(s))
    elif consts is None:
        floor = lambda s: 0.0

    def builder(alpha, cfg):
        if lim is not None:
            return v_alpha(V, sys, lim, alpha, cfg)
        return ConstructedLyapunov(lambda x, t: V(x, t), alpha, "given")

    bundle = ExampleBundle(name, "user-described system", sys, V, AVERAGING, lim, gauges, consts,
                           params=desc, expected=("decay",), builder=builder,
                           ic_radius=float(desc.get("ic_radius", 3.0)), horizon=float(desc.get("horizon", 2.0)),
                           floor=floor)
    return bundle
