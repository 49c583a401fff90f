"""Composite Simpson quadrature with Richardson control, and fixed-step RK4."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .systems import TimeVaryingSystem


class QuadratureError(ArithmeticError):
    """Raised when refinement stalls; carries the last two estimates."""

    def __init__(self, message, estimates=()):
        super().__init__(message)
        self.estimates = tuple(estimates)


class DivergenceError(ArithmeticError):
    """State norm exceeded the blow-up bound; ``trajectory`` holds the finite prefix."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory

    @property
    def last_state(self):
        return None if self.trajectory is None else self.trajectory.states[-1]


@dataclass(frozen=True)
class QuadratureConfig:
    panels: int = 64
    refine_limit: int = 10
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10

    def __post_init__(self):
        if self.panels < 8 or self.panels % 2:
            raise ValueError("panels must be an even integer >= 8")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.refine_limit < 1:
            raise ValueError("refine_limit must be at least 1")


DEFAULT_QUADRATURE = QuadratureConfig()


def panels_for(duration: float, frequency: float, base: int = 64) -> int:
    """Panel count resolving an oscillation of angular ``frequency`` over ``duration``."""
    n = max(base, int(math.ceil(10.0 * abs(duration) * abs(frequency))))
    return n + (n % 2)


def _sample(p: Callable, nodes: np.ndarray) -> np.ndarray:
    vals = np.asarray(p(nodes), dtype=float)
    if vals.ndim == 0:
        vals = np.full(nodes.shape, float(vals))
    return vals


def _simpson(vals: np.ndarray, h: float) -> np.ndarray:
    return h / 3.0 * (vals[0] + vals[-1] + 4.0 * vals[1:-1:2].sum(axis=0) + 2.0 * vals[2:-1:2].sum(axis=0))


def _adaptive_simpson(p: Callable, a: float, b: float, cfg: QuadratureConfig, panels: int):
    """Return ``(value, max_abs_sample)`` of the integral of ``p`` over ``[a, b]``."""
    n = panels + (panels % 2)
    h = (b - a) / n
    nodes = a + h * np.arange(n + 1)
    nodes[-1] = b
    vals = _sample(p, nodes)
    prev = _simpson(vals, h)
    vmax = float(np.max(np.abs(vals)))
    for _ in range(cfg.refine_limit):
        mids = a + h * (np.arange(n) + 0.5)
        mvals = _sample(p, mids)
        vmax = max(vmax, float(np.max(np.abs(mvals))))
        merged = np.empty((2 * n + 1,) + vals.shape[1:])
        merged[0::2] = vals
        merged[1::2] = mvals
        vals, n, h = merged, 2 * n, h / 2.0
        cur = _simpson(vals, h)
        err = float(np.max(np.abs(cur - prev))) / 15.0
        scale = float(np.max(np.abs(cur)))
        if err <= max(cfg.abs_tol, cfg.rel_tol * scale):
            return cur + (cur - prev) / 15.0, vmax
        prev = cur
    raise QuadratureError(
        f"Simpson refinement did not converge on [{a}, {b}] after {cfg.refine_limit} steps",
        estimates=(prev, cur))


def weighted_single_integral(p: Callable, a: float, b: float, cfg: Optional[QuadratureConfig] = None,
                             weight: Optional[Callable] = None, frequency: float = 0.0):
    """Integral of ``weight(l) * p(l)`` over ``[a, b]``; ``p`` must accept an array of nodes.

    ``frequency`` is the fastest angular frequency present in the integrand
    and raises the starting panel count accordingly.
    """
    cfg = cfg or DEFAULT_QUADRATURE
    if b < a:
        raise ValueError("require a <= b")
    if b == a:
        probe = _sample(p, np.array([a]))
        return np.zeros(probe.shape[1:]) if probe.ndim > 1 else 0.0
    if weight is None:
        integrand = p
    else:
        def integrand(l):
            v = _sample(p, l)
            w = np.asarray(weight(l), float)
            return w.reshape(w.shape + (1,) * (v.ndim - 1)) * v
    value, _ = _adaptive_simpson(integrand, a, b, cfg, panels_for(b - a, frequency, cfg.panels))
    return float(value) if np.ndim(value) == 0 else value


def double_time_integral(p: Callable, t: float, tau: float, cfg: Optional[QuadratureConfig] = None,
                         frequency: float = 0.0):
    """``I(t, tau) = int_{t-tau}^t int_s^t p(l) dl ds`` via the weight ``l - (t - tau)``."""
    cfg = cfg or DEFAULT_QUADRATURE
    if tau <= 0:
        raise ValueError("tau must be positive")
    start = t - tau

    pmax = [0.0]

    def integrand(l):
        v = _sample(p, l)
        pmax[0] = max(pmax[0], float(np.max(np.abs(v))))
        w = l - start
        return w.reshape(w.shape + (1,) * (v.ndim - 1)) * v

    value, _ = _adaptive_simpson(integrand, start, t, cfg, panels_for(tau, frequency, cfg.panels))
    bound = 0.5 * tau * tau * pmax[0] + max(cfg.abs_tol, cfg.rel_tol * float(np.max(np.abs(value))))
    if float(np.max(np.abs(value))) > bound * (1 + 1e-9):
        raise QuadratureError("double integral violates the tau^2/2 max|p| bound", estimates=(value,))
    return float(value) if np.ndim(value) == 0 else value


def double_integral_derivative_check(p: Callable, t: float, tau: float, h: float = 1e-4,
                                     cfg: Optional[QuadratureConfig] = None) -> float:
    """Mismatch between a centered difference of ``I(., tau)`` and ``tau p(t) - int p``."""
    numeric = (np.asarray(double_time_integral(p, t + h, tau, cfg))
               - np.asarray(double_time_integral(p, t - h, tau, cfg))) / (2.0 * h)
    exact = tau * _sample(p, np.array([t]))[0] - np.asarray(weighted_single_integral(p, t - tau, t, cfg))
    return float(np.max(np.abs(numeric - exact)))


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    alpha: float
    t0: float
    x0: np.ndarray
    inputs: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")

    def __len__(self):
        return len(self.times)

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)


def step_size(alpha: float, h_base: float = 1e-2) -> float:
    return min(h_base, 0.05 * 2.0 * math.pi / alpha)


def integrate(sys: TimeVaryingSystem, alpha: float, x0, t0: float, t_end: float,
              u: Optional[Callable] = None, h_base: float = 1e-2, blowup: float = 1e8) -> Trajectory:
    """Classical RK4 on ``x' = f(x, t, alpha t) [+ g u(t)]`` with a fast-time-aware step."""
    if not t_end > t0:
        raise ValueError("t_end must exceed t0")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    if x.size != sys.dim:
        raise ValueError(f"initial state has dimension {x.size}, system has {sys.dim}")
    steps = int(math.ceil((t_end - t0) / step_size(alpha, h_base) - 1e-9))
    h = (t_end - t0) / steps
    f = sys.f

    if u is None:
        def rhs(y, s):
            return np.asarray(f(y, s, alpha * s), float)
    elif sys.g is None:
        def rhs(y, s):
            return np.asarray(f(y, s, alpha * s), float) + np.asarray(u(s), float)
    else:
        g = sys.g

        def rhs(y, s):
            gm = np.asarray(g(y, s, alpha * s), float).reshape(sys.dim, -1)
            return np.asarray(f(y, s, alpha * s), float) + gm @ np.atleast_1d(np.asarray(u(s), float))

    times = t0 + h * np.arange(steps + 1)
    times[-1] = t_end
    states = np.empty((steps + 1, sys.dim))
    states[0] = x
    for i in range(steps):
        s = times[i]
        k1 = rhs(x, s)
        k2 = rhs(x + 0.5 * h * k1, s + 0.5 * h)
        k3 = rhs(x + 0.5 * h * k2, s + 0.5 * h)
        k4 = rhs(x + h * k3, s + h)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        nx = float(np.sqrt(np.dot(x, x)))
        if not nx <= blowup:
            partial = Trajectory(times[: i + 1].copy(), states[: i + 1].copy(), alpha, t0,
                                 states[0].copy(), _inputs(u, times[: i + 1]))
            raise DivergenceError(f"state norm {nx:.3g} exceeded {blowup:.3g} at t={times[i + 1]:.6g}", partial)
        states[i + 1] = x
    return Trajectory(times, states, float(alpha), float(t0), states[0].copy(), _inputs(u, times))


def _inputs(u, times):
    if u is None:
        return None
    return np.array([np.atleast_1d(np.asarray(u(s), float)) for s in times])


@dataclass(frozen=True)
class LyapunovTrace:
    index: np.ndarray
    t: np.ndarray
    V: np.ndarray
    Vdot: np.ndarray


def lyapunov_along_trajectory(traj: Trajectory, Vfun: Callable, indices=None) -> LyapunovTrace:
    """Values of ``V(x(t), t)`` and its numerical time derivative along ``traj``.

    Samples with two neighbours on each side use the fourth-order centered
    stencil (the integrator's grid is uniform); the remaining samples fall
    back to second-order centered or one-sided stencils.  ``indices``
    restricts the evaluation to a subset of samples.
    """
    n = len(traj)
    if n < 3:
        raise ValueError("trajectory needs at least 3 samples")
    idx = np.arange(n) if indices is None else np.unique(np.asarray(indices, dtype=int))
    cache: dict[int, float] = {}

    def val(i):
        if i not in cache:
            cache[i] = float(Vfun(traj.states[i], traj.times[i]))
        return cache[i]

    ts = traj.times
    vs, ds = np.empty(idx.size), np.empty(idx.size)
    for j, i in enumerate(idx):
        vs[j] = val(i)
        if 1 < i < n - 2:
            h = (ts[i + 2] - ts[i - 2]) / 4.0
            ds[j] = (-val(i + 2) + 8.0 * (val(i + 1) - val(i - 1)) + val(i - 2)) / (12.0 * h)
        elif 0 < i < n - 1:
            ds[j] = (val(i + 1) - val(i - 1)) / (ts[i + 1] - ts[i - 1])
        elif i == 0:
            ds[j] = (-3.0 * val(0) + 4.0 * val(1) - val(2)) / (ts[2] - ts[0])
        else:
            ds[j] = (3.0 * val(n - 1) - 4.0 * val(n - 2) + val(n - 3)) / (ts[n - 1] - ts[n - 3])
    return LyapunovTrace(idx, ts[idx], vs, ds)
