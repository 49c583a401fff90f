"""Domain types: dynamics, comparison functions, Lyapunov candidates, reports.

Vectorization convention used throughout the package: a state ``x`` is a
1-D array of length ``dim``.  Time arguments ``t`` (slow time) and ``tau``
(fast time) may be scalars or 1-D arrays that broadcast against each other;
vector fields return an array of shape ``broadcast(t, tau).shape + (dim,)``.
Lyapunov functions and comparison functions only need scalar time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np
from scipy.stats import norm as _normal
from scipy.stats import qmc

K = "K"
K_INFINITY = "K_infinity"
M = "M"
POSITIVE_DEFINITE = "positive_definite"
GAUGE_CLASSES = (K, K_INFINITY, M, POSITIVE_DEFINITE)

# strict inequality encoded as ``margin <= STRICT``
STRICT = -np.finfo(float).tiny

FD_REL_STEP = 1e-6
CONSISTENCY_RTOL = 1e-5


def _as_state(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


def fd_step(x) -> float:
    return FD_REL_STEP * max(1.0, float(np.linalg.norm(x)))


def fd_gradient(fun: Callable, x, t: float, h: Optional[float] = None) -> np.ndarray:
    """Central-difference gradient of ``fun(x, t)`` in ``x``."""
    x = _as_state(x)
    h = fd_step(x) if h is None else h
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (fun(x + e, t) - fun(x - e, t)) / (2.0 * h)
    return grad


def fd_time_derivative(fun: Callable, x, t: float, h: Optional[float] = None) -> float:
    h = FD_REL_STEP * max(1.0, abs(t)) if h is None else h
    x = _as_state(x)
    return (fun(x, t + h) - fun(x, t - h)) / (2.0 * h)


def fd_jacobian(fun: Callable, x, *args, h: Optional[float] = None) -> np.ndarray:
    """Central-difference Jacobian of ``fun(x, *args)`` (scalar time args)."""
    x = _as_state(x)
    h = fd_step(x) if h is None else h
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(fun(x + e, *args), float) - np.asarray(fun(x - e, *args), float)) / (2.0 * h))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class TimeVaryingSystem:
    """Dynamics ``x' = f(x, t, tau)`` evaluated at ``tau = alpha * t``.

    ``g`` is an optional input map returning an ``(dim, input_dim)`` matrix.
    Without ``g`` an input signal enters additively (``x' = f + u``).
    """

    dim: int
    f: Callable
    jac_x: Optional[Callable] = None
    g: Optional[Callable] = None
    input_dim: int = 0
    name: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if self.input_dim < 0:
            raise ValueError("input_dim must be nonnegative")

    def rhs(self, x, t, tau) -> np.ndarray:
        return np.asarray(self.f(_as_state(x), t, tau), dtype=float)

    def jacobian(self, x, t: float, tau: float) -> np.ndarray:
        if self.jac_x is not None:
            return np.atleast_2d(np.asarray(self.jac_x(_as_state(x), t, tau), dtype=float))
        return fd_jacobian(self.rhs, x, t, tau)

    def input_matrix(self, x, t: float, tau: float) -> np.ndarray:
        if self.g is None:
            return np.eye(self.dim)
        return np.atleast_2d(np.asarray(self.g(_as_state(x), t, tau), dtype=float)).reshape(self.dim, -1)


@dataclass(frozen=True)
class LimitingSystem:
    dim: int
    fbar: Callable
    jac_x: Optional[Callable] = None
    name: str = ""

    def rhs(self, x, t) -> np.ndarray:
        return np.asarray(self.fbar(_as_state(x), t), dtype=float)

    def jacobian(self, x, t: float) -> np.ndarray:
        if self.jac_x is not None:
            return np.atleast_2d(np.asarray(self.jac_x(_as_state(x), t), dtype=float))
        return fd_jacobian(self.rhs, x, t)

    def as_system(self) -> TimeVaryingSystem:
        """View the limiting dynamics as a system that ignores fast time."""
        fbar = self.fbar

        def f(x, t, tau):
            return np.asarray(fbar(x, np.asarray(t, float) + 0.0 * np.asarray(tau, float)), float)

        jac = None if self.jac_x is None else (lambda x, t, tau: self.jac_x(x, t))
        return TimeVaryingSystem(self.dim, f, jac_x=jac, name=self.name or "limiting")


@dataclass(frozen=True)
class Gauge:
    """A scalar comparison function with a declared class (trusted annotation)."""

    eval: Callable
    declared_class: str = K
    label: str = ""

    def __post_init__(self):
        if self.declared_class not in GAUGE_CLASSES:
            raise ValueError(f"unknown gauge class {self.declared_class!r}")

    def __call__(self, s):
        out = np.asarray(self.eval(np.asarray(s, dtype=float)), dtype=float)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LyapunovCandidate:
    V: Callable
    grad_x: Optional[Callable] = None
    dt: Optional[Callable] = None
    bounds: Optional[tuple] = None
    label: str = ""

    def __call__(self, x, t) -> float:
        return float(self.V(_as_state(x), float(t)))

    def gradient(self, x, t) -> np.ndarray:
        if self.grad_x is not None:
            return np.atleast_1d(np.asarray(self.grad_x(_as_state(x), float(t)), dtype=float))
        return fd_gradient(self, x, t)

    def time_derivative(self, x, t) -> float:
        if self.dt is not None:
            return float(self.dt(_as_state(x), float(t)))
        return fd_time_derivative(self, x, t)

    def derivative_along(self, x, t, velocity) -> float:
        """``V_t + V_x . velocity`` at ``(x, t)``."""
        return self.time_derivative(x, t) + float(np.dot(self.gradient(x, t), velocity))


@dataclass(frozen=True)
class CompatibilityConstants:
    c_bar: float
    c_bbar: float
    K: float
    eta_0: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.c_bar < 1.0:
            raise ValueError("c_bar must lie in (0, 1)")
        if self.c_bbar <= 0:
            raise ValueError("c_bbar must be positive")
        if self.K <= 1:
            raise ValueError("K must exceed 1")
        if self.eta_0 <= 0:
            raise ValueError("eta_0 must be positive")


@dataclass(frozen=True)
class StrictificationData:
    """Ingredients of a nonstrict decay estimate ``V' <= -W + p(alpha t) Theta``."""

    V: LyapunovCandidate
    W: Callable
    Theta: Callable
    p: Callable
    T: float
    p_max: float
    c: Optional[float] = None
    Theta_grad: Optional[Callable] = None
    Theta_dt: Optional[Callable] = None
    periodic: bool = False

    def theta_gradient(self, x, t) -> np.ndarray:
        if self.Theta_grad is not None:
            return np.atleast_1d(np.asarray(self.Theta_grad(_as_state(x), float(t)), dtype=float))
        return fd_gradient(lambda y, s: float(self.Theta(y, s)), x, t)

    def theta_time_derivative(self, x, t) -> float:
        if self.Theta_dt is not None:
            return float(self.Theta_dt(_as_state(x), float(t)))
        return fd_time_derivative(lambda y, s: float(self.Theta(y, s)), x, t)

    def check_invariants(self, samples_per_period: int = 4096, periods=range(-2, 3)):
        """Sample ``|p| <= p_max`` and the zero-mean property over whole periods."""
        from .numerics import QuadratureConfig, weighted_single_integral

        if self.T <= 0 or self.p_max <= 0:
            raise ValueError("T and p_max must be positive")
        ls = np.linspace(0.0, self.T, samples_per_period + 1)
        bound = CertificateReport.from_margins(
            "p_bound", np.abs(np.asarray(self.p(ls), float)) - self.p_max,
            [{"l": float(v)} for v in ls], tolerance=1e-12)
        cfg = QuadratureConfig(panels=256)
        integrals = []
        for k in periods:
            val = weighted_single_integral(self.p, k * self.T, (k + 1) * self.T, cfg)
            integrals.append(float(np.abs(val)))
        zero_mean = CertificateReport.from_margins(
            "zero_mean", integrals, [{"k": int(k)} for k in periods], tolerance=1e-10)
        return CertificateReport.combine("strictification_invariants", [bound, zero_mean])


@dataclass(frozen=True)
class CertificateReport:
    """Outcome of a falsification check; ``passed`` iff ``worst_margin <= tolerance``."""

    name: str
    passed: bool
    worst_margin: float
    worst_point: Optional[dict]
    samples_total: int
    tolerance: float
    details: dict = field(default_factory=dict)
    subreports: tuple = ()

    def __post_init__(self):
        if self.passed != (self.worst_margin <= self.tolerance):
            raise ValueError("passed flag inconsistent with worst_margin and tolerance")

    @classmethod
    def from_margins(cls, name: str, margins, points: Sequence, tolerance: float,
                     details: Optional[dict] = None) -> "CertificateReport":
        """Reduce per-sample margins; the lowest index wins ties."""
        margins = np.asarray(margins, dtype=float).ravel()
        details = dict(details or {})
        if margins.size == 0:
            return cls(name, True, -math.inf, None, 0, tolerance, details)
        bad = ~np.isfinite(margins)
        if bad.any():
            i = int(np.argmax(bad))
            details["non_finite"] = int(bad.sum())
            return cls(name, False, math.inf, points[i], int(margins.size), tolerance, details)
        i = int(np.argmax(margins))
        worst = float(margins[i])
        return cls(name, worst <= tolerance, worst, points[i], int(margins.size), tolerance, details)

    @classmethod
    def combine(cls, name: str, reports: Sequence["CertificateReport"],
                details: Optional[dict] = None) -> "CertificateReport":
        """Merge sub-reports; the one exceeding its tolerance the most is reported."""
        reports = tuple(reports)
        if not reports:
            return cls(name, True, -math.inf, None, 0, 0.0, dict(details or {}))
        excess = [r.worst_margin - r.tolerance if math.isfinite(r.worst_margin) else r.worst_margin
                  for r in reports]
        i = int(np.argmax(excess))
        w = reports[i]
        point = None if w.worst_point is None else {"check": w.name, **w.worst_point}
        return cls(name, all(r.passed for r in reports), w.worst_margin, point,
                   sum(r.samples_total for r in reports), w.tolerance, dict(details or {}), reports)

    def sub(self, name: str) -> "CertificateReport":
        for r in self.subreports:
            if r.name == name:
                return r
        raise KeyError(name)


@dataclass(frozen=True)
class EnvelopeFit:
    D: float
    lam: float
    residual: float
    details: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SampleGrid:
    """Deterministic sample of states, slow times and fast times.

    States lie on a log-radial grid with directions drawn from a seeded
    scrambled Halton sequence mapped onto the unit sphere.
    """

    dim: int
    states: np.ndarray
    times: np.ndarray
    taus: np.ndarray
    params: dict

    @classmethod
    def build(cls, dim: int, alpha: float = 1.0, seed: int = 42, per_decade: int = 16,
              r_min: float = 1e-2, r_max: float = 1e2, n_dirs: Optional[int] = None,
              n_times: int = 16, n_taus: int = 64, t_span=(0.0, 20.0)) -> "SampleGrid":
        if per_decade < 1 or n_times < 1 or n_taus < 1:
            raise ValueError("grid must be nonempty")
        decades = math.log10(r_max / r_min)
        radii = np.logspace(math.log10(r_min), math.log10(r_max), int(round(decades * per_decade)) + 1)
        dirs = unit_directions(dim, n_dirs, seed)
        states = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, dim)
        times = np.linspace(t_span[0], t_span[1], n_times)
        taus = np.linspace(0.0, t_span[1] * alpha, n_taus)
        params = dict(dim=dim, alpha=alpha, seed=seed, per_decade=per_decade, r_min=r_min,
                      r_max=r_max, n_dirs=n_dirs, n_times=n_times, n_taus=n_taus, t_span=tuple(t_span))
        return cls(dim, states, times, taus, params)

    def refined(self) -> "SampleGrid":
        """Same ranges with half the spacing in radius, time and fast time."""
        p = dict(self.params)
        p["per_decade"] *= 2
        p["n_times"] = 2 * p["n_times"] - 1
        p["n_taus"] = 2 * p["n_taus"] - 1
        return SampleGrid.build(**p)

    @property
    def radii(self) -> np.ndarray:
        return np.unique(np.round(np.linalg.norm(self.states, axis=1), 14))

    def time_pairs(self):
        """Flattened ``(t, tau)`` product arrays."""
        tt, uu = np.meshgrid(self.times, self.taus, indexing="ij")
        return tt.ravel(), uu.ravel()


def unit_directions(dim: int, count: Optional[int] = None, seed: int = 42) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    count = count or 8
    if dim == 2:
        u = qmc.Halton(d=1, scramble=True, seed=seed).random(count)[:, 0]
        ang = 2.0 * np.pi * np.sort(u)
        return np.column_stack([np.cos(ang), np.sin(ang)])
    pts = qmc.Halton(d=dim, scramble=True, seed=seed).random(count)
    z = _normal.ppf(np.clip(pts, 1e-12, 1 - 1e-12))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _point(x=None, **kw) -> dict:
    out: dict[str, Any] = {}
    if x is not None:
        out["x"] = [float(v) for v in np.atleast_1d(x)]
    for k, v in kw.items():
        out[k] = float(v) if isinstance(v, (int, float, np.floating, np.integer)) else v
    return out


def validate_system(sys: TimeVaryingSystem, grid: SampleGrid, tolerance: float = 1e-12) -> CertificateReport:
    """Nullness ``f(0, t, tau) = 0`` on the grid, plus Jacobian consistency when supplied."""
    tt, uu = grid.time_pairs()
    if tt.size == 0:
        raise ValueError("grid is empty")
    zero = np.zeros(sys.dim)
    with np.errstate(all="ignore"):
        vals = np.asarray(sys.f(zero, tt, uu), float).reshape(tt.size, -1)
    margins = np.linalg.norm(vals, axis=1)
    points = [_point(zero, t=a, tau=b) for a, b in zip(tt, uu)]
    reports = [CertificateReport.from_margins("nullness", margins, points, tolerance)]
    if sys.jac_x is not None:
        errs, pts = [], []
        tsub, usub = grid.times[:4], grid.taus[:: max(1, grid.taus.size // 4)]
        for x in grid.states:
            for a in tsub:
                for b in usub:
                    ja = sys.jacobian(x, a, b)
                    jn = fd_jacobian(sys.rhs, x, a, b)
                    errs.append(np.linalg.norm(ja - jn) / max(1.0, np.linalg.norm(ja)))
                    pts.append(_point(x, t=a, tau=b))
        reports.append(CertificateReport.from_margins("jacobian_consistency", errs, pts, CONSISTENCY_RTOL))
    return CertificateReport.combine("validate_system", reports)


def gradient_consistency(V: LyapunovCandidate, grid: SampleGrid, h_rel: Optional[float] = None,
                         max_states: int = 200) -> CertificateReport:
    """Relative mismatch between supplied gradients and central differences."""
    errs, pts = [], []
    states = grid.states[:: max(1, len(grid.states) // max_states)]
    for x in states:
        for t in grid.times[:4]:
            h = None if h_rel is None else h_rel * max(1.0, float(np.linalg.norm(x)))
            if V.grad_x is not None:
                ga = V.gradient(x, t)
                gn = fd_gradient(V, x, t, h)
                errs.append(np.linalg.norm(ga - gn) / max(1.0, np.linalg.norm(ga)))
                pts.append(_point(x, t=t, part="grad_x"))
            if V.dt is not None:
                da = V.time_derivative(x, t)
                ht = None if h_rel is None else h_rel * max(1.0, abs(t))
                dn = fd_time_derivative(V, x, t, ht)
                errs.append(abs(da - dn) / max(1.0, abs(da)))
                pts.append(_point(x, t=t, part="dt"))
    return CertificateReport.from_margins("gradient_consistency", errs, pts, CONSISTENCY_RTOL)


def check_positive_definite(V: LyapunovCandidate, grid: SampleGrid, tolerance: float = 1e-12) -> CertificateReport:
    """``V(0, t) = 0`` and ``V(x, t) > 0`` for sampled ``x != 0``."""
    margins, pts = [], []
    zero = np.zeros(grid.dim)
    for t in grid.times:
        margins.append(abs(V(zero, t)))
        pts.append(_point(zero, t=t))
    at_zero = CertificateReport.from_margins("vanishes_at_origin", margins, pts, tolerance)
    margins, pts = [], []
    for x in grid.states:
        for t in grid.times:
            margins.append(-V(x, t))
            pts.append(_point(x, t=t))
    positive = CertificateReport.from_margins("positive", margins, pts, STRICT)
    return CertificateReport.combine("positive_definite", [at_zero, positive])


def default_gauge_grid(n: int = 64, lo: float = 1.0, hi: float = 1e4) -> np.ndarray:
    return np.geomspace(lo, hi, n)


def gauge_class_check(g: Gauge, grid=None) -> CertificateReport:
    """Trend check of the declared class on a geometric grid of positive arguments."""
    s = default_gauge_grid() if grid is None else np.asarray(grid, dtype=float)
    if s.size < 32 or np.any(np.diff(s) <= 0) or s[0] <= 0:
        raise ValueError("grid must be strictly increasing, positive, with at least 32 points")
    vals = np.asarray(g(s), dtype=float) * np.ones_like(s)
    idx_pts = [_point(s=v) for v in s]
    reports = [CertificateReport.from_margins("nonnegative", -vals, idx_pts, 0.0)]
    cls = g.declared_class
    if cls in (K, K_INFINITY, POSITIVE_DEFINITE):
        reports.append(CertificateReport.from_margins("zero_at_zero", [abs(g(0.0))], [_point(s=0.0)], 1e-14))
    if cls in (K, K_INFINITY):
        reports.append(CertificateReport.from_margins(
            "increasing", vals[:-1] - vals[1:], idx_pts[1:], STRICT))
    elif cls == POSITIVE_DEFINITE:
        reports.append(CertificateReport.from_margins("positive", -vals, idx_pts, STRICT))
    elif cls == M:
        prod = s * vals
        reports.append(CertificateReport.from_margins(
            "product_nonincreasing", prod[1:] - prod[:-1], idx_pts[1:], 0.0))
        reports.append(CertificateReport.from_margins(
            "product_decays", [prod[-1] - prod[0] / 10.0], [idx_pts[-1]], STRICT))
    return CertificateReport.combine(f"gauge_class[{cls}]", reports, {"label": g.label})
