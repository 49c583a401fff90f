"""Falsification checks of the stability hypotheses and trajectory certificates.

Every universally quantified hypothesis is sampled on a finite grid.  A
report can refute a hypothesis; a passing report only says no sampled
point violated it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .numerics import (DivergenceError, QuadratureConfig, QuadratureError, Trajectory, integrate,
                       lyapunov_along_trajectory, weighted_single_integral)
from .systems import (STRICT, CertificateReport, CompatibilityConstants, EnvelopeFit, Gauge,
                      LimitingSystem, LyapunovCandidate, SampleGrid, StrictificationData,
                      TimeVaryingSystem, _point, unit_directions)

GRID_TOL = 1e-9
DECAY_TOL = 1e-6


def scaled_margin(lhs, rhs):
    """``lhs - rhs`` relative to the magnitude of the larger side (absolute below 1)."""
    lhs, rhs = np.asarray(lhs, float), np.asarray(rhs, float)
    return (lhs - rhs) / np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))


def _fd_jacobians(fun, x, *times):
    """Central-difference Jacobians at a fixed state for arrays of times, shape ``(k, n, n)``."""
    h = 1e-6 * max(1.0, float(np.linalg.norm(x)))
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        hi = np.asarray(fun(x + e, *times), float)
        lo = np.asarray(fun(x - e, *times), float)
        cols.append((hi - lo) / (2 * h))
    return np.stack(cols, axis=-1)


def check_compatibility(V: LyapunovCandidate, lim: LimitingSystem, delta: Gauge,
                        consts: CompatibilityConstants, grid: SampleGrid,
                        tolerance: float = GRID_TOL) -> CertificateReport:
    """Sampled delta-compatibility conditions P1 (decay), P2 (growth) and P3 (linear bound)."""
    if grid.states.size == 0:
        raise ValueError("grid is empty")
    p1, p2a, p2b, pts = [], [], [], []
    for x in grid.states:
        s = float(np.linalg.norm(x))
        d, dh = delta(s), delta(s / 2.0)
        for t in grid.times:
            fb = lim.rhs(x, t)
            grad = V.gradient(x, t)
            vdot = V.time_derivative(x, t) + float(grad @ fb)
            p1.append(scaled_margin(vdot, -consts.c_bar * d * d))
            p2a.append(scaled_margin(np.linalg.norm(grad), d))
            p2b.append(scaled_margin(np.linalg.norm(fb), dh))
            pts.append(_point(x, t=t))
    radii = np.concatenate([grid.radii, np.geomspace(1e-4, 1e4, 65)])
    p3 = scaled_margin(delta(radii), consts.c_bbar * radii)
    reports = [
        CertificateReport.from_margins("P1", p1, pts, tolerance),
        CertificateReport.combine("P2", [
            CertificateReport.from_margins("P2_gradient", p2a, pts, tolerance),
            CertificateReport.from_margins("P2_vector_field", p2b, pts, tolerance),
        ]),
        CertificateReport.from_margins("P3", p3, [_point(s=r) for r in radii], tolerance),
    ]
    return CertificateReport.combine("compatibility", reports)


@dataclass(frozen=True)
class RelateCheckGrid:
    states: np.ndarray
    r_values: np.ndarray
    eta_values: np.ndarray
    eta_0: float = 1.0

    def __post_init__(self):
        if self.eta_0 <= 0 or np.any(np.asarray(self.eta_values) < self.eta_0):
            raise ValueError("eta_values must lie above eta_0 > 0")

    @classmethod
    def build(cls, dim: int, seed: int = 42, per_decade: int = 4, r_min: float = 1e-2, r_max: float = 1e2,
              n_r: int = 8, r_span: float = 20.0, eta_0: float = 1.0, eta_max: float = 1e3,
              n_eta: int = 13) -> "RelateCheckGrid":
        decades = math.log10(r_max / r_min)
        radii = np.logspace(math.log10(r_min), math.log10(r_max), int(round(decades * per_decade)) + 1)
        dirs = unit_directions(dim, 4 if dim > 1 else None, seed)
        states = (radii[:, None, None] * dirs[None]).reshape(-1, dim)
        return cls(states, np.linspace(0.0, r_span, n_r), np.geomspace(eta_0, eta_max, n_eta), eta_0)


def check_relate(sys: TimeVaryingSystem, lim: LimitingSystem, delta: Gauge, N: Gauge,
                 grid: RelateCheckGrid, cfg: Optional[QuadratureConfig] = None,
                 tolerance: float = 1e-3) -> CertificateReport:
    """Worst ratio of the windowed averaging error to ``delta(|x|/2) N(eta)``.

    The report's margin is ``ratio - 1``.  ``details['eta0_per_state']``
    lists, per state, the smallest sampled eta from which every larger
    sampled eta satisfies the bound; ``details['empirical_eta0']`` is their
    maximum (``None`` if some state never settles).
    """
    margins, pts = [], []
    eta0_per_state = []
    etas = np.sort(np.asarray(grid.eta_values, float))
    failures = 0
    for x in grid.states:
        s = float(np.linalg.norm(x))
        if s == 0.0:
            continue
        ok_eta = np.ones(etas.size, dtype=bool)
        for j, eta in enumerate(etas):
            rhs = delta(s / 2.0) * N(eta)
            alpha = eta * eta

            def diff(l, x=x, alpha=alpha):
                return np.asarray(sys.f(x, l, alpha * l), float) - np.asarray(lim.fbar(x, l), float)

            for r in grid.r_values:
                try:
                    lhs = float(np.linalg.norm(weighted_single_integral(
                        diff, r - 1.0 / eta, r + 1.0 / eta, cfg, frequency=alpha)))
                except QuadratureError:
                    failures += 1
                    lhs = math.inf
                ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
                margins.append(ratio - 1.0)
                pts.append(_point(x, r=r, eta=eta))
                if ratio > 1.0 + tolerance:
                    ok_eta[j] = False
        bad = np.flatnonzero(~ok_eta)
        if bad.size == 0:
            eta0_per_state.append(float(etas[0]))
        elif bad[-1] == etas.size - 1:
            eta0_per_state.append(None)
        else:
            eta0_per_state.append(float(etas[bad[-1] + 1]))
    settled = [e for e in eta0_per_state if e is not None]
    details = {
        "eta0_per_state": eta0_per_state,
        "empirical_eta0": None if len(settled) < len(eta0_per_state) else (max(settled) if settled else None),
        "quadrature_failures": failures,
    }
    report = CertificateReport.from_margins("relate", margins, pts, tolerance, details)
    return report


def check_m16(sys: TimeVaryingSystem, lim: LimitingSystem, delta: Gauge, K: float, grid: SampleGrid,
              tolerance: float = GRID_TOL, max_taus: int = 16) -> CertificateReport:
    """Sampled Jacobian bounds ``|df/dx|, |dfbar/dx| <= K`` and ``|f| <= delta(|x|/2)``."""
    taus = grid.taus[:: max(1, grid.taus.size // max_taus)]
    tt, uu = np.meshgrid(grid.times, taus, indexing="ij")
    tt, uu = tt.ravel(), uu.ravel()
    jb, jf, fb, pts, pts_bar = [], [], [], [], []
    for x in grid.states:
        s = float(np.linalg.norm(x))
        Jbar = _fd_jacobians(lambda y, t: lim.fbar(y, t), x, grid.times).reshape(grid.times.size, x.size, x.size)
        jb.extend(scaled_margin(np.linalg.norm(Jbar, ord=2, axis=(1, 2)), K))
        pts_bar.extend(_point(x, t=t) for t in grid.times)
        if sys.jac_x is not None:
            J = np.array([sys.jacobian(x, a, b) for a, b in zip(tt, uu)])
        else:
            J = _fd_jacobians(sys.f, x, tt, uu).reshape(tt.size, x.size, x.size)
        jf.extend(scaled_margin(np.linalg.norm(J, ord=2, axis=(1, 2)), K))
        fv = np.asarray(sys.f(x, tt, uu), float).reshape(tt.size, -1)
        fb.extend(scaled_margin(np.linalg.norm(fv, axis=1), delta(s / 2.0)))
        pts.extend(_point(x, t=a, tau=b) for a, b in zip(tt, uu))
    return CertificateReport.combine("m16", [
        CertificateReport.from_margins("jacobian_limiting", jb, pts_bar, tolerance),
        CertificateReport.from_margins("jacobian_fast", jf, pts, tolerance),
        CertificateReport.from_margins("growth_bound", fb, pts, tolerance),
    ], {"K": K})


def relaxed_N_bound(K: float, lam: float, D: float, c_bbar: float) -> float:
    """``(K - lam) / (11 D (Theta - 1) c_bbar)`` with ``Theta = (sqrt(2) D)^(K/lam - 1)``."""
    if not K > lam > 0:
        raise ValueError("require K > lambda > 0")
    if D <= 1:
        raise ValueError("require D > 1")
    theta = (math.sqrt(2.0) * D) ** (K / lam - 1.0)
    return (K - lam) / (11.0 * D * (theta - 1.0) * c_bbar)


def check_relaxed_N(N: Gauge, K: float, lam: float, D: float, c_bbar: float, eta_star: float,
                    span: float = 1e4, n: int = 64) -> CertificateReport:
    """Strict inequality ``sup_{eta >= eta*} eta N(eta) < bound`` on a geometric sample."""
    bound = relaxed_N_bound(K, lam, D, c_bbar)
    etas = np.geomspace(eta_star, eta_star * span, n)
    prod = etas * (np.asarray(N(etas), float) * np.ones_like(etas))
    return CertificateReport.from_margins("relaxed_N", prod - bound, [_point(eta=e) for e in etas], STRICT,
                                          {"bound": bound, "sup_eta_N": float(np.max(prod))})


@dataclass(frozen=True)
class AssumptionHResult:
    report: CertificateReport
    derived_c: float
    alpha_bound: float

    @property
    def passed(self) -> bool:
        return self.report.passed


def check_assumption_H(sd: StrictificationData, sys: TimeVaryingSystem, grid: SampleGrid,
                       tolerance: float = GRID_TOL) -> AssumptionHResult:
    """Sample H1-H3 and derive the largest admissible ``c`` and the alpha bound ``8 T p_max / c``."""
    if grid.states.size == 0:
        raise ValueError("grid is empty")
    taus = grid.taus
    pv = np.asarray(sd.p(taus), float) * np.ones_like(taus)
    h1, pts = [], []
    ratios, rpts = [], []
    for x in grid.states:
        for t in grid.times:
            fv = np.asarray(sys.f(x, t, taus), float).reshape(taus.size, -1)
            vdot = sd.V.time_derivative(x, t) + fv @ sd.V.gradient(x, t)
            W, Th, V = float(sd.W(x, t)), float(sd.Theta(x, t)), sd.V(x, t)
            h1.extend(scaled_margin(vdot, -W + pv * Th))
            pts.extend(_point(x, t=t, tau=u) for u in taus)
            flow = sd.theta_time_derivative(x, t) + fv @ sd.theta_gradient(x, t)
            cands = []
            if Th != 0.0:
                cands += [V / abs(Th), W / abs(Th)]
            nz = np.abs(flow) > 0
            if nz.any():
                cands.append(float(np.min(W / np.abs(flow[nz]))))
            if cands:
                ratios.append(min(cands))
                rpts.append(_point(x, t=t))
    derived_c = float(np.min(ratios)) if ratios else math.inf
    reports = [CertificateReport.from_margins("H1", h1, pts, tolerance)]

    integrals, ipts = [], []
    for k in range(-2, 3):
        try:
            val = weighted_single_integral(sd.p, k * sd.T, (k + 1) * sd.T, QuadratureConfig(panels=256),
                                           frequency=2 * math.pi / sd.T)
            integrals.append(abs(float(val)))
        except QuadratureError:
            integrals.append(math.inf)
        ipts.append(_point(k=k))
    reports.append(CertificateReport.from_margins("H2", integrals, ipts, 1e-10))

    i = int(np.argmin(ratios)) if ratios else 0
    reports.append(CertificateReport("H3", derived_c > 0, -derived_c, rpts[i] if rpts else None,
                                     len(ratios), STRICT, {"derived_c": derived_c}))
    if sd.c is not None:
        reports.append(CertificateReport.from_margins(
            "H3_declared_c", [sd.c - derived_c], [rpts[i] if rpts else None], 0.0))

    ls = np.linspace(0.0, sd.T, 4097)
    reports.append(CertificateReport.from_margins(
        "p_bound", np.abs(np.asarray(sd.p(ls), float)) - sd.p_max, [_point(l=v) for v in ls], 1e-12))
    alpha_bound = 8.0 * sd.T * sd.p_max / derived_c if derived_c > 0 else math.inf
    report = CertificateReport.combine("assumption_H", reports,
                                       {"derived_c": derived_c, "alpha_bound": alpha_bound})
    return AssumptionHResult(report, derived_c, alpha_bound)


def check_bounda(p: Callable, T: float, p_max: float, alpha: float, t_samples, s_per_t: int = 64,
                 points_per_period: int = 512, tolerance: float = GRID_TOL) -> CertificateReport:
    """``|int_s^{alpha t} p| <= 2 T p_max`` for ``s`` in ``[alpha t - alpha, alpha t]``.

    Uses a cumulative trapezoid on a fine grid, which tolerates
    discontinuous ``p`` such as square waves.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    bound = 2.0 * T * p_max
    sub = max(1, int(math.ceil(points_per_period * alpha / T / max(s_per_t - 1, 1))))
    margins, pts = [], []
    for t in np.atleast_1d(np.asarray(t_samples, float)):
        hi = alpha * t
        ls = np.linspace(hi - alpha, hi, (s_per_t - 1) * sub + 1)
        F = cumulative_trapezoid(np.asarray(p(ls), float) * np.ones_like(ls), ls, initial=0.0)
        tail = np.abs(F[-1] - F[::sub])
        margins.extend(tail - bound)
        pts.extend(_point(t=t, s=s) for s in ls[::sub])
    return CertificateReport.from_margins("bounda", margins, pts, tolerance, {"bound": bound})


def _eligible(traj: Trajectory, r_stop: Optional[float]) -> tuple[np.ndarray, float]:
    norms = traj.norms
    r = 1e-4 * float(np.linalg.norm(traj.x0)) if r_stop is None else float(r_stop)
    n = len(traj)
    mask = np.zeros(n, dtype=bool)
    mask[1:-1] = norms[1:-1] > r
    return mask, r


def _thin(indices: np.ndarray, samples: Optional[int]) -> np.ndarray:
    if samples is None or indices.size <= samples:
        return indices
    pick = np.unique(np.round(np.linspace(0, indices.size - 1, samples)).astype(int))
    return indices[pick]


def certify_decay(traj: Trajectory, L: Callable, decay_floor: Callable, r_stop: Optional[float] = None,
                  samples: Optional[int] = None, tolerance: float = DECAY_TOL) -> CertificateReport:
    """``L' <= -decay_floor(|x|)`` at interior trajectory samples outside the stop ball.

    ``samples`` thins the eligible samples to an evenly spaced subset.
    """
    mask, r = _eligible(traj, r_stop)
    idx = _thin(np.flatnonzero(mask), samples)
    details = {"alpha": traj.alpha, "r_stop": r, "eligible": int(mask.sum()), "evaluated": int(idx.size)}
    if idx.size == 0:
        return CertificateReport.from_margins("decay", [], [], tolerance, details)
    trace = lyapunov_along_trajectory(traj, L, idx)
    norms = traj.norms[idx]
    floor = np.array([float(decay_floor(s)) for s in norms])
    margins = trace.Vdot + floor
    pts = [_point(traj.states[i], t=traj.times[i], x0=list(map(float, traj.x0))) for i in idx]
    return CertificateReport.from_margins("decay", margins, pts, tolerance, details)


def certify_decay_runs(sys: TimeVaryingSystem, L: Callable, alpha: float, initial_conditions,
                       decay_floor: Callable, t_end: float, t0: float = 0.0, r_stop: Optional[float] = None,
                       samples: Optional[int] = 400, u: Optional[Callable] = None, h_base: float = 1e-2,
                       tolerance: float = DECAY_TOL) -> CertificateReport:
    """Integrate from each initial condition and certify decay of ``L`` along every run."""
    reports = []
    for k, x0 in enumerate(initial_conditions):
        try:
            traj = integrate(sys, alpha, x0, t0, t_end, u=u, h_base=h_base)
        except DivergenceError as exc:
            reports.append(CertificateReport("decay", False, math.inf,
                                             _point(exc.last_state, x0=list(map(float, np.atleast_1d(x0)))),
                                             0, tolerance, {"diverged": True}))
            continue
        reports.append(certify_decay(traj, L, decay_floor, r_stop, samples, tolerance))
    return CertificateReport.combine("decay", reports, {"alpha": alpha, "runs": len(reports)})


@dataclass(frozen=True)
class SweepResult:
    alphas: np.ndarray
    verdicts: tuple
    threshold: Optional[float]

    def __post_init__(self):
        if np.any(np.diff(self.alphas) <= 0):
            raise ValueError("alphas must be increasing")

    @property
    def passed(self) -> np.ndarray:
        return np.array([v.passed for v in self.verdicts])

    def monotonicity_violations(self, factor: float = 2.0) -> list:
        """Pairs ``(alpha, k alpha)`` with a pass at alpha and a fail at ``k alpha``, k in {2, 4}."""
        lookup = {float(a): v.passed for a, v in zip(self.alphas, self.verdicts)}
        out = []
        for a, ok in lookup.items():
            if not ok:
                continue
            for m in (factor, factor * factor):
                for b, ok_b in lookup.items():
                    if math.isclose(b, a * m, rel_tol=1e-9) and not ok_b:
                        out.append((a, b))
        return out


def threshold_from_verdicts(alphas, passed) -> Optional[float]:
    """Smallest alpha that passes together with its (up to) two successors."""
    passed = list(passed)
    for i, ok in enumerate(passed):
        if ok and all(passed[i + 1: i + 3]):
            return float(alphas[i])
    return None


def alpha_grid(alpha_min: float = 1.0, alpha_max: float = 2.0 ** 16, factor: float = 2.0) -> np.ndarray:
    if not (0 < alpha_min <= alpha_max) or factor <= 1:
        raise ValueError("empty or invalid alpha range")
    n = int(math.floor(math.log(alpha_max / alpha_min, factor) + 1e-9)) + 1
    return alpha_min * factor ** np.arange(n)


def sweep_alpha(builder: Callable, sys: TimeVaryingSystem, initial_conditions, alphas, decay_floor: Callable,
                r_stop: Optional[float] = None, t_end: float = 5.0, samples: Optional[int] = 400,
                h_base: float = 1e-2, tolerance: float = DECAY_TOL) -> SweepResult:
    """Decay certificates over an increasing alpha grid and the empirical threshold."""
    alphas = np.asarray(alphas, float)
    verdicts = []
    for a in alphas:
        L = builder(float(a))
        te = t_end(float(a)) if callable(t_end) else t_end
        verdicts.append(certify_decay_runs(sys, L, float(a), initial_conditions, decay_floor, te,
                                           r_stop=r_stop, samples=samples, h_base=h_base, tolerance=tolerance))
    return SweepResult(alphas, tuple(verdicts), threshold_from_verdicts(alphas, [v.passed for v in verdicts]))


def iss_gain_test(sys: TimeVaryingSystem, L: Callable, chi: Gauge, input_signals: Sequence[Callable],
                  initial_conditions, alpha: float, decay_floor: Callable, t_end: float,
                  r_stop: Optional[float] = None, samples: Optional[int] = 400, h_base: float = 1e-2,
                  tolerance: float = DECAY_TOL) -> CertificateReport:
    """Pointwise implication ``|u(t)| <= chi(|x(t)|)  =>  L' <= -decay_floor(|x(t)|)``.

    Samples where the gain condition fails are skipped before any decay
    quantity is computed there.
    """
    reports = []
    evaluated = satisfied = violated = 0
    for u in input_signals:
        for x0 in initial_conditions:
            traj = integrate(sys, alpha, x0, 0.0, t_end, u=u, h_base=h_base)
            mask, r = _eligible(traj, r_stop)
            unorm = np.linalg.norm(traj.inputs, axis=1)
            gain_ok = unorm <= np.asarray(chi(traj.norms), float)
            satisfied += int((mask & gain_ok).sum())
            violated += int((mask & ~gain_ok).sum())
            idx = _thin(np.flatnonzero(mask & gain_ok), samples)
            if idx.size == 0:
                reports.append(CertificateReport.from_margins("iss_decay", [], [], tolerance))
                continue
            trace = lyapunov_along_trajectory(traj, L, idx)
            margins = []
            for j, i in enumerate(idx):
                margins.append(trace.Vdot[j] + float(decay_floor(traj.norms[i])))
                evaluated += 1
            pts = [_point(traj.states[i], t=traj.times[i], u_norm=float(unorm[i])) for i in idx]
            reports.append(CertificateReport.from_margins("iss_decay", margins, pts, tolerance))
    return CertificateReport.combine("iss_gain", reports, {
        "alpha": alpha, "gain_satisfied": satisfied, "gain_violated": violated, "decay_evaluations": evaluated})


def iiss_estimate(sys: TimeVaryingSystem, L: Callable, nu: Gauge, trajectories: Sequence[Trajectory],
                  r_stop: Optional[float] = None, samples: Optional[int] = 400) -> float:
    """Smallest ``r`` with ``L' <= -nu(|x|) + r |u|^2`` at the sampled points (clamped at 0)."""
    if not trajectories:
        raise ValueError("need at least one trajectory")
    worst = 0.0
    for traj in trajectories:
        if traj.states.shape[1] != sys.dim:
            raise ValueError("trajectory dimension does not match the system")
        mask, _ = _eligible(traj, r_stop)
        if traj.inputs is None:
            continue
        u2 = np.sum(traj.inputs ** 2, axis=1)
        idx = _thin(np.flatnonzero(mask & (u2 > 0)), samples)
        if idx.size == 0:
            continue
        trace = lyapunov_along_trajectory(traj, L, idx)
        excess = trace.Vdot + np.asarray(nu(traj.norms[idx]), float)
        worst = max(worst, float(np.max(excess / u2[idx])))
    return worst


class EnvelopeError(ValueError):
    """Trajectories do not decay enough to fit an exponential envelope."""


def fit_envelope(trajs: Sequence[Trajectory], windows: int = 40, decay_to: float = 1e-6,
                 lam: Optional[float] = None) -> EnvelopeFit:
    """Fit ``|x(t)| <= D |x0| exp(-lam (t - t0))`` over a set of trajectories.

    The rate is a least-squares slope through the logarithms of windowed
    peaks of ``|x(t)|/|x0|``; ``D`` is then the smallest constant for which
    the envelope covers every sample.  Passing ``lam`` skips the rate fit.
    """
    if not trajs:
        raise EnvelopeError("no trajectories")
    tt, yy = [], []
    for k, traj in enumerate(trajs):
        x0n = float(np.linalg.norm(traj.x0))
        if x0n == 0.0:
            raise EnvelopeError(f"trajectory {k} starts at the origin; nothing to fit")
        ratio = traj.norms / x0n
        if not np.min(ratio) < decay_to:
            raise EnvelopeError(f"trajectory {k} only decays to {np.min(ratio):.3g} of |x0|")
        rel = traj.times - traj.t0
        edges = np.linspace(0.0, rel[-1], windows + 1)
        which = np.clip(np.searchsorted(edges, rel, side="right") - 1, 0, windows - 1)
        for w in range(windows):
            sel = np.flatnonzero(which == w)
            if sel.size == 0:
                continue
            j = sel[np.argmax(ratio[sel])]
            if ratio[j] < decay_to:
                break
            tt.append(rel[j])
            yy.append(math.log(ratio[j]))
    if lam is None:
        if len(tt) < 2:
            raise EnvelopeError("too few windows above the decay floor")
        slope = np.polyfit(np.asarray(tt), np.asarray(yy), 1)[0]
        lam = -float(slope)
        if lam <= 0:
            raise EnvelopeError(f"fitted rate {lam:.3g} is not a decay")
    D = 1.0
    for traj in trajs:
        rel = traj.times - traj.t0
        D = max(D, float(np.max(traj.norms / np.linalg.norm(traj.x0) * np.exp(lam * rel))))
    D *= 1.0 + 1e-12
    residual = -math.inf
    for traj in trajs:
        rel = traj.times - traj.t0
        env = D * np.linalg.norm(traj.x0) * np.exp(-lam * rel)
        residual = max(residual, float(np.max(traj.norms - env)))
    return EnvelopeFit(D, lam, residual, {"windows_used": len(tt), "trajectories": len(trajs)})
