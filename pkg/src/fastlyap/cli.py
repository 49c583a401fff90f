"""Command-line front end: verify, sweep, simulate and list-bundles.

Exit codes: 0 every requested certificate passed, 1 a certificate failed,
2 usage error, 3 numerical failure (divergence or quadrature breakdown).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from .bundles import BUNDLES, ExampleBundle, bundle_from_description, get_bundle, hypothesis_grid
from .constructors import STRICTIFICATION
from .expr import ExpressionError, load_description
from .numerics import DivergenceError, QuadratureError, integrate, lyapunov_along_trajectory
from .systems import STRICT, CertificateReport, _point
from .verifiers import (EnvelopeError, RelateCheckGrid, alpha_grid, certify_decay_runs, check_assumption_H,
                        check_compatibility, check_m16, check_relate, fit_envelope, iiss_estimate, iss_gain_test,
                        sweep_alpha)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
CHECKS = ("hypotheses", "decay", "iss", "iiss", "envelope", "sweep")
REPORT_KEYS = ("artifact_version", "bundle", "alpha", "check_name", "passed", "worst_margin", "worst_point", "seed")


class UsageError(Exception):
    pass


def fmt(v) -> str:
    """17 significant digits, locale independent."""
    return format(float(v), ".17g")


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def report_record(bundle: str, alpha, report: CertificateReport, seed: int) -> dict:
    return {
        "artifact_version": __version__,
        "bundle": bundle,
        "alpha": _json_safe(alpha),
        "check_name": report.name,
        "passed": bool(report.passed),
        "worst_margin": _json_safe(report.worst_margin),
        "worst_point": _json_safe(report.worst_point),
        "seed": seed,
    }


def _diverged(report: CertificateReport) -> bool:
    return bool(report.details.get("diverged")) or any(_diverged(r) for r in report.subreports)


def load_bundle(name: str) -> ExampleBundle:
    if name in BUNDLES:
        return get_bundle(name)
    if os.path.isfile(name):
        try:
            return bundle_from_description(load_description(name))
        except (ExpressionError, json.JSONDecodeError, ValueError) as exc:
            raise UsageError(f"invalid system description {name}: {exc}") from None
    raise UsageError(f"unknown bundle {name!r}; choose one of {', '.join(BUNDLES)} or a JSON description path")


def _checked_alpha(bundle: ExampleBundle, alpha: float) -> float:
    try:
        return bundle.check_alpha(alpha)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _input_signal(amplitude: float, dim: int):
    return lambda t: np.full(dim, amplitude * math.sin(t))


def _input_dim(bundle: ExampleBundle) -> int:
    return bundle.sys.input_dim if bundle.sys.g is not None else bundle.dim


def run_hypotheses(bundle: ExampleBundle, alpha: float, seed: int) -> list:
    grid = hypothesis_grid(bundle, alpha=alpha, seed=seed)
    out = []
    if bundle.route == STRICTIFICATION:
        res = check_assumption_H(bundle.strictification, bundle.sys, grid)
        out.append(res.report)
        out.append(CertificateReport("alpha_above_bound", alpha > res.alpha_bound, res.alpha_bound - alpha,
                                     _point(alpha=alpha), 1, STRICT, {"alpha_bound": res.alpha_bound}))
        return out
    delta, consts = bundle.gauges.get("delta"), bundle.consts
    if bundle.lim is None or delta is None or consts is None:
        raise UsageError(f"bundle {bundle.name!r} lacks the data needed for hypothesis checks")
    out.append(check_compatibility(bundle.V, bundle.lim, delta, consts, grid))
    if "N" in bundle.gauges:
        rgrid = RelateCheckGrid.build(bundle.dim, seed=seed, per_decade=2)
        out.append(check_relate(bundle.sys, bundle.lim, delta, bundle.gauges["N"], rgrid))
    out.append(check_m16(bundle.sys, bundle.lim, delta, consts.K, grid))
    if "limiting_decay" in bundle.expected:
        ics = bundle.initial_conditions(seed, 10)
        floor = lambda s: consts.c_bar * delta(s) ** 2
        r = certify_decay_runs(bundle.lim.as_system(), bundle.V, 1.0, ics, floor, bundle.horizon)
        out.append(CertificateReport.combine("limiting_decay", [r]))
    return out


def run_check(name: str, bundle: ExampleBundle, alpha: float, args) -> list:
    ics = bundle.initial_conditions(args.seed, args.n_ics)
    t_end = args.t_end or bundle.horizon
    if name == "hypotheses":
        return run_hypotheses(bundle, alpha, args.seed)
    if name == "decay":
        return [certify_decay_runs(bundle.sys, bundle.lyapunov(alpha), alpha, ics, bundle.decay_floor(), t_end,
                                   samples=args.samples)]
    if name == "iss":
        if "chi" not in bundle.gauges:
            raise UsageError(f"bundle {bundle.name!r} has no ISS gain")
        u = _input_signal(args.input_amplitude, _input_dim(bundle))
        return [iss_gain_test(bundle.sys, bundle.lyapunov(alpha), bundle.gauges["chi"], [u], ics, alpha,
                              bundle.decay_floor(), t_end, samples=args.samples)]
    if name == "iiss":
        if "nu" not in bundle.gauges:
            raise UsageError(f"bundle {bundle.name!r} has no iISS rate")
        u = _input_signal(args.input_amplitude, _input_dim(bundle))
        trajs = [integrate(bundle.sys, alpha, x0, 0.0, t_end, u=u) for x0 in ics]
        r = iiss_estimate(bundle.sys, bundle.lyapunov(alpha), bundle.gauges["nu"], trajs, samples=args.samples)
        return [CertificateReport.from_margins("iiss", [r], [_point(alpha=alpha)], math.inf, {"r_bar": r})]
    if name == "envelope":
        trajs = [integrate(bundle.sys, alpha, x0, 0.0, args.envelope_horizon) for x0 in ics]
        try:
            fit = fit_envelope(trajs)
        except EnvelopeError as exc:
            return [CertificateReport("envelope", False, math.inf, None, len(trajs), 0.0, {"refused": str(exc)})]
        return [CertificateReport.from_margins("envelope", [fit.residual], [_point(D=fit.D, lam=fit.lam)], 0.0,
                                               {"D": fit.D, "lam": fit.lam})]
    if name == "sweep":
        res = _sweep(bundle, alpha_grid(alpha, alpha * 16.0), args)
        bad = res.monotonicity_violations()
        ok = res.threshold is not None and not bad
        return [CertificateReport("sweep", ok, 0.0 if ok else 1.0, _point(threshold=res.threshold), len(res.alphas),
                                  0.0, {"threshold": res.threshold, "violations": bad})]
    raise UsageError(f"unknown check {name!r}")


def _sweep(bundle: ExampleBundle, alphas, args):
    ics = bundle.initial_conditions(args.seed, args.n_ics)
    return sweep_alpha(bundle.lyapunov, bundle.sys, ics, alphas, bundle.decay_floor(),
                       t_end=args.t_end or bundle.horizon, samples=args.samples)


def cmd_verify(args) -> int:
    bundle = load_bundle(args.bundle)
    alpha = _checked_alpha(bundle, args.alpha)
    checks = [c.strip() for c in args.checks.split(",") if c.strip()]
    if not checks:
        raise UsageError("--checks must name at least one check")
    unknown = [c for c in checks if c not in CHECKS]
    if unknown:
        raise UsageError(f"unknown checks {unknown}; choose from {', '.join(CHECKS)}")
    reports = []
    for c in checks:
        reports.extend(run_check(c, bundle, alpha, args))
    lines = [json.dumps(report_record(bundle.name, alpha, r, args.seed), sort_keys=True) for r in reports]
    _emit("\n".join(lines) + "\n", args.out)
    if any(_diverged(r) for r in reports):
        print("numerical failure: a trajectory diverged", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def cmd_sweep(args) -> int:
    bundle = load_bundle(args.bundle)
    if not (args.alpha_min > 0 and args.alpha_max >= args.alpha_min and args.factor > 1):
        raise UsageError("sweep range must satisfy 0 < alpha-min <= alpha-max and factor > 1")
    alphas = alpha_grid(args.alpha_min, args.alpha_max, args.factor)
    alphas = alphas[alphas > bundle.min_alpha]
    if alphas.size == 0:
        raise UsageError(f"sweep range contains no alpha above {bundle.min_alpha:g}")
    res = _sweep(bundle, alphas, args)
    rows = ["alpha,passed,worst_margin,worst_t,worst_x_norm"]
    for a, v in zip(res.alphas, res.verdicts):
        wp = v.worst_point or {}
        wt = wp.get("t", math.nan)
        wx = float(np.linalg.norm(wp["x"])) if "x" in wp else math.nan
        rows.append(",".join([fmt(a), "true" if v.passed else "false", fmt(v.worst_margin), fmt(wt), fmt(wx)]))
    text = "\n".join(rows) + "\n"
    thr = "none" if res.threshold is None else fmt(res.threshold)
    if args.out:
        _emit(text, args.out)
        print(f"threshold: {thr}")
    else:
        sys.stdout.write(text)
        print(f"# threshold: {thr}")
    if any(_diverged(v) for v in res.verdicts) and res.threshold is None:
        return EXIT_NUMERIC
    return EXIT_OK if res.threshold is not None else EXIT_FAIL


def cmd_simulate(args) -> int:
    bundle = load_bundle(args.bundle)
    alpha = _checked_alpha(bundle, args.alpha)
    try:
        x0 = np.array([float(v) for v in args.x0.split(",")])
    except ValueError:
        raise UsageError(f"cannot parse --x0 {args.x0!r}") from None
    if x0.size != bundle.dim:
        raise UsageError(f"--x0 has {x0.size} components, bundle {bundle.name!r} has dimension {bundle.dim}")
    t_end = args.t_end or bundle.horizon
    if not t_end > 0:
        raise UsageError("--t-end must be positive")
    diverged = False
    try:
        traj = integrate(bundle.sys, alpha, x0, 0.0, t_end)
    except DivergenceError as exc:
        traj, diverged = exc.trajectory, True
    stride = args.stride or max(1, int(math.ceil((len(traj) - 1) / 1000)))
    idx = np.arange(0, len(traj), stride)
    if idx[-1] != len(traj) - 1:
        idx = np.append(idx, len(traj) - 1)
    L = bundle.lyapunov(alpha)
    if len(traj) >= 3:
        try:
            trace = lyapunov_along_trajectory(traj, L, idx)
            vs, ds = trace.V, trace.Vdot
        except (QuadratureError, FloatingPointError, OverflowError):
            if not diverged:
                raise
            vs = ds = np.full(idx.size, math.nan)
    else:
        vs = ds = np.full(idx.size, math.nan)
    header = ["t"] + [f"x_{i + 1}" for i in range(bundle.dim)] + ["V_alpha", "Vdot_alpha"]
    rows = [",".join(header)]
    for j, i in enumerate(idx):
        rows.append(",".join([fmt(traj.times[i])] + [fmt(v) for v in traj.states[i]] + [fmt(vs[j]), fmt(ds[j])]))
    if diverged:
        rows.append("# diverged")
    _emit("\n".join(rows) + "\n", args.out)
    return EXIT_NUMERIC if diverged else EXIT_OK


def cmd_list(args) -> int:
    lines = []
    for name in BUNDLES:
        b = get_bundle(name)
        lines.append(f"{name}\t{b.dim}\t{b.description}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _emit(text: str, path: Optional[str]):
    if path:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fastlyap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_alpha=True):
        p.add_argument("--bundle", required=True, help="bundle name or path to a JSON system description")
        if with_alpha:
            p.add_argument("--alpha", type=float, required=True, help="fast-time scale")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--out", default=None, help="output path (default: stdout)")
        p.add_argument("--t-end", type=float, default=None, help="simulation horizon (default: bundle horizon)")

    def run_opts(p):
        p.add_argument("--n-ics", type=int, default=8, help="number of seeded initial conditions")
        p.add_argument("--samples", type=int, default=200, help="decay samples per trajectory")

    p = sub.add_parser("verify", help="run certificates at a fixed alpha; one JSON object per line")
    common(p)
    run_opts(p)
    p.add_argument("--checks", default="hypotheses,decay", help=f"comma list from {{{','.join(CHECKS)}}}")
    p.add_argument("--input-amplitude", type=float, default=1e-4, help="amplitude of the sinusoidal test input")
    p.add_argument("--envelope-horizon", type=float, default=40.0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="decay certificates over a geometric alpha grid (CSV)")
    common(p, with_alpha=False)
    run_opts(p)
    p.add_argument("--alpha-min", type=float, default=1.0)
    p.add_argument("--alpha-max", type=float, default=2.0 ** 16)
    p.add_argument("--factor", type=float, default=2.0)
    p.set_defaults(func=cmd_sweep, n_ics=4)

    p = sub.add_parser("simulate", help="integrate one trajectory and evaluate the constructed Lyapunov function")
    common(p)
    p.add_argument("--x0", required=True, help="comma-separated initial state; use --x0=-1,2 for negatives")
    p.add_argument("--stride", type=int, default=None, help="row stride (default: about 1000 rows)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("list-bundles", help="list the built-in bundles")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QuadratureError, DivergenceError, FloatingPointError, OverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
