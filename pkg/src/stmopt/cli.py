"""Command-line front end: solve, ensemble, verify, params.

Exit codes: 0 success, 1 a verification claim failed, 2 configuration or
usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from ._kernels import ACTIVE_LANE
from .errors import ConfigurationError, DomainError
from .geometry import GeometrySetup, dual_norm, regularity_constant
from .harness import (
    ExperimentConfig,
    check_oracle_conditions,
    run_ensemble,
    write_report_json,
)
from .oracle import NoisyQuadratic, OracleSpec, calibrate_sigma_gaussian
from .prox import (
    CompositeTerm,
    FeasibleSet,
    prox_subproblem,
    three_point_check,
    three_point_scale,
)
from .solver import (
    SolverConfig,
    batch_size,
    compute_alpha,
    delta_threshold,
    derive_params,
    solve,
    write_summary_json,
    write_trace_csv,
)


def _load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _say(quiet: bool, *parts) -> None:
    if not quiet:
        print(*parts)


def _cmd_params(args) -> int:
    if args.config:
        exp = ExperimentConfig.from_dict(_load_config(args.config))
        cfg = exp.solver_config(exp.seed)
        geometry = exp.problem.geometry
    else:
        geometry = (
            GeometrySetup.euclidean(args.dim)
            if args.geometry == "euclidean"
            else GeometrySetup.simplex_entropy(args.dim)
        )
        cfg = SolverConfig(
            epsilon=args.epsilon,
            beta=args.beta,
            lipschitz=args.lipschitz,
            r_q=args.r_q,
            l0=args.l0,
            delta=args.delta,
            sigma=args.sigma,
        )
    params = derive_params(cfg, geometry)
    alpha1 = compute_alpha(0.0, cfg.l0 / 2.0)
    m1 = batch_size(cfg.sigma, params.omega_tilde, alpha1, cfg.epsilon)
    print(f"N           = {params.n_steps}")
    print(f"Omega       = {params.omega:.10g}")
    print(f"Omega_tilde = {params.omega_tilde:.10g}")
    print(f"kappa       = {params.kappa:.10g}")
    print(f"m_1         = {m1}  (first-trial batch size)")
    print(
        f"delta_max   = {delta_threshold(cfg.epsilon, cfg.lipschitz, cfg.r_q):.6g}"
        "  (inexactness budget)"
    )
    if cfg.delta > 0:
        ok = cfg.delta <= delta_threshold(cfg.epsilon, cfg.lipschitz, cfg.r_q)
        print(f"delta       = {cfg.delta:.6g}  ({'within' if ok else 'EXCEEDS'} budget)")
    return 0


def _cmd_solve(args) -> int:
    exp = ExperimentConfig.from_dict(_load_config(args.config))
    seed = exp.seed if args.seed is None else args.seed
    cfg = exp.solver_config(seed)
    from .harness import reference_optimum

    _, f_star = reference_optimum(exp.problem, exp.epsilon)
    exp.problem.reference_value = f_star
    result = solve(exp.problem, cfg, exp.x0())

    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    trace_path = os.path.join(out_dir, f"trace_seed{seed}.csv")
    summary_path = os.path.join(out_dir, f"summary_seed{seed}.json")
    write_trace_csv(result.trace, trace_path)
    write_summary_json(result, summary_path)
    _say(args.quiet, f"kernel lane : {ACTIVE_LANE}")
    _say(args.quiet, f"stop reason : {result.stop_reason.value}")
    _say(args.quiet, f"steps       : {len(result.trace)} of budget {result.n_budget}")
    _say(args.quiet, f"grad draws  : {result.grad_samples}")
    if result.final_gap is not None:
        _say(args.quiet, f"final gap   : {result.final_gap:.6g} (4*eps = {4 * exp.epsilon:.6g})")
    _say(args.quiet, f"trace       : {trace_path}")
    _say(args.quiet, f"summary     : {summary_path}")
    return 0


def _cmd_ensemble(args) -> int:
    raw = _load_config(args.config)
    exp = ExperimentConfig.from_dict(raw)
    if args.seeds is not None:
        exp.n_seeds = args.seeds
    if args.seed is not None:
        exp.seed = args.seed
    report, records = run_ensemble(exp)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "report.json")
    write_report_json(report, records, path, raw)
    for c in report.claims:
        verdict = "PASS" if c["passed"] else "FAIL"
        _say(args.quiet, f"[{verdict}] {c['name']}: {c['statement']}")
        _say(
            args.quiet,
            f"       measured {c['measured']:.6g}  threshold {c['threshold']:.6g}"
            f"  claimed bound {c['bound']:.6g}",
        )
    _say(args.quiet, f"report      : {path}")
    return 0 if report.passed() else 1


def _default_verify_problem() -> tuple:
    smooth = NoisyQuadratic.random(dim=10, noise_std=0.05, seed=7)
    geometry = GeometrySetup.euclidean(10)
    spec = OracleSpec(
        lipschitz=smooth.lipschitz(),
        delta=0.0,
        sigma=calibrate_sigma_gaussian(smooth.noise_std, smooth.dim),
    )
    return smooth, spec, geometry


def _verify_prox_suite(n_instances: int, rng: np.random.Generator) -> float:
    """Worst normalized three-point residual over all supported configurations."""
    worst = math.inf
    dim = 6
    configs = [
        (GeometrySetup.euclidean(dim), FeasibleSet.everything(), CompositeTerm.zero()),
        (GeometrySetup.euclidean(dim), FeasibleSet.everything(), CompositeTerm.l1(0.4)),
        (
            GeometrySetup.euclidean(dim),
            FeasibleSet.box(-np.ones(dim), np.ones(dim)),
            CompositeTerm.zero(),
        ),
        (
            GeometrySetup.euclidean(dim),
            FeasibleSet.ball(np.zeros(dim), 1.0),
            CompositeTerm.zero(),
        ),
        (GeometrySetup.simplex_entropy(dim), FeasibleSet.simplex(), CompositeTerm.zero()),
    ]
    for g, q, h in configs:
        for _ in range(n_instances):
            if g.is_entropy:
                z = rng.random(dim) + 0.05
                z /= z.sum()
                probe = rng.random(dim) + 0.05
                probe /= probe.sum()
            else:
                z = rng.standard_normal(dim)
                probe = rng.standard_normal(dim)
                if not q.contains(probe):
                    if q.kind.value == "box":
                        probe = np.clip(probe, q.lo, q.hi)
                    else:
                        probe = q.center + (probe - q.center) * (
                            q.radius / np.linalg.norm(probe - q.center)
                        )
            alpha = float(rng.uniform(0.05, 2.0))
            gt = rng.standard_normal(dim)
            y = prox_subproblem(g, q, h, z, alpha, gt)
            resid = three_point_check(g, q, h, z, alpha, gt, y, probe)
            scale = three_point_scale(g, q, h, z, alpha, gt, y, probe)
            worst = min(worst, resid / (1.0 + scale))
    return worst


def _cmd_verify(args) -> int:
    ok = True
    if args.config:
        exp = ExperimentConfig.from_dict(_load_config(args.config))
        smooth = exp.problem.smooth
        geometry = exp.problem.geometry
        spec = OracleSpec(
            lipschitz=exp.problem.lipschitz,
            delta=exp.problem.delta,
            sigma=exp.problem.sigma,
        )
    else:
        smooth, spec, geometry = _default_verify_problem()

    rep = check_oracle_conditions(
        smooth, spec, geometry, n_draws=args.draws, n_points=4, n_pairs=300,
        seed=11,
    )
    checks = [
        ("oracle unbiasedness (max |z| < 5)", rep.unbiased_ok, rep.unbiased_max_z),
        ("oracle moment E exp(||.||^2/sigma^2) <= e*1.05", rep.st2_ok, rep.st2_moment),
        (
            "curvature sandwich 0 <= resid <= L/2 ||x-y||^2 + delta",
            rep.sandwich_ok,
            max(-rep.sandwich_min, rep.sandwich_max_excess),
        ),
    ]
    worst = _verify_prox_suite(args.instances, np.random.default_rng(23))
    checks.append(("three-point inequality residual >= -1e-9", worst >= -1e-9, worst))
    for name, passed, margin in checks:
        ok &= passed
        _say(args.quiet, f"[{'PASS' if passed else 'FAIL'}] {name}  (margin {margin:.6g})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stmopt",
        description="Adaptive stochastic similar-triangles solver and its "
        "Monte Carlo verification harness.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("params", help="print derived run parameters")
    sp.add_argument("--config", help="experiment config JSON")
    sp.add_argument("--epsilon", type=float, default=0.01)
    sp.add_argument("--beta", type=float, default=0.01)
    sp.add_argument("--lipschitz", type=float, default=1.0)
    sp.add_argument("--l0", type=float, default=None)
    sp.add_argument("--r-q", dest="r_q", type=float, default=1.0)
    sp.add_argument("--sigma", type=float, default=0.0)
    sp.add_argument("--delta", type=float, default=0.0)
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument(
        "--geometry", choices=("euclidean", "simplex"), default="euclidean"
    )
    sp.set_defaults(func=_cmd_params)

    ss = sub.add_parser("solve", help="one seeded run; writes trace CSV + summary")
    ss.add_argument("--config", required=True)
    ss.add_argument("--seed", type=int, default=None)
    ss.add_argument("--out", default=None)
    ss.add_argument("--quiet", action="store_true")
    ss.set_defaults(func=_cmd_solve)

    se = sub.add_parser("ensemble", help="Monte Carlo ensemble; writes report.json")
    se.add_argument("--config", required=True)
    se.add_argument("--seeds", type=int, default=None, help="override n_seeds")
    se.add_argument("--seed", type=int, default=None, help="override base seed")
    se.add_argument("--out", default=None)
    se.add_argument("--quiet", action="store_true")
    se.set_defaults(func=_cmd_ensemble)

    sv = sub.add_parser("verify", help="oracle and mirror-step property suites")
    sv.add_argument("--config", default=None)
    sv.add_argument("--draws", type=int, default=20000)
    sv.add_argument("--instances", type=int, default=200)
    sv.add_argument("--quiet", action="store_true")
    sv.set_defaults(func=_cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigurationError, DomainError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
