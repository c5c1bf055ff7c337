"""Command line interface.

Subcommands (each takes a config JSON as first argument):

* check: contact condition, involution, and rank checks on sampled points.
* coisotropy: cyclic-sum and tangency checks on a ray preimage.
* integrate: flow one integral from a start point, write the trajectory CSV.
* symplectize-verify: omega nondegeneracy, Liouville field, homogeneity,
  theta pairing, and the bracket correspondence on sampled points.
* action-angle: verify a section, then solve angle coordinates at the
  points listed in a JSON file.

Reports are canonical JSON on stdout (sorted keys, no timestamps), so a
rerun with the same config and seed is byte-identical; wall time goes to
stderr.  Exit codes: 0 pass, 1 a check failed, 2 bad input, 3 numerical
failure.  The seed is resolved as --seed, else the CONTACTMECH_SEED
environment variable, else the config seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .config import ConfigError, SystemConfig, load_config
from .expressions import ExpressionError
from .flows import COMPLETED, EXITED_DOMAIN, FlowError, integrate
from .geometry import GeometryError, contact_condition_check
from .integrability import (
    IntegrabilityError,
    RayTarget,
    _ray_points,
    angle_solve,
    coisotropy_check,
    involution_check,
    rank_check,
    tangency_check,
    verify_section,
)
from .symplectization import SymplectizationError

__all__ = [
    "main",
    "cmd_check",
    "cmd_coisotropy",
    "cmd_integrate",
    "cmd_symplectize_verify",
    "cmd_action_angle",
]

SEED_ENV = "CONTACTMECH_SEED"


def _clean(obj: Any) -> Any:
    """Make report values JSON-serializable and deterministic."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def render_report(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def _report_head(cfg: SystemConfig, command: str, seed: int) -> dict:
    return {
        "tool": {"name": "contactmech", "version": __version__},
        "command": command,
        "config": {
            "name": cfg.name,
            "file": Path(cfg.path).name,
            "sha256": cfg.digest,
        },
        "seed": seed,
    }


def _resolve_seed(arg_seed: int | None, cfg: SystemConfig) -> int:
    if arg_seed is not None:
        return arg_seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return cfg.seed


def _parse_floats(text: str, what: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ConfigError(f"{what} must be comma-separated numbers, got {text!r}") from None


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_check(cfg: SystemConfig, args, seed: int) -> tuple[dict, int]:
    system = cfg.system()
    points = system.sample(np.random.default_rng(seed), args.samples)
    cond = contact_condition_check(system.chart, points)
    inv = involution_check(system, points=points, tolerance=args.tolerance, seed=seed)
    rk = rank_check(system, points=points, seed=seed)
    checks = [
        {
            "name": "contact-condition",
            "passed": cond.passed,
            "min_abs_det": cond.min_abs_det,
            "threshold": cond.threshold,
            "worst_point": cond.worst_point,
            "samples": cond.n_points,
        },
        {
            "name": "involution",
            "passed": inv.passed,
            "max_abs_bracket": inv.max_abs_bracket,
            "tolerance": inv.tolerance,
            "worst_pair": list(inv.worst_pair),
            "worst_point": inv.worst_point,
            "samples": inv.n_samples,
        },
        {
            "name": "rank",
            "passed": rk.passed,
            "min_rank": rk.min_rank,
            "required_rank": rk.required_rank,
            "tolerance": rk.tolerance,
            "worst_point": rk.worst_point,
            "samples": rk.n_samples,
        },
    ]
    passed = all(c["passed"] for c in checks)
    report = _report_head(cfg, "check", seed)
    report.update({"checks": checks, "passed": passed})
    return report, 0 if passed else 1


def cmd_coisotropy(cfg: SystemConfig, args, seed: int) -> tuple[dict, int]:
    system = cfg.system()
    lam = _parse_floats(args.ray, "--lambda")
    if len(lam) != len(system.integrals):
        raise ConfigError(
            f"--lambda needs {len(system.integrals)} components, got {len(lam)}"
        )
    target = RayTarget(lam)
    points = _ray_points(system, target, args.points, seed)
    co = coisotropy_check(system, target, points=points, tolerance=args.tolerance)
    tan = tangency_check(system, target, points=points, tolerance=args.tolerance)
    checks = [
        {
            "name": "coisotropy",
            "passed": co.passed,
            "max_abs_cyclic_sum": co.max_abs_sum,
            "max_membership_residual": co.max_membership_residual,
            "worst_triple": list(co.worst_triple),
            "worst_point": co.worst_point,
            "tolerance": co.tolerance,
            "points": co.n_points,
        },
        {
            "name": "tangency",
            "passed": tan.passed,
            "max_abs_contraction": tan.max_abs_contraction,
            "worst_triple": list(tan.worst_triple),
            "worst_point": tan.worst_point,
            "tolerance": tan.tolerance,
            "points": tan.n_points,
        },
    ]
    passed = co.passed and tan.passed
    report = _report_head(cfg, "coisotropy", seed)
    report.update(
        {
            "ray": lam,
            "checks": checks,
            "checks_agree": co.passed == tan.passed,
            "passed": passed,
        }
    )
    return report, 0 if passed else 1


def cmd_integrate(cfg: SystemConfig, args, seed: int) -> tuple[dict, int]:
    system = cfg.system()
    x0 = _parse_floats(args.x0, "--x0")
    if len(x0) != system.dim:
        raise ConfigError(f"--x0 needs {system.dim} components, got {len(x0)}")
    try:
        f = system.integrals[args.f]
    except IndexError:
        raise ConfigError(
            f"--f must index one of {len(system.integrals)} integrals"
        ) from None
    traj = integrate(system, f, x0, args.t, cfg.integrator)
    traj.write_csv(args.out, system.coordinates)
    report = _report_head(cfg, "integrate", seed)
    report.update(
        {
            "integral": args.f,
            "t_final": args.t,
            "status": traj.status,
            "detail": traj.detail,
            "accepted_steps": len(traj.times) - 1,
            "reached_time": float(traj.times[-1]),
            "endpoint": traj.endpoint(),
            "csv": args.out,
            "passed": traj.status in (COMPLETED, EXITED_DOMAIN),
        }
    )
    return report, 0 if report["passed"] else 3


def cmd_symplectize_verify(cfg: SystemConfig, args, seed: int) -> tuple[dict, int]:
    system = cfg.system()
    symp = cfg.symp_system()
    chart = symp.chart
    points = symp.sample(np.random.default_rng(seed), args.samples)
    min_det = np.inf
    liouville = homogeneity = pairing = correspondence = 0.0
    m = len(symp.integrals)
    for x in points:
        omega = chart.omega_at(x)
        min_det = min(min_det, abs(float(np.linalg.det(omega))))
        theta = chart.theta_at(x)
        expected = np.zeros(chart.dim)
        expected[-1] = x[-1]
        delta = np.linalg.solve(omega.T, -theta)
        liouville = max(liouville, float(np.max(np.abs(delta - expected))))
        fields = []
        for F in symp.integrals:
            value, grad = chart.value_and_gradient(F, x)
            homogeneity = max(homogeneity, abs(x[-1] * grad[-1] - value))
            X = chart.hamiltonian_field_at(F, x)
            fields.append((grad, X))
            pairing = max(pairing, abs(float(theta @ X) - value))
        for a in range(m):
            for b in range(a + 1, m):
                upstairs = float(fields[a][1] @ fields[b][0])
                downstairs = system.chart.jacobi_bracket_at(
                    system.integrals[a], system.integrals[b], x[:-1]
                )
                correspondence = max(
                    correspondence, abs(upstairs + x[-1] * downstairs)
                )
    checks = [
        {
            "name": "omega-nondegenerate",
            "passed": bool(min_det > 1e-8),
            "min_abs_det": min_det,
            "threshold": 1e-8,
        },
        {
            "name": "liouville-field",
            "passed": bool(liouville <= 1e-10),
            "max_residual": liouville,
            "tolerance": 1e-10,
        },
        {
            "name": "lift-homogeneity",
            "passed": bool(homogeneity <= 1e-10),
            "max_residual": homogeneity,
            "tolerance": 1e-10,
        },
        {
            "name": "theta-pairing",
            "passed": bool(pairing <= 1e-8),
            "max_residual": pairing,
            "tolerance": 1e-8,
        },
        {
            "name": "bracket-correspondence",
            "passed": bool(correspondence <= 1e-8),
            "max_residual": correspondence,
            "tolerance": 1e-8,
        },
    ]
    passed = all(c["passed"] for c in checks)
    report = _report_head(cfg, "symplectize-verify", seed)
    report.update({"checks": checks, "samples": args.samples, "passed": passed})
    return report, 0 if passed else 1


def _load_points(path: str, dim: int) -> tuple[list[np.ndarray], float]:
    """Read query points; rows may be base (dim) or lifted (dim + 1)."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read points file {path}: {exc}") from exc
    r_default = 1.0
    if isinstance(data, dict):
        r_default = float(data.get("r", 1.0))
        data = data.get("points")
    if not isinstance(data, list) or not data:
        raise ConfigError(f"points file {path} must list at least one point")
    points = []
    for i, row in enumerate(data):
        try:
            vec = np.asarray(row, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(f"point {i} is not a number list") from None
        if vec.shape not in ((dim,), (dim + 1,)):
            raise ConfigError(
                f"point {i} must have {dim} (base) or {dim + 1} (lifted) "
                f"components, got {vec.shape}"
            )
        points.append(vec)
    return points, r_default


def cmd_action_angle(cfg: SystemConfig, args, seed: int) -> tuple[dict, int]:
    system = cfg.system()
    symp = cfg.symp_system()
    section = cfg.section(args.section)
    points, r_default = _load_points(args.points, system.dim)
    sec_report = verify_section(
        symp, section, n_samples=args.samples, tolerance=args.tolerance, seed=seed
    )
    results: list[dict[str, Any]] = []
    failures = 0
    rows = points if sec_report.passed else points[:0]
    for idx, row in enumerate(rows):
        x = row if len(row) == symp.dim else np.append(row, r_default)
        entry: dict[str, Any] = {"index": idx, "point": x}
        try:
            sol = angle_solve(
                symp,
                section,
                x,
                config=cfg.integrator,
                sign=sec_report.sign if sec_report.sign != 0 else None,
            )
        except (IntegrabilityError, FlowError, ValueError) as exc:
            failures += 1
            entry.update({"converged": False, "error": str(exc)})
        else:
            entry.update(
                {
                    "converged": True,
                    "y": sol.y,
                    "A": sol.A,
                    "A_tilde": sol.A_tilde,
                    "denominator_index": sol.denominator_index,
                    "residual": sol.residual,
                    "iterations": sol.iterations,
                }
            )
        results.append(entry)
    report = _report_head(cfg, "action-angle", seed)
    report.update(
        {
            "section": {
                "name": sec_report.name,
                "passed": sec_report.passed,
                "sign": sec_report.sign,
                "max_target_residual": sec_report.max_target_residual,
                "max_horizontality": sec_report.max_horizontality,
                "tolerance": sec_report.tolerance,
                "samples": sec_report.n_samples,
            },
            "points": results,
            "passed": bool(sec_report.passed and failures == 0),
        }
    )
    if failures:
        return report, 3
    return report, 0 if sec_report.passed else 1


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contactmech",
        description="Contact integrability diagnostics",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("config", help="system configuration JSON")
        p.add_argument("--seed", type=int, default=None, help="sampling seed override")
        p.add_argument("--out", default=None, help="also write the report JSON here")

    p = sub.add_parser("check", help="contact condition, involution, rank")
    common(p)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("coisotropy", help="cyclic sums and tangency on a ray")
    common(p)
    p.add_argument("--lambda", dest="ray", required=True, help="ray direction v0,v1,...")
    p.add_argument("--points", type=int, default=25)
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.set_defaults(func=cmd_coisotropy)

    p = sub.add_parser("integrate", help="integrate one integral's flow")
    p.add_argument("config", help="system configuration JSON")
    p.add_argument("--seed", type=int, default=None, help="sampling seed override")
    p.add_argument("--f", type=int, required=True, help="integral index")
    p.add_argument("--x0", required=True, help="start point v0,v1,...")
    p.add_argument("--t", type=float, required=True, help="flow time")
    p.add_argument("--out", required=True, help="trajectory CSV path")
    p.set_defaults(func=cmd_integrate, out_is_csv=True)

    p = sub.add_parser("symplectize-verify", help="lifted structure checks")
    common(p)
    p.add_argument("--samples", type=int, default=50)
    p.set_defaults(func=cmd_symplectize_verify)

    p = sub.add_parser("action-angle", help="verify a section and solve angles")
    common(p)
    p.add_argument("--section", required=True, help="section name from the config")
    p.add_argument("--points", required=True, help="JSON file with query points")
    p.add_argument("--samples", type=int, default=25)
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.set_defaults(func=cmd_action_angle)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        cfg = load_config(args.config)
        seed = _resolve_seed(args.seed, cfg)
        report, code = args.func(cfg, args, seed)
    except (ConfigError, ExpressionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (GeometryError, SymplectizationError, IntegrabilityError, FlowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    text = render_report(report)
    sys.stdout.write(text)
    if args.out and not getattr(args, "out_is_csv", False):
        Path(args.out).write_text(text)
    print(f"elapsed {time.perf_counter() - started:.3f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
