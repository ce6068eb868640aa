"""Command line front end.

Exit codes: 0 on success, 2 on input or validation errors, 1 when ``--strict``
is set and a solver fails to converge (or ``check`` finds a residual above its
tolerance).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .bounded_lipschitz import bl_distance
from .elliptic import TRACE_COLUMNS, build_elliptic, equidistribution_experiment, local_discrepancy
from .errors import BerkgreenError
from .fileio import load_measure, load_points, load_region, load_space
from .green import DEFAULT_H, GreenFunction
from .kernel import KernelHandle, base_change_check, solve_graph_kernel
from .metric_space import MetricSpace, SpacePoint
from .minimization import SolverOptions, capacity, minimize_energy
from .paf import SignedMeasure, laplacian, measure_residual

FORMATS = ("text", "json", "csv")
CHECK_TOL = 1e-9


class UsageError(BerkgreenError):
    pass


@dataclass
class Report:
    """Ordered fields plus optional table rows, rendered as text, JSON or CSV."""

    fields: dict[str, Any]
    columns: tuple[str, ...] = ()
    rows: list[list[Any]] = field(default_factory=list)
    failed: bool = False


def fmt_float(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    s = f"{x:.12g}"
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _scalar(v: Any) -> Any:
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return fmt_float(float(v))
    return v


def _text(v: Any) -> str:
    v = _scalar(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, list):
        return " ".join(_text(x) for x in v)
    return str(v)


def _json_value(v: Any) -> Any:
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    v2 = _scalar(v)
    if isinstance(v, (float, np.floating)):
        # keep JSON numbers numeric where possible; infinities stay strings
        return float(v2) if math.isfinite(float(v)) else v2
    return v2


def emit_report(report: Report, fmt: str) -> str:
    if fmt == "json":
        out = dict(report.fields)
        if report.columns:
            out["rows"] = [dict(zip(report.columns, r)) for r in report.rows]
        return json.dumps(_json_value(out), indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if report.columns:
            w.writerow(report.columns)
            w.writerows([[_text(x) for x in r] for r in report.rows])
        else:
            w.writerow(report.fields.keys())
            w.writerow([_text(v) for v in report.fields.values()])
        return buf.getvalue()
    lines = [f"{k}: {_text(v)}" for k, v in report.fields.items()]
    if report.columns:
        lines.append("  ".join(report.columns))
        lines.extend("  ".join(_text(x) for x in r) for r in report.rows)
    return "\n".join(lines) + "\n"


# -- helpers -------------------------------------------------------------------


def _point(text: str, space: MetricSpace, name: str) -> SpacePoint:
    try:
        return space.canon(SpacePoint.parse(text))
    except BerkgreenError as exc:
        raise UsageError(f"--{name}: {exc}") from None


def _default_base(space: MetricSpace) -> SpacePoint:
    return SpacePoint.at(next(iter(space.skeleton.vertices)))


def _base(args, space: MetricSpace) -> SpacePoint:
    return _point(args.zeta0, space, "zeta0") if args.zeta0 else _default_base(space)


def _positive(name: str):
    def conv(text: str) -> float:
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number, got {text!r}") from None
        if not (v > 0 and math.isfinite(v)):
            raise argparse.ArgumentTypeError(f"{name} must be positive, got {text!r}")
        return v

    return conv


def _positive_int(name: str):
    def conv(text: str) -> int:
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be an integer, got {text!r}") from None
        if v <= 0:
            raise argparse.ArgumentTypeError(f"{name} must be positive, got {text!r}")
        return v

    return conv


def _n_list(text: str) -> list[int]:
    try:
        ns = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--n must be a comma separated list of integers, got {text!r}") from None
    if not ns or any(n < 1 for n in ns):
        raise argparse.ArgumentTypeError("--n values must be positive integers")
    return ns


def _threads(args) -> int:
    env = os.environ.get("BERKGREEN_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"BERKGREEN_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise UsageError("BERKGREEN_THREADS must be positive")
        return n
    return args.threads if args.threads else (os.cpu_count() or 1)


def _opts(args) -> SolverOptions:
    return SolverOptions(max_iter=args.max_iter, tol=args.tol, solver=args.solver)


def _quiet(fn, *a, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fn(*a, **kw)


# -- subcommands ---------------------------------------------------------------


def cmd_kernel(args) -> Report:
    space = load_space(args.space)
    zeta = _point(args.zeta, space, "zeta")
    y = _point(args.y, space, "y")
    if args.check == "base-change":
        if args.zeta_prime is None:
            raise UsageError("--check base-change needs --zeta-prime")
        zp = _point(args.zeta_prime, space, "zeta-prime")
        x = _point(args.x, space, "x") if args.x else y
        res = base_change_check(space, zeta, zp, x, y)
        return Report({"residual": res}, failed=res > CHECK_TOL)
    if args.x is not None:
        x = _point(args.x, space, "x")
        return Report({"value": KernelHandle(space, zeta).value(x, y)})
    solve = solve_graph_kernel(space, zeta, y)
    fn = solve.values
    rows = []
    for eid in sorted(fn.pieces):
        offs, vals = fn.pieces[eid]
        rows.extend([eid, t, v] for t, v in zip(offs, vals))
    return Report({"zeta": str(zeta), "y": str(y)}, ("edge", "offset", "value"), rows)


def _green(args, space: MetricSpace) -> GreenFunction:
    mu = load_measure(args.mu, space)
    return GreenFunction(space, mu, _base(args, space), args.h)


def cmd_green(args) -> Report:
    space = load_space(args.space)
    G = _green(args, space)
    x, y = _point(args.x, space, "x"), _point(args.y, space, "y")
    return Report({"value": G(x, y), "C": G.C})


def cmd_energy(args) -> Report:
    space = load_space(args.space)
    G = _green(args, space)
    nu = load_measure(args.nu, space)
    if not nu.is_probability(1e-9):
        raise UsageError("--nu must be a probability measure")
    return Report(G.energy(nu, args.h).as_dict())


def _equilibrium_report(res) -> Report:
    d = res.as_dict()
    rows = d.pop("minimizer")
    return Report(d, ("point", "weight"), rows)


def cmd_minimize(args) -> Report:
    space = load_space(args.space)
    G = _green(args, space)
    res = _quiet(minimize_energy, G, args.h, _opts(args))
    return _equilibrium_report(res)


def cmd_capacity(args) -> Report:
    space = load_space(args.space)
    zeta0 = _point(args.zeta0, space, "zeta0")
    zeta = _point(args.zeta, space, "zeta")
    region = load_region(args.region, space)
    res = _quiet(capacity, space, zeta0, zeta, region, args.h, _opts(args))
    return _equilibrium_report(res)


def cmd_discrepancy(args) -> Report:
    model = build_elliptic(args.reduction, args.log_abs_j, h=args.h)
    pts = load_points(args.points, model.space)
    D = local_discrepancy(model, pts)
    n = len(pts)
    bl = bl_distance(model.space, SignedMeasure(tuple((p, 1.0 / n) for p in pts)), model.mu, model.dictionary)
    return Report({"n": n, "D": D, "BL": bl})


def cmd_equidist(args) -> Report:
    model = build_elliptic(args.reduction, args.log_abs_j, h=args.h)
    width = args.width * model.circumference if args.generator == "clustered" else None
    custom = None
    if args.generator == "custom":
        if not args.points:
            raise UsageError("--generator custom needs --points")
        custom = load_points(args.points, model.space)
    trace = equidistribution_experiment(
        model, args.generator, args.n, args.seed, width=width, custom=custom, threads=_threads(args)
    )
    rows = [[r.n, r.D, r.BL, trace.seed, trace.h] for r in trace.records]
    return Report({}, TRACE_COLUMNS, rows)


def cmd_check(args) -> Report:
    space = load_space(args.space)
    rng = np.random.default_rng(args.seed)
    pts = [p for p in space.mesh(args.h) if not space.is_type_one(p)]
    sample = [pts[i] for i in rng.choice(len(pts), size=min(args.samples, len(pts)), replace=False)]
    skel = [p for p in pts if space.on_skeleton(p)]
    zeta = _base(args, space)
    H = KernelHandle(space, zeta)
    M = H.matrix(sample)
    symmetry = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    zp = skel[int(rng.integers(len(skel)))]
    Hp = KernelHandle(space, zp)
    base_change = max(
        (base_change_check(space, H, Hp, x, y) for x, y in zip(sample, sample[::-1])), default=0.0
    )
    lap = 0.0
    for y in sample[: min(5, len(sample))]:
        s = solve_graph_kernel(space.skeleton, zeta, space.retract(y))
        target = SignedMeasure(((s.zeta, 1.0), (s.y, -1.0)))
        lap = max(lap, measure_residual(s.space, laplacian(s.values), target))
    retraction = 0.0
    for x, y in zip([p for p in sample if space.on_skeleton(p)], sample):
        retraction = max(retraction, abs(H.value(x, y) - H.value(x, space.retract(y))))
    fields = {
        "samples": len(sample),
        "base": str(zeta),
        "symmetry": symmetry,
        "base_change": base_change,
        "laplacian": lap,
        "retraction": retraction,
    }
    failed = max(symmetry, base_change, lap, retraction) > CHECK_TOL
    return Report(fields, failed=failed)


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=FORMATS, default="text")
    common.add_argument("--out", help="write the report to this file instead of standard output")
    common.add_argument("--strict", action="store_true", help="exit 1 on non-convergence or a failed check")
    common.add_argument("--threads", type=_positive_int("--threads"), default=None)

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--solver", choices=("frank-wolfe", "projected-gradient"), default="frank-wolfe")
    solver.add_argument("--tol", type=_positive("--tol"), default=1e-8)
    solver.add_argument("--max-iter", type=_positive_int("--max-iter"), default=100_000)

    p = argparse.ArgumentParser(prog="berkgreen", description="Potential theory on metric graphs.")
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("kernel", parents=[common], help="potential kernel g_zeta(x, y)")
    k.add_argument("--space", required=True)
    k.add_argument("--zeta", required=True)
    k.add_argument("--y", required=True)
    k.add_argument("--x")
    k.add_argument("--check", choices=("base-change",))
    k.add_argument("--zeta-prime")
    k.set_defaults(func=cmd_kernel)

    g = sub.add_parser("green", parents=[common], help="Arakelov-Green's function g_mu(x, y)")
    g.add_argument("--space", required=True)
    g.add_argument("--mu", required=True)
    g.add_argument("--x", required=True)
    g.add_argument("--y", required=True)
    g.add_argument("--zeta0")
    g.add_argument("--h", type=_positive("--h"), default=DEFAULT_H)
    g.set_defaults(func=cmd_green)

    e = sub.add_parser("energy", parents=[common], help="mu-energy of nu")
    e.add_argument("--space", required=True)
    e.add_argument("--mu", required=True)
    e.add_argument("--nu", required=True)
    e.add_argument("--zeta0")
    e.add_argument("--h", type=_positive("--h"), default=DEFAULT_H)
    e.set_defaults(func=cmd_energy)

    m = sub.add_parser("minimize", parents=[common, solver], help="minimize the mu-energy on a mesh")
    m.add_argument("--space", required=True)
    m.add_argument("--mu", required=True)
    m.add_argument("--zeta0")
    m.add_argument("--h", type=_positive("--h"), default=0.01)
    m.set_defaults(func=cmd_minimize)

    c = sub.add_parser("capacity", parents=[common, solver], help="capacity of a region relative to zeta")
    c.add_argument("--space", required=True)
    c.add_argument("--zeta0", required=True)
    c.add_argument("--zeta", required=True)
    c.add_argument("--region", required=True)
    c.add_argument("--h", type=_positive("--h"), default=0.01)
    c.set_defaults(func=cmd_capacity)

    d = sub.add_parser("discrepancy", parents=[common], help="local discrepancy of a point set")
    d.add_argument("--reduction", choices=("good", "multiplicative"), required=True)
    d.add_argument("--log-abs-j", type=float, required=True)
    d.add_argument("--points", required=True)
    d.add_argument("--h", type=_positive("--h"), default=DEFAULT_H)
    d.set_defaults(func=cmd_discrepancy)

    q = sub.add_parser("equidist", parents=[common], help="discrepancy trace over a list of n")
    q.add_argument("--reduction", choices=("multiplicative",), default="multiplicative")
    q.add_argument("--log-abs-j", type=float, default=3.0)
    q.add_argument("--generator", choices=("equispaced", "random_uniform", "clustered", "custom"), default="equispaced")
    q.add_argument("--width", type=_positive("--width"), default=0.01, help="cluster width as a fraction of L")
    q.add_argument("--points", help="point list for --generator custom")
    q.add_argument("--n", type=_n_list, default=[4, 8, 16, 32, 64, 128])
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--h", type=_positive("--h"), default=DEFAULT_H)
    q.set_defaults(func=cmd_equidist)

    ch = sub.add_parser("check", parents=[common], help="invariant residuals on a space")
    ch.add_argument("--space", required=True)
    ch.add_argument("--zeta0")
    ch.add_argument("--h", type=_positive("--h"), default=0.1)
    ch.add_argument("--samples", type=_positive_int("--samples"), default=40)
    ch.add_argument("--seed", type=int, default=0)
    ch.set_defaults(func=cmd_check)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report = args.func(args)
    except (BerkgreenError, ValueError) as exc:
        print(f"berkgreen {args.command}: error: {exc}", file=sys.stderr)
        return 2
    text = emit_report(report, args.format)
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"berkgreen {args.command}: error: --out: {exc.strerror}", file=sys.stderr)
            return 2
    else:
        sys.stdout.write(text)
    converged = report.fields.get("converged", True)
    if args.strict and (report.failed or converged is False):
        reason = "check failed" if report.failed else "not converged"
        print(f"berkgreen {args.command}: {reason}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
