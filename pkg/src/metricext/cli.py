"""Command-line front end.

Every subcommand reads matrices as CSV (header row of ids) or JSON
(``{"ids": [...], "matrix": [[...]]}``), writes its matrix in the same format
unless ``--format`` says otherwise, and writes a JSON report of the checks it
ran together with a provenance block.

Exit codes: 0 success, 1 validation failure, 2 check failure, 3 I/O error.
Errors are printed to stderr as one JSON record.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import MetricExtError, ValidationError
from .extension import (
    ExtensionConfig,
    GroupAction,
    build_operator,
    equivariant_extend,
    extend,
    near_isometric_extend,
    with_base_points,
)
from .matrix_io import detect_format, format_matrix, read_matrix
from .nerve import AmbientSpace
from .sjoin import FunctionTable, Leaf, canonicalize, epsilon_net
from .verify import (
    CheckResult,
    VerificationReport,
    check_metric_positivity,
    check_net,
    check_pseudometric,
    check_regular_operator,
)

EXIT_OK, EXIT_INVALID, EXIT_CHECK, EXIT_IO = 0, 1, 2, 3

# the worked three-point example: X = {x0, x1} and one exterior point y
DEMO_IDS = ("x0", "x1", "y")
DEMO_D = [[0.0, 1.0, 0.2], [1.0, 0.0, 0.9], [0.2, 0.9, 0.0]]
DEMO_SUBSET = ("x0", "x1")
DEMO_P = [[0.0, 1.0], [1.0, 0.0]]
DEMO_N = 2
# traced by hand from the level formulas: T(y, x0) = 2/15, T(y, x1) = 13/15
DEMO_EXPECTED = [
    [0.0, 1.0, 2.0 / 15.0],
    [1.0, 0.0, 13.0 / 15.0],
    [2.0 / 15.0, 13.0 / 15.0, 0.0],
]


class UsageError(MetricExtError, ValueError):
    """Bad command-line arguments."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which is our check-failure code
    def error(self, message):
        raise UsageError(message)


def _csv_list(text: str | None) -> list[str]:
    if text is None:
        return []
    return [t.strip() for t in text.split(",") if t.strip()]


def select_subset(ids: tuple, selector: str) -> tuple:
    """Resolve ``--subset``: all-integer tokens are indices, anything else is a label list.

    Integer tokens that are not all valid indices fall back to labels when
    every token names an id.
    """
    tokens = _csv_list(selector)
    if not tokens:
        raise UsageError("--subset is empty")
    if all(t.lstrip("-").isdigit() for t in tokens):
        idx = [int(t) for t in tokens]
        if all(0 <= i < len(ids) for i in idx):
            out = tuple(ids[i] for i in idx)
            if len(set(out)) != len(out):
                raise UsageError("--subset repeats a point")
            return out
        if not all(t in ids for t in tokens):
            bad = next(i for i in idx if not 0 <= i < len(ids))
            raise UsageError(f"subset index {bad} out of range for {len(ids)} points")
    unknown = [t for t in tokens if t not in ids]
    if unknown:
        raise UsageError(f"unknown subset ids {unknown}")
    if len(set(tokens)) != len(tokens):
        raise UsageError("--subset repeats a point")
    return tuple(tokens)


def load_space(args) -> tuple[AmbientSpace, FunctionTable | None, str]:
    if not args.metric_d:
        raise UsageError("--metric-d is required")
    ids, d = read_matrix(args.metric_d)
    p = None
    if args.pseudometric_p:
        p_ids, pm = read_matrix(args.pseudometric_p)
        p = FunctionTable.from_matrix(p_ids, pm)
    if args.subset:
        subset = select_subset(ids, args.subset)
    elif p is not None:
        subset = p.ground.ids
    else:
        raise UsageError("--subset is required when no --pseudometric-p is given")
    space = AmbientSpace.from_matrix(ids, d, subset, tol=args.tolerance)
    if p is not None:
        if set(p.ground.ids) != set(subset):
            missing = sorted(set(subset) - set(p.ground.ids))
            extra = sorted(set(p.ground.ids) - set(subset))
            raise ValidationError(f"p ids do not match the subset (missing {missing}, extra {extra})", tuple(missing + extra))
        p = p.restrict(subset)
    return space, p, detect_format(args.metric_d)


def load_group(path: str, ids: tuple) -> GroupAction:
    """A JSON list of permutations (id arrays), or ``{"generators": [...]}`` to take the closure."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed group JSON: {exc}") from None
    norm = lambda perms: [[str(z) for z in g] for g in perms]
    if isinstance(data, dict) and "generators" in data:
        return GroupAction.generated_by(ids, norm(data["generators"]))
    if not isinstance(data, list):
        raise ValidationError("group JSON must be a list of permutations")
    return GroupAction.from_permutations(ids, norm(data))


def make_config(args, space: AmbientSpace, p: FunctionTable | None) -> ExtensionConfig:
    a = b = None
    if args.points_ab:
        ab = _csv_list(args.points_ab)
        if len(ab) != 2:
            raise UsageError("--points-ab takes two ids")
        a, b = ab
    cfg = ExtensionConfig(
        a=a,
        b=b,
        truncation_N=args.truncation_N,
        tolerance=args.tolerance,
        normalize_weights=not args.raw_weights,
        exterior_radius=args.exterior_radius,
    )
    return with_base_points(cfg, space, p)


# --- checks on an extension ---------------------------------------------------------


def _exactness(values: np.ndarray, p: FunctionTable, space: AmbientSpace, tol: float) -> CheckResult:
    pos = [space.ground.position(x) for x in space.subset_X]
    diff = np.abs(values[np.ix_(pos, pos)] - p.values)
    i, j = np.unravel_index(int(np.argmax(diff)), diff.shape)
    worst = float(diff[i, j])
    ok = worst <= tol
    return CheckResult("extension_exactness", ok, worst, () if ok else (space.subset_X[i], space.subset_X[j]))


def extension_checks(values, ids, p: FunctionTable, space: AmbientSpace, args, config) -> VerificationReport:
    tol = args.tolerance
    checks = [_exactness(values, p, space, tol)]
    if p.is_pseudometric(tol):
        table = FunctionTable.from_matrix(ids, values)
        checks += check_pseudometric(table, tol).checks
        if p.is_metric(tol):
            checks.append(check_metric_positivity(table))
    if args.samples:
        op = build_operator(space, config)
        checks += check_regular_operator(op.apply, len(space.subset_X), args.samples, tol, args.seed).checks
    return VerificationReport(checks, tol)


# --- subcommands ------------------------------------------------------------------


def _emit_matrix(args, ids, values, fmt) -> None:
    text = format_matrix(ids, values, args.format or fmt)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _run_extension(args, kind: str) -> tuple[VerificationReport, dict]:
    space, p, fmt = load_space(args)
    if p is None:
        raise UsageError("--pseudometric-p is required")
    config = make_config(args, space, p)
    if kind == "extend":
        result = extend(p, space, config)
        group = None
    else:
        if not args.group:
            raise UsageError("--group is required")
        group = load_group(args.group, space.ids)
        if kind == "equivariant":
            result = equivariant_extend(p, space, group, config)
        else:
            if args.eps is None:
                raise UsageError("--eps is required")
            result = near_isometric_extend(p, space, group, args.eps, config)
    report = extension_checks(result.values, result.ids, p, space, args, config)
    if group is not None:
        worst, witness = group.invariance_defect(result.values)
        ok = worst <= args.tolerance
        report.checks.append(CheckResult("invariance", ok, worst, () if ok else witness))
    if kind == "near-isometric":
        excess = float(np.abs(result.values).max()) - (1.0 + args.eps) * p.norm
        ok = excess <= args.tolerance
        report.checks.append(CheckResult("norm_bound", ok, max(excess, 0.0), () if ok else ("norm",)))
    _emit_matrix(args, result.ids, result.values, fmt)
    prov = dict(result.provenance, operation=kind, subset=list(space.subset_X), exterior_radius=config.exterior_radius)
    return report, prov


def cmd_extend(args):
    return _run_extension(args, "extend")


def cmd_equivariant(args):
    return _run_extension(args, "equivariant")


def cmd_near_isometric(args):
    return _run_extension(args, "near-isometric")


def cmd_verify(args):
    ids, values = read_matrix(args.matrix)
    table = FunctionTable.from_matrix(ids, values)
    report = check_pseudometric(table, args.tolerance)
    if args.require_metric:
        report.checks.append(check_metric_positivity(table, args.tolerance))
    return report, {"operation": "verify", "source": str(args.matrix)}


def _net_record(u) -> dict:
    u = canonicalize(u)
    if isinstance(u, Leaf):
        return {"x": u.id, "y": u.id, "t": 0.0}
    return {"x": u.left.id, "y": u.right.id, "t": u.t}


def cmd_net_check(args):
    if not args.pseudometric_p:
        raise UsageError("--pseudometric-p is required")
    if args.eps is None:
        raise UsageError("--eps is required")
    ids, pm = read_matrix(args.pseudometric_p)
    p = FunctionTable.from_matrix(ids, pm)
    pre = check_pseudometric(p, args.tolerance)
    if not pre.passed:
        bad = pre.failures()[0]
        raise ValidationError(f"p fails {bad.name}", bad.witness)
    net = epsilon_net(p, args.eps)
    report = check_net(net, p, args.eps, args.samples or 10_000, args.seed)
    text = json.dumps({"eps": args.eps, "points": [_net_record(u) for u in net]}, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return report, {"operation": "net-check", "net_size": len(net), "seed": args.seed, "eps": args.eps}


def demo_inputs() -> tuple[AmbientSpace, FunctionTable, ExtensionConfig]:
    space = AmbientSpace.from_matrix(DEMO_IDS, np.array(DEMO_D), DEMO_SUBSET)
    p = FunctionTable.from_matrix(DEMO_SUBSET, np.array(DEMO_P))
    return space, p, ExtensionConfig(truncation_N=DEMO_N)


def cmd_demo(args):
    space, p, config = demo_inputs()
    config = with_base_points(config, space, p)
    result = extend(p, space, config)
    expected = np.array(DEMO_EXPECTED)
    diff = np.abs(result.values - expected)
    i, j = np.unravel_index(int(np.argmax(diff)), diff.shape)
    worst = float(diff[i, j])
    ok = worst <= args.tolerance
    report = extension_checks(result.values, result.ids, p, space, args, config)
    report.checks.append(CheckResult("golden", ok, worst, () if ok else (DEMO_IDS[i], DEMO_IDS[j])))
    _emit_matrix(args, result.ids, result.values, "csv")
    return report, dict(result.provenance, operation="demo", subset=list(DEMO_SUBSET))


# --- plumbing -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--tolerance", type=float, default=1e-9, help="absolute slack for every check")
    common.add_argument("--seed", type=int, default=0, help="seed for sampled checks")
    common.add_argument("--format", choices=("csv", "json"), help="output matrix format (default: that of the input)")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--report", help="path for the JSON report")
    common.add_argument("--samples", type=int, default=0, help="random samples for the operator or net check")

    inputs = _Parser(add_help=False)
    inputs.add_argument("--metric-d", help="distance matrix on Y")
    inputs.add_argument("--subset", help="X as indices (0,2) or ids (x0,x2); default: the ids of p")
    inputs.add_argument("--pseudometric-p", help="matrix of p over the ids of X")
    inputs.add_argument("--truncation-N", type=int, help="number of levels (default: chosen from the data)")
    inputs.add_argument("--points-ab", help="base points a,b in X")
    inputs.add_argument("--raw-weights", action="store_true", help="use 2^-n level weights without renormalising")
    inputs.add_argument("--exterior-radius", type=float, help="fixed ball radius for the exterior cover")

    parser = _Parser(prog="metricext", description="Extend (pseudo)metrics from a subset of a finite metric space.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("extend", parents=[common, inputs], help="extend p from X x X to Y x Y")
    sp.set_defaults(func=cmd_extend)
    sp = sub.add_parser("equivariant", parents=[common, inputs], help="group-averaged extension")
    sp.add_argument("--group", help="JSON list of permutations of the ids")
    sp.set_defaults(func=cmd_equivariant)
    sp = sub.add_parser("near-isometric", parents=[common, inputs], help="invariant extension with norm <= 1 + eps")
    sp.add_argument("--group", help="JSON list of permutations of the ids")
    sp.add_argument("--eps", type=float, help="norm allowance")
    sp.set_defaults(func=cmd_near_isometric)
    sp = sub.add_parser("verify", parents=[common], help="check a matrix for the pseudometric axioms")
    sp.add_argument("matrix", help="matrix file to check")
    sp.add_argument("--require-metric", action="store_true", help="also require positivity off the diagonal")
    sp.set_defaults(func=cmd_verify)
    sp = sub.add_parser("net-check", parents=[common], help="build an eps-net of the squeezed join and test it")
    sp.add_argument("--pseudometric-p", help="pseudometric matrix")
    sp.add_argument("--eps", type=float, help="net radius")
    sp.set_defaults(func=cmd_net_check)
    sp = sub.add_parser("demo", parents=[common], help="run the three-point worked example")
    sp.set_defaults(func=cmd_demo)
    return parser


def _error_record(exc: BaseException, code: int) -> dict:
    return {
        "error": type(exc).__name__,
        "message": str(exc),
        "witness": [str(w) for w in getattr(exc, "witness", ())],
        "exit_code": code,
    }


def _write_report(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, default=str) + "\n", encoding="utf-8")


def main(argv=None) -> int:
    report_path = None
    try:
        args = build_parser().parse_args(argv)
        report_path = args.report
        report, provenance = args.func(args)
        payload = dict(report.to_dict(), passed=report.passed, provenance=provenance)
        if report_path:
            _write_report(report_path, payload)
        for c in report.failures():
            print(f"FAIL {c.name}: worst {c.worst_violation:.3g} at {list(c.witness)}", file=sys.stderr)
        return EXIT_OK if report.passed else EXIT_CHECK
    except (MetricExtError, KeyError, ValueError) as exc:
        return _fail(exc, EXIT_INVALID, report_path)
    except OSError as exc:
        return _fail(exc, EXIT_IO, report_path)


def _fail(exc: BaseException, code: int, report_path) -> int:
    record = _error_record(exc, code)
    print(json.dumps(record), file=sys.stderr)
    if report_path:
        try:
            _write_report(report_path, record)
        except OSError:
            pass
    return code


if __name__ == "__main__":
    sys.exit(main())
