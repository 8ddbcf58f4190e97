"""Command-line front end.

Exit codes: 0 success, 1 argument error, 2 numerical non-convergence,
3 invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .bubbles import Bubble, MomentMismatch, bubble_field, bubble_moments, bubble_pde_residual
from .functionals import nu_lambda_convert, quotient_Q, w_functional
from .geometry import make_space, read_field_csv
from .lift import (
    NonpositiveEnergy,
    lift_equality_tau,
    lift_quotient_check,
    lift_volume_closed_form,
    lift_volume_quadrature,
    product_bound_check,
)
from .minimize import MinimizeConfig, bubble_probe, minimize_quotient, minimize_w_at_tau, nu_sweep, write_trace_csv
from .specfun import bubble_volume, lambda_euclidean, ratio_F, sphere_constant

EXIT_OK, EXIT_ARGS, EXIT_NONCONVERGED, EXIT_INVARIANT = 0, 1, 2, 3

# tolerances for bubble-check
PDE_TOL, VOLUME_TOL, Q_TOL = 1e-8, 1e-8, 1e-6
# a descent run counts as converged below this EL residual even when it stopped on stagnation
EL_ACCEPT = 1e-4
# smallest lift gap treated as nonnegative
LIFT_GAP_TOL = 1e-8


class ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ArgumentError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# output


def _num(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return f"{x:.17g}"


def _to_json(obj, indent: int = 0) -> str:
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{inner}{_to_json(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return json.dumps(str(obj))


def _flag_lines(args) -> list[str]:
    flags = {k: v for k, v in vars(args).items() if k not in ("handler",)}
    return [f"weighted-yamabe {__version__} {args.command}"] + [f"{k}={v}" for k, v in flags.items()]


def _emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_json(args, payload: dict) -> None:
    flags = {k: v for k, v in vars(args).items() if k not in ("handler",)}
    body = {"command": args.command, "flags": {k: (v if isinstance(v, (int, float, bool)) or v is None else str(v)) for k, v in flags.items()}}
    body.update(payload)
    _emit(args, _to_json(body) + "\n")


def _emit_csv(args, columns: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    for line in _flag_lines(args):
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])
    _emit(args, buf.getvalue())


# ---------------------------------------------------------------------------
# argument helpers


def _dimension(text: str) -> float:
    value = float(text)
    if math.isnan(value) or value < 0:
        raise argparse.ArgumentTypeError("m must be a nonnegative number or inf")
    return value


def _positive(text: str) -> float:
    value = float(text)
    if not value > 0 or not math.isfinite(value):
        raise argparse.ArgumentTypeError("expected a positive finite number")
    return value


def _dimension_n(text: str) -> int:
    value = int(text)
    if value < 3:
        raise argparse.ArgumentTypeError("n must be an integer >= 3")
    return value


def parse_real_list(text: str) -> list[float]:
    """Comma list with an optional ``...`` continuing the step of the first two entries.

    ``0,0.25,...,1`` gives 0, 0.25, 0.5, 0.75, 1.
    """
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if "..." not in parts:
        return [float(p) for p in parts]
    i = parts.index("...")
    if i < 2 or i != len(parts) - 2:
        raise ValueError("use a,b,...,c")
    head = [float(p) for p in parts[:i]]
    last = float(parts[-1])
    step = head[-1] - head[-2]
    if not step > 0 or last < head[-1]:
        raise ValueError("the progression must increase")
    count = int(round((last - head[0]) / step))
    if not math.isclose(head[0] + count * step, last, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError("the last value is not on the progression")
    return [round(head[0] + j * step, 12) for j in range(count + 1)]


def parse_int_range(text: str) -> list[int]:
    """``3..10`` or a comma list of integers."""
    if ".." in text and "," not in text:
        lo, hi = (int(p) for p in text.split(".."))
        if hi < lo:
            raise ValueError("empty range")
        return list(range(lo, hi + 1))
    return [int(p) for p in text.split(",") if p.strip()]


def _space(args, m=None):
    m = args.m if m is None else m
    kind = args.space
    kwargs = {"node_count": args.nodes}
    if kind == "euclidean":
        kwargs["truncation_radius"] = args.rmax
    if getattr(args, "scale", None) is not None:
        kwargs["scale"] = args.scale
    return make_space(kind, args.n, m, **kwargs)


def _base_field(args, space, tau_default: float = 1.0):
    if args.input:
        return read_field_csv(args.input, space).values
    if space.kind == "euclidean":
        b = Bubble(space.m, space.n, tau=args.tau or tau_default)
        return bubble_field(b, space).values
    return np.ones(space.node_count)


def _accepted(report) -> bool:
    return bool(report.converged or report.el_residual_norm <= EL_ACCEPT)


# ---------------------------------------------------------------------------
# commands


def cmd_constants(args) -> int:
    m, n = args.m, args.n
    if math.isinf(m):
        raise ArgumentError("constants need finite m")
    lam = lambda_euclidean(m, n)
    try:
        nu = nu_lambda_convert(lam, m, n) if m > 0 else lam
    except ValueError:
        nu = None
    _emit_json(args, {
        "lambda_mn": lam,
        "V": bubble_volume(m, n),
        "Q1_sphere": sphere_constant(m, n),
        "F": ratio_F(m, n),
        "nu": nu,
    })
    return EXIT_OK


def cmd_bubble_check(args) -> int:
    b = Bubble(args.m, args.n, tau=args.tau or 1.0)
    space = make_space("euclidean", args.n, args.m, node_count=args.nodes, truncation_radius=args.rmax)
    pde = bubble_pde_residual(b, space)
    q = quotient_Q(space, bubble_field(b, space))
    lam = lambda_euclidean(args.m, args.n)
    volume_gap = abs(q.mass_volume / bubble_volume(args.m, args.n) - 1)
    q_gap = abs(q.q_value / lam - 1)
    status = "ok"
    code = EXIT_OK
    try:
        closed = bubble_moments(b, space)
        closed_gap = abs(closed.quotient(args.m, args.n) / lam - 1)
    except MomentMismatch as exc:
        closed_gap, status, code = None, str(exc), EXIT_INVARIANT
    if pde > PDE_TOL or volume_gap > VOLUME_TOL or q_gap > Q_TOL:
        status, code = "tolerance exceeded", EXIT_INVARIANT
    _emit_json(args, {
        "pde_residual": pde,
        "volume_gap": volume_gap,
        "q_gap": q_gap,
        "closed_form_q_gap": closed_gap,
        "tolerances": {"pde_residual": PDE_TOL, "volume_gap": VOLUME_TOL, "q_gap": Q_TOL},
        "status": status,
    })
    return code


def cmd_quotient(args) -> int:
    space = _space(args)
    w = _base_field(args, space)
    q = quotient_Q(space, w)
    payload = q.to_dict()
    if args.tau is not None:
        payload.update(w_functional(space, w, args.tau).to_dict())
    _emit_json(args, payload)
    return EXIT_OK


def _minimize_config(args) -> MinimizeConfig:
    return MinimizeConfig(
        max_iterations=args.max_iterations,
        initial=args.init,
        bubble_width=args.width,
        rng_seed=args.seed,
        time_limit=args.time_limit,
    )


def cmd_minimize(args) -> int:
    space = _space(args)
    cfg = _minimize_config(args)
    if args.tau is None:
        report = minimize_quotient(space, cfg)
    else:
        report = minimize_w_at_tau(space, args.tau, cfg)
    if args.format == "csv":
        _emit_csv(args, ["iteration", "q_value", "sup", "mass_localization"],
                  [[i, q, s, ml] for i, (q, s, ml) in enumerate(zip(report.q_trace, report.sup_trace, report.mass_trace))])
    else:
        _emit_json(args, report.to_dict())
    if args.field_out:
        from .geometry import write_field_csv

        write_field_csv(args.field_out, space, report.best_field, header=_flag_lines(args))
    return EXIT_OK if _accepted(report) else EXIT_NONCONVERGED


def cmd_nu_sweep(args) -> int:
    if not 0 < args.tau_min < args.tau_max:
        raise ArgumentError("need 0 < --tau-min < --tau-max")
    if args.points < 2:
        raise ArgumentError("--points must be at least 2")
    space = _space(args)
    taus = np.geomspace(args.tau_max, args.tau_min, args.points)
    results = nu_sweep(space, taus, _minimize_config(args), cutoff_radius=args.cutoff)
    rows = []
    for tau, nu, rep in results:
        probe = bubble_probe(space, tau, args.cutoff) if space.kind == "sphere" else None
        rows.append({"tau": tau, "nu": nu, "probe": probe, "el_w_residual": rep.el_residual_norm,
                     "converged": _accepted(rep)})
    nu_e = nu_lambda_convert(lambda_euclidean(args.m, args.n), args.m, args.n) if math.isfinite(args.m) else None
    if args.format == "csv":
        _emit_csv(args, ["tau", "nu", "probe", "el_w_residual", "converged"],
                  [[r["tau"], r["nu"], r["probe"] if r["probe"] is not None else "", r["el_w_residual"], int(r["converged"])]
                   for r in rows])
    else:
        _emit_json(args, {"nu_euclidean": nu_e, "points": rows})
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_NONCONVERGED


def cmd_lift_check(args) -> int:
    if math.isinf(args.m) or args.m <= 0:
        raise ArgumentError("the lift needs finite m > 0")
    space = _space(args)
    w = _base_field(args, space)
    try:
        tau_eq = lift_equality_tau(space, w)
        tau = args.tau if args.tau is not None else tau_eq
        check = lift_quotient_check(space, w, tau)
    except NonpositiveEnergy as exc:
        raise ArgumentError(str(exc)) from exc
    base_ratio, lift_ratio = product_bound_check(space, w)
    payload = {
        "lhs": check.lhs,
        "rhs": check.rhs,
        "gap": check.gap,
        "tau": tau,
        "equality_tau": tau_eq,
        "lift_volume_closed_form": lift_volume_closed_form(space, w, tau),
        "lift_volume_quadrature": lift_volume_quadrature(space, w, tau),
        "base_ratio": base_ratio,
        "lift_ratio": lift_ratio,
        "lambda_lifted": lambda_euclidean(0, int(round(args.n + 2 * args.m))),
    }
    _emit_json(args, payload)
    return EXIT_INVARIANT if check.gap < -LIFT_GAP_TOL * abs(check.rhs) else EXIT_OK


def _expected_sign(m: float) -> int:
    if m == 0 or m == 1:
        return 0
    return 1 if m < 1 else -1


def cmd_f_table(args) -> int:
    try:
        ms = parse_real_list(args.m_list)
        ns = parse_int_range(args.n_list)
    except ValueError as exc:
        raise ArgumentError(f"f-table: {exc}") from exc
    if any(m < 0 for m in ms) or any(n < 3 for n in ns):
        raise ArgumentError("f-table: need m >= 0 and n >= 3")
    rows = []
    mismatch = False
    for n in ns:
        for m in ms:
            f = ratio_F(m, n)
            gap = f - 1
            sign = 0 if abs(gap) <= 1e-12 else (1 if gap > 0 else -1)
            expected = _expected_sign(m)
            mismatch |= sign != expected
            rows.append([m, n, f, sign, expected])
    if args.format == "json":
        _emit_json(args, {"rows": [dict(zip(["m", "n", "F", "sign", "expected_sign"], r)) for r in rows]})
    else:
        _emit_csv(args, ["m", "n", "F", "sign", "expected_sign"], rows)
    return EXIT_INVARIANT if mismatch else EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="weighted-yamabe", description="Weighted Yamabe constants, functionals and minimization.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(p, *, space=True, tau=True, grid=True, fmt="json"):
        p.add_argument("--m", type=_dimension, required=True, help="dimensional parameter (number or inf)")
        p.add_argument("--n", type=_dimension_n, required=True, help="manifold dimension (>= 3)")
        if tau:
            p.add_argument("--tau", type=_positive, default=None)
        if grid:
            p.add_argument("--nodes", type=int, default=512)
            p.add_argument("--rmax", type=_positive, default=50.0, help="flat truncation radius")
        if space:
            p.add_argument("--space", choices=["sphere", "euclidean"], default="sphere")
            p.add_argument("--scale", type=_positive, default=None, help="grid clustering parameter")
            p.add_argument("--input", default=None, help="CSV field (node, value) on the chosen grid")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output path (default stdout)")
        g = p.add_mutually_exclusive_group()
        g.add_argument("--json", dest="format", action="store_const", const="json")
        g.add_argument("--csv", dest="format", action="store_const", const="csv")
        p.set_defaults(format=fmt)

    p = sub.add_parser("constants", help="closed-form constants for (m, n)")
    common(p, space=False, tau=False, grid=False)
    p.set_defaults(handler=cmd_constants)

    p = sub.add_parser("bubble-check", help="bubble PDE residual, volume and quotient gaps")
    common(p, space=False)
    p.set_defaults(handler=cmd_bubble_check)

    p = sub.add_parser("quotient", help="quotient breakdown (and W with --tau) of a field")
    common(p)
    p.set_defaults(handler=cmd_quotient)

    for name, handler, text in (
        ("minimize", cmd_minimize, "descend the quotient (or W with --tau)"),
        ("nu-sweep", cmd_nu_sweep, "nu(tau) over a geometric tau grid"),
    ):
        p = sub.add_parser(name, help=text)
        common(p, fmt="json")
        p.add_argument("--max-iterations", type=int, default=400)
        p.add_argument("--init", choices=["constant", "bubble", "random"], default="constant")
        p.add_argument("--width", type=_positive, default=1.0, help="concentration of the bubble seed")
        p.add_argument("--time-limit", type=_positive, default=None)
        if name == "minimize":
            p.add_argument("--field-out", default=None, help="write the best field as CSV")
        else:
            p.add_argument("--tau-max", type=_positive, default=1.0)
            p.add_argument("--tau-min", type=_positive, default=0.01)
            p.add_argument("--points", type=int, default=7)
            p.add_argument("--cutoff", type=_positive, default=1.0, help="cutoff radius of the bubble probe")
        p.set_defaults(handler=handler)

    p = sub.add_parser("lift-check", help="lifted quotient against its lower bound")
    common(p)
    p.set_defaults(handler=cmd_lift_check)

    p = sub.add_parser("f-table", help="table of F(m, n) with its sign")
    p.add_argument("--m", dest="m_list", required=True, help="e.g. 0,0.25,...,3")
    p.add_argument("--n", dest="n_list", required=True, help="e.g. 3..10")
    p.add_argument("--out", default=None)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--json", dest="format", action="store_const", const="json")
    g.add_argument("--csv", dest="format", action="store_const", const="csv")
    p.set_defaults(format="csv", handler=cmd_f_table)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except (MomentMismatch, AssertionError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    raise SystemExit(main())
