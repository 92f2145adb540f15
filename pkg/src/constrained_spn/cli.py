"""Command-line front end: validate, train, query, verify, compile, sample.

Exit codes: 0 success, 1 check failed (validate/verify), 2 input error,
3 training stopped at max-iters, 4 training hit a numerical failure.
"""

from __future__ import annotations

import argparse
import math
import re
import sys
from pathlib import Path

from . import circuit as C
from .constraints import ConstraintError, compile_constraints, residual_values
from .dataio import DataError, format_constraint, load_constraints, load_csv, load_model, save_csv, save_model
from .optimizer import CONVERGED, MAX_ITERS, TrainConfig, TrainError, fit
from .oracle import OracleError, check_constraint, enumerate_joint, sample_dataset

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_MAX_ITERS, EXIT_NUMERIC = 0, 1, 2, 3, 4


class InputError(Exception):
    pass


def format_probability(x: float) -> str:
    """Fixed notation with 12 significant digits."""
    if x == 0 or not math.isfinite(x):
        return f"{x:.12f}"
    digits = max(0, 11 - math.floor(math.log10(abs(x))))
    return f"{x:.{digits}f}"


def _read_model(path, strict=True):
    try:
        return load_model(path, strict=strict)
    except OSError as e:
        raise InputError(f"cannot read model {path}: {e.strerror or e}") from None
    except C.CircuitError as e:
        raise InputError(f"{path}: {e}") from None


def _read_constraints(path):
    try:
        return load_constraints(path)
    except OSError as e:
        raise InputError(f"cannot read constraints {path}: {e.strerror or e}") from None
    except DataError as e:
        raise InputError(f"{path}: {e}") from None


def _read_data(path):
    try:
        return load_csv(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise InputError(f"cannot read data {path}: {e.strerror or e}") from None
    except DataError as e:
        raise InputError(f"{path}: {e}") from None


def _compile(constraints, model):
    try:
        return compile_constraints(constraints, model)
    except ConstraintError as e:
        raise InputError(f"constraints: {e}") from None


# -- commands ------------------------------------------------------------------


def cmd_validate(args) -> int:
    model = _read_model(args.model, strict=False)
    report = model.validate()
    print(report)
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_train(args) -> int:
    model = _read_model(args.model)
    data = _read_data(args.data)
    if set(data.variables) != set(model.names):
        raise InputError(f"data variables {data.variables} do not match model variables {model.names}")
    system = None
    if args.constraints:
        constraints = _read_constraints(args.constraints)
        if args.mode == "mle":
            print("warning: --constraints ignored in mle mode", file=sys.stderr)
        else:
            system = _compile(constraints, model)
    elif args.mode != "mle":
        raise InputError(f"mode {args.mode} requires --constraints")

    lam = None
    if args.penalty is not None:
        try:
            lam = [float(x) for x in args.penalty.split(",") if x.strip()]
        except ValueError:
            raise InputError(f"bad --lambda value {args.penalty!r}") from None
        n = len(system) if system is not None else 0
        if system is not None and len(lam) not in (1, n):
            raise InputError(f"--lambda has {len(lam)} values for {n} residuals")
        if any(x < 0 for x in lam):
            raise InputError("--lambda values must be non-negative")

    try:
        config = TrainConfig(
            mode=args.mode,
            max_iters=args.max_iters,
            step_size=args.step,
            tol_grad=args.tol_grad,
            tol_residual=args.tol_residual,
            penalty_weights=lam if lam is not None and args.mode == "soft" else 1.0,
            multipliers=lam if lam is not None and args.mode == "hard" else None,
            mu=args.mu,
            rho=args.rho,
            max_inner_iters=args.max_inner_iters,
            seed=args.seed,
            init=args.init,
        )
    except TrainError as e:
        raise InputError(str(e)) from None

    trained, report = fit(model, data, system, config)
    save_model(trained, args.out)
    sys.stdout.write(report.to_text())
    if report.termination == CONVERGED:
        return EXIT_OK
    return EXIT_MAX_ITERS if report.termination == MAX_ITERS else EXIT_NUMERIC


_ASGN = r"\s*[A-Za-z_]\w*\s*=\s*[01]\s*(?:,\s*[A-Za-z_]\w*\s*=\s*[01]\s*)*"


def _parse_asgn(text: str) -> dict:
    out = {}
    for part in text.split(","):
        name, val = (x.strip() for x in part.split("="))
        if name in out:
            raise InputError(f"variable {name} assigned twice")
        out[name] = int(val)
    return out


def parse_query(expr: str):
    """Parse a query expression into ``(kind, target, rest)``.

    kinds: ``marginal`` (rest None), ``conditional`` (rest = evidence),
    ``do`` (rest = (variable, value, parents)).
    """
    m = re.fullmatch(rf"\s*P\(({_ASGN})\)\s*", expr)
    if m:
        return "marginal", _parse_asgn(m.group(1)), None
    m = re.fullmatch(rf"\s*P\(({_ASGN})\|\s*do\(\s*([A-Za-z_]\w*)\s*=\s*([01])\s*\)\s*;\s*parents\s*="
                     r"\s*((?:[A-Za-z_]\w*\s*(?:,\s*[A-Za-z_]\w*\s*)*)?)\)\s*", expr)
    if m:
        parents = [p.strip() for p in m.group(4).split(",") if p.strip()]
        return "do", _parse_asgn(m.group(1)), (m.group(2), int(m.group(3)), parents)
    m = re.fullmatch(rf"\s*P\(({_ASGN})\|({_ASGN})\)\s*", expr)
    if m:
        return "conditional", _parse_asgn(m.group(1)), _parse_asgn(m.group(2))
    raise InputError(f"cannot parse query {expr!r}")


def cmd_query(args) -> int:
    model = _read_model(args.model)
    kind, target, rest = parse_query(args.expr)
    try:
        if kind == "marginal":
            p = C.marginal(model, target)
        elif kind == "conditional":
            p = C.conditional(model, target, rest)
        else:
            var, val, parents = rest
            p = C.interventional(model, target, var, val, parents)
    except C.CircuitError as e:
        raise InputError(str(e)) from None
    print(format_probability(p))
    return EXIT_OK


def cmd_verify(args) -> int:
    model = _read_model(args.model)
    constraints = _read_constraints(args.constraints)
    if not constraints:
        print("0 constraints")
        return EXIT_OK
    system = _compile(constraints, model)  # also checks variable names
    table = enumerate_joint(model) if model.n_vars <= C.MAX_ENUM_VARS else None
    values = None if table is not None else residual_values(system, model)
    all_ok = True
    for i, c in enumerate(constraints):
        if table is not None:
            try:
                ok, worst = check_constraint(table, c, args.tol)
            except OracleError as e:
                raise InputError(str(e)) from None
        else:
            rows = [k for k, p in enumerate(system.provenance) if p.constraint_index == i]
            worst = float(max(abs(values[k]) for k in rows))
            ok = worst <= args.tol
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'}  {format_constraint(c)}  max_violation={worst:.6e}")
    print(f"{len(constraints)} constraints, {'all pass' if all_ok else 'some fail'} at tol={args.tol:g}")
    return EXIT_OK if all_ok else EXIT_FAIL


def cmd_compile(args) -> int:
    model = _read_model(args.model)
    system = _compile(_read_constraints(args.constraints), model)
    for k in range(len(system)):
        print(system.format_residual(k))
    return EXIT_OK


def cmd_sample(args) -> int:
    if args.n < 1:
        raise InputError("--n must be at least 1")
    model = _read_model(args.model)
    try:
        table = enumerate_joint(model)
    except OracleError as e:
        raise InputError(str(e)) from None
    data = sample_dataset(table, args.n, args.seed)
    Path(args.out).write_text(save_csv(data), encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cspn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check circuit structure")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("train", help="fit weights (mle, soft or hard constraints)")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--constraints")
    p.add_argument("--mode", choices=["mle", "soft", "hard"], required=True)
    p.add_argument("--lambda", dest="penalty", metavar="FLOAT[,FLOAT...]",
                   help="soft: penalty weights; hard: initial multipliers")
    p.add_argument("--max-iters", type=int, default=20000)
    p.add_argument("--max-inner-iters", type=int, default=5000)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--tol-grad", type=float, default=1e-8)
    p.add_argument("--tol-residual", type=float, default=1e-8)
    p.add_argument("--mu", type=float, default=10.0)
    p.add_argument("--rho", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=["uniform", "dirichlet"], default="uniform")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("query", help="marginal, conditional or interventional probability")
    p.add_argument("--model", required=True)
    p.add_argument("--expr", required=True)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("verify", help="check constraints on a model")
    p.add_argument("--model", required=True)
    p.add_argument("--constraints", required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compile", help="print the residual system")
    p.add_argument("--model", required=True)
    p.add_argument("--constraints", required=True)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("sample", help="draw a synthetic dataset from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
