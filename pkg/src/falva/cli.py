"""Command line front end: ``falva derive|invariance|verify|sweep|action``.

Exit codes: 0 success, 1 a verification failed, 2 bad input, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import io
import math
import sys
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import (
    condition17_residual,
    derive,
    invariance_residual,
    invariance_residual_form2,
)
from .errors import (
    ConfigError,
    DomainError,
    FalvaError,
    MaxStepsExceeded,
    NonlinearInSymbol,
    ParseError,
    SchemaError,
    SingularLeadingCoefficient,
    StepUnderflow,
)
from .numerics import (
    action_value,
    conservation_drift,
    integrate,
    to_explicit_system,
)
from .problemio import (
    ExprContext,
    ProblemBundle,
    derived_report,
    derived_to_dict,
    emit_trajectory_csv,
    load_problem,
    parse_expr,
    read_trajectory_csv,
)
from .symexpr import sample_values, state_symbols, to_infix

OK, FAILED, INPUT_ERROR, NUMERIC_ERROR = 0, 1, 2, 3

DEFAULT_VERIFY_TOL = 1e-5
DEFAULT_INVARIANCE_TOL = 1e-8
DEFAULT_SAMPLES = 200

_NUMERIC_ERRORS = (StepUnderflow, SingularLeadingCoefficient, MaxStepsExceeded, DomainError, ConfigError)


@dataclass
class CommandOutcome:
    exit_code: int
    report: str
    artifacts: list[str] = field(default_factory=list)


class _InputError(Exception):
    pass


def _load(path: str | Path, alpha: float | None = None) -> ProblemBundle:
    try:
        bundle = load_problem(path)
    except OSError as exc:
        raise _InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    except (ParseError, SchemaError, ValueError) as exc:
        raise _InputError(f"{path}: {exc}") from None
    if alpha is not None:
        if not 0.0 < alpha <= 1.0:
            raise _InputError(f"alpha override {alpha} out of (0,1]")
        bundle = bundle._replace(problem=bundle.problem.with_alpha(alpha))
    return bundle


def _fail(code: int, message: str) -> CommandOutcome:
    return CommandOutcome(code, f"error: {message}")


def cmd_derive(problem_path: str | Path, json_out: str | Path | None = None,
               alpha: float | None = None) -> CommandOutcome:
    try:
        P, gen, _, _ = _load(problem_path, alpha)
    except _InputError as exc:
        return _fail(INPUT_ERROR, str(exc))
    D = derive(P, gen)
    lines = [derived_report(D), "", f"bound at alpha={P.alpha:g}, t={P.t:g} and parameter values:"]
    comp = (lambda c: f"[{c}]") if P.n > 1 else (lambda c: "")
    for c, e in enumerate(D.F):
        lines.append(f"F{comp(c)} = {to_infix(P.bind(e))}")
    for c, e in enumerate(D.el_residual):
        lines.append(f"EL{comp(c)} = {to_infix(P.bind(e))} = 0")
    artifacts = []
    if json_out is not None:
        import json

        Path(json_out).write_text(json.dumps(derived_to_dict(D), indent=2) + "\n", encoding="utf-8")
        artifacts.append(str(json_out))
    return CommandOutcome(OK, "\n".join(lines), artifacts)


def _max_abs(values: list[list[float] | None], col: int) -> float:
    vals = [abs(row[col]) for row in values if row is not None]
    return max(vals) if vals else math.nan


def cmd_invariance(problem_path: str | Path, samples: int = DEFAULT_SAMPLES,
                   tol: float = DEFAULT_INVARIANCE_TOL, alpha: float | None = None) -> CommandOutcome:
    try:
        P, gen, _, cfg = _load(problem_path, alpha)
        if gen is None:
            raise _InputError("problem has no generators")
        if samples < 1:
            raise _InputError("--samples must be positive")
    except _InputError as exc:
        return _fail(INPUT_ERROR, str(exc))
    try:
        form1 = invariance_residual(P, gen)
        form2 = invariance_residual_form2(P, gen)
        c17 = condition17_residual(P, gen)
    except FalvaError as exc:
        return _fail(INPUT_ERROR, str(exc))
    bound = [P.bind(e) for e in (form1, form2, c17)]
    try:
        rows = sample_values(bound, P.sampler(n_points=samples, epsilon=cfg.cutoff(P)))
    except _NUMERIC_ERRORS as exc:
        return _fail(NUMERIC_ERROR, f"sampling failed: {exc}")
    r1, r2, r17 = (_max_abs(rows, k) for k in range(3))
    invariant = r2 <= tol
    lines = [
        f"invariance residual (fractional form) = {to_infix(form1)}",
        f"invariance residual (force form)      = {to_infix(form2)}",
        f"condition G.Omega + L tau             = {to_infix(c17)}",
        f"samples: {sum(r is not None for r in rows)} of {len(rows)} accepted",
        f"max |fractional-form residual| = {r1:.3e}",
        f"max |force-form residual|      = {r2:.3e}  (tol {tol:g})",
        f"max |G.Omega + L tau|          = {r17:.3e}  "
        f"({'satisfied' if r17 <= tol else 'not satisfied'}, informational)",
        "invariant" if invariant else "NOT invariant",
    ]
    return CommandOutcome(OK if invariant else FAILED, "\n".join(lines))


def _run(bundle: ProblemBundle, epsilon: float | None, charge_expr: str | None):
    P, gen, initial, cfg = bundle
    if epsilon is not None:
        cfg = replace(cfg, epsilon=epsilon)
        cfg.cutoff(P)
    D = derive(P, gen)
    override = None
    if charge_expr is not None:
        override = parse_expr(charge_expr, ExprContext(n=P.n, max_order=2 * P.m - 1, params=frozenset(P.params)))
    sys_ = to_explicit_system(P, D, gen)
    traj = integrate(sys_, initial, cfg=cfg, charge_expr=override)
    return D, traj


def cmd_verify(problem_path: str | Path, csv_out: str | Path | None = None, epsilon: float | None = None,
               tol: float = DEFAULT_VERIFY_TOL, charge_expr: str | None = None,
               alpha: float | None = None) -> CommandOutcome:
    try:
        bundle = _load(problem_path, alpha)
        if bundle.generators is None:
            raise _InputError("problem has no generators")
        if bundle.initial is None:
            raise _InputError("problem has no initial conditions")
    except _InputError as exc:
        return _fail(INPUT_ERROR, str(exc))
    P = bundle.problem
    try:
        D, traj = _run(bundle, epsilon, charge_expr)
    except (ParseError, NonlinearInSymbol, ValueError) as exc:
        return _fail(INPUT_ERROR, str(exc))
    except _NUMERIC_ERRORS as exc:
        return _fail(NUMERIC_ERROR, str(exc))
    abs_drift, rel_drift = conservation_drift(traj)
    artifacts = []
    if csv_out is not None:
        emit_trajectory_csv(traj, csv_out)
        artifacts.append(str(csv_out))
    comp = (lambda c: f"[{c}]") if P.n > 1 else (lambda c: "")
    lines = [f"F{comp(c)} = {to_infix(P.bind(e))}" for c, e in enumerate(D.F)]
    charge_text = charge_expr if charge_expr is not None else to_infix(D.charge_symbolic)
    lines += [
        f"C = {charge_text} - Lambda",
        f"span [{traj.theta[0]:g}, {traj.theta[-1]:.17g}], {len(traj)} samples",
        f"C_0 = {traj.charge[0]:.17g}",
        f"abs_drift = {abs_drift:.3e}",
        f"rel_drift = {rel_drift:.3e}  (tol {tol:g})",
        f"max el_check = {float(np.max(traj.el_check)):.3e}",
        f"max |DBR residual| = {float(np.max(traj.dbr)):.3e}",
    ]
    ok = rel_drift <= tol
    lines.append("conserved" if ok else "NOT conserved")
    return CommandOutcome(OK if ok else FAILED, "\n".join(lines), artifacts)


def parse_alpha_range(text: str) -> list[float]:
    """``lo:hi:step`` -> [lo, lo+step, ..., <= hi]; every value must lie in (0, 1]."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"alpha range must look like lo:hi:step, got {text!r}")
    lo, hi, step = (float(p) for p in parts)
    if not step > 0 or hi < lo:
        raise ValueError(f"bad alpha range {text!r}")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    values = [round(lo + k * step, 12) for k in range(count)]
    for a in values:
        if not 0.0 < a <= 1.0:
            raise ValueError(f"alpha {a} out of (0,1]")
    return values


def _sweep_one(args: tuple[str, float, float | None]) -> tuple[float, float, float, float]:
    path, alpha, epsilon = args
    bundle = _load(path, alpha)
    _, traj = _run(bundle, epsilon, None)
    _, rel = conservation_drift(traj)
    action = action_value(bundle.problem, traj)
    return alpha, rel, action.value, float(traj.charge[0])


def cmd_sweep(problem_path: str | Path, alpha_range: str, csv_out: str | Path | None = None,
              tol: float = DEFAULT_VERIFY_TOL, epsilon: float | None = None,
              jobs: int | None = None) -> CommandOutcome:
    try:
        alphas = parse_alpha_range(alpha_range)
        bundle = _load(problem_path)
        if bundle.generators is None or bundle.initial is None:
            raise _InputError("sweep needs generators and initial conditions")
    except (ValueError, _InputError) as exc:
        return _fail(INPUT_ERROR, str(exc))
    tasks = [(str(problem_path), a, epsilon) for a in alphas]
    try:
        if jobs == 1 or len(tasks) == 1:
            rows = [_sweep_one(task) for task in tasks]
        else:
            with ProcessPoolExecutor(max_workers=jobs or min(len(tasks), 8)) as pool:
                rows = list(pool.map(_sweep_one, tasks))
    except (NonlinearInSymbol, ValueError, ParseError) as exc:
        return _fail(INPUT_ERROR, str(exc))
    except _NUMERIC_ERRORS as exc:
        return _fail(NUMERIC_ERROR, str(exc))

    buf = io.StringIO()
    buf.write("alpha,rel_drift,action_value,C_0\n")
    for row in rows:
        buf.write(",".join("%.17g" % v for v in row) + "\n")
    artifacts = []
    if csv_out is not None:
        Path(csv_out).write_text(buf.getvalue(), encoding="utf-8")
        artifacts.append(str(csv_out))
    ok = all(r[1] <= tol for r in rows)
    lines = [f"{'alpha':>8} {'rel_drift':>12} {'action':>20} {'C_0':>20}"]
    lines += [f"{a:8.4g} {d:12.3e} {s:20.12g} {c:20.12g}" for a, d, s, c in rows]
    lines.append("all conserved" if ok else "drift above tolerance for some alpha")
    return CommandOutcome(OK if ok else FAILED, "\n".join(lines), artifacts)


def cmd_action(problem_path: str | Path, trajectory: str | Path | None = None,
               alpha: float | None = None) -> CommandOutcome:
    try:
        bundle = _load(problem_path, alpha)
    except _InputError as exc:
        return _fail(INPUT_ERROR, str(exc))
    P = bundle.problem
    try:
        if trajectory is not None:
            try:
                traj = read_trajectory_csv(trajectory)
            except (OSError, SchemaError, ValueError) as exc:
                return _fail(INPUT_ERROR, f"cannot read trajectory: {exc}")
            if traj.states.shape[1] != P.n * 2 * P.m:
                return _fail(INPUT_ERROR, "trajectory columns do not match the problem")
            result = action_value(P, traj)
            source = f"trajectory {trajectory}"
        elif not state_symbols(P.L):
            result = action_value(P, None)
            source = "state-independent Lagrangian"
        elif bundle.initial is not None:
            D = derive(P, bundle.generators)
            traj = integrate(to_explicit_system(P, D, bundle.generators), bundle.initial, cfg=bundle.integration)
            result = action_value(P, traj)
            source = f"integrated trajectory on [{traj.theta[0]:g}, {traj.theta[-1]:g}]"
        else:
            return _fail(INPUT_ERROR, "no trajectory given and no initial conditions to compute one")
    except (NonlinearInSymbol, ValueError) as exc:
        return _fail(INPUT_ERROR, str(exc))
    except _NUMERIC_ERRORS as exc:
        return _fail(NUMERIC_ERROR, str(exc))
    lines = [
        f"source: {source}",
        f"I = {result.value:.15g}",
        f"estimated error = {result.estimated_error:.3e}",
        f"nodes = {result.nodes_used}",
    ]
    return CommandOutcome(OK, "\n".join(lines))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="falva", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("derive", help="print psi^j, F, EL and DBR residuals, G and the charge")
    p.add_argument("problem")
    p.add_argument("--json", dest="json_out")
    p.add_argument("--alpha", type=float)

    p = sub.add_parser("invariance", help="sample the invariance residuals")
    p.add_argument("problem")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--tol", type=float, default=DEFAULT_INVARIANCE_TOL)
    p.add_argument("--alpha", type=float)

    p = sub.add_parser("verify", help="integrate and measure the drift of the charge")
    p.add_argument("problem")
    p.add_argument("--csv", dest="csv_out")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--tol", type=float, default=DEFAULT_VERIFY_TOL)
    p.add_argument("--charge-expr", dest="charge_expr")
    p.add_argument("--alpha", type=float)

    p = sub.add_parser("sweep", help="verify over a range of alpha")
    p.add_argument("problem")
    p.add_argument("--alpha", dest="alpha_range", required=True, metavar="LO:HI:STEP")
    p.add_argument("--csv", dest="csv_out")
    p.add_argument("--tol", type=float, default=DEFAULT_VERIFY_TOL)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--jobs", type=int)

    p = sub.add_parser("action", help="evaluate the weighted action integral")
    p.add_argument("problem")
    p.add_argument("--trajectory")
    p.add_argument("--alpha", type=float)
    return parser


def run(argv: Sequence[str] | None = None) -> CommandOutcome:
    args = build_parser().parse_args(argv)
    if args.command == "derive":
        return cmd_derive(args.problem, args.json_out, alpha=args.alpha)
    if args.command == "invariance":
        return cmd_invariance(args.problem, args.samples, args.tol, alpha=args.alpha)
    if args.command == "verify":
        return cmd_verify(args.problem, args.csv_out, args.epsilon, args.tol, args.charge_expr, alpha=args.alpha)
    if args.command == "sweep":
        return cmd_sweep(args.problem, args.alpha_range, args.csv_out, args.tol, args.epsilon, args.jobs)
    return cmd_action(args.problem, args.trajectory, alpha=args.alpha)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        outcome = run(argv)
    except SystemExit as exc:  # argparse usage errors
        return INPUT_ERROR if exc.code not in (0, None) else OK
    stream = sys.stdout if outcome.exit_code in (OK, FAILED) else sys.stderr
    print(outcome.report, file=stream)
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
