"""Problem files, the expression grammar, and trajectory/derivation output.

Expression grammar (``^`` binds tightest and is right-associative; unary
minus binds looser than ``^``, so ``-q0^2`` is ``-(q0^2)``)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("-" | "+") unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | NAME | NAME "(" expr ")" | "(" expr ")"

Names: ``theta``, ``t``, ``alpha``, state symbols ``q<i>_<k>`` (``q<i>`` is
``q<i>_0``), declared parameters, and the functions sin, cos, exp, log, sqrt.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, NamedTuple

import numpy as np

from .core import (
    DerivedSystem,
    ForceRateGauge,
    GeneratorSet,
    LagrangianProblem,
    RateGauge,
    SymbolicGauge,
)
from .errors import OrderExceeded, ParseError, SchemaError, UnknownIdentifier
from .numerics import IntegratorConfig, RK4Fixed, RK45Adaptive, Trajectory
from .symexpr import (
    ALPHA,
    FUNCTIONS,
    THETA,
    Apply,
    Constant,
    Expr,
    IntPow,
    Negate,
    Product,
    Quotient,
    RealPow,
    Sum,
    T,
    param,
    q,
    to_infix,
)
from .symexpr.nodes import is_reserved_name, match_state_name

# --- tokenizer ------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r\n]+)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # "num", "name", "op", "eof"
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        mt = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if mt is None:
            raise ParseError("unexpected character", line, col, text[pos])
        kind = mt.lastgroup
        chunk = mt.group()
        if kind == "ws":
            for k, ch in enumerate(chunk):
                if ch == "\n":
                    line += 1
                    line_start = pos + k + 1
        else:
            toks.append(_Tok(kind, chunk, line, col))
        pos = mt.end()
    toks.append(_Tok("eof", "", line, len(text) - line_start + 1))
    return toks


# --- parser ---------------------------------------------------------------


@dataclass(frozen=True)
class ExprContext:
    """What a parsed expression may refer to; ``None`` bounds mean unchecked."""

    n: int | None = None
    max_order: int | None = None
    params: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", frozenset(self.params))


class _Parser:
    def __init__(self, text: str, ctx: ExprContext):
        self.toks = _tokenize(text)
        self.i = 0
        self.ctx = ctx

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect_operand(self, after: _Tok | None) -> None:
        if self.tok.kind == "eof" and after is not None:
            raise ParseError(f"expected an operand after {after.text!r}", after.line, after.column, after.text)

    def error(self, message: str, tok: _Tok | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, tok.line, tok.column, tok.text)

    def parse(self) -> Expr:
        if self.tok.kind == "eof":
            raise self.error("empty expression")
        e = self.expr()
        if self.tok.kind != "eof":
            raise self.error("unexpected token")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance()
            self.expect_operand(op)
            rhs = self.term()
            e = Sum((e, rhs)) if op.text == "+" else Sum((e, Negate(rhs)))
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance()
            self.expect_operand(op)
            rhs = self.unary()
            e = Product((e, rhs)) if op.text == "*" else Quotient(e, rhs)
        return e

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance()
            self.expect_operand(op)
            inner = self.unary()
            return Negate(inner) if op.text == "-" else inner
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            op = self.advance()
            self.expect_operand(op)
            exponent = self.unary()
            k = _integer_literal(exponent)
            if k is not None:
                return IntPow(base, k)
            return RealPow(base, exponent)
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Constant(float(tok.text))
        if tok.kind == "name":
            self.advance()
            if self.tok.kind == "op" and self.tok.text == "(":
                if tok.text not in FUNCTIONS:
                    raise UnknownIdentifier(f"unknown function {tok.text!r}", tok.line, tok.column, tok.text)
                open_tok = self.advance()
                self.expect_operand(open_tok)
                arg = self.expr()
                if not (self.tok.kind == "op" and self.tok.text == ")"):
                    raise self.error("expected ')'")
                self.advance()
                return Apply(tok.text, arg)
            return self.name(tok)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            self.expect_operand(tok)
            e = self.expr()
            if not (self.tok.kind == "op" and self.tok.text == ")"):
                raise self.error("expected ')'")
            self.advance()
            return e
        if tok.kind == "eof":
            raise self.error("unexpected end of input")
        raise self.error("expected an operand")

    def name(self, tok: _Tok) -> Expr:
        text = tok.text
        if text == "theta":
            return THETA
        if text == "t":
            return T
        if text == "alpha":
            return ALPHA
        if text in FUNCTIONS:
            raise ParseError(f"function {text!r} needs an argument", tok.line, tok.column, text)
        st = match_state_name(text)
        if st is not None:
            comp, order = st
            if self.ctx.n is not None and comp >= self.ctx.n:
                raise UnknownIdentifier(f"component {comp} out of range for n={self.ctx.n}",
                                        tok.line, tok.column, text)
            if self.ctx.max_order is not None and order > self.ctx.max_order:
                raise OrderExceeded(f"derivative order {order} exceeds {self.ctx.max_order}",
                                    tok.line, tok.column, text)
            return q(comp, order)
        if text in self.ctx.params:
            return param(text)
        raise UnknownIdentifier(f"unknown identifier {text!r}", tok.line, tok.column, text)


def _integer_literal(e: Expr) -> int | None:
    sign = 1
    while isinstance(e, Negate):
        sign, e = -sign, e.arg
    if isinstance(e, Constant) and e.value == int(e.value) and abs(e.value) < 2**31:
        return sign * int(e.value)
    return None


def parse_expr(text: str, ctx: ExprContext | None = None) -> Expr:
    """Parse infix text into an expression tree (see module docstring)."""
    return _Parser(text, ctx or ExprContext()).parse()


# --- problem documents ----------------------------------------------------


class ProblemBundle(NamedTuple):
    problem: LagrangianProblem
    generators: GeneratorSet | None
    initial: np.ndarray | None
    integration: IntegratorConfig


def _number(doc: dict, key: str, path: str | None = None) -> float:
    path = path or key
    if key not in doc:
        raise SchemaError(path)
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise SchemaError(path, "must be a finite number")
    return float(val)


def _integer(doc: dict, key: str, minimum: int = 1) -> int:
    if key not in doc:
        raise SchemaError(key)
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, int):
        raise SchemaError(key, "must be an integer")
    if val < minimum:
        raise SchemaError(key, f"must be >= {minimum}")
    return val


def _text(doc: dict, key: str, path: str) -> str:
    if key not in doc:
        raise SchemaError(path)
    if not isinstance(doc[key], str):
        raise SchemaError(path, "must be a string")
    return doc[key]


def _parse_field(text: str, ctx: ExprContext, path: str) -> Expr:
    try:
        return parse_expr(text, ctx)
    except ParseError as exc:
        raise type(exc)(f"{path}: {exc.message}", exc.line, exc.column, exc.token) from None


_INTEGRATION_KEYS = {"method", "h", "rel_tol", "abs_tol", "h_init", "h_min", "epsilon", "max_steps"}


def _integration(block: Any, P: LagrangianProblem) -> IntegratorConfig:
    if block is None:
        return IntegratorConfig()
    if not isinstance(block, dict):
        raise SchemaError("integration", "must be an object")
    unknown = set(block) - _INTEGRATION_KEYS
    if unknown:
        raise SchemaError(f"integration.{sorted(unknown)[0]}", "unknown key")
    kind = block.get("method", "rk45")
    if kind == "rk4":
        method: RK4Fixed | RK45Adaptive = RK4Fixed(h=_number(block, "h", "integration.h") if "h" in block else 1e-3)
    elif kind == "rk45":
        kw = {k: _number(block, k, f"integration.{k}") for k in ("rel_tol", "abs_tol", "h_init", "h_min") if k in block}
        try:
            method = RK45Adaptive(**kw)
        except ValueError as exc:
            raise SchemaError("integration", str(exc)) from None
    else:
        raise SchemaError("integration.method", "must be 'rk4' or 'rk45'")
    eps = _number(block, "epsilon", "integration.epsilon") if "epsilon" in block else None
    if eps is not None and not 0 < eps < P.t - P.a:
        raise SchemaError("integration.epsilon", "must lie in (0, t - a)")
    max_steps = block.get("max_steps", 1_000_000)
    if isinstance(max_steps, bool) or not isinstance(max_steps, int) or max_steps < 1:
        raise SchemaError("integration.max_steps", "must be a positive integer")
    try:
        return IntegratorConfig(method=method, epsilon=eps, max_steps=max_steps)
    except ValueError as exc:
        raise SchemaError("integration", str(exc)) from None


def _generators(block: Any, P: LagrangianProblem, params: frozenset[str]) -> GeneratorSet:
    if not isinstance(block, dict):
        raise SchemaError("generators", "must be an object")
    point_ctx = ExprContext(n=P.n, max_order=0, params=params)
    tau = _parse_field(_text(block, "tau", "generators.tau"), point_ctx, "generators.tau")
    xi_raw = block.get("xi")
    if not isinstance(xi_raw, list) or len(xi_raw) != P.n:
        raise SchemaError("generators.xi", f"must be a list of {P.n} expressions")
    xi = []
    for k, text in enumerate(xi_raw):
        if not isinstance(text, str):
            raise SchemaError(f"generators.xi[{k}]", "must be a string")
        xi.append(_parse_field(text, point_ctx, f"generators.xi[{k}]"))
    gauge_doc = block.get("gauge", {"type": "symbolic", "expr": "0"})
    if not isinstance(gauge_doc, dict):
        raise SchemaError("generators.gauge", "must be an object")
    kind = gauge_doc.get("type")
    gauge_ctx = ExprContext(n=P.n, max_order=2 * P.m - 1, params=params)
    if kind == "symbolic":
        expr = _parse_field(_text(gauge_doc, "expr", "generators.gauge.expr"), gauge_ctx, "generators.gauge.expr")
        gauge: SymbolicGauge | RateGauge | ForceRateGauge = SymbolicGauge(expr)
    elif kind == "rate":
        expr = _parse_field(_text(gauge_doc, "expr", "generators.gauge.expr"), gauge_ctx, "generators.gauge.expr")
        gauge = RateGauge(expr)
    elif kind == "force_rate":
        if "expr" in gauge_doc:
            raise SchemaError("generators.gauge.expr", "not allowed for force_rate")
        gauge = ForceRateGauge()
    else:
        raise SchemaError("generators.gauge.type", "must be 'symbolic', 'rate' or 'force_rate'")
    return GeneratorSet(tau, tuple(xi), gauge)


def _initial(raw: Any, P: LagrangianProblem) -> np.ndarray:
    width = 2 * P.m
    if not isinstance(raw, list) or len(raw) != P.n:
        raise SchemaError("initial", f"must hold {P.n} rows of {width} numbers")
    rows = []
    for k, row in enumerate(raw):
        if not isinstance(row, list) or len(row) != width:
            raise SchemaError(f"initial[{k}]", f"must hold {width} numbers")
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise SchemaError(f"initial[{k}][{j}]", "must be a finite number")
        rows.append([float(v) for v in row])
    return np.array(rows)


def problem_from_dict(doc: Any) -> ProblemBundle:
    """Validate a decoded problem document."""
    if not isinstance(doc, dict):
        raise SchemaError("$", "document must be an object")
    m = _integer(doc, "m")
    n = _integer(doc, "n")
    alpha = _number(doc, "alpha")
    if not 0.0 < alpha <= 1.0:
        raise SchemaError("alpha", "out of (0,1]")
    a = _number(doc, "a")
    t = _number(doc, "t")
    if not t > a:
        raise SchemaError("t", "must exceed a")

    params_doc = doc.get("params", {})
    if not isinstance(params_doc, dict):
        raise SchemaError("params", "must be an object")
    params: dict[str, float] = {}
    for name in params_doc:
        if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", name) or is_reserved_name(name):
            raise SchemaError(f"params.{name}", "invalid or reserved name")
        params[name] = _number(params_doc, name, f"params.{name}")
    names = frozenset(params)

    L = _parse_field(_text(doc, "lagrangian", "lagrangian"), ExprContext(n=n, max_order=m, params=names),
                     "lagrangian")
    P = LagrangianProblem(m=m, n=n, alpha=alpha, a=a, t=t, L=L, params=params)
    gen = _generators(doc["generators"], P, names) if doc.get("generators") is not None else None
    initial = _initial(doc["initial"], P) if doc.get("initial") is not None else None
    cfg = _integration(doc.get("integration"), P)
    return ProblemBundle(P, gen, initial, cfg)


def parse_problem(source: str) -> ProblemBundle:
    """Parse a JSON problem document from text."""
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    return problem_from_dict(doc)


def load_problem(path: str | Path) -> ProblemBundle:
    return parse_problem(Path(path).read_text(encoding="utf-8"))


def problem_to_dict(P: LagrangianProblem, gen: GeneratorSet | None = None,
                    initial: np.ndarray | None = None) -> dict:
    doc: dict[str, Any] = {
        "m": P.m, "n": P.n, "alpha": P.alpha, "a": P.a, "t": P.t,
        "lagrangian": to_infix(P.L),
        "params": dict(P.params),
    }
    if gen is not None:
        g = gen.gauge
        if isinstance(g, SymbolicGauge):
            gauge = {"type": "symbolic", "expr": to_infix(g.expr)}
        elif isinstance(g, RateGauge):
            gauge = {"type": "rate", "expr": to_infix(g.rate)}
        else:
            gauge = {"type": "force_rate"}
        doc["generators"] = {"tau": to_infix(gen.tau), "xi": [to_infix(x) for x in gen.xi], "gauge": gauge}
    if initial is not None:
        doc["initial"] = np.asarray(initial, dtype=float).reshape(P.n, 2 * P.m).tolist()
    return doc


# --- output ---------------------------------------------------------------


def _fmt(x: float) -> str:
    return "%.17g" % x


def _open_sink(sink: str | Path | IO[str]):
    if isinstance(sink, (str, Path)):
        return open(sink, "w", encoding="utf-8", newline=""), True
    return sink, False


def trajectory_header(labels: Iterable[str]) -> list[str]:
    return ["theta", *labels, "lambda", "charge", "el_check"]


def emit_trajectory_csv(traj: Trajectory, sink: str | Path | IO[str]) -> None:
    """Write ``theta,q<i>_<k>...,lambda,charge,el_check`` rows, 17 significant digits."""
    fh, owned = _open_sink(sink)
    try:
        fh.write(",".join(trajectory_header(traj.labels)) + "\n")
        for k in range(len(traj)):
            row = [traj.theta[k], *traj.states[k], traj.lam[k], traj.charge[k], traj.el_check[k]]
            fh.write(",".join(_fmt(float(v)) for v in row) + "\n")
    finally:
        if owned:
            fh.close()


def read_trajectory_csv(source: str | Path | IO[str]) -> Trajectory:
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("trajectory", "empty file") from None
    if header[:1] != ["theta"] or header[-3:] != ["lambda", "charge", "el_check"]:
        raise SchemaError("trajectory.header", "unexpected columns")
    labels = header[1:-3]
    rows = [[float(v) for v in r] for r in reader if r]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return Trajectory(
        theta=data[:, 0],
        states=data[:, 1:-3],
        lam=data[:, -3],
        charge=data[:, -2],
        el_check=data[:, -1],
        labels=labels,
    )


def derived_to_dict(D: DerivedSystem) -> dict[str, Any]:
    """Machine-readable dump: every derived object as canonical infix strings."""
    out: dict[str, Any] = {}
    for j, vec in enumerate(D.psi):
        out[f"psi_{j}"] = [to_infix(e) for e in vec]
    out["F"] = [to_infix(e) for e in D.F]
    out["el_residual"] = [to_infix(e) for e in D.el_residual]
    out["G"] = [to_infix(e) for e in D.G]
    out["dbr_residual"] = to_infix(D.dbr_residual)
    if D.charge_symbolic is not None:
        out["charge"] = to_infix(D.charge_symbolic)
        out["gauge"] = _gauge_text(D.gauge_mode)
    return out


def _gauge_text(g) -> str:
    if isinstance(g, SymbolicGauge):
        return f"symbolic: Lambda = {to_infix(g.expr)}"
    if isinstance(g, RateGauge):
        return f"rate: dLambda/dtheta = {to_infix(g.rate)}"
    return "force_rate: dLambda/dtheta = F . q', Lambda(a) = 0"


def derived_report(D: DerivedSystem) -> str:
    """Human-readable listing of the derived objects."""
    P = D.problem
    lines = [
        f"problem: m={P.m}, n={P.n}, alpha={P.alpha:g}, a={P.a:g}, t={P.t:g}",
        f"L = {to_infix(P.L)}",
    ]
    comp = (lambda c: f"[{c}]") if P.n > 1 else (lambda c: "")
    for j, vec in enumerate(D.psi):
        for c, e in enumerate(vec):
            lines.append(f"psi_{j}{comp(c)} = {to_infix(e)}")
    for c, e in enumerate(D.F):
        lines.append(f"F{comp(c)} = {to_infix(e)}")
    for c, e in enumerate(D.el_residual):
        lines.append(f"EL{comp(c)} = {to_infix(e)} = 0")
    for c, e in enumerate(D.G):
        lines.append(f"G{comp(c)} = {to_infix(e)}")
    lines.append(f"DBR = {to_infix(D.dbr_residual)}")
    if D.charge_symbolic is not None:
        lines.append(f"C = {to_infix(D.charge_symbolic)} - Lambda")
        lines.append(f"gauge: {_gauge_text(D.gauge_mode)}")
    return "\n".join(lines)
