"""Numeric evaluation: a direct tree walker and a compiler to Python closures."""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping, Sequence

from ..errors import DomainError, UnboundSymbol, UnsupportedFunction
from .nodes import (
    Apply,
    Constant,
    Expr,
    IntPow,
    Negate,
    Product,
    Quotient,
    RealPow,
    Sum,
    Symbol,
    SymbolId,
)


def _log(x: float) -> float:
    if x <= 0:
        raise DomainError(f"log of non-positive value {x!r}")
    return math.log(x)


def _sqrt(x: float) -> float:
    if x < 0:
        raise DomainError(f"sqrt of negative value {x!r}")
    return math.sqrt(x)


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError as exc:
        raise DomainError(f"exp overflow at {x!r}") from exc


def _div(a: float, b: float) -> float:
    if b == 0:
        raise DomainError("division by zero")
    return a / b


def _ipow(b: float, k: int) -> float:
    if k < 0 and b == 0:
        raise DomainError("zero raised to a negative power")
    try:
        return b**k
    except OverflowError as exc:
        raise DomainError("overflow in integer power") from exc


def _rpow(b: float, e: float) -> float:
    if b < 0:
        raise DomainError(f"real power of negative base {b!r}")
    if b == 0 and e < 0:
        raise DomainError("zero raised to a negative power")
    try:
        return b**e
    except OverflowError as exc:
        raise DomainError("overflow in real power") from exc


_FUNCS: dict[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": _exp,
    "log": _log,
    "sqrt": _sqrt,
}


def eval_expr(e: Expr, env: Mapping[SymbolId, float]) -> float:
    """Evaluate ``e`` with every symbol bound by ``env``."""
    if isinstance(e, Constant):
        return e.value
    if isinstance(e, Symbol):
        try:
            return float(env[e.id])
        except KeyError:
            raise UnboundSymbol(str(e.id)) from None
    if isinstance(e, Sum):
        return math.fsum(eval_expr(a, env) for a in e.args)
    if isinstance(e, Product):
        out = 1.0
        for a in e.args:
            out *= eval_expr(a, env)
        return out
    if isinstance(e, Negate):
        return -eval_expr(e.arg, env)
    if isinstance(e, Quotient):
        return _div(eval_expr(e.num, env), eval_expr(e.den, env))
    if isinstance(e, IntPow):
        return _ipow(eval_expr(e.base, env), e.exponent)
    if isinstance(e, RealPow):
        return _rpow(eval_expr(e.base, env), eval_expr(e.exponent, env))
    if isinstance(e, Apply):
        fn = _FUNCS.get(e.function)
        if fn is None:
            raise UnsupportedFunction(e.function)
        return fn(eval_expr(e.arg, env))
    raise TypeError(type(e).__name__)


def _codegen(e: Expr, names: Mapping[SymbolId, str], consts: Mapping[SymbolId, float]) -> str:
    if isinstance(e, Constant):
        return repr(e.value)
    if isinstance(e, Symbol):
        if e.id in names:
            return names[e.id]
        if e.id in consts:
            return repr(float(consts[e.id]))
        raise UnboundSymbol(str(e.id))
    if isinstance(e, Sum):
        return "(" + " + ".join(_codegen(a, names, consts) for a in e.args) + ")" if e.args else "0.0"
    if isinstance(e, Product):
        return "(" + " * ".join(_codegen(a, names, consts) for a in e.args) + ")" if e.args else "1.0"
    if isinstance(e, Negate):
        return f"(-{_codegen(e.arg, names, consts)})"
    if isinstance(e, Quotient):
        return f"_div({_codegen(e.num, names, consts)}, {_codegen(e.den, names, consts)})"
    if isinstance(e, IntPow):
        return f"_ipow({_codegen(e.base, names, consts)}, {e.exponent})"
    if isinstance(e, RealPow):
        return f"_rpow({_codegen(e.base, names, consts)}, {_codegen(e.exponent, names, consts)})"
    if isinstance(e, Apply):
        if e.function not in _FUNCS:
            raise UnsupportedFunction(e.function)
        return f"_{e.function}({_codegen(e.arg, names, consts)})"
    raise TypeError(type(e).__name__)


def compile_exprs(
    exprs: Sequence[Expr],
    layout: Mapping[SymbolId, int],
    consts: Mapping[SymbolId, float] | None = None,
) -> Callable[[float, Sequence[float]], list[float]]:
    """Compile expressions into ``f(theta, y) -> [values]``.

    ``layout`` maps state (or any other) symbols to indices into ``y``;
    ``consts`` binds the remaining non-theta symbols to fixed numbers.
    Evaluation raises :class:`DomainError` on the same conditions as
    :func:`eval_expr`.
    """
    from .nodes import THETA_ID

    names = {sid: f"y[{idx}]" for sid, idx in layout.items()}
    names[THETA_ID] = "theta"
    body = ", ".join(_codegen(e, names, consts or {}) for e in exprs)
    src = f"def _f(theta, y):\n    return [{body}]\n"
    scope = {
        "_div": _div,
        "_ipow": _ipow,
        "_rpow": _rpow,
        "_sin": math.sin,
        "_cos": math.cos,
        "_exp": _exp,
        "_log": _log,
        "_sqrt": _sqrt,
    }
    exec(compile(src, "<falva-compiled>", "exec"), scope)
    raw = scope["_f"]

    def f(theta: float, y: Sequence[float]) -> list[float]:
        try:
            return raw(theta, y)
        except (ZeroDivisionError, ValueError, OverflowError) as exc:
            raise DomainError(str(exc)) from exc

    f.source = src  # type: ignore[attr-defined]
    return f
