"""Canonical infix printer; its output is accepted by :func:`falva.problemio.parse_expr`."""

from __future__ import annotations

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
)

# binding strength, loosest first
_SUM, _PRODUCT, _UNARY, _POWER, _ATOM = 1, 2, 3, 4, 5


def format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def _prec(e: Expr) -> int:
    if isinstance(e, Sum):
        return _SUM
    if isinstance(e, (Product, Quotient)):
        return _PRODUCT
    if isinstance(e, Negate):
        return _UNARY
    if isinstance(e, Constant):
        return _UNARY if e.value < 0 else _ATOM
    if isinstance(e, (IntPow, RealPow)):
        return _POWER
    return _ATOM


def _wrap(e: Expr, min_prec: int, unary_ok: bool = True) -> str:
    text = to_infix(e)
    p = _prec(e)
    if p < min_prec or (not unary_ok and p == _UNARY):
        return f"({text})"
    return text


def to_infix(e: Expr) -> str:
    if isinstance(e, Constant):
        return format_number(e.value)
    if isinstance(e, Symbol):
        return str(e.id)
    if isinstance(e, Sum):
        if not e.args:
            return "0"
        parts = [to_infix(e.args[0])]
        for arg in e.args[1:]:
            if isinstance(arg, Negate):
                parts.append(" - " + _wrap(arg.arg, _PRODUCT, unary_ok=False))
            elif isinstance(arg, Constant) and arg.value < 0:
                parts.append(" - " + format_number(-arg.value))
            else:
                parts.append(" + " + _wrap(arg, _SUM, unary_ok=False))
        return "".join(parts)
    if isinstance(e, Product):
        if not e.args:
            return "1"
        return "*".join(_wrap(a, _PRODUCT, unary_ok=(i == 0)) for i, a in enumerate(e.args))
    if isinstance(e, Quotient):
        return f"{_wrap(e.num, _PRODUCT)}/{_wrap(e.den, _POWER)}"
    if isinstance(e, Negate):
        return "-" + _wrap(e.arg, _PRODUCT, unary_ok=False)
    if isinstance(e, IntPow):
        exponent = str(e.exponent) if e.exponent >= 0 else f"({e.exponent})"
        return f"{_wrap(e.base, _ATOM)}^{exponent}"
    if isinstance(e, RealPow):
        return f"{_wrap(e.base, _ATOM)}^{_wrap(e.exponent, _ATOM)}"
    if isinstance(e, Apply):
        return f"{e.function}({to_infix(e.arg)})"
    raise TypeError(type(e).__name__)
