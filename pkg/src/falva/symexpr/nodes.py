"""Immutable expression tree.

Nodes are frozen dataclasses, so trees hash and compare structurally and can
be shared freely between threads. Arithmetic operators build raw (unsimplified)
nodes; call :func:`falva.symexpr.simplify` to tidy them up.
"""

from __future__ import annotations

import numbers
import re
from collections.abc import Iterator
from dataclasses import dataclass
from typing import Union

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")
RESERVED = ("theta", "t", "alpha")

_STATE_RE = re.compile(r"^q(\d+)(?:_(\d+))?$")


@dataclass(frozen=True, order=True)
class SymbolId:
    """Identity of a symbol.

    ``kind`` is one of ``"theta"`` (intrinsic time), ``"t"`` (observer time),
    ``"alpha"``, ``"param"`` or ``"state"``. State symbols carry the component
    index and the derivative order; params carry a name.
    """

    kind: str
    name: str = ""
    component: int = -1
    order: int = -1

    def __str__(self) -> str:
        if self.kind == "state":
            return f"q{self.component}_{self.order}"
        if self.kind == "param":
            return self.name
        return self.kind

    @property
    def is_state(self) -> bool:
        return self.kind == "state"


THETA_ID = SymbolId("theta")
T_ID = SymbolId("t")
ALPHA_ID = SymbolId("alpha")


def state_id(component: int, order: int) -> SymbolId:
    if component < 0 or order < 0:
        raise ValueError(f"state indices must be >= 0, got ({component}, {order})")
    return SymbolId("state", component=component, order=order)


def param_id(name: str) -> SymbolId:
    if name in RESERVED or name in FUNCTIONS or _STATE_RE.match(name):
        raise ValueError(f"parameter name {name!r} collides with a reserved identifier")
    return SymbolId("param", name=name)


def is_reserved_name(name: str) -> bool:
    return name in RESERVED or name in FUNCTIONS or bool(_STATE_RE.match(name))


def match_state_name(name: str) -> tuple[int, int] | None:
    """``"q1_3"`` -> ``(1, 3)``, ``"q0"`` -> ``(0, 0)``, otherwise None."""
    mt = _STATE_RE.match(name)
    if mt is None:
        return None
    return int(mt.group(1)), int(mt.group(2) or 0)


class Expr:
    """Base class of all expression nodes."""

    __slots__ = ()

    def __add__(self, other: ExprLike) -> Expr:
        return Sum((self, as_expr(other)))

    def __radd__(self, other: ExprLike) -> Expr:
        return Sum((as_expr(other), self))

    def __sub__(self, other: ExprLike) -> Expr:
        return Sum((self, Negate(as_expr(other))))

    def __rsub__(self, other: ExprLike) -> Expr:
        return Sum((as_expr(other), Negate(self)))

    def __mul__(self, other: ExprLike) -> Expr:
        return Product((self, as_expr(other)))

    def __rmul__(self, other: ExprLike) -> Expr:
        return Product((as_expr(other), self))

    def __truediv__(self, other: ExprLike) -> Expr:
        return Quotient(self, as_expr(other))

    def __rtruediv__(self, other: ExprLike) -> Expr:
        return Quotient(as_expr(other), self)

    def __neg__(self) -> Expr:
        return Negate(self)

    def __pow__(self, other: ExprLike) -> Expr:
        if isinstance(other, numbers.Integral):
            return IntPow(self, int(other))
        return RealPow(self, as_expr(other))

    def __str__(self) -> str:
        from .printer import to_infix

        return to_infix(self)

    def children(self) -> tuple[Expr, ...]:
        return ()


@dataclass(frozen=True, eq=True, repr=False)
class Constant(Expr):
    value: float

    def __repr__(self) -> str:
        return f"Constant({self.value!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Symbol(Expr):
    id: SymbolId

    def __repr__(self) -> str:
        return f"Symbol({self.id})"


@dataclass(frozen=True, eq=True)
class Sum(Expr):
    args: tuple[Expr, ...]

    def children(self) -> tuple[Expr, ...]:
        return self.args


@dataclass(frozen=True, eq=True)
class Product(Expr):
    args: tuple[Expr, ...]

    def children(self) -> tuple[Expr, ...]:
        return self.args


@dataclass(frozen=True, eq=True)
class Negate(Expr):
    arg: Expr

    def children(self) -> tuple[Expr, ...]:
        return (self.arg,)


@dataclass(frozen=True, eq=True)
class Quotient(Expr):
    num: Expr
    den: Expr

    def children(self) -> tuple[Expr, ...]:
        return (self.num, self.den)


@dataclass(frozen=True, eq=True)
class IntPow(Expr):
    base: Expr
    exponent: int

    def children(self) -> tuple[Expr, ...]:
        return (self.base,)


@dataclass(frozen=True, eq=True)
class RealPow(Expr):
    """``base ** exponent`` for a non-integer (possibly symbolic) exponent."""

    base: Expr
    exponent: Expr

    def children(self) -> tuple[Expr, ...]:
        return (self.base, self.exponent)


@dataclass(frozen=True, eq=True)
class Apply(Expr):
    function: str
    arg: Expr

    def children(self) -> tuple[Expr, ...]:
        return (self.arg,)


ExprLike = Union[Expr, float, int]

ZERO = Constant(0.0)
ONE = Constant(1.0)
THETA = Symbol(THETA_ID)
T = Symbol(T_ID)
ALPHA = Symbol(ALPHA_ID)


def as_expr(value: ExprLike) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, numbers.Real):
        return Constant(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


def const(value: float) -> Constant:
    return Constant(float(value))


def q(component: int, order: int = 0) -> Symbol:
    """State symbol for the ``order``-th derivative of component ``component``."""
    return Symbol(state_id(component, order))


def param(name: str) -> Symbol:
    return Symbol(param_id(name))


def sym(sid: SymbolId) -> Symbol:
    return Symbol(sid)


def sin(x: ExprLike) -> Expr:
    return Apply("sin", as_expr(x))


def cos(x: ExprLike) -> Expr:
    return Apply("cos", as_expr(x))


def exp(x: ExprLike) -> Expr:
    return Apply("exp", as_expr(x))


def log(x: ExprLike) -> Expr:
    return Apply("log", as_expr(x))


def sqrt(x: ExprLike) -> Expr:
    return Apply("sqrt", as_expr(x))


def add(*terms: ExprLike) -> Expr:
    if not terms:
        return ZERO
    if len(terms) == 1:
        return as_expr(terms[0])
    return Sum(tuple(as_expr(x) for x in terms))


def mul(*factors: ExprLike) -> Expr:
    if not factors:
        return ONE
    if len(factors) == 1:
        return as_expr(factors[0])
    return Product(tuple(as_expr(x) for x in factors))


def walk(e: Expr) -> Iterator[Expr]:
    """Pre-order traversal."""
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children()))


def free_symbols(e: Expr) -> frozenset[SymbolId]:
    return frozenset(node.id for node in walk(e) if isinstance(node, Symbol))


def state_symbols(e: Expr) -> frozenset[SymbolId]:
    return frozenset(s for s in free_symbols(e) if s.is_state)


def max_state_order(e: Expr) -> int:
    """Highest derivative order of any state symbol in ``e``; -1 if none."""
    return max((s.order for s in state_symbols(e)), default=-1)


def substitute(e: Expr, mapping: dict[SymbolId, ExprLike]) -> Expr:
    """Replace symbols by expressions or numbers (no simplification)."""
    if not mapping:
        return e
    table = {k: as_expr(v) for k, v in mapping.items()}
    cache: dict[int, Expr] = {}

    def go(node: Expr) -> Expr:
        key = id(node)
        if key in cache:
            return cache[key]
        if isinstance(node, Symbol):
            out = table.get(node.id, node)
        elif isinstance(node, Constant):
            out = node
        elif isinstance(node, Sum):
            out = Sum(tuple(go(a) for a in node.args))
        elif isinstance(node, Product):
            out = Product(tuple(go(a) for a in node.args))
        elif isinstance(node, Negate):
            out = Negate(go(node.arg))
        elif isinstance(node, Quotient):
            out = Quotient(go(node.num), go(node.den))
        elif isinstance(node, IntPow):
            out = IntPow(go(node.base), node.exponent)
        elif isinstance(node, RealPow):
            out = RealPow(go(node.base), go(node.exponent))
        elif isinstance(node, Apply):
            out = Apply(node.function, go(node.arg))
        else:  # pragma: no cover
            raise TypeError(type(node).__name__)
        cache[key] = out
        return out

    return go(e)
