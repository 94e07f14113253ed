"""Value-preserving cleanup of expression trees.

The rewriter is deliberately shallow: it flattens nested sums and products,
folds constants, applies 0/1 identities, cancels double negation and collects
like terms (up to factor order) and repeated factors. It never expands products of sums,
so ``(1 - alpha)/(t - theta)*(b*q0_1 - 2*q0_3)`` keeps its factored shape.
Deciding whether two expressions are equal in general is left to sampling
(:func:`falva.symexpr.numerically_equivalent`).
"""

from __future__ import annotations

from ..errors import FalvaError
from .evaluate import eval_expr
from .nodes import (
    ONE,
    ZERO,
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


def _fold(e: Expr) -> Expr:
    """Evaluate a symbol-free node, keeping it unevaluated on domain errors."""
    try:
        return Constant(eval_expr(e, {}))
    except FalvaError:
        return e


def _split_coeff(e: Expr) -> tuple[float, Expr | None]:
    """Write a simplified term as ``coeff * rest``; rest None means a bare constant."""
    if isinstance(e, Constant):
        return e.value, None
    if isinstance(e, Negate):
        c, rest = _split_coeff(e.arg)
        return -c, rest
    if isinstance(e, Product) and isinstance(e.args[0], Constant):
        rest = e.args[1:]
        return e.args[0].value, rest[0] if len(rest) == 1 else Product(rest)
    return 1.0, e


def _scaled(coeff: float, rest: Expr) -> Expr:
    if coeff == 1.0:
        return rest
    if coeff == -1.0:
        return Negate(rest)
    if coeff < 0:
        return Negate(_scaled(-coeff, rest))
    if isinstance(rest, Product):
        return Product((Constant(coeff),) + rest.args)
    return Product((Constant(coeff), rest))


def _term_key(rest: Expr | None) -> object:
    """Order-insensitive identity of a product, so q0*q1 and q1*q0 collect."""
    if isinstance(rest, Product):
        return ("*", tuple(sorted(rest.args, key=repr)))
    return rest


def _simplify_sum(args: tuple[Expr, ...]) -> Expr:
    flat: list[Expr] = []
    stack = list(reversed(args))
    while stack:
        a = stack.pop()
        if isinstance(a, Sum):
            stack.extend(reversed(a.args))
        elif isinstance(a, Negate) and isinstance(a.arg, Sum):
            stack.extend(reversed([Negate(x) for x in a.arg.args]))
        else:
            flat.append(a)

    # insertion-ordered so printed output keeps the construction order;
    # the first spelling of a term is the one kept
    coeffs: dict[object, list] = {}
    for a in flat:
        c, rest = _split_coeff(a)
        slot = coeffs.setdefault(_term_key(rest), [rest, 0.0])
        slot[1] += c

    terms: list[Expr] = []
    for rest, c in coeffs.values():
        if c == 0.0:
            continue
        terms.append(Constant(c) if rest is None else _scaled(c, rest))
    if not terms:
        return ZERO
    if len(terms) == 1:
        return terms[0]
    # a leading negative term reads better moved behind a positive one
    if isinstance(terms[0], Negate) or (isinstance(terms[0], Constant) and terms[0].value < 0):
        for i, term in enumerate(terms[1:], 1):
            if not isinstance(term, Negate) and not (isinstance(term, Constant) and term.value < 0):
                terms.insert(0, terms.pop(i))
                break
    return Sum(tuple(terms))


def _simplify_product(args: tuple[Expr, ...]) -> Expr:
    coeff = 1.0
    powers: dict[Expr, int] = {}
    order: list[Expr] = []
    stack = list(reversed(args))
    while stack:
        a = stack.pop()
        if isinstance(a, Product):
            stack.extend(reversed(a.args))
            continue
        if isinstance(a, Negate):
            coeff = -coeff
            stack.append(a.arg)
            continue
        if isinstance(a, Constant):
            coeff *= a.value
            continue
        base, k = (a.base, a.exponent) if isinstance(a, IntPow) else (a, 1)
        if base not in powers:
            order.append(base)
            powers[base] = 0
        powers[base] += k

    if coeff == 0.0:
        return ZERO
    num: list[Expr] = []
    den: list[Expr] = []
    for base in order:
        k = powers[base]
        if k > 0:
            num.append(base if k == 1 else IntPow(base, k))
        elif k < 0:
            den.append(base if k == -1 else IntPow(base, -k))

    if not num and not den:
        return Constant(coeff)
    if den:
        numer = ONE if not num else num[0] if len(num) == 1 else Product(tuple(num))
        denom = den[0] if len(den) == 1 else Product(tuple(den))
        return _scaled(coeff, Quotient(numer, denom))
    body = num[0] if len(num) == 1 else Product(tuple(num))
    return _scaled(coeff, body)


def _simplify_quotient(num: Expr, den: Expr) -> Expr:
    if isinstance(den, Constant):
        if den.value == 0.0:
            return Quotient(num, den)
        return simplify(Product((Constant(1.0 / den.value), num)))
    if isinstance(num, Constant) and num.value == 0.0:
        return ZERO
    if num == den:
        return ONE
    sign = 1.0
    if isinstance(num, Negate):
        sign, num = -sign, num.arg
    if isinstance(den, Negate):
        sign, den = -sign, den.arg
    cn, rest_n = _split_coeff(num)
    if rest_n is not None and cn != 1.0:
        sign *= cn
        num = rest_n
    if isinstance(num, Quotient):
        den = _simplify_product((num.den, den))
        num = num.num
    return _scaled(sign, Quotient(num, den))


def simplify(e: Expr) -> Expr:
    """Return a value-equivalent, tidier tree."""
    if isinstance(e, (Constant, Symbol)):
        return e
    if isinstance(e, Sum):
        return _simplify_sum(tuple(simplify(a) for a in e.args))
    if isinstance(e, Product):
        return _simplify_product(tuple(simplify(a) for a in e.args))
    if isinstance(e, Negate):
        inner = simplify(e.arg)
        if isinstance(inner, Constant):
            return Constant(-inner.value)
        if isinstance(inner, Negate):
            return inner.arg
        if isinstance(inner, Sum):
            return _simplify_sum((Negate(inner),))
        c, rest = _split_coeff(inner)
        return _scaled(-c, rest) if rest is not None else Constant(-c)
    if isinstance(e, Quotient):
        return _simplify_quotient(simplify(e.num), simplify(e.den))
    if isinstance(e, IntPow):
        base = simplify(e.base)
        k = e.exponent
        if k == 0:
            return ONE
        if k == 1:
            return base
        if isinstance(base, Constant):
            return _fold(IntPow(base, k))
        if isinstance(base, IntPow):
            return simplify(IntPow(base.base, base.exponent * k))
        if isinstance(base, Negate) and k % 2 == 0:
            return IntPow(base.arg, k)
        if k < 0:
            return Quotient(ONE, IntPow(base, -k) if k != -1 else base)
        return IntPow(base, k)
    if isinstance(e, RealPow):
        base = simplify(e.base)
        exponent = simplify(e.exponent)
        if isinstance(exponent, Constant) and exponent.value == int(exponent.value):
            return simplify(IntPow(base, int(exponent.value)))
        if isinstance(base, Constant):
            if base.value == 1.0:
                return ONE
            if isinstance(exponent, Constant):
                return _fold(RealPow(base, exponent))
        return RealPow(base, exponent)
    if isinstance(e, Apply):
        arg = simplify(e.arg)
        out = Apply(e.function, arg)
        return _fold(out) if isinstance(arg, Constant) else out
    raise TypeError(type(e).__name__)
