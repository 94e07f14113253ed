"""Small symbolic kernel: build, differentiate, simplify, evaluate and print expressions."""

from .calculus import (
    SamplerConfig,
    linear_coeffs_in,
    numerically_equivalent,
    partial,
    sample_values,
    total_deriv,
    total_deriv_n,
)
from .evaluate import compile_exprs, eval_expr
from .nodes import (
    ALPHA,
    ALPHA_ID,
    FUNCTIONS,
    ONE,
    RESERVED,
    T_ID,
    THETA,
    THETA_ID,
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
    SymbolId,
    T,
    add,
    as_expr,
    const,
    cos,
    exp,
    free_symbols,
    log,
    max_state_order,
    mul,
    param,
    param_id,
    q,
    sin,
    sqrt,
    state_id,
    state_symbols,
    substitute,
    sym,
    walk,
)
from .printer import to_infix
from .simplify import simplify

evaluate = eval_expr

__all__ = [
    "ALPHA",
    "ALPHA_ID",
    "FUNCTIONS",
    "ONE",
    "RESERVED",
    "THETA",
    "THETA_ID",
    "T_ID",
    "ZERO",
    "Apply",
    "Constant",
    "Expr",
    "IntPow",
    "Negate",
    "Product",
    "Quotient",
    "RealPow",
    "SamplerConfig",
    "Sum",
    "Symbol",
    "SymbolId",
    "T",
    "add",
    "as_expr",
    "compile_exprs",
    "const",
    "cos",
    "eval_expr",
    "evaluate",
    "exp",
    "free_symbols",
    "linear_coeffs_in",
    "log",
    "max_state_order",
    "mul",
    "numerically_equivalent",
    "param",
    "param_id",
    "partial",
    "q",
    "sample_values",
    "simplify",
    "sin",
    "sqrt",
    "state_id",
    "state_symbols",
    "substitute",
    "sym",
    "to_infix",
    "total_deriv",
    "total_deriv_n",
    "walk",
]
