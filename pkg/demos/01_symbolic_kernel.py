"""A tour of the expression kernel.

Expressions are immutable trees over the intrinsic time theta, the observer
time t, the order alpha, named parameters and state symbols q<i>_<k>.
Identities are checked by evaluating both sides at random points.
"""

from falva.problemio import ExprContext, parse_expr
from falva.symexpr import (
    THETA_ID,
    linear_coeffs_in,
    numerically_equivalent,
    partial,
    simplify,
    state_id,
    to_infix,
    total_deriv,
    total_deriv_n,
)

ctx = ExprContext(n=1, max_order=4, params={"b"})

L = parse_expr("0.5*b*q0_1^2 + q0^2*sin(theta)", ctx)
print("L            =", to_infix(L))
print("dL/dq0_1     =", to_infix(simplify(partial(L, state_id(0, 1)))))
print("dL/dtheta    =", to_infix(simplify(partial(L, THETA_ID))))

# D acts on theta and shifts every state symbol up one order; t, alpha and b are constants
print("D L          =", to_infix(simplify(total_deriv(L))))
print("D^2 (q0*q0_1) =", to_infix(simplify(total_deriv_n(parse_expr("q0*q0_1", ctx), 2))))

weight = parse_expr("(t - theta)^(alpha - 1)", ctx)
print("d/dtheta of the weight =", to_infix(simplify(partial(weight, THETA_ID))))

lhs = parse_expr("(q0 + q0_1)^2", ctx)
rhs = parse_expr("q0^2 + 2*q0*q0_1 + q0_1^2", ctx)
print("(q0 + q0_1)^2 expands correctly:", numerically_equivalent(lhs, rhs, tol=1e-10))

# solving for a top derivative needs the residual to be affine in it
residual = parse_expr("3*q0_4 + q0^2 - b*q0_2", ctx)
A, rest = linear_coeffs_in(residual, state_id(0, 4))
print(f"residual = ({to_infix(simplify(A))})*q0_4 + ({to_infix(rest)})")
