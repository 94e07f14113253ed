"""Fractional action-like variational problems: Euler-Lagrange equations, Noether charges and their numerical verification."""
