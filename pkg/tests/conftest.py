from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np
import pytest

from falva.core import LagrangianProblem
from falva.symexpr import THETA, Expr, const, mul, q, simplify

ROOT = Path(__file__).resolve().parent.parent
PROBLEMS = ROOT / "problems"

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def problems_dir() -> Path:
    return PROBLEMS


def random_polynomial(rng: np.random.Generator, variables: list[Expr], max_degree: int,
                      n_terms: int, must_include: Expr | None = None) -> Expr:
    """Sum of random monomials of total degree <= max_degree."""
    terms = []
    for k in range(n_terms):
        degree = int(rng.integers(1, max_degree + 1))
        factors = [variables[int(i)] for i in rng.integers(0, len(variables), size=degree)]
        if k == 0 and must_include is not None:
            factors[0] = must_include
        coeff = float(np.round(rng.uniform(-2, 2), 3)) or 1.0
        terms.append(mul(const(coeff), *factors))
    return simplify(sum(terms[1:], terms[0]))


def random_lagrangian(rng: np.random.Generator, m: int, n: int, max_degree: int = 4,
                      n_terms: int = 5, with_theta: bool = True) -> Expr:
    variables = [q(c, k) for c in range(n) for k in range(m + 1)]
    if with_theta:
        variables.append(THETA)
    # the top derivative always appears so m is the true order
    return random_polynomial(rng, variables, max_degree, n_terms, must_include=q(0, m))


def lagrangian_suite(count: int = 20, seed: int = 7) -> list[LagrangianProblem]:
    rng = np.random.default_rng(seed)
    shapes = itertools.cycle([(m, n) for m in (1, 2, 3) for n in (1, 2)])
    out = []
    for _ in range(count):
        m, n = next(shapes)
        L = random_lagrangian(rng, m, n)
        out.append(LagrangianProblem(m=m, n=n, alpha=0.5, a=0.0, t=1.0, L=L))
    return out


def section32_lagrangian() -> Expr:
    from falva.symexpr import param

    return 0.5 * (param("aL") * q(0) ** 2 + param("bL") * q(0, 1) ** 2 + q(0, 2) ** 2)
