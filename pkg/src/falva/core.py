"""Variational objects of a higher-order fractional action-like problem.

A problem is the functional

    I[q] = 1/Gamma(alpha) * int_a^t L(theta, q, q', ..., q^(m)) (t - theta)^(alpha - 1) dtheta

and everything here is built symbolically from L: the momenta psi^j, the
non-conservative force F, the Euler-Lagrange and DuBois-Reymond residuals,
the invariance residuals for given generators (tau, xi, Lambda) and the
Noether charge. Vector quantities are lists with one entry per component of
q; products between vectors are dot products.

The fractional order stays symbolic (``alpha``) in every derived expression;
:meth:`LagrangianProblem.bind` substitutes the numeric values.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from math import comb
from typing import Union

from .errors import GaugeUnresolvable
from .symexpr import (
    ALPHA,
    ALPHA_ID,
    ONE,
    T_ID,
    THETA,
    THETA_ID,
    ZERO,
    Constant,
    Expr,
    IntPow,
    Negate,
    Product,
    Quotient,
    SamplerConfig,
    Sum,
    SymbolId,
    T,
    free_symbols,
    param_id,
    partial,
    q,
    simplify,
    state_id,
    substitute,
    total_deriv,
    total_deriv_n,
)

Vector = list[Expr]


@dataclass(frozen=True)
class LagrangianProblem:
    """Problem data: L depends on theta and q_i^(k) for i < n, k <= m."""

    m: int
    n: int
    alpha: float
    a: float
    t: float
    L: Expr
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.m < 1 or self.n < 1:
            raise ValueError(f"need m >= 1 and n >= 1, got m={self.m}, n={self.n}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.t > self.a:
            raise ValueError(f"observer time t={self.t} must exceed a={self.a}")
        for sid in free_symbols(self.L):
            if sid.is_state and (sid.component >= self.n or sid.order > self.m):
                raise ValueError(f"Lagrangian uses {sid} outside n={self.n}, m={self.m}")
            if sid.kind == "param" and sid.name not in self.params:
                raise ValueError(f"parameter {sid.name!r} has no value")

    def bindings(self) -> dict[SymbolId, float]:
        env = {T_ID: float(self.t), ALPHA_ID: float(self.alpha)}
        env.update({param_id(k): float(v) for k, v in self.params.items()})
        return env

    def bind(self, e: Expr) -> Expr:
        """Substitute alpha, t and parameter values, then simplify."""
        return simplify(substitute(e, self.bindings()))

    def with_alpha(self, alpha: float) -> LagrangianProblem:
        return LagrangianProblem(self.m, self.n, alpha, self.a, self.t, self.L, dict(self.params))

    def sampler(self, n_points: int = 200, seed: int = 2024, epsilon: float | None = None,
                state_range: tuple[float, float] = (-2.0, 2.0)) -> SamplerConfig:
        """Random interior points with alpha, t and params pinned to the problem values."""
        eps = 1e-3 * (self.t - self.a) if epsilon is None else epsilon
        return SamplerConfig(
            n_points=n_points,
            seed=seed,
            fixed=self.bindings(),
            kind_ranges={"theta": (self.a, self.t - eps), "state": state_range},
        )

    def qvec(self, order: int) -> Vector:
        return [q(i, order) for i in range(self.n)]

    def dL(self, order: int) -> Vector:
        """Partial derivatives of L with respect to q^(order), one per component."""
        return [partial(self.L, state_id(i, order)) for i in range(self.n)]

    def dL_theta(self) -> Expr:
        return partial(self.L, THETA_ID)


# --- generators ---------------------------------------------------------


@dataclass(frozen=True)
class SymbolicGauge:
    """Lambda given in closed form (orders up to 2m-1)."""

    expr: Expr = ZERO


@dataclass(frozen=True)
class RateGauge:
    """Lambda given through its rate; Lambda itself is accumulated from Lambda(a) = 0."""

    rate: Expr = ZERO


@dataclass(frozen=True)
class ForceRateGauge:
    """Rate F . q' as in the non-conservative example."""


Gauge = Union[SymbolicGauge, RateGauge, ForceRateGauge]


@dataclass(frozen=True)
class GeneratorSet:
    tau: Expr
    xi: tuple[Expr, ...]
    gauge: Gauge = SymbolicGauge()

    def __post_init__(self) -> None:
        object.__setattr__(self, "xi", tuple(self.xi))
        for e in (self.tau, *self.xi):
            for sid in free_symbols(e):
                if sid.is_state and sid.order != 0:
                    raise ValueError(f"generators may only depend on theta and q, found {sid}")


def _check_generators(P: LagrangianProblem, gen: GeneratorSet) -> None:
    if len(gen.xi) != P.n:
        raise ValueError(f"xi has {len(gen.xi)} components, problem has n={P.n}")


def _dot(u: Sequence[Expr], v: Sequence[Expr]) -> Expr:
    return Sum(tuple(Product((a, b)) for a, b in zip(u, v)))


def _sub(u: Sequence[Expr], v: Sequence[Expr]) -> Vector:
    return [simplify(Sum((a, Negate(b)))) for a, b in zip(u, v)]


def _gap() -> Expr:
    return Sum((T, Negate(THETA)))


def falling_factor(i: int, start: int) -> Expr:
    """prod_{p=start}^{i} (p - alpha) as an expression; 1 when empty.

    Equals Gamma(i - alpha + 1)/Gamma(start - alpha), which stays finite at
    alpha = 1 where the gamma ratio has a removable pole.
    """
    factors = tuple(Sum((Constant(float(p)), Negate(ALPHA))) for p in range(start, i + 1))
    if not factors:
        return ONE
    return factors[0] if len(factors) == 1 else Product(factors)


# --- momenta, force, residuals -------------------------------------------


def psi(P: LagrangianProblem, j: int) -> Vector:
    """psi^j = sum_{i=0}^{m-j} (-1)^i D^i dL/dq^(i+j); psi^0 is the Euler-Lagrange operator."""
    if not 0 <= j <= P.m:
        raise ValueError(f"j must lie in [0, {P.m}], got {j}")
    out = []
    for c in range(P.n):
        terms = []
        for i in range(P.m - j + 1):
            d = total_deriv_n(partial(P.L, state_id(c, i + j)), i)
            terms.append(d if i % 2 == 0 else Negate(d))
        out.append(simplify(Sum(tuple(terms))))
    return out


def force_F(P: LagrangianProblem) -> Vector:
    """Non-conservative force on the right-hand side of the Euler-Lagrange equation."""
    out = []
    for c in range(P.n):
        inner = []
        for i in range(1, P.m + 1):
            d = total_deriv_n(partial(P.L, state_id(c, i)), i - 1)
            inner.append(Product((Constant(float(i * (-1) ** (i - 1))), d)))
        terms: list[Expr] = [Product((Quotient(falling_factor(1, 1), _gap()), Sum(tuple(inner))))]
        for k in range(2, P.m + 1):
            dk = partial(P.L, state_id(c, k))
            for i in range(2, k + 1):
                coeff = Quotient(falling_factor(i, 1), IntPow(_gap(), i))
                terms.append(Product((
                    Constant(float((-1) ** (i - 1) * comb(k, k - i))),
                    coeff,
                    total_deriv_n(dk, k - i),
                )))
        out.append(simplify(Sum(tuple(terms))))
    return out


def euler_lagrange_residual(P: LagrangianProblem) -> Vector:
    """psi^0 - F; zero along stationary trajectories."""
    return _sub(psi(P, 0), force_F(P))


def _energy_like(P: LagrangianProblem) -> Expr:
    """L - sum_j psi^j . q^(j)."""
    terms: list[Expr] = [P.L]
    for j in range(1, P.m + 1):
        terms.append(Negate(_dot(psi(P, j), P.qvec(j))))
    return simplify(Sum(tuple(terms)))


def dubois_reymond_residual(P: LagrangianProblem) -> Expr:
    """D(L - sum psi^j . q^(j)) - dL/dtheta - F . q'."""
    return simplify(Sum((
        total_deriv(_energy_like(P)),
        Negate(P.dL_theta()),
        Negate(_dot(force_F(P), P.qvec(1))),
    )))


def G_quantity(P: LagrangianProblem) -> Vector:
    out = []
    for c in range(P.n):
        terms: list[Expr] = []
        for i in range(1, P.m + 1):
            d = total_deriv_n(partial(P.L, state_id(c, i)), i - 1)
            terms.append(Product((Constant(float((-1) ** (i - 1) * i)), d)))
        for k in range(2, P.m + 1):
            dk = partial(P.L, state_id(c, k))
            for i in range(2, k + 1):
                coeff = Quotient(falling_factor(i, 2), IntPow(_gap(), i - 1))
                terms.append(Product((
                    Constant(float((-1) ** i * comb(k, k - i))),
                    coeff,
                    total_deriv_n(dk, k - i),
                )))
        out.append(simplify(Sum(tuple(terms))))
    return out


# --- symmetry ------------------------------------------------------------


def rho(P: LagrangianProblem, gen: GeneratorSet, i: int) -> Vector:
    """rho^0 = xi, rho^i = D(rho^{i-1}) - q^(i) D(tau)."""
    if not 0 <= i <= P.m:
        raise ValueError(f"i must lie in [0, {P.m}], got {i}")
    _check_generators(P, gen)
    dtau = total_deriv(gen.tau)
    cur = [simplify(x) for x in gen.xi]
    for k in range(1, i + 1):
        cur = [simplify(Sum((total_deriv(r), Negate(Product((q(c, k), dtau))))))
               for c, r in enumerate(cur)]
    return cur


def omega(P: LagrangianProblem, gen: GeneratorSet) -> Vector:
    """Characteristic xi - q' tau."""
    _check_generators(P, gen)
    return [simplify(Sum((x, Negate(Product((q(c, 1), gen.tau))))))
            for c, x in enumerate(gen.xi)]


def gauge_rate(P: LagrangianProblem, gen: GeneratorSet) -> Expr:
    """Rate of Lambda for any gauge mode."""
    g = gen.gauge
    top = 2 * P.m - 1
    if isinstance(g, SymbolicGauge):
        _check_order(g.expr, top, "gauge Lambda")
        return total_deriv(g.expr)
    if isinstance(g, RateGauge):
        _check_order(g.rate, top, "gauge rate")
        return simplify(g.rate)
    if isinstance(g, ForceRateGauge):
        return simplify(_dot(force_F(P), P.qvec(1)))
    raise GaugeUnresolvable(f"unknown gauge mode {type(g).__name__}")


def _check_order(e: Expr, top: int, what: str) -> None:
    for sid in free_symbols(e):
        if sid.is_state and sid.order > top:
            raise GaugeUnresolvable(f"{what} uses {sid}, beyond order {top}")


def _invariance_common(P: LagrangianProblem, gen: GeneratorSet) -> list[Expr]:
    """dL/dtheta tau + sum_i dL/dq^(i) . rho^i + L D(tau)."""
    terms: list[Expr] = [Product((P.dL_theta(), gen.tau))]
    for i in range(P.m + 1):
        terms.append(_dot(P.dL(i), rho(P, gen, i)))
    terms.append(Product((P.L, total_deriv(gen.tau))))
    return terms


def invariance_residual(P: LagrangianProblem, gen: GeneratorSet) -> Expr:
    """Zero iff the functional is invariant under (tau, xi) with the given gauge."""
    _check_generators(P, gen)
    terms = _invariance_common(P, gen)
    terms.append(Product((P.L, Quotient(falling_factor(1, 1), _gap()), gen.tau)))
    terms.append(Negate(gauge_rate(P, gen)))
    return simplify(Sum(tuple(terms)))


def invariance_residual_form2(P: LagrangianProblem, gen: GeneratorSet) -> Expr:
    """Invariance condition with the fractional term traded for -F . Omega."""
    _check_generators(P, gen)
    terms = _invariance_common(P, gen)
    terms.append(Negate(_dot(force_F(P), omega(P, gen))))
    terms.append(Negate(gauge_rate(P, gen)))
    return simplify(Sum(tuple(terms)))


def condition17_residual(P: LagrangianProblem, gen: GeneratorSet) -> Expr:
    """G . Omega + L tau (diagnostic only)."""
    return simplify(Sum((_dot(G_quantity(P), omega(P, gen)), Product((P.L, gen.tau)))))


def noether_charge(P: LagrangianProblem, gen: GeneratorSet) -> tuple[Expr, Gauge]:
    """Charge without the gauge term; the full conserved quantity is this minus Lambda."""
    _check_generators(P, gen)
    terms: list[Expr] = []
    for j in range(1, P.m + 1):
        terms.append(_dot(psi(P, j), rho(P, gen, j - 1)))
    terms.append(Product((_energy_like(P), gen.tau)))
    return simplify(Sum(tuple(terms))), gen.gauge


# --- bundle ----------------------------------------------------------------


@dataclass(frozen=True)
class DerivedSystem:
    problem: LagrangianProblem
    psi: tuple[Vector, ...]
    F: Vector
    el_residual: Vector
    G: Vector
    dbr_residual: Expr
    generators: GeneratorSet | None = None
    charge_symbolic: Expr | None = None
    gauge_mode: Gauge | None = None


def derive(P: LagrangianProblem, gen: GeneratorSet | None = None) -> DerivedSystem:
    charge, mode = (None, None) if gen is None else noether_charge(P, gen)
    return DerivedSystem(
        problem=P,
        psi=tuple(psi(P, j) for j in range(P.m + 1)),
        F=force_F(P),
        el_residual=euler_lagrange_residual(P),
        G=G_quantity(P),
        dbr_residual=dubois_reymond_residual(P),
        generators=gen,
        charge_symbolic=charge,
        gauge_mode=mode,
    )
