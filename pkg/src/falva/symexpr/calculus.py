"""Differentiation and sampling-based identity checks."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..errors import (
    ConfigError,
    FalvaError,
    NonlinearInSymbol,
    SampleRejected,
    UnsupportedFunction,
)
from .evaluate import eval_expr
from .nodes import (
    ONE,
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
    cos,
    free_symbols,
    log,
    sin,
    state_id,
    state_symbols,
    substitute,
)
from .simplify import simplify


def _depends_on(e: Expr, s: SymbolId) -> bool:
    return s in free_symbols(e)


def _d(e: Expr, s: SymbolId) -> Expr:
    """Raw partial derivative; zeros are pruned but nothing else is tidied."""
    if isinstance(e, Constant):
        return ZERO
    if isinstance(e, Symbol):
        return ONE if e.id == s else ZERO
    if isinstance(e, Sum):
        parts = [p for p in (_d(a, s) for a in e.args) if p != ZERO]
        return Sum(tuple(parts)) if parts else ZERO
    if isinstance(e, Product):
        terms = []
        for i, a in enumerate(e.args):
            da = _d(a, s)
            if da == ZERO:
                continue
            terms.append(Product(e.args[:i] + (da,) + e.args[i + 1:]))
        return Sum(tuple(terms)) if terms else ZERO
    if isinstance(e, Negate):
        da = _d(e.arg, s)
        return ZERO if da == ZERO else Negate(da)
    if isinstance(e, Quotient):
        dn = _d(e.num, s)
        dd = _d(e.den, s)
        parts = []
        if dn != ZERO:
            parts.append(Quotient(dn, e.den))
        if dd != ZERO:
            parts.append(Negate(Quotient(Product((e.num, dd)), IntPow(e.den, 2))))
        return Sum(tuple(parts)) if parts else ZERO
    if isinstance(e, IntPow):
        db = _d(e.base, s)
        if db == ZERO:
            return ZERO
        k = e.exponent
        return Product((Constant(float(k)), IntPow(e.base, k - 1), db))
    if isinstance(e, RealPow):
        db = _d(e.base, s)
        if not _depends_on(e.exponent, s):
            if db == ZERO:
                return ZERO
            return Product((e.exponent, RealPow(e.base, Sum((e.exponent, Constant(-1.0)))), db))
        de = _d(e.exponent, s)
        inner = [Product((de, log(e.base)))]
        if db != ZERO:
            inner.append(Quotient(Product((e.exponent, db)), e.base))
        return Product((e, Sum(tuple(inner))))
    if isinstance(e, Apply):
        da = _d(e.arg, s)
        if e.function not in ("sin", "cos", "exp", "log", "sqrt"):
            raise UnsupportedFunction(e.function)
        if da == ZERO:
            return ZERO
        x = e.arg
        if e.function == "sin":
            outer: Expr = cos(x)
        elif e.function == "cos":
            outer = Negate(sin(x))
        elif e.function == "exp":
            outer = e
        elif e.function == "log":
            outer = Quotient(ONE, x)
        else:
            outer = Quotient(ONE, Product((Constant(2.0), e)))
        return Product((outer, da))
    raise TypeError(type(e).__name__)


@lru_cache(maxsize=65536)
def partial(e: Expr, s: SymbolId) -> Expr:
    """Exact partial derivative of ``e`` with respect to ``s``, simplified."""
    return simplify(_d(e, s))


@lru_cache(maxsize=65536)
def total_deriv(e: Expr) -> Expr:
    """Total derivative d/dtheta along a trajectory.

    Each state symbol q_{i,k} advances to q_{i,k+1}; observer time, alpha and
    parameters are constants.
    """
    terms = [_d(e, THETA_ID)]
    for sid in sorted(state_symbols(e)):
        dk = _d(e, sid)
        if dk != ZERO:
            terms.append(Product((dk, Symbol(state_id(sid.component, sid.order + 1)))))
    return simplify(Sum(tuple(terms)))


def total_deriv_n(e: Expr, k: int) -> Expr:
    if k < 0:
        raise ValueError(f"derivative count must be >= 0, got {k}")
    for _ in range(k):
        e = total_deriv(e)
    return e


# --- sampling --------------------------------------------------------------

_DEFAULT_RANGES = {
    "theta": (0.0, 0.9),
    "t": (1.0, 1.0),
    "alpha": (0.1, 1.0),
    "param": (0.5, 2.0),
    "state": (-2.0, 2.0),
}


@dataclass(frozen=True)
class SamplerConfig:
    """Where to draw random evaluation points.

    ``ranges`` overrides per symbol; ``kind_ranges`` overrides per symbol kind
    (``"theta"``, ``"t"``, ``"alpha"``, ``"param"``, ``"state"``). ``fixed``
    pins symbols to exact values. The defaults keep theta away from t.
    """

    n_points: int = 100
    seed: int = 12345
    ranges: Mapping[SymbolId, tuple[float, float]] = field(default_factory=dict)
    kind_ranges: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    fixed: Mapping[SymbolId, float] = field(default_factory=dict)

    def range_for(self, sid: SymbolId) -> tuple[float, float]:
        if sid in self.ranges:
            return self.ranges[sid]
        if sid.kind in self.kind_ranges:
            return self.kind_ranges[sid.kind]
        return _DEFAULT_RANGES[sid.kind]

    def points(self, symbols: Iterable[SymbolId]) -> list[dict[SymbolId, float]]:
        rng = np.random.default_rng(self.seed)
        syms = sorted(set(symbols) | set(self.fixed))
        out = []
        for _ in range(self.n_points):
            env = {}
            for sid in syms:
                if sid in self.fixed:
                    env[sid] = float(self.fixed[sid])
                else:
                    lo, hi = self.range_for(sid)
                    env[sid] = float(rng.uniform(lo, hi))
            out.append(env)
        return out


def sample_values(exprs: list[Expr], sampler: SamplerConfig) -> list[list[float] | None]:
    """Evaluate all expressions at each sample point; None marks a rejected point.

    Raises ConfigError when more than half the points are rejected.
    """
    symbols: set[SymbolId] = set()
    for e in exprs:
        symbols |= free_symbols(e)
    rows: list[list[float] | None] = []
    rejected = 0
    for env in sampler.points(symbols):
        try:
            vals = [eval_expr(e, env) for e in exprs]
            if not all(math.isfinite(v) for v in vals):
                raise SampleRejected("non-finite value")
            rows.append(vals)
        except (FalvaError, ArithmeticError):
            rejected += 1
            rows.append(None)
    if rejected * 2 > len(rows):
        raise ConfigError(f"{rejected} of {len(rows)} sample points rejected")
    return rows


def numerically_equivalent(e1: Expr, e2: Expr, sampler: SamplerConfig | None = None,
                           tol: float = 1e-10) -> bool:
    """True iff |e1 - e2| <= tol * (1 + max(|e1|, |e2|)) at every accepted sample."""
    sampler = sampler or SamplerConfig()
    for row in sample_values([e1, e2], sampler):
        if row is None:
            continue
        a, b = row
        if abs(a - b) > tol * (1.0 + max(abs(a), abs(b))):
            return False
    return True


def linear_coeffs_in(e: Expr, s: SymbolId, sampler: SamplerConfig | None = None,
                     tol: float = 1e-9) -> tuple[Expr, Expr]:
    """Split an expression affine in ``s`` as ``A*s + b``.

    Raises NonlinearInSymbol if the second derivative in ``s`` is nonzero at
    any sample point.
    """
    sampler = sampler or SamplerConfig()
    slope = partial(e, s)
    curvature = partial(slope, s)
    if curvature != ZERO:
        for row in sample_values([curvature], sampler):
            if row is not None and abs(row[0]) > tol:
                raise NonlinearInSymbol(f"expression is not affine in {s}")
    offset = simplify(substitute(e, {s: ZERO}))
    return slope, offset
