"""Floating-point side: special coefficients, ODE reduction, integration,
conservation drift and the weighted action integral."""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicHermiteSpline

from .core import (
    DerivedSystem,
    GeneratorSet,
    LagrangianProblem,
    SymbolicGauge,
    gauge_rate,
)
from .errors import (
    DomainError,
    MaxStepsExceeded,
    NonlinearInSymbol,
    NonlinearInTopDerivative,
    SingularLeadingCoefficient,
    StepUnderflow,
)
from .symexpr import (
    ZERO,
    Expr,
    SymbolId,
    compile_exprs,
    free_symbols,
    linear_coeffs_in,
    partial,
    sample_values,
    simplify,
    state_id,
    substitute,
    total_deriv,
)

# Lanczos approximation, g = 7, nine coefficients
_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma_fn(x: float) -> float:
    """Euler gamma function for x > 0 (Lanczos, g = 7, n = 9)."""
    if not x > 0:
        raise DomainError(f"gamma_fn needs x > 0, got {x!r}")
    if x < 0.5:
        # reflection keeps the series in its accurate range
        return math.pi / (math.sin(math.pi * x) * gamma_fn(1.0 - x))
    z = x - 1.0
    acc = _LANCZOS[0]
    for k in range(1, 9):
        acc += _LANCZOS[k] / (z + k)
    w = z + _LANCZOS_G + 0.5
    return math.sqrt(2 * math.pi) * w ** (z + 0.5) * math.exp(-w) * acc


def falling_product(i: int, alpha: float, start: int = 1) -> float:
    """prod_{p=start}^{i} (p - alpha); the empty product is 1."""
    if start not in (1, 2):
        raise ValueError(f"start must be 1 or 2, got {start}")
    if i < start - 1:
        raise ValueError(f"need i >= {start - 1}, got {i}")
    out = 1.0
    for p in range(start, i + 1):
        out *= p - alpha
    return out


# --- configuration --------------------------------------------------------


@dataclass(frozen=True)
class RK4Fixed:
    h: float = 1e-3

    def __post_init__(self) -> None:
        if not self.h > 0:
            raise ValueError("step h must be positive")


@dataclass(frozen=True)
class RK45Adaptive:
    """Runge-Kutta-Fehlberg 4(5); the fifth-order solution is propagated."""

    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    h_init: float = 1e-3
    h_min: float = 1e-12

    def __post_init__(self) -> None:
        if not (self.rel_tol > 0 and self.abs_tol > 0 and self.h_init > 0 and self.h_min > 0):
            raise ValueError("tolerances and step sizes must be positive")


Method = Union[RK4Fixed, RK45Adaptive]


@dataclass(frozen=True)
class IntegratorConfig:
    """``epsilon`` None means 1e-3 * (t - a)."""

    method: Method = field(default_factory=RK45Adaptive)
    epsilon: float | None = None
    max_steps: int = 1_000_000

    def cutoff(self, P: LagrangianProblem) -> float:
        eps = 1e-3 * (P.t - P.a) if self.epsilon is None else self.epsilon
        if not 0 < eps < P.t - P.a:
            raise ValueError(f"epsilon must lie in (0, t - a), got {eps}")
        return eps


# --- explicit first-order system -------------------------------------------


@dataclass
class ODESystem:
    """First-order form of the Euler-Lagrange equation.

    State layout: for each component c, orders 0..2m-1 at ``c*2m + k``,
    then the accumulated gauge term Lambda at index ``n*2m``. Monitors are
    evaluated on the extended vector ``[state, Lambda, q^(2m) per component]``.
    """

    problem: LagrangianProblem
    n_state: int
    rhs: Callable[[float, np.ndarray], np.ndarray]
    singular_at: float
    layout: dict[SymbolId, int]
    generators: GeneratorSet | None
    charge_symbolic: Expr | None
    el_fn: Callable
    dbr_fn: Callable
    charge_fn: Callable | None = None
    lambda_fn: Callable | None = None

    @property
    def order(self) -> int:
        return 2 * self.problem.m

    def state_labels(self) -> list[str]:
        return [f"q{c}_{k}" for c in range(self.problem.n) for k in range(self.order)]

    def extended(self, y: np.ndarray, dy: np.ndarray) -> np.ndarray:
        n, order = self.problem.n, self.order
        top = dy[: n * order].reshape(n, order)[:, -1]
        return np.concatenate([y, top])

    def compile_monitor(self, e: Expr) -> Callable:
        return compile_exprs([self.problem.bind(e)], self.layout)


def _extended_layout(n: int, m: int) -> dict[SymbolId, int]:
    order = 2 * m
    layout = {state_id(c, k): c * order + k for c in range(n) for k in range(order)}
    for c in range(n):
        layout[state_id(c, order)] = n * order + 1 + c
    return layout


def to_explicit_system(P: LagrangianProblem, D: DerivedSystem,
                       gen: GeneratorSet | None = None) -> ODESystem:
    """Solve the Euler-Lagrange residual for q^(2m) and add the Lambda channel."""
    n, m = P.n, P.m
    order = 2 * m
    gen = gen if gen is not None else D.generators
    tops = [state_id(c, order) for c in range(n)]
    sampler = P.sampler(n_points=50)
    residuals = [P.bind(r) for r in D.el_residual]

    A: list[list[Expr]] = []
    b: list[Expr] = []
    for r in residuals:
        row = []
        for s in tops:
            try:
                slope, _ = linear_coeffs_in(r, s, sampler)
            except NonlinearInSymbol as exc:
                raise NonlinearInTopDerivative(str(exc)) from exc
            row.append(slope)
        A.append(row)
        b.append(simplify(substitute(r, {s: ZERO for s in tops})))
    # cross terms q_c^(2m) q_d^(2m) are affine in each symbol separately
    cross = [partial(a, s) for row in A for a in row for s in tops]
    cross = [e for e in cross if e != ZERO]
    if cross:
        for vals in sample_values(cross, sampler):
            if vals is not None and max(abs(v) for v in vals) > 1e-9:
                raise NonlinearInTopDerivative("Euler-Lagrange residual is not affine in the top derivatives")

    if gen is None or isinstance(gen.gauge, SymbolicGauge):
        rate = ZERO
    else:
        rate = P.bind(gauge_rate(P, gen))

    layout = _extended_layout(n, m)
    A_fn = compile_exprs([a for row in A for a in row], layout)
    b_fn = compile_exprs(b, layout)
    rate_fn = compile_exprs([rate], layout)
    t_obs = P.t

    def rhs(theta: float, y: np.ndarray) -> np.ndarray:
        if theta >= t_obs:
            raise DomainError(f"theta={theta!r} reached the observer time t={t_obs!r}")
        a_vals = A_fn(theta, y)
        b_vals = b_fn(theta, y)
        if n == 1:
            if abs(a_vals[0]) <= 1e-12:
                raise SingularLeadingCoefficient(theta)
            top = np.array([-b_vals[0] / a_vals[0]])
        else:
            mat = np.asarray(a_vals).reshape(n, n)
            if abs(np.linalg.det(mat)) <= 1e-12:
                raise SingularLeadingCoefficient(theta)
            top = np.linalg.solve(mat, -np.asarray(b_vals))
        dy = np.empty_like(y)
        Y = y[: n * order].reshape(n, order)
        dY = dy[: n * order].reshape(n, order)
        dY[:, :-1] = Y[:, 1:]
        dY[:, -1] = top
        dy[n * order] = rate_fn(theta, y)[0]
        return dy

    charge_fn = lambda_fn = None
    charge = D.charge_symbolic if gen is D.generators else None
    if gen is not None and charge is None:
        from .core import noether_charge

        charge, _ = noether_charge(P, gen)
    if charge is not None:
        charge_fn = compile_exprs([P.bind(charge)], layout)
    if gen is not None and isinstance(gen.gauge, SymbolicGauge):
        lambda_fn = compile_exprs([P.bind(gen.gauge.expr)], layout)

    return ODESystem(
        problem=P,
        n_state=n * order + 1,
        rhs=rhs,
        singular_at=t_obs,
        layout=layout,
        generators=gen,
        charge_symbolic=charge,
        el_fn=compile_exprs(residuals, layout),
        dbr_fn=compile_exprs([P.bind(D.dbr_residual)], layout),
        charge_fn=charge_fn,
        lambda_fn=lambda_fn,
    )


# --- trajectories -----------------------------------------------------------


@dataclass
class Trajectory:
    """Samples at every accepted step.

    ``states`` has shape (N, n*2m); ``top`` holds q^(2m) per component from
    the equation of motion (None when loaded from a file without it).
    """

    theta: np.ndarray
    states: np.ndarray
    lam: np.ndarray
    charge: np.ndarray
    el_check: np.ndarray
    labels: list[str]
    top: np.ndarray | None = None
    dbr: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.theta)

    @property
    def samples(self):
        for k in range(len(self)):
            yield (self.theta[k], self.states[k], self.lam[k], self.charge[k], self.el_check[k])


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    estimated_error: float
    nodes_used: int


class _Recorder:
    def __init__(self, sys: ODESystem, charge_fn: Callable | None):
        self.sys = sys
        self.charge_fn = charge_fn
        self.rows: list[tuple] = []

    def record(self, theta: float, y: np.ndarray, dy: np.ndarray) -> None:
        sys = self.sys
        ext = sys.extended(y, dy)
        lam_idx = sys.problem.n * sys.order
        if sys.lambda_fn is not None:
            lam = sys.lambda_fn(theta, ext)[0]
        else:
            lam = y[lam_idx]
        charge = self.charge_fn(theta, ext)[0] - lam if self.charge_fn is not None else math.nan
        el = float(np.linalg.norm(sys.el_fn(theta, ext)))
        dbr = abs(sys.dbr_fn(theta, ext)[0])
        self.rows.append((theta, y[:lam_idx].copy(), lam, charge, el, ext[lam_idx + 1:].copy(), dbr))

    def trajectory(self) -> Trajectory:
        rows = self.rows
        return Trajectory(
            theta=np.array([r[0] for r in rows]),
            states=np.array([r[1] for r in rows]).reshape(len(rows), -1),
            lam=np.array([r[2] for r in rows]),
            charge=np.array([r[3] for r in rows]),
            el_check=np.array([r[4] for r in rows]),
            labels=self.sys.state_labels(),
            top=np.array([r[5] for r in rows]).reshape(len(rows), -1),
            dbr=np.array([r[6] for r in rows]),
        )


# Fehlberg tableau
_C = (0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2)
_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_B5 = np.array([16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55])
_B4 = np.array([25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0])


def _rk4_step(f, theta, y, h, k1):
    k2 = f(theta + h / 2, y + h / 2 * k1)
    k3 = f(theta + h / 2, y + h / 2 * k2)
    k4 = f(theta + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _rkf45_step(f, theta, y, h, k1):
    ks = [k1]
    for i in range(1, 6):
        yi = y + h * sum(a * k for a, k in zip(_A[i], ks))
        ks.append(f(theta + _C[i] * h, yi))
    K = np.array(ks)
    y5 = y + h * (_B5 @ K)
    y4 = y + h * (_B4 @ K)
    return y5, y5 - y4


def integrate(sys: ODESystem, init: Sequence[float] | np.ndarray,
              span: tuple[float, float] | None = None,
              cfg: IntegratorConfig | None = None,
              charge_expr: Expr | None = None) -> Trajectory:
    """Integrate from ``span[0]`` to ``span[1]``, recording every accepted step.

    ``init`` holds orders 0..2m-1 per component (shape (n, 2m) or flat).
    Lambda starts at 0. ``charge_expr`` replaces the symbolic charge; the
    gauge term is subtracted from it in the same way.
    """
    P = sys.problem
    cfg = cfg or IntegratorConfig()
    if span is None:
        span = (P.a, P.t - cfg.cutoff(P))
    lo, hi = float(span[0]), float(span[1])
    if not lo < hi:
        raise ValueError(f"empty integration span {span}")
    if hi >= sys.singular_at:
        raise ValueError(f"span end {hi} must stay below the observer time {sys.singular_at}")
    y0 = np.asarray(init, dtype=float).ravel()
    if y0.size != sys.n_state - 1:
        raise ValueError(f"initial state needs {sys.n_state - 1} values, got {y0.size}")
    y = np.concatenate([y0, [0.0]])

    charge_fn = sys.charge_fn if charge_expr is None else sys.compile_monitor(charge_expr)
    rec = _Recorder(sys, charge_fn)
    theta = lo
    dy = sys.rhs(theta, y)
    rec.record(theta, y, dy)
    method = cfg.method
    steps = 0

    if isinstance(method, RK4Fixed):
        n_steps = max(1, math.ceil((hi - lo) / method.h - 1e-9))
        if n_steps > cfg.max_steps:
            raise MaxStepsExceeded(f"{n_steps} steps needed, max_steps={cfg.max_steps}")
        for k in range(1, n_steps + 1):
            target = hi if k == n_steps else lo + k * method.h
            y = _rk4_step(sys.rhs, theta, y, target - theta, dy)
            theta = target
            dy = sys.rhs(theta, y)
            rec.record(theta, y, dy)
        return rec.trajectory()

    h = min(method.h_init, hi - lo)
    while theta < hi:
        if steps >= cfg.max_steps:
            raise MaxStepsExceeded(f"exceeded max_steps={cfg.max_steps} at theta={theta!r}")
        last = hi - theta <= h
        if last:
            h = hi - theta
        y_new, err = _rkf45_step(sys.rhs, theta, y, h, dy)
        scale = method.abs_tol + method.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        ratio = float(np.max(np.abs(err) / scale))
        steps += 1
        if ratio <= 1.0:
            theta = hi if last else theta + h
            y = y_new
            dy = sys.rhs(theta, y)
            rec.record(theta, y, dy)
        factor = 5.0 if ratio == 0 else min(5.0, max(0.2, 0.9 * ratio ** -0.2))
        h = h * factor
        if h < method.h_min and theta < hi and hi - theta > method.h_min:
            raise StepUnderflow(theta, h)
    return rec.trajectory()


def conservation_drift(traj: Trajectory) -> tuple[float, float]:
    """(max_k |C_k - C_0|, that divided by 1 + |C_0|)."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    c = np.asarray(traj.charge, dtype=float)
    abs_drift = float(np.max(np.abs(c - c[0])))
    return abs_drift, abs_drift / (1.0 + abs(float(c[0])))


# --- action -----------------------------------------------------------------


StateSampler = Callable[[float], Sequence[Sequence[float]]]


def _gl(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


def _panel_sum(g: Callable[[float], float], edges: np.ndarray, nodes: int) -> float:
    x, w = _gl(nodes)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        width = hi - lo
        total += width * sum(wk * g(lo + width * xk) for xk, wk in zip(x, w))
    return total


def action_value(P: LagrangianProblem, source: Trajectory | StateSampler | None = None,
                 nodes: int = 16, levels: int = 60) -> QuadratureResult:
    """(1/Gamma(alpha)) int_a^t L (t - theta)^(alpha - 1) dtheta.

    With s = (t - theta)^alpha the weight becomes ds/alpha and the integral
    is (1/Gamma(alpha + 1)) int_0^S L(t - s^(1/alpha)) ds, S = (t - a)^alpha,
    integrated by composite Gauss-Legendre; the error estimate comes from
    doubling the nodes per panel.

    ``source`` is a callable theta -> array (n, k>=m+1) of derivatives, a
    Trajectory, or None when L has no state dependence. For trajectories the
    panels follow the samples and the uncovered tail near t uses L frozen at
    the last sample.
    """
    alpha, t = P.alpha, P.t
    span = (t - P.a) ** alpha
    norm = 1.0 / gamma_fn(alpha + 1.0)
    stride = P.m + 1
    layout = {state_id(c, k): c * stride + k for c in range(P.n) for k in range(stride)}
    L_fn = compile_exprs([P.bind(P.L)], layout)

    def theta_of(s: float) -> float:
        return t - s ** (1.0 / alpha)

    if not isinstance(source, Trajectory):
        if source is None:
            if any(sid.is_state for sid in free_symbols(P.L)):
                raise ValueError("the Lagrangian depends on the state; pass a trajectory or sampler")
            zeros = np.zeros(P.n * stride)

            def g(s: float) -> float:
                return L_fn(theta_of(s), zeros)[0]
        else:
            def g(s: float) -> float:
                th = theta_of(s)
                vals = np.asarray(source(th), dtype=float).reshape(P.n, -1)[:, :stride]
                return L_fn(th, vals.ravel())[0]

        # geometric grading toward s = 0, where s^(1/alpha) is not smooth
        edges = np.concatenate([[0.0], span * 0.5 ** np.arange(levels, -1, -1)])
        coarse = _panel_sum(g, edges, nodes)
        fine = _panel_sum(g, edges, 2 * nodes)
        used = (len(edges) - 1) * 3 * nodes
        return QuadratureResult(norm * fine, norm * abs(fine - coarse), used)

    traj = source
    if not math.isclose(traj.theta[0], P.a, abs_tol=1e-12 * max(1.0, abs(P.a))):
        raise ValueError(f"trajectory starts at {traj.theta[0]}, expected a={P.a}")
    order = 2 * P.m
    Y = traj.states.reshape(len(traj), P.n, order)
    dY = np.empty_like(Y)
    dY[:, :, :-1] = Y[:, :, 1:]
    if traj.top is not None:
        dY[:, :, -1] = traj.top.reshape(len(traj), P.n)
    else:
        dY[:, :, -1] = np.gradient(Y[:, :, -1], traj.theta, axis=0, edge_order=2)
    spline = CubicHermiteSpline(traj.theta, Y[:, :, :stride].reshape(len(traj), -1),
                                dY[:, :, :stride].reshape(len(traj), -1))

    def g_traj(s: float) -> float:
        th = theta_of(s)
        return L_fn(th, spline(th))[0]

    theta_end = float(traj.theta[-1])
    s_end = (t - theta_end) ** alpha
    edges = np.sort((t - traj.theta) ** alpha)
    coarse = _panel_sum(g_traj, edges, nodes // 4 or 1)
    fine = _panel_sum(g_traj, edges, nodes // 2 or 2)
    used = (len(edges) - 1) * (nodes // 4 + nodes // 2)

    tail_value = 0.0
    tail_error = 0.0
    if s_end > 0:
        ext = np.concatenate([Y[-1].ravel(), [0.0], dY[-1, :, -1]])
        full_layout = _extended_layout(P.n, P.m)
        L_end = compile_exprs([P.bind(P.L)], full_layout)(theta_end, ext)[0]
        rate = compile_exprs([P.bind(total_deriv(P.L))], full_layout)(theta_end, ext)[0]
        tail_value = L_end * s_end
        # first-order bound on how far L moves over the last t - theta_end
        tail_error = abs(rate) * (t - theta_end) * s_end
        used += 1
    value = norm * (fine + tail_value)
    return QuadratureResult(value, norm * (abs(fine - coarse) + tail_error), used)
