import dataclasses
import math

import numpy as np
import pytest
from conftest import PROBLEMS, section32_lagrangian
from scipy.special import beta as beta_fn
from scipy.special import gamma as sp_gamma

from falva.core import ForceRateGauge, GeneratorSet, LagrangianProblem, derive
from falva.errors import (
    DomainError,
    MaxStepsExceeded,
    NonlinearInTopDerivative,
    SingularLeadingCoefficient,
    StepUnderflow,
)
from falva.numerics import (
    IntegratorConfig,
    RK4Fixed,
    RK45Adaptive,
    Trajectory,
    action_value,
    conservation_drift,
    falling_product,
    gamma_fn,
    integrate,
    to_explicit_system,
)
from falva.problemio import load_problem
from falva.symexpr import THETA, ZERO, const, exp, param, q


def free_particle(alpha=0.5):
    P = LagrangianProblem(m=1, n=1, alpha=alpha, a=0.0, t=1.0, L=0.5 * q(0, 1) ** 2)
    gen = GeneratorSet(tau=const(1), xi=(ZERO,), gauge=ForceRateGauge())
    return P, gen, to_explicit_system(P, derive(P, gen))


def section32(alpha=0.75):
    P = LagrangianProblem(m=2, n=1, alpha=alpha, a=0.0, t=1.0, L=section32_lagrangian(),
                          params={"aL": 1.0, "bL": 1.0})
    gen = GeneratorSet(tau=const(1), xi=(ZERO,), gauge=ForceRateGauge())
    return P, gen, to_explicit_system(P, derive(P, gen))


def fixed(h, epsilon=None):
    return IntegratorConfig(method=RK4Fixed(h), epsilon=epsilon)


# --- special functions ------------------------------------------------------


def test_gamma_examples():
    assert gamma_fn(1.0) == pytest.approx(1.0, rel=1e-14)
    assert gamma_fn(5.0) == pytest.approx(24.0, rel=1e-13)
    assert gamma_fn(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-13)


def test_gamma_against_reference_on_range():
    for x in np.linspace(0.1, 30.0, 600):
        assert gamma_fn(float(x)) == pytest.approx(math.gamma(float(x)), rel=1e-12)


def test_gamma_recurrence():
    for x in np.linspace(0.1, 10.0, 200):
        x = float(x)
        assert gamma_fn(x + 1) == pytest.approx(x * gamma_fn(x), rel=1e-12)


@pytest.mark.parametrize("x", [0.0, -1.0, -2.5])
def test_gamma_domain(x):
    with pytest.raises(DomainError):
        gamma_fn(x)


def test_falling_product_examples():
    assert falling_product(1, 0.3, 1) == pytest.approx(0.7)
    assert all(falling_product(i, 1.0, 1) == 0.0 for i in range(1, 7))
    assert falling_product(2, 0.5, 1) == pytest.approx(0.75)
    assert falling_product(1, 0.5, 2) == 1.0


def test_falling_product_gamma_identity():
    for alpha in np.arange(0.1, 0.95, 0.1):
        for i in range(1, 7):
            lhs = falling_product(i, float(alpha), 1) * gamma_fn(1 - float(alpha))
            assert lhs == pytest.approx(gamma_fn(i - float(alpha) + 1), rel=1e-10)
            lhs2 = falling_product(i, float(alpha), 2) * gamma_fn(2 - float(alpha))
            assert lhs2 == pytest.approx(gamma_fn(i - float(alpha) + 1), rel=1e-10)


# --- explicit system ------------------------------------------------------------


def test_explicit_top_derivative_second_order():
    P, _, sys = section32(alpha=0.6)
    y = np.array([0.4, -0.3, 0.8, 1.1, 0.0])
    theta, al = 0.35, 0.6
    g = 1.0 - theta
    expected = (-y[0] + (1 - al) / g * y[1] + (1 - (1 - al) * (2 - al) / g ** 2) * y[2]
                - 2 * (1 - al) / g * y[3])
    dy = sys.rhs(theta, y)
    assert dy[3] == pytest.approx(expected, rel=1e-13)
    np.testing.assert_array_equal(dy[:3], y[1:4])


def test_explicit_top_derivative_free_particle():
    _, _, sys = free_particle()
    dy = sys.rhs(0.2, np.array([0.0, 1.5, 0.0]))
    assert dy[1] == pytest.approx(-0.5 / 0.8 * 1.5, rel=1e-14)
    # force-rate gauge accumulates F q' = (1 - alpha)/(t - theta) q'^2
    assert dy[2] == pytest.approx(0.5 / 0.8 * 1.5 ** 2, rel=1e-14)


def test_rhs_refuses_observer_time():
    _, _, sys = free_particle()
    with pytest.raises(DomainError):
        sys.rhs(1.0, np.zeros(3))


def test_non_affine_residual_rejected():
    P = LagrangianProblem(m=1, n=1, alpha=0.5, a=0.0, t=1.0, L=exp(q(0, 1)))
    D = derive(P)
    assert to_explicit_system(P, D) is not None
    bad = dataclasses.replace(D, el_residual=[exp(q(0, 2))])
    with pytest.raises(NonlinearInTopDerivative):
        to_explicit_system(P, bad)


def test_singular_leading_coefficient():
    P = LagrangianProblem(m=1, n=1, alpha=0.5, a=0.0, t=1.0, L=q(0, 1) ** 3 / 6)
    sys = to_explicit_system(P, derive(P))
    with pytest.raises(SingularLeadingCoefficient) as info:
        sys.rhs(0.0, np.array([0.0, 0.0, 0.0]))
    assert info.value.theta == 0.0


# --- integration ---------------------------------------------------------------


def test_free_particle_matches_closed_form():
    P, _, sys = free_particle()
    cfg = IntegratorConfig(RK45Adaptive(rel_tol=1e-10, abs_tol=1e-12), epsilon=0.05)
    tr = integrate(sys, [0.0, 1.0], cfg=cfg)
    g = 1.0 - tr.theta
    assert tr.theta[0] == 0.0 and tr.theta[-1] == pytest.approx(0.95)
    assert np.all(np.diff(tr.theta) > 0)
    assert np.max(np.abs(tr.states[:, 1] - np.sqrt(g))) <= 1e-6
    assert np.max(np.abs(tr.states[:, 0] - (2 / 3) * (1 - g ** 1.5))) <= 1e-6
    assert tr.lam[0] == 0.0
    assert conservation_drift(tr)[1] <= 1e-7
    assert np.max(tr.el_check) <= 1e-6


def test_rk4_convergence_order():
    _, _, sys = free_particle()
    errs = []
    for h in (0.1, 0.05, 0.025):
        tr = integrate(sys, [0.0, 1.0], span=(0.0, 0.5), cfg=fixed(h))
        errs.append(np.max(np.abs(tr.states[:, 1] - np.sqrt(1.0 - tr.theta))))
    for coarse, fine in zip(errs, errs[1:]):
        assert 12 <= coarse / fine <= 20


def test_rk4_order_against_reference_run():
    _, _, sys = section32(alpha=0.75)
    init = [1.0, 0.0, 0.0, 0.0]
    ref = integrate(sys, init, span=(0.0, 0.5), cfg=fixed(1e-4))
    grid = {round(th, 9): y for th, y in zip(ref.theta, ref.states)}

    def err(h):
        tr = integrate(sys, init, span=(0.0, 0.5), cfg=fixed(h))
        return max(np.max(np.abs(y - grid[round(th, 9)])) for th, y in zip(tr.theta, tr.states))

    ratio = err(0.02) / err(0.01)
    assert 12 <= ratio <= 20


def test_shift_chain_consistency():
    _, _, sys = section32(alpha=0.75)
    h = 1e-3
    tr = integrate(sys, [1.0, 0.0, 0.0, 0.0], span=(0.0, 0.5), cfg=fixed(h))
    Y = np.column_stack([tr.states, tr.top])
    fd = (Y[2:, :-1] - Y[:-2, :-1]) / (2 * h)
    assert np.max(np.abs(fd - Y[1:-1, 1:])) <= 10 * h ** 2


def test_rk45_accepts_and_records_every_step():
    _, _, sys = section32()
    cfg = IntegratorConfig(RK45Adaptive(rel_tol=1e-10, abs_tol=1e-12), epsilon=0.05)
    tr = integrate(sys, [1.0, 0.0, 0.0, 0.0], cfg=cfg)
    assert len(tr) > 20
    assert tr.theta[-1] == pytest.approx(0.95)
    assert tr.states.shape == (len(tr), 4) and tr.top.shape == (len(tr), 1)
    assert np.max(tr.el_check) <= 1e-6 and np.max(tr.dbr) <= 1e-6
    assert len(list(tr.samples)) == len(tr)


def test_classical_limit_run():
    _, _, sys = section32(alpha=1.0)
    tr = integrate(sys, [1.0, 0.0, 0.0, 0.0], span=(0.0, 1.0 - 1e-9), cfg=fixed(1e-3))
    assert np.all(tr.lam == 0.0)
    assert conservation_drift(tr)[1] <= 1e-8


def test_conservation_contract_vector_problem():
    bundle = load_problem(PROBLEMS / "planar_oscillator.json")
    P, gen = bundle.problem, bundle.generators
    sys = to_explicit_system(P, derive(P, gen))
    tr = integrate(sys, bundle.initial, cfg=bundle.integration)
    assert conservation_drift(tr)[1] <= 1e-8
    assert np.max(tr.el_check) <= 1e-6


def test_step_underflow_near_observer_time():
    _, _, sys = free_particle()
    cfg = IntegratorConfig(RK45Adaptive(rel_tol=1e-12, abs_tol=1e-14, h_min=1e-4), epsilon=1e-9)
    with pytest.raises(StepUnderflow) as info:
        integrate(sys, [0.0, 1.0], cfg=cfg)
    assert info.value.theta < 1.0


def test_max_steps():
    _, _, sys = free_particle()
    with pytest.raises(MaxStepsExceeded):
        integrate(sys, [0.0, 1.0], span=(0.0, 0.5), cfg=IntegratorConfig(RK4Fixed(1e-3), max_steps=10))


def test_integrate_argument_checks():
    _, _, sys = free_particle()
    with pytest.raises(ValueError):
        integrate(sys, [0.0, 1.0, 2.0], span=(0.0, 0.5))
    with pytest.raises(ValueError):
        integrate(sys, [0.0, 1.0], span=(0.0, 1.0))
    with pytest.raises(ValueError):
        IntegratorConfig(epsilon=2.0).cutoff(sys.problem)


# --- drift ---------------------------------------------------------------------------


def _with_charge(values):
    k = len(values)
    z = np.zeros(k)
    return Trajectory(theta=np.arange(k, dtype=float), states=z.reshape(k, 1), lam=z,
                      charge=np.asarray(values, dtype=float), el_check=z, labels=["q0_0"])


def test_drift_examples():
    assert conservation_drift(_with_charge([2.5, 2.5, 2.5])) == (0.0, 0.0)
    abs_d, rel_d = conservation_drift(_with_charge([1.0, 1.0 + 1e-9]))
    assert abs_d == pytest.approx(1e-9, rel=1e-6)
    assert rel_d == pytest.approx(5e-10, rel=1e-6)
    with pytest.raises(ValueError):
        conservation_drift(_with_charge([]))


# --- action ------------------------------------------------------------------------


def const_problem(alpha, value=1.0, a=0.0, t=1.0):
    return LagrangianProblem(m=1, n=1, alpha=alpha, a=a, t=t, L=const(value))


def test_action_examples():
    r = action_value(const_problem(0.5))
    assert r.value == pytest.approx(2 / math.sqrt(math.pi), rel=1e-12)
    assert r.estimated_error >= 0 and r.nodes_used > 0
    assert action_value(const_problem(1.0, value=2.0, t=3.0)).value == pytest.approx(6.0, rel=1e-13)
    assert action_value(const_problem(0.25)).value == pytest.approx(1 / math.gamma(1.25), rel=1e-12)


def _beta_oracle(coeffs, alpha, a, t):
    """(1/Gamma(alpha)) int_a^t sum c_k theta^k (t - theta)^(alpha - 1), via u = theta - a."""
    total = 0.0
    for k, ck in enumerate(coeffs):
        for j in range(k + 1):
            w = math.comb(k, j) * a ** (k - j)
            total += ck * w * (t - a) ** (j + alpha) * beta_fn(j + 1, alpha)
    return total / sp_gamma(alpha)


@pytest.mark.parametrize("alpha", [0.1, 0.3, 0.5, 0.75, 1.0])
@pytest.mark.parametrize("a,t", [(0.0, 1.0), (0.3, 2.0)])
def test_action_exact_for_polynomials(alpha, a, t):
    rng = np.random.default_rng(int(alpha * 100) + int(10 * a))
    coeffs = rng.uniform(-1, 1, size=11)
    L = sum((const(float(ck)) * THETA ** k for k, ck in enumerate(coeffs)), ZERO)
    P = LagrangianProblem(m=1, n=1, alpha=alpha, a=a, t=t, L=L)
    expected = _beta_oracle(coeffs, alpha, a, t)
    assert abs(action_value(P).value - expected) <= 1e-12 * max(1.0, abs(expected))


def test_action_from_sampler_matches_closed_form():
    # q = theta^2 so L = q'^2/2 = 2 theta^2
    P = LagrangianProblem(m=1, n=1, alpha=0.5, a=0.0, t=1.0, L=0.5 * q(0, 1) ** 2)
    r = action_value(P, lambda th: [[th ** 2, 2 * th]])
    assert r.value == pytest.approx(_beta_oracle([0, 0, 2.0], 0.5, 0.0, 1.0), rel=1e-12)


def test_action_from_trajectory():
    P, _, sys = free_particle(alpha=0.5)
    cfg = IntegratorConfig(RK45Adaptive(rel_tol=1e-11, abs_tol=1e-13), epsilon=1e-6)
    tr = integrate(sys, [0.0, 1.0], cfg=cfg)
    # L = (1 - theta)/2 on the exact solution
    expected = _beta_oracle([0.5, -0.5], 0.5, 0.0, 1.0)
    r = action_value(P, tr)
    assert r.value == pytest.approx(expected, rel=1e-6)
    assert r.estimated_error < 1e-4


def test_action_needs_a_source_for_state_lagrangians():
    P, _, _ = free_particle()
    with pytest.raises(ValueError):
        action_value(P)


def test_parameterised_lagrangian_action():
    P = LagrangianProblem(m=1, n=1, alpha=1.0, a=0.0, t=2.0, L=param("k") * THETA, params={"k": 3.0})
    assert action_value(P).value == pytest.approx(6.0, rel=1e-13)
