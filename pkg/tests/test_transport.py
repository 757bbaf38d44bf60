import math

import numpy as np
import pytest
from scipy import integrate as spi

from mginf.fluid import FluidModel, fluid_pairing
from mginf.functions import NotDifferentiableError, gaussian_bump, hermite_weighted, indicator, sigmoid
from mginf.laws import Exponential
from mginf.measure import PointMeasure
from mginf.transport import (atom_family, constant_path, law_ramp, op_G, op_H, op_N, residual_report_csv,
                             solve_transport, transport_residual, transport_solution, zero_path)

PHIS = (gaussian_bump(1.0, 0.5), sigmoid(0.5, 0.7), hermite_weighted([0.2, 1.0, 0.5]))
TIMES = (0.25, 1.0, 2.0, 3.5, 5.0)


def exp_pair(f):
    return spi.quad(lambda x: f(x) * math.exp(-x), 0, np.inf, epsabs=1e-13, epsrel=1e-13, limit=200)[0]


def test_G_examples(exp1):
    phi = PHIS[0]
    X = constant_path(PointMeasure.dirac(0.0))
    assert op_G(X)(1.3, phi) == pytest.approx(float(phi(-1.3)), abs=1e-15)
    assert op_G(X)(0.0, phi) == X(0.0, phi)
    ramp = law_ramp(exp1)
    for t in (0.5, 2.0):
        want = t * exp_pair(lambda x: float(phi(x - t)))
        assert op_G(ramp)(t, phi) == pytest.approx(want, abs=1e-9)


def test_G_semigroup(exp1):
    ramp = law_ramp(exp1, 2.0)
    phi = PHIS[1]
    for t, s in ((0.5, 1.0), (2.0, 0.3)):
        assert op_G(ramp)(t, phi.shift(s)) == pytest.approx(ramp(t, phi.shift(t + s)), abs=1e-13)


def test_H_examples(exp1):
    phi = PHIS[2]
    X = constant_path(PointMeasure.dirac(0.0))
    assert op_H(X)(2.0, phi) == pytest.approx(2.0 * float(phi(0.0)), abs=1e-12)
    assert op_H(X)(0.0, phi) == 0.0
    for t in (0.5, 3.0):
        assert op_H(law_ramp(exp1))(t, phi) == pytest.approx(t * t / 2 * exp1.expect(phi), abs=1e-9)


def test_N_examples(exp1):
    phi = PHIS[0]
    assert op_N(zero_path())(1.0, phi) == 0.0
    assert op_N(law_ramp(exp1))(0.0, phi) == 0.0
    # integration by parts: <N(g)_t, phi> = int_0^t <alpha, tau_u phi> du - t <alpha, phi>
    for t in (0.5, 1.0, 3.0):
        ibp = spi.quad(lambda u: exp_pair(lambda x: float(phi(x - u))), 0, t, epsabs=1e-12)[0] - t * exp_pair(
            lambda x: float(phi(x)))
        assert op_N(law_ramp(exp1))(t, phi) == pytest.approx(ibp, abs=1e-7)


def test_N_rejects_indicator(exp1):
    with pytest.raises(NotDifferentiableError):
        op_N(law_ramp(exp1))(1.0, indicator(0, 1))
    with pytest.raises(NotDifferentiableError):
        transport_residual(zero_path(), None, None, 1.0, indicator(0, 1))


def test_solve_examples(exp1):
    phi = PHIS[1]
    assert solve_transport(PointMeasure.dirac(2.0), None, 0.7, phi) == pytest.approx(float(phi(1.3)), abs=1e-15)
    bump0 = gaussian_bump(0.0, 0.4)
    assert solve_transport(PointMeasure.dirac(1.0), None, 1.0, bump0) == pytest.approx(1.0, abs=1e-15)
    m = FluidModel(1.0, exp1)
    for t in (0.5, 2.0):
        for p in PHIS:
            assert solve_transport(None, law_ramp(exp1), t, p) == pytest.approx(fluid_pairing(m, t, p), abs=1e-7)


@pytest.mark.parametrize("case", ["K", "g", "Kg"])
def test_solution_residual(exp1, case):
    K = PointMeasure.dirac(1.0) if "K" in case else None
    g = law_ramp(exp1, 1.0) if "g" in case else None
    X = transport_solution(K, g)
    for t in TIMES:
        for phi in PHIS:
            assert abs(transport_residual(X, K, g, t, phi)) <= 1e-7


def test_non_solution_is_detected():
    K = PointMeasure.dirac(1.0)
    X = constant_path(K)
    phi = PHIS[1]
    r = transport_residual(X, K, None, 1.0, phi)
    assert r == pytest.approx(1.0 * float(phi.deriv(1.0)), abs=1e-12)
    assert abs(r) > 1e-3
    assert transport_residual(X, K, None, 0.0, phi) == 0.0


def test_random_atom_families():
    rng = np.random.default_rng(4)
    for _ in range(5):
        pos = rng.uniform(-1, 3, 3)
        coef = rng.normal(size=(3, 3))
        coef[:, 0] = 0.0  # g_0 = 0
        g = atom_family(pos, coef)
        K = PointMeasure(rng.uniform(0, 2, 2), rng.uniform(0.1, 1, 2))
        X = transport_solution(K, g)
        phi = gaussian_bump(float(rng.uniform(-1, 2)), float(rng.uniform(0.4, 1.5)))
        for t in (0.3, 1.7, 5.0):
            assert abs(transport_residual(X, K, g, t, phi)) <= 1e-6


def test_operators_are_linear(exp1):
    a, b = law_ramp(exp1, 1.0), atom_family([0.5, 2.0], [[0, 1.0], [0, -0.5]])
    phi = PHIS[0]
    for op in (op_G, op_H, op_N):
        lhs = op(a.scale(2.0) + b.scale(-3.0))(1.2, phi)
        rhs = 2.0 * op(a)(1.2, phi) - 3.0 * op(b)(1.2, phi)
        assert lhs == pytest.approx(rhs, abs=1e-9)


def test_derivative_pairing(exp1):
    X = law_ramp(exp1)
    phi = PHIS[1]
    assert X.derivative_pairing(1.0, phi) == pytest.approx(-X(1.0, phi.prime()), abs=1e-15)
    for p in PHIS:
        assert X(1.0, p.scale(2.0) + PHIS[0]) == pytest.approx(2 * X(1.0, p) + X(1.0, PHIS[0]), abs=1e-10)


def test_residual_csv():
    text = residual_report_csv([(1.0, "bump", 1e-16)])
    assert text.splitlines() == ["t,functional_id,residual", "1,bump,1e-16"]
