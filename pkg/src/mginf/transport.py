"""Operators on paths of generalized measures and the transport solver.

A path t -> X_t is represented only through its pairing rule
``(t, phi) -> <X_t, phi>``; nothing is discretised in space. Time integrals
are computed by adaptive quadrature on the pairing.

The integrated transport equation for (K, g) is

    <X_t, phi> = <K, phi> - int_0^t <X_s, phi'> ds + <g_t, phi>

and its unique solution is X_t = tau_t K + g_t + N(g)_t.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from math import inf
from typing import Callable, Optional

import numpy as np

from .functions import NotDifferentiableError, TestFunction
from .laws import ServiceLaw
from .measure import PointMeasure, integrate as pair_measure
from .quadrature import integrate

TIME_TOL = 1e-10

Pairing = Callable[[float, TestFunction], float]


@dataclass(frozen=True)
class MeasurePathFn:
    pairing: Pairing
    horizon: float = inf
    derivative_pairing: Optional[Pairing] = None
    name: str = "X"

    def __call__(self, t: float, phi: TestFunction) -> float:
        return self.pairing(t, phi)

    def __add__(self, other: "MeasurePathFn") -> "MeasurePathFn":
        p, q = self.pairing, other.pairing
        return MeasurePathFn(lambda t, phi: p(t, phi) + q(t, phi),
                             min(self.horizon, other.horizon), None, f"{self.name}+{other.name}")

    def scale(self, a: float) -> "MeasurePathFn":
        p = self.pairing
        return MeasurePathFn(lambda t, phi: a * p(t, phi), self.horizon, None, f"{a:g}{self.name}")


def _with_derivative(pairing: Pairing, **kw) -> MeasurePathFn:
    # <X_t', phi> = -<X_t, phi'>
    return MeasurePathFn(pairing, derivative_pairing=lambda t, phi: -pairing(t, phi.prime()), **kw)


def zero_path() -> MeasurePathFn:
    return _with_derivative(lambda t, phi: 0.0, name="0")


def constant_path(K) -> MeasurePathFn:
    """X_t = K for every t (K a PointMeasure or a path read at time 0)."""
    pk = _static_pairing(K)
    return _with_derivative(lambda t, phi: pk(phi), name="K")


def measure_path(fn: Callable[[float], PointMeasure], horizon: float = inf) -> MeasurePathFn:
    return _with_derivative(lambda t, phi: pair_measure(fn(t), phi), horizon=horizon, name="mu")


def law_ramp(law: ServiceLaw, rate: float = 1.0) -> MeasurePathFn:
    """g_t = rate * t * law."""
    return _with_derivative(lambda t, phi: rate * t * law.expect(phi) if t else 0.0, name="ramp")


def atom_family(positions, coefficients) -> MeasurePathFn:
    """g_t = sum_k c_k(t) delta_{a_k} with c_k given as power-series coefficients in t."""
    a = np.asarray(positions, dtype=float)
    c = np.asarray(coefficients, dtype=float)  # shape (len(a), degree + 1)

    def pairing(t, phi):
        wt = np.polynomial.polynomial.polyval(t, c.T)
        return float(np.dot(wt, phi(a)))
    return _with_derivative(pairing, name="atoms")


def _static_pairing(K) -> Callable[[TestFunction], float]:
    if K is None or (isinstance(K, (int, float)) and K == 0):
        return lambda phi: 0.0
    if isinstance(K, PointMeasure):
        return lambda phi: pair_measure(K, phi)
    if isinstance(K, MeasurePathFn):
        return lambda phi: K.pairing(0.0, phi)
    if callable(K):
        return K
    raise TypeError(f"cannot pair with {type(K).__name__}")


def op_G(X: MeasurePathFn) -> MeasurePathFn:
    """G(X)_t = tau_t X_t."""
    p = X.pairing
    return _with_derivative(lambda t, phi: p(t, phi.shift(t)), horizon=X.horizon, name=f"G({X.name})")


def op_H(X: MeasurePathFn, tol: float = TIME_TOL) -> MeasurePathFn:
    """H(X)_t = int_0^t X_s ds."""
    p = X.pairing
    return _with_derivative(lambda t, phi: integrate(lambda s: p(s, phi), 0.0, t, tol),
                            horizon=X.horizon, name=f"H({X.name})")


def op_N(g: MeasurePathFn, tol: float = TIME_TOL) -> MeasurePathFn:
    """<N(g)_t, phi> = -int_0^t <g_s, tau_{t-s} phi'> ds."""
    p = g.pairing

    def pairing(t, phi):
        if phi.deriv is None:
            raise NotDifferentiableError(f"N(g) needs a smooth test function, got {phi.kind}")
        if t == 0:
            return 0.0
        dphi = phi.prime()
        return -integrate(lambda s: p(s, dphi.shift(t - s)), 0.0, t, tol)
    return _with_derivative(pairing, horizon=g.horizon, name=f"N({g.name})")


def transport_solution(K, g: MeasurePathFn | None = None, tol: float = TIME_TOL) -> MeasurePathFn:
    """The path t -> tau_t K + g_t + N(g)_t."""
    pk = _static_pairing(K)
    if g is None:
        return _with_derivative(lambda t, phi: pk(phi.shift(t)), name="sol")
    pg = g.pairing
    pn = op_N(g, tol).pairing

    def pairing(t, phi):
        return pk(phi.shift(t)) + pg(t, phi) + pn(t, phi)
    return _with_derivative(pairing, horizon=g.horizon, name="sol")


def solve_transport(K, g: MeasurePathFn | None, t: float, phi: TestFunction,
                    tol: float = TIME_TOL) -> float:
    if g is not None and phi.deriv is None:
        raise NotDifferentiableError("the transport solver needs a smooth test function")
    return transport_solution(K, g, tol).pairing(t, phi)


def transport_residual(X: MeasurePathFn, K, g: MeasurePathFn | None, t: float,
                       phi: TestFunction, tol: float = TIME_TOL) -> float:
    """<X_t,phi> - <K,phi> + int_0^t <X_s,phi'> ds - <g_t,phi>; zero iff X solves the equation at (t, phi)."""
    if phi.deriv is None:
        raise NotDifferentiableError("the transport residual needs a smooth test function")
    pk = _static_pairing(K)
    dphi = phi.prime()
    drift = integrate(lambda s: X.pairing(s, dphi), 0.0, t, tol) if t else 0.0
    gt = g.pairing(t, phi) if g is not None else 0.0
    return X.pairing(t, phi) - pk(phi) + drift - gt


def residual_report_csv(rows) -> str:
    """rows of (t, functional_id, residual) as CSV."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["t", "functional_id", "residual"])
    for t, fid, r in rows:
        wr.writerow([f"{t:.9g}", fid, f"{r:.9g}"])
    return buf.getvalue()
