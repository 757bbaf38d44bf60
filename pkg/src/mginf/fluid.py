"""Deterministic fluid limit and its performance curves.

    <mu*_t, phi> = <mu*_0, tau_t phi> + lam int_0^t <alpha, tau_s phi> ds

Indicator-type functionals (congestion, served, workload, range counts)
are read off closed forms in the law's partial moments; they never go
through derivative-based machinery.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from math import isinf

import numpy as np

from .functions import TestFunction
from .laws import ServiceLaw
from .measure import PointMeasure, integrate as pair_measure
from .quadrature import integrate

FLUID_TOL = 1e-10


@dataclass(frozen=True)
class InitialLaw:
    """An analytic initial profile: ``mass`` times a law on (0, inf)."""

    law: ServiceLaw
    mass: float = 1.0


@dataclass(frozen=True)
class FluidModel:
    lam: float
    law: ServiceLaw
    initial: PointMeasure | InitialLaw = field(default_factory=PointMeasure.empty)

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if isinstance(self.initial, PointMeasure) and len(self.initial):
            pos = self.initial.positions
            if not np.isfinite(np.dot(self.initial.weights, np.maximum(pos, 0.0))):
                raise ValueError("initial profile needs a finite first moment")

    @property
    def nonatomic_initial(self) -> bool:
        if isinstance(self.initial, InitialLaw):
            return self.initial.law.nonatomic
        return len(self.initial) == 0

    @property
    def initial_mass(self) -> float:
        if isinstance(self.initial, InitialLaw):
            return self.initial.mass
        return self.initial.total_weight

    # pieces of the initial profile ------------------------------------------
    def _init_pair(self, phi) -> float:
        if isinstance(self.initial, InitialLaw):
            return self.initial.mass * self.initial.law.expect(phi)
        return pair_measure(self.initial, phi)

    def _init_partial(self, k: int, s: float) -> float:
        """int (x - s)_+^k dmu0, k = 0 meaning mu0((s, inf))."""
        if isinstance(self.initial, InitialLaw):
            return self.initial.mass * float(self.initial.law.partial_moment(k, s))
        a, w = self.initial.positions, self.initial.weights
        sel = a > s
        if k == 0:
            return float(np.sum(w[sel]))
        return float(np.dot(w[sel], (a[sel] - s) ** k))


def fluid_pairing(m: FluidModel, t: float, phi: TestFunction, tol: float = FLUID_TOL) -> float:
    if t < 0:
        raise ValueError("t must be nonnegative")
    first = m._init_pair(phi.shift(t))
    if t == 0 or m.lam == 0:
        return first
    law = m.law
    return first + m.lam * integrate(lambda s: law.expect(phi.shift(s)), 0.0, t, tol)


def fluid_congestion(m: FluidModel, t: float) -> float:
    """mu0((t, inf)) + lam int_0^t tail(s) ds."""
    return m._init_partial(0, t) + m.lam * float(m.law.integrated_tail(t))


def fluid_service(m: FluidModel, t: float) -> float:
    """mu0((-inf, t]) + lam int_0^t cdf(s) ds."""
    init = m.initial_mass - m._init_partial(0, t)
    return init + m.lam * (t - float(m.law.integrated_tail(t)))


def fluid_workload(m: FluidModel, t: float) -> float:
    """int_t^inf (x - t) dmu0 + lam int_0^t tail_excess(s) ds."""
    return m._init_partial(1, t) + m.lam * float(m.law.integrated_partial_moment(1, 0.0, t))


def _tail_integral(law: ServiceLaw, x: float, t: float) -> float:
    # int_0^t P(sigma > x + s) ds
    if isinf(x):
        return t if x < 0 else 0.0
    return float(law.tail_excess(x) - law.tail_excess(x + t))


def fluid_range_count(m: FluidModel, x: float, y: float, t: float, closure=(False, False)) -> float:
    """Fluid mass with residual service in the interval from x to y at time t."""
    if not x < y:
        raise ValueError(f"need x < y, got ({x}, {y})")
    init = _init_range(m, x + t, y + t, closure)
    arr = _tail_integral(m.law, x, t) - _tail_integral(m.law, y, t)
    return init + m.lam * arr


def _init_range(m: FluidModel, lo: float, hi: float, closure) -> float:
    if isinstance(m.initial, InitialLaw):
        law, mass = m.initial.law, m.initial.mass
        up = 1.0 if isinf(lo) and lo < 0 else float(law.tail(lo))
        down = 0.0 if isinf(hi) and hi > 0 else float(law.tail(hi))
        return mass * (up - down)
    from .measure import range_count
    return range_count(m.initial, lo, hi, closure) if len(m.initial) else 0.0


def fluid_curves(m: FluidModel, t_grid) -> np.ndarray:
    """Rows (t, X*, S*, W*)."""
    return np.array([[t, fluid_congestion(m, t), fluid_service(m, t), fluid_workload(m, t)]
                     for t in t_grid])


def fluid_csv(m: FluidModel, t_grid, header_lines=()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["t", "X_star", "S_star", "W_star"])
    for row in fluid_curves(m, t_grid):
        wr.writerow([f"{v:.9g}" for v in row])
    return buf.getvalue()


__all__ = [
    "FluidModel",
    "InitialLaw",
    "fluid_pairing",
    "fluid_congestion",
    "fluid_service",
    "fluid_workload",
    "fluid_range_count",
    "fluid_curves",
    "fluid_csv",
]
