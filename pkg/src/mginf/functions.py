"""Test functions paired against measures.

A :class:`TestFunction` is a vectorised callable plus the metadata the
rest of the package needs: the k-th derivative (when the function is
smooth), ``sup_bound`` = sup |f| + |f'|, and the abscissae where it jumps
or kinks so that quadrature rules can split there.

The smooth families (Gaussian bumps, logistic sigmoids, Hermite-weighted
polynomials, constants) are closed under differentiation, so derivatives
of every order are available in closed form.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from math import comb, inf, sqrt, exp
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import hermite_e as _He
from numpy.polynomial import polynomial as _P

Array = np.ndarray
SMOOTH, INDICATOR, POLY_WEIGHTED = "smooth", "indicator", "polynomial-weighted"


class NotDifferentiableError(ValueError):
    """Raised when an operation needs phi' and phi has no derivative."""


@dataclass(frozen=True)
class TestFunction:
    """A real function on the line with derivative and norm metadata.

    ``nth(k)`` returns the k-th derivative as a vectorised callable, or
    ``None`` when the function is not k times differentiable. ``sup_bound``
    is an upper bound on sup |f| + |f'| (``inf`` when unknown).
    """

    __test__ = False  # keep pytest from collecting this class

    f: Callable[[Array], Array]
    nth: Optional[Callable[[int], Optional[Callable[[Array], Array]]]] = None
    sup_bound: float = inf
    kind: str = SMOOTH
    jumps: tuple = ()
    name: str = "phi"

    def __call__(self, x):
        return self.f(np.asarray(x, dtype=float))

    @property
    def deriv(self) -> Optional[Callable[[Array], Array]]:
        return None if self.nth is None else self.nth(1)

    @property
    def smooth(self) -> bool:
        return self.deriv is not None

    def prime(self) -> "TestFunction":
        """The derivative as a TestFunction (raises for non-smooth kinds)."""
        d = self.deriv
        if d is None:
            raise NotDifferentiableError(f"{self.name} ({self.kind}) has no derivative")
        nth = self.nth
        # sup_bound is only an upper bound; derivatives do not carry one
        return TestFunction(d, lambda k: nth(k + 1), inf, SMOOTH, (), self.name + "'")

    def shift(self, t: float) -> "TestFunction":
        """tau_t phi, i.e. u -> phi(u - t)."""
        if t == 0:
            return self
        f, nth = self.f, self.nth
        snth = None
        if nth is not None:
            def snth(k, nth=nth, t=t):
                g = nth(k)
                return None if g is None else (lambda u, g=g: g(u - t))
        return TestFunction(
            lambda u: f(u - t),
            snth,
            self.sup_bound,
            self.kind,
            tuple(j + t for j in self.jumps),
            f"tau[{t:g}]{self.name}",
        )

    def scale(self, a: float) -> "TestFunction":
        f, nth = self.f, self.nth
        snth = None
        if nth is not None:
            def snth(k, nth=nth):
                g = nth(k)
                return None if g is None else (lambda u, g=g: a * g(u))
        return TestFunction(lambda u: a * f(u), snth, abs(a) * self.sup_bound,
                            self.kind, self.jumps, f"{a:g}*{self.name}")

    def __add__(self, other: "TestFunction") -> "TestFunction":
        f, g = self.f, other.f
        nth = None
        if self.nth is not None and other.nth is not None:
            n1, n2 = self.nth, other.nth

            def nth(k):
                a, b = n1(k), n2(k)
                if a is None or b is None:
                    return None
                return lambda u: a(u) + b(u)
        return TestFunction(lambda u: f(u) + g(u), nth, self.sup_bound + other.sup_bound,
                            _join_kind(self.kind, other.kind),
                            tuple(sorted(set(self.jumps) | set(other.jumps))),
                            f"({self.name}+{other.name})")

    def __mul__(self, other: "TestFunction") -> "TestFunction":
        f, g = self.f, other.f
        nth = None
        if self.nth is not None and other.nth is not None:
            n1, n2 = self.nth, other.nth

            def nth(k):
                # Leibniz rule
                parts = []
                for j in range(k + 1):
                    a, b = n1(j) if j else f, n2(k - j) if k - j else g
                    if a is None or b is None:
                        return None
                    parts.append((comb(k, j), a, b))
                return lambda u: sum(c * a(u) * b(u) for c, a, b in parts)
        sup = inf
        if self.sup_bound < inf and other.sup_bound < inf:
            sup = 2 * self.sup_bound * other.sup_bound
        return TestFunction(lambda u: f(u) * g(u), nth, sup,
                            _join_kind(self.kind, other.kind),
                            tuple(sorted(set(self.jumps) | set(other.jumps))),
                            f"{self.name}*{other.name}")

    def square(self) -> "TestFunction":
        return self * self

    def renamed(self, name: str) -> "TestFunction":
        return replace(self, name=name)


def _join_kind(a: str, b: str) -> str:
    if INDICATOR in (a, b):
        return INDICATOR
    if POLY_WEIGHTED in (a, b):
        return POLY_WEIGHTED
    return SMOOTH


def _grid_sup(g, lo=-60.0, hi=60.0, num=24001) -> float:
    x = np.linspace(lo, hi, num)
    return float(np.max(g(x)))


# --- smooth families --------------------------------------------------------

def constant(c: float = 1.0) -> TestFunction:
    def nth(k):
        return (lambda u: np.full_like(np.asarray(u, dtype=float), c)) if k == 0 else (
            lambda u: np.zeros_like(np.asarray(u, dtype=float)))
    return TestFunction(nth(0), nth, abs(c), SMOOTH, (), f"const[{c:g}]")


def gaussian_bump(center: float = 0.0, width: float = 1.0, height: float = 1.0) -> TestFunction:
    """height * exp(-(x - center)^2 / (2 width^2))."""
    if width <= 0:
        raise ValueError("width must be positive")

    def nth(k):
        # d^k/dx^k e^{-z^2/2} = (-1)^k He_k(z) e^{-z^2/2} / w^k
        coef = np.zeros(k + 1)
        coef[k] = 1.0
        scale = height * (-1.0) ** k / width**k

        def g(x):
            z = (np.asarray(x, dtype=float) - center) / width
            return scale * _He.hermeval(z, coef) * np.exp(-0.5 * z * z)
        return g

    z = (-width + sqrt(width * width + 4.0)) / 2.0
    sup = height * (1.0 + z / width) * exp(-0.5 * z * z)
    return TestFunction(nth(0), nth, sup, SMOOTH, (), f"bump[{center:g},{width:g}]")


def sigmoid(center: float = 0.0, scale: float = 1.0) -> TestFunction:
    """Logistic 1 / (1 + exp(-(x - center) / scale))."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    # d/dx P(s) = P'(s) s (1 - s) / scale, with s the logistic value
    polys = [np.array([0.0, 1.0])]

    def poly(k):
        while len(polys) <= k:
            p = polys[-1]
            polys.append(_P.polymul(_P.polyder(p), [0.0, 1.0, -1.0]) / scale)
        return polys[k]

    def nth(k):
        p = poly(k)

        def g(x):
            s = 0.5 * (1.0 + np.tanh(0.5 * (np.asarray(x, dtype=float) - center) / scale))
            return _P.polyval(s, p)
        return g

    sup = 1.0 + 0.25 / scale
    return TestFunction(nth(0), nth, sup, SMOOTH, (), f"sigmoid[{center:g},{scale:g}]")


def hermite_weighted(coeffs) -> TestFunction:
    """p(x) exp(-x^2/2) with p given by power-series coefficients."""
    coeffs = np.asarray(coeffs, dtype=float)
    polys = [coeffs]

    def poly(k):
        while len(polys) <= k:
            p = polys[-1]
            # (p e^{-x^2/2})' = (p' - x p) e^{-x^2/2}
            polys.append(_P.polysub(_P.polyder(p), _P.polymulx(p)))
        return polys[k]

    def nth(k):
        p = poly(k)
        return lambda x: _P.polyval(np.asarray(x, dtype=float), p) * np.exp(-0.5 * np.asarray(x, dtype=float) ** 2)

    sup = _grid_sup(lambda x: np.abs(nth(0)(x)) + np.abs(nth(1)(x)), -40, 40)
    return TestFunction(nth(0), nth, sup, SMOOTH, (), "hermite[" + ",".join(f"{c:g}" for c in coeffs) + "]")


# --- non-smooth functionals -------------------------------------------------

def indicator(lo: float = -inf, hi: float = inf, closed=(False, False)) -> TestFunction:
    """Indicator of the interval (lo, hi); ``closed`` = (left, right) flags."""
    if not lo < hi:
        raise ValueError(f"empty interval ({lo}, {hi})")
    left_closed, right_closed = closed

    def f(x):
        x = np.asarray(x, dtype=float)
        ok_lo = x >= lo if left_closed else x > lo
        ok_hi = x <= hi if right_closed else x < hi
        return (ok_lo & ok_hi).astype(float)

    jumps = tuple(e for e in (lo, hi) if np.isfinite(e))
    lb = "[" if left_closed else "("
    rb = "]" if right_closed else ")"
    return TestFunction(f, None, 1.0, INDICATOR, jumps, f"1{lb}{lo:g},{hi:g}{rb}")


def positive_part_identity() -> TestFunction:
    """x -> x 1_{x > 0}: the workload functional."""
    def f(x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, x, 0.0)
    return TestFunction(f, None, inf, POLY_WEIGHTED, (0.0,), "I1(0,inf)")


def congestion_fn() -> TestFunction:
    return indicator(0.0, inf).renamed("X")


def service_fn() -> TestFunction:
    return indicator(-inf, 0.0, closed=(False, True)).renamed("S")


def workload_fn() -> TestFunction:
    return positive_part_identity().renamed("W")


def from_config(spec: dict) -> TestFunction:
    """Build a test function from a JSON-style dict."""
    kind = spec["type"]
    if kind == "gaussian_bump":
        return gaussian_bump(spec.get("center", 0.0), spec.get("width", 1.0), spec.get("height", 1.0))
    if kind == "sigmoid":
        return sigmoid(spec.get("center", 0.0), spec.get("scale", 1.0))
    if kind == "hermite_weighted":
        return hermite_weighted(spec["coeffs"])
    if kind == "constant":
        return constant(spec.get("value", 1.0))
    if kind == "indicator":
        lo = spec.get("lo")
        hi = spec.get("hi")
        return indicator(-inf if lo is None else lo, inf if hi is None else hi,
                         tuple(spec.get("closed", (False, False))))
    raise ValueError(f"unknown test function type {kind!r}")
