"""Service-time distributions and their analytic functionals.

Everything the fluid and diffusion formulas need is expressed through the
partial moments

    partial_moment(k, s) = E[(sigma - s)_+^k],   k >= 1
    partial_moment(0, s) = P(sigma > s)         (the tail)

because ``d/ds partial_moment(k+1, s) = -(k+1) partial_moment(k, s)``.
Hence every integral of a tail-type quantity over a time window has a
closed form, e.g. ``int_0^t tail = mean - tail_excess(t)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial, inf

import numpy as np

from .quadrature import gauss_legendre_panels

# semi-infinite supports are cut at the 1 - TAIL_CUT quantile, with a
# Gauss-Laguerre correction for the remainder
TAIL_CUT = 1e-12


class ServiceLaw:
    """Common interface of the service-time laws (subclasses are frozen)."""

    nonatomic: bool = True

    # -- to be provided ----------------------------------------------------
    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def partial_moment(self, k: int, s):
        raise NotImplementedError

    def quantile(self, p):
        raise NotImplementedError

    def _rule(self, breaks: tuple):
        """Nodes/weights integrating smooth functions against the law."""
        raise NotImplementedError

    def gauss_rule(self, n: int):
        """A rule exact for polynomials of degree < 2n."""
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError

    # -- derived -------------------------------------------------------------
    def tail(self, x):
        return self.partial_moment(0, x)

    def cdf(self, x):
        return 1.0 - self.tail(x)

    def tail_excess(self, s):
        """int_s^inf (x - s) dalpha(x)."""
        return self.partial_moment(1, s)

    @property
    def mean(self) -> float:
        return float(self.partial_moment(1, 0.0))

    @property
    def second_moment(self) -> float:
        return float(self.partial_moment(2, 0.0))

    def integrated_partial_moment(self, k: int, a, b):
        """int_a^b partial_moment(k, u) du."""
        return (self.partial_moment(k + 1, a) - self.partial_moment(k + 1, b)) / (k + 1)

    def integrated_tail(self, t):
        """int_0^t P(sigma > s) ds."""
        return self.mean - self.tail_excess(t)

    def expect(self, f, jumps=None) -> float:
        """<law, f>; break points default to ``f.jumps`` when present."""
        if jumps is None:
            jumps = getattr(f, "jumps", ())
        nodes, weights = self._rule(tuple(sorted(set(float(j) for j in jumps))))
        return float(np.dot(weights, f(nodes)))

    def scaled(self, factor: float) -> "ServiceLaw":
        return ScaledLaw(self, float(factor))


@dataclass(frozen=True)
class Exponential(ServiceLaw):
    rate: float = 1.0
    panels: int = 64
    order: int = 16

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"exponential rate must be positive, got {self.rate}")

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size)

    def partial_moment(self, k, s):
        s = np.asarray(s, dtype=float)
        r = self.rate
        pos = factorial(k) * np.exp(-r * np.maximum(s, 0.0)) / r**k
        if np.all(s >= 0):
            return pos if pos.ndim else float(pos)
        neg = sum(comb(k, j) * (-s) ** (k - j) * factorial(j) / r**j for j in range(k + 1))
        out = np.where(s >= 0, pos, neg)
        return out if out.ndim else float(out)

    def quantile(self, p):
        return -np.log1p(-np.asarray(p, dtype=float)) / self.rate

    @property
    def cutoff(self) -> float:
        return float(self.quantile(1.0 - TAIL_CUT))

    def _rule(self, breaks):
        return _exp_rule(self.rate, self.panels, self.order, breaks)

    def gauss_rule(self, n):
        x, w = np.polynomial.laguerre.laggauss(n)
        return x / self.rate, w

    def to_config(self):
        return {"type": "exponential", "rate": self.rate}


@lru_cache(maxsize=4096)
def _exp_rule(rate, panels, order, breaks):
    q = -math.log(TAIL_CUT) / rate
    x, w = gauss_legendre_panels(0.0, q, breaks, panels, order)
    w = w * rate * np.exp(-rate * x)
    # remainder of the support: int_q^inf f(x) r e^{-r x} dx
    y, wy = np.polynomial.laguerre.laggauss(32)
    x = np.concatenate([x, q + y / rate])
    w = np.concatenate([w, math.exp(-rate * q) * wy])
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True)
class Uniform(ServiceLaw):
    a: float = 0.0
    b: float = 1.0
    panels: int = 16
    order: int = 16

    def __post_init__(self):
        if not 0 <= self.a < self.b:
            raise ValueError(f"need 0 <= a < b, got ({self.a}, {self.b})")

    def sample(self, rng, size=None):
        return rng.uniform(self.a, self.b, size)

    def partial_moment(self, k, s):
        s = np.asarray(s, dtype=float)
        a, b = self.a, self.b
        c = (k + 1) * (b - a)
        hi = np.maximum(b - s, 0.0) ** (k + 1)
        lo = np.maximum(a - s, 0.0) ** (k + 1)
        out = (hi - lo) / c
        return out if out.ndim else float(out)

    def quantile(self, p):
        return self.a + (self.b - self.a) * np.asarray(p, dtype=float)

    def _rule(self, breaks):
        return _uniform_rule(self.a, self.b, self.panels, self.order, breaks)

    def gauss_rule(self, n):
        x, w = np.polynomial.legendre.leggauss(n)
        return self.a + 0.5 * (self.b - self.a) * (x + 1.0), 0.5 * w

    def to_config(self):
        return {"type": "uniform", "a": self.a, "b": self.b}


@lru_cache(maxsize=4096)
def _uniform_rule(a, b, panels, order, breaks):
    x, w = gauss_legendre_panels(a, b, breaks, panels, order)
    w = w / (b - a)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True)
class Deterministic(ServiceLaw):
    """Point mass at ``d``; atomic, so outside the limit-theorem hypotheses."""

    d: float = 1.0
    nonatomic = False

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError(f"deterministic service time must be positive, got {self.d}")

    def sample(self, rng, size=None):
        if size is None:
            return self.d
        return np.full(size, self.d)

    def partial_moment(self, k, s):
        s = np.asarray(s, dtype=float)
        out = (self.d > s).astype(float) if k == 0 else np.maximum(self.d - s, 0.0) ** k
        return out if out.ndim else float(out)

    def quantile(self, p):
        return np.full_like(np.asarray(p, dtype=float), self.d)

    def _rule(self, breaks):
        return np.array([self.d]), np.array([1.0])

    def gauss_rule(self, n):
        return np.array([self.d]), np.array([1.0])

    def to_config(self):
        return {"type": "deterministic", "d": self.d}


@dataclass(frozen=True)
class Mixture(ServiceLaw):
    components: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        if len(self.components) != len(self.weights) or not self.components:
            raise ValueError("mixture needs matching, non-empty components and weights")
        if any(w < 0 for w in self.weights) or abs(math.fsum(self.weights) - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    @property
    def nonatomic(self):  # type: ignore[override]
        return all(c.nonatomic for c, w in zip(self.components, self.weights) if w > 0)

    def sample(self, rng, size=None):
        n = 1 if size is None else int(np.prod(size))
        idx = rng.choice(len(self.components), size=n, p=self.weights)
        out = np.empty(n)
        for k, comp in enumerate(self.components):
            sel = idx == k
            if sel.any():
                out[sel] = comp.sample(rng, int(sel.sum()))
        return float(out[0]) if size is None else out.reshape(size)

    def partial_moment(self, k, s):
        return sum(w * c.partial_moment(k, s) for c, w in zip(self.components, self.weights))

    def quantile(self, p):
        from scipy.optimize import brentq

        def one(q):
            hi = max(float(c.quantile(q)) for c in self.components) + 1.0
            return brentq(lambda x: float(self.cdf(x)) - q, 0.0, hi, xtol=1e-14)
        p = np.asarray(p, dtype=float)
        return np.vectorize(one)(p) if p.ndim else one(float(p))

    def expect(self, f, jumps=None):
        return math.fsum(w * c.expect(f, jumps) for c, w in zip(self.components, self.weights))

    def _rule(self, breaks):
        parts = [c._rule(breaks) for c in self.components]
        x = np.concatenate([p[0] for p in parts])
        w = np.concatenate([wt * p[1] for p, wt in zip(parts, self.weights)])
        return x, w

    def gauss_rule(self, n):
        xs, ws = [], []
        for c, w in zip(self.components, self.weights):
            x, v = c.gauss_rule(n)
            xs.append(x)
            ws.append(w * v)
        return np.concatenate(xs), np.concatenate(ws)

    def to_config(self):
        return {
            "type": "mixture",
            "components": [
                {"weight": w, "law": c.to_config()} for c, w in zip(self.components, self.weights)
            ],
        }


@dataclass(frozen=True)
class ScaledLaw(ServiceLaw):
    """Law of ``factor * sigma`` (the raw service law of the n-th system)."""

    base: ServiceLaw = None
    factor: float = 1.0

    @property
    def nonatomic(self):  # type: ignore[override]
        return self.base.nonatomic

    def sample(self, rng, size=None):
        return self.factor * self.base.sample(rng, size)

    def partial_moment(self, k, s):
        return self.factor**k * self.base.partial_moment(k, np.asarray(s, dtype=float) / self.factor)

    def quantile(self, p):
        return self.factor * self.base.quantile(p)

    def expect(self, f, jumps=None):
        if jumps is None:
            jumps = getattr(f, "jumps", ())
        c = self.factor
        return self.base.expect(lambda x: f(c * x), tuple(j / c for j in jumps))

    def _rule(self, breaks):
        x, w = self.base._rule(tuple(b / self.factor for b in breaks))
        return self.factor * x, w

    def gauss_rule(self, n):
        x, w = self.base.gauss_rule(n)
        return self.factor * x, w

    def to_config(self):
        return {"type": "scaled", "factor": self.factor, "law": self.base.to_config()}


def make_exponential(rate: float) -> Exponential:
    return Exponential(rate)


def make_uniform(a: float, b: float) -> Uniform:
    return Uniform(a, b)


def make_deterministic(d: float) -> Deterministic:
    return Deterministic(d)


def make_mixture(laws, weights) -> Mixture:
    return Mixture(tuple(laws), tuple(weights))


def law_from_config(spec: dict) -> ServiceLaw:
    kind = spec.get("type")
    if kind == "exponential":
        return Exponential(float(spec["rate"]))
    if kind == "uniform":
        return Uniform(float(spec["a"]), float(spec["b"]))
    if kind == "deterministic":
        return Deterministic(float(spec["d"]))
    if kind == "mixture":
        comps = spec["components"]
        return Mixture(tuple(law_from_config(c["law"]) for c in comps),
                       tuple(float(c["weight"]) for c in comps))
    if kind == "scaled":
        return ScaledLaw(law_from_config(spec["law"]), float(spec["factor"]))
    raise ValueError(f"unknown service law type {kind!r}")
