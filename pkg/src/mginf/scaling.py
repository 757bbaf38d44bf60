"""Time/space/mass normalization of a sequence of systems.

The n-th system is simulated directly in normalized coordinates: arrivals
at rate ``n * lambda_n`` on the normalized horizon, marks from the
normalized law, atoms of mass ``1/n``. :func:`simulate_raw` and
:func:`rescale` implement the literal definition (run the raw system on
``n T`` with marks ``n * sigma`` and shrink space and mass by ``n``) and
are kept as a cross-check.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .functions import NotDifferentiableError, TestFunction
from .laws import ServiceLaw
from .measure import PointMeasure, integrate
from .quadrature import DEFAULT_TOL
from .simulator import ProfilePath, martingale_statistic, simulate, snapshot


class HypothesisWarning(UserWarning):
    """The scheme lies outside the assumptions of the limit theorems."""


@dataclass(frozen=True)
class ScalingScheme:
    base_law: ServiceLaw
    lambda_limit: float
    lambda_of_n: Callable[[int], float] | None = None
    initial_profile_of_n: Callable[[int], PointMeasure] | None = None
    initial_limit: PointMeasure = field(default_factory=PointMeasure.empty)

    def rate(self, n: int) -> float:
        return self.lambda_limit if self.lambda_of_n is None else float(self.lambda_of_n(n))

    def initial(self, n: int) -> PointMeasure:
        if self.initial_profile_of_n is None:
            return self.initial_limit
        return self.initial_profile_of_n(n)

    def raw_law(self, n: int) -> ServiceLaw:
        return self.base_law.scaled(n)


def scheme_for_paper_example(lam: float, base: ServiceLaw, mu0: PointMeasure | None = None,
                             allow_atomic: bool = False) -> ScalingScheme:
    """Constant rate, scale-invariant service family, deterministic initial profile.

    With these choices lambda_n = lambda, the normalized law equals ``base``
    for every n and the normalized initial profile is the same for every n,
    so the rate, law and initial-state convergence requirements hold exactly.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not base.nonatomic:
        if not allow_atomic:
            raise ValueError("the normalized service law must be nonatomic; pass allow_atomic=True to explore anyway")
        warnings.warn("atomic service law: limit theorems do not apply", HypothesisWarning, stacklevel=2)
    mu0 = PointMeasure.empty() if mu0 is None else mu0
    return ScalingScheme(base, float(lam), initial_limit=mu0)


@dataclass(frozen=True)
class NormalizedSnapshotRequest:
    n: int
    t: float
    functionals: Sequence[TestFunction] = ()

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be an integer >= 1")

    def evaluate(self, path: ProfilePath) -> list[float]:
        mu = snapshot(path, self.t)
        return [integrate(mu, f) for f in self.functionals]


def simulate_normalized(scheme: ScalingScheme, n: int, horizon: float,
                        rng: np.random.Generator) -> ProfilePath:
    if int(n) != n or n < 1:
        raise ValueError("n must be an integer >= 1")
    return simulate(n * scheme.rate(n), scheme.base_law, scheme.initial(n), horizon, rng,
                    atom_weight=1.0 / n)


def simulate_raw(scheme: ScalingScheme, n: int, horizon: float, rng: np.random.Generator) -> ProfilePath:
    """The un-normalized n-th system on ``[0, n * horizon]``."""
    mu0 = scheme.initial(n).scaled(space=n, mass=n)
    return simulate(scheme.rate(n), scheme.raw_law(n), mu0, n * horizon, rng)


def rescale(raw: PointMeasure, n: int) -> PointMeasure:
    """mu_bar(B) = mu(nB) / n."""
    return raw.scaled(space=1.0 / n, mass=1.0 / n)


def normalized_snapshot_from_raw(raw_path: ProfilePath, n: int, t: float) -> PointMeasure:
    return rescale(snapshot(raw_path, n * t), n)


def scaled_martingale(path: ProfilePath, phi: TestFunction, scheme: ScalingScheme, n: int,
                      t: float, tol: float = DEFAULT_TOL) -> float:
    """M_bar^n_t(phi) on a normalized path (compensator lambda_n t <alpha, phi>)."""
    if phi.deriv is None:
        raise NotDifferentiableError("scaled martingale needs a smooth phi")
    return martingale_statistic(path, phi, n * scheme.rate(n), scheme.base_law, t, tol)


def predicted_qv(scheme: ScalingScheme, n: int, phi: TestFunction, t: float) -> float:
    """(lambda_n / n) t <alpha_n, phi^2>."""
    if t == 0:
        return 0.0
    second = scheme.base_law.expect(phi.square())
    return scheme.rate(n) * t * second / n
