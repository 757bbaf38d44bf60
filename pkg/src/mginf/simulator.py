"""Exact event-driven generation of the profile process.

A :class:`ProfilePath` stores the marked arrival points and the initial
measure; any snapshot is rebuilt from scratch, so there is no time
stepping and no discretisation error.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .functions import NotDifferentiableError, TestFunction
from .laws import ServiceLaw
from .measure import PointMeasure, integrate, shift
from .quadrature import DEFAULT_TOL, adaptive_simpson_vec


@dataclass(frozen=True, eq=False)
class ProfilePath:
    """One trajectory: arrivals on (0, horizon], their service marks, mu_0.

    ``atom_weight`` is the mass of each arriving customer (1 for a raw
    system, 1/n for a normalized one).
    """

    horizon: float
    arrival_times: np.ndarray
    service_times: np.ndarray
    initial: PointMeasure
    rate: float
    law: Optional[ServiceLaw] = None
    atom_weight: float = 1.0

    def __post_init__(self):
        a = np.array(self.arrival_times, dtype=float)
        s = np.array(self.service_times, dtype=float)
        if a.shape != s.shape or a.ndim != 1:
            raise ValueError("arrival_times and service_times must be 1-d and equally long")
        if a.size and (a[0] <= 0 or a[-1] > self.horizon):
            raise ValueError("arrival times must lie in (0, horizon]")
        if np.any(np.diff(a) <= 0):
            raise ValueError("arrival times must be strictly increasing")
        if np.any(s <= 0):
            raise ValueError("service times must be positive")
        a.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "arrival_times", a)
        object.__setattr__(self, "service_times", s)

    def arrivals_by(self, t: float) -> int:
        """N_t: number of arrivals in (0, t]."""
        return int(np.searchsorted(self.arrival_times, t, side="right"))

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["event_index", "arrival_time", "service_time"])
        for i, (a, s) in enumerate(zip(self.arrival_times, self.service_times)):
            wr.writerow([i, f"{a:.9g}", f"{s:.9g}"])
        return buf.getvalue()


def _arrival_times(rate: float, horizon: float, rng: np.random.Generator) -> np.ndarray:
    # cumulative exponential gaps, drawn in batches until past the horizon
    if rate <= 0:
        return np.empty(0)
    mean_count = rate * horizon
    batch = int(mean_count + 6.0 * math.sqrt(mean_count) + 16)
    times = []
    last = 0.0
    while True:
        gaps = rng.exponential(1.0 / rate, batch)
        cum = last + np.cumsum(gaps)
        times.append(cum)
        last = cum[-1]
        if last > horizon:
            break
    t = np.concatenate(times)
    return t[: np.searchsorted(t, horizon, side="right")]


def simulate(rate: float, law: ServiceLaw, initial: PointMeasure, horizon: float,
             rng: np.random.Generator, atom_weight: float = 1.0) -> ProfilePath:
    """Poisson(rate) arrivals on (0, horizon] with i.i.d. marks from ``law``."""
    if rate < 0:
        raise ValueError("arrival rate must be nonnegative")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    arrivals = _arrival_times(rate, horizon, rng)
    services = np.asarray(law.sample(rng, arrivals.size), dtype=float) if arrivals.size else np.empty(0)
    return ProfilePath(float(horizon), arrivals, services, initial, float(rate), law, float(atom_weight))


def inject_path(arrivals, services, initial: PointMeasure, horizon: float,
                rate: float = 0.0, law: ServiceLaw | None = None, atom_weight: float = 1.0) -> ProfilePath:
    """A path with prescribed arrival times and service marks."""
    return ProfilePath(float(horizon), np.asarray(arrivals, dtype=float),
                       np.asarray(services, dtype=float), initial, float(rate), law, float(atom_weight))


def snapshot(path: ProfilePath, t: float, prune_below: float | None = None) -> PointMeasure:
    """mu_t: the shifted initial measure plus one atom at T_i + sigma_i - t per arrival T_i <= t.

    Departed customers stay as nonpositive atoms unless ``prune_below`` is
    given, in which case atoms strictly below it are dropped.
    """
    if not 0 <= t <= path.horizon:
        raise ValueError(f"t={t} outside [0, {path.horizon}]")
    k = path.arrivals_by(t)
    pos = path.arrival_times[:k] + path.service_times[:k] - t
    mu0 = shift(path.initial, t)
    positions = np.concatenate([mu0.positions, pos])
    weights = np.concatenate([mu0.weights, np.full(k, path.atom_weight)])
    if prune_below is not None:
        keep = positions >= prune_below
        positions, weights = positions[keep], weights[keep]
    return PointMeasure._trusted(positions, weights)


def time_integral(path: ProfilePath, dphi, t: float, tol: float = DEFAULT_TOL) -> float:
    """int_0^t <mu_s, dphi> ds, atom by atom with vectorised adaptive Simpson.

    Between events each atom drifts left at unit speed, so the integrand of
    the atom born at time b with mark a is ``s -> dphi(a - (s - b))`` on [b, t].
    """
    k = path.arrivals_by(t)
    mu0 = path.initial
    lo = np.concatenate([np.zeros(len(mu0)), path.arrival_times[:k]])
    # p = birth position + birth time, so the position at time s is p - s
    p = np.concatenate([mu0.positions, path.arrival_times[:k] + path.service_times[:k]])
    w = np.concatenate([mu0.weights, np.full(k, path.atom_weight)])
    if lo.size == 0:
        return 0.0
    hi = np.full_like(lo, float(t))
    vals = adaptive_simpson_vec(lambda s, q: dphi(q - s), lo, hi, p, tol)
    return float(np.dot(w, vals))


def martingale_statistic(path: ProfilePath, phi: TestFunction, rate: float, law: ServiceLaw,
                         t: float, tol: float = DEFAULT_TOL) -> float:
    """M_t(phi) = <mu_t,phi> - <mu_0,phi> + int_0^t <mu_s,phi'> ds - rate t <law,phi> (per unit atom mass)."""
    if phi.deriv is None:
        raise NotDifferentiableError(f"martingale statistic needs a smooth phi, got {phi.kind}")
    if not 0 <= t <= path.horizon:
        raise ValueError(f"t={t} outside [0, {path.horizon}]")
    drift = time_integral(path, phi.deriv, t, tol)
    comp = rate * path.atom_weight * t * law.expect(phi) if rate else 0.0
    return integrate(snapshot(path, t), phi) - integrate(path.initial, phi) + drift - comp


def jump_sizes(path: ProfilePath, phi: TestFunction) -> np.ndarray:
    """Jumps of t -> <mu_t, phi>: an arrival with mark sigma adds weight * phi(sigma)."""
    return np.abs(path.atom_weight * phi(path.service_times))
