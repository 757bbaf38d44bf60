"""Finite atomic measures on the real line.

Positions are remaining service times (seconds); departed customers sit at
nonpositive positions and are kept. Shifting by ``t > 0`` moves every atom
LEFT by ``t``, and pairs with the function shift ``u -> phi(u - t)``, so

    integrate(shift(mu, t), phi) == integrate(mu, phi.shift(t))

holds bit for bit (both sides evaluate phi at ``a - t``).
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .functions import TestFunction, indicator


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointMeasure:
    """Weighted atoms ``(position, weight)`` with positive weights."""

    positions: np.ndarray
    weights: np.ndarray
    total_weight: float

    def __init__(self, positions=(), weights=None):
        pos = _frozen(positions)
        w = np.ones_like(pos) if weights is None else _frozen(weights)
        if w.shape != pos.shape:
            raise ValueError("positions and weights must have the same length")
        if np.any(~(w > 0)):
            raise ValueError("atom weights must be positive")
        if not np.all(np.isfinite(pos)):
            raise ValueError("atom positions must be finite")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w if weights is not None else _frozen(w))
        object.__setattr__(self, "total_weight", math.fsum(w.tolist()))

    @classmethod
    def empty(cls) -> "PointMeasure":
        return cls()

    @classmethod
    def dirac(cls, a: float, w: float = 1.0) -> "PointMeasure":
        return cls([a], [w])

    @classmethod
    def _trusted(cls, positions, weights) -> "PointMeasure":
        # skips validation; callers guarantee positive weights
        obj = object.__new__(cls)
        object.__setattr__(obj, "positions", _frozen(positions))
        object.__setattr__(obj, "weights", _frozen(weights))
        object.__setattr__(obj, "total_weight", math.fsum(obj.weights.tolist()))
        return obj

    def __len__(self) -> int:
        return self.positions.size

    def __repr__(self) -> str:
        return f"PointMeasure({len(self)} atoms, mass={self.total_weight:g})"

    def atoms(self):
        return list(zip(self.positions.tolist(), self.weights.tolist()))

    def __add__(self, other: "PointMeasure") -> "PointMeasure":
        return PointMeasure._trusted(
            np.concatenate([self.positions, other.positions]),
            np.concatenate([self.weights, other.weights]),
        )

    def scaled(self, space: float = 1.0, mass: float = 1.0) -> "PointMeasure":
        """Positions multiplied by ``space``, weights by ``mass``."""
        if mass <= 0:
            raise ValueError("mass factor must be positive")
        return PointMeasure._trusted(self.positions * space, self.weights * mass)

    # -- serialisation ------------------------------------------------------
    def to_records(self):
        return [{"position": float(a), "weight": float(w)} for a, w in self.atoms()]

    @classmethod
    def from_records(cls, records) -> "PointMeasure":
        records = list(records)
        return cls([float(r["position"]) for r in records], [float(r["weight"]) for r in records])

    def to_json(self) -> str:
        return json.dumps(self.to_records())

    @classmethod
    def from_json(cls, text: str) -> "PointMeasure":
        return cls.from_records(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["position", "weight"])
        for a, w in self.atoms():
            wr.writerow([repr(a), repr(w)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PointMeasure":
        rows = [r for r in csv.DictReader(io.StringIO(text)) if r]
        return cls.from_records(rows)


def integrate(mu: PointMeasure, phi) -> float:
    """<mu, phi> = sum_i w_i phi(a_i); the empty measure gives 0."""
    if len(mu) == 0:
        return 0.0
    return float(np.dot(mu.weights, phi(mu.positions)))


def shift(mu: PointMeasure, t: float) -> PointMeasure:
    """Move every atom from ``a`` to ``a - t``; weights unchanged."""
    if t == 0:
        return mu
    return PointMeasure._trusted(mu.positions - t, mu.weights)


def add_atom(mu: PointMeasure, a: float, w: float = 1.0) -> PointMeasure:
    if not w > 0:
        raise ValueError(f"atom weight must be positive, got {w}")
    return PointMeasure._trusted(np.append(mu.positions, float(a)), np.append(mu.weights, float(w)))


def range_count(mu: PointMeasure, x: float, y: float, closure=(False, False)) -> float:
    """Mass of atoms in the interval from x to y (``closure`` = (left, right))."""
    if not x < y:
        raise ValueError(f"need x < y, got ({x}, {y})")
    return integrate(mu, indicator(x, y, closure))


def performance_triple(mu: PointMeasure) -> tuple[float, float, float]:
    """(congestion, served, workload) = (mass on (0, inf), mass on (-inf, 0], first moment on (0, inf))."""
    if len(mu) == 0:
        return 0.0, 0.0, 0.0
    a, w = mu.positions, mu.weights
    pos = a > 0
    x = float(np.sum(w[pos]))
    s = float(np.sum(w[~pos]))
    wl = float(np.dot(w[pos], a[pos]))
    return x, s, wl


__all__ = [
    "PointMeasure",
    "TestFunction",
    "integrate",
    "shift",
    "add_atom",
    "range_count",
    "performance_triple",
]
