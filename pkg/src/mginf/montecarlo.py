"""Ensembles of normalized systems and their comparison with the limits.

Replication r of scale n draws from its own generator, seeded by
``SeedSequence(master_seed, spawn_key=(n, r))``; results are accumulated
in replication order, so a plan and seed determine the statistics bit for
bit however the work is distributed.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps

from .fluid import FluidModel, fluid_congestion, fluid_pairing, fluid_range_count, fluid_service, fluid_workload
from .functions import TestFunction
from .laws import Exponential, ServiceLaw
from .measure import integrate, performance_triple, range_count
from .scaling import ScalingScheme, scaled_martingale, simulate_normalized
from .simulator import ProfilePath, jump_sizes, snapshot

WORKERS_ENV = "MGINF_WORKERS"
SE_FLAG = 4.0


# -- functionals -------------------------------------------------------------

@dataclass(frozen=True)
class Functional:
    """A scalar read off a normalized path at time t.

    kind: "X", "S", "W", "N" (arrivals / n), "X_raw" (customer count),
    "pair" (<mu_t, phi>), "range" (mass in (lo, hi)) or "martingale".
    """

    kind: str
    phi: TestFunction | None = None
    lo: float = -math.inf
    hi: float = math.inf
    closure: tuple = (False, False)
    label: str = ""

    @property
    def id(self) -> str:
        if self.label:
            return self.label
        if self.kind in ("pair", "martingale"):
            return f"{self.kind}:{self.phi.name}"
        if self.kind == "range":
            return f"range({self.lo:g},{self.hi:g})"
        return self.kind

    def evaluate(self, path: ProfilePath, t: float, scheme: ScalingScheme, n: int) -> float:
        k = self.kind
        if k == "martingale":
            return scaled_martingale(path, self.phi, scheme, n, t)
        if k == "N":
            return path.arrivals_by(t) * path.atom_weight
        mu = snapshot(path, t)
        if k in ("X", "S", "W"):
            return performance_triple(mu)["XSW".index(k)]
        if k == "X_raw":
            return float(np.count_nonzero(mu.positions > 0))
        if k == "pair":
            return integrate(mu, self.phi)
        if k == "range":
            return range_count(mu, self.lo, self.hi, self.closure)
        raise ValueError(f"unknown functional kind {k!r}")


def as_functional(spec) -> Functional:
    if isinstance(spec, Functional):
        return spec
    if isinstance(spec, str):
        if spec not in ("X", "S", "W", "N", "X_raw"):
            raise ValueError(f"unknown named functional {spec!r}")
        return Functional(spec)
    if isinstance(spec, TestFunction):
        return Functional("pair", spec)
    raise TypeError(f"cannot interpret {spec!r} as a functional")


def martingale_functional(phi: TestFunction) -> Functional:
    return Functional("martingale", phi)


def range_functional(lo: float, hi: float, closure=(False, False)) -> Functional:
    if not lo < hi:
        raise ValueError("need lo < hi")
    return Functional("range", lo=lo, hi=hi, closure=tuple(closure))


# -- plan --------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentPlan:
    scheme: ScalingScheme
    n_values: tuple
    R: int
    t_grid: tuple
    functionals: tuple
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        object.__setattr__(self, "t_grid", tuple(float(t) for t in self.t_grid))
        object.__setattr__(self, "functionals", tuple(as_functional(f) for f in self.functionals))
        if self.R < 2:
            raise ValueError("need at least 2 replications")
        if not self.n_values or min(self.n_values) < 1:
            raise ValueError("n values must be positive integers")
        if not self.t_grid or any(b <= a for a, b in zip(self.t_grid, self.t_grid[1:])) or self.t_grid[0] < 0:
            raise ValueError("t_grid must be nonnegative and strictly increasing")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master seed must be an unsigned 64-bit integer")
        if not self.functionals:
            raise ValueError("no functionals requested")

    @property
    def horizon(self) -> float:
        return max(self.t_grid[-1], 1e-12)


def replication_rng(master_seed: int, n: int, r: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(n), int(r)))
    return np.random.Generator(np.random.PCG64(ss))


# -- moment accumulation ---------------------------------------------------

class MomentAccumulator:
    """Running count/mean/central sums M2..M4, elementwise over a fixed shape.

    ``merge`` uses the pairwise update formulas for the higher central
    moments, so partial accumulators can be combined in any grouping.
    """

    def __init__(self, shape=()):
        self.count = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)
        self.m3 = np.zeros(shape)
        self.m4 = np.zeros(shape)

    def push(self, x) -> None:
        x = np.asarray(x, dtype=float)
        n1 = self.count
        self.count += 1
        n = self.count
        delta = x - self.mean
        dn = delta / n
        dn2 = dn * dn
        term1 = delta * dn * n1
        self.mean = self.mean + dn
        self.m4 = self.m4 + term1 * dn2 * (n * n - 3 * n + 3) + 6 * dn2 * self.m2 - 4 * dn * self.m3
        self.m3 = self.m3 + term1 * dn * (n - 2) - 3 * dn * self.m2
        self.m2 = self.m2 + term1

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        out = MomentAccumulator(np.shape(self.mean))
        na, nb = self.count, other.count
        if na == 0 or nb == 0:
            src = other if na == 0 else self
            out.count, out.mean, out.m2, out.m3, out.m4 = src.count, src.mean, src.m2, src.m3, src.m4
            return out
        n = na + nb
        d = other.mean - self.mean
        d2, d3, d4 = d * d, d**3, d**4
        out.count = n
        out.mean = self.mean + d * nb / n
        out.m2 = self.m2 + other.m2 + d2 * na * nb / n
        out.m3 = (self.m3 + other.m3 + d3 * na * nb * (na - nb) / n**2
                  + 3.0 * d * (na * other.m2 - nb * self.m2) / n)
        out.m4 = (self.m4 + other.m4 + d4 * na * nb * (na * na - na * nb + nb * nb) / n**3
                  + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / n**2
                  + 4.0 * d * (na * other.m3 - nb * self.m3) / n)
        return out

    @property
    def variance(self):
        return self.m2 / (self.count - 1)

    @property
    def se(self):
        return np.sqrt(self.variance / self.count)

    @property
    def skewness(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.m2 > 0, math.sqrt(self.count) * self.m3 / np.maximum(self.m2, 1e-300) ** 1.5, 0.0)

    @property
    def excess_kurtosis(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.m2 > 0, self.count * self.m4 / np.maximum(self.m2, 1e-300) ** 2 - 3.0, 0.0)


@dataclass(frozen=True)
class Summary:
    mean: float
    variance: float
    se: float
    skewness: float
    excess_kurtosis: float
    count: int


@dataclass
class EnsembleStats:
    plan: ExperimentPlan
    moments: dict = field(default_factory=dict)   # n -> MomentAccumulator over (t, functional)
    values: dict = field(default_factory=dict)    # n -> array (R, t, functional)
    violations: dict = field(default_factory=dict)  # n -> count of failed pathwise checks

    def summary(self, n: int, t: float, fid: str) -> Summary:
        acc = self.moments[n]
        i = self.plan.t_grid.index(float(t))
        j = [f.id for f in self.plan.functionals].index(fid)
        return Summary(float(acc.mean[i, j]), float(acc.variance[i, j]), float(acc.se[i, j]),
                       float(acc.skewness[i, j]), float(acc.excess_kurtosis[i, j]), acc.count)

    def rows(self):
        for n in self.plan.n_values:
            for t in self.plan.t_grid:
                for f in self.plan.functionals:
                    yield n, t, f.id, self.summary(n, t, f.id)

    def raw_csv(self) -> str:
        """(n, t, functional_id, replication, value) for external plotting."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["n", "t", "functional_id", "replication", "value"])
        ids = [f.id for f in self.plan.functionals]
        for n in self.plan.n_values:
            vals = self.values[n]
            for r in range(vals.shape[0]):
                for i, t in enumerate(self.plan.t_grid):
                    for j, fid in enumerate(ids):
                        wr.writerow([n, f"{t:.9g}", fid, r, f"{vals[r, i, j]:.9g}"])
        return buf.getvalue()


def pathwise_violations(path: ProfilePath, t_grid, phis: Sequence[TestFunction] = ()) -> int:
    """Count failures of X + S = N/n + initial mass and of the jump bound |jump| <= sup|phi| / n."""
    bad = 0
    mass0 = path.initial.total_weight
    for t in t_grid:
        x, s, _ = performance_triple(snapshot(path, t))
        expected = path.arrivals_by(t) * path.atom_weight + mass0
        if abs(x + s - expected) > 1e-9 * max(1.0, expected):
            bad += 1
    for phi in phis:
        # sup_bound dominates sup|phi|; fall back to a grid sup when unknown
        bound = phi.sup_bound if math.isfinite(phi.sup_bound) else _grid_sup(phi)
        if not math.isfinite(bound):
            continue
        j = jump_sizes(path, phi)
        if j.size and np.max(j) > bound * path.atom_weight * (1 + 1e-12):
            bad += 1
    return bad


def _grid_sup(phi) -> float:
    v = np.abs(phi(np.linspace(-50.0, 50.0, 20001)))
    return float(v.max()) if np.all(np.isfinite(v)) and v[[0, -1]].max() < 1e-6 else math.inf


def _one(plan: ExperimentPlan, n: int, r: int, check_phis) -> tuple[np.ndarray, int]:
    rng = replication_rng(plan.master_seed, n, r)
    path = simulate_normalized(plan.scheme, n, plan.horizon, rng)
    out = np.empty((len(plan.t_grid), len(plan.functionals)))
    for i, t in enumerate(plan.t_grid):
        for j, f in enumerate(plan.functionals):
            out[i, j] = f.evaluate(path, t, plan.scheme, n)
    bad = pathwise_violations(path, plan.t_grid, check_phis) if check_phis is not None else 0
    return out, bad


def _worker(args):
    plan, n, rs, check_phis = args
    return [_one(plan, n, r, check_phis) for r in rs]


def default_workers() -> int:
    cap = os.environ.get(WORKERS_ENV)
    cpus = os.cpu_count() or 1
    if cap is None:
        return 1
    try:
        return max(1, min(int(cap), cpus))
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {cap!r}") from None


def run_ensemble(plan: ExperimentPlan, workers: int | None = None, check=True,
                 check_phis: Sequence[TestFunction] = ()) -> EnsembleStats:
    """Simulate R normalized paths per n and accumulate every functional.

    ``check`` runs the pathwise conservation and jump-bound checks on every
    path (violations are counted, not raised). With ``workers > 1`` the
    replications are spread over forked processes; a failed worker aborts
    the whole run.
    """
    workers = default_workers() if workers is None else max(1, int(workers))
    phis = tuple(check_phis) + tuple(f.phi for f in plan.functionals if f.phi is not None)
    phis = phis if check else None
    st = EnsembleStats(plan)
    for n in plan.n_values:
        if workers == 1:
            results = [_one(plan, n, r, phis) for r in range(plan.R)]
        else:
            import multiprocessing as mp
            from concurrent.futures import ProcessPoolExecutor
            blocks = np.array_split(np.arange(plan.R), workers * 4)
            ctx = mp.get_context("fork")
            with ProcessPoolExecutor(workers, mp_context=ctx) as ex:
                parts = list(ex.map(_worker, [(plan, n, b.tolist(), phis) for b in blocks if b.size]))
            results = [x for part in parts for x in part]
        acc = MomentAccumulator((len(plan.t_grid), len(plan.functionals)))
        vals = np.empty((plan.R, len(plan.t_grid), len(plan.functionals)))
        bad = 0
        for r, (v, b) in enumerate(results):
            acc.push(v)
            vals[r] = v
            bad += b
        st.moments[n], st.values[n], st.violations[n] = acc, vals, bad
    return st


# -- predictions and reports -------------------------------------------------

def fluid_prediction(m: FluidModel, f: Functional, t: float) -> float:
    k = f.kind
    if k == "X":
        return fluid_congestion(m, t)
    if k == "S":
        return fluid_service(m, t)
    if k == "W":
        return fluid_workload(m, t)
    if k == "N":
        return m.lam * t
    if k == "range":
        return fluid_range_count(m, f.lo, f.hi, t, f.closure)
    if k == "pair":
        return fluid_pairing(m, t, f.phi)
    if k == "martingale":
        return 0.0
    raise ValueError(f"no fluid prediction for {k!r}")


@dataclass
class Report:
    title: str
    columns: list
    rows: list
    summary: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"title": self.title, "columns": self.columns,
                           "rows": [dict(zip(self.columns, r)) for r in self.rows],
                           "summary": self.summary}, indent=2, sort_keys=True, default=_jsonable)

    def to_text(self) -> str:
        cells = [self.columns] + [[_fmt(v) for v in r] for r in self.rows]
        widths = [max(len(str(c[i])) for c in cells) for i in range(len(self.columns))]
        lines = [self.title, ""]
        for c in cells:
            lines.append("  ".join(str(v).rjust(w) for v, w in zip(c, widths)))
        if self.summary:
            lines.append("")
            for k in sorted(self.summary):
                lines.append(f"{k}: {_fmt(self.summary[k])}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self.columns)
        for r in self.rows:
            wr.writerow([_fmt(v) for v in r])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    if isinstance(v, dict):
        return json.dumps(v, sort_keys=True, default=_jsonable)
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v).__name__)


def fluid_error_report(st: EnsembleStats, m: FluidModel, k_se: float = SE_FLAG) -> Report:
    rows = []
    sup = {}
    for n, t, fid, s in st.rows():
        f = next(f for f in st.plan.functionals if f.id == fid)
        pred = fluid_prediction(m, f, t)
        dev = s.mean - pred
        flagged = abs(dev) > k_se * s.se if s.se > 0 else dev != 0.0
        rows.append([n, t, fid, s.mean, s.se, pred, dev, bool(flagged)])
        sup[n] = max(sup.get(n, 0.0), abs(dev))
    ns = sorted(sup)
    summary = {
        "flagged": sum(r[-1] for r in rows),
        "checks": len(rows),
        "sup_deviation": {str(n): sup[n] for n in ns},
        "sup_nonincreasing": all(sup[a] >= sup[b] for a, b in zip(ns, ns[1:])),
    }
    return Report("fluid error report", ["n", "t", "functional", "mean", "se", "fluid", "deviation", "flagged"],
                  rows, summary)


def clt_report(st: EnsembleStats, m: FluidModel, predicted: dict[str, Callable[[float], float]],
               level: float = 0.01) -> Report:
    """Residuals sqrt(n) (value - fluid) against the Gaussian limit.

    ``predicted`` maps functional ids to t -> limit variance.
    """
    rows = []
    fails = 0
    if st.plan.R < 500:
        raise ValueError("distribution checks need R >= 500")
    for n in st.plan.n_values:
        vals = st.values[n]
        for i, t in enumerate(st.plan.t_grid):
            for j, f in enumerate(st.plan.functionals):
                if f.id not in predicted:
                    continue
                res = math.sqrt(n) * (vals[:, i, j] - fluid_prediction(m, f, t))
                acc = MomentAccumulator()
                for v in res:
                    acc.push(v)
                var_pred = float(predicted[f.id](t))
                var_emp = float(acc.variance)
                if var_pred > 0 and var_emp > 0:
                    ks_p = sps.kstest(res, "norm", args=(0.0, math.sqrt(var_pred)))
                    ks_f = sps.kstest(res, "norm", args=(float(acc.mean), math.sqrt(var_emp)))
                    ks = (ks_p.statistic, ks_p.pvalue, ks_f.statistic, ks_f.pvalue)
                else:
                    ks = (0.0, 1.0, 0.0, 1.0)
                rel = var_emp / var_pred - 1.0 if var_pred > 0 else 0.0
                rows.append([n, t, f.id, float(acc.mean), var_emp, var_pred, rel,
                             float(acc.skewness), float(acc.excess_kurtosis), *ks])
                fails += ks[3] < level
    return Report("clt report",
                  ["n", "t", "functional", "residual_mean", "variance", "predicted_variance", "relative_error",
                   "skewness", "excess_kurtosis", "ks_predicted", "ks_predicted_p", "ks_fitted", "ks_fitted_p"],
                  rows, {"ks_fitted_rejections": fails, "level": level})


# -- M/M/inf oracle ----------------------------------------------------------

@dataclass(frozen=True)
class PoissonOracle:
    mean: float

    @property
    def variance(self) -> float:
        return self.mean

    def pmf(self, k):
        if self.mean == 0:
            return (np.asarray(k) == 0).astype(float)
        return sps.poisson.pmf(k, self.mean)

    def cdf(self, k):
        if self.mean == 0:
            return (np.asarray(k) >= 0).astype(float)
        return sps.poisson.cdf(k, self.mean)


def exact_mm_infinity_oracle(lam: float, law: ServiceLaw | float, t: float, n: int) -> PoissonOracle:
    """Raw customer count at normalized time t for an empty exponential system.

    Poisson with mean n lam (1 - e^{-rate t}) / rate. Independent of every
    other module: the formula is the classical transient M/M/inf law.
    """
    if isinstance(law, ServiceLaw):
        if not isinstance(law, Exponential):
            raise ValueError("the transient Poisson law holds only for exponential service")
        rate = law.rate
    else:
        rate = float(law)
    if not rate > 0 or lam < 0 or t < 0 or n < 1:
        raise ValueError("need rate > 0, lam >= 0, t >= 0, n >= 1")
    return PoissonOracle(n * lam * -math.expm1(-rate * t) / rate)


@dataclass(frozen=True)
class GofResult:
    statistic: float
    dof: int
    pvalue: float
    bins: tuple


def chi_square_gof(counts, oracle: PoissonOracle, min_expected: float = 5.0) -> GofResult:
    """Pearson chi-square of integer samples against the oracle pmf.

    Bins are single integers around the mode, with both tails pooled so
    every bin expects at least ``min_expected`` samples.
    """
    x = np.asarray(counts)
    if np.any(x != np.round(x)) or np.any(x < 0):
        raise ValueError("counts must be nonnegative integers")
    x = x.astype(int)
    R = x.size
    hi = int(max(x.max(), sps.poisson.ppf(1 - 1e-12, max(oracle.mean, 1e-12)))) + 1
    probs = np.asarray(oracle.pmf(np.arange(hi + 1)), dtype=float)
    # edges [lo_k, hi_k] built greedily from the left, tails pooled
    edges = []
    start, acc = 0, 0.0
    for k in range(hi + 1):
        acc += probs[k]
        if acc * R >= min_expected:
            edges.append((start, k))
            start, acc = k + 1, 0.0
    if not edges:
        raise ValueError("too few samples for a chi-square test")
    # the remainder (right tail) joins the last bin, which becomes open-ended
    edges[-1] = (edges[-1][0], math.inf)
    obs, exp = [], []
    for a, b in edges:
        top = np.inf if b == math.inf else b
        obs.append(np.count_nonzero((x >= a) & (x <= top)))
        lower = float(oracle.cdf(a - 1)) if a > 0 else 0.0
        upper = 1.0 if b == math.inf else float(oracle.cdf(b))
        exp.append(R * (upper - lower))
    obs, exp = np.array(obs, float), np.array(exp, float)
    stat = float(np.sum((obs - exp) ** 2 / exp))
    dof = len(edges) - 1
    p = float(sps.chi2.sf(stat, dof)) if dof > 0 else 1.0
    return GofResult(stat, dof, p, tuple(edges))
