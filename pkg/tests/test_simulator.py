import math

import numpy as np
import pytest
from scipy import stats

from mginf.functions import gaussian_bump, indicator, sigmoid
from mginf.laws import Exponential, Uniform
from mginf.measure import PointMeasure, integrate, performance_triple, shift
from mginf.simulator import inject_path, jump_sizes, martingale_statistic, simulate, snapshot, time_integral

SEED = 20081218


def test_no_arrivals_is_pure_shift(exp1, rng):
    mu0 = PointMeasure([0.5, 2.0], [1.0, 3.0])
    path = simulate(0.0, exp1, mu0, 5.0, rng)
    assert path.arrival_times.size == 0
    for t in (0.0, 1.3, 5.0):
        assert snapshot(path, t).positions.tolist() == shift(mu0, t).positions.tolist()


def test_arrival_count_concentrates(exp1, rng):
    path = simulate(1.0, exp1, PointMeasure.empty(), 1e4, rng)
    assert abs(path.arrival_times.size - 1e4) <= 4 * math.sqrt(1e4)


def test_gaps_are_exponential(exp1):
    path = simulate(1.0, exp1, PointMeasure.empty(), 12_000.0, np.random.default_rng(SEED))
    gaps = np.diff(np.concatenate([[0.0], path.arrival_times]))[:10_000]
    assert gaps.size == 10_000
    assert stats.kstest(gaps, "expon").pvalue > 0.01


def test_snapshot_examples():
    path = inject_path([0.5], [2.0], PointMeasure.empty(), 5.0)
    assert snapshot(path, 0.0).total_weight == 0.0
    mu = snapshot(path, 1.0)
    assert mu.positions.tolist() == [1.5]
    assert performance_triple(mu) == (1.0, 0.0, 1.5)
    mu = snapshot(path, 3.0)
    assert mu.positions.tolist() == [-0.5]
    assert performance_triple(mu)[:2] == (0.0, 1.0)
    with pytest.raises(ValueError):
        snapshot(path, 5.5)
    with pytest.raises(ValueError):
        snapshot(path, -0.1)


def test_inject_examples():
    path = inject_path([1.0, 2.0], [5.0, 5.0], PointMeasure.empty(), 10.0)
    mu = snapshot(path, 3.0)
    assert sorted(mu.positions.tolist()) == [3.0, 4.0]
    assert performance_triple(mu)[0] == 2.0
    assert path.arrivals_by(1.5) == 1 and path.arrivals_by(2.5) == 2
    empty = inject_path([], [], PointMeasure.dirac(2.0), 3.0)
    assert snapshot(empty, 1.0).positions.tolist() == [1.0]


def test_inject_validation():
    with pytest.raises(ValueError):
        inject_path([2.0, 1.0], [1.0, 1.0], PointMeasure.empty(), 5.0)
    with pytest.raises(ValueError):
        inject_path([1.0, 1.0], [1.0, 1.0], PointMeasure.empty(), 5.0)
    with pytest.raises(ValueError):
        inject_path([1.0], [1.0, 2.0], PointMeasure.empty(), 5.0)
    with pytest.raises(ValueError):
        inject_path([1.0], [-1.0], PointMeasure.empty(), 5.0)
    with pytest.raises(ValueError):
        inject_path([6.0], [1.0], PointMeasure.empty(), 5.0)


def test_departed_atoms_are_kept_unless_pruned():
    path = inject_path([0.1, 0.2], [0.1, 10.0], PointMeasure.empty(), 5.0)
    assert snapshot(path, 4.0).total_weight == 2.0
    assert snapshot(path, 4.0, prune_below=-1.0).total_weight == 1.0


def test_pathwise_structure(exp1):
    mu0 = PointMeasure([0.3, 1.2], [1.0, 2.0])
    for seed in range(10):
        path = simulate(3.0, Uniform(0.0, 2.0), mu0, 6.0, np.random.default_rng(seed))
        grid = np.linspace(0, 6, 61)
        prev_s = prev_n = -1.0
        for t in grid:
            x, s, _ = performance_triple(snapshot(path, t))
            n_t = path.arrivals_by(t)
            assert x + s == pytest.approx(n_t + 3.0, abs=1e-12)
            assert s >= prev_s and n_t >= prev_n
            prev_s, prev_n = s, n_t


def test_snapshot_consistency_between_arrivals(exp1):
    path = simulate(2.0, exp1, PointMeasure.dirac(1.0), 5.0, np.random.default_rng(5))
    a = path.arrival_times
    t = 0.5 * (a[2] + a[3])
    h = 0.5 * (a[3] - a[2]) * 0.9
    later = snapshot(path, t + h)
    moved = shift(snapshot(path, t), h)
    assert np.allclose(later.positions, moved.positions, atol=1e-12)


def test_time_integral_matches_closed_form():
    path = inject_path([0.5, 1.0], [2.0, 0.2], PointMeasure.dirac(1.5), 4.0)
    phi = gaussian_bump(0.7, 0.6)
    got = time_integral(path, phi.deriv, 3.0)
    # atom born at b with position p at birth: int_b^t phi'(p - (s - b)) ds = phi(p) - phi(p - (t - b))
    want = (phi(1.5) - phi(1.5 - 3.0)) + (phi(2.0) - phi(2.0 - 2.5)) + (phi(0.2) - phi(0.2 - 2.0))
    assert got == pytest.approx(float(want), abs=1e-9)


def test_martingale_zero_arrival_cancellation(exp1):
    for a in (-1.0, 0.3, 2.5):
        path = inject_path([], [], PointMeasure.dirac(a), 4.0)
        for phi in (gaussian_bump(1.0, 0.5), sigmoid(0.0, 0.3)):
            assert abs(martingale_statistic(path, phi, 0.0, exp1, 3.0)) <= 1e-8


def test_martingale_rejects_indicator(exp1):
    path = inject_path([], [], PointMeasure.dirac(1.0), 4.0)
    with pytest.raises(ValueError):
        martingale_statistic(path, indicator(0.0, 1.0), 1.0, exp1, 1.0)


def _martingales(R, phis, lam=1.0, t=1.0, seed=SEED):
    law = Exponential(1.0)
    out = np.empty((R, len(phis)))
    for r in range(R):
        path = simulate(lam, law, PointMeasure.empty(), t, np.random.default_rng([seed, r]))
        out[r] = [martingale_statistic(path, p, lam, law, t) for p in phis]
    return out


def test_martingale_mean_zero():
    m = _martingales(500, [gaussian_bump(1.0, 0.5)])[:, 0]
    assert abs(m.mean()) <= 4 * m.std(ddof=1) / math.sqrt(m.size)


def test_martingale_variance_and_cross_covariance():
    law = Exponential(1.0)
    phi, psi = gaussian_bump(1.0, 0.5), sigmoid(0.5, 0.7)
    m = _martingales(2000, [phi, psi], lam=2.0)
    cov = np.cov(m.T)
    for i, (a, b) in enumerate(((phi, phi), (psi, psi))):
        want = 2.0 * law.expect(a * b)
        assert cov[i, i] == pytest.approx(want, rel=0.10)
    assert cov[0, 1] == pytest.approx(2.0 * law.expect(phi * psi), rel=0.15)


def test_jump_sizes():
    path = inject_path([0.5, 1.5], [1.0, 2.0], PointMeasure.empty(), 3.0, atom_weight=0.1)
    phi = gaussian_bump(1.0, 0.5)
    assert jump_sizes(path, phi).tolist() == pytest.approx([0.1, 0.1 * float(phi(2.0))])


def test_path_csv():
    path = inject_path([0.5], [2.0], PointMeasure.empty(), 3.0)
    assert path.to_csv().splitlines() == ["event_index,arrival_time,service_time", "0,0.5,2"]


def test_seed_reproducibility(exp1):
    a = simulate(5.0, exp1, PointMeasure.empty(), 3.0, np.random.default_rng(9))
    b = simulate(5.0, exp1, PointMeasure.empty(), 3.0, np.random.default_rng(9))
    assert a.arrival_times.tobytes() == b.arrival_times.tobytes()
    assert a.service_times.tobytes() == b.service_times.tobytes()
