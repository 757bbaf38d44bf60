import math
import warnings

import numpy as np
import pytest

from mginf.functions import gaussian_bump, indicator, constant, sigmoid
from mginf.laws import Exponential, make_deterministic
from mginf.measure import PointMeasure, integrate, performance_triple
from mginf.scaling import (HypothesisWarning, NormalizedSnapshotRequest, ScalingScheme, normalized_snapshot_from_raw,
                           predicted_qv, scaled_martingale, scheme_for_paper_example, simulate_normalized,
                           simulate_raw)
from mginf.simulator import jump_sizes, simulate, snapshot

SEED = 20081218


def test_canonical_scheme_satisfies_hypotheses_by_construction(exp1):
    sch = scheme_for_paper_example(1.0, exp1)
    for n in (1, 10, 1000):
        assert math.sqrt(n) * abs(sch.rate(n) - sch.lambda_limit) == 0.0
        assert sch.raw_law(n).scaled(1.0 / n).mean - exp1.mean == pytest.approx(0.0, abs=1e-15)
    assert sch.initial(7).total_weight == 0.0


def test_scheme_rejects_atomic_laws():
    with pytest.raises(ValueError):
        scheme_for_paper_example(1.0, make_deterministic(1.0))
    with pytest.warns(HypothesisWarning):
        scheme_for_paper_example(1.0, make_deterministic(1.0), allow_atomic=True)
    with pytest.raises(ValueError):
        scheme_for_paper_example(0.0, Exponential(1.0))


def test_n_equal_one_is_plain_simulation(exp1):
    sch = scheme_for_paper_example(1.5, exp1, PointMeasure.dirac(1.0))
    a = simulate_normalized(sch, 1, 4.0, np.random.default_rng(3))
    b = simulate(1.5, exp1, PointMeasure.dirac(1.0), 4.0, np.random.default_rng(3))
    assert a.arrival_times.tobytes() == b.arrival_times.tobytes()
    assert a.atom_weight == 1.0


def test_normalized_mass_equals_arrivals_plus_initial(exp1):
    mu0 = PointMeasure([0.4, 2.0], [0.25, 0.5])
    sch = scheme_for_paper_example(2.0, exp1, mu0)
    path = simulate_normalized(sch, 50, 3.0, np.random.default_rng(1))
    for t in (0.0, 0.7, 3.0):
        mu = snapshot(path, t)
        assert mu.total_weight == pytest.approx(path.arrivals_by(t) / 50 + 0.75, abs=1e-12)


def test_normalized_arrivals_mean(exp1):
    sch = scheme_for_paper_example(1.0, exp1)
    n, t = 40, 2.0
    vals = np.array([simulate_normalized(sch, n, t, np.random.default_rng([SEED, r])).arrivals_by(t) / n
                     for r in range(2000)])
    assert abs(vals.mean() - 1.0 * t) <= 4 * vals.std(ddof=1) / math.sqrt(vals.size)


def test_invalid_n(exp1):
    sch = scheme_for_paper_example(1.0, exp1)
    with pytest.raises(ValueError):
        simulate_normalized(sch, 0, 1.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        NormalizedSnapshotRequest(0, 1.0)


def test_snapshot_request(exp1):
    sch = scheme_for_paper_example(1.0, exp1)
    path = simulate_normalized(sch, 10, 2.0, np.random.default_rng(0))
    req = NormalizedSnapshotRequest(10, 1.5, (constant(1.0), indicator(0.0, math.inf)))
    tot, x = req.evaluate(path)
    assert tot == pytest.approx(path.arrivals_by(1.5) / 10)
    assert x == performance_triple(snapshot(path, 1.5))[0]


def test_predicted_qv_examples(exp1):
    sch = scheme_for_paper_example(1.0, exp1)
    assert predicted_qv(sch, 100, constant(1.0), 2.0) == pytest.approx(0.02, abs=1e-15)
    phi = gaussian_bump(1.0, 0.5)
    assert predicted_qv(sch, 400, phi, 1.0) == predicted_qv(sch, 100, phi, 1.0) / 4
    assert predicted_qv(sch, 100, phi, 0.0) == 0.0


def test_scaled_martingale_zero_rate_cancels(exp1):
    sch = ScalingScheme(exp1, 1.0, lambda_of_n=lambda n: 0.0, initial_limit=PointMeasure([0.5, 1.5], [0.2, 0.3]))
    path = simulate_normalized(sch, 20, 2.0, np.random.default_rng(0))
    assert path.arrival_times.size == 0
    assert abs(scaled_martingale(path, gaussian_bump(1.0, 0.5), sch, 20, 2.0)) <= 1e-8
    with pytest.raises(ValueError):
        scaled_martingale(path, indicator(0, 1), sch, 20, 1.0)


def test_scaled_martingale_mean_and_qv(exp1):
    sch = scheme_for_paper_example(1.0, exp1)
    phi = gaussian_bump(1.0, 0.5)
    n, R = 200, 2000
    m = np.array([scaled_martingale(simulate_normalized(sch, n, 1.0, np.random.default_rng([SEED, r])),
                                    phi, sch, n, 1.0) for r in range(R)])
    assert abs(m.mean()) <= 4 * m.std(ddof=1) / math.sqrt(R)
    assert m.var(ddof=1) == pytest.approx(predicted_qv(sch, n, phi, 1.0), rel=0.10)


def test_martingale_increments_uncorrelated(exp1):
    sch = scheme_for_paper_example(1.0, exp1)
    phi = sigmoid(0.5, 0.7)
    n, R = 50, 2000
    a = np.empty(R)
    b = np.empty(R)
    for r in range(R):
        path = simulate_normalized(sch, n, 2.0, np.random.default_rng([SEED, 7, r]))
        m1 = scaled_martingale(path, phi, sch, n, 1.0)
        a[r], b[r] = m1, scaled_martingale(path, phi, sch, n, 2.0) - m1
    rho = np.corrcoef(a, b)[0, 1]
    assert abs(rho) <= 4 / math.sqrt(R)


def test_direct_and_literal_rescaling_agree(exp1):
    mu0 = PointMeasure([0.5], [1.0])
    sch = scheme_for_paper_example(1.0, exp1, mu0)
    phi = gaussian_bump(0.5, 0.5)
    t, R = 1.0, 2000
    for n in (2, 5):
        direct = np.array([integrate(snapshot(simulate_normalized(sch, n, t, np.random.default_rng([SEED, n, r])), t),
                                     phi) for r in range(R)])
        literal = np.array([integrate(normalized_snapshot_from_raw(
            simulate_raw(sch, n, t, np.random.default_rng([SEED, 99, n, r])), n, t), phi) for r in range(R)])
        se = math.sqrt(direct.var(ddof=1) / R + literal.var(ddof=1) / R)
        assert abs(direct.mean() - literal.mean()) <= 4 * se
        # variance difference: SE of a sample variance ~ var * sqrt(2/R) for near-Gaussian data
        v1, v2 = direct.var(ddof=1), literal.var(ddof=1)
        sev = math.sqrt(2.0 / R) * math.sqrt(v1**2 + v2**2) * 1.5
        assert abs(v1 - v2) <= 4 * sev


def test_literal_rescaling_is_exact_on_a_fixed_path(exp1):
    sch = scheme_for_paper_example(1.0, exp1, PointMeasure([0.5], [1.0]))
    raw = simulate_raw(sch, 4, 2.0, np.random.default_rng(0))
    assert raw.initial.positions.tolist() == [2.0] and raw.initial.weights.tolist() == [4.0]
    mu = normalized_snapshot_from_raw(raw, 4, 1.0)
    direct = snapshot(raw, 4.0)
    assert mu.total_weight == pytest.approx(direct.total_weight / 4)
    assert sorted(mu.positions) == pytest.approx(sorted(direct.positions / 4))


def test_jump_bound_pathwise(exp1):
    sch = scheme_for_paper_example(1.0, exp1)
    for phi in (gaussian_bump(1.0, 0.5), sigmoid(0.2, 0.3), indicator(0.0, 1.0)):
        for n in (10, 100):
            path = simulate_normalized(sch, n, 2.0, np.random.default_rng(n))
            bound = phi.sup_bound / n
            assert np.all(jump_sizes(path, phi) <= bound * (1 + 1e-12))
