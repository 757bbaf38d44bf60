import math

import numpy as np
import pytest

from mginf.quadrature import (QuadratureError, adaptive_simpson, adaptive_simpson_vec,
                              gauss_legendre_panels, integrate)


def test_simpson_polynomial_and_exp():
    assert adaptive_simpson(lambda x: x**3, 0.0, 2.0) == pytest.approx(4.0, abs=1e-12)
    assert adaptive_simpson(np.exp, 0.0, 1.0) == pytest.approx(math.e - 1, abs=1e-9)


def test_simpson_vectorised_matches_scalar():
    lo = np.array([0.0, 1.0, -2.0])
    hi = np.array([1.0, 3.0, 0.5])
    p = np.array([0.5, 2.0, -1.0])
    got = adaptive_simpson_vec(lambda s, q: np.sin(q * s), lo, hi, p)
    for k in range(3):
        want = adaptive_simpson(lambda s: math.sin(p[k] * s), lo[k], hi[k])
        assert got[k] == pytest.approx(want, abs=1e-12)


def test_simpson_empty_and_degenerate():
    assert adaptive_simpson_vec(lambda s, q: s, [], []).size == 0
    assert adaptive_simpson(lambda s: s, 1.0, 1.0) == 0.0


def test_simpson_surfaces_nonconvergence():
    with pytest.raises(QuadratureError):
        adaptive_simpson(lambda s: np.where(s > 0.3, 1.0 / np.sqrt(np.abs(s - 0.3) + 1e-300), 0.0),
                         0.0, 1.0, tol=1e-14, max_depth=6)
    with pytest.raises(QuadratureError):
        adaptive_simpson(lambda s: np.full_like(s, np.nan), 0.0, 1.0)


def test_integrate_wrapper():
    assert integrate(lambda s: math.exp(-s), 0.0, 5.0) == pytest.approx(1 - math.exp(-5), abs=1e-12)
    assert integrate(lambda s: 1.0, 2.0, 2.0) == 0.0


def test_gauss_legendre_panels_split_at_breaks():
    x, w = gauss_legendre_panels(0.0, 2.0, breaks=(0.7,), panels=4, order=8)
    assert w.sum() == pytest.approx(2.0, abs=1e-14)
    step = np.dot(w, (x > 0.7).astype(float))
    assert step == pytest.approx(1.3, abs=1e-14)
