"""Gaussian fluctuation limit of the profile process.

The limit is driven by one independent Brownian motion per coordinate of
an orthonormal basis {h_i} of L2(alpha):

    <Y_t, phi> = <Y_0, tau_t phi> + sqrt(lam) sum_i int_0^t c_i(tau_{t-s} phi) dB^i_s

with c_i(psi) = int psi h_i dalpha. By the Ito isometry and Parseval the
variance collapses to lam int_0^t <alpha, (tau_u phi)^2> du; both the
truncated series and the collapsed form are computed here.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, factorial, isfinite, sqrt

import numpy as np

from .functions import TestFunction
from .laws import Exponential, ServiceLaw
from .quadrature import QuadratureError, integrate

DEFAULT_K = 32
DEFAULT_STEPS = 2048
VAR_TOL = 1e-11
ORTHO_TOL = 1e-8

NAMED = ("X", "S", "W")


class PreconditionError(ValueError):
    """A diffusion functional was requested outside its hypotheses."""


class BasisConditionError(ArithmeticError):
    """Numerical orthogonality was lost while building a basis."""

    def __init__(self, msg: str, max_order: int):
        super().__init__(f"{msg} (max usable order {max_order})")
        self.max_order = max_order


# -- Laguerre polynomials --------------------------------------------------

def laguerre_table(kmax: int, x) -> np.ndarray:
    """Rows L_0..L_kmax at x via (i+1) L_{i+1} = (2i+1-x) L_i - i L_{i-1}."""
    x = np.asarray(x, dtype=float)
    out = np.empty((kmax + 1,) + x.shape)
    out[0] = 1.0
    if kmax >= 1:
        out[1] = 1.0 - x
    for i in range(1, kmax):
        out[i + 1] = ((2 * i + 1 - x) * out[i] - i * out[i - 1]) / (i + 1)
    return out


def laguerre(i: int, x):
    if i < 0:
        raise ValueError("order must be nonnegative")
    v = laguerre_table(i, x)[i]
    return float(v) if v.ndim == 0 else v


def laguerre_rodrigues(i: int, x) -> float:
    """(e^x / i!) d^i/dx^i (e^-x x^i), expanded and summed in exact arithmetic."""
    if i < 0:
        raise ValueError("order must be nonnegative")
    q = Fraction(float(x))
    total = sum(Fraction(comb(i, k) * (-1) ** k, factorial(k)) * q**k for k in range(i + 1))
    return float(total)


# -- orthonormal bases -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BasisFamily:
    """Orthonormal polynomials h_0..h_K_max in L2(law).

    ``construction`` is "laguerre" (closed form for exponential laws) or
    "gram-schmidt"; the latter stores the recurrence
    x h_{i-1} = sum_{j<i} R[i, j] h_j + R[i, i] h_i.
    """

    law: ServiceLaw
    K_max: int
    construction: str = "laguerre"
    R: np.ndarray | None = field(default=None, repr=False)

    def table(self, x, K: int | None = None) -> np.ndarray:
        """Rows h_0..h_{K-1} evaluated at x (default K = K_max + 1)."""
        K = self.K_max + 1 if K is None else K
        if K > self.K_max + 1:
            raise ValueError(f"K={K} exceeds basis order {self.K_max}")
        x = np.asarray(x, dtype=float)
        if self.construction == "laguerre":
            return laguerre_table(K - 1, self.law.rate * x)
        out = np.empty((K,) + x.shape)
        out[0] = 1.0
        R = self.R
        for i in range(1, K):
            acc = x * out[i - 1]
            for j in range(i):
                acc = acc - R[i, j] * out[j]
            out[i] = acc / R[i, i]
        return out

    def h(self, i: int, x):
        v = self.table(x, i + 1)[i]
        return float(v) if v.ndim == 0 else v


def laguerre_basis(law: Exponential, K_max: int = 64) -> BasisFamily:
    if not isinstance(law, Exponential):
        raise TypeError("the Laguerre basis is orthonormal only for exponential laws")
    return BasisFamily(law, int(K_max), "laguerre")


def gram_schmidt_basis(law: ServiceLaw, K_max: int) -> BasisFamily:
    """Orthonormalize x h_{i-1} (same span as the monomials) against the law.

    Inner products use a Gauss rule exact to degree 2 K_max + 1; each new
    vector is orthogonalized twice. Raises BasisConditionError when the
    remaining norm collapses or the Gram matrix drifts from the identity.
    """
    n = K_max + 2
    x, w = law.gauss_rule(n)
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    H = np.zeros((K_max + 1, x.size))
    R = np.zeros((K_max + 1, K_max + 1))
    H[0] = 1.0 / sqrt(w.sum())
    if abs(H[0, 0] - 1.0) > 1e-12:
        raise ValueError("law rule does not have unit mass")
    for i in range(1, K_max + 1):
        v = x * H[i - 1]
        start = sqrt(np.dot(w, v * v))
        for _ in range(2):
            c = H[:i] @ (w * v)
            v = v - c @ H[:i]
            R[i, :i] += c
        nrm = sqrt(np.dot(w, v * v))
        if not nrm > 1e-10 * start:
            raise BasisConditionError(f"order {i} is numerically dependent", i - 1)
        R[i, i] = nrm
        H[i] = v / nrm
    gram = (H * w) @ H.T
    err = np.abs(gram - np.eye(K_max + 1))
    bad = np.nonzero(err.max(axis=1) > ORTHO_TOL)[0]
    if bad.size:
        raise BasisConditionError("Gram matrix drifted from the identity", int(bad[0]) - 1)
    R.setflags(write=False)
    return BasisFamily(law, int(K_max), "gram-schmidt", R)


def default_basis(law: ServiceLaw, K_max: int = 64) -> BasisFamily:
    return laguerre_basis(law, K_max) if isinstance(law, Exponential) else gram_schmidt_basis(law, K_max)


def orthonormality_error(basis: BasisFamily, K: int | None = None) -> float:
    K = basis.K_max + 1 if K is None else K
    x, w = basis.law.gauss_rule(K + 4)
    H = basis.table(x, K)
    return float(np.abs((H * w) @ H.T - np.eye(K)).max())


# -- coordinates -------------------------------------------------------------

def coordinate(basis: BasisFamily, i: int, psi: TestFunction) -> float:
    """c_i(psi) = int psi h_i dalpha."""
    return float(coordinates(basis, psi, i + 1)[i])


def coordinates(basis: BasisFamily, psi: TestFunction, K: int) -> np.ndarray:
    nodes, weights = basis.law._rule(tuple(sorted(set(psi.jumps))))
    vals = basis.table(nodes, K) @ (weights * psi(nodes))
    if not np.all(np.isfinite(vals)):
        raise QuadratureError(f"non-finite coordinates for {psi.name}")
    return vals


def _named(phi) -> str | None:
    name = phi if isinstance(phi, str) else getattr(phi, "name", None)
    return name if name in NAMED else None


def _closed_form_table(basis: BasisFamily, kind: str, u, K: int) -> np.ndarray:
    """c_i(tau_u phi) for phi in {X, S, W} on a rate-r Laguerre basis.

    With L_{-1} = L_{-2} = 0 and v = r u:
        int_u^inf L_i(r x) r e^{-r x} dx         = e^{-v} (L_i - L_{i-1})(v)
        int_u^inf (x - u) L_i(r x) r e^{-r x} dx = e^{-v} (L_i - 2 L_{i-1} + L_{i-2})(v) / r
    """
    r = basis.law.rate
    v = r * np.asarray(u, dtype=float)
    L = laguerre_table(K, v)[:K]
    Lm1 = np.concatenate([np.zeros((1,) + v.shape), L[:-1]])
    ev = np.exp(-v)
    if kind == "X" or kind == "S":
        c = ev * (L - Lm1)
        if kind == "S":
            c = -c
            c[0] += 1.0
        return c
    Lm2 = np.concatenate([np.zeros((1,) + v.shape), Lm1[:-1]])
    return ev * (L - 2.0 * Lm1 + Lm2) / r


def _functional(phi):
    from .functions import congestion_fn, service_fn, workload_fn
    if isinstance(phi, str):
        return {"X": congestion_fn, "S": service_fn, "W": workload_fn}[phi]()
    return phi


def coordinate_table(basis: BasisFamily, phi, u, K: int) -> np.ndarray:
    """Matrix (K, len(u)) of c_i(tau_u phi); closed forms for X/S/W on Laguerre bases."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    kind = _named(phi)
    if kind is not None and basis.construction == "laguerre":
        return _closed_form_table(basis, kind, u, K)
    f = _functional(phi)
    out = np.empty((K, u.size))
    for j, uj in enumerate(u):
        out[:, j] = coordinates(basis, f.shift(float(uj)), K)
    return out


# -- covariance and variance -----------------------------------------------

@dataclass(frozen=True)
class CovarianceKernel:
    """gamma_t(phi, psi) = lam t <alpha, phi psi>."""

    lam: float
    law: ServiceLaw

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")

    def __call__(self, t: float, phi: TestFunction, psi: TestFunction) -> float:
        if t == 0:
            return 0.0
        return self.lam * t * self.law.expect(phi * psi)


@dataclass(frozen=True)
class LimitInitial:
    """Y_0 as a finite signed atom list (zero by default)."""

    positions: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        if len(self.positions) != len(self.weights):
            raise ValueError("positions and weights must have equal length")

    def __call__(self, phi) -> float:
        if not self.positions:
            return 0.0
        return float(np.dot(np.asarray(self.weights, float), phi(np.asarray(self.positions, float))))

    def shifted(self, phi, t: float) -> float:
        """<Y_0, tau_t phi>."""
        if not self.positions:
            return 0.0
        return float(np.dot(np.asarray(self.weights, float), phi(np.asarray(self.positions, float) - t)))


def _check_workload(kernel: CovarianceKernel, phi):
    if _named(phi) == "W" and not isfinite(kernel.law.second_moment):
        raise PreconditionError("workload diffusion needs a finite second service moment")


def collapsed_variance(kernel: CovarianceKernel, phi, t: float, tol: float = VAR_TOL) -> float:
    """lam int_0^t <alpha, (tau_u phi)^2> du."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 0.0
    _check_workload(kernel, phi)
    law, lam = kernel.law, kernel.lam
    kind = _named(phi)
    if kind == "X":
        return lam * float(law.integrated_tail(t))
    if kind == "S":
        return lam * (t - float(law.integrated_tail(t)))
    if kind == "W":
        return lam * float(law.integrated_partial_moment(2, 0.0, t))
    sq = phi.square()
    return lam * integrate(lambda u: law.expect(sq.shift(u)), 0.0, t, tol)


def clt_variance(kernel: CovarianceKernel, basis: BasisFamily, phi, t: float, K: int = DEFAULT_K,
                 tol: float = VAR_TOL) -> float:
    """lam sum_{i<K} int_0^t c_i(tau_u phi)^2 du."""
    if K > basis.K_max + 1:
        raise ValueError(f"K={K} exceeds basis order {basis.K_max}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 0.0
    _check_workload(kernel, phi)

    def f(u):
        c = coordinate_table(basis, phi, [u], K)[:, 0]
        return float(np.dot(c, c))
    return kernel.lam * integrate(f, 0.0, t, tol)


def cross_covariance(kernel: CovarianceKernel, basis: BasisFamily, phi, psi, s: float, t: float,
                     K: int = DEFAULT_K, tol: float = VAR_TOL) -> float:
    """Cov(<Y_s, phi>, <Y_t, psi>) for s <= t and Y_0 = 0:
    lam sum_{i<K} int_0^s c_i(tau_{s-v} phi) c_i(tau_{t-v} psi) dv."""
    if s > t:
        raise ValueError("need s <= t")
    if s == 0:
        return 0.0

    def f(v):
        a = coordinate_table(basis, phi, [s - v], K)[:, 0]
        b = coordinate_table(basis, psi, [t - v], K)[:, 0]
        return float(np.dot(a, b))
    return kernel.lam * integrate(f, 0.0, s, tol)


# -- sampler -----------------------------------------------------------------

def _grid(t_grid, cells: int):
    """Uniform grid with ``cells`` cells on [0, t_max], merged with t_grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or np.any(np.diff(t_grid) <= 0) or t_grid[0] < 0:
        raise ValueError("t_grid must be nonnegative and strictly increasing")
    t_max = float(t_grid[-1])
    eps = 1e-12 * max(t_max, 1.0)
    uniform = np.linspace(0.0, t_max, cells + 1) if t_max > 0 else np.zeros(1)
    pts = np.union1d(uniform, t_grid)
    pts = pts[np.concatenate([[True], np.diff(pts) > eps])]
    t_idx = np.searchsorted(pts, t_grid - eps)
    return pts, t_idx, uniform, eps


def _ito_matrix(basis, phis, pts, t_idx, K) -> np.ndarray:
    """Column (phi, t_j) holds c_i(tau_{t_j - s_k} phi) at left points s_k < t_j, zero after."""
    m = pts.size - 1
    cols = []
    for phi in phis:
        for j in t_idx:
            C = np.zeros((K, m))
            if j:
                C[:, :j] = coordinate_table(basis, phi, pts[j] - pts[:j], K)
            cols.append(C.ravel())
    return np.stack(cols, axis=1)


def sample_limit(kernel: CovarianceKernel, basis: BasisFamily, y0: LimitInitial | None, phis,
                 t_grid, K: int, rng: np.random.Generator, R: int = 1, steps: int = DEFAULT_STEPS,
                 coupled: bool = False, chunk: int = 64):
    """Joint samples of <Y_t, phi> over phis x t_grid, shape (R, len(phis), len(t_grid)).

    Brownian increments are drawn on a uniform grid of ``steps`` cells
    (merged with the t_grid points) and the stochastic integrals are
    left-point sums. With ``coupled=True`` the paths are drawn on a grid of
    half that step and the pair (step t_max/steps, step t_max/(2 steps)) is
    returned, both computed from the same Brownian paths.
    """
    if K > basis.K_max + 1:
        raise ValueError(f"K={K} exceeds basis order {basis.K_max}")
    for phi in phis:
        _check_workload(kernel, phi)
    y0 = y0 or LimitInitial()
    t_arr = np.asarray(t_grid, dtype=float)
    pts, t_idx, uniform, eps = _grid(t_arr, 2 * steps if coupled else steps)
    C = _ito_matrix(basis, phis, pts, t_idx, K)
    if coupled and pts.size == 1:
        C = np.concatenate([C, C], axis=1)
    elif coupled:
        keep = np.zeros(pts.size, dtype=bool)
        keep[np.searchsorted(pts, uniform[::2] - eps)] = True
        keep[t_idx] = True
        cidx = np.nonzero(keep)[0]
        Cc = _ito_matrix(basis, phis, pts[cidx], np.searchsorted(cidx, t_idx), K)
        # a coarse cell's coefficient applies to every fine cell inside it,
        # so the coarse sums come out of the same fine increments
        reps = np.diff(cidx)
        Cc = np.repeat(Cc.reshape(K, cidx.size - 1, -1), reps, axis=1).reshape(C.shape)
        C = np.concatenate([Cc, C], axis=1)
    base = np.array([[y0.shifted(_functional(phi), t) for t in t_arr] for phi in phis]).ravel()
    ncol = base.size
    out = np.empty((R, C.shape[1]))
    sd = np.sqrt(np.diff(pts))
    # dB = sd * z: fold the step sizes into the coefficients once
    C = C * np.tile(sd, K)[:, None]
    root = sqrt(kernel.lam)
    for r0 in range(0, R, chunk):
        m = min(chunk, R - r0)
        z = rng.standard_normal((m, K * sd.size))
        out[r0:r0 + m] = z @ C
    out = root * out
    shape = (R, len(phis), t_arr.size)
    if coupled:
        return (base + out[:, :ncol]).reshape(shape), (base + out[:, ncol:]).reshape(shape)
    return (base + out).reshape(shape)


# -- performance diffusions ------------------------------------------------

def _diffusion(kind: str, kernel, t, basis, K, y0, rng, R, steps, method):
    phi = kind
    _check_workload(kernel, phi)
    if rng is None:
        if method == "collapsed":
            return collapsed_variance(kernel, phi, t)
        return clt_variance(kernel, basis or default_basis(kernel.law, max(K - 1, 1)), phi, t, K)
    basis = basis or default_basis(kernel.law, max(K - 1, 1))
    return sample_limit(kernel, basis, y0, [phi], [t], K, rng, R, steps)[:, 0, 0]


def diffusion_congestion(kernel, t, basis=None, K=DEFAULT_K, y0=None, rng=None, R=1,
                         steps=DEFAULT_STEPS, method="collapsed"):
    """Variance of <Y_t, 1_(0,inf)> (no rng) or R samples of it."""
    return _diffusion("X", kernel, t, basis, K, y0, rng, R, steps, method)


def diffusion_service(kernel, t, basis=None, K=DEFAULT_K, y0=None, rng=None, R=1,
                      steps=DEFAULT_STEPS, method="collapsed"):
    return _diffusion("S", kernel, t, basis, K, y0, rng, R, steps, method)


def diffusion_workload(kernel, t, basis=None, K=DEFAULT_K, y0=None, rng=None, R=1,
                       steps=DEFAULT_STEPS, method="collapsed"):
    return _diffusion("W", kernel, t, basis, K, y0, rng, R, steps, method)
