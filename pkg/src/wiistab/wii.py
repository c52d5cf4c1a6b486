"""Weighted integral inequalities: coefficient kernels, bounds and quadrature oracles.

All kernels are evaluated through the normalised entire functions

    g_k(x) = gamma_k(x) / x**(k+1)
    d(x)   = (gamma_0**2 - x**2 e**x) / x**4
    e(x)   = (2 gamma_1**2 - x**2 (x + (x - 1) gamma_0)) / x**6

with ``x = alpha * ell``.  Their Taylor coefficients are all positive, so the
series are free of cancellation and the ``alpha -> 0`` limits are simply the
values at ``x = 0``.  For large ``x`` the closed forms are well conditioned
and are used instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

__all__ = [
    "WiiCoefficients",
    "PolySignal",
    "gamma_k",
    "build_coefficients",
    "single_bound",
    "double_bound",
    "oracle_weighted_integral",
    "oracle_moments",
]

# Closed forms are used above this value of alpha*ell; below it the series.
SERIES_CUTOFF = 5.0
# Above this e**(2x) overflows in the closed forms.
MAX_ALPHA_ELL = 300.0
_SERIES_RTOL = 1e-18
_SERIES_MAX_TERMS = 400

L0 = np.array([1.0, 0.0])


def _check_ell(ell: float) -> None:
    if not (ell > 0.0) or not math.isfinite(ell):
        raise ValueError(f"interval length must be positive and finite, got {ell!r}")


def _check_alpha(alpha: float) -> None:
    if not (alpha >= 0.0) or not math.isfinite(alpha):
        raise ValueError(f"alpha must be non-negative and finite, got {alpha!r}")


def _sum_series(coef, x: float, start: int) -> float:
    """Sum ``coef(j) * x**(j - start)`` for ``j >= start`` until negligible."""
    total = 0.0
    power = 1.0
    for j in range(start, start + _SERIES_MAX_TERMS):
        term = coef(j) * power
        total += term
        if term <= _SERIES_RTOL * total and j > start + 2:
            break
        power *= x
    return total


def _g(k: int, x: float) -> float:
    if x <= SERIES_CUTOFF:
        # x**j / (j+k+1)!, built by a running product
        total = 0.0
        term = 1.0 / math.factorial(k + 1)
        j = 0
        while True:
            total += term
            j += 1
            term *= x / (j + k + 1)
            if term <= _SERIES_RTOL * total or j > _SERIES_MAX_TERMS:
                return total
    head = sum(x**j / math.factorial(j) for j in range(k + 1))
    return (math.exp(x) - head) / x ** (k + 1)


def _d(x: float) -> float:
    if x <= SERIES_CUTOFF:
        return _sum_series(
            lambda k: (2.0**k - 2.0 - k * (k - 1)) / math.factorial(k), x, 4
        )
    g0 = math.expm1(x)
    return (g0 * g0 - x * x * math.exp(x)) / x**4


def _e(x: float) -> float:
    if x <= SERIES_CUTOFF:
        return _sum_series(
            lambda k: (
                2.0 ** (k + 1) - (4 + 4 * k - k * (k - 1) + k * (k - 1) * (k - 2))
            )
            / math.factorial(k),
            x,
            6,
        )
    g0 = math.expm1(x)
    g1 = g0 - x
    return (2.0 * g1 * g1 - x * x * (x + (x - 1.0) * g0)) / x**6


def gamma_k(k: int, alpha: float, ell: float) -> float:
    """Return ``e**(alpha*ell) - sum_{j<=k} (alpha*ell)**j / j!``.

    Accurate to a few ulps for every ``alpha >= 0``; the naive formula loses
    all significant digits of ``gamma_2`` once ``alpha*ell`` drops below 1e-5.
    """
    if k not in (0, 1, 2):
        raise ValueError(f"k must be 0, 1 or 2, got {k!r}")
    _check_ell(ell)
    _check_alpha(alpha)
    x = alpha * ell
    if x > MAX_ALPHA_ELL:
        raise ValueError(f"alpha*ell = {x} overflows the exponential kernels")
    return x ** (k + 1) * _g(k, x)


@dataclass(frozen=True)
class WiiCoefficients:
    """Scalar kernels and row vectors of the weighted inequalities on one interval.

    The four ``*_gain`` ratios and the rows ``l1``/``l2`` are what the LMI
    builders consume.  They stay finite as ``alpha -> 0`` while the raw kernels
    (``gamma*``, ``a_alpha``, ``b_alpha``, ``rho*``) vanish; with
    ``limit_mode`` set the raw kernels are all zero and the ratios hold their
    Jensen/Wirtinger limits.
    """

    alpha: float
    ell: float
    gamma0: float
    gamma1: float
    gamma2: float
    a_alpha: float
    b_alpha: float
    rho0: float
    rho1: float
    single_jensen_gain: float  # alpha / gamma0
    single_refine_gain: float  # alpha / rho0
    double_jensen_gain: float  # alpha**2 / gamma1
    double_refine_gain: float  # 4 alpha**2 / rho1
    l1: np.ndarray = field(repr=False)
    l2: np.ndarray = field(repr=False)
    limit_mode: bool = False

    @property
    def l0(self) -> np.ndarray:
        return L0.copy()


def build_coefficients(alpha: float, ell: float) -> WiiCoefficients:
    """Evaluate every kernel for decay parameter ``alpha`` on an interval of length ``ell``.

    ``alpha = 0`` is accepted and gives the Jensen/Wirtinger limits.
    """
    _check_ell(ell)
    _check_alpha(alpha)
    x = alpha * ell
    if x > MAX_ALPHA_ELL:
        raise ValueError(f"alpha*ell = {x} overflows the exponential kernels")
    g0, g1, g2 = _g(0, x), _g(1, x), _g(2, x)
    d, e = _d(x), _e(x)

    l1 = np.array([1.0, -g0 / (ell * g1)])
    l2 = np.array([1.0, -g1 / (ell * g2)])
    l1.setflags(write=False)
    l2.setflags(write=False)

    return WiiCoefficients(
        alpha=float(alpha),
        ell=float(ell),
        gamma0=x * g0,
        gamma1=x**2 * g1,
        gamma2=x**3 * g2,
        a_alpha=ell**2 * x * (d / g0),
        b_alpha=ell**2 * x**2 * (e / g1),
        rho0=x * (g0 / g1) * (d / g1),
        rho1=x**2 * (g1 / g2) * (e / g2),
        single_jensen_gain=1.0 / (ell * g0),
        single_refine_gain=(g1 / g0) * (g1 / d) / ell,
        double_jensen_gain=1.0 / (ell**2 * g1),
        double_refine_gain=4.0 * (g2 / g1) * (g2 / e) / ell**2,
        l1=l1,
        l2=l2,
        limit_mode=(alpha == 0.0),
    )


def _check_weight(R: np.ndarray, n: int | None = None) -> np.ndarray:
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError(f"weight matrix must be square, got shape {R.shape}")
    if n is not None and R.shape[0] != n:
        raise ValueError(f"weight matrix is {R.shape[0]}x{R.shape[0]}, vectors have length {n}")
    if not np.allclose(R, R.T, rtol=1e-12, atol=1e-14 * np.abs(R).max()):
        raise ValueError("weight matrix must be symmetric")
    try:
        np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise ValueError("weight matrix must be positive definite") from None
    return R


def _pair(u, v) -> tuple[np.ndarray, np.ndarray]:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if u.ndim != 1 or u.shape != v.shape:
        raise ValueError(f"moment vectors must be 1-D of equal length, got {u.shape} and {v.shape}")
    return u, v


def _refined_quadratic(row: np.ndarray, R: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    # zeta' (row' row (x) R) zeta == w' R w with w = row[0] u + row[1] v
    w = row[0] * u + row[1] * v
    return float(w @ R @ w)


def single_bound(coeffs: WiiCoefficients, R, m0, m1) -> float:
    """Refined lower bound for ``int_a^b e^{alpha(s-b)} phi' R phi ds``.

    Parameters
    ----------
    coeffs : WiiCoefficients
        Kernels for the interval.
    R : (n, n) array_like
        Symmetric positive definite weight.
    m0, m1 : (n,) array_like
        ``int phi`` and ``int_a^b int_s^b phi(u) du ds``.
    """
    m0, m1 = _pair(m0, m1)
    R = _check_weight(R, m0.size)
    jensen = coeffs.single_jensen_gain * float(m0 @ R @ m0)
    return jensen + coeffs.single_refine_gain * _refined_quadratic(coeffs.l1, R, m0, m1)


def double_bound(coeffs: WiiCoefficients, R, d1, d2) -> float:
    """Refined lower bound for ``int_a^b int_s^b e^{alpha(u-b)} phi' R phi du ds``.

    ``d1`` and ``d2`` are the double and triple iterated integrals of ``phi``.
    """
    d1, d2 = _pair(d1, d2)
    R = _check_weight(R, d1.size)
    jensen = coeffs.double_jensen_gain * float(d1 @ R @ d1)
    return jensen + coeffs.double_refine_gain * _refined_quadratic(coeffs.l2, R, d1, d2)


@dataclass(frozen=True)
class PolySignal:
    """Vector polynomial ``phi: [a, b] -> R^n`` used as a test signal.

    ``coeffs[i, j]`` multiplies ``s**j`` in component ``i`` (absolute time ``s``).
    """

    coeffs: np.ndarray
    a: float
    b: float

    MAX_DEGREE = 5

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if c.shape[1] - 1 > self.MAX_DEGREE:
            raise ValueError(f"degree {c.shape[1] - 1} exceeds {self.MAX_DEGREE}")
        if not self.b > self.a:
            raise ValueError("PolySignal needs b > a")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite polynomial coefficients")
        object.__setattr__(self, "coeffs", c)

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    def __call__(self, s) -> np.ndarray:
        """Values with shape ``(n,) + shape(s)``."""
        return npoly.polyval(np.asarray(s, dtype=float), self.coeffs.T)


# 32-point Gauss-Legendre rule on [-1, 1]
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)
_PANELS = 8


def _composite_rule(lo, hi):
    """Nodes/weights of the panelled rule; ``lo`` may be an array of left ends."""
    lo = np.asarray(lo, dtype=float)
    width = (hi - lo) / _PANELS
    k = np.arange(_PANELS)
    left = lo[..., None] + width[..., None] * k  # (..., panels)
    half = 0.5 * width[..., None, None]
    nodes = left[..., None] + half * (_GL_NODES + 1.0)
    weights = half * _GL_WEIGHTS * np.ones_like(nodes)
    shape = lo.shape + (_PANELS * _GL_NODES.size,)
    return nodes.reshape(shape), weights.reshape(shape)


def oracle_weighted_integral(phi: PolySignal, alpha: float, R, depth: int = 1) -> float:
    """Evaluate the weighted quadratic integral by composite Gauss-Legendre quadrature.

    depth 1: ``int_a^b e^{alpha(s-b)} phi(s)' R phi(s) ds``
    depth 2: ``int_a^b int_s^b e^{alpha(u-b)} phi(u)' R phi(u) du ds``
    """
    if depth not in (1, 2):
        raise ValueError("depth must be 1 or 2")
    R = np.atleast_2d(np.asarray(R, dtype=float))
    a, b = phi.a, phi.b

    def integrand(u):
        vals = phi(u)  # (n, ...)
        quad = np.einsum("i...,ij,j...->...", vals, R, vals)
        return np.exp(alpha * (u - b)) * quad

    s, ws = _composite_rule(a, b)
    if depth == 1:
        return float(np.sum(ws * integrand(s)))
    u, wu = _composite_rule(s, b)  # inner rule on [s, b] for each outer node
    inner = np.sum(wu * integrand(u), axis=-1)
    return float(np.sum(ws * inner))


def oracle_moments(phi: PolySignal) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact iterated integrals ``(int phi, int int phi, int int int phi)`` over [a, b].

    The inner integrals run to the right endpoint: ``int_a^b int_s^b phi(u) du ds``.
    """
    a, b = phi.a, phi.b
    moments = []
    layer = [npoly.Polynomial(c) for c in phi.coeffs]
    for _ in range(3):
        prims = [p.integ() for p in layer]
        moments.append(np.array([P(b) - P(a) for P in prims]))
        # next layer: s -> int_s^b (current layer)
        layer = [P(b) - P for P in prims]
    return moments[0], moments[1], moments[2]
