"""Affine LMI containers and the builders for the exponential-stability conditions.

Matrix expressions are carried as :class:`AffineMatrix` objects, a constant
term plus one coefficient slice per scalar decision parameter, so the
builders read like the block formulas they implement::

    Pi0 = F0.T @ P @ F1 + F1.T @ P @ F0 + alpha * (F0.T @ P @ F0)
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .systems import ConstantDelaySystem, IntervalDelaySystem, balancing_scale
from .wii import build_coefficients

__all__ = [
    "AffineMatrix",
    "DecisionVariable",
    "Structure",
    "Sense",
    "AffineConstraint",
    "LmiProblem",
    "ParameterLayout",
    "kron",
    "selectors",
    "variable_count",
    "build_theorem41",
    "build_theorem42",
    "build_corollary41",
    "theorem42_omega",
    "corollary41_omega",
    "default_epsilon",
    "certificate_to_original",
]

# Asymmetry tolerated (relative to the entry scale) before symmetrisation.
SYMMETRY_RTOL = 1e-14


class AffineMatrix:
    """``const + sum_k x_k * coef[k]`` for a vector ``x`` of scalar parameters."""

    __array_ufunc__ = None  # make ``ndarray @ AffineMatrix`` defer to __rmatmul__

    def __init__(self, const: np.ndarray, coef: np.ndarray):
        const = np.asarray(const, dtype=float)
        coef = np.asarray(coef, dtype=float)
        if coef.shape[1:] != const.shape:
            raise ValueError(f"coefficient slices {coef.shape[1:]} do not match constant {const.shape}")
        self.const = const
        self.coef = coef

    @classmethod
    def constant(cls, M, nparams: int) -> "AffineMatrix":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls(M, np.zeros((nparams,) + M.shape))

    @property
    def shape(self) -> tuple[int, int]:
        return self.const.shape

    @property
    def nparams(self) -> int:
        return self.coef.shape[0]

    @property
    def T(self) -> "AffineMatrix":
        return AffineMatrix(self.const.T, self.coef.transpose(0, 2, 1))

    def _lift(self, other) -> "AffineMatrix":
        if isinstance(other, AffineMatrix):
            if other.nparams != self.nparams:
                raise ValueError("expressions over different parameter layouts")
            return other
        other = np.asarray(other, dtype=float)
        if other.ndim == 0 and other == 0:
            return AffineMatrix.constant(np.zeros(self.shape), self.nparams)
        return AffineMatrix.constant(np.broadcast_to(other, self.shape), self.nparams)

    def __add__(self, other):
        other = self._lift(other)
        return AffineMatrix(self.const + other.const, self.coef + other.coef)

    __radd__ = __add__

    def __neg__(self):
        return AffineMatrix(-self.const, -self.coef)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, scalar):
        if isinstance(scalar, AffineMatrix) or np.ndim(scalar) != 0:
            return NotImplemented
        return AffineMatrix(scalar * self.const, scalar * self.coef)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, AffineMatrix):
            raise TypeError("product of two affine expressions is not affine")
        other = np.atleast_2d(np.asarray(other, dtype=float))
        return AffineMatrix(self.const @ other, self.coef @ other)

    def __rmatmul__(self, other):
        other = np.atleast_2d(np.asarray(other, dtype=float))
        return AffineMatrix(other @ self.const, other @ self.coef)

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.const + np.tensordot(x, self.coef, axes=1)

    def __repr__(self):
        return f"AffineMatrix(shape={self.shape}, nparams={self.nparams})"


def kron(left, right):
    """Kronecker product; ``right`` may be an :class:`AffineMatrix`."""
    if isinstance(left, AffineMatrix):
        raise TypeError("only the right factor may be affine")
    left = np.atleast_2d(np.asarray(left, dtype=float))
    if not isinstance(right, AffineMatrix):
        return np.kron(left, np.atleast_2d(np.asarray(right, dtype=float)))
    p, q = left.shape
    r, s = right.shape
    const = np.kron(left, right.const)
    # (K, r, s) -> (K, p*r, q*s)
    coef = np.einsum("ij,kab->kiajb", left, right.coef).reshape(right.nparams, p * r, q * s)
    return AffineMatrix(const, coef)


def selectors(n: int, blocks: int) -> list[np.ndarray]:
    """Block selectors ``e_i = [0 ... I_n ... 0]`` (n x blocks*n), 0-based list."""
    eye = np.eye(blocks * n)
    return [eye[i * n : (i + 1) * n] for i in range(blocks)]


class Structure(str, enum.Enum):
    SYMMETRIC = "symmetric"
    GENERAL = "general"


@dataclass(frozen=True)
class DecisionVariable:
    name: str
    rows: int
    cols: int
    structure: Structure = Structure.SYMMETRIC
    psd_required: bool = True

    def __post_init__(self):
        if self.structure is Structure.SYMMETRIC and self.rows != self.cols:
            raise ValueError(f"symmetric variable {self.name} must be square")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def size(self) -> int:
        r, c = self.rows, self.cols
        return r * (r + 1) // 2 if self.structure is Structure.SYMMETRIC else r * c

    def basis(self) -> np.ndarray:
        """Coefficient slices, shape ``(size, rows, cols)``."""
        r, c = self.rows, self.cols
        out = np.zeros((self.size, r, c))
        if self.structure is Structure.SYMMETRIC:
            for k, (i, j) in enumerate(zip(*np.triu_indices(r))):
                out[k, i, j] = 1.0
                out[k, j, i] = 1.0
        else:
            out.reshape(self.size, r * c)[np.arange(self.size), np.arange(self.size)] = 1.0
        return out

    def pack(self, M) -> np.ndarray:
        M = np.asarray(M, dtype=float)
        if M.shape != self.shape:
            raise ValueError(f"{self.name}: expected shape {self.shape}, got {M.shape}")
        if self.structure is Structure.SYMMETRIC:
            return M[np.triu_indices(self.rows)]
        return M.reshape(-1)


class ParameterLayout:
    """Assigns consecutive scalar-parameter slots to a list of variables."""

    def __init__(self, variables: Iterable[DecisionVariable]):
        self.variables = tuple(variables)
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate variable names in {names}")
        self.offsets = {}
        k = 0
        for v in self.variables:
            self.offsets[v.name] = k
            k += v.size
        self.nparams = k

    def __getitem__(self, name: str) -> AffineMatrix:
        var = next(v for v in self.variables if v.name == name)
        coef = np.zeros((self.nparams,) + var.shape)
        k = self.offsets[name]
        coef[k : k + var.size] = var.basis()
        return AffineMatrix(np.zeros(var.shape), coef)

    def unpack(self, x) -> dict[str, np.ndarray]:
        x = np.asarray(x, dtype=float)
        out = {}
        for v in self.variables:
            k = self.offsets[v.name]
            out[v.name] = np.tensordot(x[k : k + v.size], v.basis(), axes=1)
        return out

    def pack(self, certificate: Mapping[str, np.ndarray]) -> np.ndarray:
        x = np.zeros(self.nparams)
        for v in self.variables:
            if v.name not in certificate:
                raise KeyError(f"certificate lacks variable {v.name!r}")
            k = self.offsets[v.name]
            x[k : k + v.size] = v.pack(certificate[v.name])
        return x


class Sense(str, enum.Enum):
    NEGATIVE_DEFINITE = "negative_definite"  # M < 0
    POSITIVE_SEMIDEFINITE = "positive_semidefinite"  # M >= 0
    POSITIVE_DEFINITE = "positive_definite"  # M > 0

    @property
    def sign(self) -> float:
        """Orientation that turns the constraint into ``sign * M >= 0``."""
        return -1.0 if self is Sense.NEGATIVE_DEFINITE else 1.0

    @property
    def strict(self) -> bool:
        return self is not Sense.POSITIVE_SEMIDEFINITE


@dataclass(frozen=True)
class AffineConstraint:
    name: str
    sense: Sense
    constant: np.ndarray
    coefficients: np.ndarray  # (nparams, size, size)

    @classmethod
    def from_expression(cls, name: str, sense: Sense, expr: AffineMatrix) -> "AffineConstraint":
        m, k = expr.shape
        if m != k:
            raise ValueError(f"constraint {name} is not square: {expr.shape}")
        scale = max(np.abs(expr.const).max(initial=0.0), np.abs(expr.coef).max(initial=0.0), 1.0)
        asym = max(
            np.abs(expr.const - expr.const.T).max(initial=0.0),
            np.abs(expr.coef - expr.coef.transpose(0, 2, 1)).max(initial=0.0),
        )
        if asym > SYMMETRY_RTOL * scale * max(m, 1):
            raise AssertionError(f"constraint {name} assembled asymmetric ({asym:.3g})")
        const = 0.5 * (expr.const + expr.const.T)
        coef = 0.5 * (expr.coef + expr.coef.transpose(0, 2, 1))
        return cls(name, sense, const, coef)

    @property
    def size(self) -> int:
        return self.constant.shape[0]

    def evaluate(self, x) -> np.ndarray:
        return self.constant + np.tensordot(np.asarray(x, dtype=float), self.coefficients, axes=1)

    def oriented(self, x) -> np.ndarray:
        """The matrix that must be positive (semi)definite."""
        return self.sense.sign * self.evaluate(x)

    def coefficient_map(self) -> dict[int, np.ndarray]:
        """Nonzero coefficient slices keyed by parameter index."""
        nz = np.flatnonzero(np.abs(self.coefficients).reshape(self.coefficients.shape[0], -1).max(axis=1))
        return {int(k): self.coefficients[k] for k in nz}


@dataclass(frozen=True)
class LmiProblem:
    """Affine LMI feasibility problem over structured decision variables.

    Strict constraints are enforced with the margin ``epsilon``:
    ``M < 0`` means ``M <= -epsilon I`` and ``P > 0`` means ``P >= epsilon I``.
    """

    variables: tuple[DecisionVariable, ...]
    constraints: tuple[AffineConstraint, ...]
    epsilon: float = 0.0
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def layout(self) -> ParameterLayout:
        return ParameterLayout(self.variables)

    @property
    def nparams(self) -> int:
        return sum(v.size for v in self.variables)

    @property
    def scale(self) -> float:
        """Largest absolute entry over all constraint data (at least 1)."""
        vals = [1.0]
        for c in self.constraints:
            vals.append(np.abs(c.constant).max(initial=0.0))
            vals.append(np.abs(c.coefficients).max(initial=0.0))
        return float(max(vals))

    def unpack(self, x) -> dict[str, np.ndarray]:
        return self.layout.unpack(x)

    def pack(self, certificate: Mapping[str, np.ndarray]) -> np.ndarray:
        return self.layout.pack(certificate)

    @classmethod
    def empty(cls) -> "LmiProblem":
        return cls((), (), 0.0, {"theorem": "empty"})


def variable_count(problem: LmiProblem) -> int:
    """Number of scalar decision parameters."""
    return problem.nparams


def default_epsilon(system) -> float:
    """Strictness margin scaled by the system matrices."""
    return 1e-6 * (1.0 + system.scale)


def _prepare(system, balance: bool):
    if not balance:
        return system, np.ones(system.n)
    d = balancing_scale(system)
    return system.scaled(d), d


def certificate_to_original(problem: LmiProblem, certificate: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Map a certificate of a balanced problem back to the original state coordinates.

    A variable acting on ``k`` stacked state blocks transforms as
    ``V -> S' V S`` with ``S = I_k (x) diag(d)^{-1}``.
    """
    d = np.asarray(problem.metadata.get("state_scaling", []), dtype=float)
    out = {}
    for v in problem.variables:
        M = np.asarray(certificate[v.name], dtype=float)
        if d.size == 0:
            out[v.name] = M.copy()
            continue
        S = np.diag(np.tile(1.0 / d, v.rows // d.size))
        Sc = np.diag(np.tile(1.0 / d, v.cols // d.size))
        out[v.name] = S.T @ M @ Sc
    return out


def _finish(variables, layout, constraints, epsilon, metadata) -> LmiProblem:
    cons = [AffineConstraint.from_expression(name, sense, expr) for name, sense, expr in constraints]
    for v in variables:
        if v.psd_required:
            cons.append(AffineConstraint.from_expression(f"{v.name} > 0", Sense.POSITIVE_DEFINITE, layout[v.name]))
    return LmiProblem(tuple(variables), tuple(cons), float(epsilon), metadata)


def _sym(name: str, n: int) -> DecisionVariable:
    return DecisionVariable(name, n, n, Structure.SYMMETRIC, True)


def build_theorem41(
    system: ConstantDelaySystem, alpha: float, epsilon: float | None = None, balance: bool = True
) -> LmiProblem:
    """Exponential-stability LMI with decay parameter ``alpha`` for a constant delay.

    Decision variables ``P`` (3n), ``Q``, ``R``, ``Z`` (n); one 4n x 4n
    negative-definite constraint over ``col{x(t), x(t-h), int x, int int x}``.

    With ``balance`` the conditions are written in balanced state coordinates
    (see :func:`~wiistab.systems.balancing_scale`), which leaves feasibility
    unchanged; :func:`certificate_to_original` undoes the scaling.
    """
    if not isinstance(system, ConstantDelaySystem):
        raise TypeError("build_theorem41 needs a ConstantDelaySystem")
    if not (alpha > 0 and math.isfinite(alpha)):
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    system, d = _prepare(system, balance)
    n, h = system.n, system.h
    variables = [_sym("P", 3 * n), _sym("Q", n), _sym("R", n), _sym("Z", n)]
    lay = ParameterLayout(variables)
    P, Q, R, Z = (lay[v.name] for v in variables)
    c = build_coefficients(alpha, h)

    e1, e2, e3, e4 = selectors(n, 4)
    A = system.A0 @ e1 + system.A1 @ e2 + system.A2 @ e3
    F0 = np.vstack([e1, e3, e4])
    F1 = np.vstack([A, e1 - e2, h * e1 - e3])
    F2 = np.vstack([e1 - e2, h * e1 - e3])
    F3 = np.vstack([h * e1 - e3, h**2 / 2 * e1 - e4])
    L1 = np.outer(c.l1, c.l1)
    L2 = np.outer(c.l2, c.l2)

    pi0 = F0.T @ P @ F1 + F1.T @ P @ F0 + alpha * (F0.T @ P @ F0)
    pi1 = e1.T @ Q @ e1 - math.exp(-alpha * h) * (e2.T @ Q @ e2) + A.T @ (h * R + h**2 / 2 * Z) @ A
    pi2 = c.single_jensen_gain * ((e1 - e2).T @ R @ (e1 - e2)) + c.single_refine_gain * (
        F2.T @ kron(L1, R) @ F2
    )
    pi3 = c.double_jensen_gain * ((h * e1 - e3).T @ Z @ (h * e1 - e3)) + c.double_refine_gain * (
        F3.T @ kron(L2, Z) @ F3
    )
    lmi = pi0 + pi1 - pi2 - pi3

    eps = default_epsilon(system) if epsilon is None else epsilon
    meta = {"theorem": "thm41", "alpha": float(alpha), "h": h, "n": n, "state_scaling": d.tolist()}
    return _finish(variables, lay, [("Pi < 0", Sense.NEGATIVE_DEFINITE, lmi)], eps, meta)


def _interval_variables(n: int) -> list[DecisionVariable]:
    return [
        _sym("P", 3 * n),
        _sym("Q1", n),
        _sym("Q2", n),
        _sym("R1", n),
        _sym("R2", n),
        DecisionVariable("X", 2 * n, 2 * n, Structure.GENERAL, False),
    ]


class _IntervalBasis:
    """Selectors for ``col{x(t), x(t-h1), x(t-h(t)), x(t-h2), v1, v2, v3}``.

    With ``h1 = 0`` the slots ``x(t-h1)`` and ``x(t)`` coincide and the
    average ``v1`` over ``[t-h1, t]`` does not exist, so the basis shrinks to
    5 blocks: ``e2`` aliases ``e1`` and ``e5`` is zero.
    """

    def __init__(self, n: int, h1: float):
        self.degenerate = h1 == 0.0
        if self.degenerate:
            b = selectors(n, 5)
            zero = np.zeros_like(b[0])
            self.e = [b[0], b[0], b[1], b[2], zero, b[3], b[4]]
        else:
            self.e = selectors(n, 7)
        self.dim = self.e[0].shape[1]


def _interval_blocks(system: IntervalDelaySystem, layout: ParameterLayout):
    n, h1, h2 = system.n, system.h1, system.h2
    basis = _IntervalBasis(n, h1)
    e1, e2, e3, e4, e5, e6, e7 = basis.e
    A = system.A @ e1 + system.Ad @ e3
    ups0 = np.vstack([A, e1 - e2, e2 - e4])
    ups2 = np.vstack([e2 - e3, e2 + e3 - 2 * e6])
    ups3 = np.vstack([e3 - e4, e3 + e4 - 2 * e7])
    delta = np.vstack([ups2, ups3])

    R2t = kron(np.diag([1.0, 3.0]), layout["R2"])
    s1 = np.hstack([np.eye(2 * n), np.zeros((2 * n, 2 * n))])
    s2 = np.hstack([np.zeros((2 * n, 2 * n)), np.eye(2 * n)])
    X = layout["X"]
    Pi = s1.T @ R2t @ s1 + s2.T @ R2t @ s2 + s1.T @ X @ s2 + s2.T @ X.T @ s1

    def upsilon(h):
        return np.vstack([e1, h1 * e5, (h - h1) * e6 + (h2 - h) * e7])

    return basis, A, ups0, delta, Pi, upsilon


def theorem42_omega(system: IntervalDelaySystem, alpha: float, h: float, layout: ParameterLayout | None = None):
    """Left-hand side ``Omega(h)`` of the interval-delay condition as an affine matrix."""
    n, h1, h2 = system.n, system.h1, system.h2
    lay = layout or ParameterLayout(_interval_variables(n))
    P, Q1, Q2, R1, R2 = (lay[k] for k in ("P", "Q1", "Q2", "R1", "R2"))
    basis, A, ups0, delta, Pi, upsilon = _interval_blocks(system, lay)
    e1, e2, e3, e4, e5, e6, e7 = basis.e
    h12 = h2 - h1

    U = upsilon(h)
    om0 = U.T @ P @ ups0 + ups0.T @ P @ U + alpha * (U.T @ P @ U)
    om1 = (
        e1.T @ Q1 @ e1
        - math.exp(-alpha * h1) * (e2.T @ Q1 @ e2)
        + math.exp(-alpha * h1) * (e2.T @ Q2 @ e2)
        - math.exp(-alpha * h2) * (e4.T @ Q2 @ e4)
    )
    om2 = A.T @ (h1**2 * R1 + h12**2 * math.exp(alpha * h1) * R2) @ A
    om = om0 + om1 + om2 - math.exp(-alpha * h12) * (delta.T @ Pi @ delta)
    if not basis.degenerate:
        c = build_coefficients(alpha, h1)
        ups1 = np.vstack([e1 - e2, h1 * (e1 - e5)])
        L1 = np.outer(c.l1, c.l1)
        # alpha*h1/gamma~0 and alpha*h1/rho~0 are h1 times the single-interval gains
        om3 = h1 * c.single_jensen_gain * ((e1 - e2).T @ R1 @ (e1 - e2)) + h1 * c.single_refine_gain * (
            ups1.T @ kron(L1, R1) @ ups1
        )
        om = om - om3
    return om


def _interval_checks(system, name):
    if not isinstance(system, IntervalDelaySystem):
        raise TypeError(f"{name} needs an IntervalDelaySystem")
    if system.h1 == system.h2:
        raise ValueError("h1 == h2 is a constant delay; use build_theorem41")


def build_theorem42(
    system: IntervalDelaySystem, alpha: float, epsilon: float | None = None, balance: bool = True
) -> LmiProblem:
    """Exponential-stability LMIs with decay parameter ``alpha`` for ``h1 <= h(t) <= h2``.

    Constraints: the coupling block ``Pi >= 0`` and ``Omega(h) < 0`` at both
    delay bounds (convexity in ``h`` covers the interior).
    """
    _interval_checks(system, "build_theorem42")
    if not (alpha > 0 and math.isfinite(alpha)):
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    system, d = _prepare(system, balance)
    variables = _interval_variables(system.n)
    lay = ParameterLayout(variables)
    *_, Pi, _ = _interval_blocks(system, lay)
    cons = [
        ("Pi >= 0", Sense.POSITIVE_SEMIDEFINITE, Pi),
        ("Omega(h1) < 0", Sense.NEGATIVE_DEFINITE, theorem42_omega(system, alpha, system.h1, lay)),
        ("Omega(h2) < 0", Sense.NEGATIVE_DEFINITE, theorem42_omega(system, alpha, system.h2, lay)),
    ]
    eps = default_epsilon(system) if epsilon is None else epsilon
    meta = {
        "theorem": "thm42",
        "alpha": float(alpha),
        "h1": system.h1,
        "h2": system.h2,
        "n": system.n,
        "state_scaling": d.tolist(),
    }
    return _finish(variables, lay, cons, eps, meta)


def corollary41_omega(system: IntervalDelaySystem, h: float, layout: ParameterLayout | None = None):
    """Delay-dependent asymptotic-stability left-hand side (no decay weighting)."""
    n, h1, h2 = system.n, system.h1, system.h2
    lay = layout or ParameterLayout(_interval_variables(n))
    P, Q1, Q2, R1, R2 = (lay[k] for k in ("P", "Q1", "Q2", "R1", "R2"))
    basis, A, ups0, delta, Pi, upsilon = _interval_blocks(system, lay)
    e1, e2, e3, e4, e5, e6, e7 = basis.e
    h12 = h2 - h1

    U = upsilon(h)
    om0 = U.T @ P @ ups0 + ups0.T @ P @ U
    phi1 = (
        e1.T @ Q1 @ e1
        - e2.T @ Q1 @ e2
        + e2.T @ Q2 @ e2
        - e4.T @ Q2 @ e4
        + A.T @ (h1**2 * R1 + h12**2 * R2) @ A
    )
    om = om0 + phi1 - delta.T @ Pi @ delta
    if not basis.degenerate:
        ups4 = np.vstack([e1 - e2, e1 + e2 - 2 * e5])
        om = om - ups4.T @ kron(np.diag([1.0, 3.0]), R1) @ ups4
    return om


def build_corollary41(system: IntervalDelaySystem, epsilon: float | None = None, balance: bool = True) -> LmiProblem:
    """Asymptotic-stability LMIs for ``h1 <= h(t) <= h2`` (the ``alpha -> 0`` form)."""
    _interval_checks(system, "build_corollary41")
    system, d = _prepare(system, balance)
    variables = _interval_variables(system.n)
    lay = ParameterLayout(variables)
    *_, Pi, _ = _interval_blocks(system, lay)
    cons = [
        ("Pi >= 0", Sense.POSITIVE_SEMIDEFINITE, Pi),
        ("Omega(h1) < 0", Sense.NEGATIVE_DEFINITE, corollary41_omega(system, system.h1, lay)),
        ("Omega(h2) < 0", Sense.NEGATIVE_DEFINITE, corollary41_omega(system, system.h2, lay)),
    ]
    eps = default_epsilon(system) if epsilon is None else epsilon
    meta = {"theorem": "cor41", "h1": system.h1, "h2": system.h2, "n": system.n, "state_scaling": d.tolist()}
    return _finish(variables, lay, cons, eps, meta)
