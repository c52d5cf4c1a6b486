"""Plant descriptions: constant-delay and interval-delay linear systems, delay profiles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np
import scipy.linalg

__all__ = [
    "balancing_scale",
    "ConstantDelaySystem",
    "IntervalDelaySystem",
    "SystemModel",
    "DelaySpec",
    "quarter_car_closed_loop",
    "QUARTER_CAR_PARAMETERS",
]


def _square(name: str, M, n: int | None = None) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {M.shape}")
    if n is not None and M.shape[0] != n:
        raise ValueError(f"{name} is {M.shape[0]}x{M.shape[0]}, expected {n}x{n}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    M = M.copy()
    M.setflags(write=False)
    return M


@dataclass(frozen=True)
class DelaySpec:
    """Delay profile ``h(t) = c0 + c1 |sin(t)|``; ``c1 = 0`` is a constant delay."""

    c0: float
    c1: float = 0.0

    def __post_init__(self):
        if self.c0 < 0 or self.c1 < 0:
            raise ValueError("delay profile coefficients must be non-negative")
        if self.c0 + self.c1 <= 0:
            raise ValueError("delay profile is identically zero")

    @classmethod
    def constant(cls, h: float) -> "DelaySpec":
        return cls(float(h), 0.0)

    @property
    def is_constant(self) -> bool:
        return self.c1 == 0.0

    @property
    def h_min(self) -> float:
        return self.c0

    @property
    def h_max(self) -> float:
        return self.c0 + self.c1

    def __call__(self, t):
        return self.c0 + self.c1 * np.abs(np.sin(t))


@dataclass(frozen=True)
class ConstantDelaySystem:
    """``x' = A0 x(t) + A1 x(t-h) + A2 int_{t-h}^t x(s) ds``."""

    A0: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    h: float

    kind = "constant"

    def __post_init__(self):
        A0 = _square("A0", self.A0)
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "A1", _square("A1", self.A1, A0.shape[0]))
        object.__setattr__(self, "A2", _square("A2", self.A2, A0.shape[0]))
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError(f"delay h must be positive, got {self.h!r}")
        object.__setattr__(self, "h", float(self.h))

    @property
    def n(self) -> int:
        return self.A0.shape[0]

    @property
    def scale(self) -> float:
        """Largest infinity norm among the system matrices."""
        return max(np.abs(M).sum(axis=1).max() for M in (self.A0, self.A1, self.A2))

    @property
    def matrices(self) -> tuple[np.ndarray, ...]:
        return (self.A0, self.A1, self.A2)

    def scaled(self, d) -> "ConstantDelaySystem":
        """System in coordinates ``z = diag(d)^{-1} x``."""
        D, Di = np.diag(d), np.diag(1.0 / np.asarray(d))
        return replace(self, A0=Di @ self.A0 @ D, A1=Di @ self.A1 @ D, A2=Di @ self.A2 @ D)

    def with_delay(self, h: float) -> "ConstantDelaySystem":
        return replace(self, h=h)

    @property
    def delay(self) -> DelaySpec:
        return DelaySpec.constant(self.h)


@dataclass(frozen=True)
class IntervalDelaySystem:
    """``x' = A x(t) + Ad x(t - h(t))`` with ``h1 <= h(t) <= h2``."""

    A: np.ndarray
    Ad: np.ndarray
    h1: float
    h2: float
    profile: DelaySpec | None = field(default=None, compare=False)

    kind = "interval"

    def __post_init__(self):
        A = _square("A", self.A)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Ad", _square("Ad", self.Ad, A.shape[0]))
        h1, h2 = float(self.h1), float(self.h2)
        if not (0.0 <= h1 <= h2 and h2 > 0 and math.isfinite(h2)):
            raise ValueError(f"need 0 <= h1 <= h2 and h2 > 0, got h1={h1}, h2={h2}")
        object.__setattr__(self, "h1", h1)
        object.__setattr__(self, "h2", h2)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def scale(self) -> float:
        return max(np.abs(M).sum(axis=1).max() for M in (self.A, self.Ad))

    @property
    def matrices(self) -> tuple[np.ndarray, ...]:
        return (self.A, self.Ad)

    def scaled(self, d) -> "IntervalDelaySystem":
        """System in coordinates ``z = diag(d)^{-1} x``."""
        D, Di = np.diag(d), np.diag(1.0 / np.asarray(d))
        return replace(self, A=Di @ self.A @ D, Ad=Di @ self.Ad @ D)

    def with_bounds(self, h1: float | None = None, h2: float | None = None) -> "IntervalDelaySystem":
        return replace(
            self,
            h1=self.h1 if h1 is None else h1,
            h2=self.h2 if h2 is None else h2,
        )

    @property
    def delay(self) -> DelaySpec:
        if self.profile is not None:
            return self.profile
        return DelaySpec.constant(self.h2)


SystemModel = Union[ConstantDelaySystem, IntervalDelaySystem]


def balancing_scale(system: SystemModel) -> np.ndarray:
    """Diagonal state scaling (powers of two) that balances the system matrices.

    Stability conditions built from congruences of n x n blocks are invariant
    under ``x = diag(d) z``; balancing only improves the conditioning of the
    resulting semidefinite programs.  Powers of two keep the transform exact.
    """
    M = sum(np.abs(A) for A in system.matrices)
    if not np.any(M):
        return np.ones(system.n)
    _, (d, _) = scipy.linalg.matrix_balance(M, permute=False, separate=True)
    return np.asarray(d, dtype=float)


QUARTER_CAR_PARAMETERS = {
    "ms": 973.0,
    "mu": 114.0,
    "ks": 42720.0,
    "kt": 101115.0,
    "cs": 1095.0,
    "ct": 14.6,
}


def quarter_car_closed_loop(
    K: float = 1.0, h1: float = 1.0, h2: float = 6.0, params: dict | None = None
) -> IntervalDelaySystem:
    """Active suspension under delayed static output feedback ``u = K y``.

    Returns the closed loop ``x' = A x + B K C x(t - h(t))``.
    """
    p = dict(QUARTER_CAR_PARAMETERS, **(params or {}))
    ms, mu, ks, kt, cs, ct = (p[k] for k in ("ms", "mu", "ks", "kt", "cs", "ct"))
    A = np.array(
        [
            [0.0, 0.0, 1.0, -1.0],
            [0.0, 0.0, 0.0, 1.0],
            [-ks / ms, 0.0, -cs / ms, cs / ms],
            [ks / mu, -kt / mu, cs / mu, -(cs + ct) / mu],
        ]
    )
    B = np.array([[0.0], [0.0], [1.0 / ms], [-1.0 / mu]])
    C = np.array([[1.0, 1.0, 1.0, 0.0]])
    return IntervalDelaySystem(A, B @ (K * C), h1, h2)
