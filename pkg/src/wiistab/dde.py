"""Fixed-step RK4 integration of linear delay differential equations.

Covers ``x' = A0 x(t) + A1 x(t - h(t)) + A2 int_{t-h}^t x(u) du``.  Delayed
states come from linear interpolation on the stored grid, and the
distributed term is a composite trapezoid sum over the same grid, updated
in O(1) per step.  The whole trajectory is kept so a time-varying delay can
reach anywhere in its range.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from numba import njit

from .systems import ConstantDelaySystem, DelaySpec, IntervalDelaySystem

__all__ = [
    "Trajectory",
    "HistoryUnderflow",
    "Divergence",
    "simulate",
    "decay_envelope",
    "envelope",
    "write_csv",
]

InitialFunction = Union[Callable[[float], np.ndarray], np.ndarray, list, tuple]

_OK, _UNDERFLOW, _DIVERGED = 0, 1, 2


class HistoryUnderflow(ValueError):
    """A delayed argument ``t - h(t)`` fell before the stored initial function."""


class Divergence(ArithmeticError):
    def __init__(self, message: str, last_time: float):
        super().__init__(message)
        self.last_time = last_time


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray  # (N+1,) uniform grid on [0, T]
    states: np.ndarray  # (N+1, n)
    history_times: np.ndarray  # (m+1,) grid on [-h_max, 0]
    history: np.ndarray  # (m+1, n), phi sampled on history_times
    step: float

    @property
    def n(self) -> int:
        return self.states.shape[1]


@njit(cache=True)
def _delayed(X, m, s, t, h, known, out):
    u = (t - h) / s + m
    if u < -1e-9:
        return False
    i = max(int(math.floor(u)), 0)
    frac = u - i
    if i + 1 >= known or frac == 0.0:
        for j in range(out.shape[0]):
            out[j] = X[i, j]
    else:
        for j in range(out.shape[0]):
            out[j] = (1.0 - frac) * X[i, j] + frac * X[i + 1, j]
    return True


@njit(cache=True)
def _rk4(A0, A1, A2, c0, c1, X, m, s, nsteps, I0, distributed):
    """Advance rows ``m+1 .. m+nsteps`` of ``X`` in place; returns (status, last row)."""
    n = X.shape[1]
    I = I0.copy()
    xd = np.empty(n)
    xd_lag = np.empty(n)
    lag0 = np.empty(n)
    lag1 = np.empty(n)
    ks = np.zeros((4, n))
    stage = np.empty(n)
    Is = np.empty(n)
    cs = (0.0, 0.5, 0.5, 1.0)
    h_const = c0
    for k in range(nsteps):
        row = m + k
        tk = k * s
        xk = X[row]
        if distributed:
            if not _delayed(X, m, s, tk, h_const, row + 1, lag0):
                return _UNDERFLOW, row
        for q in range(4):
            c = cs[q]
            for j in range(n):
                stage[j] = xk[j] + (c * s * ks[q - 1, j] if q > 0 else 0.0)
            tq = tk + c * s
            h = c0 + c1 * abs(math.sin(tq))
            if not _delayed(X, m, s, tq, h, row + 1, xd):
                return _UNDERFLOW, row
            if distributed:
                if c == 0.0:
                    for j in range(n):
                        Is[j] = I[j]
                else:
                    _delayed(X, m, s, tq, h_const, row + 1, xd_lag)
                    for j in range(n):
                        Is[j] = I[j] + 0.5 * c * s * (xk[j] + stage[j]) - 0.5 * c * s * (lag0[j] + xd_lag[j])
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += A0[i, j] * stage[j] + A1[i, j] * xd[j]
                    if distributed:
                        acc += A2[i, j] * Is[j]
                ks[q, i] = acc
        finite = True
        for j in range(n):
            v = xk[j] + s / 6.0 * (ks[0, j] + 2.0 * ks[1, j] + 2.0 * ks[2, j] + ks[3, j])
            X[row + 1, j] = v
            if not math.isfinite(v):
                finite = False
        if not finite:
            return _DIVERGED, row
        if distributed:
            _delayed(X, m, s, tk + s, h_const, row + 2, lag1)
            for j in range(n):
                I[j] += 0.5 * s * (xk[j] + X[row + 1, j]) - 0.5 * s * (lag0[j] + lag1[j])
    return _OK, m + nsteps


def _system_terms(system) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    if isinstance(system, ConstantDelaySystem):
        return system.A0, system.A1, system.A2, system.h
    if isinstance(system, IntervalDelaySystem):
        return system.A, system.Ad, np.zeros_like(system.A), system.h2
    raise TypeError(f"unsupported system type {type(system).__name__}")


def _sample_history(phi: InitialFunction, times: np.ndarray, n: int) -> np.ndarray:
    if callable(phi):
        out = np.array([np.asarray(phi(float(t)), dtype=float).reshape(-1) for t in times])
    else:
        out = np.tile(np.asarray(phi, dtype=float).reshape(1, -1), (times.size, 1))
    if out.shape != (times.size, n):
        raise ValueError(f"initial function must return {n}-vectors, got shape {out.shape[1:]}")
    if not np.all(np.isfinite(out)):
        raise ValueError("initial function has non-finite values")
    return out


def simulate(
    system,
    delay: DelaySpec | None,
    phi: InitialFunction,
    T: float,
    s: float,
) -> Trajectory:
    """Integrate ``system`` on ``[0, T]`` with step ``s`` from the initial function ``phi``.

    ``delay`` defaults to the system's own delay.  The history is stored on
    ``[-h_max, 0]`` where ``h_max`` is the system's delay bound; a profile
    that reaches further back raises :class:`HistoryUnderflow`.
    """
    if not (s > 0 and T > 0):
        raise ValueError(f"need T > 0 and s > 0, got T={T}, s={s}")
    A0, A1, A2, h_max = _system_terms(system)
    delay = system.delay if delay is None else delay
    distributed = bool(np.any(A2))
    if distributed and not delay.is_constant:
        raise ValueError("the distributed term needs a constant delay")
    if delay.h_min < s and np.any(A1):
        raise ValueError(f"delay must stay >= the step ({s}); got h_min={delay.h_min}")

    m = int(math.ceil(h_max / s - 1e-9))
    nsteps = int(round(T / s))
    if not math.isclose(nsteps * s, T, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"T={T} is not a multiple of the step {s}")
    hist_t = (np.arange(m + 1) - m) * s
    n = A0.shape[0]
    hist = _sample_history(phi, hist_t, n)

    X = np.empty((m + nsteps + 1, n))
    X[: m + 1] = hist
    I0 = np.zeros(n)
    if distributed:
        h = delay.c0
        if h > m * s + 1e-12:
            raise HistoryUnderflow(f"distributed window {h} exceeds the stored history {m * s}")
        inner = hist_t[hist_t > -h]
        pts = np.concatenate([[-h], inner])
        vals = np.array([np.interp(pts, hist_t, hist[:, j]) for j in range(n)]).T
        I0 = np.trapezoid(vals, pts, axis=0)

    status, last = _rk4(
        np.ascontiguousarray(A0),
        np.ascontiguousarray(A1),
        np.ascontiguousarray(A2),
        float(delay.c0),
        float(delay.c1),
        X,
        m,
        float(s),
        nsteps,
        I0,
        distributed,
    )
    t_last = (last - m) * s
    if status == _UNDERFLOW:
        raise HistoryUnderflow(f"t - h(t) fell below -{h_max} near t={t_last:.6g}")
    if status == _DIVERGED:
        raise Divergence(f"state became non-finite after t={t_last:.6g}", t_last)
    times = np.arange(nsteps + 1) * s
    return Trajectory(times, X[m:].copy(), hist_t, hist, float(s))


def decay_envelope(traj: Trajectory, sigma: float) -> tuple[float, float]:
    """``sup_t e^{sigma t} |x(t)|`` over the grid and the time where it is attained."""
    env = envelope(traj, sigma)
    k = int(np.argmax(env))
    return float(env[k]), float(traj.times[k])


def envelope(traj: Trajectory, sigma: float) -> np.ndarray:
    return np.exp(sigma * traj.times) * np.linalg.norm(traj.states, axis=1)


def write_csv(path, traj: Trajectory, sigma: float | None = None, stride: int = 1) -> None:
    """Write ``t,x1,...,xn[,env]``, one row per grid point (every ``stride``-th)."""
    cols = [traj.times[:, None], traj.states]
    header = ["t"] + [f"x{i + 1}" for i in range(traj.n)]
    if sigma is not None:
        cols.append(envelope(traj, sigma)[:, None])
        header.append("env")
    data = np.hstack(cols)[::stride]
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt="%.10g")
