"""Bisection and scan drivers over the LMI feasibility tests.

Each driver reports the value it found together with the bracket it closed
and two explicit post-hoc checks: the returned value is certified and the
value one tolerance step beyond it is not.  Inconclusive solver verdicts
count as "not certified" everywhere, so every reported value carries a
certificate.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lmi import build_corollary41, build_theorem41, build_theorem42, certificate_to_original
from .sdp import FeasibilityResult, SolverSettings, Verdict, check_feasible
from .systems import ConstantDelaySystem, IntervalDelaySystem

__all__ = [
    "ALPHA_FLOOR",
    "DEFAULT_ALPHA_TOL",
    "DEFAULT_DELAY_TOL",
    "SearchResult",
    "DelayInterval",
    "NotStable",
    "NonMonotoneFeasibility",
    "AmbiguousFeasibility",
    "max_decay_rate",
    "max_upper_delay",
    "feasible_delay_interval",
]

log = logging.getLogger(__name__)

ALPHA_FLOOR = 1e-6
DEFAULT_ALPHA_TOL = 1e-4
DEFAULT_DELAY_TOL = 1e-3
PRESCAN_POINTS = 20
INTERVAL_SCAN_STEPS = 100

_DECAY_BUILDERS = {"thm41": build_theorem41, "thm42": build_theorem42}


class NotStable(Exception):
    """No certified point exists at the lower end of the search domain."""

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report or {}


class NonMonotoneFeasibility(Exception):
    """The pre-scan saw a certified point above an infeasible one."""

    def __init__(self, message: str, grid: list[tuple[float, str]]):
        super().__init__(message)
        self.grid = grid


class AmbiguousFeasibility(Exception):
    """The delay scan found more than one feasible interval."""

    def __init__(self, message: str, grid: list[tuple[float, str]]):
        super().__init__(message)
        self.grid = grid


@dataclass
class SearchResult:
    """Outcome of a one-sided search for the largest certified parameter."""

    mode: str
    value: float  # sigma = alpha/2 for decay searches, h2 for delay searches
    parameter: float  # the searched parameter itself (alpha or h2)
    stable: bool
    bracket: tuple[float, float]
    checks: dict = field(default_factory=dict)
    certificate: dict | None = None
    evaluations: int = 0

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "result": self.value,
            "parameter": self.parameter,
            "stable": self.stable,
            "bracket": list(self.bracket),
            "checks": self.checks,
            "evaluations": self.evaluations,
        }


@dataclass
class DelayInterval:
    h_min: float
    h_max: float
    alpha: float
    brackets: dict
    checks: dict = field(default_factory=dict)
    evaluations: int = 0

    def to_dict(self) -> dict:
        return {
            "mode": "interval",
            "result": [self.h_min, self.h_max],
            "alpha": self.alpha,
            "bracket": {k: list(v) for k, v in self.brackets.items()},
            "checks": self.checks,
            "evaluations": self.evaluations,
        }


class _Probe:
    """Memoised feasibility oracle ``p -> FeasibilityResult``."""

    def __init__(self, build: Callable[[float], object], settings: SolverSettings | None):
        self.build = build
        self.settings = settings
        self.cache: dict[float, tuple[FeasibilityResult, object]] = {}

    def __call__(self, p: float) -> FeasibilityResult:
        p = float(p)
        if p not in self.cache:
            problem = self.build(p)
            self.cache[p] = (check_feasible(problem, self.settings), problem)
        return self.cache[p][0]

    def certified(self, p: float) -> bool:
        return self(p).verdict is Verdict.FEASIBLE

    def certificate(self, p: float):
        res, problem = self.cache[float(p)]
        return certificate_to_original(problem, res.certificate) if res.certificate is not None else None

    @property
    def evaluations(self) -> int:
        return len(self.cache)


def _bisect(probe: _Probe, good: float, bad: float, tol: float) -> tuple[float, float]:
    """Shrink ``[good, bad]`` (either order) to width ``<= tol`` keeping the labels."""
    while abs(bad - good) > tol:
        mid = 0.5 * (good + bad)
        if probe.certified(mid):
            good = mid
        else:
            bad = mid
    return good, bad


def _prescan_upper(probe: _Probe, lo: float, hi: float, npts: int) -> tuple[float, float | None]:
    """Grid scan assuming feasibility is a prefix of ``[lo, hi]``.

    Returns ``(last certified grid point, first uncertified point or None)``.
    A certified point after a definite infeasible one aborts the search.
    """
    grid = np.linspace(lo, hi, npts)
    labels = [(float(p), probe(p).verdict.value) for p in grid]
    last_good, first_bad = lo, None
    seen_infeasible = False
    for p, v in labels:
        if v == Verdict.FEASIBLE.value:
            if seen_infeasible:
                raise NonMonotoneFeasibility(
                    f"certified at {p:.6g} after an infeasible grid point; bisection would be unsound", labels
                )
            if first_bad is None:
                last_good = p
        else:
            if first_bad is None:
                first_bad = p
            seen_infeasible |= v == Verdict.INFEASIBLE.value
    return last_good, first_bad


def _upper_search(mode, probe, lo, hi, tol, npts, to_value) -> SearchResult:
    if not probe.certified(lo):
        report = {"floor": lo, "verdict": probe(lo).verdict.value}
        return SearchResult(mode, 0.0, lo, False, (lo, lo), {"floor_verdict": report["verdict"]}, None, probe.evaluations)
    last_good, first_bad = _prescan_upper(probe, lo, hi, npts)
    capped = first_bad is None
    if capped:
        good, bad = hi, hi
    else:
        good, bad = _bisect(probe, last_good, first_bad, tol)
    checks = {
        "certified_at_result": probe.certified(good),
        "capped_at_upper_limit": capped,
    }
    if not capped:
        beyond = min(good + tol, hi)
        checks["beyond_result"] = beyond
        checks["uncertified_beyond_result"] = not probe.certified(beyond)
    log.info("%s: %.6g in [%.6g, %.6g] after %d solves", mode, good, good, bad, probe.evaluations)
    return SearchResult(
        mode, to_value(good), good, True, (good, bad), checks, probe.certificate(good), probe.evaluations
    )


def max_decay_rate(
    system,
    theorem: str = "thm41",
    alpha_hi: float = 2.0,
    tol: float = DEFAULT_ALPHA_TOL,
    settings: SolverSettings | None = None,
    prescan_points: int = PRESCAN_POINTS,
) -> SearchResult:
    """Largest certified decay rate ``sigma = alpha / 2``.

    Bisects ``alpha`` on ``[ALPHA_FLOOR, alpha_hi]`` after a grid pre-scan
    that guards the monotonicity assumption.  A system that is not certified
    at the floor comes back with ``stable=False`` and ``value=0``.
    """
    if theorem not in _DECAY_BUILDERS:
        raise ValueError(f"theorem must be one of {sorted(_DECAY_BUILDERS)}, got {theorem!r}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not alpha_hi > ALPHA_FLOOR:
        raise ValueError(f"alpha_hi must exceed {ALPHA_FLOOR}")
    build = _DECAY_BUILDERS[theorem]
    probe = _Probe(lambda a: build(system, a), settings)
    return _upper_search("decay", probe, ALPHA_FLOOR, alpha_hi, tol, prescan_points, lambda a: a / 2)


def max_upper_delay(
    system: IntervalDelaySystem,
    h1: float,
    h2_hi: float,
    tol: float = DEFAULT_DELAY_TOL,
    settings: SolverSettings | None = None,
    prescan_points: int = PRESCAN_POINTS,
) -> SearchResult:
    """Largest ``h2`` for which the delay-interval condition (no decay weighting) holds.

    Raises :class:`NotStable` when ``h2 = h1 + tol`` is already uncertified.
    """
    if not isinstance(system, IntervalDelaySystem):
        raise TypeError("max_upper_delay needs an IntervalDelaySystem")
    if h1 < 0:
        raise ValueError(f"h1 must be non-negative, got {h1}")
    if h2_hi < h1 + tol:
        raise ValueError(f"h2_hi={h2_hi} lies below h1 + tol = {h1 + tol}")
    probe = _Probe(lambda h2: build_corollary41(system.with_bounds(h1=h1, h2=h2)), settings)
    res = _upper_search("h2", probe, h1 + tol, h2_hi, tol, prescan_points, lambda h2: h2)
    if not res.stable:
        raise NotStable(f"not certified at h2 = h1 + tol = {h1 + tol:.6g}", res.to_dict())
    res.checks["h1"] = h1
    return res


def feasible_delay_interval(
    template: ConstantDelaySystem,
    alpha: float,
    h_range: tuple[float, float],
    tol: float = DEFAULT_DELAY_TOL,
    settings: SolverSettings | None = None,
    steps: int = INTERVAL_SCAN_STEPS,
) -> DelayInterval:
    """Constant delays ``h`` in ``h_range`` certified at decay parameter ``alpha``.

    A scan with ``steps`` equal steps brackets the feasible set, then both
    ends are bisected to width ``tol``.  Inconclusive scan points between
    certified ones are tolerated; a definite infeasible point between them
    raises :class:`AmbiguousFeasibility`.
    """
    if not isinstance(template, ConstantDelaySystem):
        raise TypeError("feasible_delay_interval needs a ConstantDelaySystem template")
    lo, hi = map(float, h_range)
    if not (0 <= lo < hi):
        raise ValueError(f"need 0 <= lo < hi, got {h_range}")
    probe = _Probe(lambda h: build_theorem41(template.with_delay(h), alpha), settings)
    grid = [float(h) for h in np.linspace(lo, hi, steps + 1) if h > 0]
    labels = [(h, probe(h).verdict.value) for h in grid]
    good = [i for i, (_, v) in enumerate(labels) if v == Verdict.FEASIBLE.value]
    if not good:
        raise NotStable(f"no certified delay in [{lo}, {hi}] at alpha={alpha}", {"grid": labels})
    inside = [v for _, v in labels[good[0] : good[-1] + 1]]
    if Verdict.INFEASIBLE.value in inside:
        raise AmbiguousFeasibility("certified delays form more than one interval on the scan grid", labels)

    i0, i1 = good[0], good[-1]
    brackets = {}
    if i0 == 0:
        h_min = grid[0]
        brackets["lower"] = (grid[0], grid[0])
    else:
        h_min, bad = _bisect(probe, grid[i0], grid[i0 - 1], tol)
        brackets["lower"] = (bad, h_min)
    if i1 == len(grid) - 1:
        h_max = grid[-1]
        brackets["upper"] = (grid[-1], grid[-1])
    else:
        h_max, bad = _bisect(probe, grid[i1], grid[i1 + 1], tol)
        brackets["upper"] = (h_max, bad)

    checks = {
        "certified_at_h_min": probe.certified(h_min),
        "certified_at_h_max": probe.certified(h_max),
        "lower_end_at_range": i0 == 0,
        "upper_end_at_range": i1 == len(grid) - 1,
        "inconclusive_inside": inside.count(Verdict.INCONCLUSIVE.value),
    }
    if i0 > 0 and h_min - tol > 0:
        checks["uncertified_below_h_min"] = not probe.certified(h_min - tol)
    if i1 < len(grid) - 1:
        checks["uncertified_above_h_max"] = not probe.certified(h_max + tol)
    return DelayInterval(h_min, h_max, float(alpha), brackets, checks, probe.evaluations)
