"""Semidefinite feasibility checks for :class:`~wiistab.lmi.LmiProblem`, plus SDPA I/O.

The feasibility question is posed as a margin maximisation::

    maximize t  s.t.  sign_c * M_c(x) >= t I   (strict constraints)
                      sign_c * M_c(x) >= 0     (non-strict constraints)
                      V(x) <= bound * I        (every definite variable)

LMIs of this kind are homogeneous in the decision variables, so the upper
bound on the variables is what makes ``t`` finite; ``epsilon`` is measured
against that bound.  The verdict is Feasible
when ``t* >= epsilon`` and the returned point survives an independent
eigenvalue re-check.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .lmi import AffineConstraint, LmiProblem, Sense

__all__ = [
    "Verdict",
    "SolverSettings",
    "FeasibilityResult",
    "check_feasible",
    "verify_certificate",
    "constraint_slacks",
    "export_sdpa",
    "read_sdpa",
    "SdpaData",
]


class Verdict(str, enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class SolverSettings:
    feastol: float = 1e-8
    abstol: float = 1e-9
    reltol: float = 1e-8
    max_iters: int = 200
    verify_rtol: float = 1e-7
    variable_bound: float = 1e3
    kktsolver: str | None = "chol"


@dataclass
class FeasibilityResult:
    verdict: Verdict
    margin: float
    certificate: dict[str, np.ndarray] | None = None
    t_opt: float = float("nan")
    solver_stats: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.verdict is Verdict.FEASIBLE


def constraint_slacks(problem: LmiProblem, x) -> list[tuple[float, float]]:
    """Per-constraint ``(slack, norm)``: ``lambda_min`` of the oriented matrix minus its margin."""
    out = []
    for c in problem.constraints:
        G = c.oriented(x)
        eig = np.linalg.eigvalsh(G)
        req = problem.epsilon if c.sense.strict else 0.0
        out.append((float(eig[0] - req), float(max(abs(eig[0]), abs(eig[-1])))))
    return out


def verify_certificate(problem: LmiProblem, certificate: Mapping[str, np.ndarray]) -> float:
    """Smallest eigenvalue slack over all constraints at ``certificate``.

    Negative values mean some constraint is violated.  ``inf`` for a problem
    without constraints.
    """
    x = problem.pack(certificate)
    slacks = constraint_slacks(problem, x)
    return min((s for s, _ in slacks), default=float("inf"))


def _vec(M: np.ndarray) -> np.ndarray:
    return M.reshape(-1, order="F")


def _cvxopt_blocks(problem: LmiProblem, settings: SolverSettings):
    """Dense ``(Gs, hs)`` blocks over ``z = [x, t]`` in cvxopt's ``h - G z >= 0`` form."""
    K = problem.nparams
    blocks = []
    for c in problem.constraints:
        m = c.size
        s = c.sense.sign
        G = np.empty((m * m, K + 1))
        G[:, :K] = -s * c.coefficients.reshape(K, m * m).T  # symmetric slices: C == F order
        G[:, K] = _vec(np.eye(m)) if c.sense.strict else 0.0
        blocks.append((G, s * c.constant))
    layout = problem.layout
    for v in problem.variables:
        if not v.psd_required:
            continue
        m = v.rows
        G = np.zeros((m * m, K + 1))
        k = layout.offsets[v.name]
        G[:, k : k + v.size] = v.basis().reshape(v.size, m * m).T
        blocks.append((G, settings.variable_bound * np.eye(m)))
    return blocks


def check_feasible(problem: LmiProblem, settings: SolverSettings | None = None) -> FeasibilityResult:
    """Decide feasibility of ``problem`` with an interior-point SDP solve.

    Feasible verdicts are always re-verified by :func:`verify_certificate`; a
    point that fails the re-check yields Inconclusive, never Feasible.
    """
    from cvxopt import matrix, solvers

    settings = settings or SolverSettings()
    start = time.perf_counter()
    if not problem.constraints:
        return FeasibilityResult(Verdict.FEASIBLE, float("inf"), problem.unpack(np.zeros(problem.nparams)), float("inf"))

    K = problem.nparams
    blocks = _cvxopt_blocks(problem, settings)
    c = np.zeros(K + 1)
    c[K] = -1.0
    Gs = [matrix(G) for G, _ in blocks]
    hs = [matrix(h) for _, h in blocks]
    # t <= bound keeps the problem bounded even with no definite variables
    Gl = np.zeros((1, K + 1))
    Gl[0, K] = 1.0
    opts = {
        "show_progress": False,
        "feastol": settings.feastol,
        "abstol": settings.abstol,
        "reltol": settings.reltol,
        "maxiters": settings.max_iters,
    }
    args = (matrix(c),)
    kwargs = dict(Gl=matrix(Gl), hl=matrix([settings.variable_bound]), Gs=Gs, hs=hs, options=opts)
    sol = None
    for kkt in dict.fromkeys([settings.kktsolver, None]):
        try:
            sol = solvers.sdp(*args, kktsolver=kkt, **kwargs)
        except (ValueError, ArithmeticError) as exc:
            error = exc
            continue
        if sol["x"] is not None:
            break
    if sol is None:
        return FeasibilityResult(
            Verdict.INCONCLUSIVE,
            float("nan"),
            solver_stats={"status": f"error: {error}", "wall_time": time.perf_counter() - start},
        )
    stats = {
        "status": sol["status"],
        "iterations": sol.get("iterations"),
        "primal_infeasibility": sol.get("primal infeasibility"),
        "dual_infeasibility": sol.get("dual infeasibility"),
        "gap": sol.get("gap"),
        "wall_time": time.perf_counter() - start,
    }
    if sol["x"] is None:
        return FeasibilityResult(Verdict.INCONCLUSIVE, float("nan"), solver_stats=stats)

    z = np.array(sol["x"]).ravel()
    x, t = z[:K], float(z[K])
    slacks = constraint_slacks(problem, x)
    margin = min(s for s, _ in slacks)
    tol = settings.verify_rtol * max(max(nrm for _, nrm in slacks), 1.0)
    certificate = problem.unpack(x)
    stats["verify_tolerance"] = tol

    if t >= problem.epsilon:
        if margin >= -tol:
            return FeasibilityResult(Verdict.FEASIBLE, margin, certificate, t, stats)
        return FeasibilityResult(Verdict.INCONCLUSIVE, margin, None, t, stats)
    if sol["status"] == "optimal":
        return FeasibilityResult(Verdict.INFEASIBLE, margin, None, t, stats)
    # unconverged but clearly short of the margin
    if sol.get("dual objective") is not None and -sol["dual objective"] < problem.epsilon:
        return FeasibilityResult(Verdict.INFEASIBLE, margin, None, t, stats)
    return FeasibilityResult(Verdict.INCONCLUSIVE, margin, None, t, stats)


# ---------------------------------------------------------------- SDPA sparse


@dataclass
class SdpaData:
    """Parsed SDPA sparse problem: ``F(x) = sum_i x_i F_i - F_0 >= 0``."""

    m: int
    block_struct: list[int]
    c: np.ndarray
    entries: dict[tuple[int, int, int, int], float]  # (matno, block, i, j) 1-based, i <= j

    def matrix(self, matno: int, block: int) -> np.ndarray:
        size = abs(self.block_struct[block - 1])
        M = np.zeros((size, size))
        for (k, b, i, j), v in self.entries.items():
            if k == matno and b == block:
                M[i - 1, j - 1] = v
                M[j - 1, i - 1] = v
        return M


def _constraint_f_mats(problem: LmiProblem, con: AffineConstraint):
    s = con.sense.sign
    shift = problem.epsilon if con.sense.strict else 0.0
    F0 = -s * con.constant + shift * np.eye(con.size)
    return F0, s * con.coefficients


def export_sdpa(problem: LmiProblem) -> str:
    """Encode the feasibility problem in SDPA sparse format with a zero objective.

    One block per constraint, oriented as ``sum_i x_i F_i - F_0 >= 0`` with
    the strictness margin folded into ``F_0``.
    """
    K = problem.nparams
    theorem = problem.metadata.get("theorem", "lmi")
    lines = [
        f'"{theorem} feasibility problem, {K} variables, epsilon={problem.epsilon!r}',
        str(K),
        str(len(problem.constraints)),
        " ".join(str(c.size) for c in problem.constraints),
        " ".join("0" for _ in range(K)),
    ]
    for b, con in enumerate(problem.constraints, start=1):
        F0, Fs = _constraint_f_mats(problem, con)
        mats = [(0, F0)] + [(k + 1, Fs[k]) for k in range(K)]
        for matno, M in mats:
            iu, ju = np.nonzero(np.triu(M))
            for i, j in zip(iu, ju):
                lines.append(f"{matno} {b} {i + 1} {j + 1} {float(M[i, j])!r}")
    return "\n".join(lines) + "\n"


def read_sdpa(text: str) -> SdpaData:
    """Parse SDPA sparse text (comments start with ``"`` or ``*``)."""
    rows = []
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith(('"', "*")):
            continue
        rows.append(line.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " "))
    it = iter(rows)
    m = int(next(it).split()[0])
    nblock = int(next(it).split()[0])
    block_struct = [int(float(v)) for v in next(it).split()][:nblock]
    c_vals: list[float] = []
    while len(c_vals) < m:
        c_vals.extend(float(v) for v in next(it).split())
    if m == 0:
        next(it, None)  # blank objective line
    entries = {}
    for line in it:
        parts = line.split()
        if not parts:
            continue
        k, b, i, j = (int(p) for p in parts[:4])
        if i > j:
            i, j = j, i
        entries[(k, b, i, j)] = float(parts[4])
    return SdpaData(m, block_struct, np.array(c_vals[:m]), entries)
