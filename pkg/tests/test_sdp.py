import numpy as np
import pytest

from wiistab.lmi import (
    AffineConstraint,
    DecisionVariable,
    LmiProblem,
    ParameterLayout,
    Sense,
    build_corollary41,
    build_theorem41,
)
from wiistab.sdp import Verdict, check_feasible, constraint_slacks, export_sdpa, read_sdpa, verify_certificate
from wiistab.systems import ConstantDelaySystem, IntervalDelaySystem

EX51 = ConstantDelaySystem([[0.2, 0.0], [0.2, 0.1]], np.zeros((2, 2)), [[-1.0, 0.0], [-1.0, -1.0]], 1.0)
EX52 = ConstantDelaySystem([[0.0, 1.0], [-2.0, 0.1]], [[0.0, 0.0], [1.0, 0.0]], np.zeros((2, 2)), 1.6)


def single_pd_problem(eps=1e-3):
    v = DecisionVariable("P", 2, 2)
    lay = ParameterLayout([v])
    con = AffineConstraint.from_expression("P > 0", Sense.POSITIVE_DEFINITE, lay["P"])
    return LmiProblem((v,), (con,), eps)


def test_feasible_at_half_certified_rate():
    res = check_feasible(build_theorem41(EX52, 0.09))
    assert res.verdict is Verdict.FEASIBLE
    assert set(res.certificate) == {"P", "Q", "R", "Z"}
    assert res.margin >= -res.solver_stats["verify_tolerance"]


def test_infeasible_beyond_rate_ceiling():
    assert check_feasible(build_theorem41(EX52, 0.2)).verdict is Verdict.INFEASIBLE


def test_empty_problem_feasible():
    res = check_feasible(LmiProblem.empty())
    assert res.verdict is Verdict.FEASIBLE
    assert res.certificate == {}


def test_feasible_verdicts_pass_independent_recheck():
    for p in (build_theorem41(EX52, 0.05), build_theorem41(EX51, 2e-4)):
        res = check_feasible(p)
        assert res.feasible
        tol = res.solver_stats["verify_tolerance"]
        assert verify_certificate(p, res.certificate) >= -tol


def test_zero_certificate_has_negative_margin():
    p = build_theorem41(EX52, 0.05)
    zero = {v.name: np.zeros(v.shape) for v in p.variables}
    assert verify_certificate(p, zero) < 0


def test_identity_certificate_margin():
    eps = 1e-3
    assert verify_certificate(single_pd_problem(eps), {"P": np.eye(2)}) == pytest.approx(1 - eps)


def test_missing_variable_rejected():
    with pytest.raises(KeyError):
        verify_certificate(build_theorem41(EX52, 0.05), {"P": np.eye(6)})


def test_verify_without_constraints_is_infinite():
    assert verify_certificate(LmiProblem.empty(), {}) == float("inf")


def test_constraint_slacks_shape():
    p = build_theorem41(EX52, 0.05)
    assert len(constraint_slacks(p, np.zeros(p.nparams))) == len(p.constraints)


def test_deterministic_verdicts():
    p = build_theorem41(EX52, 0.0995)
    a, b = check_feasible(p), check_feasible(p)
    assert a.verdict is b.verdict
    assert a.t_opt == b.t_opt


@pytest.mark.parametrize(
    "system,alphas",
    [
        (EX52, np.linspace(0.005, 0.3, 25)),
        (EX51, np.linspace(1e-4, 0.05, 25)),
        (EX52.with_delay(0.8), np.linspace(0.02, 1.2, 25)),
    ],
    ids=["ex52-h1.6", "ex51-h1", "ex52-h0.8"],
)
def test_feasibility_is_an_interval_in_alpha(system, alphas):
    verdicts = [check_feasible(build_theorem41(system, a)).verdict for a in alphas]
    seen_infeasible = False
    for v in verdicts:
        if v is Verdict.INFEASIBLE:
            seen_infeasible = True
        assert not (seen_infeasible and v is Verdict.FEASIBLE)
    assert verdicts[0] is Verdict.FEASIBLE


# ---------------------------------------------------------------- SDPA


def test_export_empty_is_header_only():
    data = read_sdpa(export_sdpa(LmiProblem.empty()))
    assert data.m == 0 and data.block_struct == [] and data.entries == {}


def test_export_theorem41_scalar_blocks_and_entry_count():
    sysm = ConstantDelaySystem([[-1.0]], [[0.3]], [[-0.2]], 0.5)
    p = build_theorem41(sysm, 0.1)
    text = export_sdpa(p)
    data = read_sdpa(text)
    # one 4n x 4n condition plus one definiteness block per P, Q, R, Z
    assert data.block_struct == [4, 3, 1, 1, 1]
    assert data.m == p.nparams == 9
    expected = 0
    for c in p.constraints:
        s = c.sense.sign
        shift = p.epsilon if c.sense.strict else 0.0
        mats = [-s * c.constant + shift * np.eye(c.size)] + [s * F for F in c.coefficients]
        expected += sum(int(np.count_nonzero(np.triu(M))) for M in mats)
    assert len(data.entries) == expected


@pytest.mark.parametrize("problem", [build_theorem41(EX52, 0.07), build_corollary41(
    IntervalDelaySystem([[0.0, 1.0], [-10.0, -1.0]], [[0.0, 0.1], [0.1, 0.2]], 0.3, 1.5))], ids=["thm41", "cor41"])
def test_sdpa_roundtrip_reproduces_blocks(problem):
    data = read_sdpa(export_sdpa(problem))
    assert data.m == problem.nparams
    assert np.all(data.c == 0)
    for b, c in enumerate(problem.constraints, start=1):
        s = c.sense.sign
        shift = problem.epsilon if c.sense.strict else 0.0
        assert np.array_equal(data.matrix(0, b), -s * c.constant + shift * np.eye(c.size))
        for k in range(problem.nparams):
            assert np.array_equal(data.matrix(k + 1, b), s * c.coefficients[k])


def test_sdpa_certificate_satisfies_exported_blocks():
    p = build_theorem41(EX52, 0.05)
    res = check_feasible(p)
    x = p.pack(res.certificate)
    data = read_sdpa(export_sdpa(p))
    for b in range(1, len(data.block_struct) + 1):
        F = -data.matrix(0, b) + sum(x[k] * data.matrix(k + 1, b) for k in range(data.m))
        assert np.linalg.eigvalsh(F).min() >= -res.solver_stats["verify_tolerance"]


def test_reader_accepts_punctuation_and_comments():
    text = '"comment\n* another\n2 =mdim\n1 =nblock\n{2}\n(0.0, 0.0)\n0 1 1 1 -1.0\n1 1 1 1 1.0\n2 1 2 2 1.0\n1 1 2 1 0.5\n'
    data = read_sdpa(text)
    assert data.block_struct == [2]
    assert np.array_equal(data.matrix(1, 1), [[1.0, 0.5], [0.5, 0.0]])
