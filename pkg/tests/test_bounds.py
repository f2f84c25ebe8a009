import itertools
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from mttkrp_comm.bounds import (
    ProblemShape,
    applicable_bound,
    bounds_report,
    delta_matrix,
    hbl_check,
    hbl_feasible,
    lb_par_combined,
    lb_par_memdep,
    lb_par_memind_general,
    lb_par_memind_rect,
    lb_seq_memdep,
    lb_seq_memdep_floored,
    lb_seq_trivial,
    lemma_lp_solution,
    lemma_max_product,
    lemma_min_sum,
    lp_numeric,
    optimality_ratio,
    segment_constant,
)
from mttkrp_comm.errors import DomainError, ShapeError

FIG1 = [(5, 1, 1, 1), (3, 3, 15, 1), (7, 10, 2, 2), (4, 14, 11, 3), (11, 2, 2, 4), (14, 14, 14, 4)]


def thm1_oracle(N, I, R, M):
    with mpmath.workdps(80):
        N, I, R, M = map(mpmath.mpf, (N, I, R, M))
        return N * I * R / (mpmath.power(3, 2 - 1 / N) * mpmath.power(M, 1 - 1 / N)) - M


def test_thm1_example():
    v = lb_seq_memdep(ProblemShape((16, 16, 16), 16, M=256))
    assert v == pytest.approx(float(thm1_oracle(3, 4096, 16, 256)), rel=1e-14)
    assert v == pytest.approx(525.7, rel=1e-3)


def test_thm1_n2_specialization():
    I, R, M = 900, 7, 50
    expected = 2 * I * R / (3**1.5 * math.sqrt(M)) - M
    assert lb_seq_memdep(ProblemShape((30, 30), R, M=M)) == pytest.approx(expected, rel=1e-12)


def test_thm1_clamps_past_threshold():
    N, I, R = 3, 64, 2
    thresh = (N * I * R / 3 ** (2 - 1 / N)) ** (N / (2 * N - 1))
    shape = ProblemShape((4, 4, 4), R, M=math.ceil(thresh) + 1)
    assert lb_seq_memdep(shape) == 0.0
    assert lb_seq_memdep(shape, clamp=False) < 0


def test_thm1_needs_memory():
    with pytest.raises(DomainError):
        lb_seq_memdep(ProblemShape((4, 4), 2, M=0))


def test_floored_form_below_smooth_for_small():
    shape = ProblemShape((4, 4, 4), 2, M=8)
    assert lb_seq_memdep_floored(shape) <= lb_seq_memdep(shape, clamp=False) + shape.M


def test_fact1():
    assert lb_seq_trivial(ProblemShape((4, 4, 4), 2, M=0)) == 88
    assert lb_seq_trivial(ProblemShape((4, 4, 4), 2, M=10**6)) == 0


def test_cor1_single_processor():
    s = ProblemShape((8, 8, 8), 4, M=32, P=1)
    assert lb_par_memdep(s) == pytest.approx(lb_seq_memdep(s), rel=1e-15)


def test_memind_values():
    s = ProblemShape((16, 16, 16), 16, P=4)
    N, I, R, P = 3, 4096, 16, 4
    g = 2 * (N * I * R / P) ** (N / (2 * N - 1)) - I / P - 48 * R / P
    r = min(math.sqrt(2 / 3) * N * R * (I / P) ** (1 / N) - 48 * R / P, I / (2 * P))
    assert lb_par_memind_general(s) == pytest.approx(g, rel=1e-12)
    assert lb_par_memind_rect(s) == pytest.approx(r, rel=1e-12)


def test_gamma_delta_lower_bounds():
    base = ProblemShape((16, 16, 16), 16, P=4)
    loose = ProblemShape((16, 16, 16), 16, P=4, gamma=2, delta=2)
    assert lb_par_memind_general(loose) <= lb_par_memind_general(base)
    with pytest.raises(ShapeError):
        ProblemShape((4, 4), 2, gamma=0.5)


def test_fig3_rect_first_branch():
    s = ProblemShape((2**15,) * 3, 2**15, P=2**17)
    first = math.sqrt(2 / 3) * 3 * 2**15 * (2**45 / 2**17) ** (1 / 3) - 3 * 2**30 / 2**17
    second = 2**45 / 2 ** 18
    assert first < second
    assert lb_par_memind_rect(s) == pytest.approx(first, rel=1e-12)


def test_combined_selector():
    # NR = 3*16 = 48 vs (I/P)^(2/3): I/P = 64 gives 16 -> general regime
    c = lb_par_combined(ProblemShape((16, 16, 16), 16, P=64))
    assert c.regime == "general"
    c = lb_par_combined(ProblemShape((64, 64, 64), 1, P=2))
    assert c.regime == "rect"
    assert c.value == max(0.0, c.rect_raw)
    with pytest.raises(ShapeError):
        lb_par_combined(ProblemShape((4, 8), 2, P=2))


def test_combined_threshold_both_reported():
    # N=2: NR = (I/P)^(1/2) when I/P = 4R^2
    R, P = 4, 4
    s = ProblemShape((16, 16), R, P=P)
    assert 2 * R == math.sqrt(256 / P)
    c = lb_par_combined(s)
    assert c.regime == "general"
    assert math.isfinite(c.general_raw) and math.isfinite(c.rect_raw)


def test_report_nonnegative_and_csv():
    rep = bounds_report(ProblemShape((16, 16, 16), 16, M=4096, P=8))
    for _, v in rep.rows():
        assert v >= 0
    lines = rep.to_csv().splitlines()
    assert lines[0].startswith("kind,value,raw,N,dims,R,M,P")
    assert len(lines) == len(rep.rows()) + 1


@pytest.mark.parametrize("N", range(2, 11))
def test_lp_solution(N):
    s, obj = lemma_lp_solution(N)
    x, fun = lp_numeric(N)
    assert obj == pytest.approx(2 - 1 / N, abs=1e-15)
    assert abs(fun - obj) <= 1e-9
    assert np.max(np.abs(x - s)) <= 1e-9
    assert hbl_feasible(s)
    assert segment_constant(N) <= 1 / N + 1e-15


@pytest.mark.parametrize("N, s", [(3, [1 / 3, 1 / 3, 1 / 3, 2 / 3]), (2, [0.5, 0.5, 0.5])])
def test_lp_substituted(N, s):
    np.testing.assert_allclose(lemma_lp_solution(N)[0], s)


def test_delta_shape():
    D = delta_matrix(3)
    assert D.shape == (4, 4)
    assert D[3, 3] == 0 and D[0, 3] == 1 and D[3, 0] == 1


def test_lemma_small_cases():
    assert lemma_max_product([1, 1], 2) == pytest.approx(1.0)
    assert lemma_min_sum([1, 1], 1) == pytest.approx(2.0)
    with pytest.raises(DomainError):
        lemma_max_product([1, 1], 0)
    with pytest.raises(DomainError):
        lemma_min_sum([1, 1], -1)
    with pytest.raises(DomainError):
        lemma_max_product([1, 0], 1)


def test_lemma3_thm1_case_grid():
    s = np.array([1 / 3, 1 / 3, 1 / 3, 2 / 3])
    c = 3 * 27
    rng = np.random.default_rng(0)
    x = rng.dirichlet(np.ones(4), size=200_000) * c
    best = np.max(np.prod(x**s, axis=1))
    v = lemma_max_product(s, c)
    assert best <= v * (1 + 1e-12)
    assert best == pytest.approx(v, rel=1e-2)
    # optimum at x = c s / sum s
    assert np.prod((c * s / s.sum()) ** s) == pytest.approx(v, rel=1e-12)


def test_lemma4_attained():
    s = np.array([0.5, 0.25, 1.0])
    c = 7.0
    v = lemma_min_sum(s, c)
    lam = v / s.sum()
    x = lam * s
    assert np.prod(x**s) == pytest.approx(c, rel=1e-12)
    assert x.sum() == pytest.approx(v, rel=1e-12)


def test_hbl_full_box_equality():
    F = list(itertools.product(range(2), repeat=4))
    s, _ = lemma_lp_solution(3)
    res = hbl_check(F, s)
    assert res.lhs == 16
    assert res.projection_sizes == (4, 4, 4, 8)
    assert res.rhs == pytest.approx(16.0, rel=1e-12)
    assert res.holds


def test_hbl_fig1_points():
    s, _ = lemma_lp_solution(3)
    res = hbl_check(FIG1, s)
    assert res.projection_sizes == (6, 6, 6, 6)
    assert res.lhs == 6
    assert res.rhs == pytest.approx(6 ** (5 / 3))
    assert res.holds


def test_hbl_rejects_infeasible():
    with pytest.raises(DomainError):
        hbl_check(FIG1, [0.1, 0.1, 0.1, 0.1])


@given(st.sets(st.tuples(*[st.integers(0, 3)] * 4), min_size=1, max_size=60))
def test_hbl_random_subsets(F):
    s, _ = lemma_lp_solution(3)
    assert hbl_check(F, s).holds


@given(
    st.lists(st.fractions(0, 1, max_denominator=8), min_size=4, max_size=4),
    st.sets(st.tuples(*[st.integers(0, 2)] * 4), min_size=1, max_size=40),
)
def test_hbl_other_feasible_exponents(s, F):
    s = [float(Fraction(v)) for v in s]
    if hbl_feasible(s):
        assert hbl_check(F, s).holds


def test_ratio_cases():
    s = ProblemShape((4, 4, 4), 2, M=0)
    assert optimality_ratio(s, 88) == pytest.approx(1.0)
    assert optimality_ratio(ProblemShape((4, 4), 1, M=10**6), 10) is None
    with pytest.raises(DomainError):
        optimality_ratio(s, 0)
    assert applicable_bound(ProblemShape((16, 16, 16), 4, P=4), "par") > 0
