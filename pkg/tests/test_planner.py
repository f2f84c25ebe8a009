import itertools
import math

import pytest
from hypothesis import given, settings, strategies as st

from mttkrp_comm.errors import InfeasibleMachineError, PlanningError, ShapeError
from mttkrp_comm.parsim import ProcessorGrid, comm_words_formula, par_general_mttkrp
from mttkrp_comm.planner import (
    SWEEP_COLUMNS,
    SweepSpec,
    best_grids,
    choose_block_size,
    choose_grid,
    count_kinks,
    fig3_spec,
    matmul_baseline_words,
    matmul_carma_words,
    matmul_regime_words,
    plan,
    scaling_sweep,
    sweep_csv,
)
from mttkrp_comm.tensor import synthetic_problem


def brute_grid(dims, R, n, P, stationary):
    """Every ordered (P0, P1..PN) with product P, scanned naively."""
    best = None
    p0s = [1] if stationary else range(1, min(R, P) + 1)
    for p0 in p0s:
        for rest in itertools.product(*(range(1, d + 1) for d in dims)):
            if p0 * math.prod(rest) != P:
                continue
            g = ProcessorGrid(rest, p0)
            key = (comm_words_formula(dims, R, n, g), (p0, *rest))
            best = key if best is None or key < best else best
    return best


def test_block_size_examples():
    assert choose_block_size(3, 16) == 2
    assert choose_block_size(2, 3) == 1
    with pytest.raises(InfeasibleMachineError):
        choose_block_size(3, 3)


@given(st.integers(2, 6), st.integers(1, 5000))
def test_block_size_is_largest(N, M):
    if M < N + 1:
        with pytest.raises(InfeasibleMachineError):
            choose_block_size(N, M)
        return
    b = choose_block_size(N, M)
    assert b >= 1 and b**N + N * b <= M
    assert (b + 1) ** N + N * (b + 1) > M


def test_grid_examples():
    assert choose_grid((16, 16, 16), 4, 0, 8, "stationary") == ProcessorGrid((2, 2, 2))
    assert choose_grid((5, 3, 2), 3, 1, 1) == ProcessorGrid((1, 1, 1))
    with pytest.raises(PlanningError):
        choose_grid((2, 2), 1, 0, 5)
    with pytest.raises(PlanningError):
        choose_grid((2, 2), 2, 0, 3, "stationary")


@settings(max_examples=60)
@given(
    st.lists(st.integers(1, 12), min_size=2, max_size=3),
    st.integers(1, 8),
    st.integers(1, 64),
    st.booleans(),
)
def test_grid_minimal_vs_brute_force(dims, R, P, stationary):
    ref = brute_grid(dims, R, 0, P, stationary)
    alg = "stationary" if stationary else "general"
    if ref is None:
        with pytest.raises(PlanningError):
            choose_grid(dims, R, 0, P, alg)
        return
    g = choose_grid(dims, R, 0, P, alg)
    assert (comm_words_formula(dims, R, 0, g), g.factors) == ref
    assert all(pk <= ik for pk, ik in zip(g.dims, dims)) and g.p0 <= R


@pytest.mark.parametrize("P", [2**e for e in range(0, 13)])
def test_grid_minimal_powers_of_two(P):
    dims, R = (64, 32, 16), 32
    for stationary in (True, False):
        ref = brute_grid(dims, R, 0, P, stationary)
        g = choose_grid(dims, R, 0, P, "stationary" if stationary else "general")
        assert (comm_words_formula(dims, R, 0, g), g.factors) == ref


def test_fig3_largest_p_uses_p0():
    spec = fig3_spec()
    g = choose_grid(spec.dims, spec.R, 0, 2**30, "general")
    assert g.p0 > 1


@pytest.mark.parametrize("grid", ["1x2x2x2", "2x2x2x1", "4x1x2x2"])
def test_formula_matches_simulation(grid):
    g = ProcessorGrid.parse(grid)
    p = synthetic_problem((8, 8, 8), 16, 0)
    assert par_general_mttkrp(p, g).ledger.max_words == comm_words_formula((8, 8, 8), 16, 0, g)


def test_matmul_regime_examples():
    dims, R = (2**15,) * 3, 2**15
    assert matmul_regime_words(dims, R, 2) == 2**30
    assert matmul_regime_words(dims, R, 2**30) == pytest.approx(2**20, rel=1e-12)
    assert matmul_baseline_words(dims, R, 1) == 0
    with pytest.raises(ShapeError):
        matmul_baseline_words((4, 8), 2, 4)
    with pytest.raises(ValueError):
        matmul_baseline_words(dims, R, 4, model="nope")


def test_matmul_one_kink():
    spec = fig3_spec()
    for model in ("regimes", "carma"):
        words = [matmul_baseline_words(spec.dims, spec.R, P, model) for P in spec.Ps]
        assert count_kinks(spec.Ps, words) == 1


def test_carma_small_cases():
    # 2 processors, cube 4x16 times 16x4 (N=2 dims (4,4), R=4): split k=16 in half
    assert matmul_carma_words((4, 4), 4, 2) == 2 * 1 * 4 * 4 / 2
    assert matmul_carma_words((4, 4), 4, 1) == 0
    # prime split of 3 on the largest dimension
    assert matmul_carma_words((3, 3), 3, 3) == 2 * 2 * 9 / 3


def test_count_kinks():
    Ps = [2**e for e in range(8)]
    assert count_kinks(Ps, [10.0] * 8) == 0
    assert count_kinks(Ps, [10, 10, 10, 10, 5, 2.5, 1.25, 0.6]) == 1


def test_sweep_rows_and_csv():
    spec = SweepSpec((16, 16, 16), 8, (1, 2, 4, 8, 16))
    rows = scaling_sweep(spec)
    assert [r.P for r in rows] == [1, 2, 4, 8, 16]
    assert rows[0].alg3_words == rows[0].alg4_words == 0
    assert rows[0].mm_words == 0
    for r in rows:
        assert r.alg4_words <= r.alg3_words
    text = sweep_csv(rows)
    assert text.splitlines()[0] == ",".join(SWEEP_COLUMNS)
    assert len(text.splitlines()) == 6
    with pytest.raises(PlanningError):
        SweepSpec((4, 4), 2, (0, 1))


def test_fig3_monotone_and_alg4_below_alg3():
    rows = scaling_sweep(fig3_spec())
    # P=1 moves nothing and P=2 splits a single mode, so the curve rises up to P=4
    assert rows[0].alg3_words < rows[1].alg3_words < rows[2].alg3_words
    for a, b in zip(rows[2:], rows[3:]):
        assert b.alg3_words <= a.alg3_words and b.alg4_words <= a.alg4_words
    assert all(r.alg4_words <= r.alg3_words for r in rows)


def test_plan():
    res = plan((16, 16, 16), 8, 0, P=8, M=256)
    assert res.b == choose_block_size(3, 256)
    assert res.alg3_words >= max(0.0, *res.bounds.values()) or res.ratios["alg3"] >= 1
    assert res.alg4_words <= res.alg3_words
    assert res.mm_words is not None
    for name in ("alg2", "alg3", "alg4"):
        assert res.ratios[name] is None or res.ratios[name] >= 1


def test_best_grids_consistent():
    stat, gen = best_grids((8, 8, 8), 8, 0, 16)
    assert stat.p0 == 1
    assert comm_words_formula((8,) * 3, 8, 0, gen) <= comm_words_formula((8,) * 3, 8, 0, stat)
