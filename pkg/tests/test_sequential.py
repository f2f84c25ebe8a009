import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mttkrp_comm.bounds import ProblemShape, lb_seq_memdep, lb_seq_trivial
from mttkrp_comm.errors import InfeasibleBlockError, InfeasibleMachineError
from mttkrp_comm.memmodel import MemoryMachine
from mttkrp_comm.planner import choose_block_size
from mttkrp_comm.sequential import (
    blocked_words_ceil,
    blocked_words_exact,
    mttkrp_seq_blocked,
    mttkrp_seq_unblocked,
    simulate_seq_blocked,
    unblocked_words,
)
from mttkrp_comm.tensor import mttkrp_oracle, synthetic_problem


def hand_unblocked(dims, R):
    """Expand the unblocked loop nest line by line."""
    N = len(dims)
    words = 0
    for _ in itertools.product(*(range(d) for d in dims)):
        words += 1  # tensor entry
        for _ in range(R):
            words += (N - 1) + 1 + 1  # factor entries, B load, B store
    return words


def enum_blocks(dims, R, n, b):
    """Separate block enumeration: ranges as explicit index lists."""
    total = 0
    starts = [list(range(0, d, b)) for d in dims]
    for corner in itertools.product(*starts):
        sizes = [len(range(c, min(c + b, d))) for c, d in zip(corner, dims)]
        total += math.prod(sizes)
        total += R * sum(sizes[k] for k in range(len(dims)) if k != n)
        total += 2 * R * sizes[n]
    return total


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


@pytest.mark.parametrize(
    "dims, R, expected",
    [((4, 4, 4), 2, 576), ((3, 3), 3, 90), ((2, 2), 1, 16), ((3, 2, 2, 2), 2, 24 + 24 * 2 * 5)],
)
def test_unblocked_counts(dims, R, expected):
    p = synthetic_problem(dims, R, 0)
    B, ledger = mttkrp_seq_unblocked(p, MemoryMachine(len(dims) + 2))
    assert ledger.words == expected == hand_unblocked(dims, R) == unblocked_words(dims, R)
    assert ledger.nary_multiplies == math.prod(dims) * R
    assert np.array_equal(B, mttkrp_oracle(p))


def test_unblocked_rank_zero():
    p = synthetic_problem((3, 2), 0, 0)
    _, ledger = mttkrp_seq_unblocked(p, MemoryMachine(4))
    assert ledger.words == 6


def test_unblocked_needs_capacity():
    with pytest.raises(InfeasibleMachineError):
        mttkrp_seq_unblocked(synthetic_problem((2, 2, 2), 1, 0), MemoryMachine(4))


def test_blocked_worked_example():
    p = synthetic_problem((4, 4, 4), 2, 0)
    m = MemoryMachine(16)
    B, ledger = mttkrp_seq_blocked(p, m, 2)
    assert ledger.words == 192 == 64 + 8 * 2 * 4 * 2
    assert m.peak <= 16
    assert rel_err(B, mttkrp_oracle(p)) <= 1e-12


def test_blocked_unit_blocks_collapse():
    dims, R = (3, 2, 4), 2
    p = synthetic_problem(dims, R, 1)
    _, ledger = mttkrp_seq_blocked(p, MemoryMachine(4), 1)
    assert ledger.words == unblocked_words(dims, R)


def test_blocked_non_dividing():
    dims, R, b = (5, 4, 4), 2, 2
    p = synthetic_problem(dims, R, 0)
    _, ledger = mttkrp_seq_blocked(p, MemoryMachine(14), b)
    assert ledger.words == enum_blocks(dims, R, 0, b) == blocked_words_exact(dims, R, 0, b)
    assert ledger.words <= blocked_words_ceil(dims, R, b)


def test_blocked_rejects_big_block():
    with pytest.raises(InfeasibleBlockError):
        mttkrp_seq_blocked(synthetic_problem((4, 4, 4), 1, 0), MemoryMachine(16), 3)


@given(
    dims=st.lists(st.integers(1, 6), min_size=2, max_size=4),
    R=st.integers(1, 4),
    b=st.integers(1, 3),
    seed=st.integers(0, 1000),
    data=st.data(),
)
def test_blocked_property(dims, R, b, seed, data):
    N = len(dims)
    n = data.draw(st.integers(0, N - 1))
    M = b**N + N * b + data.draw(st.integers(0, 3))
    p = synthetic_problem(dims, R, n, seed)
    m = MemoryMachine(M)
    B, ledger = mttkrp_seq_blocked(p, m, b)
    assert m.peak <= M
    assert ledger.words == enum_blocks(dims, R, n, b)
    assert ledger.words <= blocked_words_ceil(dims, R, b)
    if all(d % b == 0 for d in dims):
        assert ledger.words == math.prod(dims) + math.prod(d // b for d in dims) * R * (N + 1) * b
    assert rel_err(B, mttkrp_oracle(p)) <= 1e-12
    shape = ProblemShape(dims, R, M=M)
    assert ledger.words >= lb_seq_memdep(shape)
    assert ledger.words >= lb_seq_trivial(shape)


@given(
    dims=st.lists(st.integers(1, 5), min_size=2, max_size=4),
    R=st.integers(1, 4),
    seed=st.integers(0, 1000),
)
def test_unblocked_property(dims, R, seed):
    p = synthetic_problem(dims, R, len(dims) - 1, seed)
    M = len(dims) + 2
    B, ledger = mttkrp_seq_unblocked(p, MemoryMachine(M))
    assert np.array_equal(B, mttkrp_oracle(p))
    assert ledger.words == unblocked_words(dims, R)
    shape = ProblemShape(dims, R, M=M)
    assert ledger.words >= max(lb_seq_memdep(shape), lb_seq_trivial(shape))


@pytest.mark.parametrize("b, N", [(2, 2), (2, 3), (3, 3), (4, 2)])
def test_blocking_never_worse(b, N):
    dims, R = (b * 2,) * N, 3
    M = b**N + N * b
    assert choose_block_size(N, M) == b
    blocked = simulate_seq_blocked(dims, R, 0, MemoryMachine(M), b).words
    assert blocked <= unblocked_words(dims, R)


def test_count_only_matches_value_run():
    p = synthetic_problem((5, 3, 4), 3, 2)
    _, a = mttkrp_seq_blocked(p, MemoryMachine(20), 2)
    b = simulate_seq_blocked((5, 3, 4), 3, 2, MemoryMachine(20), 2)
    assert a == b
