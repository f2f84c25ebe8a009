"""Sequential MTTKRP algorithms driven against a :class:`MemoryMachine`.

Both algorithms issue exactly the loads and stores written in their loop nests;
the machine counts them and enforces the capacity.
"""
from __future__ import annotations

import itertools
import math
import string
from typing import Callable, Sequence

import numpy as np

from .errors import InfeasibleBlockError, InfeasibleMachineError
from .memmodel import CostLedger, MemoryMachine
from .tensor import MttkrpProblem, lex_indices


def min_unblocked_capacity(N: int) -> int:
    return N + 2


def block_fits(N: int, b: int, M: int) -> bool:
    return b >= 1 and b**N + N * b <= M


def mttkrp_seq_unblocked(
    problem: MttkrpProblem, machine: MemoryMachine
) -> tuple[np.ndarray, CostLedger]:
    """Loop-nest MTTKRP: load X(i); for each r load the N-1 factor entries and
    B(i_n, r), multiply-add, store B(i_n, r)."""
    dims, n, R = problem.dims, problem.mode, problem.rank
    N = len(dims)
    if machine.capacity < min_unblocked_capacity(N):
        raise InfeasibleMachineError(
            f"unblocked MTTKRP needs M >= N+2 = {N + 2}, machine has {machine.capacity}"
        )
    X = problem.tensor.values
    strides = problem.tensor.strides()
    others = [k for k in range(N) if k != n]
    A = problem.factor_arrays()
    B = np.zeros((dims[n], R))

    for idx in lex_indices(dims):
        x_addr = ("X", idx)
        machine.load(x_addr)
        x = X[sum(i * s for i, s in zip(idx, strides))]
        row = idx[n]
        for r in range(R):
            a_addrs = [("A", k, idx[k], r) for k in others]
            for addr in a_addrs:
                machine.load(addr)
            b_addr = ("B", row, r)
            machine.load(b_addr)
            prod = x
            for k in others:
                prod = prod * A[k][idx[k], r]
            machine.multiply()
            B[row, r] = B[row, r] + prod
            machine.add()
            machine.store(b_addr)
            for addr in a_addrs:
                machine.evict(addr)
        machine.evict(x_addr)
    return B, machine.finish()


def block_ranges(dim: int, b: int) -> list[tuple[int, int]]:
    """Half-open ranges ``[j, min(dim, j+b))`` stepping by ``b``."""
    return [(j, min(dim, j + b)) for j in range(0, dim, b)]


def _run_blocked(
    dims: Sequence[int],
    R: int,
    n: int,
    machine: MemoryMachine,
    b: int,
    on_block: Callable[[tuple[tuple[int, int], ...]], np.ndarray | None] | None = None,
    on_column: Callable[[tuple[int, int], int, np.ndarray], None] | None = None,
) -> CostLedger:
    N = len(dims)
    if not block_fits(N, b, machine.capacity):
        raise InfeasibleBlockError(
            f"block size b={b} violates b^N + N*b <= M "
            f"({b}^{N} + {N}*{b} = {b**N + N * b} > {machine.capacity})"
        )
    others = [k for k in range(N) if k != n]
    for block in itertools.product(*(block_ranges(d, b) for d in dims)):
        size = math.prod(hi - lo for lo, hi in block)
        x_addr = ("X", block)
        machine.load(x_addr, size)
        local = on_block(block) if on_block is not None else None
        rows = block[n][1] - block[n][0]
        for r in range(R):
            a_addrs = [("A", k, block[k], r) for k in others]
            for k, addr in zip(others, a_addrs):
                machine.load(addr, block[k][1] - block[k][0])
            b_addr = ("B", block[n], r)
            machine.load(b_addr, rows)
            machine.multiply(size)
            machine.add(size)
            if on_column is not None:
                on_column(block[n], r, local)
            machine.store(b_addr)
            for addr in a_addrs:
                machine.evict(addr)
        machine.evict(x_addr)
    return machine.finish()


def _local_mttkrp(sub: np.ndarray, mats: list[np.ndarray | None], n: int) -> np.ndarray:
    letters = string.ascii_letters[: sub.ndim]
    operands, specs = [sub], [letters]
    for k, m in enumerate(mats):
        if k != n:
            operands.append(m)
            specs.append(letters[k] + "Z")
    return np.einsum(",".join(specs) + "->" + letters[n] + "Z", *operands)


def mttkrp_seq_blocked(
    problem: MttkrpProblem, machine: MemoryMachine, b: int
) -> tuple[np.ndarray, CostLedger]:
    """Blocked MTTKRP with cubic tensor blocks of side ``b``.

    Requires ``b**N + N*b <= M``. Per block: one tensor-block load; per column
    ``r``: the N-1 factor subcolumns and the B subcolumn are loaded, updated and
    the B subcolumn stored. Block contributions are summed in a different order
    from the oracle, so agreement is up to rounding.
    """
    dims, n, R = problem.dims, problem.mode, problem.rank
    X = problem.tensor.array
    A = problem.factor_arrays()
    B = np.zeros((dims[n], R))

    def on_block(block):
        sl = tuple(slice(lo, hi) for lo, hi in block)
        mats = [None if k == n else A[k][lo:hi] for k, (lo, hi) in enumerate(block)]
        return _local_mttkrp(X[sl], mats, n)

    def on_column(rows, r, local):
        B[rows[0] : rows[1], r] += local[:, r]

    ledger = _run_blocked(dims, R, n, machine, b, on_block, on_column)
    return B, ledger


def simulate_seq_blocked(
    dims: Sequence[int], R: int, n: int, machine: MemoryMachine, b: int
) -> CostLedger:
    """Traffic of the blocked algorithm without touching any values."""
    return _run_blocked(tuple(dims), R, n, machine, b)


def unblocked_words(dims: Sequence[int], R: int) -> int:
    """Closed-form traffic of the unblocked algorithm: I + I*R*(N+1)."""
    I = math.prod(dims)
    return I + I * R * (len(dims) + 1)


def blocked_words_exact(dims: Sequence[int], R: int, n: int, b: int) -> int:
    """Sum over blocks of |block| + R*(sum_{k!=n} |range_k| + 2|range_n|)."""
    total = 0
    for block in itertools.product(*(block_ranges(d, b) for d in dims)):
        lens = [hi - lo for lo, hi in block]
        total += math.prod(lens) + R * (sum(lens) + lens[n])
    return total


def blocked_words_ceil(dims: Sequence[int], R: int, b: int) -> int:
    """Upper bound I + prod(ceil(I_k/b)) * R * (N+1) * b."""
    N = len(dims)
    return math.prod(dims) + math.prod(-(-d // b) for d in dims) * R * (N + 1) * b
