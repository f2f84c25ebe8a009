"""Deterministic distributed-memory simulator for the parallel MTTKRP algorithms.

Virtual processors live in one process; collectives are executed step by step
(bucket/ring algorithms) at word granularity and every transfer is charged to
the sending and receiving processor. Latency is not modelled.

Processor ids are tuples ``(p0, p1, ..., pN)``; ``p0`` indexes the column
(rank) dimension and is always 0 for the stationary algorithm. Ranks are the
positions of these tuples in lexicographic order.
"""
from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DistributionError, PlanningError
from .tensor import MttkrpProblem

ATOMIC = "atomic"
KRP = "krp"


def partition(length: int, parts: int) -> list[tuple[int, int]]:
    """Contiguous half-open ranges; the first ``length % parts`` are one longer."""
    if parts < 1:
        raise PlanningError(f"cannot split into {parts} parts")
    base, extra = divmod(length, parts)
    out, lo = [], 0
    for i in range(parts):
        hi = lo + base + (1 if i < extra else 0)
        out.append((lo, hi))
        lo = hi
    return out


@dataclass(frozen=True)
class ProcessorGrid:
    """``P = p0 * prod(dims)``; ``p0`` splits the rank dimension."""

    dims: tuple[int, ...]
    p0: int = 1

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.p0 < 1 or any(d < 1 for d in self.dims):
            raise PlanningError(f"grid factors must be >= 1: {self}")

    @classmethod
    def parse(cls, text: str) -> "ProcessorGrid":
        """``"P0xP1x...xPN"``."""
        try:
            f = [int(t) for t in text.lower().split("x")]
        except ValueError:
            raise PlanningError(f"bad grid {text!r}; expected P0xP1x...xPN") from None
        if len(f) < 3:
            raise PlanningError(f"grid {text!r} needs P0 and at least two mode factors")
        return cls(tuple(f[1:]), f[0])

    @property
    def P(self) -> int:
        return self.p0 * math.prod(self.dims)

    @property
    def factors(self) -> tuple[int, ...]:
        return (self.p0, *self.dims)

    def coords(self) -> list[tuple[int, ...]]:
        return list(itertools.product(*(range(f) for f in self.factors)))

    def __str__(self):
        return "x".join(map(str, self.factors))


def check_grid(dims: Sequence[int], R: int, grid: ProcessorGrid) -> None:
    if len(grid.dims) != len(dims):
        raise PlanningError(f"grid {grid} has {len(grid.dims)} mode factors, tensor has {len(dims)}")
    for k, (Pk, Ik) in enumerate(zip(grid.dims, dims)):
        if Pk > Ik:
            raise PlanningError(f"grid factor P_{k + 1}={Pk} exceeds dimension I_{k + 1}={Ik}")
    if grid.p0 > max(R, 1):
        raise PlanningError(f"P0={grid.p0} exceeds rank R={R}")


class DataDistribution:
    """Block distribution of tensor and factor matrices over a processor grid.

    Mode k is split into ``P_k`` contiguous row ranges and the rank dimension
    into ``P_0`` column ranges. A block shared by several processors (a
    subtensor across its ``P_0`` fiber, a factor block row across its
    hyperslice) is flattened and cut into balanced contiguous chunks, one per
    member, members ordered by processor rank. Subtensors flatten in
    column-major order, matrix blocks in row-major order.
    """

    def __init__(self, dims: Sequence[int], R: int, mode: int, grid: ProcessorGrid):
        self.dims = tuple(dims)
        self.R = R
        self.mode = mode
        self.grid = grid
        check_grid(self.dims, R, grid)
        self.N = len(self.dims)
        self.rows = [partition(I, Pk) for I, Pk in zip(self.dims, grid.dims)]
        self.cols = partition(R, grid.p0)
        self.procs = grid.coords()
        self.rank = {p: i for i, p in enumerate(self.procs)}

        self.fibers: dict[tuple, list[int]] = {}
        self.slices: dict[tuple, list[int]] = {}
        for i, p in enumerate(self.procs):
            self.fibers.setdefault(p[1:], []).append(i)
            for k in range(self.N):
                self.slices.setdefault((k, p[0], p[k + 1]), []).append(i)

    # geometry
    def row_range(self, k: int, p: tuple) -> tuple[int, int]:
        return self.rows[k][p[k + 1]]

    def col_range(self, p: tuple) -> tuple[int, int]:
        return self.cols[p[0]]

    def sub_shape(self, p: tuple) -> tuple[int, ...]:
        return tuple(hi - lo for lo, hi in (self.row_range(k, p) for k in range(self.N)))

    def ncols(self, p: tuple) -> int:
        lo, hi = self.col_range(p)
        return hi - lo

    def fiber(self, p: tuple) -> list[int]:
        return self.fibers[p[1:]]

    def hyperslice(self, k: int, p: tuple) -> list[int]:
        return self.slices[(k, p[0], p[k + 1])]

    def chunk(self, total: int, members: list[int], proc: int) -> tuple[int, int]:
        return partition(total, len(members))[members.index(proc)]

    # ownership sizes
    def nnz_tensor(self, p: tuple) -> int:
        i = self.rank[p]
        lo, hi = self.chunk(math.prod(self.sub_shape(p)), self.fiber(p), i)
        return hi - lo

    def nnz_factor(self, k: int, p: tuple) -> int:
        i = self.rank[p]
        size = (self.row_range(k, p)[1] - self.row_range(k, p)[0]) * self.ncols(p)
        lo, hi = self.chunk(size, self.hyperslice(k, p), i)
        return hi - lo

    def balance(self) -> tuple[float, float]:
        """Measured (gamma, delta): worst tensor and factor ownership relative to I/P
        and sum_k I_k R / P, counting input factors initially and the output finally."""
        P, I = self.grid.P, math.prod(self.dims)
        fac_total = sum(self.dims) * self.R
        gamma = max(self.nnz_tensor(p) for p in self.procs) * P / I
        delta = 1.0
        if fac_total:
            delta = max(sum(self.nnz_factor(k, p) for k in range(self.N)) for p in self.procs) * P / fac_total
        return max(1.0, gamma), max(1.0, delta)


@dataclass
class CollectiveStats:
    sent: list[int]
    received: list[int]
    additions: list[int]
    steps: int


def bucket_allgather(parts: Sequence[np.ndarray]) -> tuple[list[np.ndarray], CollectiveStats]:
    """Ring All-Gather: in step s member i passes part (i - s) mod q to member i+1.

    Returns every member's concatenation (in member order) and per-member traffic.
    """
    q = len(parts)
    if q < 1:
        raise DistributionError("collective needs at least one member")
    known = [{i: np.asarray(parts[i])} for i in range(q)]
    sent, recv = [0] * q, [0] * q
    for s in range(q - 1):
        msgs = []
        for i in range(q):
            j = (i - s) % q
            msgs.append(((i + 1) % q, j, known[i][j]))
        for i, (dst, j, buf) in enumerate(msgs):
            sent[i] += buf.size
            recv[dst] += buf.size
            known[dst][j] = buf
    gathered = [np.concatenate([known[i][j] for j in range(q)]) for i in range(q)]
    return gathered, CollectiveStats(sent, recv, [0] * q, max(q - 1, 0))


def bucket_reduce_scatter(
    arrays: Sequence[np.ndarray], bounds: Sequence[tuple[int, int]] | None = None
) -> tuple[list[np.ndarray], CollectiveStats]:
    """Ring Reduce-Scatter: member i ends with slice ``bounds[i]`` of the elementwise sum.

    In step s member i sends its running sum of slice (i - s - 1) mod q to member
    i+1, which adds its own contribution. ``bounds`` defaults to a balanced split.
    """
    q = len(arrays)
    if q < 1:
        raise DistributionError("collective needs at least one member")
    lengths = {np.asarray(a).size for a in arrays}
    if len(lengths) != 1:
        raise DistributionError(f"reduce-scatter arrays differ in length: {sorted(lengths)}")
    length = lengths.pop()
    bounds = list(bounds) if bounds is not None else partition(length, q)
    if len(bounds) != q or bounds[-1][1] != length:
        raise DistributionError("slice bounds do not cover the arrays")
    acc = [
        {c: np.array(np.asarray(arrays[i])[lo:hi], dtype=float) for c, (lo, hi) in enumerate(bounds)}
        for i in range(q)
    ]
    sent, recv, adds = [0] * q, [0] * q, [0] * q
    for s in range(q - 1):
        msgs = []
        for i in range(q):
            c = (i - s - 1) % q
            msgs.append(((i + 1) % q, c, acc[i][c]))
        for i, (dst, c, buf) in enumerate(msgs):
            sent[i] += buf.size
            recv[dst] += buf.size
            acc[dst][c] = acc[dst][c] + buf
            adds[dst] += buf.size
    return [acc[i][i] for i in range(q)], CollectiveStats(sent, recv, adds, max(q - 1, 0))


@dataclass
class CommLedger:
    P: int
    words_sent: list[int] = field(default_factory=list)
    words_received: list[int] = field(default_factory=list)
    additions: list[int] = field(default_factory=list)
    nary_multiplies: list[int] = field(default_factory=list)
    flops: list[int] = field(default_factory=list)
    storage: list[int] = field(default_factory=list)
    by_array: dict[str, int] = field(default_factory=dict)
    collectives: list[tuple[str, tuple[int, ...], tuple[int, ...]]] = field(default_factory=list)

    def __post_init__(self):
        for name in ("words_sent", "words_received", "additions", "nary_multiplies", "flops", "storage"):
            if not getattr(self, name):
                setattr(self, name, [0] * self.P)

    def record(self, array: str, members: Sequence[int], stats: CollectiveStats) -> None:
        for m, s, r, a in zip(members, stats.sent, stats.received, stats.additions):
            self.words_sent[m] += s
            self.words_received[m] += r
            self.additions[m] += a
            self.flops[m] += a
        self.by_array[array] = self.by_array.get(array, 0) + sum(stats.sent)
        self.collectives.append((array, tuple(members), tuple(stats.sent)))

    def words(self, proc: int) -> int:
        """Per-processor bandwidth cost: the larger of words sent and received."""
        return max(self.words_sent[proc], self.words_received[proc])

    @property
    def max_words(self) -> int:
        return max(self.words(p) for p in range(self.P))

    @property
    def mean_words(self) -> float:
        return sum(self.words(p) for p in range(self.P)) / self.P

    @property
    def max_received(self) -> int:
        return max(self.words_received)

    @property
    def conserved(self) -> bool:
        return sum(self.words_sent) == sum(self.words_received)

    def signature(self) -> tuple:
        return (tuple(self.words_sent), tuple(self.words_received), tuple(self.additions),
                tuple(self.nary_multiplies), tuple(self.flops), tuple(sorted(self.by_array.items())))


def local_krp_matmul_flops(sub_shape: Sequence[int], R: int, mode: int) -> int:
    """R * prod|S_k| * (2 + 1/|S_n|): explicit local Khatri-Rao product then a matmul."""
    if R < 0 or any(s < 1 for s in sub_shape):
        raise DistributionError(f"local block must be nonempty, got {tuple(sub_shape)}")
    vol = math.prod(sub_shape)
    return 2 * R * vol + R * (vol // sub_shape[mode])


def local_atomic_flops(sub_shape: Sequence[int], R: int) -> int:
    """N operations (N-1 multiplies folded into one N-ary multiply, plus one add) per iteration."""
    return len(sub_shape) * R * math.prod(sub_shape)


def _local_mttkrp(sub: np.ndarray, mats: list[np.ndarray | None], n: int) -> np.ndarray:
    letters = string.ascii_lowercase[: sub.ndim]
    specs, ops = [letters], [sub]
    for k, m in enumerate(mats):
        if k != n:
            specs.append(letters[k] + "Z")
            ops.append(m)
    return np.einsum(",".join(specs) + "->" + letters[n] + "Z", *ops)


def _local_krp_matmul(sub: np.ndarray, mats: list[np.ndarray | None], n: int, R: int) -> np.ndarray:
    others = [k for k in range(sub.ndim) if k != n]
    Xn = np.moveaxis(sub, n, 0).reshape(sub.shape[n], -1, order="F")
    letters = string.ascii_lowercase[: len(others)]
    K = np.einsum(",".join(c + "Z" for c in letters) + "->" + letters + "Z", *(mats[k] for k in others))
    K = K.reshape(-1, R, order="F")
    return Xn @ K


@dataclass
class ParallelResult:
    B: np.ndarray
    parts: dict[tuple, np.ndarray]
    ledger: CommLedger
    distribution: DataDistribution


def par_general_mttkrp(problem: MttkrpProblem, grid: ProcessorGrid, arith: str = ATOMIC) -> ParallelResult:
    """Gather the local subtensor across the P0 fiber, gather factor block rows
    across hyperslices, compute a local MTTKRP, Reduce-Scatter the output block.
    """
    if arith not in (ATOMIC, KRP):
        raise ValueError(f"arith must be {ATOMIC!r} or {KRP!r}")
    dims, n, R, N = problem.dims, problem.mode, problem.rank, problem.order
    dist = DataDistribution(dims, R, n, grid)
    P = grid.P
    ledger = CommLedger(P)
    X = problem.tensor.array
    A = problem.factor_arrays()
    procs = dist.procs

    def sub_slices(p):
        return tuple(slice(*dist.row_range(k, p)) for k in range(N))

    # initial tensor parts and gather across the P0 fiber
    subtensor: dict[int, np.ndarray] = {}
    for members in dist.fibers.values():
        p = procs[members[0]]
        block = X[sub_slices(p)].reshape(-1, order="F")
        parts = [block[slice(*dist.chunk(block.size, members, m))] for m in members]
        gathered, stats = bucket_allgather(parts)
        ledger.record("X", members, stats)
        for m, g in zip(members, gathered):
            subtensor[m] = g.reshape(dist.sub_shape(procs[m]), order="F")

    # factor block rows, gathered within each hyperslice
    blocks: dict[tuple[int, int], np.ndarray] = {}
    for k in range(N):
        if k == n:
            continue
        seen = set()
        for i, p in enumerate(procs):
            members = dist.hyperslice(k, p)
            if members[0] in seen:
                continue
            seen.add(members[0])
            lo, hi = dist.row_range(k, p)
            c0, c1 = dist.col_range(p)
            block = A[k][lo:hi, c0:c1].reshape(-1)
            parts = [block[slice(*dist.chunk(block.size, members, m))] for m in members]
            gathered, stats = bucket_allgather(parts)
            ledger.record(f"A{k + 1}", members, stats)
            for m, g in zip(members, gathered):
                blocks[(m, k)] = g.reshape(hi - lo, c1 - c0)

    # local computation
    local: dict[int, np.ndarray] = {}
    for i, p in enumerate(procs):
        shape = dist.sub_shape(p)
        ncols = dist.ncols(p)
        mats = [None if k == n else blocks[(i, k)] for k in range(N)]
        if arith == ATOMIC:
            local[i] = _local_mttkrp(subtensor[i], mats, n)
            ledger.flops[i] += local_atomic_flops(shape, ncols)
            ledger.nary_multiplies[i] += ncols * math.prod(shape)
        else:
            local[i] = _local_krp_matmul(subtensor[i], mats, n, ncols)
            ledger.flops[i] += local_krp_matmul_flops(shape, ncols, n)
        ledger.additions[i] += ncols * math.prod(shape)
        ledger.storage[i] = math.prod(shape) + sum(s * ncols for s in shape)

    # reduce-scatter of the output block row within each mode-n hyperslice
    parts_out: dict[tuple, np.ndarray] = {}
    B = np.zeros((dims[n], R))
    seen = set()
    for i, p in enumerate(procs):
        members = dist.hyperslice(n, p)
        if members[0] in seen:
            continue
        seen.add(members[0])
        lo, hi = dist.row_range(n, p)
        c0, c1 = dist.col_range(p)
        size = (hi - lo) * (c1 - c0)
        bounds = [dist.chunk(size, members, m) for m in members]
        pieces, stats = bucket_reduce_scatter([local[m].reshape(-1) for m in members], bounds)
        ledger.record(f"B{n + 1}", members, stats)
        flat = np.empty(size)
        for m, piece, (a, b) in zip(members, pieces, bounds):
            parts_out[procs[m]] = piece
            flat[a:b] = piece
        B[lo:hi, c0:c1] = flat.reshape(hi - lo, c1 - c0)

    return ParallelResult(B, parts_out, ledger, dist)


def par_stationary_mttkrp(problem: MttkrpProblem, grid: ProcessorGrid, arith: str = ATOMIC) -> ParallelResult:
    """Stationary-tensor algorithm: the general algorithm on a grid with P0 = 1.
    The tensor never moves."""
    if grid.p0 != 1:
        raise PlanningError(f"stationary algorithm needs P0 = 1, grid is {grid}")
    result = par_general_mttkrp(problem, grid, arith)
    assert result.ledger.by_array.get("X", 0) == 0
    return result


def comm_words_formula(dims: Sequence[int], R: int, mode: int, grid: ProcessorGrid) -> int:
    """Closed-form per-processor words for the bucket collectives:

    (P0 - 1) * max nnz(X_p) + sum_k (P/(P0 P_k) - 1) * max nnz(factor part of mode k),

    with the maxima of the balanced block distribution (exact when everything
    divides, an upper bound otherwise).
    """
    check_grid(dims, R, grid)
    P, p0 = grid.P, grid.p0
    rcols = -(-R // p0)
    sub = math.prod(-(-I // Pk) for I, Pk in zip(dims, grid.dims))
    total = (p0 - 1) * -(-sub // p0)
    for I, Pk in zip(dims, grid.dims):
        q = P // (p0 * Pk)
        total += (q - 1) * -(-(-(-I // Pk) * rcols) // q)
    return total


def storage_formula(dims: Sequence[int], R: int, grid: ProcessorGrid) -> int:
    """Per-processor storage prod|S_k| + sum_k |S_k| |T| at the largest parts."""
    sizes = [-(-I // Pk) for I, Pk in zip(dims, grid.dims)]
    return math.prod(sizes) + sum(sizes) * -(-R // grid.p0)
