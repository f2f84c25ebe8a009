"""Dense tensor / factor matrix types, synthetic data, file format and the MTTKRP oracle.

Conventions
-----------
* Modes are 0-based in the Python API (``mode=0`` is the first mode). The text
  file format and the CLI use 1-based modes.
* Tensor values are stored linearized in generalized column-major order: mode 0
  varies fastest. ``DenseTensor.array`` exposes an ``(I_0, ..., I_{N-1})`` view
  in Fortran order.
* Factor matrices are ``I_k x R`` row-major arrays.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import InvalidProblemError

__all__ = [
    "DenseTensor",
    "FactorMatrix",
    "MttkrpProblem",
    "XorShift64Star",
    "SyntheticSpec",
    "parse_dims",
    "parse_synthetic",
    "synthetic_problem",
    "load_problem",
    "read_problem",
    "write_problem",
    "mttkrp_oracle",
    "lex_indices",
]

_MASK64 = (1 << 64) - 1


class XorShift64Star:
    """xorshift64* generator (Vigna 2016) with a splitmix64-scrambled seed.

    ``uniform()`` maps the top 53 bits of each output to ``[-1, 1)``.
    """

    MULT = 0x2545F4914F6CDD1D

    def __init__(self, seed: int = 42):
        z = (seed + 0x9E3779B97F4A7C15) & _MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z ^= z >> 31
        self.state = z or 1

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK64
        x ^= x >> 27
        self.state = x
        return (x * self.MULT) & _MASK64

    def uniform(self, n: int) -> np.ndarray:
        out = np.empty(n, dtype=np.float64)
        scale = 2.0 ** -53
        for i in range(n):
            out[i] = 2.0 * ((self.next_u64() >> 11) * scale) - 1.0
        return out


@dataclass(frozen=True)
class DenseTensor:
    dims: tuple[int, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 2:
            raise InvalidProblemError(f"tensor order must be >= 2, got {len(dims)}")
        if any(d < 1 for d in dims):
            raise InvalidProblemError(f"dimensions must be positive: {dims}")
        vals = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1)
        if vals.size != math.prod(dims):
            raise InvalidProblemError(
                f"{vals.size} values supplied for dims {dims} (need {math.prod(dims)})"
            )
        vals.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "DenseTensor":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(arr.shape, arr.reshape(-1, order="F"))

    @property
    def order(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def array(self) -> np.ndarray:
        return self.values.reshape(self.dims, order="F")

    def strides(self) -> tuple[int, ...]:
        """Element strides of the column-major linearization."""
        out, acc = [], 1
        for d in self.dims:
            out.append(acc)
            acc *= d
        return tuple(out)


@dataclass(frozen=True)
class FactorMatrix:
    rows: int
    cols: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        rows, cols = int(self.rows), int(self.cols)
        if rows < 1 or cols < 0:
            raise InvalidProblemError(f"bad factor shape {rows}x{cols}")
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.size != rows * cols:
            raise InvalidProblemError(
                f"{vals.size} values supplied for a {rows}x{cols} factor matrix"
            )
        vals = vals.reshape(rows, cols)
        vals.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "FactorMatrix":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(arr.shape[0], arr.shape[1], arr)


@dataclass(frozen=True)
class MttkrpProblem:
    """Inputs of one MTTKRP: ``B = X_(mode) * KRP(A_k, k != mode)``.

    ``factors`` has one slot per mode; the slot at ``mode`` must be ``None``.
    """

    tensor: DenseTensor
    factors: tuple[FactorMatrix | None, ...]
    mode: int
    rank: int

    def __post_init__(self):
        N = self.tensor.order
        factors = tuple(self.factors)
        object.__setattr__(self, "factors", factors)
        if not 0 <= self.mode < N:
            raise InvalidProblemError(f"mode {self.mode} out of range for order {N}")
        if self.rank < 0:
            raise InvalidProblemError(f"rank must be >= 0, got {self.rank}")
        if len(factors) != N:
            raise InvalidProblemError(f"expected {N} factor slots, got {len(factors)}")
        for k, f in enumerate(factors):
            if k == self.mode:
                if f is not None:
                    raise InvalidProblemError(f"factor slot {k} is the output mode; pass None")
                continue
            if f is None:
                raise InvalidProblemError(f"missing factor matrix for mode {k}")
            if f.rows != self.tensor.dims[k] or f.cols != self.rank:
                raise InvalidProblemError(
                    f"factor {k} is {f.rows}x{f.cols}, expected "
                    f"{self.tensor.dims[k]}x{self.rank}"
                )

    @classmethod
    def from_arrays(cls, tensor: np.ndarray, factors: Sequence[np.ndarray | None], mode: int):
        X = DenseTensor.from_array(tensor)
        mats = [None if (k == mode or f is None) else FactorMatrix.from_array(f)
                for k, f in enumerate(factors)]
        if len(mats) == X.order - 1:
            mats.insert(mode, None)
        ranks = {m.cols for m in mats if m is not None}
        if len(ranks) != 1:
            raise InvalidProblemError(f"factor matrices disagree on rank: {sorted(ranks)}")
        return cls(X, tuple(mats), mode, ranks.pop())

    @property
    def dims(self) -> tuple[int, ...]:
        return self.tensor.dims

    @property
    def order(self) -> int:
        return self.tensor.order

    def factor_arrays(self) -> list[np.ndarray | None]:
        return [None if f is None else f.values for f in self.factors]


def lex_indices(dims: Sequence[int]) -> Iterator[tuple[int, ...]]:
    """Multi-indices in lexicographic order, first index slowest (loop-nest order)."""
    return itertools.product(*(range(d) for d in dims))


def mttkrp_oracle(problem: MttkrpProblem) -> np.ndarray:
    """Reference MTTKRP by direct summation.

    Iterates multi-indices lexicographically with ``r`` innermost. Each product
    ``X(i) * A_k(i_k, r) * ...`` is formed left to right over ascending modes and
    then added into ``B(i_n, r)``; the sequential unblocked algorithm uses the
    identical order and therefore reproduces this result bit for bit.
    """
    dims, n, R = problem.dims, problem.mode, problem.rank
    X = problem.tensor.values
    strides = problem.tensor.strides()
    others = [k for k in range(len(dims)) if k != n]
    A = problem.factor_arrays()
    B = np.zeros((dims[n], R))
    for idx in lex_indices(dims):
        x = X[sum(i * s for i, s in zip(idx, strides))]
        row = idx[n]
        for r in range(R):
            prod = x
            for k in others:
                prod = prod * A[k][idx[k], r]
            B[row, r] = B[row, r] + prod
    return B


# --- synthetic problems -------------------------------------------------------

_SYNTH_RE = re.compile(r"^(?:synthetic:)?(?P<dims>[0-9^,x ]+):(?P<rank>\d+)(?:@(?P<seed>\d+))?$")


@dataclass(frozen=True)
class SyntheticSpec:
    dims: tuple[int, ...]
    rank: int
    seed: int = 42

    def __str__(self):
        return f"{','.join(map(str, self.dims))}:{self.rank}@{self.seed}"


def parse_dims(text: str) -> tuple[int, ...]:
    """Parse ``"4,4,4"``, ``"4x4x4"`` or ``"4^3"``."""
    text = text.strip()
    m = re.fullmatch(r"(\d+)\^(\d+)", text)
    if m:
        return (int(m.group(1)),) * int(m.group(2))
    parts = [p for p in re.split(r"[,x ]+", text) if p]
    if not parts or not all(p.isdigit() for p in parts):
        raise InvalidProblemError(f"cannot parse dimensions {text!r}")
    return tuple(int(p) for p in parts)


def parse_synthetic(text: str) -> SyntheticSpec:
    """Parse the ``d1,d2,...,dN:R[@seed]`` grammar (optionally ``synthetic:``-prefixed)."""
    m = _SYNTH_RE.match(text.strip())
    if not m:
        raise InvalidProblemError(f"bad synthetic spec {text!r}; expected d1,...,dN:R[@seed]")
    seed = int(m.group("seed")) if m.group("seed") is not None else 42
    return SyntheticSpec(parse_dims(m.group("dims")), int(m.group("rank")), seed)


def synthetic_problem(dims: Sequence[int], rank: int, mode: int, seed: int = 42) -> MttkrpProblem:
    """Seeded random problem: tensor values first (linearization order), then the
    factor matrices of every mode except ``mode`` in ascending order, row-major."""
    dims = tuple(int(d) for d in dims)
    rng = XorShift64Star(seed)
    X = DenseTensor(dims, rng.uniform(math.prod(dims)))
    factors = []
    for k, d in enumerate(dims):
        if k == mode:
            factors.append(None)
        else:
            factors.append(FactorMatrix(d, rank, rng.uniform(d * rank)))
    return MttkrpProblem(X, tuple(factors), mode, rank)


# --- text file format -----------------------------------------------------------

def write_problem(problem: MttkrpProblem, path: str | Path) -> None:
    """Header ``N I_1 ... I_N R n`` (1-based n), tensor values, then factors."""
    lines = [" ".join(map(str, (problem.order, *problem.dims, problem.rank, problem.mode + 1)))]
    lines.append(" ".join(repr(float(v)) for v in problem.tensor.values))
    for f in problem.factors:
        if f is not None:
            lines.append(" ".join(repr(float(v)) for v in f.values.reshape(-1)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_problem(path: str | Path) -> MttkrpProblem:
    tokens = Path(path).read_text().split()
    try:
        N = int(tokens[0])
        head = [int(t) for t in tokens[1 : N + 3]]
    except (IndexError, ValueError) as exc:
        raise InvalidProblemError(f"{path}: malformed header") from exc
    dims, R, n = tuple(head[:N]), head[N], head[N + 1] - 1
    body = np.array(tokens[N + 3 :], dtype=np.float64)
    I = math.prod(dims)
    need = I + sum(d * R for k, d in enumerate(dims) if k != n)
    if body.size != need:
        raise InvalidProblemError(f"{path}: expected {need} values after header, found {body.size}")
    X = DenseTensor(dims, body[:I])
    pos, factors = I, []
    for k, d in enumerate(dims):
        if k == n:
            factors.append(None)
            continue
        factors.append(FactorMatrix(d, R, body[pos : pos + d * R]))
        pos += d * R
    return MttkrpProblem(X, tuple(factors), n, R)


def load_problem(source: str, mode: int | None = None) -> MttkrpProblem:
    """Load from a file path or a ``synthetic:`` spec; ``mode`` is 0-based."""
    if source.startswith("synthetic:"):
        spec = parse_synthetic(source)
        return synthetic_problem(spec.dims, spec.rank, 0 if mode is None else mode, spec.seed)
    problem = read_problem(source)
    if mode is not None and mode != problem.mode:
        raise InvalidProblemError(
            f"{source} was written for mode {problem.mode + 1}, requested {mode + 1}"
        )
    return problem
