"""Block-size and processor-grid planning, the matrix-multiplication baseline
model, and the analytic strong-scaling sweep."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

from .bounds import ProblemShape, lb_par_memind_general, lb_par_memind_rect, lb_seq_memdep, lb_seq_trivial
from .errors import InfeasibleMachineError, PlanningError, ShapeError
from .parsim import ProcessorGrid, comm_words_formula
from .sequential import blocked_words_ceil

STATIONARY = "stationary"
GENERAL = "general"

# exhaustive grid enumeration up to this P; beyond it only near-optimal divisors
EXHAUSTIVE_LIMIT = 2**20


def choose_block_size(N: int, M: int) -> int:
    """Largest b with b**N + N*b <= M."""
    if M < N + 1:
        raise InfeasibleMachineError(f"M={M} cannot hold even a unit block for N={N} (need M >= {N + 1})")
    b = 1
    while (b + 1) ** N + N * (b + 1) <= M:
        b += 1
    return b


@lru_cache(maxsize=None)
def _divisors(P: int) -> tuple[int, ...]:
    small, large = [], []
    d = 1
    while d * d <= P:
        if P % d == 0:
            small.append(d)
            if d * d != P:
                large.append(P // d)
        d += 1
    return tuple(small + large[::-1])


def _is_prime_power(P: int) -> bool:
    if P < 2:
        return True
    p = next(d for d in range(2, P + 1) if P % d == 0)
    while P % p == 0:
        P //= p
    return P == 1


def _continuous_optimum(dims: Sequence[int], R: int, P: int, alg: str) -> tuple[float, ...]:
    N, I = len(dims), math.prod(dims)
    p0 = 1.0
    if alg == GENERAL:
        p0 = (N * R) ** (N / (2 * N - 1)) / (I / P) ** ((N - 1) / (2 * N - 1))
        p0 = min(max(p0, 1.0), float(R), float(P))
    return (p0, *(I_k / (I * p0 / P) ** (1 / N) for I_k in dims))


def _factorizations(dims: Sequence[int], R: int, P: int, alg: str) -> Iterable[tuple[int, ...]]:
    """Ordered factorizations (P0, P1, ..., PN) of P with P_k <= I_k, P0 <= R."""
    N = len(dims)
    caps = [1 if alg == STATIONARY else R, *dims]
    restrict = P > EXHAUSTIVE_LIMIT and not _is_prime_power(P)
    opt = _continuous_optimum(dims, R, P, alg) if restrict else None

    def rec(i: int, rem: int, acc: tuple[int, ...]):
        if i == N:
            if rem <= caps[N] and (not restrict or opt[N] / 8 <= rem <= opt[N] * 8 or rem == 1):
                yield acc + (rem,)
            return
        for d in _divisors(rem):
            if d > caps[i]:
                break
            if restrict and not (opt[i] / 8 <= d <= opt[i] * 8 or d == 1):
                continue
            yield from rec(i + 1, rem // d, acc + (d,))

    return rec(0, P, ())


def _grid(f: tuple[int, ...]) -> ProcessorGrid:
    return ProcessorGrid(f[1:], f[0])


def best_grids(dims: Sequence[int], R: int, mode: int, P: int) -> tuple[ProcessorGrid | None, ProcessorGrid]:
    """(stationary, general) grids minimizing the closed-form per-processor words.

    The stationary entry is ``None`` when no grid with P0 = 1 fits.
    """
    dims = tuple(dims)
    if P < 1:
        raise PlanningError(f"P must be >= 1, got {P}")
    best = {STATIONARY: None, GENERAL: None}
    for f in _factorizations(dims, R, P, GENERAL):
        key = (comm_words_formula(dims, R, mode, _grid(f)), f)
        if best[GENERAL] is None or key < best[GENERAL]:
            best[GENERAL] = key
        if f[0] == 1 and (best[STATIONARY] is None or key < best[STATIONARY]):
            best[STATIONARY] = key
    if best[GENERAL] is None:
        raise PlanningError(f"no grid for P={P} fits dims {dims} and R={R}")
    stat = None if best[STATIONARY] is None else _grid(best[STATIONARY][1])
    return stat, _grid(best[GENERAL][1])


def choose_grid(dims: Sequence[int], R: int, mode: int, P: int, alg: str = GENERAL) -> ProcessorGrid:
    """Grid minimizing the closed-form per-processor words; ties go to the
    lexicographically smallest (P0, P1, ..., PN)."""
    if alg not in (STATIONARY, GENERAL):
        raise ValueError(f"alg must be {STATIONARY!r} or {GENERAL!r}")
    if P > math.prod(dims) * R:
        raise PlanningError(f"P={P} exceeds I*R={math.prod(dims) * R}")
    stat, gen = best_grids(dims, R, mode, P)
    if alg == GENERAL:
        return gen
    if stat is None:
        raise PlanningError(f"no stationary grid for P={P} fits dims {tuple(dims)}")
    return stat


# --- matrix multiplication baseline ----------------------------------------------------

def _matricized(dims: Sequence[int], R: int) -> tuple[float, float, float]:
    if len(set(dims)) != 1:
        raise ShapeError(f"matmul baseline model needs a cubical tensor, got {tuple(dims)}")
    m = float(dims[0])
    return m, float(math.prod(dims)) / m, float(R)


def matmul_regime_words(dims: Sequence[int], R: int, P: int) -> float:
    """Asymptotic per-processor words of communication-optimal rectangular matmul
    of the (I^(1/N) x I^((N-1)/N)) matricized tensor with the (I^((N-1)/N) x R)
    Khatri-Rao product: with sorted dimensions d1 >= d2 >= d3,
    min(d2 d3, sqrt(d1 d2 d3^2 / P), (d1 d2 d3 / P)^(2/3)) for P > 1 (one, two
    and three large dimensions)."""
    d1, d2, d3 = sorted(_matricized(dims, R), reverse=True)
    if P <= 1:
        return 0.0
    return min(d2 * d3, math.sqrt(d1 * d2 * d3 * d3 / P), (d1 * d2 * d3 / P) ** (2.0 / 3.0))


def _smallest_prime_factor(P: int) -> int:
    return next(d for d in range(2, P + 1) if P % d == 0)


def matmul_carma_words(dims: Sequence[int], R: int, P: int) -> float:
    """Per-processor words of recursive CARMA on the matricized product.

    Each level splits the largest of (m, k, n) by the smallest prime factor f of
    the remaining processor count p. Splitting m or n replicates the other
    operand across the f subgroups; splitting k reduces the output across them.
    Either way each processor exchanges (f-1)/p of the shared matrix with its f-1
    partners and is charged for both the words it sends and those it receives.
    """
    m, k, n = _matricized(dims, R)
    words = 0.0
    p = P
    while p > 1:
        f = _smallest_prime_factor(p)
        big = max(m, k, n)
        if k == big:
            shared, k = m * n, k / f
        elif m == big:
            shared, m = k * n, m / f
        else:
            shared, n = m * k, n / f
        words += 2.0 * (f - 1) * shared / p
        p //= f
    return words


MM_MODELS = {"carma": matmul_carma_words, "regimes": matmul_regime_words}


def matmul_baseline_words(dims: Sequence[int], R: int, P: int, model: str = "regimes") -> float:
    """Matmul-based MTTKRP communication, excluding Khatri-Rao formation."""
    try:
        fn = MM_MODELS[model]
    except KeyError:
        raise ValueError(f"unknown matmul model {model!r}; choose from {sorted(MM_MODELS)}") from None
    return fn(dims, R, P)


def count_kinks(Ps: Sequence[int], words: Sequence[float], flat_slope: float = -0.1) -> int:
    """Number of switches between flat and falling stretches of a log-log curve.

    A segment is flat when its log-log slope exceeds ``flat_slope``; zero-valued
    points (P = 1) are skipped.
    """
    pts = [(math.log2(p), math.log2(w)) for p, w in zip(Ps, words) if p > 1 and w > 0]
    kinds = []
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        kinds.append((y1 - y0) / (x1 - x0) > flat_slope)
    return sum(a != b for a, b in zip(kinds, kinds[1:]))


# --- plans and sweeps ------------------------------------------------------------------

@dataclass
class PlanResult:
    dims: tuple[int, ...]
    R: int
    mode: int
    P: int | None = None
    M: int | None = None
    grid_stationary: ProcessorGrid | None = None
    grid_general: ProcessorGrid | None = None
    b: int | None = None
    alg2_words: int | None = None
    alg3_words: int | None = None
    alg4_words: int | None = None
    mm_words: float | None = None
    bounds: dict[str, float] = field(default_factory=dict)
    ratios: dict[str, float | None] = field(default_factory=dict)


def plan(dims: Sequence[int], R: int, mode: int = 0, P: int | None = None, M: int | None = None,
         mm_model: str = "carma") -> PlanResult:
    dims = tuple(dims)
    res = PlanResult(dims, R, mode, P, M)
    if M is not None:
        res.b = choose_block_size(len(dims), M)
        res.alg2_words = blocked_words_ceil(dims, R, res.b)
        shape = ProblemShape(dims, R, M=M)
        res.bounds["seq_mem_dependent"] = lb_seq_memdep(shape)
        res.bounds["seq_trivial"] = lb_seq_trivial(shape)
        lb = max(res.bounds["seq_mem_dependent"], res.bounds["seq_trivial"])
        res.ratios["alg2"] = res.alg2_words / lb if lb > 0 else None
    if P is not None:
        res.grid_stationary, res.grid_general = best_grids(dims, R, mode, P)
        if res.grid_stationary is not None:
            res.alg3_words = comm_words_formula(dims, R, mode, res.grid_stationary)
        res.alg4_words = comm_words_formula(dims, R, mode, res.grid_general)
        if len(set(dims)) == 1:
            res.mm_words = matmul_baseline_words(dims, R, P, mm_model)
        shape = ProblemShape(dims, R, P=P)
        res.bounds["par_mem_independent_general"] = lb_par_memind_general(shape)
        res.bounds["par_mem_independent_rect"] = lb_par_memind_rect(shape)
        lb = max(res.bounds["par_mem_independent_general"], res.bounds["par_mem_independent_rect"])
        for name in ("alg3", "alg4"):
            w = getattr(res, f"{name}_words")
            res.ratios[name] = w / lb if lb > 0 and w else None
    return res


@dataclass(frozen=True)
class SweepSpec:
    dims: tuple[int, ...]
    R: int
    Ps: tuple[int, ...]
    mode: int = 0
    mm_model: str = "carma"
    out: str | None = None

    def __post_init__(self):
        if any(P < 1 for P in self.Ps):
            raise PlanningError("processor counts must be >= 1")


def fig3_spec(out: str | None = None, mm_model: str = "carma") -> SweepSpec:
    """3-way cubical tensor with I = 2**45 and R = 2**15, P = 2**0 .. 2**30."""
    return SweepSpec((2**15,) * 3, 2**15, tuple(2**e for e in range(31)), 0, mm_model, out)


SWEEP_COLUMNS = ("P", "alg3_words", "alg4_words", "mm_words", "lb_memind", "lb_rect", "grid3", "grid4")


@dataclass(frozen=True)
class SweepRow:
    P: int
    alg3_words: int
    alg4_words: int
    mm_words: float
    lb_memind: float
    lb_rect: float
    grid3: str
    grid4: str


def scaling_sweep(spec: SweepSpec) -> list[SweepRow]:
    rows = []
    for P in spec.Ps:
        g3, g4 = best_grids(spec.dims, spec.R, spec.mode, P)
        if g3 is None:
            raise PlanningError(f"no stationary grid for P={P} fits dims {spec.dims}")
        shape = ProblemShape(spec.dims, spec.R, P=P)
        mm = matmul_baseline_words(spec.dims, spec.R, P, spec.mm_model) if len(set(spec.dims)) == 1 else float("nan")
        rows.append(
            SweepRow(
                P,
                comm_words_formula(spec.dims, spec.R, spec.mode, g3),
                comm_words_formula(spec.dims, spec.R, spec.mode, g4),
                mm,
                lb_par_memind_general(shape),
                lb_par_memind_rect(shape),
                str(g3),
                str(g4),
            )
        )
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        d = asdict(r)
        w.writerow([repr(v) if isinstance(v, float) else v for v in (d[c] for c in SWEEP_COLUMNS)])
    return buf.getvalue()
