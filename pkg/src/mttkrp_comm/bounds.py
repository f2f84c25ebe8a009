"""Communication lower bounds for MTTKRP and the lemmas behind them.

Formulas are evaluated in 50-digit arithmetic (mpmath) and returned as floats,
so the extreme shapes of the strong-scaling model (I up to 2**45 and beyond)
do not lose the small differences between large terms. Every bound has a
``clamp`` switch: reported values are clamped at zero, raw values may be
negative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import mpmath
import numpy as np
from scipy.optimize import linprog

from .errors import DomainError, ShapeError

_DPS = 50


@dataclass(frozen=True)
class ProblemShape:
    dims: tuple[int, ...]
    R: int
    M: int | None = None
    P: int | None = None
    gamma: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.dims) < 2 or any(d < 1 for d in self.dims):
            raise ShapeError(f"need N >= 2 positive dimensions, got {self.dims}")
        if self.R < 1:
            raise ShapeError(f"rank must be positive, got {self.R}")
        if self.M is not None and self.M < 0:
            raise ShapeError(f"M must be non-negative, got {self.M}")
        if self.P is not None and self.P < 1:
            raise ShapeError(f"P must be >= 1, got {self.P}")
        if self.gamma < 1 or self.delta < 1:
            raise ShapeError("balance constants gamma, delta must be >= 1")

    @property
    def N(self) -> int:
        return len(self.dims)

    @property
    def I(self) -> int:
        return math.prod(self.dims)

    @property
    def is_cubical(self) -> bool:
        return len(set(self.dims)) == 1

    def params(self) -> dict:
        return {
            "N": self.N, "dims": "x".join(map(str, self.dims)), "R": self.R,
            "M": "" if self.M is None else self.M, "P": "" if self.P is None else self.P,
            "gamma": self.gamma, "delta": self.delta,
        }


def _mp(x) -> mpmath.mpf:
    return mpmath.mpf(x)


def _out(v, clamp: bool) -> float:
    v = float(v)
    return max(0.0, v) if clamp else v


def _need(value, name):
    if value is None:
        raise ShapeError(f"bound needs {name}")
    return value


# --- sequential ------------------------------------------------------------------

def lb_seq_memdep(shape: ProblemShape, clamp: bool = True) -> float:
    """Memory-dependent sequential bound NIR / (3^(2-1/N) M^(1-1/N)) - M."""
    M = _need(shape.M, "M")
    if M < 1:
        raise DomainError("memory-dependent bound needs M >= 1")
    with mpmath.workdps(_DPS):
        N = shape.N
        e = 2 - _mp(1) / N
        v = _mp(N) * shape.I * shape.R / (_mp(3) ** e * _mp(M) ** (e - 1)) - M
        return _out(v, clamp)


def lb_seq_memdep_floored(shape: ProblemShape) -> int:
    """Segment-count form M * floor(NIR / (3M)^(2-1/N)); can sit below the smooth form."""
    M = _need(shape.M, "M")
    with mpmath.workdps(_DPS):
        e = 2 - _mp(1) / shape.N
        return M * int(mpmath.floor(_mp(shape.N) * shape.I * shape.R / (3 * _mp(M)) ** e))


def lb_seq_trivial(shape: ProblemShape, clamp: bool = True) -> float:
    """All inputs read, output written, less 2M words that may start/end resident."""
    M = shape.M or 0
    v = shape.I + sum(shape.dims) * shape.R - 2 * M
    return _out(v, clamp)


# --- parallel ----------------------------------------------------------------------

def lb_par_memdep(shape: ProblemShape, clamp: bool = True) -> float:
    """Sequential bound applied to the IR/P iterations of the busiest processor."""
    M, P = _need(shape.M, "M"), _need(shape.P, "P")
    if M < 1:
        raise DomainError("memory-dependent bound needs M >= 1")
    with mpmath.workdps(_DPS):
        e = 2 - _mp(1) / shape.N
        v = _mp(shape.N) * shape.I * shape.R / (_mp(3) ** e * P * _mp(M) ** (e - 1)) - M
        return _out(v, clamp)


def lb_par_memind_general(shape: ProblemShape, clamp: bool = True) -> float:
    """2 (NIR/P)^(N/(2N-1)) - gamma I/P - delta sum_k I_k R / P."""
    P = _need(shape.P, "P")
    with mpmath.workdps(_DPS):
        N, I, R = shape.N, shape.I, shape.R
        v = (
            2 * (_mp(N) * I * R / P) ** (_mp(N) / (2 * N - 1))
            - _mp(shape.gamma) * I / P
            - _mp(shape.delta) * sum(shape.dims) * R / P
        )
        return _out(v, clamp)


def general_access_constant(N: int) -> float:
    """Exact min-sum constant (2 - 1/N) / (1 - 1/N)^((N-1)/(2N-1)).

    The access count of a processor doing IR/P iterations is at least this
    times (NIR/P)^(N/(2N-1)). It is strictly below 2 for every N >= 2 and tends
    to 2 as N grows.
    """
    with mpmath.workdps(_DPS):
        N = _mp(N)
        return float((2 - 1 / N) / (1 - 1 / N) ** ((N - 1) / (2 * N - 1)))


def lb_par_memind_general_exact(shape: ProblemShape, clamp: bool = True) -> float:
    """:func:`lb_par_memind_general` with the leading 2 replaced by the exact
    min-sum constant; never larger than the rounded form."""
    P = _need(shape.P, "P")
    with mpmath.workdps(_DPS):
        N, I, R = shape.N, shape.I, shape.R
        c = (2 - _mp(1) / N) / (1 - _mp(1) / N) ** (_mp(N - 1) / (2 * N - 1))
        v = (
            c * (_mp(N) * I * R / P) ** (_mp(N) / (2 * N - 1))
            - _mp(shape.gamma) * I / P
            - _mp(shape.delta) * sum(shape.dims) * R / P
        )
        return _out(v, clamp)


def lb_par_memind_rect(shape: ProblemShape, clamp: bool = True) -> float:
    """min(sqrt(2/(3 gamma)) N R (I/P)^(1/N) - delta sum_j I_j R/P, gamma I/(2P))."""
    P = _need(shape.P, "P")
    with mpmath.workdps(_DPS):
        N, I, R = shape.N, shape.I, shape.R
        g, d = _mp(shape.gamma), _mp(shape.delta)
        first = mpmath.sqrt(2 / (3 * g)) * N * R * (_mp(I) / P) ** (_mp(1) / N) - d * sum(shape.dims) * R / P
        second = g * I / (2 * _mp(P))
        return _out(min(first, second), clamp)


@dataclass(frozen=True)
class CombinedBound:
    value: float
    regime: str  # "general" (thm-2 form) or "rect" (thm-3 form)
    general_raw: float
    rect_raw: float


def lb_par_combined(shape: ProblemShape) -> CombinedBound:
    """Regime selector for cubical tensors: the general bound when
    NR >= (I/P)^(1-1/N), else the rectangular bound. Both raw values are kept."""
    P = _need(shape.P, "P")
    if not shape.is_cubical:
        raise ShapeError(f"combined bound needs a cubical tensor, got dims {shape.dims}")
    g = lb_par_memind_general(shape, clamp=False)
    r = lb_par_memind_rect(shape, clamp=False)
    with mpmath.workdps(_DPS):
        N = shape.N
        general = _mp(N) * shape.R >= (_mp(shape.I) / P) ** (1 - _mp(1) / N)
    value = g if general else r
    return CombinedBound(max(0.0, value), "general" if general else "rect", g, r)


# --- report ------------------------------------------------------------------------

@dataclass
class BoundsReport:
    shape: ProblemShape
    seq_mem_dependent: float | None = None
    seq_trivial: float | None = None
    par_mem_dependent: float | None = None
    par_mem_independent_general: float | None = None
    par_mem_independent_rect: float | None = None
    par_combined: float | None = None
    raw: dict = field(default_factory=dict)

    KINDS = (
        "seq_mem_dependent", "seq_trivial", "par_mem_dependent",
        "par_mem_independent_general", "par_mem_independent_rect", "par_combined",
    )

    def rows(self) -> list[tuple[str, float]]:
        return [(k, getattr(self, k)) for k in self.KINDS if getattr(self, k) is not None]

    def to_csv(self) -> str:
        params = self.shape.params()
        head = "kind,value,raw," + ",".join(params)
        lines = [head]
        for kind, value in self.rows():
            lines.append(",".join(map(str, (kind, repr(value), repr(self.raw[kind]), *params.values()))))
        return "\n".join(lines) + "\n"


def bounds_report(shape: ProblemShape) -> BoundsReport:
    rep = BoundsReport(shape)

    def put(kind, fn):
        raw = fn(shape, clamp=False)
        rep.raw[kind] = raw
        setattr(rep, kind, max(0.0, raw))

    if shape.M is not None and shape.M >= 1:
        put("seq_mem_dependent", lb_seq_memdep)
    put("seq_trivial", lb_seq_trivial)
    if shape.P is not None:
        if shape.M is not None and shape.M >= 1:
            put("par_mem_dependent", lb_par_memdep)
        put("par_mem_independent_general", lb_par_memind_general)
        put("par_mem_independent_rect", lb_par_memind_rect)
        if shape.is_cubical:
            c = lb_par_combined(shape)
            rep.raw["par_combined"] = c.general_raw if c.regime == "general" else c.rect_raw
            rep.par_combined = c.value
    return rep


# --- lemmas --------------------------------------------------------------------------

def delta_matrix(N: int) -> np.ndarray:
    """Coordinate-by-array incidence: rows (i_1..i_N, r), columns (A_1..A_N, X)."""
    D = np.zeros((N + 1, N + 1))
    D[:N, :N] = np.eye(N)
    D[:N, N] = 1.0
    D[N, :N] = 1.0
    return D


def lemma_lp_solution(N: int) -> tuple[np.ndarray, float]:
    """Analytic minimizer of 1's subject to Delta s >= 1, s >= 0."""
    if N < 2:
        raise DomainError("LP lemma needs N >= 2")
    s = np.full(N + 1, 1.0 / N)
    s[N] = 1.0 - 1.0 / N
    return s, 2.0 - 1.0 / N


def lp_numeric(N: int) -> tuple[np.ndarray, float]:
    """Same LP solved by the HiGHS dual simplex."""
    D = delta_matrix(N)
    res = linprog(
        np.ones(N + 1), A_ub=-D, b_ub=-np.ones(N + 1),
        bounds=[(0, None)] * (N + 1), method="highs-ds",
    )
    if not res.success:
        raise RuntimeError(f"LP solve failed: {res.message}")
    return res.x, float(res.fun)


def segment_constant(N: int) -> float:
    """prod_j (s*_j / sum s*)^(s*_j); at most 1/N."""
    s, total = lemma_lp_solution(N)
    return float(np.prod((s / total) ** s))


def _check_c(c):
    if c <= 0:
        raise DomainError(f"constant c must be positive, got {c}")


def lemma_max_product(s: Sequence[float], c: float) -> float:
    """max prod x_i^s_i subject to sum x_i <= c, x >= 0 (requires s > 0)."""
    _check_c(c)
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise DomainError("max-product lemma needs every exponent > 0")
    total = s.sum()
    return float(c**total * np.prod((s / total) ** s))


def lemma_min_sum(s: Sequence[float], c: float) -> float:
    """min sum x_i subject to prod x_i^s_i >= c, x >= 0 (s >= 0, sum s > 0)."""
    _check_c(c)
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or s.sum() <= 0:
        raise DomainError("min-sum lemma needs s >= 0 with a positive sum")
    total = s.sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        pw = np.where(s > 0, s**s, 1.0)
    return float((c / np.prod(pw)) ** (1.0 / total) * total)


@dataclass(frozen=True)
class HblResult:
    lhs: int
    rhs: float
    projection_sizes: tuple[int, ...]
    holds: bool


def hbl_feasible(s: Sequence[float], tol: float = 1e-12) -> bool:
    s = np.asarray(s, dtype=float)
    N = len(s) - 1
    return bool(
        np.all(s >= -tol) and np.all(s <= 1 + tol) and np.all(delta_matrix(N) @ s >= 1 - tol)
    )


def projection_sizes(points: Iterable[Sequence[int]]) -> tuple[int, tuple[int, ...]]:
    """|F| and the sizes of its projections onto A_1..A_N ((i_k, r)) and X ((i_1..i_N))."""
    F = {tuple(p) for p in points}
    if not F:
        return 0, ()
    N = len(next(iter(F))) - 1
    sizes = [len({(p[k], p[N]) for p in F}) for k in range(N)]
    sizes.append(len({p[:N] for p in F}))
    return len(F), tuple(sizes)


def hbl_check(points: Iterable[Sequence[int]], s: Sequence[float]) -> HblResult:
    """Evaluate |F| <= prod_j |phi_j(F)|^s_j for an iteration subset F of Z^(N+1)."""
    s = np.asarray(s, dtype=float)
    if not hbl_feasible(s):
        raise DomainError(f"exponents {s.tolist()} are outside the feasible polytope")
    lhs, sizes = projection_sizes(points)
    if lhs and len(sizes) != len(s):
        raise DomainError(f"points live in Z^{len(sizes)} but {len(s)} exponents given")
    rhs = float(np.prod(np.asarray(sizes, dtype=float) ** s)) if lhs else 0.0
    return HblResult(lhs, rhs, sizes, lhs <= rhs * (1 + 1e-12))


# --- optimality gap ------------------------------------------------------------------

SEQ = "seq"
PAR = "par"


def applicable_bound(shape: ProblemShape, kind: str) -> float:
    """Largest clamped bound of the requested family."""
    if kind == SEQ:
        vals = [lb_seq_trivial(shape)]
        if shape.M:
            vals.append(lb_seq_memdep(shape))
    elif kind == PAR:
        vals = [lb_par_memind_general(shape), lb_par_memind_rect(shape)]
        if shape.M:
            vals.append(lb_par_memdep(shape))
    else:
        raise ValueError(f"unknown bound family {kind!r}")
    return max(vals)


def optimality_ratio(shape: ProblemShape, measured: float, kind: str = SEQ) -> float | None:
    """measured / max(applicable bounds); ``None`` when every bound clamps to zero."""
    if measured <= 0:
        raise DomainError(f"measured communication must be positive, got {measured}")
    bound = applicable_bound(shape, kind)
    if bound <= 0:
        return None
    return measured / bound
