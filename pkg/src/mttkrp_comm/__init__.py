"""Communication-optimal dense MTTKRP: sequential and parallel algorithms,
an auditing memory machine, a distributed simulator and lower bounds."""
from .bounds import (
    BoundsReport,
    CombinedBound,
    HblResult,
    ProblemShape,
    applicable_bound,
    bounds_report,
    hbl_check,
    lb_par_combined,
    lb_par_memdep,
    lb_par_memind_general,
    lb_par_memind_rect,
    lb_seq_memdep,
    lb_seq_trivial,
    lemma_lp_solution,
    lemma_max_product,
    lemma_min_sum,
    lp_numeric,
    optimality_ratio,
)
from .errors import *  # noqa: F401,F403
from .memmodel import CostLedger, MemoryMachine
from .parsim import (
    CommLedger,
    DataDistribution,
    ProcessorGrid,
    bucket_allgather,
    bucket_reduce_scatter,
    comm_words_formula,
    par_general_mttkrp,
    par_stationary_mttkrp,
)
from .planner import (
    PlanResult,
    SweepSpec,
    choose_block_size,
    choose_grid,
    fig3_spec,
    matmul_baseline_words,
    plan,
    scaling_sweep,
)
from .sequential import (
    blocked_words_ceil,
    blocked_words_exact,
    mttkrp_seq_blocked,
    mttkrp_seq_unblocked,
    simulate_seq_blocked,
    unblocked_words,
)
from .tensor import (
    DenseTensor,
    FactorMatrix,
    MttkrpProblem,
    XorShift64Star,
    load_problem,
    mttkrp_oracle,
    parse_synthetic,
    synthetic_problem,
)

__version__ = "0.1.0"
