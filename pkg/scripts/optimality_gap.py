#!/usr/bin/env python3
"""Blocked sequential algorithm: measured traffic over the best lower bound for
N = 3, I_k = 256, R in {16, 64} and M = 2^10 .. 2^16.

Counts come from the memory machine (no tensor values are touched).
"""
import argparse
import csv
import sys

from mttkrp_comm.bounds import ProblemShape, lb_seq_memdep, lb_seq_trivial, optimality_ratio
from mttkrp_comm.memmodel import MemoryMachine
from mttkrp_comm.planner import choose_block_size
from mttkrp_comm.sequential import simulate_seq_blocked


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--side", type=int, default=256)
    ap.add_argument("--ranks", default="16,64")
    ap.add_argument("--log2-M", default="10..16", help="lo..hi")
    ap.add_argument("--out", default="optimality_gap.csv")
    args = ap.parse_args(argv)

    lo, hi = (int(t) for t in args.log2_M.split(".."))
    dims = (args.side,) * 3
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "dims", "R", "M", "b", "words", "thm1", "fact1", "ratio"])
        for R in (int(t) for t in args.ranks.split(",")):
            for e in range(lo, hi + 1):
                M = 2**e
                b = choose_block_size(3, M)
                words = simulate_seq_blocked(dims, R, 0, MemoryMachine(M), b).words
                shape = ProblemShape(dims, R, M=M)
                ratio = optimality_ratio(shape, words)
                w.writerow([3, "x".join(map(str, dims)), R, M, b, words,
                            repr(lb_seq_memdep(shape)), repr(lb_seq_trivial(shape)),
                            "undefined" if ratio is None else f"{ratio:.4f}"])
                print(f"R={R:<3} M=2^{e:<3} b={b:<3} words={words:<10} ratio={ratio:.3f}")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
